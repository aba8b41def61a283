"""Experiment orchestration: correlation scans and threshold sweeps driven by a config."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .budget import BudgetParams, cw_power, photons_in_window
from .config import ConfigError, ExperimentConfig
from .core import derive_seed
from .correlator import (CorrelationTrace, InsufficientSignal, accumulate, correlation_scan,
                         estimate_g1, estimate_g2, estimate_g2_uncorrected, few_cycle_envelope,
                         gaussian_smooth, value_at, write_trace_csv)
from .eos import DetectorParams, equivalent_time_trace, read_eosc
from .mb_laser import (IntegratorBlowUp, ModalTrajectory, g2_modal_raw_tau, intensity,
                       map_gain_to_current, reconstruct_field, simulate)
from .spectra import (correlation_spectrum, dominant_nonzero_peak, peak_frequency,
                      write_spectrum_csv)

G2_BATCHES = 10


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg: ExperimentConfig, out_dir) -> Path:
    d = Path(out_dir if out_dir is not None else cfg.get("output", "directory"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def simulate_from_config(cfg: ExperimentConfig, gain_ratio: Optional[float] = None,
                         seed: Optional[int] = None, stream: str = "mb") -> ModalTrajectory:
    s = cfg.values["source"]
    return simulate(cfg.mb_params(gain_ratio), s["duration_ns"] * 1e-9, s["transient_ns"] * 1e-9,
                    s["record_dt_ps"] * 1e-12,
                    derive_seed(cfg.seed if seed is None else seed, stream), s["dt_ps"] * 1e-12)


# correlation experiment -------------------------------------------------------

@dataclass
class CorrelationResult:
    trace: CorrelationTrace
    g1_spectrum: object = None
    g2_spectrum: object = None
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def trace_from_eosc(paths: Sequence, det: DetectorParams, n_cycles: float = 2.0,
                    eps: float = 0.01, nu0: float = 2.3e12) -> CorrelationTrace:
    """Correlation trace from pre-recorded EOSC files, one delay per file."""
    rows = []
    for p in paths:
        st = read_eosc(p, det)
        stats = accumulate(st)
        rows.append((st.tau, estimate_g1(stats, eps), estimate_g2(stats, eps),
                     estimate_g2_uncorrected(stats, eps), st.n_pulses))
    rows.sort(key=lambda r: r[0])
    taus = np.array([r[0] for r in rows])
    if np.unique(taus).size != taus.size:
        raise ValueError("two EOSC files share the same delay")
    col = lambda i, a: np.array([getattr(r[i], a) for r in rows])
    tr = CorrelationTrace(taus, col(1, "value"), col(1, "stderr"), col(2, "value"),
                          col(2, "stderr"), np.full(taus.size, np.nan), np.full(taus.size, np.nan),
                          np.array([r[4] for r in rows]), det.nef, nu0,
                          col(3, "value"), col(3, "stderr"), meta={"n_cycles": n_cycles})
    try:
        tr.g2_env, tr.g2_env_err = few_cycle_envelope(tr, nu0, n_cycles)
    except ValueError:
        pass
    return tr


def _spectra(tr: CorrelationTrace):
    try:
        return (correlation_spectrum(tr.taus, tr.g1),
                correlation_spectrum(tr.taus, tr.g2_raw, demean=True))
    except ValueError:
        return None, None


def run_correlation_experiment(cfg: ExperimentConfig, out_dir=None, eosc_files=None,
                               write: bool = True) -> CorrelationResult:
    """Delay scan, few-cycle envelope and spectra for the configured source.

    ``eosc_files`` replaces the simulated source by recorded pulse streams.
    """
    det = cfg.detector()
    c = cfg.values["correlator"]
    n_cycles, eps = c["envelope_cycles"], c["variance_floor"]
    nu0 = cfg.values["source"]["nu0_thz"] * 1e12
    if eosc_files:
        tr = trace_from_eosc(eosc_files, det, n_cycles, eps, nu0)
        origin = "eosc:" + ",".join(Path(p).name for p in eosc_files)
    else:
        kind = cfg.source_kind
        if kind is None:
            raise ConfigError("line 0: correlation experiment needs a [source] section with kind")
        taus = cfg.taus()
        if kind == "mb":
            traj = simulate_from_config(cfg)
            field_trace = reconstruct_field(traj, cfg.values["source"]["field_scale_v_per_m"])
            source = equivalent_time_trace(field_trace, det.f_rep)
        else:
            source = cfg.source_spec()
        tr = correlation_scan(source, taus, c["n_pulses"], det, cfg.seed, c["n_offset"],
                              n_cycles, eps, cfg.threads)
        origin = f"source:{kind}"
    g1s, g2s = _spectra(tr)
    summary = {
        "origin": origin,
        "seed": cfg.seed,
        "n_tau": int(tr.taus.size),
        "g2_env_tau0": value_at(tr.taus, tr.g2_env),
        "g2_env_tau0_err": value_at(tr.taus, tr.g2_env_err),
        "g2_raw_tau0": value_at(tr.taus, tr.g2_raw),
        "g1_peak_THz": None if g1s is None else peak_frequency(g1s) / 1e12,
        "g2_peak_THz": None if g2s is None else dominant_nonzero_peak(g2s) / 1e12,
    }
    res = CorrelationResult(tr, g1s, g2s, summary)
    if write:
        d = _out_dir(cfg, out_dir)
        fmts = cfg.get("output", "formats")
        head = [f"thzcorr correlation {origin} seed={cfg.seed}"]
        if "csv" in fmts:
            write_trace_csv(d / "correlation.csv", tr, head)
            res.files.append(d / "correlation.csv")
            for name, sp in (("spectrum_g1.csv", g1s), ("spectrum_g2.csv", g2s)):
                if sp is not None:
                    write_spectrum_csv(d / name, sp, head)
                    res.files.append(d / name)
        if "json" in fmts:
            write_json(d / "summary.json", summary)
            res.files.append(d / "summary.json")
        (d / "effective_config.ini").write_text(cfg.echo(), encoding="utf-8")
        res.files.append(d / "effective_config.ini")
    return res


# threshold sweep ---------------------------------------------------------------

SWEEP_COLUMNS = ("gain", "gain_ratio", "current_mA", "total_power", "output_power_uW",
                 "g2_modal", "g2_modal_err", "second_mode_fraction", "g2_pipeline",
                 "g2_pipeline_err", "g2_modal_windowed", "status")


@dataclass
class SweepRow:
    gain: float
    gain_ratio: float
    current_mA: float
    total_power: float = math.nan
    output_power_uW: float = math.nan
    g2_modal: float = math.nan
    g2_modal_err: float = math.nan
    second_mode_fraction: float = math.nan
    g2_pipeline: float = math.nan
    g2_pipeline_err: float = math.nan
    g2_modal_windowed: float = math.nan
    status: str = "ok"
    mode_powers: Optional[list] = None


@dataclass
class SweepReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def power_ratio(self, lo: float = -math.inf, hi: float = math.inf) -> float:
        p = [r.total_power for r in self.rows
             if lo <= r.gain_ratio <= hi and math.isfinite(r.total_power) and r.total_power > 0]
        return max(p) / min(p) if p else math.nan

    def to_dicts(self) -> list:
        return [{k: getattr(r, k) for k in SWEEP_COLUMNS} | {"mode_powers": r.mode_powers}
                for r in self.rows]


def batch_g2(traj: ModalTrajectory, n_batches: int = G2_BATCHES):
    """Modal g2(0) and its standard error from contiguous time batches."""
    inten = intensity(traj)
    m1 = inten.mean()
    if not m1 > 0:
        raise ValueError("no field: all modes empty")
    g2 = float(np.mean(inten**2) / m1**2)
    parts = np.array_split(inten, n_batches)
    vals = np.array([np.mean(b**2) / np.mean(b) ** 2 for b in parts])
    return g2, float(vals.std(ddof=1) / math.sqrt(n_batches))


def output_power_uW(total_power: float, field_scale: float, bp: BudgetParams = BudgetParams()) -> float:
    """Detected-field power estimate: E = field_scale * sqrt(P) through the photon budget."""
    e = field_scale * math.sqrt(max(total_power, 0.0))
    return cw_power(photons_in_window(e, bp), bp.nu, bp.delta_t) * 1e6


def _pipeline_point(cfg: ExperimentConfig, traj: ModalTrajectory, k: int):
    sw = cfg.values["sweep"]
    c = cfg.values["correlator"]
    det = cfg.detector()
    taus = cfg.taus("pipeline_tau_max_fs", "pipeline_tau_step_fs", "sweep")
    fs = cfg.values["source"]["field_scale_v_per_m"]
    src = equivalent_time_trace(reconstruct_field(traj, fs), det.f_rep)
    tr = correlation_scan(src, taus, sw["pipeline_n_pulses"], det,
                          derive_seed(cfg.seed, f"sweep/{k}/pipeline"), 0,
                          c["envelope_cycles"], c["variance_floor"])
    g2p, g2pe = value_at(tr.taus, tr.g2_env), value_at(tr.taus, tr.g2_env_err)
    # same delays and window as the pipeline, so edge effects of the window cancel
    mt = g2_modal_raw_tau(traj, tr.taus, det.probe_sigma)
    sm, _ = gaussian_smooth(tr.taus, mt, np.zeros_like(mt), c["envelope_cycles"] / traj.params.nu0)
    return g2p, g2pe, value_at(taus, sm)


def _sweep_points(cfg: ExperimentConfig):
    sw = cfg.values["sweep"]
    g_th = cfg.mb_params(0.0).g_threshold
    i_th = sw["threshold_current_ma"]
    if cfg.has("sweep", "currents_ma"):
        ratios = [i / i_th for i in sw["currents_ma"]]
    else:
        ratios = list(sw["gain_ratios"])
    ratios = sorted(ratios)
    return [(r, r * g_th, map_gain_to_current(r * g_th, (i_th, g_th))) for r in ratios]


def run_threshold_sweep(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> SweepReport:
    """Simulate every operating point; failures are recorded per row and do not stop the sweep."""
    sw = cfg.values["sweep"]
    fs = cfg.values["source"]["field_scale_v_per_m"]
    points = _sweep_points(cfg)
    base = cfg.mb_params(0.0)

    def one(k):
        ratio, gain, cur = points[k]
        row = SweepRow(gain, ratio, cur)
        try:
            s = cfg.values["source"]
            traj = simulate(base.at(ratio), sw["duration_ns"] * 1e-9, sw["transient_ns"] * 1e-9,
                            s["record_dt_ps"] * 1e-12, derive_seed(cfg.seed, f"sweep/{k}"),
                            s["dt_ps"] * 1e-12)
            pw = traj.mode_powers()
            row.mode_powers = [float(v) for v in pw]
            row.total_power = float(pw.sum())
            row.output_power_uW = output_power_uW(row.total_power, fs)
            row.g2_modal, row.g2_modal_err = batch_g2(traj)
            srt = np.sort(pw)[::-1]
            row.second_mode_fraction = float(srt[1] / row.total_power) if srt.size > 1 else 0.0
        except (IntegratorBlowUp, ValueError, FloatingPointError) as exc:
            row.status = f"failed: {exc}"
            return row
        if sw["pipeline"]:
            try:
                row.g2_pipeline, row.g2_pipeline_err, row.g2_modal_windowed = _pipeline_point(cfg, traj, k)
            except InsufficientSignal as exc:
                row.status = f"pipeline skipped: {exc}"
            except (ValueError, ArithmeticError) as exc:
                row.status = f"pipeline failed: {exc}"
        else:
            row.status = "ok (pipeline skipped)"
        return row

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            rows = list(ex.map(one, range(len(points))))
    else:
        rows = [one(k) for k in range(len(points))]
    rep = SweepReport(rows, meta={"seed": cfg.seed, "g_threshold": base.g_threshold,
                                  "field_scale_v_per_m": fs})
    if write:
        d = _out_dir(cfg, out_dir)
        fmts = cfg.get("output", "formats")
        if "csv" in fmts:
            write_sweep_csv(d / "sweep.csv", rep)
        if "json" in fmts:
            write_json(d / "sweep.json", {"meta": rep.meta, "rows": rep.to_dicts()})
        (d / "effective_config.ini").write_text(cfg.echo(), encoding="utf-8")
    return rep


def write_sweep_csv(path, rep: SweepReport) -> None:
    lines = [f"# thzcorr threshold sweep seed={rep.meta.get('seed')} "
             f"G_th={rep.meta.get('g_threshold', math.nan):.12g}",
             ",".join(SWEEP_COLUMNS)]
    for r in rep.rows:
        vals = []
        for k in SWEEP_COLUMNS:
            v = getattr(r, k)
            if isinstance(v, str):
                vals.append('"' + v.replace('"', "'") + '"')
            else:
                vals.append("nan" if not math.isfinite(v) else f"{v:.12g}")
        lines.append(",".join(vals))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
