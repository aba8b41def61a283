"""Streaming lock-in estimation of g1(tau) and g2(tau) from two-probe pulse streams.

Moments are accumulated separately for chopper-ON and chopper-OFF pulses
and per modulation period ("block"). OFF moments measure pure detector
noise and are used to remove it from the ON moments. Block partials give
delete-one-block jackknife error bars and make statistics mergeable.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import FWHM_TO_SIGMA, FieldTrace
from .eos import DetectorParams, PulseSampleStream, pair_with_offset, sample_pulse_stream
from .sources import SourceSpec, make_source

MOMENTS = ("n", "x", "y", "xy", "xx", "yy", "xxyy", "xxxx", "yyyy")
_M = {name: k for k, name in enumerate(MOMENTS)}
_ON, _OFF = 0, 1

# rows of blocks processed at once by the contiguous accumulator
_BLOCK_BATCH = 1 << 21


class InsufficientSignal(ValueError):
    """Noise-corrected variance at or below the variance floor."""


@dataclass
class SufficientStats:
    """Moment sums per (block, chopper class).

    ``partial[b, c, k]`` holds moment ``MOMENTS[k]`` of class ``c`` (0 = ON,
    1 = OFF) for block ``blocks[b]``; ``blocks`` is sorted and unique.
    """

    blocks: np.ndarray
    partial: np.ndarray
    params: DetectorParams
    tau: float = 0.0

    @classmethod
    def empty(cls, params: DetectorParams, tau: float = 0.0) -> "SufficientStats":
        return cls(np.zeros(0, np.int64), np.zeros((0, 2, len(MOMENTS))), params, tau)

    def totals(self) -> np.ndarray:
        """(2, n_moments) sums, added across blocks in extended precision."""
        return self.partial.astype(np.longdouble).sum(axis=0).astype(np.float64)

    def count(self, cls: int) -> int:
        return int(round(self.totals()[cls, 0]))

    @property
    def n_pulses(self) -> int:
        return int(round(self.partial[:, :, 0].sum()))

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        if (self.params.mod_period_pulses, self.params.duty_on_pulses) != (
                other.params.mod_period_pulses, other.params.duty_on_pulses):
            raise ValueError("cannot merge statistics with different modulation")
        ids = np.concatenate([self.blocks, other.blocks])
        parts = np.concatenate([self.partial, other.partial])
        ub, inv = np.unique(ids, return_inverse=True)
        out = np.zeros((ub.size, 2, len(MOMENTS)))
        np.add.at(out, inv, parts)
        return SufficientStats(ub, out, self.params, self.tau)


def _moment_rows(x: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
    xx = x * x
    yy = y * y
    xxyy = xx * yy
    return [x, y, x * y, xx, yy, xxyy, xx * xx, yy * yy]


def accumulate(stream: PulseSampleStream) -> SufficientStats:
    """One pass over ``stream`` into per-block, per-class moment sums."""
    p = stream.params
    P, D = p.mod_period_pulses, p.duty_on_pulses
    x = np.asarray(stream.x, dtype=np.float64)
    y = np.asarray(stream.y, dtype=np.float64)
    n = x.size
    if n == 0:
        raise ValueError("empty stream")
    if stream.index is not None:
        return _accumulate_indexed(x, y, np.asarray(stream.index, np.int64), p, stream.tau)

    i0 = stream.first_index
    b0 = i0 // P
    lead = i0 - b0 * P
    nb = -(-(lead + n) // P)
    blocks = np.arange(b0, b0 + nb, dtype=np.int64)
    partial = np.empty((nb, 2, len(MOMENTS)))

    # pulse counts per block and class from index arithmetic
    starts = np.maximum(blocks * P, i0)
    stops = np.minimum((blocks + 1) * P, i0 + n)
    on_stop = np.minimum(stops, blocks * P + D)
    n_on = np.maximum(on_stop - starts, 0)
    partial[:, _ON, 0] = n_on
    partial[:, _OFF, 0] = (stops - starts) - n_on

    rows_per_batch = max(1, _BLOCK_BATCH // P)
    for r0 in range(0, nb, rows_per_batch):
        r1 = min(nb, r0 + rows_per_batch)
        lo = r0 * P - lead          # stream offset of first slot in this batch
        hi = r1 * P - lead
        if lo >= 0 and hi <= n:
            xb = x[lo:hi].reshape(r1 - r0, P)
            yb = y[lo:hi].reshape(r1 - r0, P)
        else:
            # zero padding contributes nothing to any moment
            xb = np.zeros((r1 - r0) * P)
            yb = np.zeros((r1 - r0) * P)
            a, b = max(lo, 0), min(hi, n)
            xb[a - lo:b - lo] = x[a:b]
            yb[a - lo:b - lo] = y[a:b]
            xb = xb.reshape(r1 - r0, P)
            yb = yb.reshape(r1 - r0, P)
        for k, m in enumerate(_moment_rows(xb, yb), start=1):
            partial[r0:r1, _ON, k] = m[:, :D].sum(axis=1)
            partial[r0:r1, _OFF, k] = m[:, D:].sum(axis=1)
    return SufficientStats(blocks, partial, p, stream.tau)


def _accumulate_indexed(x, y, idx, p: DetectorParams, tau: float) -> SufficientStats:
    P, D = p.mod_period_pulses, p.duty_on_pulses
    blk = idx // P
    cls = ((idx - blk * P) >= D).astype(np.int64)
    ub, inv = np.unique(blk, return_inverse=True)
    key = inv * 2 + cls
    size = 2 * ub.size
    partial = np.empty((ub.size, 2, len(MOMENTS)))
    partial[:, :, 0] = np.bincount(key, minlength=size).reshape(ub.size, 2)
    for k, m in enumerate(_moment_rows(x, y), start=1):
        partial[:, :, k] = np.bincount(key, weights=m, minlength=size).reshape(ub.size, 2)
    return SufficientStats(ub, partial, p, tau)


# estimators ----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def _class_means(tot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class means of every moment; an empty class contributes zeros."""
    cnt = tot[..., 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        on = np.where(cnt[..., _ON, None] > 0, tot[..., _ON, :] / cnt[..., _ON, None], 0.0)
        off = np.where(cnt[..., _OFF, None] > 0, tot[..., _OFF, :] / cnt[..., _OFF, None], 0.0)
    return on, off


def _g_values(tot: np.ndarray) -> dict[str, np.ndarray]:
    """All estimators from totals of shape (..., 2, n_moments)."""
    on, off = _class_means(tot)
    c = on[..., _M["xy"]] - off[..., _M["xy"]]
    vx = on[..., _M["xx"]] - off[..., _M["xx"]]
    vy = on[..., _M["yy"]] - off[..., _M["yy"]]
    q = (on[..., _M["xxyy"]] - off[..., _M["xx"]] * vy - off[..., _M["yy"]] * vx
         - off[..., _M["xxyy"]])
    q_naive = on[..., _M["xxyy"]] - off[..., _M["xxyy"]]
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = vx * vy
        return {"vx": vx, "vy": vy, "g1": c / np.sqrt(norm), "g2": q / norm,
                "g2_uncorrected": q_naive / norm}


def _check_floor(vals, stats: SufficientStats, eps: float) -> None:
    floor = eps * stats.params.nef**2
    if not (vals["vx"] > floor and vals["vy"] > floor):
        raise InsufficientSignal(
            f"insufficient signal at tau={stats.tau:.4g} s: V_x={float(vals['vx']):.4g}, "
            f"V_y={float(vals['vy']):.4g}, floor={floor:.4g} (V/m)^2")


def _jackknife(stats: SufficientStats, name: str, full: float) -> float:
    nb = stats.blocks.size
    if nb < 2:
        return math.nan
    tot = stats.totals()
    loo = _g_values(tot[None, :, :] - stats.partial)[name]
    loo = loo[np.isfinite(loo)]
    if loo.size < 2:
        return math.nan
    return float(math.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2)))


def _estimate(stats: SufficientStats, name: str, eps: float) -> Estimate:
    vals = _g_values(stats.totals())
    _check_floor(vals, stats, eps)
    v = float(vals[name])
    return Estimate(v, _jackknife(stats, name, v))


def estimate_g1(stats: SufficientStats, eps: float = 0.01) -> Estimate:
    """Noise-corrected normalised field correlation C_xy / sqrt(V_x V_y)."""
    return _estimate(stats, "g1", eps)


def estimate_g2(stats: SufficientStats, eps: float = 0.01) -> Estimate:
    """Noise-corrected normalised intensity correlation (real fields).

    With independent zero-mean channel noise,
    <(E+n)^2 (E'+n')^2> = <E^2 E'^2> + s'^2 <E^2> + s^2 <E'^2> + s^2 s'^2,
    and the OFF class supplies s^2, s'^2 and s^2 s'^2.
    """
    return _estimate(stats, "g2", eps)


def estimate_g2_uncorrected(stats: SufficientStats, eps: float = 0.01) -> Estimate:
    """Plain lock-in difference of <x^2 y^2> without the noise cross terms."""
    return _estimate(stats, "g2_uncorrected", eps)


# traces --------------------------------------------------------------------

@dataclass
class CorrelationTrace:
    taus: np.ndarray
    g1: np.ndarray
    g1_err: np.ndarray
    g2_raw: np.ndarray
    g2_raw_err: np.ndarray
    g2_env: np.ndarray
    g2_env_err: np.ndarray
    n_pulses: np.ndarray
    nef: float
    nu0: float
    g2_uncorrected: Optional[np.ndarray] = None
    g2_uncorrected_err: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.taus)
        for name in ("g1", "g1_err", "g2_raw", "g2_raw_err", "g2_env", "g2_env_err", "n_pulses"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from taus")


def gaussian_smooth(taus, values, errs, fwhm: float):
    """Unit-area Gaussian smoothing on a uniform grid with edge renormalisation.

    Points are assumed independent for the error propagation.
    """
    taus = np.asarray(taus, float)
    sig = fwhm * FWHM_TO_SIGMA
    w = np.exp(-0.5 * ((taus[:, None] - taus[None, :]) / sig) ** 2)
    w /= w.sum(axis=1, keepdims=True)
    vals = w @ np.asarray(values, float)
    err = np.sqrt((w**2) @ np.asarray(errs, float) ** 2)
    return vals, err


def uniform_step(taus) -> float:
    taus = np.asarray(taus, float)
    if taus.size < 2:
        raise ValueError("need at least two delays")
    d = np.diff(taus)
    if not np.allclose(d, d[0], rtol=1e-6, atol=1e-21) or d[0] <= 0:
        raise ValueError("delay grid must be uniform and increasing")
    return float(d[0])


def few_cycle_envelope(trace: CorrelationTrace, nu0: float, n_cycles: float = 2.0,
                       values=None, errs=None):
    """Average g2_raw over a Gaussian window of FWHM ``n_cycles / nu0``.

    Removes the 2*nu0 oscillation of the real-field estimator. Returns
    (values, stderr) on the trace's delay grid.
    """
    step = uniform_step(trace.taus)
    if step >= 1.0 / (4.0 * nu0):
        raise ValueError(f"delay grid too coarse: step {step:.3g} s >= 1/(4 nu0)")
    v = trace.g2_raw if values is None else values
    e = trace.g2_raw_err if errs is None else errs
    e = np.where(np.isfinite(e), e, 0.0)
    return gaussian_smooth(trace.taus, v, e, n_cycles / nu0)


def _stats_for_tau(source, k: int, tau: float, n_pulses: int, det: DetectorParams,
                   seed: int, n_offset: int, chunk: int) -> SufficientStats:
    if isinstance(source, SourceSpec):
        trace = make_source(source, seed, stream=f"scan/{k}/source")
    else:
        trace = source
    per = det.mod_period_pulses
    chunk = max(per, (chunk // per) * per)
    stats = SufficientStats.empty(det, tau)
    for c, start in enumerate(range(0, n_pulses, chunk)):
        count = min(chunk, n_pulses - start)
        extra = abs(n_offset)
        first = start - extra if n_offset < 0 else start
        first = max(first, 0)
        s = sample_pulse_stream(trace, tau, count + extra, det, seed,
                                stream=f"scan/{k}/eos/{c}", first_index=first)
        if n_offset:
            s = pair_with_offset(s, s, n_offset)
        part = accumulate(s)
        part.tau = s.tau
        stats = part if c == 0 else stats.merge(part)
        stats.tau = part.tau
    return stats


def correlation_scan(source: Union[SourceSpec, FieldTrace], taus, n_pulses: int,
                     detector: DetectorParams = DetectorParams(), seed: int = 0,
                     n_offset: int = 0, n_cycles: float = 2.0, eps: float = 0.01,
                     threads: int = 1, chunk: int = 1 << 21) -> CorrelationTrace:
    """Delay scan: simulate, accumulate and estimate at every tau.

    A ``SourceSpec`` gets an independent realisation per delay (derived
    seeds); a ``FieldTrace`` is shared by all delays. Each delay is
    deterministic on its own, so delays may run in parallel.
    """
    taus = np.asarray(taus, dtype=float)
    nu0 = source.nu0

    def one(k):
        st = _stats_for_tau(source, k, float(taus[k]), n_pulses, detector, seed, n_offset, chunk)
        return st, estimate_g1(st, eps), estimate_g2(st, eps), estimate_g2_uncorrected(st, eps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(one, range(taus.size)))
    else:
        res = [one(k) for k in range(taus.size)]

    g1 = np.array([r[1].value for r in res])
    g1e = np.array([r[1].stderr for r in res])
    g2 = np.array([r[2].value for r in res])
    g2e = np.array([r[2].stderr for r in res])
    gu = np.array([r[3].value for r in res])
    gue = np.array([r[3].stderr for r in res])
    eff_taus = np.array([r[0].tau for r in res])
    tr = CorrelationTrace(eff_taus, g1, g1e, g2, g2e, np.full(taus.size, np.nan),
                          np.full(taus.size, np.nan), np.array([r[0].n_pulses for r in res]),
                          detector.nef, nu0, gu, gue,
                          meta={"seed": seed, "n_offset": n_offset, "n_cycles": n_cycles})
    try:
        tr.g2_env, tr.g2_env_err = few_cycle_envelope(tr, nu0, n_cycles)
    except ValueError:
        pass  # single delay or coarse grid: no envelope
    return tr


def uncorrected_envelope(trace: CorrelationTrace, n_cycles: Optional[float] = None):
    n_cycles = trace.meta.get("n_cycles", 2.0) if n_cycles is None else n_cycles
    return few_cycle_envelope(trace, trace.nu0, n_cycles, trace.g2_uncorrected,
                              trace.g2_uncorrected_err)


def value_at(taus, values, tau0: float = 0.0) -> float:
    """Value at the grid point nearest ``tau0``."""
    return float(np.asarray(values)[np.argmin(np.abs(np.asarray(taus) - tau0))])


# CSV -----------------------------------------------------------------------

CSV_COLUMNS = ("tau_fs", "g1", "g1_err", "g2_raw", "g2_raw_err", "g2_env", "g2_env_err")


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.12g}"


def write_trace_csv(path, trace: CorrelationTrace, header: Optional[list[str]] = None) -> None:
    lines = [f"# {h}" for h in (header or [])]
    lines.append(f"# nef_V_per_m={_fmt(trace.nef)} nu0_THz={_fmt(trace.nu0 / 1e12)}")
    lines.append("# n_pulses_per_tau=" + ",".join(str(int(n)) for n in trace.n_pulses))
    lines.append(",".join(CSV_COLUMNS))
    cols = [trace.taus / 1e-15, trace.g1, trace.g1_err, trace.g2_raw, trace.g2_raw_err,
            trace.g2_env, trace.g2_env_err]
    for row in zip(*cols):
        lines.append(",".join(_fmt(float(v)) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Columns of a correlation CSV keyed by name (``tau_fs`` stays in fs)."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    names = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return {n: data[:, k] for k, n in enumerate(names)}
