"""Experiment configuration: INI-style ``key = value`` sections with units in key names.

Example::

    [experiment]
    master_seed = 42

    [source]
    kind = coherent
    amplitude_v_per_m = 6000

    [correlator]
    tau_max_fs = 900
    tau_step_fs = 45
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .eos import DetectorParams
from .mb_laser import MBParams
from .sources import SourceSpec


class ConfigError(ValueError):
    pass


DEFAULT_GAIN_RATIOS = (0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95, 0.98, 1.0, 1.01,
                       1.02, 1.03, 1.05, 1.1, 1.15, 1.2, 1.25, 1.3, 1.4, 1.5)


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _floats(text: str):
    return tuple(float(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*opts):
    def conv(text):
        t = text.strip().lower()
        if t not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return t
    return conv


# section -> key -> (converter, default, range check, range description)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any, Optional[Callable], str]]] = {
    "experiment": {
        "master_seed": (int, 0, _nonneg, ">= 0"),
        "threads": (int, 1, lambda v: v >= 1, ">= 1"),
    },
    "source": {
        "kind": (_choice("coherent", "thermal", "multimode", "mb"), None, None, ""),
        "nu0_thz": (float, 2.3, _pos, "> 0"),
        "amplitude_v_per_m": (float, 6000.0, _nonneg, ">= 0"),
        "bandwidth_ghz": (float, 50.0, _pos, "> 0"),
        "n_components": (int, 1024, lambda v: v >= 500, ">= 500"),
        "n_modes": (int, None, lambda v: v >= 1, ">= 1"),
        "mode_spacing_ghz": (float, 25.0, _pos, "> 0"),
        "mode_amplitudes": (_floats, None, lambda v: all(a >= 0 for a in v), "all >= 0"),
        "gain_over_threshold": (float, 1.03, _nonneg, ">= 0"),
        "tau_coh_ps": (float, 0.5, _pos, "> 0"),
        "tau_up_ps": (float, 5.0, _pos, "> 0"),
        "tau_photon_ps": (float, 35.0, _pos, "> 0"),
        "t_roundtrip_ps": (float, 4.0, _pos, "> 0"),
        "gvd_fs2_per_mm": (float, 6.24e5, _nonneg, ">= 0"),
        "dispersive_length_mm": (float, 2.0, _nonneg, ">= 0"),
        "z12_nm": (float, 7.0, _pos, "> 0"),
        "sp_ratio": (float, 4e-5, _nonneg, ">= 0"),
        "field_scale_v_per_m": (float, 500.0, _pos, "> 0"),
        "duration_ns": (float, 220.0, _pos, "> 0"),
        "transient_ns": (float, 20.0, _nonneg, ">= 0"),
        "dt_ps": (float, 0.25, _pos, "> 0"),
        "record_dt_ps": (float, 0.75, _pos, "> 0"),
    },
    "detector": {
        "probe_fwhm_fs": (float, 146.0, _pos, "> 0"),
        "f_rep_mhz": (float, 90.0, _pos, "> 0"),
        "nef_v_per_m": (float, 600.0, _nonneg, ">= 0"),
        "mod_period_pulses": (int, 18000, lambda v: v >= 1, ">= 1"),
        "duty_on_pulses": (int, 9000, lambda v: v >= 1, ">= 1"),
    },
    "correlator": {
        "tau_max_fs": (float, 2000.0, lambda v: 0 <= v <= 140000, "in [0, 140000]"),
        "tau_step_fs": (float, 20.0, _pos, "> 0"),
        "n_pulses": (int, 1_000_000, lambda v: v >= 1, ">= 1"),
        "envelope_cycles": (float, 2.0, _pos, "> 0"),
        "variance_floor": (float, 0.01, _nonneg, ">= 0"),
        "n_offset": (int, 0, None, ""),
    },
    "sweep": {
        "gain_ratios": (_floats, DEFAULT_GAIN_RATIOS, lambda v: len(v) > 0 and all(g >= 0 for g in v), "non-empty, all >= 0"),
        "currents_ma": (_floats, None, lambda v: len(v) > 0 and all(c >= 0 for c in v), "non-empty, all >= 0"),
        "threshold_current_ma": (float, 495.0, _pos, "> 0"),
        "duration_ns": (float, 220.0, _pos, "> 0"),
        "transient_ns": (float, 20.0, _nonneg, ">= 0"),
        "pipeline": (_bool, False, None, ""),
        "pipeline_n_pulses": (int, 200_000, lambda v: v >= 1, ">= 1"),
        "pipeline_tau_max_fs": (float, 900.0, _nonneg, ">= 0"),
        "pipeline_tau_step_fs": (float, 45.0, _pos, "> 0"),
    },
    "output": {
        "directory": (str, "out", None, ""),
        "formats": (lambda t: tuple(s.strip().lower() for s in t.split(",") if s.strip()),
                    ("csv", "json"), lambda v: set(v) <= {"csv", "json"}, "subset of csv, json"),
    },
}


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, Any]]
    present: dict[str, set] = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def has(self, section: str, key: str = None) -> bool:
        if key is None:
            return section in self.present
        return key in self.present.get(section, set())

    @property
    def seed(self) -> int:
        return self.get("experiment", "master_seed")

    @property
    def threads(self) -> int:
        return self.get("experiment", "threads")

    @property
    def source_kind(self) -> Optional[str]:
        return self.get("source", "kind")

    def detector(self) -> DetectorParams:
        d = self.values["detector"]
        return DetectorParams(
            probe_fwhm=d["probe_fwhm_fs"] * 1e-15, f_rep=d["f_rep_mhz"] * 1e6,
            nef=d["nef_v_per_m"], mod_period_pulses=d["mod_period_pulses"],
            duty_on_pulses=d["duty_on_pulses"])

    def source_spec(self) -> SourceSpec:
        s = self.values["source"]
        det = self.detector()
        n_modes = s["n_modes"] if s["n_modes"] is not None else 2
        return SourceSpec(
            kind=s["kind"], nu0=s["nu0_thz"] * 1e12, amplitude=s["amplitude_v_per_m"],
            bandwidth=s["bandwidth_ghz"] * 1e9, n_components=s["n_components"],
            n_modes=n_modes, mode_spacing=s["mode_spacing_ghz"] * 1e9,
            mode_amplitudes=s["mode_amplitudes"], block_pulses=det.mod_period_pulses,
            f_rep=det.f_rep)

    def mb_params(self, gain_ratio: Optional[float] = None) -> MBParams:
        s = self.values["source"]
        p = MBParams(
            tau_coh=s["tau_coh_ps"] * 1e-12, tau_up=s["tau_up_ps"] * 1e-12,
            tau_photon=s["tau_photon_ps"] * 1e-12, t_roundtrip=s["t_roundtrip_ps"] * 1e-12,
            gvd=s["gvd_fs2_per_mm"] * 1e-30 / 1e-3,
            dispersive_length_per_rt=s["dispersive_length_mm"] * 1e-3,
            z12=s["z12_nm"] * 1e-9, sp_ratio=s["sp_ratio"], nu0=s["nu0_thz"] * 1e12,
            n_modes=s["n_modes"] if s["n_modes"] is not None else 7)
        ratio = s["gain_over_threshold"] if gain_ratio is None else gain_ratio
        return p.at(ratio)

    def taus(self, max_key="tau_max_fs", step_key="tau_step_fs", section="correlator"):
        import numpy as np
        c = self.values[section]
        half, step = c[max_key] * 1e-15, c[step_key] * 1e-15
        n = int(round(half / step))
        return np.arange(-n, n + 1) * step

    def echo(self) -> str:
        """Effective configuration with every default filled in."""
        out = []
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for k in keys:
                v = self.values[sec][k]
                if v is None:
                    continue
                if isinstance(v, tuple):
                    v = ", ".join(str(x) for x in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                out.append(f"{k} = {v}")
            out.append("")
        return "\n".join(out)


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    cur = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            cur = m.group(1).strip().lower()
            if key is None and cur == section:
                return n
            continue
        if cur == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.I):
            return n
    return 0


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; every error message carries the offending line number."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside of any [section]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    present: dict[str, set] = {}
    for sec in cp.sections():
        name = sec.strip().lower()
        if name not in SCHEMA:
            raise ConfigError(f"line {_line_of(text, name)}: unknown section [{sec}]")
        present[name] = set()
        for key, raw in cp.items(sec):
            line = _line_of(text, name, key)
            if key not in SCHEMA[name]:
                raise ConfigError(f"line {line}: unknown key {key!r} in [{name}]")
            conv, _, check, desc = SCHEMA[name][key]
            try:
                val = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"line {line}: bad value for {key!r}: {raw!r} ({exc})") from None
            if check is not None and not check(val):
                raise ConfigError(f"line {line}: {key} = {raw} out of range (must be {desc})")
            values[name][key] = val
            present[name].add(key)

    if "source" in present and values["source"]["kind"] is None:
        raise ConfigError(f"line {_line_of(text, 'source')}: missing required key 'kind' in [source]")
    det = values["detector"]
    if det["duty_on_pulses"] > det["mod_period_pulses"]:
        raise ConfigError(f"line {_line_of(text, 'detector', 'duty_on_pulses')}: "
                          "duty_on_pulses must not exceed mod_period_pulses")
    src = values["source"]
    if src["kind"] == "mb" and src["n_modes"] is not None and src["n_modes"] % 2 == 0:
        raise ConfigError(f"line {_line_of(text, 'source', 'n_modes')}: n_modes must be odd for kind = mb")
    if src["transient_ns"] >= src["duration_ns"]:
        raise ConfigError(f"line {_line_of(text, 'source', 'transient_ns')}: transient_ns must be < duration_ns")
    if src["mode_amplitudes"] is not None:
        n = src["n_modes"] if src["n_modes"] is not None else 2
        if len(src["mode_amplitudes"]) != n:
            raise ConfigError(f"line {_line_of(text, 'source', 'mode_amplitudes')}: "
                              f"mode_amplitudes needs {n} entries")
    return ExperimentConfig(values, present)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
