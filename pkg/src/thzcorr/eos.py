"""Virtual two-probe electro-optic sampling detector.

Two probe pulses per laser shot read the THz field at ``t_i`` and
``t_i + tau`` through a Gaussian temporal window; each balanced detector
adds independent Gaussian noise. The THz beam is chopped: pulse ``i`` sees
the source only when ``i mod mod_period_pulses < duty_on_pulses``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FWHM_TO_SIGMA, FieldTrace, OutOfRange, derive_stream

ON, OFF = True, False

EOSC_MAGIC = b"EOSC"
EOSC_VERSION = 1
_EOSC_HEADER = struct.Struct("<4sIdIIdQ")

_QUAD_HALF_WIDTH = 4.0  # in units of sigma
_QUAD_STEPS_PER_SIGMA = 8
_CHUNK = 1 << 16


class EOSCFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorParams:
    probe_fwhm: float = 146e-15
    f_rep: float = 90e6
    nef: float = 600.0
    mod_period_pulses: int = 18000
    duty_on_pulses: int = 9000

    def __post_init__(self):
        if not 0 < self.duty_on_pulses <= self.mod_period_pulses:
            raise ValueError("need 0 < duty_on_pulses <= mod_period_pulses")
        if self.probe_fwhm <= 0 or self.f_rep <= 0:
            raise ValueError("probe_fwhm and f_rep must be > 0")
        if self.nef < 0:
            raise ValueError("nef must be >= 0")

    @property
    def probe_sigma(self) -> float:
        return self.probe_fwhm * FWHM_TO_SIGMA

    @property
    def channel_noise_correlation(self) -> float:
        return 0.0


@dataclass
class PulseSampleStream:
    """Per-pulse field readings of the two probe channels.

    Pulses are contiguous from ``first_index`` unless ``index`` gives the
    pulse number of every row explicitly (offset pairing drops rows).
    """

    tau: float
    x: np.ndarray
    y: np.ndarray
    params: DetectorParams
    first_index: int = 0
    index: Optional[np.ndarray] = None
    provenance: str = ""

    def __post_init__(self):
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if self.index is not None and self.index.shape != self.x.shape:
            raise ValueError("index must match samples")

    @property
    def n_pulses(self) -> int:
        return int(self.x.size)

    def pulse_index(self) -> np.ndarray:
        if self.index is not None:
            return self.index
        return np.arange(self.first_index, self.first_index + self.n_pulses, dtype=np.int64)

    def on_mask(self) -> np.ndarray:
        p = self.params
        return (self.pulse_index() % p.mod_period_pulses) < p.duty_on_pulses


def modulation_state(i: int, params: DetectorParams = DetectorParams()) -> bool:
    """True (ON) iff pulse ``i`` falls in the open half of the chopper period."""
    if i < 0:
        raise ValueError("pulse index must be >= 0")
    return (i % params.mod_period_pulses) < params.duty_on_pulses


def _quadrature_nodes(sigma: float):
    h = sigma / _QUAD_STEPS_PER_SIGMA
    n = int(round(_QUAD_HALF_WIDTH * _QUAD_STEPS_PER_SIGMA))
    u = np.arange(-n, n + 1) * h
    w = np.exp(-0.5 * (u / sigma) ** 2)
    return u, w / w.sum()


def probe_response(trace: FieldTrace, t_center, probe_fwhm: float):
    """Field seen by a Gaussian probe of FWHM ``probe_fwhm`` centred at ``t_center``.

    Direct quadrature (step sigma/8 over +-4 sigma, weights normalised to
    unit sum) on the raw sampler; does not use any analytic shortcut.
    """
    sigma = probe_fwhm * FWHM_TO_SIGMA
    u, w = _quadrature_nodes(sigma)
    tc = np.atleast_1d(np.asarray(t_center, dtype=float))
    trace.check_span([tc.min() + u[0], tc.max() + u[-1]])
    out = np.empty(tc.size)
    rows = max(1, _CHUNK // u.size)
    for s in range(0, tc.size, rows):
        tt = tc[s:s + rows, None] + u[None, :]
        out[s:s + rows] = trace.sampler(tt) @ w
    return out if np.ndim(t_center) else float(out[0])


def _filtered(trace: FieldTrace, idx: np.ndarray, offset: float, params: DetectorParams):
    sigma = params.probe_sigma
    if trace.pulse_train is not None:
        return trace.pulse_train(idx, params.f_rep, offset, sigma)
    t = idx / params.f_rep + offset
    if trace.probe_filtered is not None:
        u = _QUAD_HALF_WIDTH * sigma
        if t.size:
            trace.check_span([t.min() - u, t.max() + u])
        return trace.probe_filtered(t, sigma)
    return probe_response(trace, t, params.probe_fwhm)


def sample_pulse_stream(source: FieldTrace, tau: float, n_pulses: int,
                        params: DetectorParams = DetectorParams(), seed: int = 0,
                        stream: str = "eos", first_index: int = 0) -> PulseSampleStream:
    """Simulate ``n_pulses`` shots of the two-probe detector at delay ``tau``."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    idx = np.arange(first_index, first_index + n_pulses, dtype=np.int64)
    on = (idx % params.mod_period_pulses) < params.duty_on_pulses
    if params.nef > 0:
        x = derive_stream(seed, f"{stream}/noise/x").generator.standard_normal(n_pulses) * params.nef
        y = derive_stream(seed, f"{stream}/noise/y").generator.standard_normal(n_pulses) * params.nef
    else:
        x = np.zeros(n_pulses)
        y = np.zeros(n_pulses)
    on_idx = idx[on]
    if on_idx.size:
        x[on] += _filtered(source, on_idx, 0.0, params)
        y[on] += _filtered(source, on_idx, tau, params)
    return PulseSampleStream(tau=tau, x=x, y=y, params=params, first_index=first_index,
                             provenance=f"seed={seed} stream={stream}")


def pair_with_offset(s1: PulseSampleStream, s2: PulseSampleStream, n_offset: int) -> PulseSampleStream:
    """Pair x_i of ``s1`` with y_{i+n_offset} of ``s2`` (delay grows by n_offset / f_rep).

    Pairs whose two pulses fall in different chopper states are dropped.
    """
    if s1.index is not None or s2.index is not None:
        raise ValueError("offset pairing needs contiguous streams")
    if s1.first_index != s2.first_index or s1.n_pulses != s2.n_pulses:
        raise ValueError("streams must cover the same pulses")
    n = s1.n_pulses
    if abs(n_offset) >= n:
        raise ValueError("|n_offset| must be < n_pulses")
    p = s1.params
    i = np.arange(max(0, -n_offset), min(n, n - n_offset), dtype=np.int64)
    gi = i + s1.first_index
    cls1 = (gi % p.mod_period_pulses) < p.duty_on_pulses
    cls2 = ((gi + n_offset) % p.mod_period_pulses) < p.duty_on_pulses
    keep = cls1 == cls2
    if not keep.any():
        raise ValueError("no pairs left: every pair mixes ON and OFF pulses")
    i = i[keep]
    if n_offset == 0:
        return PulseSampleStream(s1.tau, s1.x, s2.y, p, s1.first_index, None, s1.provenance)
    return PulseSampleStream(
        tau=s2.tau + n_offset / p.f_rep, x=s1.x[i], y=s2.y[i + n_offset], params=p,
        first_index=s1.first_index, index=gi[keep], provenance=f"{s1.provenance} offset={n_offset}",
    )


def equivalent_time_trace(trace: FieldTrace, f_rep: float) -> FieldTrace:
    """Present a finite-span field to a pulse train longer than the span.

    Pulse ``i`` is mapped to ``(i / f_rep) mod L`` inside the span, keeping
    sub-pulse offsets intact, so pairs (t_i, t_i + tau) with |tau| < 1/(2 f_rep)
    see a continuous field. ``L / (1/f_rep)`` has fractional part equal to the
    golden ratio, which spreads successive pulses evenly over the span. Only
    intra-pulse delays are meaningful through this mapping.
    """
    period = 1.0 / f_rep
    margin = 0.5 * period + 1e-12
    usable = (trace.t_end - trace.t_start) - 2.0 * margin
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    k = math.floor(usable / period - golden)
    if k < 0:
        raise OutOfRange("trace span too short for equivalent-time sampling")
    wrap = period * (k + golden)
    base = trace.t_start + margin

    def to_span(t):
        t = np.asarray(t, dtype=float)
        i = np.rint(t * f_rep)
        return base + np.mod(i * period, wrap) + (t - i * period)

    filt = None
    if trace.probe_filtered is not None:
        def filt(t, sigma):
            return trace.probe_filtered(to_span(t), sigma)

    return FieldTrace(
        sampler=lambda t: trace.sampler(to_span(t)),
        t_start=-math.inf, t_end=math.inf, nu0=trace.nu0, amplitude=trace.amplitude,
        kind=f"{trace.kind}+equivalent-time", probe_filtered=filt,
    )


# EOSC v1 files -------------------------------------------------------------

def write_eosc(path, stream: PulseSampleStream) -> None:
    if stream.index is not None or stream.first_index != 0:
        raise ValueError("EOSC stores contiguous streams starting at pulse 0")
    p = stream.params
    header = _EOSC_HEADER.pack(EOSC_MAGIC, EOSC_VERSION, p.f_rep, p.mod_period_pulses,
                               p.duty_on_pulses, stream.tau, stream.n_pulses)
    data = np.empty((stream.n_pulses, 2), dtype="<f4")
    data[:, 0] = stream.x
    data[:, 1] = stream.y
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_eosc(path, params: Optional[DetectorParams] = None) -> PulseSampleStream:
    """Load an EOSC v1 file; probe width and NEF come from ``params``."""
    raw = Path(path).read_bytes()
    if len(raw) < _EOSC_HEADER.size:
        raise EOSCFormatError(f"{path}: truncated header")
    magic, version, f_rep, period, duty, tau, n = _EOSC_HEADER.unpack_from(raw)
    if magic != EOSC_MAGIC:
        raise EOSCFormatError(f"{path}: bad magic {magic!r}")
    if version != EOSC_VERSION:
        raise EOSCFormatError(f"{path}: unsupported EOSC version {version}")
    payload = raw[_EOSC_HEADER.size:]
    if len(payload) != 8 * n:
        raise EOSCFormatError(f"{path}: expected {n} samples, found {len(payload) // 8}")
    base = params or DetectorParams()
    det = DetectorParams(probe_fwhm=base.probe_fwhm, f_rep=f_rep, nef=base.nef,
                         mod_period_pulses=period, duty_on_pulses=duty)
    data = np.frombuffer(payload, dtype="<f4").reshape(n, 2).astype(np.float64)
    return PulseSampleStream(tau=tau, x=data[:, 0].copy(), y=data[:, 1].copy(), params=det,
                             provenance=f"file={Path(path).name}")
