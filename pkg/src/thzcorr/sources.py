"""Reference THz sources with known coherence properties.

Every source here is a sum of tones whose phases are redrawn for each
acquisition block (one modulation period of the detector). Block ``b``
covers pulse indices ``[b*P, (b+1)*P)``; its time boundaries sit half a
pulse spacing before the first pulse so that any sub-pulse probe delay stays
in the same block as the pulse it belongs to.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import FWHM_TO_SIGMA, FieldTrace, derive_stream

KINDS = ("coherent", "thermal", "multimode")

_ROW_CHUNK = 2048


@dataclass(frozen=True)
class SourceSpec:
    """Parameters of a synthetic source.

    ``amplitude`` is the peak field of each tone for coherent and multimode
    sources and the rms field for the thermal source. ``bandwidth`` is the
    FWHM of the thermal power spectrum.
    """

    kind: str = "coherent"
    nu0: float = 2.3e12
    amplitude: float = 6000.0
    bandwidth: float = 50e9
    n_components: int = 1024
    n_modes: int = 2
    mode_spacing: float = 25e9
    mode_amplitudes: Optional[Sequence[float]] = None
    block_pulses: int = 18000
    f_rep: float = 90e6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.nu0 <= 0:
            raise ValueError("nu0 must be > 0")
        if self.kind == "thermal":
            if self.bandwidth <= 0:
                raise ValueError("thermal bandwidth must be > 0")
            if self.n_components < 500:
                raise ValueError("thermal source needs n_components >= 500")
        if self.kind == "multimode":
            if self.n_modes < 1:
                raise ValueError("n_modes must be >= 1")
            if self.mode_amplitudes is not None and len(self.mode_amplitudes) != self.n_modes:
                raise ValueError("mode_amplitudes length must equal n_modes")
        if self.block_pulses < 1 or self.f_rep <= 0:
            raise ValueError("block_pulses and f_rep must be positive")


def tones(spec: SourceSpec):
    """Tone frequencies [Hz] and peak amplitudes [V/m] of ``spec``."""
    if spec.kind == "coherent":
        return np.array([spec.nu0]), np.array([float(spec.amplitude)])
    if spec.kind == "multimode":
        k = np.arange(spec.n_modes) - 0.5 * (spec.n_modes - 1)
        rel = np.ones(spec.n_modes) if spec.mode_amplitudes is None else np.asarray(spec.mode_amplitudes, float)
        return spec.nu0 + k * spec.mode_spacing, spec.amplitude * rel
    sig = spec.bandwidth * FWHM_TO_SIGMA
    if spec.nu0 - 4.0 * sig <= 0:
        raise ValueError("thermal bandwidth too wide for nu0")
    freqs = np.linspace(spec.nu0 - 4.0 * sig, spec.nu0 + 4.0 * sig, spec.n_components)
    weight = np.exp(-0.5 * ((freqs - spec.nu0) / sig) ** 2)
    # <E^2> = sum A^2 / 2 = rms^2
    amps = np.sqrt(2.0 * weight / weight.sum()) * spec.amplitude
    return freqs, amps


def gaussian_transfer(freqs, sigma: float):
    """Response of a unit-area Gaussian time window of std ``sigma`` to a tone."""
    return np.exp(-2.0 * (math.pi * np.asarray(freqs) * sigma) ** 2)


class ToneField:
    """Sum of tones with per-block random phases; backs the synthetic FieldTraces."""

    def __init__(self, freqs, amps, seed: int, stream: str, block_pulses: int, f_rep: float):
        self.freqs = np.asarray(freqs, dtype=float)
        self.amps = np.asarray(amps, dtype=float)
        self.seed = int(seed)
        self.stream = stream
        self.block_pulses = int(block_pulses)
        self.f_rep = float(f_rep)
        self._phase_cache: dict[int, np.ndarray] = {}

    def block_phases(self, b: int) -> np.ndarray:
        ph = self._phase_cache.get(b)
        if ph is None:
            gen = derive_stream(self.seed, f"{self.stream}/block/{b}").generator
            ph = gen.uniform(0.0, 2.0 * math.pi, self.freqs.size)
            self._phase_cache[b] = ph
        return ph

    def coefficients(self, blocks) -> np.ndarray:
        ph = np.stack([self.block_phases(int(b)) for b in blocks], axis=1)
        return self.amps[:, None] * np.exp(1j * ph)

    def block_of(self, t) -> np.ndarray:
        return np.floor((np.asarray(t) * self.f_rep + 0.5) / self.block_pulses).astype(np.int64)

    def block_start(self, b) -> np.ndarray:
        return np.asarray(b, dtype=float) * self.block_pulses / self.f_rep

    def evaluate(self, t, sigma: float = 0.0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty(flat.size)
        blocks = self.block_of(flat)
        h = gaussian_transfer(self.freqs, sigma) if sigma > 0 else 1.0
        ub, inv = np.unique(blocks, return_inverse=True)
        coef = self.coefficients(ub) * (h if np.ndim(h) == 0 else h[:, None])
        for pos, b in enumerate(ub):
            sel = np.nonzero(inv == pos)[0]
            rel = flat[sel] - self.block_start(b)
            for s in range(0, sel.size, _ROW_CHUNK):
                r = rel[s:s + _ROW_CHUNK]
                u = np.exp(2j * math.pi * np.outer(r, self.freqs))
                out[sel[s:s + _ROW_CHUNK]] = (u @ coef[:, pos]).real
        return out.reshape(t.shape)

    def train(self, idx, f_rep: float, offset: float, sigma: float) -> np.ndarray:
        """Filtered field at ``idx / f_rep + offset`` for integer pulse indices.

        All blocks share one phase-factor matrix over the in-block pulse
        position, so the cost is one matrix product instead of one complex
        exponential per (pulse, tone).
        """
        idx = np.asarray(idx, dtype=np.int64)
        if f_rep != self.f_rep or abs(offset * f_rep) >= 0.5:
            return self.evaluate(idx / f_rep + offset, sigma)
        out = np.empty(idx.size)
        if idx.size == 0:
            return out
        P = self.block_pulses
        blocks = idx // P
        j = idx - blocks * P
        ub, inv = np.unique(blocks, return_inverse=True)
        coef = self.coefficients(ub)
        if sigma > 0:
            coef = coef * gaussian_transfer(self.freqs, sigma)[:, None]
        j0, j1 = int(j.min()), int(j.max()) + 1
        for c0 in range(j0, j1, _ROW_CHUNK):
            c1 = min(c0 + _ROW_CHUNK, j1)
            sel = np.nonzero((j >= c0) & (j < c1))[0]
            if sel.size == 0:
                continue
            u = _phase_rows(c0, c1, f_rep, offset, self.freqs)
            vals = (u @ coef).real
            out[sel] = vals[j[sel] - c0, inv[sel]]
        return out


def _phase_rows(c0: int, c1: int, f_rep: float, offset: float, freqs) -> np.ndarray:
    """exp(i 2pi (j / f_rep + offset) f) for j in [c0, c1), one row per j.

    Row j = c0 + a*B + b is the product of a coarse and a fine factor, which
    replaces most complex exponentials by multiplications.
    """
    B = 64
    n = c1 - c0
    na = -(-n // B)
    w = 2j * math.pi * freqs
    coarse = np.exp(np.outer((c0 + B * np.arange(na)) / f_rep + offset, w))
    fine = np.exp(np.outer(np.arange(B) / f_rep, w))
    return (coarse[:, None, :] * fine[None, :, :]).reshape(na * B, freqs.size)[:n]


def _build(spec: SourceSpec, seed: int, stream: str) -> FieldTrace:
    freqs, amps = tones(spec)
    tf = ToneField(freqs, amps, seed, stream, spec.block_pulses, spec.f_rep)
    return FieldTrace(
        sampler=tf.evaluate,
        t_start=-math.inf,
        t_end=math.inf,
        nu0=spec.nu0,
        amplitude=spec.amplitude,
        kind=spec.kind,
        probe_filtered=tf.evaluate,
        pulse_train=tf.train,
    )


def coherent_source(spec: SourceSpec, seed: int, stream: str = "source") -> FieldTrace:
    """E0 cos(2 pi nu0 t + phi_b) with a fresh uniform phase per block."""
    if spec.kind != "coherent":
        raise ValueError("coherent_source needs kind='coherent'")
    return _build(spec, seed, stream)


def thermal_source(spec: SourceSpec, seed: int, stream: str = "source") -> FieldTrace:
    """Random-phase sum of ``n_components`` tones under a Gaussian power spectrum."""
    if spec.kind != "thermal":
        raise ValueError("thermal_source needs kind='thermal'")
    return _build(spec, seed, stream)


def multimode_source(spec: SourceSpec, seed: int, stream: str = "source") -> FieldTrace:
    """Equally spaced modes centred on nu0 with independent per-block phases."""
    if spec.kind != "multimode":
        raise ValueError("multimode_source needs kind='multimode'")
    return _build(spec, seed, stream)


def make_source(spec: SourceSpec, seed: int, stream: str = "source") -> FieldTrace:
    return {"coherent": coherent_source, "thermal": thermal_source,
            "multimode": multimode_source}[spec.kind](spec, seed, stream)


# analytic references -------------------------------------------------------

def coherent_raw_g2(nu0: float, tau):
    """Real-field fourth-moment ratio of a random-phase sinusoid."""
    return 1.0 + 0.5 * np.cos(4.0 * math.pi * nu0 * np.asarray(tau))


def envelope_g2_zero(amps) -> float:
    """Phase-averaged <I^2>/<I>^2 for independent uniform-phase modes."""
    p = np.asarray(amps, dtype=float) ** 2
    return 2.0 - float(np.sum(p**2) / np.sum(p) ** 2)


def monte_carlo_envelope_g2(amps, n_draws: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate (value, stderr) of envelope g2(0) over random phase sets."""
    a = np.asarray(amps, dtype=float)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=(n_draws, a.size))
    inten = np.abs(np.exp(1j * phi) @ a) ** 2
    m1, m2 = inten.mean(), (inten**2).mean()
    g2 = m2 / m1**2
    # delta method on (m2, m1)
    d = np.stack([inten**2 / m1**2, -2.0 * m2 * inten / m1**3])
    err = math.sqrt(np.var(d.sum(axis=0)) / n_draws)
    return float(g2), err


def tone_g1(spec: SourceSpec, tau):
    """Exact real-field normalised autocorrelation of the discrete tone set."""
    freqs, amps = tones(spec)
    w = amps**2 / np.sum(amps**2)
    return np.cos(2.0 * math.pi * np.outer(np.atleast_1d(tau), freqs)) @ w


def gaussian_g1_envelope(bandwidth: float, tau):
    """|g1| envelope of a Gaussian power spectrum of FWHM ``bandwidth``."""
    sig = bandwidth * FWHM_TO_SIGMA
    return np.exp(-2.0 * (math.pi * sig * np.asarray(tau)) ** 2)
