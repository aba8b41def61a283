"""Fourier spectra of correlation traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlator import uniform_step

WINDOWS = ("none", "hann")


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray   # Hz, k / (N dtau) for k = 0..N//2
    magnitudes: np.ndarray    # |DFT|
    window: str
    n_points: int

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def full_power(self) -> float:
        """Sum of |X_k|^2 over the two-sided DFT."""
        p = self.magnitudes**2
        total = p[0] + 2.0 * p[1:].sum()
        if self.n_points % 2 == 0:
            total -= p[-1]
        return float(total)


def correlation_spectrum(taus, values, window: str = "hann", demean: bool = False) -> Spectrum:
    """One-sided DFT magnitude of a trace sampled on a uniform delay grid.

    Use ``demean=True`` for g2 traces, whose DC level would otherwise hide
    the oscillating components.
    """
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}")
    v = np.asarray(values, dtype=float)
    if v.size < 16:
        raise ValueError("need at least 16 delay points")
    step = uniform_step(taus)
    if v.size != len(taus):
        raise ValueError("values and taus differ in length")
    if demean:
        v = v - v.mean()
    if window == "hann":
        v = v * np.hanning(v.size)
    mags = np.abs(np.fft.rfft(v))
    freqs = np.fft.rfftfreq(v.size, step)
    return Spectrum(freqs, mags, window, v.size)


def peak_frequency(spec: Spectrum, band=None) -> float:
    """Frequency of the largest magnitude in ``band`` with a 3-bin parabolic fit."""
    f = spec.frequencies
    lo, hi = (f[0], f[-1]) if band is None else band
    sel = np.nonzero((f >= lo) & (f <= hi))[0]
    if sel.size == 0:
        raise ValueError(f"no spectral bins in band [{lo:.4g}, {hi:.4g}] Hz")
    k = int(sel[np.argmax(spec.magnitudes[sel])])
    if 0 < k < f.size - 1:
        a, b, c = spec.magnitudes[k - 1:k + 2]
        den = a - 2.0 * b + c
        if den < 0:
            shift = 0.5 * (a - c) / den
            return float(f[k] + np.clip(shift, -0.5, 0.5) * spec.df)
    return float(f[k])


def dominant_nonzero_peak(spec: Spectrum) -> float:
    return peak_frequency(spec, (0.5 * spec.df, spec.frequencies[-1]))


def write_spectrum_csv(path, spec: Spectrum, header=None) -> None:
    lines = [f"# {h}" for h in (header or [])]
    lines.append(f"# window={spec.window} n_points={spec.n_points}")
    lines.append("freq_THz,magnitude")
    for fr, m in zip(spec.frequencies, spec.magnitudes):
        lines.append(f"{fr / 1e12:.12g},{m:.12g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
