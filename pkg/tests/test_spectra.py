import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thzcorr.correlator import correlation_scan
from thzcorr.eos import DetectorParams
from thzcorr.sources import SourceSpec
from thzcorr.spectra import (Spectrum, correlation_spectrum, dominant_nonzero_peak, peak_frequency,
                             write_spectrum_csv)


def grid(n, step=20e-15):
    return (np.arange(n) - n // 2) * step


def test_exact_period_tone_single_bin():
    n, step = 64, 20e-15
    f0 = 5 / (n * step)
    tr = np.cos(2 * math.pi * f0 * grid(n, step))
    sp = correlation_spectrum(grid(n, step), tr, window="none")
    k = int(np.argmax(sp.magnitudes))
    assert sp.frequencies[k] == pytest.approx(f0)
    others = np.delete(sp.magnitudes, k)
    assert np.max(others) < 1e-10 * sp.magnitudes[k]


def test_frequency_axis():
    n, step = 64, 20e-15
    sp = correlation_spectrum(grid(n, step), np.ones(n), window="none")
    assert sp.df == pytest.approx(1 / (n * step))
    assert sp.frequencies[-1] == pytest.approx(1 / (2 * step), rel=1e-12)
    assert np.all(sp.magnitudes >= 0)


def test_odd_length_axis_top():
    n, step = 65, 20e-15
    sp = correlation_spectrum(grid(n, step), np.ones(n))
    assert sp.frequencies[-1] == pytest.approx((n // 2) / (n * step))


@given(st.integers(16, 200), st.integers(0, 2**32))
def test_parseval(n, seed):
    v = np.random.default_rng(seed).normal(size=n)
    sp = correlation_spectrum(grid(n), v, window="none")
    assert sp.full_power() == pytest.approx(n * np.sum(v**2), rel=1e-9)


def test_interpolated_peak_within_tenth_bin():
    n, step = 100, 20e-15
    df = 1 / (n * step)
    f0 = 12.3 * df
    tr = np.cos(2 * math.pi * f0 * grid(n, step))
    sp = correlation_spectrum(grid(n, step), tr, window="hann")
    assert abs(peak_frequency(sp) - f0) < 0.1 * df


def test_band_selects_tone():
    n, step = 128, 20e-15
    t = grid(n, step)
    tr = np.cos(2 * math.pi * 2e12 * t) + 0.3 * np.cos(2 * math.pi * 8e12 * t)
    sp = correlation_spectrum(t, tr)
    assert peak_frequency(sp, (6e12, 10e12)) == pytest.approx(8e12, abs=sp.df)
    assert peak_frequency(sp) == pytest.approx(2e12, abs=sp.df)


def test_empty_band():
    sp = correlation_spectrum(grid(32), np.ones(32))
    with pytest.raises(ValueError):
        peak_frequency(sp, (1e20, 2e20))


def test_errors():
    with pytest.raises(ValueError):
        correlation_spectrum(grid(8), np.ones(8))
    t = grid(32)
    t[5] += 1e-15
    with pytest.raises(ValueError):
        correlation_spectrum(t, np.ones(32))
    with pytest.raises(ValueError):
        correlation_spectrum(grid(32), np.ones(32), window="kaiser")


def test_demean_exposes_oscillation():
    t = grid(64)
    v = 1 + 0.1 * np.cos(2 * math.pi * 4.6e12 * t)
    sp = correlation_spectrum(t, v, demean=True)
    assert dominant_nonzero_peak(sp) == pytest.approx(4.6e12, abs=sp.df)


def test_multimode_g1_resolves_fsr():
    # 8.4 ps span at 2 x 250 GHz: 1/span = 119 GHz < FSR
    spec = SourceSpec("multimode", n_modes=3, mode_spacing=250e9, amplitude=6000)
    taus = np.arange(-105, 106) * 40e-15
    tr = correlation_scan(spec, taus, 18000 * 2, DetectorParams(nef=0), seed=1)
    sp = correlation_spectrum(tr.taus, tr.g1, window="none")
    m = sp.magnitudes
    peaks = [k for k in range(1, m.size - 1) if m[k] > m[k - 1] and m[k] > m[k + 1] and m[k] > 0.3 * m.max()]
    f = np.sort(sp.frequencies[peaks])
    assert len(f) == 3
    np.testing.assert_allclose(np.diff(f), 250e9, atol=sp.df)


def test_spectrum_csv(tmp_path):
    sp = correlation_spectrum(grid(32), np.cos(np.arange(32.0)))
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, sp, ["hello"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# hello" and "freq_THz,magnitude" in lines
    data = np.loadtxt(p, delimiter=",", comments="#", skiprows=lines.index("freq_THz,magnitude") + 1)
    np.testing.assert_allclose(data[:, 0], sp.frequencies / 1e12)
