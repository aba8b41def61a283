import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thzcorr.core import FieldTrace, OutOfRange
from thzcorr.eos import (EOSCFormatError, DetectorParams, PulseSampleStream,
                         equivalent_time_trace, modulation_state, pair_with_offset, probe_response,
                         read_eosc, sample_pulse_stream, write_eosc)
from thzcorr.sources import SourceSpec, make_source

DET = DetectorParams()
SIGMA = 146e-15 / 2.3548200450309493


def cosine_trace(nu, amp=1.0, span=1e-9):
    return FieldTrace(lambda t: amp * np.cos(2 * math.pi * nu * t), -span, span, nu, amp)


def test_detector_defaults():
    assert DET.mod_period_pulses == 18000 and DET.duty_on_pulses == 9000
    assert DET.probe_sigma == pytest.approx(62.0e-15, rel=1e-3)
    assert DET.channel_noise_correlation == 0.0


@pytest.mark.parametrize("kw", [dict(duty_on_pulses=0), dict(duty_on_pulses=20000),
                                dict(probe_fwhm=0.0), dict(nef=-1.0)])
def test_detector_validation(kw):
    with pytest.raises(ValueError):
        DetectorParams(**kw)


@pytest.mark.parametrize("i,on", [(0, True), (8999, True), (9000, False), (17999, False), (18000, True)])
def test_modulation_state(i, on):
    assert modulation_state(i) is on


def test_modulation_negative_index():
    with pytest.raises(ValueError):
        modulation_state(-1)


def test_probe_constant_field():
    tr = FieldTrace(lambda t: np.full(np.shape(t), 7.0), -1e-12, 1e-12, 1.0, 7.0)
    assert probe_response(tr, 0.0, 146e-15) == pytest.approx(7.0, rel=1e-14)


def test_probe_sinusoid_attenuation():
    tr = cosine_trace(2.3e12)
    v = probe_response(tr, np.array([0.0]), 146e-15)[0]
    assert v == pytest.approx(math.exp(-2 * (math.pi * 2.3e12 * SIGMA) ** 2), rel=1e-3)
    assert v == pytest.approx(0.669, abs=1e-3)


def test_probe_high_frequency_filtered():
    assert abs(probe_response(cosine_trace(30e12), 0.0, 146e-15)) < 1e-5


def test_probe_window_out_of_range():
    tr = cosine_trace(1e12, span=1e-13)
    with pytest.raises(OutOfRange):
        probe_response(tr, 0.0, 146e-15)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.5e12, 4e12), st.floats(0.5e12, 4e12))
def test_probe_linear(a, b, nu1, nu2):
    e1, e2 = cosine_trace(nu1), cosine_trace(nu2)
    both = FieldTrace(lambda t: a * e1.sampler(t) + b * e2.sampler(t), -1e-9, 1e-9, nu1, 1.0)
    t = np.array([0.0, 3e-13])
    lhs = probe_response(both, t, 146e-15)
    rhs = a * probe_response(e1, t, 146e-15) + b * probe_response(e2, t, 146e-15)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_noise_free_tau_zero_channels_equal():
    src = make_source(SourceSpec("coherent"), seed=1)
    s = sample_pulse_stream(src, 0.0, 20000, DetectorParams(nef=0), seed=3)
    np.testing.assert_array_equal(s.x, s.y)
    assert np.all(s.x[~s.on_mask()] == 0)


def test_noise_free_independent_of_seed():
    src = make_source(SourceSpec("coherent"), seed=1)
    a = sample_pulse_stream(src, 1e-13, 5000, DetectorParams(nef=0), seed=3)
    b = sample_pulse_stream(src, 1e-13, 5000, DetectorParams(nef=0), seed=4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_pure_noise_variance():
    src = make_source(SourceSpec("coherent", amplitude=0.0), seed=1)
    s = sample_pulse_stream(src, 0.0, 1_000_000, DET, seed=5)
    assert np.var(s.x) == pytest.approx(600.0**2, rel=0.01)
    assert np.var(s.y) == pytest.approx(600.0**2, rel=0.01)


def test_on_variance_coherent():
    src = make_source(SourceSpec("coherent", amplitude=6000.0), seed=1)
    s = sample_pulse_stream(src, 0.0, 1_000_000, DET, seed=6)
    on = s.on_mask()
    expect = (0.669 * 6000) ** 2 / 2 + 600.0**2
    assert np.mean(s.x[on] ** 2) == pytest.approx(expect, rel=0.02)


def test_off_independent_of_on():
    src = make_source(SourceSpec("coherent", amplitude=6000.0), seed=1)
    s = sample_pulse_stream(src, 0.0, 1_000_000, DET, seed=7)
    on = s.on_mask()
    n = min(on.sum(), (~on).sum())
    r = np.corrcoef(s.x[on][:n], s.x[~on][:n])[0, 1]
    assert abs(r) < 3 / math.sqrt(n)


def test_pair_with_offset_identity():
    src = make_source(SourceSpec("coherent"), seed=1)
    s = sample_pulse_stream(src, 0.0, 1000, DET, seed=1)
    p = pair_with_offset(s, s, 0)
    np.testing.assert_array_equal(p.x, s.x)
    np.testing.assert_array_equal(p.y, s.y)
    assert p.tau == s.tau


def test_pair_with_offset_shifts_delay():
    src = make_source(SourceSpec("coherent"), seed=1)
    s = sample_pulse_stream(src, 0.0, 40000, DET, seed=1)
    p = pair_with_offset(s, s, 3)
    assert p.tau == pytest.approx(3 / 90e6)
    np.testing.assert_array_equal(p.y[:10], s.y[3:13])
    # pairs straddling an ON/OFF edge are gone: 3 per edge, 4 edges inside
    assert p.n_pulses == 40000 - 3 - 4 * 3
    assert np.all((p.index % 18000 < 9000) == ((p.index + 3) % 18000 < 9000))


def test_pair_with_offset_half_period_all_mixed():
    src = make_source(SourceSpec("coherent"), seed=1)
    s = sample_pulse_stream(src, 0.0, 36000, DET, seed=1)
    with pytest.raises(ValueError):
        pair_with_offset(s, s, 9000)


def test_pair_with_offset_too_large():
    s = PulseSampleStream(0.0, np.zeros(10), np.zeros(10), DET)
    with pytest.raises(ValueError):
        pair_with_offset(s, s, 10)


def test_stream_shape_checks():
    with pytest.raises(ValueError):
        PulseSampleStream(0.0, np.zeros(3), np.zeros(4), DET)


def test_eosc_roundtrip(tmp_path):
    src = make_source(SourceSpec("coherent"), seed=1)
    s = sample_pulse_stream(src, 1.5e-13, 5000, DET, seed=2)
    path = tmp_path / "a.eosc"
    write_eosc(path, s)
    raw = path.read_bytes()
    assert raw[:4] == b"EOSC"
    assert len(raw) == 4 + 4 + 8 + 4 + 4 + 8 + 8 + 8 * 5000
    magic, ver, frep, per, duty, tau, n = struct.unpack_from("<4sIdIIdQ", raw)
    assert (ver, frep, per, duty, tau, n) == (1, 90e6, 18000, 9000, 1.5e-13, 5000)
    r = read_eosc(path)
    np.testing.assert_array_equal(r.x, s.x.astype(np.float32))
    np.testing.assert_array_equal(r.y, s.y.astype(np.float32))
    assert r.tau == s.tau and r.params.mod_period_pulses == 18000


def test_eosc_rejects_bad_files(tmp_path):
    s = PulseSampleStream(0.0, np.ones(4), np.ones(4), DET)
    p = tmp_path / "f.eosc"
    write_eosc(p, s)
    raw = bytearray(p.read_bytes())
    bad_ver = raw.copy()
    bad_ver[4:8] = struct.pack("<I", 2)
    (tmp_path / "v.eosc").write_bytes(bytes(bad_ver))
    with pytest.raises(EOSCFormatError, match="version"):
        read_eosc(tmp_path / "v.eosc")
    bad_magic = raw.copy()
    bad_magic[:4] = b"XXXX"
    (tmp_path / "m.eosc").write_bytes(bytes(bad_magic))
    with pytest.raises(EOSCFormatError, match="magic"):
        read_eosc(tmp_path / "m.eosc")
    (tmp_path / "t.eosc").write_bytes(bytes(raw[:-3]))
    with pytest.raises(EOSCFormatError):
        read_eosc(tmp_path / "t.eosc")
    (tmp_path / "h.eosc").write_bytes(bytes(raw[:10]))
    with pytest.raises(EOSCFormatError):
        read_eosc(tmp_path / "h.eosc")


def test_equivalent_time_keeps_subpulse_delays():
    # a ramp E(t) = t exposes the mapping directly
    base = FieldTrace(lambda t: np.asarray(t, float), 0.0, 200e-9, 1e12, 1.0)
    eq = equivalent_time_trace(base, 90e6)
    t = np.arange(0, 100_000, 997) / 90e6
    a = eq.sampler(t)
    assert np.all((a > 0) & (a < 200e-9))
    for tau in (-2e-12, 3e-13, 4e-9):
        np.testing.assert_allclose(eq.sampler(t + tau) - a, tau, rtol=0, atol=1e-18)


def test_equivalent_time_too_short():
    base = FieldTrace(np.cos, 0.0, 5e-9, 1e12, 1.0)
    with pytest.raises(OutOfRange):
        equivalent_time_trace(base, 90e6)
