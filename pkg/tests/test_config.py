import pytest

from thzcorr.config import DEFAULT_GAIN_RATIOS, ConfigError, parse_config

MINIMAL = "[source]\nkind = coherent\n"


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.source_kind == "coherent"
    assert cfg.seed == 0 and cfg.threads == 1
    det = cfg.detector()
    assert det.nef == 600.0 and det.mod_period_pulses == 18000
    assert det.probe_fwhm == pytest.approx(146e-15)
    assert cfg.get("correlator", "tau_step_fs") == 20.0
    assert cfg.get("sweep", "gain_ratios") == DEFAULT_GAIN_RATIOS
    assert len(DEFAULT_GAIN_RATIOS) == 20


def test_empty_config_is_valid():
    cfg = parse_config("")
    assert cfg.source_kind is None


def test_negative_step_range_error():
    text = MINIMAL + "[correlator]\ntau_step_fs = -5\n"
    with pytest.raises(ConfigError, match=r"line 4: tau_step_fs = -5 out of range"):
        parse_config(text)


def test_unknown_key_named():
    text = "[detector]\nnef_vm = 600\n"
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'nef_vm'"):
        parse_config(text)


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"line 3: unknown section \[laser\]"):
        parse_config(MINIMAL + "[laser]\nx = 1\n")


def test_missing_kind():
    with pytest.raises(ConfigError, match=r"line 1: missing required key 'kind'"):
        parse_config("[source]\nnu0_thz = 2.3\n")


def test_bad_value():
    with pytest.raises(ConfigError, match=r"line 2: bad value for 'n_pulses'"):
        parse_config("[correlator]\nn_pulses = lots\n")


def test_bad_choice():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[source]\nkind = squeezed\n")


def test_key_outside_section():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("kind = coherent\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[source]\nkind = coherent\nkind = thermal\n")


def test_cross_checks():
    with pytest.raises(ConfigError, match="duty_on_pulses"):
        parse_config("[detector]\nmod_period_pulses = 100\nduty_on_pulses = 200\n")
    with pytest.raises(ConfigError, match="odd"):
        parse_config("[source]\nkind = mb\nn_modes = 4\n")
    with pytest.raises(ConfigError, match="mode_amplitudes"):
        parse_config("[source]\nkind = multimode\nn_modes = 3\nmode_amplitudes = 1, 1\n")


def test_comments_and_case():
    cfg = parse_config("# header\n[Source]\nKIND = Thermal  # inline\n; other\nbandwidth_ghz = 80\n")
    assert cfg.source_kind == "thermal"
    assert cfg.source_spec().bandwidth == pytest.approx(80e9)


def test_units_converted():
    cfg = parse_config("[source]\nkind = mb\ngvd_fs2_per_mm = 6.24e5\ntau_photon_ps = 35\n"
                       "gain_over_threshold = 1.2\n[detector]\nf_rep_mhz = 90\n")
    p = cfg.mb_params()
    assert p.gvd == pytest.approx(6.24e5 * 1e-27)
    assert p.gain == pytest.approx(1.2 / 35e-12)
    assert cfg.detector().f_rep == 90e6


def test_taus_grid():
    cfg = parse_config("[correlator]\ntau_max_fs = 900\ntau_step_fs = 45\n")
    t = cfg.taus()
    assert t.size == 41
    assert t[0] == pytest.approx(-900e-15) and t[20] == 0.0


def test_echo_roundtrip():
    text = MINIMAL + "[experiment]\nmaster_seed = 9\n[sweep]\ngain_ratios = 0.5, 1.1\npipeline = yes\n"
    cfg = parse_config(text)
    again = parse_config(cfg.echo())
    assert again.values == cfg.values


def test_sweep_currents():
    cfg = parse_config("[sweep]\ncurrents_ma = 400, 500\n")
    assert cfg.has("sweep", "currents_ma")
    assert cfg.get("sweep", "currents_ma") == (400.0, 500.0)
