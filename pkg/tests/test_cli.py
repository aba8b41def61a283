import json

import numpy as np
import pytest

from thzcorr.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from thzcorr.eos import DetectorParams, PulseSampleStream, write_eosc


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL = ("[source]\nkind = coherent\n[correlator]\ntau_max_fs = 900\ntau_step_fs = 45\n"
         "n_pulses = 20000\n")


def test_budget_text(capsys):
    assert main(["budget"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "photons_in_window" in out and "1501.79" in out


def test_budget_json(capsys, tmp_path):
    assert main(["budget", "--json", "--field", "50", "--out", str(tmp_path)]) == EXIT_OK
    tab = json.loads(capsys.readouterr().out)
    assert tab["field_V_per_m"] == 50.0
    assert json.loads((tmp_path / "budget.json").read_text())["field_V_per_m"] == 50.0


def test_correlate_and_spectrum(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["--config", cfg, "correlate", "--out", str(out), "--seed", "4"]) == EXIT_OK
    assert (out / "correlation.csv").exists()
    assert "seed=4" in (out / "correlation.csv").read_text().splitlines()[0]
    assert main(["spectrum", str(out / "correlation.csv"), "--column", "g2_raw",
                 "--out", str(tmp_path / "s")]) == EXIT_OK
    assert (tmp_path / "s" / "spectrum_g2_raw.csv").read_text().splitlines()[2] == "freq_THz,magnitude"


def test_global_flags_either_side(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert main(["--config", cfg, "--out", str(tmp_path / "a"), "--threads", "2", "correlate"]) == EXIT_OK
    assert main(["correlate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "1"]) == EXIT_OK
    assert (tmp_path / "a" / "correlation.csv").read_bytes() == (tmp_path / "b" / "correlation.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[detector]\nnef_vm = 3\n")
    assert main(["--config", cfg, "correlate"]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_range_error_exit_code(tmp_path):
    cfg = write(tmp_path, "[source]\nkind = coherent\n[correlator]\ntau_step_fs = -5\n")
    assert main(["--config", cfg, "correlate"]) == EXIT_CONFIG


def test_bad_arguments_exit_code():
    assert main(["nonsense"]) == EXIT_CONFIG
    assert main(["budget", "--seed", "-3", "--config", "/nonexistent"]) == EXIT_IO


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["--config", str(tmp_path / "missing.ini"), "correlate"]) == EXIT_IO


def test_bad_eosc_is_io_error(tmp_path):
    bad = tmp_path / "x.eosc"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert main(["correlate", "--eosc", str(bad), "--out", str(tmp_path)]) == EXIT_IO


def test_insufficient_signal_is_numerical_failure(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("kind = coherent", "kind = coherent\namplitude_v_per_m = 0"))
    assert main(["--config", cfg, "correlate", "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "insufficient signal" in capsys.readouterr().err


def test_eosc_correlate(tmp_path):
    rng = np.random.default_rng(0)
    files = []
    for k, tau in enumerate(np.arange(-20, 21) * 45e-15):
        x = rng.normal(0, 600, 36000)
        on = (np.arange(36000) % 18000) < 9000
        x[on] += 3000 * np.cos(rng.uniform(0, 2 * np.pi, on.sum()))
        s = PulseSampleStream(float(tau), x, x + rng.normal(0, 600, 36000), DetectorParams())
        files.append(str(tmp_path / f"{k}.eosc"))
        write_eosc(files[-1], s)
    assert main(["correlate", "--eosc", *files, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "correlation.csv").exists()


def test_simulate_writes_trajectory(tmp_path):
    cfg = write(tmp_path, "[source]\nkind = mb\nduration_ns = 3\ntransient_ns = 1\n")
    assert main(["--config", cfg, "simulate", "--gain-ratio", "1.1", "--out", str(tmp_path / "o")]) == EXIT_OK
    head = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
    assert head.startswith("# t_s, re_a_-3, im_a_-3")


def test_simulate_rejects_other_source(tmp_path):
    cfg = write(tmp_path, "[source]\nkind = thermal\n")
    assert main(["--config", cfg, "simulate", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_sweep_cli(tmp_path, capsys):
    cfg = write(tmp_path, "[source]\nkind = mb\n[sweep]\ngain_ratios = 0.5, 1.1\nduration_ns = 30\n")
    assert main(["--config", cfg, "sweep", "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "sweep.csv").exists()
    assert "G/G_th" in capsys.readouterr().out
