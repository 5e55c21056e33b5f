import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from beamlab import ModelSpec, TipBody, assemble
from beamlab import cli
from beamlab.config import SCHEMA, ConfigError, defaults, parse_config
from beamlab.spectral import SpectralError

MINIMAL = """
[run]
commands = spectrum
[model]
law = elastic
boundary = free
[discretization]
n_elements = 8
"""


def write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(tmp_path, text, *extra, out="out"):
    cfg = write(tmp_path, text)
    return cli.main(["run", str(cfg), "--out", str(tmp_path / out), *extra])


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_minimal_spectrum_conjugate_rows(tmp_path):
    assert run(tmp_path, MINIMAL) == 0
    header, data = read_csv(tmp_path / "out" / "spectrum.csv")
    assert header == ["re", "im"]
    lam = data[:, 0] + 1j * data[:, 1]
    assert len(lam) == 4 * 8
    for z in lam:
        assert np.abs(lam - np.conj(z)).min() <= 1e-10 * max(1, abs(z))


def test_report_echoes_resolved_parameters(tmp_path):
    assert run(tmp_path, MINIMAL) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["tool"] == "beamlab" and report["version"] == cli.__version__
    assert set(report["parameters"]) == set(SCHEMA)
    for section, keys in SCHEMA.items():
        assert set(report["parameters"][section]) == set(keys)
    assert report["parameters"]["tip"]["gamma_star"] == 0.5
    assert report["parameters"]["discretization"]["n_elements"] == 8
    assert report["hypothesis"] is None
    assert report["results"]["spectrum"]["abscissa"] <= 1e-8


def test_compare_kelvin_voigt_matches(tmp_path):
    text = """
[run]
commands = compare
[model]
law = kelvin_voigt
[compare]
levels = 16, 32, 64
"""
    assert run(tmp_path, text, "--assert") == 0
    res = json.loads((tmp_path / "out" / "report.json").read_text())["results"]["compare"]
    assert res["match"] is True
    assert res["plain"]["verdict"] == res["hybrid"]["verdict"] == "ExponentiallyStable"


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    text = MINIMAL + "[tip]\ngamaa = 1.0\n"
    assert run(tmp_path, text) == 1
    err = capsys.readouterr().err
    assert "gamaa" in err and "[tip]" in err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("text,needle", [
    ("[modle]\nlaw = elastic\n", "modle"),
    ("[model]\nrho = heavy\n", "rho"),
    ("[model]\nlaw = plastic\n", "law"),
    ("[model]\nrho = -1\n", "rho"),
    ("[run]\ncommands = spectrum, plot\n", "plot"),
    ("[tip]\nJ = 0\n", "[tip]"),
])
def test_config_errors_name_the_culprit(tmp_path, capsys, text, needle):
    assert run(tmp_path, text) == 1
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.ini")]) == 1
    assert "nope.ini" in capsys.readouterr().err


def test_outputs_are_deterministic(tmp_path):
    text = MINIMAL.replace("commands = spectrum", "commands = spectrum, simulate") + """
[simulate]
dt = 0.01
t_final = 1.0
"""
    assert run(tmp_path, text, out="a") == 0
    assert run(tmp_path, text, out="b") == 0
    for name in ("spectrum.csv", "energy.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_energy_csv(tmp_path):
    text = """
[run]
commands = simulate
[model]
boundary = hybrid
[discretization]
n_elements = 8
[simulate]
dt = 0.01
t_final = 2.0
initial = smooth_polynomial
"""
    assert run(tmp_path, text, "--assert") == 0
    header, data = read_csv(tmp_path / "out" / "energy.csv")
    assert header == ["t", "energy", "dissipation_cumulative", "balance_residual"]
    assert len(data) == 201
    assert np.all(np.diff(data[:, 1]) < 0)
    np.testing.assert_allclose(data[:, 1] - data[:, 2], data[0, 1], rtol=1e-10)
    assert data[:, 3].max() <= 1e-10


def test_assertion_failure_exit_code(tmp_path, capsys):
    text = MINIMAL + "[spectrum]\nexpect_abscissa_max = -1\n"
    assert run(tmp_path, text, "--assert") == 3
    assert "FAIL spectrum.abscissa" in capsys.readouterr().out
    # without --assert the same scenario succeeds
    assert run(tmp_path, text) == 0


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise SpectralError("eigensolver did not converge")

    monkeypatch.setattr(cli, "spectrum", broken)
    assert run(tmp_path, MINIMAL) == 2
    err = capsys.readouterr().err
    assert "spectrum" in err and "converge" in err


def test_resolvent_and_decay_outputs(tmp_path):
    text = """
[run]
commands = resolvent, decay
[resolvent]
n_elements = 16
points_per_decade = 10
[decay]
n_elements = 8
dt = 0.05
t_final = 100
expect_exponent = -3, 0
"""
    assert run(tmp_path, text, "--assert") == 0
    header, data = read_csv(tmp_path / "out" / "resolvent.csv")
    assert header == ["lambda", "norm"] and np.all(data[:, 1] > 0)
    assert (tmp_path / "out" / "decay_energy.csv").exists()
    res = json.loads((tmp_path / "out" / "report.json").read_text())["results"]
    assert res["resolvent"]["fitted_slope"] > 0
    assert -3 <= res["decay"]["exponent"] <= 0


def test_export_round_trip(tmp_path):
    cfg = write(tmp_path, MINIMAL.replace("boundary = free", "boundary = hybrid"))
    assert cli.main(["export-matrices", str(cfg), "--out", str(tmp_path / "mats")]) == 0
    sys_ = assemble(ModelSpec(tip=TipBody()), 8)
    np.testing.assert_array_equal(cli.read_triplets(tmp_path / "mats" / "E.txt"), sys_.E)
    np.testing.assert_array_equal(cli.read_triplets(tmp_path / "mats" / "S.txt"), sys_.S)
    layout = json.loads((tmp_path / "mats" / "layout.json").read_text())
    assert layout["tip_velocity"] == [16, 17] and layout["n_elements"] == 8


def test_triplet_header_required(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 0 1.0\n")
    with pytest.raises(ValueError, match="shape"):
        cli.read_triplets(path)


def test_parse_config_defaults_and_syntax():
    cfg = parse_config("""
[model]
law = thermo_type2   # inline comment
k_star = 2.5
[tip]
J = 0.3
[compare]
levels = 8 16 32
expect_match = no
""")
    assert cfg["model"]["k_star"] == 2.5 and cfg["tip"]["J"] == 0.3
    assert cfg["compare"]["levels"] == [8, 16, 32] and cfg["compare"]["expect_match"] is False
    spec = cfg.model_spec()
    assert spec.law.k_star == 2.5 and spec.tip.J == 0.3
    assert cfg.commands == ["spectrum"]
    assert parse_config("").resolved() == defaults()


def test_parse_config_keys_are_case_sensitive():
    with pytest.raises(ConfigError, match="'j'"):
        parse_config("[tip]\nj = 1\n")


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    proc = subprocess.run([sys.executable, "-m", "beamlab", "run", str(cfg), "--out", str(tmp_path / "o"), "--assert"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS spectrum.abscissa" in proc.stdout
