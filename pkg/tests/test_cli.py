import csv
import io
import json

import pytest

from blockcomp import cli

SMALL = """
num_rrus = 4
num_users = 2
antennas_per_rru = 4
serving_set_size = 2
subset_floor = 1
kkt_max_iters = 120
sca_max_iters = 2
blockage_density = 0.005
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_json(capsys, small_config):
    code, out, _ = run(capsys, "solve", "--config", small_config, "--seed", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["seed"] == 3 and doc["solver"] == "kkt"
    assert len(doc["beams"]) == 4 and len(doc["gammas"]) == 2
    assert doc["objective"] >= 0


def test_solve_writes_file_and_is_repeatable(tmp_path, small_config):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["solve", "--config", small_config, "--out", str(a)]) == 0
    assert cli.main(["solve", "--config", small_config, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_csv(capsys, small_config):
    code, out, _ = run(capsys, "sweep", "--config", small_config, "--drops", "2",
                       "--sweep", "L=1,2", "--baseline", "mrt")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["sweep_L"], r["solver"]) for r in rows] == [("1", "kkt"), ("1", "mrt"),
                                                            ("2", "kkt"), ("2", "mrt")]
    assert all(r["failures"] == "0" for r in rows)


def test_sweep_hybrid(capsys, small_config):
    code, out, _ = run(capsys, "sweep", "--config", small_config, "--sweep", "n_rf=2,4",
                       "--hybrid", "per_user")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["solver"] for r in rows] == ["kkt+per_user"] * 2


def test_theory_table(capsys, small_config):
    code, out, _ = run(capsys, "theory", "--config", small_config, "--drops", "2",
                       "--sweep", "eta=0,0.01", "--sweep", "L=1,2")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4
    assert float(rows[0]["theory_outage"]) == 0.0
    assert float(rows[3]["theory_outage"]) >= float(rows[2]["theory_outage"])


def test_convergence_trace(capsys, small_config):
    code, out, _ = run(capsys, "convergence", "--config", small_config, "--solver", "both")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {(r["solver"], r["init"]) for r in rows} == {
        ("kkt", "mrt"), ("kkt", "random"), ("sca", "mrt"), ("sca", "random")}


@pytest.mark.parametrize("argv", [
    ["sweep", "--sweep", "gamma=1"],
    ["sweep"],
    ["sweep", "--sweep", "L=1", "--sweep", "L=2"],
    ["theory", "--sweep", "psi=0.1"],
    ["solve", "--drops", "0"],
    ["solve", "--hybrid", "per_user", "--n-rf", "1"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    assert "config error" in err


def test_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("num_users = -1\n")
    assert run(capsys, "solve", "--config", str(bad))[0] == cli.EXIT_CONFIG
    assert run(capsys, "solve", "--config", str(tmp_path / "missing.toml"))[0] == cli.EXIT_IO


def test_solver_failure_exit_3(monkeypatch, capsys, small_config):
    def boom(*a, **k):
        raise cli.kkt.BisectionError("no root", (0.0, 1.0))

    monkeypatch.setattr(cli.kkt, "solve", boom)
    code, _, err = run(capsys, "solve", "--config", small_config)
    assert code == cli.EXIT_SOLVER and "solver failure" in err


def test_parse_sweep_numbers():
    assert cli.parse_sweep("L=1,2,3") == ("L", [1, 2, 3])
    assert cli.parse_sweep("eta=0.001,1e-2") == ("eta", [0.001, 0.01])
