import csv
import json

import pytest

from kondratiev.cli import main

CONFIGS = {
    "family": "[family]\nelectrons = 3\ncomparability_samples = 200\n",
    "solve": "[solve]\nkind = radial\n[mesh]\nn = 400\n",
    "regularity": "[regularity]\nlevels = 250, 500, 1000\na_grid = 0, 1.3\n",
    "hardy": "[hardy]\nlevels = 50, 100, 200\n[isomorphism]\nn = 100\na_grid = 0, 0.3\ntrials = 2\n",
}


def run(tmp_path, command, text, name="out", extra=()):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(text)
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), "--threads", "1", *extra])
    return code, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_commands_succeed_and_reproduce(tmp_path, command):
    code, out = run(tmp_path, command, CONFIGS[command], "a")
    assert code == 0
    code2, out2 = run(tmp_path, command, CONFIGS[command], "b")
    assert code2 == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == sorted(p.name for p in out2.iterdir())
    for name in files:
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == command and summary["exit_code"] == 0


def test_family_outputs(tmp_path):
    _, out = run(tmp_path, "family", CONFIGS["family"])
    s = json.loads((out / "summary.json").read_text())["results"]
    assert len(s["members"]) == 14 and s["minimal"] == ["X1&X2&X3"]
    assert s["hyperfaces"][-1] == "scattering_infinity"
    assert len(read_csv(out / "members.csv")) == 14


def test_solve_outputs(tmp_path):
    _, out = run(tmp_path, "solve", CONFIGS["solve"])
    rows = read_csv(out / "eigenvalues.csv")
    assert float(rows[0]["eigenvalue"]) == pytest.approx(-0.25, abs=1e-4)
    s = json.loads((out / "summary.json").read_text())["results"]
    assert s["decay_rate"] == pytest.approx(0.5, abs=0.01)


def test_two_nucleus_swap_statistic(tmp_path):
    text = ("[solve]\nkind = tensor\ndump_nodal = yes\n[mesh]\nbox = 6\nbackground = 8\ncluster_depth = 3\n"
            "[potential]\npositions = -0.7,0,0; 0.7,0,0\ncharges = -1, -1\n[decay]\nr1 = 2\nr2 = 4\n")
    code, out = run(tmp_path, "solve", text)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())["results"]
    assert s["swap_asymmetry"] < 1e-2
    assert (out / "eigenfunction_0.txt").exists()


def test_regularity_outputs(tmp_path):
    _, out = run(tmp_path, "regularity", CONFIGS["regularity"])
    rows = read_csv(out / "knorms.csv")
    assert len(rows) == 6 and {r["classification"] for r in rows if r["a"] == "0.0"} == {"bounded"}


def test_config_errors_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "hardy", "[hardy]\ndimension = 2\n")
    assert code == 2
    code, _ = run(tmp_path, "family", "[family]\nmystery = 1\n", "b")
    assert code == 2
    assert main(["family", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "c")]) == 2
    assert main(["bogus", "--config", "x"]) == 2
    assert "config error" in capsys.readouterr().err


def test_convergence_failure_exit_3_with_partial_output(tmp_path):
    text = "[solve]\nkind = radial\n[mesh]\nn = 400\n[solver]\nmax_iter = 2\ntol = 1e-14\npreconditioner = none\n"
    code, out = run(tmp_path, "solve", text)
    assert code == 3
    s = json.loads((out / "summary.json").read_text())
    assert s["exit_code"] == 3 and "failure" in s["results"]
    assert len(read_csv(out / "eigenvalues.csv")) == 1


def test_seed_changes_only_seeded_outputs(tmp_path):
    _, a = run(tmp_path, "family", CONFIGS["family"], "a", ("--seed", "1"))
    _, b = run(tmp_path, "family", CONFIGS["family"], "b", ("--seed", "2"))
    assert (a / "family.json").read_bytes() == (b / "family.json").read_bytes()
    sa = json.loads((a / "summary.json").read_text())["results"]["comparability"]
    sb = json.loads((b / "summary.json").read_text())["results"]["comparability"]
    assert sa != sb
