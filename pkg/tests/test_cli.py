import json
import subprocess
import sys

import pytest

from twomirror import cli


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture
def identity_dir(tmp_path):
    prob = tmp_path / "identity.json"
    assert run("demo", "identity", "--n", 4, "-o", prob, "--quiet") == 0
    out = tmp_path / "out"
    assert run("solve", prob, "--type", "both", "--out", out, "--quiet") == 0
    return out


class TestDemo:
    def test_stdout(self, capsys):
        assert run("demo", "stretch1d") == 0
        doc = json.loads(capsys.readouterr().out)
        g = doc["source"]["grid"]
        assert doc["dimension"] == 1 and g["shape"] == [256]
        assert doc["target"]["grid"]["spacing"] == [2 / 256]

    def test_unknown(self, capsys):
        assert run("demo", "torus") == 1
        err = capsys.readouterr().err
        assert "gaussian2d" in err and "identity" in err


class TestSolve:
    def test_identity_summary(self, identity_dir):
        s = json.loads((identity_dir / "summary.json").read_text())
        a = s["solutions"]["A"]
        assert a["cost"] == 0.0
        assert a["functional"] == pytest.approx(s["total_mass"] * s["beta"] / 2, rel=1e-12)
        assert s["solutions"]["A"]["cost"] <= s["solutions"]["B"]["cost"]
        assert s["cost_A_le_cost_B"] is True

    def test_outputs_present(self, identity_dir):
        names = {p.name for p in identity_dir.iterdir()}
        for k in "AB":
            assert {f"solution_{k}.json", f"rays_{k}.csv", f"{k}_first.mesh",
                    f"{k}_second.mesh", f"{k}_meshes.json"} <= names
        assert {"problem.json", "summary.json"} <= names

    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nothing.json"
        assert run("solve", missing, "--out", tmp_path / "o") == 3
        assert str(missing) in capsys.readouterr().err

    def test_invalid_problem(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"format_version": 1, "dimension": 2, "beta": -1}')
        assert run("solve", p, "--out", tmp_path / "o", "--quiet") == 1

    def test_solver_failure(self, tmp_path):
        p = tmp_path / "p.json"
        run("demo", "identity", "--n", 4, "-o", p, "--quiet")
        doc = json.loads(p.read_text())
        doc["solver"] = {"max_points": 4}
        p.write_text(json.dumps(doc))
        assert run("solve", p, "--out", tmp_path / "o", "--quiet") == 2

    def test_reproducible(self, tmp_path):
        p = tmp_path / "p.json"
        run("demo", "shift", "--n", 4, "-o", p, "--quiet")
        for d in ("a", "b"):
            assert run("solve", p, "--type", "both", "--out", tmp_path / d, "--quiet") == 0
            assert run("verify", tmp_path / d, "--quiet", "--seed", 7) == 0
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name

    def test_json_output(self, tmp_path, capsys):
        p = tmp_path / "p.json"
        run("demo", "identity", "--n", 4, "-o", p, "--quiet")
        capsys.readouterr()
        assert run("solve", p, "--out", tmp_path / "o", "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["solutions"]["A"]["cost"] == 0.0

    def test_entropic(self, tmp_path):
        p = tmp_path / "p.json"
        run("demo", "stretch1d", "--n", 16, "-o", p, "--quiet")
        assert run("solve", p, "--method", "entropic", "--out", tmp_path / "o", "--quiet") == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["method"] == "entropic"


class TestVerify:
    def test_identity_passes(self, identity_dir):
        assert run("verify", identity_dir, "--quiet") == 0
        rep = json.loads((identity_dir / "report.json").read_text())
        for k in "AB":
            assert all(v is not False for v in rep[k]["passed"].values())
            assert rep[k]["metadata"]["rescale_factor"] == 1.0
        for f in ("residuals.csv", "mirrors_A.png", "raymap_B.png", "residuals_A.png"):
            assert (identity_dir / f).exists()

    def test_perturbed_omega_fails(self, identity_dir):
        sol = identity_dir / "solution_A.json"
        doc = json.loads(sol.read_text())
        doc["omega"][3] += 1e-3
        sol.write_text(json.dumps(doc))
        assert run("verify", identity_dir, "--quiet", "--no-plots") == 4
        rep = json.loads((identity_dir / "report.json").read_text())
        assert rep["A"]["passed"]["opl"] is False

    def test_corrupt_solution(self, identity_dir):
        (identity_dir / "solution_A.json").write_text("{not json")
        assert run("verify", identity_dir, "--quiet") == 1

    def test_missing_dir(self, tmp_path):
        assert run("verify", tmp_path / "none", "--quiet") == 3

    def test_refinements(self, tmp_path):
        p = tmp_path / "g.json"
        run("demo", "gaussian2d", "-o", p, "--quiet")
        out = tmp_path / "g"
        assert run("solve", p, "--out", out, "--quiet") == 0
        assert run("verify", out, "--refinements", 3, "--quiet") == 0
        rep = json.loads((out / "report.json").read_text())["A"]
        ma = rep["monge_ampere_residuals"]
        refl = rep["reflection_refinement_residuals"]
        assert len(ma) == 3 and ma[0] >= ma[1] >= ma[2]
        assert refl[0] > refl[1] > refl[2]
        assert (out / "convergence.png").exists()

    def test_problem_solution_mismatch(self, identity_dir):
        prob = identity_dir / "problem.json"
        doc = json.loads(prob.read_text())
        doc["source"] = {"points": [{"coords": [0.5, 0.5], "weight": 1.0}]}
        doc["target"] = doc["source"]
        prob.write_text(json.dumps(doc))
        assert run("verify", identity_dir, "--quiet") == 1

    def test_refinements_need_density(self, tmp_path):
        p = tmp_path / "p.json"
        pts = {"points": [{"coords": [0.0, 0.0], "weight": 1.0},
                          {"coords": [1.0, 0.0], "weight": 1.0}]}
        p.write_text(json.dumps({"format_version": 1, "dimension": 2, "beta": 1.0,
                                 "source": pts, "target": pts}))
        assert run("solve", p, "--out", tmp_path / "o", "--quiet") == 0
        assert run("verify", tmp_path / "o", "--refinements", 2, "--quiet") == 1


def test_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "twomirror.cli", "demo", "identity", "--n", "2"],
                       capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["source"]["grid"]["shape"] == [2, 2]
