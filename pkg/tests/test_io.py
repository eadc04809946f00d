import json

import numpy as np
import pytest

from conftest import random_spec, solved
from twomirror import demos, io
from twomirror.core import BalanceViolationError, InvalidArgumentError, UnsolvableProblemError
from twomirror.ot import solve_reflectors
from twomirror.reflector import GridSpec
from twomirror.verify import VerificationReport, verify_pair


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def grid_doc(source, target=None, **extra):
    doc = {"format_version": 1, "dimension": 2, "beta": 1.0,
           "source": source, "target": target or source}
    doc.update(extra)
    return doc


def write_pgm(path, pixels, maxval=255, binary=True):
    pixels = np.asarray(pixels)
    h, w = pixels.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        path.write_bytes(f"P5\n# test\n{w} {h}\n{maxval}\n".encode()
                         + pixels.astype(dtype).tobytes())
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in pixels)
        path.write_text(f"P2\n{w} {h}\n{maxval}\n{body}\n")
    return path


class TestLoadProblem:
    def test_single_cell(self, tmp_path):
        block = {"grid": {"origin": [0, 0], "spacing": [1, 1], "values": [[1.0]]}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        np.testing.assert_array_equal(spec.source.points, [[0.5, 0.5]])
        np.testing.assert_array_equal(spec.source.weights, [1.0])

    def test_uniform_two_by_two(self, tmp_path):
        block = {"grid": {"origin": [0, 0], "spacing": [0.5, 0.5], "shape": [2, 2],
                          "density": {"kind": "uniform", "value": 1.0}}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        assert len(spec.source) == 4
        np.testing.assert_array_equal(spec.source.weights, 0.25)
        np.testing.assert_array_equal(spec.source.points,
                                      [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])

    def test_grid_mass_exact(self, tmp_path, rng):
        vals = rng.random((5, 7))
        block = {"grid": {"origin": [0, 0], "spacing": [0.3, 0.2], "values": vals.tolist()}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        assert spec.source.total_mass == pytest.approx((vals * 0.06).sum(), rel=1e-15)

    def test_zero_cells_dropped(self, tmp_path):
        block = {"grid": {"origin": [0, 0], "spacing": [1, 1], "values": [[1.0, 0.0], [0.0, 1.0]]}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        assert len(spec.source) == 2

    def test_points_block(self, tmp_path):
        block = {"points": [{"coords": [0, 0], "weight": 1.0}, {"coords": [1, 2], "weight": 3.0}]}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        np.testing.assert_array_equal(spec.source.points, [[0, 0], [1, 2]])

    def test_negative_intensity(self, tmp_path):
        block = {"grid": {"origin": [0, 0], "spacing": [1, 1], "values": [[1.0, -1.0]]}}
        with pytest.raises(io.ProblemFileError, match="negative"):
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))

    def test_schema_error_names_field(self, tmp_path):
        block = {"grid": {"origin": [0], "spacing": [1, 1], "values": [[1.0]]}}
        with pytest.raises(io.ProblemFileError) as exc:
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        assert exc.value.field == "source.grid.origin"

    def test_json_error_has_line(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text('{\n "format_version": 1,\n "beta": ,\n}')
        with pytest.raises(io.ProblemFileError) as exc:
            io.load_problem(p)
        assert exc.value.line == 3

    def test_version_checked(self, tmp_path):
        block = {"points": [{"coords": [0, 0], "weight": 1.0}]}
        with pytest.raises(io.ProblemFileError, match="format_version"):
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(block, format_version=2)))

    def test_dimension_consistency(self, tmp_path):
        block = {"points": [{"coords": [0, 0, 0], "weight": 1.0}]}
        with pytest.raises(io.ProblemFileError):
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))

    def test_unknown_solver_key(self, tmp_path):
        block = {"points": [{"coords": [0, 0], "weight": 1.0}]}
        with pytest.raises(io.ProblemFileError, match="solver"):
            io.load_problem(write_json(tmp_path / "p.json",
                                       grid_doc(block, solver={"pivots": "x"})))

    def test_mass_mismatch(self, tmp_path):
        a = {"points": [{"coords": [0, 0], "weight": 1.0}]}
        b = {"points": [{"coords": [0, 0], "weight": 2.0}]}
        with pytest.raises(BalanceViolationError):
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(a, b)))
        pf = io.read_problem_file(write_json(tmp_path / "q.json",
                                             grid_doc(a, b, solver={"force": True})))
        assert pf.spec.rescale_factor == 0.5

    def test_d_defaults_to_beta(self, tmp_path):
        block = {"points": [{"coords": [0, 0], "weight": 1.0}]}
        pf = io.read_problem_file(write_json(tmp_path / "p.json", grid_doc(block, beta=2.5)))
        assert pf.d == 2.5


class TestPGM:
    def test_binary_8bit(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", [[0, 255], [51, 0]])
        block = {"pgm": {"path": "a.pgm", "origin": [0, 0], "spacing": [1, 1]}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        # pixel (row, col) -> (x = col, y = row)
        np.testing.assert_array_equal(spec.source.points, [[1.5, 0.5], [0.5, 1.5]])
        np.testing.assert_allclose(spec.source.weights, [1.0, 0.2])

    def test_ascii_16bit_with_gamma(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", [[1000, 500]], maxval=1000, binary=False)
        block = {"pgm": {"path": "a.pgm", "origin": [0, 0], "spacing": [1, 1], "gamma": 2.0}}
        spec = io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))
        np.testing.assert_allclose(spec.source.weights, [1.0, 0.25])

    def test_binary_16bit(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", [[65535, 0]], maxval=65535)
        pix, maxval = io.read_pgm(tmp_path / "a.pgm")
        assert maxval == 65535 and pix[0, 0] == 65535.0

    def test_all_zero_unsolvable(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.zeros((3, 3), dtype=int))
        block = {"pgm": {"path": "a.pgm", "origin": [0, 0], "spacing": [1, 1]}}
        with pytest.raises(UnsolvableProblemError):
            io.load_problem(write_json(tmp_path / "p.json", grid_doc(block)))

    def test_truncated(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(io.ProblemFileError, match="truncated"):
            io.read_pgm(tmp_path / "a.pgm")


class TestRoundTrip:
    def test_write_then_load(self, tmp_path, rng):
        spec = random_spec(rng, 9, 7)
        io.write_problem(spec, tmp_path / "p.json")
        back = io.load_problem(tmp_path / "p.json")
        np.testing.assert_array_equal(back.source.points, spec.source.points)
        np.testing.assert_array_equal(back.source.weights, spec.source.weights)
        np.testing.assert_array_equal(back.target.points, spec.target.points)
        np.testing.assert_array_equal(back.target.weights, spec.target.weights)
        assert back.beta == spec.beta

    def test_solution_roundtrip(self, tmp_path):
        spec, pair, res = solved("shift")
        io.write_solution(pair, tmp_path / "s.json", res.plan, {"method": "exact"})
        p2, plan2, meta = io.read_solution(tmp_path / "s.json")
        np.testing.assert_array_equal(p2.zeta, pair.zeta)
        np.testing.assert_array_equal(p2.omega, pair.omega)
        np.testing.assert_array_equal(plan2.mass, res.plan.mass)
        assert p2.kind is pair.kind and meta == {"method": "exact"}

    def test_corrupt_solution(self, tmp_path):
        (tmp_path / "s.json").write_text('{"kind": "A"}')
        with pytest.raises(io.ProblemFileError):
            io.read_solution(tmp_path / "s.json")

    def test_refine_document(self):
        doc = demos.gaussian2d(n=8)
        fine = io.refine_document(doc)
        assert fine["source"]["grid"]["shape"] == [16, 16]
        assert fine["source"]["grid"]["spacing"] == [0.125, 0.125]
        assert doc["source"]["grid"]["shape"] == [8, 8]

    def test_refine_needs_density(self):
        doc = grid_doc({"points": [{"coords": [0, 0], "weight": 1.0}]})
        with pytest.raises(InvalidArgumentError):
            io.refine_document(doc)


class TestMeshes:
    def test_identity_planar(self, tmp_path):
        spec, pair, _ = solved("identity")
        p1, p2, meta = io.export_meshes(pair, spec, None, tmp_path)
        for path, h in ((p1, 0.5), (p2, 0.0)):
            v = [ln.split() for ln in path.read_text().splitlines() if ln.startswith("v ")]
            np.testing.assert_allclose([float(r[3]) for r in v], h, atol=1e-12)
        m = json.loads(meta.read_text())
        assert m["beta"] == 1.0 and m["d"] == 1.0 and m["opl"] == 2.0
        assert m["gauge"] == "balanced"

    def test_counts(self, tmp_path, rng):
        spec = random_spec(rng, 10, 10)
        pair, _ = solve_reflectors(spec, "A")
        g = GridSpec((0.0, 0.0), (0.1, 0.2), (6, 4))
        p1, _, _ = io.export_meshes(pair, spec, 0.3, tmp_path, first_grid=g)
        lines = p1.read_text().splitlines()
        verts = [ln for ln in lines if ln.startswith("v ")]
        faces = [ln for ln in lines if ln.startswith("f ")]
        assert len(verts) == 24
        assert len(faces) == 2 * 5 * 3
        idx = np.array([[int(t) for t in f.split()[1:]] for f in faces])
        assert idx.min() == 1 and idx.max() == 24

    def test_deterministic(self, tmp_path):
        spec, pair, _ = solved("shift")
        a = io.export_meshes(pair, spec, 1.0, tmp_path / "a")
        b = io.export_meshes(pair, spec, 1.0, tmp_path / "b")
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()

    def test_polyline_1d(self, tmp_path):
        spec, pair, _ = solved("stretch1d", n=16)
        p1, p2, _ = io.export_meshes(pair, spec, None, tmp_path)
        lines = p1.read_text().splitlines()
        assert lines[0] == "x,height" and len(lines) == 17

    def test_unwritable(self, tmp_path):
        spec, pair, _ = solved("identity", n=4)
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            io.export_meshes(pair, spec, None, blocker / "sub")


class TestReport:
    def test_empty_report(self, tmp_path):
        io.write_report(VerificationReport(kind="A"), tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        assert d["opl_max_abs_dev"] is None
        assert d["monge_ampere_residuals"] is None
        assert "thresholds" in d and "passed" in d

    def test_roundtrip_exact(self, tmp_path):
        spec, pair, res = solved("shift")
        rep = verify_pair(pair, spec, res.plan)
        rep.metadata = {"rescale_factor": spec.rescale_factor, "x": 1 / 3}
        io.write_report(rep, tmp_path / "r.json")
        back = io.read_report(tmp_path / "r.json")
        assert back.to_dict() == rep.to_dict()
        assert back.metadata["x"] == 1 / 3

    def test_scientific_notation(self, tmp_path):
        rep = VerificationReport(kind="A", opl_max_abs_dev=0.1)
        io.write_report(rep, tmp_path / "r.json")
        assert '"opl_max_abs_dev": 1.00000000000000006e-01' in (tmp_path / "r.json").read_text()

    def test_flags_from_document_thresholds(self, tmp_path):
        rep = VerificationReport(kind="A", opl_max_abs_dev=1e-6)
        io.write_report(rep, tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        d["thresholds"]["opl"] = 1e-3
        (tmp_path / "r.json").write_text(json.dumps(d))
        assert io.read_report(tmp_path / "r.json").passed()["opl"] is True


def test_demo_shapes():
    ident = io.parse_problem(demos.identity()).spec
    np.testing.assert_array_equal(ident.source.points, ident.target.points)
    sh = io.parse_problem(demos.shift()).spec
    np.testing.assert_allclose(sh.target.points - sh.source.points, [[0.5, 0.25]] * 64)
    st = io.parse_problem(demos.stretch1d()).spec
    assert len(st.source) == 256
    assert st.source.points.min() > 0 and st.source.points.max() < 1
    assert st.target.points.max() < 2 and st.target.points.max() > 1.99
    assert st.rescale_factor == 1.0
    with pytest.raises(InvalidArgumentError, match="identity"):
        demos.demo_problem("nope")
