"""Problem files, solution files, meshes and reports.

Problem file (JSON, ``format_version: 1``)::

    {
      "format_version": 1,
      "dimension": 2,
      "beta": 1.0,
      "d": 1.0,                      # optional, defaults to beta
      "mass_tolerance": 0.01,        # optional
      "source": <measure block>,
      "target": <measure block>,
      "solver": {"method": "exact", "type": "A", "pivot": "block",
                 "epsilon": 1e-3, "max_iters": 20000, "tol": 1e-10,
                 "max_points": 5000, "seed": 0, "force": false,
                 "gauge": "balanced"}
    }

A measure block holds exactly one of

* ``"grid"``: ``origin`` (lower corner), ``spacing``, and either ``values``
  (nested lists, axis 0 = first coordinate) or ``shape`` plus ``density``;
  cell ``idx`` becomes the point ``origin + (idx + 0.5) * spacing`` with weight
  ``intensity * prod(spacing)``.
* ``"points"``: list of ``{"coords": [...], "weight": w}``.
* ``"pgm"``: ``path`` (relative to the problem file), ``origin``, ``spacing``,
  optional ``gamma`` (default 1) and ``scale`` (default 1); pixel ``(row, col)``
  maps to the point with first coordinate from ``col`` and second from ``row``.

Densities: ``{"kind": "uniform", "value": v}`` or
``{"kind": "gaussian", "amplitude": A, "center": [...], "sigma": s}``.
Uniform densities vanish outside the grid's box.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (
    DiscreteMeasure,
    InvalidArgumentError,
    Kind,
    ProblemSpec,
    ReflectorPair,
    TransportPlan,
    TwoMirrorError,
    validate_problem,
)
from .reflector import GridSpec, export_sampling

FORMAT_VERSION = 1

SOLVER_DEFAULTS = {
    "method": "exact",
    "type": "A",
    "pivot": "block",
    "epsilon": 1e-3,
    "max_iters": 20000,
    "tol": 1e-10,
    "max_points": 5000,
    "seed": 0,
    "force": False,
    "gauge": "balanced",
}


class ProblemFileError(TwoMirrorError):
    """Malformed problem, solution or report document."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


# ---------------------------------------------------------------------------
# densities and measure blocks
# ---------------------------------------------------------------------------

def make_density(desc: dict, box: tuple[np.ndarray, np.ndarray] | None = None,
                 where: str = "density") -> Callable[[np.ndarray], np.ndarray]:
    """Callable ``f(points) -> intensities`` for a density descriptor."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ProblemFileError("density needs a 'kind'", where)
    kind = desc["kind"]
    if kind == "uniform":
        value = _number(desc.get("value", 1.0), f"{where}.value")
        if value < 0:
            raise ProblemFileError("negative intensity", f"{where}.value")

        def f(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
            out = np.full(len(pts), value)
            if box is not None:
                lo, hi = box
                eps = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
                inside = np.all((pts >= lo - eps) & (pts <= hi + eps), axis=1)
                out = np.where(inside, out, 0.0)
            return out
        return f
    if kind == "gaussian":
        amp = _number(desc.get("amplitude", 1.0), f"{where}.amplitude")
        sigma = _number(desc.get("sigma"), f"{where}.sigma")
        center = np.asarray(desc.get("center"), dtype=np.float64)
        if amp < 0 or sigma <= 0:
            raise ProblemFileError("gaussian needs amplitude >= 0 and sigma > 0", where)

        def f(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
            r2 = ((pts - center) ** 2).sum(axis=1)
            return amp * np.exp(-0.5 * r2 / sigma**2)
        return f
    raise ProblemFileError(f"unknown density kind {kind!r}", f"{where}.kind")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemFileError("expected a number", where)
    v = float(v)
    if not math.isfinite(v):
        raise ProblemFileError("expected a finite number", where)
    return v


def _vector(v, n: int, where: str) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ProblemFileError(f"expected a list of {n} numbers", where)
    return np.array([_number(x, f"{where}[{k}]") for k, x in enumerate(v)])


def _grid_block(g: dict, n: int, where: str, base: Path | None = None):
    origin = _vector(g.get("origin"), n, f"{where}.origin")
    spacing = _vector(g.get("spacing"), n, f"{where}.spacing")
    if np.any(spacing <= 0):
        raise ProblemFileError("spacing must be positive", f"{where}.spacing")
    if "values" in g:
        try:
            values = np.asarray(g["values"], dtype=np.float64)
        except (TypeError, ValueError):
            raise ProblemFileError("values must be a rectangular array of numbers",
                                   f"{where}.values") from None
        if values.ndim != n:
            raise ProblemFileError(f"values must be {n}-dimensional", f"{where}.values")
        shape = values.shape
    elif "density" in g:
        shape = tuple(int(s) for s in _vector(g.get("shape"), n, f"{where}.shape"))
        if any(s < 1 for s in shape):
            raise ProblemFileError("shape must be positive", f"{where}.shape")
        values = None
    else:
        raise ProblemFileError("grid needs 'values' or 'shape' + 'density'", where)
    cell = GridSpec(tuple(origin + 0.5 * spacing), tuple(spacing), shape)
    pts = cell.nodes()
    box = (origin, origin + spacing * np.asarray(shape))
    density = None
    if values is None:
        density = make_density(g["density"], box, f"{where}.density")
        values = density(pts).reshape(shape)
    if not np.all(np.isfinite(values)):
        raise ProblemFileError("intensities must be finite", f"{where}.values")
    if np.any(values < 0):
        raise ProblemFileError("negative intensity", f"{where}.values")
    weights = values.ravel() * float(np.prod(spacing))
    return pts, weights, cell, density


def read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) or ASCII (P2) PGM; returns ``(pixels, maxval)``."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ProblemFileError("truncated PGM header", str(path))
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ProblemFileError("bad PGM header", str(path)) from None
    if not 0 < maxval < 65536:
        raise ProblemFileError("PGM maxval out of range", str(path))
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos + 1:pos + 1 + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise ProblemFileError("truncated PGM pixel data", str(path))
        pix = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    elif magic == b"P2":
        vals = data[pos:].split()
        if len(vals) < width * height:
            raise ProblemFileError("truncated PGM pixel data", str(path))
        pix = np.array([int(v) for v in vals[:width * height]]).reshape(height, width)
    else:
        raise ProblemFileError(f"unsupported PGM magic {magic!r}", str(path))
    return pix.astype(np.float64), maxval


def _pgm_block(g: dict, n: int, where: str, base: Path | None):
    if n != 2:
        raise ProblemFileError("pgm blocks need dimension 2", where)
    if "path" not in g:
        raise ProblemFileError("missing path", f"{where}.path")
    path = Path(g["path"])
    if base is not None and not path.is_absolute():
        path = base / path
    origin = _vector(g.get("origin"), 2, f"{where}.origin")
    spacing = _vector(g.get("spacing"), 2, f"{where}.spacing")
    if np.any(spacing <= 0):
        raise ProblemFileError("spacing must be positive", f"{where}.spacing")
    gamma = _number(g.get("gamma", 1.0), f"{where}.gamma")
    scale = _number(g.get("scale", 1.0), f"{where}.scale")
    pix, maxval = read_pgm(path)
    values = scale * (pix / maxval) ** gamma
    rows, cols = np.indices(pix.shape)
    pts = np.stack([origin[0] + (cols.ravel() + 0.5) * spacing[0],
                    origin[1] + (rows.ravel() + 0.5) * spacing[1]], axis=1)
    return pts, values.ravel() * float(np.prod(spacing)), None, None


def _points_block(items, n: int, where: str):
    if not isinstance(items, list) or not items:
        raise ProblemFileError("points must be a nonempty list", where)
    pts = np.empty((len(items), n))
    w = np.empty(len(items))
    for k, it in enumerate(items):
        if not isinstance(it, dict):
            raise ProblemFileError("expected {coords, weight}", f"{where}[{k}]")
        pts[k] = _vector(it.get("coords"), n, f"{where}[{k}].coords")
        w[k] = _number(it.get("weight"), f"{where}[{k}].weight")
        if w[k] < 0:
            raise ProblemFileError("negative intensity", f"{where}[{k}].weight")
    return pts, w


@dataclass
class MeasureInfo:
    """What a measure block resolved to, beyond the points themselves."""

    grid: GridSpec | None = None
    density: Callable | None = None


def _measure(block, n: int, where: str, base: Path | None):
    if not isinstance(block, dict):
        raise ProblemFileError("expected an object", where)
    keys = [k for k in ("grid", "points", "pgm") if k in block]
    if len(keys) != 1:
        raise ProblemFileError("need exactly one of grid/points/pgm", where)
    key = keys[0]
    if key == "grid":
        pts, w, cell, dens = _grid_block(block["grid"], n, f"{where}.grid")
        return DiscreteMeasure(pts, w), MeasureInfo(cell, dens)
    if key == "points":
        pts, w = _points_block(block["points"], n, f"{where}.points")
        return DiscreteMeasure(pts, w), MeasureInfo()
    pts, w, _, _ = _pgm_block(block["pgm"], n, f"{where}.pgm", base)
    return DiscreteMeasure(pts, w), MeasureInfo()


@dataclass
class ProblemFile:
    doc: dict
    spec: ProblemSpec
    d: float
    solver: dict
    source_info: MeasureInfo = field(default_factory=MeasureInfo)
    target_info: MeasureInfo = field(default_factory=MeasureInfo)
    path: Path | None = None

    def densities(self):
        """Analytic ``(I, L)`` after mass normalization, or ``None`` if not analytic."""
        I, L = self.source_info.density, self.target_info.density
        if I is None or L is None:
            return None
        k = self.spec.rescale_factor
        return I, (lambda p: k * L(p))


def parse_problem(doc: dict, base: Path | None = None, *, force: bool | None = None) -> ProblemFile:
    if not isinstance(doc, dict):
        raise ProblemFileError("problem document must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ProblemFileError(f"unsupported format_version {version!r}", "format_version")
    n = doc.get("dimension")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ProblemFileError("dimension must be a positive integer", "dimension")
    beta = _number(doc.get("beta"), "beta")
    if beta <= 0:
        raise ProblemFileError("beta must be positive", "beta")
    d = _number(doc.get("d", beta), "d")
    tol = _number(doc.get("mass_tolerance", 1e-2), "mass_tolerance")
    solver = dict(SOLVER_DEFAULTS)
    extra = doc.get("solver", {})
    if not isinstance(extra, dict):
        raise ProblemFileError("solver must be an object", "solver")
    unknown = set(extra) - set(SOLVER_DEFAULTS)
    if unknown:
        raise ProblemFileError(f"unknown solver keys {sorted(unknown)}", "solver")
    solver.update(extra)
    if solver["method"] not in ("exact", "entropic"):
        raise ProblemFileError("method must be 'exact' or 'entropic'", "solver.method")
    if solver["type"] not in ("A", "B", "both"):
        raise ProblemFileError("type must be A, B or both", "solver.type")
    src, sinfo = _measure(doc.get("source"), n, "source", base)
    tgt, tinfo = _measure(doc.get("target"), n, "target", base)
    spec = ProblemSpec(src, tgt, beta, mass_tolerance=tol)
    spec = validate_problem(spec, force=bool(solver["force"] if force is None else force))
    return ProblemFile(doc, spec, d, solver, sinfo, tinfo, None)


def read_problem_file(path, *, force: bool | None = None) -> ProblemFile:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    pf = parse_problem(doc, path.parent, force=force)
    pf.path = path
    return pf


def load_problem(path) -> ProblemSpec:
    """Parse and validate a problem file."""
    return read_problem_file(path).spec


def problem_document(spec: ProblemSpec, d: float | None = None, solver: dict | None = None) -> dict:
    """Point-list problem document reproducing ``spec`` exactly."""
    def block(m: DiscreteMeasure):
        return {"points": [{"coords": p.tolist(), "weight": float(w)}
                           for p, w in zip(m.points, m.weights)]}

    doc = {"format_version": FORMAT_VERSION, "dimension": spec.dim, "beta": spec.beta,
           "mass_tolerance": spec.mass_tolerance,
           "source": block(spec.source), "target": block(spec.target)}
    if d is not None:
        doc["d"] = d
    if solver:
        doc["solver"] = solver
    return doc


def write_problem(spec: ProblemSpec, path, d: float | None = None, solver: dict | None = None):
    Path(path).write_text(json.dumps(problem_document(spec, d, solver), indent=1) + "\n")


def refine_document(doc: dict, factor: int = 2) -> dict:
    """Subdivide every density-defined grid block ``factor`` times per axis."""
    out = copy.deepcopy(doc)
    for side in ("source", "target"):
        g = out.get(side, {}).get("grid")
        if g is None or "density" not in g:
            raise InvalidArgumentError(f"{side} is not a density-defined grid; cannot refine")
        g["spacing"] = [s / factor for s in g["spacing"]]
        g["shape"] = [int(s) * factor for s in g["shape"]]
    return out


# ---------------------------------------------------------------------------
# structured documents with full-precision numbers
# ---------------------------------------------------------------------------

def _fmt(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "null"
        return f"{v:.17e}"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) == 0:
            return "[]"
        items = [_fmt(x, indent, level + 1) for x in v]
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in v):
            return "[" + ", ".join(items) + "]"
        return "[\n" + ",\n".join(pad + s for s in items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_exact(obj) -> str:
    """JSON text with every float in 17-digit scientific notation."""
    return _fmt(obj, 2, 0) + "\n"


def write_report(report, path) -> Path:
    """Serialize a :class:`~twomirror.verify.VerificationReport` (or a dict of them)."""
    path = Path(path)
    if hasattr(report, "to_dict"):
        body = report.to_dict()
    else:
        body = {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in report.items()}
    path.write_text(dumps_exact(body))
    return path


def read_report(path):
    from .verify import VerificationReport

    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if "kind" in doc:
        return VerificationReport.from_dict(doc)
    return {k: (VerificationReport.from_dict(v) if isinstance(v, dict) and "kind" in v else v)
            for k, v in doc.items()}


# ---------------------------------------------------------------------------
# solutions and meshes
# ---------------------------------------------------------------------------

def solution_document(pair: ReflectorPair, plan: TransportPlan | None = None,
                      meta: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": pair.kind.value,
        "beta": pair.beta,
        "gauge": pair.gauge,
        "source_points": pair.source_points.tolist(),
        "target_points": pair.target_points.tolist(),
        "zeta": pair.zeta.tolist(),
        "omega": pair.omega.tolist(),
    }
    if plan is not None:
        doc["plan"] = {"n_source": plan.n_source, "n_target": plan.n_target,
                       "rows": plan.rows.tolist(), "cols": plan.cols.tolist(),
                       "mass": plan.mass.tolist(), "cost": plan.cost}
    if meta:
        doc["meta"] = meta
    return doc


def write_solution(pair: ReflectorPair, path, plan: TransportPlan | None = None,
                   meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(solution_document(pair, plan, meta)) + "\n")
    return path


def read_solution(path) -> tuple[ReflectorPair, TransportPlan | None, dict]:
    try:
        doc = json.loads(Path(path).read_text())
        pair = ReflectorPair(doc["source_points"], doc["target_points"], doc["zeta"],
                             doc["omega"], doc["beta"], Kind(doc["kind"]), doc.get("gauge", "none"))
        plan = None
        if "plan" in doc:
            p = doc["plan"]
            plan = TransportPlan(p["rows"], p["cols"], p["mass"], p["n_source"],
                                 p["n_target"], p["cost"])
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"corrupt solution file: {exc}", str(path)) from None
    return pair, plan, doc.get("meta", {})


def _write_mesh(path: Path, grid: GridSpec, heights: np.ndarray):
    nodes = grid.nodes()
    h = np.ravel(heights)
    r, c = grid.shape
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for (x, y), z in zip(nodes, h)]
    for i in range(r - 1):
        for j in range(c - 1):
            v00 = i * c + j + 1
            v01 = v00 + 1
            v10 = v00 + c
            v11 = v10 + 1
            lines.append(f"f {v00} {v10} {v11}")
            lines.append(f"f {v00} {v11} {v01}")
    path.write_text("\n".join(lines) + "\n")


def _write_polyline(path: Path, grid: GridSpec, heights: np.ndarray):
    xs = grid.axes()[0]
    lines = ["x,height"] + [f"{x:.17g},{z:.17g}" for x, z in zip(xs, np.ravel(heights))]
    path.write_text("\n".join(lines) + "\n")


def export_meshes(pair: ReflectorPair, spec: ProblemSpec | None, d: float | None, out_dir,
                  first_grid: GridSpec | None = None, second_grid: GridSpec | None = None,
                  prefix: str = "") -> list[Path]:
    """Write both mirrors as height-field meshes (2D) or polylines (1D) plus a metadata sidecar.

    Mesh lines are ``v x1 x2 height`` and ``f a b c`` with 1-based vertex
    indices; each grid cell is split into two triangles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = pair.source_points.shape[1]
    if n not in (1, 2):
        raise InvalidArgumentError("mesh export supports dimensions 1 and 2")
    d = pair.beta if d is None else float(d)
    (g1, z), (g2, w) = export_sampling(pair, first_grid, second_grid)
    if n == 2:
        p1, p2 = out / f"{prefix}first.mesh", out / f"{prefix}second.mesh"
        _write_mesh(p1, g1, z)
        _write_mesh(p2, g2, w)
    else:
        p1, p2 = out / f"{prefix}first.csv", out / f"{prefix}second.csv"
        _write_polyline(p1, g1, z)
        _write_polyline(p2, g2, w)
    meta = {"kind": pair.kind.value, "beta": pair.beta, "d": d, "opl": pair.beta + d,
            "gauge": pair.gauge,
            "first_grid": {"origin": g1.origin, "spacing": g1.spacing, "shape": g1.shape},
            "second_grid": {"origin": g2.origin, "spacing": g2.spacing, "shape": g2.shape}}
    if spec is not None:
        meta["rescale_factor"] = spec.rescale_factor
    p3 = out / f"{prefix}meshes.json"
    p3.write_text(dumps_exact(meta))
    return [p1, p2, p3]
