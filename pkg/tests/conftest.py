import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from twomirror import demos, io  # noqa: E402
from twomirror.core import DiscreteMeasure, ProblemSpec, validate_problem  # noqa: E402
from twomirror.ot import solve_reflectors  # noqa: E402


@lru_cache(maxsize=None)
def demo_file(name: str, **kwargs):
    return io.parse_problem(demos.demo_problem(name, **kwargs))


def demo(name: str, **kwargs):
    return demo_file(name, **kwargs).spec


@lru_cache(maxsize=None)
def _solved(name, kind, kwargs):
    spec = demo(name, **dict(kwargs))
    pair, res = solve_reflectors(spec, kind)
    return spec, pair, res


def solved(name: str, kind: str = "A", **kwargs):
    """Cached exact solve of a demo; returns ``(spec, pair, result)``."""
    return _solved(name, kind, tuple(sorted(kwargs.items())))


def random_spec(rng, ns, nt, dim=2, beta=1.0, uniform=False):
    xs = rng.random((ns, dim))
    ps = rng.random((nt, dim)) + 0.3
    a = np.full(ns, 1.0 / ns) if uniform else rng.uniform(0.5, 1.5, ns)
    b = np.full(nt, 1.0 / nt) if uniform else rng.uniform(0.5, 1.5, nt)
    b = b * a.sum() / b.sum()
    spec = ProblemSpec(DiscreteMeasure(xs, a), DiscreteMeasure(ps, b), beta, mass_tolerance=1e-6)
    return validate_problem(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
