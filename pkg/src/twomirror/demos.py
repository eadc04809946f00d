"""Canonical problem documents used by the CLI and the test-suite."""

from __future__ import annotations

import math

from .core import InvalidArgumentError
from .io import FORMAT_VERSION


def _grid(origin, spacing, shape, density):
    return {"grid": {"origin": list(origin), "spacing": list(spacing), "shape": list(shape),
                     "density": density}}


def identity(n: int = 8, beta: float = 1.0) -> dict:
    """Uniform square ``[0, 1]^2`` mapped onto itself."""
    h = 1.0 / n
    block = _grid((0.0, 0.0), (h, h), (n, n), {"kind": "uniform", "value": 1.0})
    return {"format_version": FORMAT_VERSION, "dimension": 2, "beta": beta,
            "source": block, "target": block}


def shift(n: int = 8, beta: float = 1.0, offset=(0.5, 0.25)) -> dict:
    """Uniform square translated by ``offset``."""
    h = 1.0 / n
    dens = {"kind": "uniform", "value": 1.0}
    return {"format_version": FORMAT_VERSION, "dimension": 2, "beta": beta,
            "source": _grid((0.0, 0.0), (h, h), (n, n), dens),
            "target": _grid(tuple(offset), (h, h), (n, n), dens)}


def stretch1d(n: int = 256, beta: float = 1.0) -> dict:
    """Uniform ``[0, 1]`` onto uniform ``[0, 2]`` with half the intensity."""
    return {"format_version": FORMAT_VERSION, "dimension": 1, "beta": beta,
            "source": _grid((0.0,), (1.0 / n,), (n,), {"kind": "uniform", "value": 1.0}),
            "target": _grid((0.0,), (2.0 / n,), (n,), {"kind": "uniform", "value": 0.5})}


def gaussian2d(n: int = 8, beta: float = 2.0, sigma: float = 0.5) -> dict:
    """Gaussian beam on ``[-1, 1]^2`` spread to a uniform square of equal power."""
    h = 2.0 / n
    power = 2.0 * math.pi * sigma**2 * math.erf(1.0 / (sigma * math.sqrt(2.0))) ** 2
    return {"format_version": FORMAT_VERSION, "dimension": 2, "beta": beta,
            "mass_tolerance": 0.05,
            "source": _grid((-1.0, -1.0), (h, h), (n, n),
                            {"kind": "gaussian", "amplitude": 1.0, "center": [0.0, 0.0],
                             "sigma": sigma}),
            "target": _grid((-1.0, -1.0), (h, h), (n, n), {"kind": "uniform", "value": power / 4.0})}


DEMOS = {"identity": identity, "shift": shift, "stretch1d": stretch1d,
         "gaussian2d": gaussian2d}


def demo_problem(name: str, **kwargs) -> dict:
    """Problem document for a named demo."""
    try:
        return DEMOS[name](**kwargs)
    except KeyError:
        raise InvalidArgumentError(
            f"unknown demo {name!r}; choose one of {', '.join(sorted(DEMOS))}") from None
