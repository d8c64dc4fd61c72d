"""Built-in model catalogue, addressable from the CLI as ``builtin:<name>``."""

from __future__ import annotations

import copy

_LORENTZ = [[-1, 0], [0, 1]]

CATALOGUE = {
    "identity-quadratic": {
        "id": "identity-quadratic",
        "description": "m=2, N=1, identity metric, cubic potential",
        "m": 2, "N": 1,
        "lagrangian": {"a": [[1, 0], [0, 1]], "f": "y0^3/3 - y0^2/2 + 2*y0"},
        "symmetries": [{"kind": "translation", "mu": 0}, {"kind": "translation", "mu": 1},
                       {"kind": "rotation", "mu": 0, "nu": 1}],
    },
    "free-field": {
        "id": "free-field",
        "description": "m=2, N=1, identity metric, no potential",
        "m": 2, "N": 1,
        "lagrangian": {"a": [[1, 0], [0, 1]], "f": 0},
        "gauge": "zero",
    },
    "wave": {
        "id": "wave",
        "description": "1+1 wave equation, plane wave over one period",
        "m": 2, "N": 1,
        "lagrangian": {"a": _LORENTZ, "f": 0},
        "symmetries": [{"kind": "translation", "mu": 0},
                       {"kind": "rotation", "mu": 0, "nu": 1, "metric": _LORENTZ}],
        "grid": {"lengths": [6.283185307179586, 6.283185307179586], "counts": [256, 128], "cfl": 0.5},
        "initial": {"y": ["sin(x1)"], "p0": ["cos(x1)"]},
        "exact": {"y": ["sin(x1 - x0)"]},
        "scheme": "leapfrog",
    },
    "wave-pulse": {
        "id": "wave-pulse",
        "description": "1+1 wave equation, localized right-moving pulse",
        "m": 2, "N": 1,
        "lagrangian": {"a": _LORENTZ, "f": 0},
        "symmetries": [{"kind": "translation", "mu": 0},
                       {"kind": "rotation", "mu": 0, "nu": 1, "metric": _LORENTZ}],
        "grid": {"lengths": [6.283185307179586, 40], "counts": [2048, 1024], "cfl": 0.5},
        "initial": {"y": ["exp(-2*(x1 - 12)^2/9)"], "p0": ["-4*(x1 - 12)/9*exp(-2*(x1 - 12)^2/9)"]},
        "exact": {"y": ["exp(-2*(x1 - x0 - 12)^2/9)"]},
        "scheme": "leapfrog",
    },
    "oscillator": {
        "id": "oscillator",
        "description": "m=1 harmonic oscillator, 10^6 steps at h = 0.01",
        "m": 1, "N": 1,
        "hamiltonian": "p0_0^2/2 + y0^2/2",
        "symmetries": [{"kind": "translation", "mu": 0}],
        "grid": {"lengths": [10000], "counts": [1000000]},
        "initial": {"y": [1], "p0": [0]},
        "exact": {"y": ["cos(x0)"]},
        "scheme": "euler",
    },
    "presymplectic-toy": {
        "id": "presymplectic-toy",
        "description": "H = y^2 restricted to p = 0",
        "m": 1, "N": 1,
        "hamiltonian": "y0^2",
        "constraints": ["p0_0"],
    },
    "base-constraint": {
        "id": "base-constraint",
        "description": "H = y^2 restricted to x = 0 (no transverse field exists)",
        "m": 1, "N": 1,
        "hamiltonian": "y0^2",
        "constraints": ["x0"],
    },
    "degenerate-mechanics": {
        "id": "degenerate-mechanics",
        "description": "two coupled coordinates, one without kinetic term",
        "m": 1, "N": 2,
        "lagrangian": {"a": [[1, 0], [0, 0]], "f": "-y0^2/2 - (y0 - y1)^2/2"},
    },
}


def names() -> list:
    return sorted(CATALOGUE)


def get(name: str) -> dict:
    """A fresh copy of the named model document."""
    try:
        return copy.deepcopy(CATALOGUE[name])
    except KeyError:
        raise KeyError(f"no built-in model {name!r}; available: {', '.join(names())}") from None
