"""JSON model files: schema validation and construction of the runtime objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import sympy

from .bundle import Connection, HamiltonianSystem, LegendreMap, QuadraticLagrangian, build_hamiltonian_system, \
    legendre_map
from .errors import CoordinateDomainError, EvaluationError, ModelError
from .expr import CoordSystem, Space, parse
from .integrator import GridSpec
from .noether import SymmetryCandidate, base_vector, canonical_lift, rotation, scaled, translation
from .exterior import MultiVec

_EXPR = {"oneOf": [{"type": "string"}, {"type": "number"}]}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _EXPR}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["m", "N"],
    "properties": {
        "id": {"type": "string"},
        "description": {"type": "string"},
        "m": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "hamiltonian": _EXPR,
        "lagrangian": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a"],
            "properties": {"a": _MATRIX, "gamma": _MATRIX, "f": _EXPR},
        },
        "connection": _MATRIX,
        "symmetries": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["translation", "rotation", "lift", "vector"]},
                    "label": {"type": "string"},
                    "mu": {"type": "integer", "minimum": 0},
                    "nu": {"type": "integer", "minimum": 0},
                    "metric": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                    "components": {"type": "object", "additionalProperties": _EXPR},
                    "scale": _EXPR,
                },
            },
        },
        "constraints": {"type": "array", "items": _EXPR},
        "gauge": {"oneOf": [{"enum": ["default", "zero", "random"]},
                            {"type": "object", "additionalProperties": _EXPR}]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lengths", "counts"],
            "properties": {
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 1},
                "cfl": {"type": "number", "exclusiveMinimum": 0},
                "snapshot_every": {"type": "integer", "minimum": 0},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["y", "p0"],
            "properties": {"y": {"type": "array", "items": _EXPR}, "p0": {"type": "array", "items": _EXPR}},
        },
        "exact": {
            "type": "object",
            "additionalProperties": False,
            "required": ["y"],
            "properties": {"y": {"type": "array", "items": _EXPR}},
        },
        "scheme": {"enum": ["euler", "leapfrog"]},
        "seed": {"type": "integer", "minimum": 0},
        "max_gen": {"type": "integer", "minimum": 1},
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
    "oneOf": [{"required": ["hamiltonian"]}, {"required": ["lagrangian"]}],
}


def _pointer(parts) -> str:
    return "/" + "/".join(str(p) for p in parts) if parts else ""


@dataclass
class Model:
    id: str
    doc: dict
    system: HamiltonianSystem | None
    lagrangian: QuadraticLagrangian | None = None
    legendre: LegendreMap | None = None
    symmetries: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    gauge: object = "default"
    grid: GridSpec | None = None
    snapshot_every: int = 0
    initial: dict | None = None
    exact: list | None = None
    scheme: str = "euler"
    seed: int = 0
    max_gen: int = 8
    singular_lagrangian: bool = False


def _expr(value, path, coords: CoordSystem | None = None):
    try:
        return parse(value if isinstance(value, str) else value, coords)
    except CoordinateDomainError as exc:
        raise ModelError(str(exc), path) from exc
    except EvaluationError as exc:
        raise ModelError(str(exc), path) from exc


def _matrix(rows, path, rows_n, cols_n, coords=None):
    if len(rows) != rows_n or any(len(r) != cols_n for r in rows):
        raise ModelError(f"expected a {rows_n}x{cols_n} table", path)
    return [[_expr(v, f"{path}/{i}/{j}", coords) for j, v in enumerate(r)] for i, r in enumerate(rows)]


def validate(doc: dict) -> None:
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        msg = e.message
        if e.validator == "oneOf" and not e.absolute_path:
            msg = "exactly one of 'hamiltonian' or 'lagrangian' is required"
        raise ModelError(msg, _pointer(e.absolute_path))


def load_model(source, name: str | None = None) -> Model:
    """Build a :class:`Model` from a file path or an already-parsed dict."""
    if isinstance(source, dict):
        doc = source
    else:
        p = Path(source)
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid JSON: {exc}", "") from exc
        name = name or p.stem
    if not isinstance(doc, dict):
        raise ModelError("model file must be a JSON object", "")
    validate(doc)
    m, N = doc["m"], doc["N"]
    mm = CoordSystem(m, N, Space.MULTIMOMENTUM)
    model = Model(doc.get("id", name or "model"), doc, None)
    model.seed = doc.get("seed", 0)
    model.scheme = doc.get("scheme", "euler")
    model.max_gen = doc.get("max_gen", 8)
    if "lagrangian" in doc:
        if "connection" in doc:
            raise ModelError("a Lagrangian model takes its connection from gamma", "/connection")
        lag = doc["lagrangian"]
        jet_like = CoordSystem(m, N, Space.TOTAL)
        a = _matrix(lag["a"], "/lagrangian/a", m * N, m * N, jet_like)
        gamma = _matrix(lag.get("gamma", [[0] * N for _ in range(m)]), "/lagrangian/gamma", m, N, jet_like)
        f = _expr(lag.get("f", 0), "/lagrangian/f", jet_like)
        try:
            L = QuadraticLagrangian(m, N, sympy.Matrix(a), tuple(tuple(r) for r in gamma), f)
        except ValueError as exc:
            raise ModelError(str(exc), "/lagrangian") from exc
        except CoordinateDomainError as exc:
            raise ModelError(str(exc), "/lagrangian") from exc
        model.lagrangian = L
        if sympy.Matrix(L.a).det() == 0:
            model.singular_lagrangian = True
        else:
            model.legendre = legendre_map(L, seed=model.seed)
            model.system = model.legendre.system
            model.system.name = model.id
    else:
        H = _expr(doc["hamiltonian"], "/hamiltonian")
        nabla = None
        if "connection" in doc:
            gam = _matrix(doc["connection"], "/connection", m, N)
            try:
                nabla = Connection(m, N, tuple(tuple(r) for r in gam))
            except CoordinateDomainError as exc:
                raise ModelError(str(exc), "/connection") from exc
        model.system = build_hamiltonian_system(H, nabla, m, N, name=model.id)
    model.constraints = [_expr(c, f"/constraints/{i}", mm) for i, c in enumerate(doc.get("constraints", []))]
    g = doc.get("gauge", "default")
    if isinstance(g, dict):
        g = {k: _expr(v, f"/gauge/{k}", mm) for k, v in g.items()}
    model.gauge = g
    if "grid" in doc:
        gr = doc["grid"]
        if len(gr["lengths"]) != m or len(gr["counts"]) != m:
            raise ModelError(f"grid needs {m} lengths and counts (axis 0 is evolution)", "/grid")
        try:
            model.grid = GridSpec(tuple(gr["lengths"]), tuple(gr["counts"]), gr.get("cfl", 0.5))
        except ValueError as exc:
            raise ModelError(str(exc), "/grid") from exc
        model.snapshot_every = gr.get("snapshot_every", 0)
    base = CoordSystem(m, N, Space.BASE)
    if "initial" in doc:
        ini = doc["initial"]
        if len(ini["y"]) != N or len(ini["p0"]) != N:
            raise ModelError(f"initial data needs {N} entries for y and p0", "/initial")
        model.initial = {
            "y": [_expr(v, f"/initial/y/{i}", base) for i, v in enumerate(ini["y"])],
            "p0": [_expr(v, f"/initial/p0/{i}", base) for i, v in enumerate(ini["p0"])],
        }
    if "exact" in doc:
        if len(doc["exact"]["y"]) != N:
            raise ModelError(f"exact solution needs {N} entries", "/exact/y")
        model.exact = [_expr(v, f"/exact/y/{i}", base) for i, v in enumerate(doc["exact"]["y"])]
    if model.system is not None:
        model.symmetries = [_symmetry(s, f"/symmetries/{i}", model.system, base)
                            for i, s in enumerate(doc.get("symmetries", []))]
    return model


def _symmetry(spec: dict, path: str, sys: HamiltonianSystem, base: CoordSystem) -> SymmetryCandidate:
    m = sys.m
    kind = spec["kind"]
    for key in ("mu", "nu"):
        if key in spec and spec[key] >= m:
            raise ModelError(f"{key}={spec[key]} out of range for m={m}", f"{path}/{key}")
    if kind == "translation":
        if "mu" not in spec:
            raise ModelError("translation needs mu", path)
        cand = translation(sys, spec["mu"])
    elif kind == "rotation":
        if "mu" not in spec or "nu" not in spec:
            raise ModelError("rotation needs mu and nu", path)
        cand = rotation(sys, spec["mu"], spec["nu"], spec.get("metric"))
    elif kind in ("lift", "vector"):
        comps = spec.get("components")
        if not comps:
            raise ModelError(f"{kind} needs components", f"{path}/components")
        coords = base if kind == "lift" else sys.coords
        vals = {}
        for k, v in comps.items():
            if k not in coords:
                raise ModelError(f"{k} is not a coordinate of {coords}", f"{path}/components/{k}")
            vals[k] = _expr(v, f"{path}/components/{k}", coords)
        if kind == "lift":
            cand = canonical_lift(base_vector(coords, vals), sys)
        else:
            cand = SymmetryCandidate(MultiVec.vector(sys.coords, vals), provenance="user")
    else:  # pragma: no cover - the schema forbids it
        raise ModelError(f"unknown symmetry kind {kind}", f"{path}/kind")
    if "scale" in spec:
        cand = scaled(cand, _expr(spec["scale"], f"{path}/scale", sys.coords))
    if "label" in spec:
        cand.label = spec["label"]
    elif not cand.label:
        cand.label = f"{kind}{path.rsplit('/', 1)[-1]}"
    return cand
