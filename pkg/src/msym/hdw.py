"""HDW multivector fields: coefficient solvers, gauge handling, verification, curvature.

Layout: ``F[mu][A]`` is the dy^A-component of factor mu; ``G[mu][rho][A]`` is
the dp^rho_A-component of factor mu (written G^rho_{A mu}).  Gauge slots are
keyed ``"G<rho>_<A>_<mu>"``.
"""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from enum import Enum

import sympy

from .bundle import HamiltonianSystem
from .errors import GaugeError, InternalConsistencyError
from .expr import canonical, evaluate, is_structurally_zero, to_text
from .errors import NumericDomainError
from .exterior import MultiVec, contract, vector_bracket, volume


def count_freedom(m: int, N: int) -> int:
    if m < 1 or N < 1:
        raise ValueError("m and N must be positive")
    return N * (m * m - 1)


def slot_name(rho: int, a: int, mu: int) -> str:
    return f"G{rho}_{a}_{mu}"


_SLOT_RE = re.compile(r"^G(\d+)_(\d+)_(\d+)$")


def parse_slot(key) -> tuple:
    """(rho, A, mu) from a slot name or tuple."""
    if isinstance(key, tuple) and len(key) == 3:
        return tuple(int(k) for k in key)
    mt = _SLOT_RE.match(str(key))
    if not mt:
        raise GaugeError(f"malformed gauge slot {key!r}", [key])
    return tuple(int(g) for g in mt.groups())


def determined_slots(m: int, N: int) -> list:
    return [(m - 1, a, m - 1) for a in range(N)]


def free_slots(m: int, N: int) -> list:
    det = set(determined_slots(m, N))
    return [(rho, a, mu) for mu in range(m) for rho in range(m) for a in range(N) if (rho, a, mu) not in det]


def solve_F(sys: HamiltonianSystem) -> list:
    """F^A_mu = dH/dp^mu_A + Gamma^A_mu."""
    c = sys.coords
    return [[canonical(sympy.diff(sys.H, c.p[mu][a]) + sys.connection[mu, a]) for a in range(c.N)]
            for mu in range(c.m)]


def trace_target(sys: HamiltonianSystem) -> list:
    """Required value of sum_mu G^mu_{A mu}: -dH/dy^A - p^nu_B dGamma^B_nu/dy^A."""
    c = sys.coords
    out = []
    for a in range(c.N):
        ya = c.y[a]
        t = -sympy.diff(sys.H, ya)
        for nu in range(c.m):
            for b in range(c.N):
                t -= c.p[nu][b] * sympy.diff(sys.connection[nu, b], ya)
        out.append(canonical(t))
    return out


def default_gauge(sys: HamiltonianSystem) -> dict:
    """Off-trace entries zero, trace split evenly over the diagonal."""
    m, N = sys.m, sys.N
    trace = trace_target(sys)
    return {slot_name(*s): (canonical(trace[s[1]] / m) if s[0] == s[2] else sympy.Integer(0))
            for s in free_slots(m, N)}


def zero_gauge(sys: HamiltonianSystem) -> dict:
    return {slot_name(*s): sympy.Integer(0) for s in free_slots(sys.m, sys.N)}


def random_gauge(sys: HamiltonianSystem, seed: int = 0, degree: int = 2, terms: int = 2) -> dict:
    """Random sparse polynomial gauge over the multimomentum coordinates."""
    rng = random.Random(seed)
    syms = sys.coords.symbols
    out = {}
    for s in free_slots(sys.m, sys.N):
        e = sympy.Integer(0)
        for _ in range(terms):
            mono = sympy.Integer(rng.randint(-3, 3))
            for _ in range(rng.randint(0, degree)):
                mono *= rng.choice(syms)
            e += mono
        out[slot_name(*s)] = canonical(e)
    return out


def _normalize_gauge(sys: HamiltonianSystem, gauge: dict) -> dict:
    m, N = sys.m, sys.N
    free = set(free_slots(m, N))
    det = set(determined_slots(m, N))
    seen = {}
    bad = []
    for k, v in gauge.items():
        try:
            s = parse_slot(k)
        except GaugeError:
            bad.append(str(k))
            continue
        if s not in free:
            bad.append(slot_name(*s))
            continue
        if s in seen:
            bad.append(slot_name(*s))
            continue
        seen[s] = sympy.sympify(v)
    if bad:
        kinds = []
        if any(parse_slot(b) in det for b in bad if _SLOT_RE.match(b)):
            kinds.append("trace-determined slots cannot be assigned")
        raise GaugeError(f"gauge assigns slots that are not free ({'; '.join(kinds) or 'unknown or duplicate'}): "
                         f"{', '.join(sorted(bad))}", bad)
    missing = sorted(slot_name(*s) for s in free - set(seen))
    if missing:
        raise GaugeError(f"gauge leaves {len(missing)} of {len(free)} free slots unassigned: {', '.join(missing)}",
                         missing)
    for s, v in seen.items():
        sys.coords.require(v, what=f"gauge slot {slot_name(*s)}")
    return {slot_name(*s): canonical(seen[s]) for s in sorted(seen, key=lambda t: (t[2], t[0], t[1]))}


def solve_G(sys: HamiltonianSystem, gauge: dict | None = None) -> tuple:
    """G[mu][rho][A] from a complete free-slot assignment; returns (G, normalized gauge)."""
    m, N = sys.m, sys.N
    gauge = default_gauge(sys) if gauge is None else _normalize_gauge(sys, gauge)
    G = [[[None] * N for _ in range(m)] for _ in range(m)]
    for k, v in gauge.items():
        rho, a, mu = parse_slot(k)
        G[mu][rho][a] = v
    trace = trace_target(sys)
    for a in range(N):
        rest = sum((G[mu][mu][a] for mu in range(m - 1)), sympy.Integer(0))
        G[m - 1][m - 1][a] = canonical(trace[a] - rest)
    return G, gauge


def factor_fields(sys: HamiltonianSystem, F, G) -> list:
    c = sys.coords
    out = []
    for mu in range(c.m):
        comps = {c.x[mu]: 1}
        for a in range(c.N):
            comps[c.y[a]] = F[mu][a]
            for rho in range(c.m):
                comps[c.p[rho][a]] = G[mu][rho][a]
        out.append(MultiVec.vector(c, comps))
    return out


class ResidualError(InternalConsistencyError):
    """i(X) Omega did not vanish; ``offending`` maps basis names to coefficients."""

    def __init__(self, message, offending):
        super().__init__(message)
        self.offending = offending


def contraction_residual(sys: HamiltonianSystem, X: MultiVec) -> dict:
    """Nonzero coefficients of i(X) Omega split into 'base' (dx) and 'fiber' parts."""
    r = contract(X, sys.omega)
    base, fiber = {}, {}
    for (i,), c in r.terms.items():
        if is_structurally_zero(c):
            continue
        name = "d" + sys.coords.names[i]
        (fiber if sys.coords.is_fiber(i) else base)[name] = c
    return {"base": base, "fiber": fiber}


@dataclass
class HDWField:
    system: HamiltonianSystem
    F: list
    G: list
    gauge: dict
    multivector: MultiVec
    residual: dict = field(default_factory=lambda: {"base": {}, "fiber": {}})
    gauge_label: str = "user"

    @property
    def factors(self):
        return self.multivector.factors

    def trace(self) -> list:
        m = self.system.m
        return [canonical(sum(self.G[mu][mu][a] for mu in range(m))) for a in range(self.system.N)]

    def to_json(self) -> dict:
        return {
            "F": [[to_text(e) for e in row] for row in self.F],
            "G": [[[to_text(e) for e in r] for r in block] for block in self.G],
            "gauge": {k: to_text(v) for k, v in self.gauge.items()},
            "gauge_kind": self.gauge_label,
            "residual": "0" if not (self.residual["base"] or self.residual["fiber"]) else {
                k: {n: to_text(c) for n, c in v.items()} for k, v in self.residual.items()},
        }


def assemble_and_verify(sys: HamiltonianSystem, F, G, gauge: dict | None = None, label: str = "user") -> HDWField:
    """Build the decomposable field and check i(X)Omega = 0 and i(X) d^m x = 1 directly."""
    X = MultiVec.decomposable(factor_fields(sys, F, G))
    res = contraction_residual(sys, X)
    if res["base"] or res["fiber"]:
        shown = {**res["fiber"], **res["base"]}
        msg = ", ".join(f"{k}: {to_text(v)}" for k, v in sorted(shown.items()))
        raise ResidualError(f"i(X)Omega is not zero; offending coefficients {msg}", shown)
    tr = contract(X, volume(sys.coords)).value()
    if not is_structurally_zero(tr - 1):
        raise InternalConsistencyError(f"transversality failed: i(X) d^m x = {tr}")
    return HDWField(sys, F, G, dict(gauge or {}), X, res, label)


def derive(sys: HamiltonianSystem, gauge: dict | str | None = None, seed: int = 0) -> HDWField:
    """F, G and verification in one call; ``gauge`` may be 'default', 'zero', 'random' or a dict."""
    label = "user"
    if gauge is None or gauge == "default":
        gauge, label = default_gauge(sys), "default"
    elif gauge == "zero":
        gauge, label = zero_gauge(sys), "zero"
    elif gauge == "random":
        gauge, label = random_gauge(sys, seed=seed), f"random(seed={seed})"
    F = solve_F(sys)
    G, g = solve_G(sys, gauge)
    return assemble_and_verify(sys, F, G, g, label)


# -- curvature ------------------------------------------------------------------


class Flatness(Enum):
    STRUCTURAL = "structural"
    NUMERIC = "numeric"
    NO = "no"


@dataclass
class CurvatureReport:
    components: list  # (label, expr)
    flat: Flatness
    witness: dict | None = None
    witness_component: str | None = None
    linear_in_gauge: bool = True

    @property
    def is_flat(self) -> bool:
        return self.flat is not Flatness.NO

    def to_json(self) -> dict:
        return {
            "flat": self.flat.value,
            "components": {lbl: to_text(e) for lbl, e in self.components},
            "witness": None if self.witness is None else {str(k): v for k, v in sorted(
                self.witness.items(), key=lambda kv: str(kv[0]))},
            "witness_component": self.witness_component,
            "linear_in_gauge": self.linear_in_gauge,
        }


def curvature_components(field_: HDWField) -> list:
    """Components of [X_mu, X_eta] for mu < eta: N y-entries then N*m p-entries per pair."""
    c = field_.system.coords
    fs = field_.factors
    out = []
    for mu, eta in itertools.combinations(range(c.m), 2):
        br = vector_bracket(fs[mu], fs[eta])
        for b in range(c.N):
            out.append((f"y{b}[{mu},{eta}]", br.component(c.y[b])))
        for b in range(c.N):
            for rho in range(c.m):
                out.append((f"p{rho}_{b}[{mu},{eta}]", br.component(c.p[rho][b])))
    return out


def curvature(field_: HDWField, probes: int = 100, tol: float = 1e-9, seed: int = 0) -> CurvatureReport:
    comps = curvature_components(field_)
    c = field_.system.coords
    F = field_.F
    linear = all(not sympy.diff(F[mu][a], s).free_symbols
                 for mu in range(c.m) for a in range(c.N) for s in c.symbols)
    nonzero = [(lbl, e) for lbl, e in comps if not is_structurally_zero(e)]
    if not nonzero:
        return CurvatureReport(comps, Flatness.STRUCTURAL, linear_in_gauge=linear)
    syms = c.symbols
    rng = random.Random(seed)
    checked = 0
    while checked < probes:
        pt = {s: rng.uniform(-1, 1) for s in syms}
        try:
            vals = [(lbl, evaluate(e, pt)) for lbl, e in nonzero]
        except NumericDomainError:
            continue
        checked += 1
        for lbl, v in vals:
            if abs(v) >= tol:
                return CurvatureReport(comps, Flatness.NO, pt, lbl, linear)
    return CurvatureReport(comps, Flatness.NUMERIC, linear_in_gauge=linear)


__all__ = [
    "CurvatureReport", "Flatness", "HDWField", "ResidualError", "assemble_and_verify", "contraction_residual",
    "count_freedom", "curvature", "curvature_components", "default_gauge", "derive", "determined_slots",
    "factor_fields", "free_slots", "parse_slot", "random_gauge", "slot_name", "solve_F", "solve_G",
    "trace_target", "zero_gauge",
]
