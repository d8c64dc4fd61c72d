"""Symmetry classification, first integrals and canonical lifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import sympy

from .bundle import HamiltonianSystem
from .errors import PropagationError, UnsupportedCaseError, UnsupportedLiftError
from .expr import CoordSystem, Equality, canonical, to_text
from .exterior import DiffForm, MultiVec, contract, lie, lie_power, schouten
from .hdw import HDWField, derive

MAX_ORDER = 4
RANDOM_GAUGES = 5


class Kind(Enum):
    NOT_SYMMETRY = "not a symmetry"
    GENERAL = "general (sampled)"
    CARTAN_NOETHER = "Cartan-Noether"
    EXACT = "exact Cartan-Noether"


@dataclass
class Classification:
    kind: Kind
    order: int | None = None
    exact: bool = False
    general_sampled: bool = False
    numeric_only: bool = False
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "order": self.order,
            "exact": self.exact,
            "general_sampled": self.general_sampled,
            "numeric_only": self.numeric_only,
            "notes": list(self.notes),
        }


@dataclass
class SymmetryCandidate:
    Y: MultiVec
    provenance: str = "user"
    label: str = ""
    classification: Classification | None = None


@dataclass
class FirstIntegral:
    xi: DiffForm
    source: SymmetryCandidate | None
    exact_primitive: bool
    verified: bool
    order: int = 1

    def to_json(self) -> dict:
        return {"xi": self.xi.to_json(), "exact_primitive": self.exact_primitive, "verified": self.verified,
                "order": self.order}


def _vanishes(w: DiffForm) -> Equality:
    zero = DiffForm(w.coords, w.degree)
    return w.equals(zero)


def cartan_order(Y: MultiVec, sys: HamiltonianSystem, max_order: int = MAX_ORDER):
    """Smallest n <= max_order with L^n(Y) Omega = 0, plus the equality kind; (None, None) if none."""
    w = sys.omega
    for n in range(1, max_order + 1):
        w = lie(Y, w)
        eq = _vanishes(w)
        if eq:
            return n, eq
    return None, None


def bracket_preserves_kernel(Y: MultiVec, X: MultiVec, sys: HamiltonianSystem) -> bool:
    """i([Y, X]) Omega = 0 for one HDW representative X."""
    return bool(_vanishes(contract(schouten(Y, X), sys.omega)))


def sampled_general_test(Y: MultiVec, sys: HamiltonianSystem, seed: int = 0, extra: int = RANDOM_GAUGES) -> bool:
    fields = [derive(sys)] + [derive(sys, "random", seed=seed + k) for k in range(extra)]
    return all(bracket_preserves_kernel(Y, f.multivector, sys) for f in fields)


def classify(Y: MultiVec | SymmetryCandidate, sys: HamiltonianSystem, X_H: HDWField | None = None,
             seed: int = 0, max_order: int = MAX_ORDER) -> Classification:
    cand = Y if isinstance(Y, SymmetryCandidate) else None
    Y = cand.Y if cand else Y
    out = Classification(Kind.NOT_SYMMETRY)
    n, eq = cartan_order(Y, sys, max_order)
    fields = [X_H or derive(sys)] + [derive(sys, "random", seed=seed + k) for k in range(RANDOM_GAUGES)]
    out.general_sampled = all(bracket_preserves_kernel(Y, f.multivector, sys) for f in fields)
    if n is not None:
        out.order = n
        out.numeric_only = eq is Equality.NUMERIC
        out.exact = bool(_vanishes(lie_power(Y, sys.theta, n)))
        out.kind = Kind.EXACT if out.exact else Kind.CARTAN_NOETHER
        if not out.general_sampled:
            out.notes.append("Cartan-Noether but failed the sampled bracket test")
    elif out.general_sampled:
        out.kind = Kind.GENERAL
        out.notes.append("bracket test run on the default gauge and "
                         f"{RANDOM_GAUGES} random gauges only")
    if cand is not None:
        cand.classification = out
    return out


def noether_verified(xi: DiffForm, X_H: HDWField) -> bool:
    return bool(_vanishes(lie(X_H.multivector, xi)))


def first_integral(Y: MultiVec | SymmetryCandidate, sys: HamiltonianSystem, X_H: HDWField | None = None,
                   classification: Classification | None = None) -> FirstIntegral:
    """xi = L^{n-1}(Y) i(Y) Theta for an exact symmetry of order n, checked against X_H."""
    cand = Y if isinstance(Y, SymmetryCandidate) else None
    Yv = cand.Y if cand else Y
    cl = classification or (cand.classification if cand and cand.classification else None)
    if cl is None:
        n, _ = cartan_order(Yv, sys)
        exact = n is not None and bool(_vanishes(lie_power(Yv, sys.theta, n)))
    else:
        n, exact = cl.order, cl.exact
    if n is None:
        raise UnsupportedCaseError("not a Cartan-Noether symmetry; no first integral is produced")
    if not exact:
        raise UnsupportedCaseError(
            "i(Y)Omega is closed but L^n(Y)Theta does not vanish; only a local primitive exists, none is computed")
    xi = lie_power(Yv, contract(Yv, sys.theta), n - 1)
    X_H = X_H or derive(sys)
    return FirstIntegral(xi, cand, True, noether_verified(xi, X_H), n)


def generate_integrals(fi: FirstIntegral, Y: MultiVec, sys: HamiltonianSystem,
                       X_H: HDWField | None = None) -> FirstIntegral:
    """L(Y) xi, re-verified."""
    X_H = X_H or derive(sys)
    xi = lie(Y, fi.xi)
    if not noether_verified(xi, X_H):
        raise PropagationError("L(Y)xi is not a first integral; Y is not a general symmetry")
    return FirstIntegral(xi, None, fi.exact_primitive, True, fi.order)


# -- canonical lifts ----------------------------------------------------------------


def base_vector(coords: CoordSystem, components) -> MultiVec:
    """Vector field Z^mu(x) d/dx^mu on E from a list or dict of components."""
    if not isinstance(components, dict):
        components = {coords.x[mu]: c for mu, c in enumerate(components)}
    return MultiVec.vector(coords, components)


def canonical_lift(Z: MultiVec, sys: HamiltonianSystem) -> SymmetryCandidate:
    """Lift of an affine base field Z = Z^mu(x) d/dx^mu to the multimomentum bundle.

    Y = Z^mu d_mu + (p^nu_A d_nu Z^mu - p^mu_A div Z) d/dp^mu_A, the lift that
    preserves p^mu_A dy^A ^ d^{m-1}x_mu.
    """
    c = sys.coords
    comps = {}
    xs = set(c.x)
    zc = []
    for (i,), e in Z.terms.items():
        name = Z.coords.names[i]
        s = sympy.Symbol(name)
        if s not in xs:
            raise UnsupportedLiftError(f"lift supports base fields only; Z has a {name} component")
        zc.append((c.x.index(s), e))
    Zmu = [sympy.Integer(0)] * c.m
    for mu, e in zc:
        if not e.free_symbols <= xs:
            raise UnsupportedLiftError(f"component {to_text(e)} depends on fiber coordinates")
        for s in c.x:
            if sympy.diff(e, s, 2) != 0 or any(sympy.diff(e, s, t) != 0 for t in c.x if t != s):
                raise UnsupportedLiftError(f"component {to_text(e)} is not affine in x")
        Zmu[mu] = e
    div = sum(sympy.diff(Zmu[nu], c.x[nu]) for nu in range(c.m))
    for mu in range(c.m):
        comps[c.x[mu]] = Zmu[mu]
        for a in range(c.N):
            g = sum(c.p[nu][a] * sympy.diff(Zmu[mu], c.x[nu]) for nu in range(c.m)) - c.p[mu][a] * div
            comps[c.p[mu][a]] = canonical(g)
    return SymmetryCandidate(MultiVec.vector(c, comps), provenance="lift")


def translation(sys: HamiltonianSystem, mu: int) -> SymmetryCandidate:
    c = sys.coords
    cand = canonical_lift(base_vector(c, {c.x[mu]: 1}), sys)
    cand.provenance, cand.label = "translation lift", f"Y{mu}"
    return cand


def rotation(sys: HamiltonianSystem, mu: int, nu: int, metric=None) -> SymmetryCandidate:
    """Lift of eta_{mu r} x^r d_nu - eta_{nu r} x^r d_mu (eta = identity by default)."""
    c = sys.coords
    eta = sympy.eye(c.m) if metric is None else sympy.Matrix(metric)
    low_mu = sum(eta[mu, r] * c.x[r] for r in range(c.m))
    low_nu = sum(eta[nu, r] * c.x[r] for r in range(c.m))
    Z = base_vector(c, {c.x[nu]: low_mu, c.x[mu]: -low_nu})
    cand = canonical_lift(Z, sys)
    cand.provenance, cand.label = "rotation lift", f"Y{mu}{nu}"
    return cand


def scaled(cand: SymmetryCandidate, k) -> SymmetryCandidate:
    return SymmetryCandidate(cand.Y * k, cand.provenance, f"{k}*{cand.label}" if cand.label else "")


def equal_forms(a: DiffForm, b: DiffForm) -> bool:
    return bool(a.equals(b))


__all__ = [
    "Classification", "FirstIntegral", "Kind", "SymmetryCandidate", "base_vector", "canonical_lift",
    "cartan_order", "classify", "equal_forms", "first_integral", "generate_integrals",
    "noether_verified", "rotation", "sampled_general_test", "scaled", "translation",
]
