"""Compatibility/tangency algorithm for Hamiltonian systems restricted to P = {Phi_a = 0}.

P is handled by substitution: every constraint that is linear with a numeric
coefficient in some fiber coordinate eliminates that coordinate.  The
remaining ("kept") fiber coordinates chart P together with the x^mu.  An
HDW field on P is written

    X = wedge_mu (d/dx^mu + sum_z U[mu, z] d/dz),   z kept,

so the fiber coefficients of i(X) Omega0 are affine in the unknowns U.
Constraints that cannot be eliminated and all secondary constraints enter
through tangency rows X_mu(Psi) = 0.  Left null vectors of the stacked
coefficient matrix give the conditions for solvability.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np
import sympy

from .bundle import HamiltonianSystem, QuadraticLagrangian, build_hamiltonian_system
from .errors import HyperRegularityError
from .expr import canonical, is_structurally_zero, to_text
from .exterior import MultiVec, contract, d, pullback_map
from .hdw import derive

SYMBOLIC_UNKNOWN_LIMIT = 12
RANK_TOL = 1e-9


def _normalize(e) -> sympy.Expr:
    """Drop constant factors and fix the sign of a constraint expression."""
    e = canonical(e)
    if e == 0 or e.is_Number:
        return e
    _, prim = sympy.primitive(e)
    prim = canonical(prim)
    lead = prim.as_ordered_terms()[0] if prim.is_Add else prim
    if lead.as_coeff_Mul()[0] < 0:
        prim = canonical(-prim)
    return prim


def _eliminable(phi, candidates):
    """(z, value) when phi is linear in z with a numeric coefficient."""
    for z in candidates:
        if z not in phi.free_symbols:
            continue
        poly = sympy.Poly(phi, z) if phi.is_polynomial(z) else None
        if poly is None or poly.degree() != 1:
            continue
        coef = poly.coeff_monomial(z)
        if coef.is_Number and coef != 0:
            return z, canonical(-(phi - coef * z) / coef)
    return None


class RestrictedSystem:
    """A Hamiltonian system restricted to the zero set of ``constraints``."""

    def __init__(self, sys: HamiltonianSystem, constraints=(), seed: int = 0, probes: int = 40):
        self.sys = sys
        c = sys.coords
        self.constraints = [canonical(sympy.sympify(k)) for k in constraints]
        for k in self.constraints:
            c.require(k, what="constraint")
        fiber_order = [s for row in c.p for s in row] + list(c.y)
        self.elim = {}
        self.kept_constraints = []
        for phi in self.constraints:
            phi_r = canonical(phi.xreplace(self.elim)) if self.elim else phi
            if is_structurally_zero(phi_r):
                raise ValueError(f"constraint {to_text(phi)} is implied by the earlier ones")
            hit = _eliminable(phi_r, [z for z in fiber_order if z not in self.elim])
            if hit is None:
                self.kept_constraints.append(phi_r)
                continue
            z, val = hit
            self.elim = {k: canonical(v.xreplace({z: val})) for k, v in self.elim.items()}
            self.elim[z] = val
        self.kept = [z for z in c.symbols[c.m:] if z not in self.elim]
        self.seed = seed
        self.probes = probes
        self._check_independent()
        self.theta0 = pullback_map(sys.theta, c, self.elim) if self.elim else sys.theta
        self.omega0 = -d(self.theta0)
        direct = pullback_map(sys.omega, c, self.elim) if self.elim else sys.omega
        if not self.omega0.equals(direct):
            raise AssertionError("restricted Omega differs from the pullback of Omega")

    @property
    def coords(self):
        return self.sys.coords

    def chart(self) -> list:
        return list(self.coords.x) + self.kept

    def _check_independent(self):
        if not self.constraints:
            return
        c = self.coords
        rng = random.Random(self.seed)
        J = sympy.Matrix([[sympy.diff(k, s) for s in c.symbols] for k in self.constraints])
        fn = sympy.lambdify(c.symbols, J, "numpy")
        for _ in range(5):
            pt = [rng.uniform(-1, 1) for _ in c.symbols]
            if np.linalg.matrix_rank(np.array(fn(*pt), dtype=float), tol=RANK_TOL) == len(self.constraints):
                return
        raise ValueError("constraints are not functionally independent at the probe points")

    def extend(self, value_of_chart: dict) -> dict:
        """Full coordinate point from chart values."""
        pt = dict(value_of_chart)
        for z, e in self.elim.items():
            pt[z] = float(e.subs(pt)) if e.free_symbols else float(e)
        return pt


@dataclass
class Generation:
    index: int
    added: list  # (expr, provenance)
    probes: dict
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "generation": self.index,
            "added": [{"constraint": to_text(e), "provenance": p} for e, p in self.added],
            "probes": self.probes,
            "notes": list(self.notes),
        }


@dataclass
class ConstraintLedger:
    rsys: RestrictedSystem
    generations: list = field(default_factory=list)
    secondary: list = field(default_factory=list)  # (expr, provenance, generation)
    status: str = "running"
    final_generation: int | None = None
    solution: dict | None = None
    subs: dict = field(default_factory=dict)

    def constraint_set(self) -> list:
        """Every defining condition of the current set, as expressions."""
        out = list(self.rsys.constraints)
        out += [e for e, _, _ in self.secondary]
        return out

    def dimension(self) -> int:
        r = self.rsys
        return len(r.chart()) - len(r.kept_constraints) - len(self.secondary)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "final_generation": self.final_generation,
            "primary": [to_text(e) for e in self.rsys.constraints],
            "eliminated": {str(k): to_text(v) for k, v in self.rsys.elim.items()},
            "generations": [g.to_json() for g in self.generations],
            "final_constraints": [to_text(e) for e in self.constraint_set()],
            "dimension": self.dimension(),
            "solution": self.solution,
        }


def _unknowns(rsys: RestrictedSystem):
    c = rsys.coords
    return [[sympy.Symbol(f"U{mu}__{z.name}") for z in rsys.kept] for mu in range(c.m)]


def _linear_system(rsys: RestrictedSystem, conditions: list, subs: dict):
    """Rows (coefficient vectors in U, right-hand sides) with their provenance labels."""
    c = rsys.coords
    U = _unknowns(rsys)
    flat = [u for row in U for u in row]
    factors = []
    for mu in range(c.m):
        comps = {c.x[mu]: 1}
        for z, u in zip(rsys.kept, U[mu]):
            comps[z] = u
        factors.append(MultiVec.vector(c, comps))
    X = MultiVec.decomposable(factors)
    r = contract(X, rsys.omega0)
    rows, rhs, labels = [], [], []
    zero = {u: 0 for u in flat}
    for z in rsys.kept:
        e = r.terms.get((c.index(z),), sympy.Integer(0))
        e = e.xreplace(subs) if subs else e
        rows.append([canonical(sympy.diff(e, u)) for u in flat])
        rhs.append(canonical(-e.xreplace(zero)))
        labels.append(("compatibility", f"d{z.name}"))
    for psi in conditions:
        for mu in range(c.m):
            e = factors[mu].apply(psi)
            e = e.xreplace(subs) if subs else e
            rows.append([canonical(sympy.diff(e, u)) for u in flat])
            rhs.append(canonical(-e.xreplace(zero)))
            labels.append(("tangency", f"X{mu}({to_text(psi)})"))
    base = []
    for mu in range(c.m):
        e = r.terms.get((c.index(c.x[mu]),), sympy.Integer(0))
        base.append(e.xreplace(subs) if subs else e)
    return sympy.Matrix(rows) if rows else sympy.zeros(0, len(flat)), rhs, labels, flat, base


def _conditions(M: sympy.Matrix, rhs: list, labels: list):
    """Solvability conditions w . rhs = 0 for a basis w of the left null space."""
    if M.rows == 0:
        return []
    out = []
    for w in M.T.nullspace(simplify=True):
        w = [sympy.cancel(sympy.together(v)) for v in w]
        cond = sympy.together(sum(wi * bi for wi, bi in zip(w, rhs)))
        num, _ = sympy.fraction(sympy.cancel(cond))
        kinds = {labels[i][0] for i, wi in enumerate(w) if wi != 0}
        prov = "tangency" if "tangency" in kinds else "compatibility"
        out.append((canonical(num), prov))
    return out


def _reduce(e, subs: dict, kept_conds: list):
    e = canonical(e.xreplace(subs)) if subs else canonical(e)
    if e == 0 or e.is_Number:
        return e
    polys = [k for k in kept_conds if not k.is_Number and k.is_polynomial()]
    if polys and e.is_polynomial():
        try:
            _, rem = sympy.reduced(e, polys)
            e = canonical(rem)
        except (sympy.PolynomialError, sympy.polys.polyerrors.ComputationFailed):
            pass
    return e


def _probe_points(rsys: RestrictedSystem, subs: dict, conds: list, n: int, seed: int) -> list:
    """Random chart points satisfying eliminations; remaining conditions by Newton projection."""
    chart = rsys.chart()
    free = [s for s in chart if s not in subs]
    rng = np.random.default_rng(seed)
    allsubs = dict(rsys.elim)
    allsubs.update(subs)
    g = [canonical(k.xreplace(subs)) for k in conds]
    g = [k for k in g if not is_structurally_zero(k)]
    gfun = sympy.lambdify(free, sympy.Matrix(g), "numpy") if g else None
    jfun = sympy.lambdify(free, sympy.Matrix(g).jacobian(free), "numpy") if g else None
    pts = []
    for _ in range(n):
        v = rng.uniform(-1, 1, len(free))
        ok = True
        for _ in range(30 if g else 0):
            r = np.asarray(gfun(*v), dtype=float).reshape(-1)
            if np.abs(r).max() < 1e-12:
                break
            J = np.asarray(jfun(*v), dtype=float).reshape(len(g), len(free))
            v = v - np.linalg.lstsq(J, r, rcond=None)[0]
        if g:
            r = np.asarray(gfun(*v), dtype=float).reshape(-1)
            ok = np.abs(r).max() < 1e-10
        if not ok:
            continue
        pt = dict(zip(free, v.tolist()))
        pending = dict(allsubs)
        for _ in range(len(pending) + 1):
            for z, e in list(pending.items()):
                if e.free_symbols <= set(pt):
                    pt[z] = float(e.xreplace(pt)) if e.free_symbols else float(e)
                    del pending[z]
        if pending:
            continue
        pts.append(pt)
    return pts


def _classify_points(M, rhs, flat, points, base):
    if not points:
        return {"points": 0, "solvable": 0, "max_residual": None}
    syms = sorted(set().union(*(e.free_symbols for e in list(M) + rhs + base)) - set(flat), key=str)
    Mf = sympy.lambdify(syms, M, "numpy")
    bf = sympy.lambdify(syms, sympy.Matrix(rhs), "numpy")
    solvable, worst = 0, 0.0
    base_worst = 0.0
    basefun = [sympy.lambdify(syms + flat, e, "math") for e in base]
    for pt in points:
        args = [pt[s] for s in syms]
        A = np.array(Mf(*args), dtype=float).reshape(M.shape)
        b = np.array(bf(*args), dtype=float).reshape(-1)
        if A.size == 0:
            solvable += 1
            continue
        sv = np.linalg.svd(A, compute_uv=False)
        tol = RANK_TOL * max(1.0, sv.max() if sv.size else 1.0)
        rank = int((sv > tol).sum())
        svb = np.linalg.svd(np.column_stack([A, b]), compute_uv=False)
        rank_b = int((svb > tol).sum())
        if rank_b == rank:
            solvable += 1
            u = np.linalg.lstsq(A, b, rcond=None)[0]
            worst = max(worst, float(np.abs(A @ u - b).max()))
            vals = args + u.tolist()
            base_worst = max(base_worst, max((abs(f(*vals)) for f in basefun), default=0.0))
    return {"points": len(points), "solvable": solvable, "max_residual": worst, "max_base_residual": base_worst}


def _generation(rsys: RestrictedSystem, ledger: ConstraintLedger, index: int) -> Generation:
    conds = list(rsys.kept_constraints) + [e for e, _, _ in ledger.secondary]
    M, rhs, labels, flat, base = _linear_system(rsys, conds, ledger.subs)
    gen = Generation(index, [], {})
    new = []
    if len(flat) <= SYMBOLIC_UNKNOWN_LIMIT:
        kept_conds = [canonical(k.xreplace(ledger.subs)) for k in conds]
        for cond, prov in _conditions(M, rhs, labels):
            red = _reduce(cond, ledger.subs, kept_conds)
            if red == 0:
                continue
            red = _normalize(red)
            if any(is_structurally_zero(red - k) for k, _ in new):
                continue
            new.append((red, prov))
    else:
        gen.notes.append(f"{len(flat)} unknowns exceed {SYMBOLIC_UNKNOWN_LIMIT}: numeric classification only")
    pts = _probe_points(rsys, ledger.subs, conds, rsys.probes, rsys.seed + index)
    gen.probes = _classify_points(M, rhs, flat, pts, base)
    gen.added = new
    return gen


def _absorb(ledger: ConstraintLedger, gen: Generation):
    rsys = ledger.rsys
    for e, prov in gen.added:
        if e.is_Number:
            continue
        ledger.secondary.append((e, prov, gen.index))
        hit = _eliminable(canonical(e.xreplace(ledger.subs)) if ledger.subs else e,
                          [z for z in rsys.kept if z not in ledger.subs])
        if hit is not None:
            z, val = hit
            ledger.subs = {k: canonical(v.xreplace({z: val})) for k, v in ledger.subs.items()}
            ledger.subs[z] = val


def compatibility_set(rsys: RestrictedSystem) -> Generation:
    """First generation: where does i(X)Omega0 = 0 admit a solution tangent to P?"""
    return _generation(rsys, ConstraintLedger(rsys), 1)


def tangency_step(rsys: RestrictedSystem, ledger: ConstraintLedger) -> Generation:
    """Next generation: additionally require tangency to every constraint found so far."""
    return _generation(rsys, ledger, len(ledger.generations) + 1)


def run_algorithm(rsys: RestrictedSystem, max_gen: int = 8) -> ConstraintLedger:
    if max_gen < 1:
        raise ValueError("max_gen must be at least 1")
    ledger = ConstraintLedger(rsys)
    for k in range(1, max_gen + 1):
        gen = _generation(rsys, ledger, k)
        ledger.generations.append(gen)
        if any(e.is_Number and e != 0 for e, _ in gen.added):
            ledger.status = "empty"
            ledger.final_generation = k
            return ledger
        if gen.probes.get("points", 1) == 0 and (rsys.kept_constraints or ledger.secondary):
            ledger.status = "empty"
            ledger.final_generation = k
            gen.notes.append("no probe point satisfies the constraints")
            return ledger
        if not gen.added:
            ledger.final_generation = k
            ledger.status = "final" if ledger.dimension() >= rsys.coords.m else "dim<m"
            if not rsys.constraints:
                ledger.solution = derive(rsys.sys).to_json()
            return ledger
        _absorb(ledger, gen)
        if ledger.dimension() < rsys.coords.m:
            ledger.status = "dim<m"
            ledger.final_generation = k
            return ledger
    ledger.status = "cap reached"
    return ledger


# -- degenerate quadratic Lagrangians ---------------------------------------------------


def restricted_from_lagrangian(L: QuadraticLagrangian, seed: int = 0) -> RestrictedSystem:
    """Constant singular metric: P is the image of FL, H = 1/2 p a^+ p - f on it."""
    if not L.is_constant_metric():
        raise HyperRegularityError("only constant singular metrics are handled here")
    a = sympy.Matrix(L.a)
    if a.det() != 0:
        raise ValueError("metric is regular; use legendre_map")
    if any(g != 0 for row in L.gamma for g in row):
        raise ValueError("degenerate route supports gamma = 0 only")
    mm = L.jet.with_space("J1*E")
    ps = sympy.Matrix([mm.p[mu][k] for mu in range(L.m) for k in range(L.N)])
    pinv = a.pinv()
    H = canonical((ps.T * pinv * ps)[0, 0] / 2 - L.f)
    cons = [canonical((n.T * ps)[0, 0]) for n in a.nullspace()]
    sys = build_hamiltonian_system(H, m=L.m, N=L.N, name="degenerate-legendre")
    return RestrictedSystem(sys, cons, seed=seed)


__all__ = [
    "ConstraintLedger", "Generation", "RestrictedSystem", "compatibility_set",
    "restricted_from_lagrangian", "run_algorithm", "tangency_step",
]
