"""Lagrangian side and its comparison with the Hamiltonian side through the Legendre map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from .bundle import LegendreMap, QuadraticLagrangian, legendre_map, poincare_cartan
from .errors import InternalConsistencyError, VerificationError
from .expr import Equality, canonical, is_structurally_zero, to_text
from .exterior import MultiVec, contract, volume
from .hdw import HDWField, assemble_and_verify, free_slots, slot_name, solve_F, solve_G
from .integrator import GridSpec, SectionGrid, centered


@dataclass
class LagrangianField:
    """Semi-holonomic X_L = wedge_mu (d_mu + v^A_mu d_{y^A} + W[mu][nu][A] d_{v^A_nu})."""

    lagrangian: QuadraticLagrangian
    W: list
    multivector: MultiVec
    free_parameters: int

    def to_json(self) -> dict:
        return {"W": [[[to_text(e) for e in r] for r in blk] for blk in self.W],
                "free_parameters_set_to_zero": self.free_parameters}


def euler_lagrange_field(L: QuadraticLagrangian) -> LagrangianField:
    """Solve i(X) Omega_L = 0 for the v-components with y-components fixed to v."""
    jet = L.jet
    m, N = L.m, L.N
    _, omega = poincare_cartan(L)
    U = [[[sympy.Symbol(f"W{mu}_{nu}_{a}") for a in range(N)] for nu in range(m)] for mu in range(m)]
    flat = [u for blk in U for row in blk for u in row]

    def factors(vals):
        out = []
        for mu in range(m):
            comps = {jet.x[mu]: 1}
            for a in range(N):
                comps[jet.y[a]] = jet.v[mu][a]
                for nu in range(m):
                    comps[jet.v[nu][a]] = vals[mu][nu][a]
            out.append(MultiVec.vector(jet, comps))
        return out

    r = contract(MultiVec.decomposable(factors(U)), omega)
    eqs = [e for k, e in r.terms.items() if jet.is_fiber(k[0])]
    sol = sympy.linsolve(eqs, flat)
    if sol == sympy.S.EmptySet:
        raise VerificationError("no semi-holonomic solution of i(X)Omega_L = 0")
    (tup,) = list(sol)
    params = set().union(*(sympy.sympify(t).free_symbols for t in tup)) & set(flat)
    zero = {p: 0 for p in params}
    vals = iter(canonical(sympy.sympify(t).xreplace(zero)) for t in tup)
    W = [[[next(vals) for a in range(N)] for nu in range(m)] for mu in range(m)]
    X = MultiVec.decomposable(factors(W))
    res = contract(X, omega)
    bad = {k: c for k, c in res.terms.items() if not is_structurally_zero(c)}
    if bad:
        raise InternalConsistencyError(f"Euler-Lagrange field leaves residual {bad}")
    if not is_structurally_zero(contract(X, volume(jet)).value() - 1):
        raise InternalConsistencyError("Euler-Lagrange field is not transverse")
    return LagrangianField(L, W, X, len(params))


def pushforward_factors(lm: LegendreMap, XL: LagrangianField) -> list:
    """TFL applied to each factor; entries are (F, G) tables in jet coordinates."""
    L = lm.lagrangian
    jet = L.jet
    m, N = L.m, L.N
    mm = lm.system.coords
    F = [[None] * N for _ in range(m)]
    G = [[[None] * N for _ in range(m)] for _ in range(m)]
    for mu, fac in enumerate(XL.multivector.factors):
        for a in range(N):
            F[mu][a] = fac.component(jet.y[a])
            for rho in range(m):
                G[mu][rho][a] = fac.apply(lm.forward[mm.p[rho][a]])
    return F, G


@dataclass
class Comparison:
    theta_equal: Equality
    factors_equal: bool
    gauge: dict
    mismatches: list
    lagrangian_field: LagrangianField
    hamiltonian_field: HDWField
    proportionality: list

    def to_json(self) -> dict:
        return {
            "pullback_theta_equals_theta_L": self.theta_equal.value,
            "factorwise_pushforward_agrees": self.factors_equal,
            "proportionality_factors": [to_text(f) for f in self.proportionality],
            "matched_gauge": {k: to_text(v) for k, v in self.gauge.items()},
            "mismatches": self.mismatches,
            "lagrangian_field": self.lagrangian_field.to_json(),
            "hamiltonian_field": self.hamiltonian_field.to_json(),
        }


def compare_lagrangian(L: QuadraticLagrangian) -> Comparison:
    lm = legendre_map(L)
    sys = lm.system
    theta_L, _ = poincare_cartan(L)
    theta_eq = lm.pull_to_jet(sys.theta).equals(theta_L)
    XL = euler_lagrange_field(L)
    Fp, Gp = pushforward_factors(lm, XL)
    # the pushed field carries x^mu-coefficient 1 per factor, so f = 1
    props = [fac.component(L.jet.x[mu]) for mu, fac in enumerate(XL.multivector.factors)]
    to_mm = lm.inverse
    gauge = {slot_name(rho, a, mu): canonical(sympy.sympify(Gp[mu][rho][a]).xreplace(to_mm))
             for rho, a, mu in free_slots(L.m, L.N)}
    F = solve_F(sys)
    G, g = solve_G(sys, gauge)
    XH = assemble_and_verify(sys, F, G, g, label="matched to the Lagrangian field")
    mism = []
    for mu in range(L.m):
        for a in range(L.N):
            lhs = canonical(sympy.sympify(F[mu][a]).xreplace(lm.forward))
            if not is_structurally_zero(lhs - Fp[mu][a]):
                mism.append(f"F[{mu}][{a}]")
            for rho in range(L.m):
                lhs = canonical(sympy.sympify(G[mu][rho][a]).xreplace(lm.forward))
                if not is_structurally_zero(lhs - Gp[mu][rho][a]):
                    mism.append(f"G[{mu}][{rho}][{a}]")
    return Comparison(theta_eq, not mism, g, mism, XL, XH, props)


# -- sections ----------------------------------------------------------------------------


def legendre_section(lm: LegendreMap, spec: GridSpec, y_slices: list, times: list, model: str = "legendre"):
    """FL o j1(phi) on every interior slice of a sampled Lagrangian solution phi.

    Velocities are centered differences in time and space, so k input slices
    give k - 2 multimomentum slices.
    """
    L = lm.lagrangian
    m, N = L.m, L.N
    if len(y_slices) < 3:
        raise ValueError("need at least three slices")
    out = []
    mm = lm.system.coords
    jet = L.jet
    fwd = [sympy.lambdify(list(jet.x) + list(jet.y) + [jet.v[mu][a] for mu in range(m) for a in range(N)],
                          lm.forward[mm.p[rho][a]], "numpy")
           for rho in range(m) for a in range(N)]
    mesh = spec.mesh()
    S = spec.spatial_shape
    for k in range(1, len(y_slices) - 1):
        y = np.asarray(y_slices[k], dtype=float)
        dt = times[k + 1] - times[k - 1]
        vel = [(np.asarray(y_slices[k + 1]) - np.asarray(y_slices[k - 1])) / dt]
        vel += [centered(y, i, spec.h[i]) for i in range(1, m)]
        args = [np.full(S, times[k])] + list(mesh) + [y[a] for a in range(N)] + [vel[mu][a] for mu in range(m) for a in range(N)]
        p = np.stack([np.broadcast_to(f(*args), S) for f in fwd]).reshape((m, N) + S)
        out.append(SectionGrid(y.copy(), p, times[k], k, model))
    return out


__all__ = ["Comparison", "LagrangianField", "compare_lagrangian", "euler_lagrange_field", "legendre_section",
           "pushforward_factors"]
