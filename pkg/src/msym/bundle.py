"""Hamiltonian systems on the multimomentum bundle and the quadratic Lagrangian family."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import sympy

from .errors import (
    CoordinateDomainError,
    HyperRegularityError,
    InternalConsistencyError,
    UnsupportedCaseError,
    WrongSpaceError,
)
from .expr import CoordSystem, Equality, Space, canonical, evaluate, is_structurally_zero
from .exterior import (
    DiffForm,
    MultiVec,
    d,
    interior,
    pullback_map,
    volume,
    volume_minus,
    wedge,
)

SYMBOLIC_INVERSE_LIMIT = 4


def _check_space(e, coords: CoordSystem, what: str, allowed: set):
    e = sympy.sympify(e)
    jet = coords.with_space(Space.JET)
    ext = coords.with_space(Space.EXTENDED)
    for s in e.free_symbols:
        if s in allowed:
            continue
        if s in jet or s in ext:
            raise WrongSpaceError(f"{what} depends on {s}, which is not allowed here")
        raise CoordinateDomainError(f"{what} uses unknown symbol {s}")
    return canonical(e)


@dataclass(frozen=True)
class Connection:
    """Ehresmann connection coefficients ``gamma[mu][A]`` over E."""

    m: int
    N: int
    gamma: tuple

    def __post_init__(self):
        rows = tuple(tuple(sympy.sympify(g) for g in row) for row in self.gamma)
        if len(rows) != self.m or any(len(r) != self.N for r in rows):
            raise ValueError(f"connection needs an {self.m}x{self.N} table of coefficients")
        total = CoordSystem(self.m, self.N, Space.TOTAL)
        allowed = set(total.symbols)
        rows = tuple(tuple(_check_space(g, total, f"connection coefficient [{mu}][{a}]", allowed)
                           for a, g in enumerate(r)) for mu, r in enumerate(rows))
        object.__setattr__(self, "gamma", rows)

    @classmethod
    def zero(cls, m: int, N: int) -> "Connection":
        return cls(m, N, tuple((0,) * N for _ in range(m)))

    def is_zero(self) -> bool:
        return all(g == 0 for row in self.gamma for g in row)

    def __getitem__(self, key):
        mu, a = key
        return self.gamma[mu][a]


class HamiltonianSystem:
    """(H, nabla) with its Hamilton-Cartan forms ``theta`` and ``omega``.

    Built by :func:`build_hamiltonian_system`.  ``H`` is the global
    Hamiltonian; ``H_local`` = H + p^mu_A Gamma^A_mu.
    """

    def __init__(self, coords, H, connection, theta, omega, notices=(), name="model"):
        self.coords = coords
        self.H = H
        self.connection = connection
        self.theta = theta
        self.omega = omega
        self.notices = tuple(notices)
        self.name = name

    @property
    def m(self):
        return self.coords.m

    @property
    def N(self):
        return self.coords.N

    @property
    def H_local(self) -> sympy.Expr:
        c = self.coords
        return canonical(self.H + sum(c.p[mu][a] * self.connection[mu, a]
                                      for mu in range(c.m) for a in range(c.N)))

    def __repr__(self):
        return f"HamiltonianSystem({self.name}, m={self.m}, N={self.N}, H={self.H})"


def hamilton_cartan_theta(coords: CoordSystem, H_local) -> DiffForm:
    theta = -wedge(DiffForm.function(coords, H_local), volume(coords))
    for mu in range(coords.m):
        vm = volume_minus(coords, mu)
        for a in range(coords.N):
            dy = DiffForm(coords, 1, {(coords.index(coords.y[a]),): 1})
            theta = theta + wedge(dy, vm) * coords.p[mu][a]
    return theta


def hamilton_cartan_omega(coords: CoordSystem, H_local) -> DiffForm:
    """Omega written out directly: -dp^mu_A ^ dy^A ^ d^{m-1}x_mu + dH_loc ^ d^m x."""
    omega = wedge(d(DiffForm.function(coords, H_local)), volume(coords))
    for mu in range(coords.m):
        vm = volume_minus(coords, mu)
        for a in range(coords.N):
            dp = DiffForm(coords, 1, {(coords.index(coords.p[mu][a]),): 1})
            dy = DiffForm(coords, 1, {(coords.index(coords.y[a]),): 1})
            omega = omega - wedge(wedge(dp, dy), vm)
    return omega


def build_hamiltonian_system(H, nabla: Connection | None = None, m: int | None = None, N: int | None = None,
                             name: str = "model") -> HamiltonianSystem:
    if nabla is not None:
        m = nabla.m if m is None else m
        N = nabla.N if N is None else N
        if (m, N) != (nabla.m, nabla.N):
            raise ValueError("connection shape does not match (m, N)")
    if m is None or N is None:
        raise ValueError("m and N are required")
    coords = CoordSystem(m, N, Space.MULTIMOMENTUM)
    H = _check_space(H, coords, "Hamiltonian", set(coords.symbols))
    notices = []
    if nabla is None:
        nabla = Connection.zero(m, N)
        notices.append("no connection given; using the zero connection")
    sys = HamiltonianSystem(coords, H, nabla, None, None, notices, name)
    Hl = sys.H_local
    theta = hamilton_cartan_theta(coords, Hl)
    omega = -d(theta)
    direct = hamilton_cartan_omega(coords, Hl)
    if omega.equals(direct) is not Equality.STRUCTURAL:
        raise InternalConsistencyError("Omega = -d Theta disagrees with the direct construction")
    sys.theta = theta
    sys.omega = omega
    return sys


# -- quadratic Lagrangians -------------------------------------------------------


def multi_index(mu: int, a: int, N: int) -> int:
    """Row of the (N m) x (N m) metric for the pair (mu, A)."""
    return mu * N + a


@dataclass(frozen=True)
class QuadraticLagrangian:
    """L = 1/2 a_{IJ}(y) (v_I - gamma_I(x))(v_J - gamma_J(x)) + f(y), with I = mu*N + A."""

    m: int
    N: int
    a: sympy.Matrix
    gamma: tuple
    f: sympy.Expr = field(default=sympy.Integer(0))

    def __post_init__(self):
        n = self.m * self.N
        a = sympy.Matrix(self.a).applyfunc(lambda e: canonical(sympy.sympify(e)))
        if a.shape != (n, n):
            raise ValueError(f"metric must be {n}x{n}, got {a.shape}")
        total = CoordSystem(self.m, self.N, Space.TOTAL)
        ys = set(total.y)
        xs = set(total.x)
        for i in range(n):
            for j in range(n):
                _check_space(a[i, j], total, f"metric entry [{i}][{j}]", ys)
                if not is_structurally_zero(a[i, j] - a[j, i]):
                    raise ValueError(f"metric is not symmetric at [{i}][{j}]")
        gamma = tuple(tuple(_check_space(g, total, f"gamma[{mu}][{k}]", xs) for k, g in enumerate(row))
                      for mu, row in enumerate(self.gamma))
        if len(gamma) != self.m or any(len(r) != self.N for r in gamma):
            raise ValueError(f"gamma must be {self.m}x{self.N}")
        f = _check_space(self.f, total, "potential f", ys)
        object.__setattr__(self, "a", sympy.ImmutableMatrix(a))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "f", f)

    @property
    def jet(self) -> CoordSystem:
        return CoordSystem(self.m, self.N, Space.JET)

    def _flat(self, table):
        return [table[mu][a] for mu in range(self.m) for a in range(self.N)]

    def velocities(self):
        return self._flat(self.jet.v)

    def lagrangian(self) -> sympy.Expr:
        w = sympy.Matrix([v - g for v, g in zip(self.velocities(), self._flat(self.gamma))])
        return canonical((w.T * self.a * w)[0, 0] / 2 + self.f)

    def is_constant_metric(self) -> bool:
        return all(not e.free_symbols for e in self.a)

    @property
    def connection(self) -> Connection:
        return Connection(self.m, self.N, self.gamma)


def metric_inverse(a: sympy.Matrix) -> sympy.Matrix:
    """Exact inverse; symbolic inversion only for small y-dependent metrics."""
    a = sympy.Matrix(a)
    syms = set().union(*(e.free_symbols for e in a))
    if not syms:
        if a.det() == 0:
            raise HyperRegularityError("the Lagrangian metric is singular; use the constraint algorithm")
        return a.inv()
    if a.shape[0] > SYMBOLIC_INVERSE_LIMIT:
        raise UnsupportedCaseError(
            f"y-dependent metric of size {a.shape[0]} > {SYMBOLIC_INVERSE_LIMIT}: no closed-form Hamiltonian")
    det = sympy.factor(a.det())
    if det == 0:
        raise HyperRegularityError("the Lagrangian metric is singular; use the constraint algorithm")
    return a.adjugate().applyfunc(lambda e: sympy.cancel(e / det))


def probe_regularity(a: sympy.Matrix, probes: int = 20, seed: int = 0) -> None:
    """Raise if the metric determinant vanishes at a random probe point or identically."""
    a = sympy.Matrix(a)
    det = sympy.expand(a.det())
    if det == 0:
        raise HyperRegularityError("the Lagrangian metric is singular; use the constraint algorithm")
    syms = sorted(det.free_symbols, key=str)
    rng = random.Random(seed)
    for _ in range(probes if syms else 0):
        pt = {s: rng.uniform(-1, 1) for s in syms}
        if abs(evaluate(det, pt)) < 1e-12:
            raise HyperRegularityError(f"metric determinant vanishes near {pt}; use the constraint algorithm")


@dataclass
class LegendreMap:
    """FL and its inverse as coordinate substitutions, plus the induced system."""

    lagrangian: QuadraticLagrangian
    system: HamiltonianSystem
    forward: dict  # p-symbol -> expression in jet coordinates
    inverse: dict  # v-symbol -> expression in multimomentum coordinates
    metric_inverse: sympy.Matrix

    def pull_to_jet(self, w: DiffForm) -> DiffForm:
        return pullback_map(w, self.lagrangian.jet, self.forward)

    def push_section(self, values: dict) -> dict:
        """Send (y, v) values on J1E to (y, p) values on the multimomentum bundle."""
        out = dict(values)
        for p, e in self.forward.items():
            out[p] = e.subs({s: values[s] for s in e.free_symbols if s in values})
        return out


def legendre_map(L: QuadraticLagrangian, probes: int = 20, seed: int = 0) -> LegendreMap:
    probe_regularity(L.a, probes=probes, seed=seed)
    n = L.m * L.N
    ainv = metric_inverse(L.a)
    mm = CoordSystem(L.m, L.N, Space.MULTIMOMENTUM)
    vs = L.velocities()
    ps = [mm.p[mu][a] for mu in range(L.m) for a in range(L.N)]
    gam = L._flat(L.gamma)
    w = sympy.Matrix([v - g for v, g in zip(vs, gam)])
    p_img = L.a * w
    forward = {ps[i]: canonical(p_img[i]) for i in range(n)}
    v_img = ainv * sympy.Matrix(ps)
    inverse = {vs[i]: canonical(v_img[i] + gam[i]) for i in range(n)}
    for i in range(n):
        back = sympy.sympify(inverse[vs[i]]).subs(forward, simultaneous=True)
        if not is_structurally_zero(back - vs[i]):
            raise InternalConsistencyError(f"inverse Legendre map does not undo FL on {vs[i]}")
    P = sympy.Matrix(ps)
    H = canonical((P.T * ainv * P)[0, 0] / 2 - L.f)
    sys = build_hamiltonian_system(H, L.connection, name="legendre")
    return LegendreMap(L, sys, forward, inverse, ainv)


def poincare_cartan(L: QuadraticLagrangian):
    """(Theta_L, Omega_L) on the jet bundle."""
    jet = L.jet
    lag = L.lagrangian()
    theta = DiffForm(jet, jet.m)
    energy = -lag
    for mu in range(L.m):
        vm = volume_minus(jet, mu)
        for a in range(L.N):
            v = jet.v[mu][a]
            mom = sympy.diff(lag, v)
            energy = energy + mom * v
            dy = DiffForm(jet, 1, {(jet.index(jet.y[a]),): 1})
            theta = theta + wedge(dy, vm) * mom
    theta = theta - wedge(DiffForm.function(jet, energy), volume(jet))
    return theta, -d(theta)


def one_nondegenerate_at(omega: DiffForm, point: dict, tol: float = 1e-12) -> bool:
    """True when i(Z) omega is nonzero at ``point`` for every coordinate vector Z."""
    coords = omega.coords
    for s in coords.symbols:
        z = interior(MultiVec.vector(coords, {s: 1}), omega)
        if all(abs(evaluate(c, point)) < tol for c in z.terms.values()):
            return False
    return True
