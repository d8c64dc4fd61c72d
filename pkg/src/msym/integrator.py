"""Finite-difference integration of the covariant Hamiltonian equations on periodic grids.

x^0 is the evolution direction.  A model is evolvable when H is quadratic in
the momenta with a constant Hessian whose time/space cross block vanishes,
the linear momentum terms and the connection do not depend on y, and both
diagonal blocks are invertible.  Then

    d_0 y   = A00 p^0 + b_0(x) + Gamma_0(x)
    p^i     = Ass^{-1} (D_i y - b_i(x) - Gamma_i(x))     (spatial, eliminated)
    d_0 p^0 = - sum_i D_i p^i - dH/dy (x, y)

Spatial derivatives use second-order centered differences with periodic
wrap.  Residuals are measured with fourth-order stencils so that they
test the section against the continuous equations, not against the
scheme's own stencil.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np
import sympy

from .bundle import HamiltonianSystem
from .errors import BlowUpError, WellPosednessError
from .expr import compile_expr, compile_scalar
from .exterior import DiffForm

SCHEMES = ("euler", "leapfrog")


@dataclass(frozen=True)
class GridSpec:
    """Lattice over M: ``lengths``/``counts`` per axis, axis 0 being evolution.

    h^mu = L^mu / n^mu; for axis 0 that is the time step and n^0 the step count.
    """

    lengths: tuple
    counts: tuple
    cfl: float = 0.5

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        counts = tuple(int(v) for v in self.counts)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "counts", counts)
        if len(lengths) != len(counts) or not lengths:
            raise ValueError("lengths and counts must have one entry per base axis")
        if any(n < 4 for n in counts):
            raise ValueError(f"every axis needs at least 4 points, got {counts}")
        if any(not (v > 0) for v in lengths):
            raise ValueError("lengths must be positive")
        if len(counts) > 1:
            hs = min(self.h[1:])
            if self.h[0] > self.cfl * hs * (1 + 1e-12):
                raise ValueError(f"CFL violated: h0={self.h[0]:.3g} > {self.cfl} * {hs:.3g}")

    @classmethod
    def evolving(cls, duration: float, spatial_lengths=(), spatial_counts=(), cfl: float = 0.5,
                 steps: int | None = None) -> "GridSpec":
        """Grid whose time step is the largest CFL-admissible one dividing ``duration``."""
        spatial_lengths, spatial_counts = tuple(spatial_lengths), tuple(spatial_counts)
        if steps is None:
            if not spatial_counts:
                raise ValueError("steps is required when there is no spatial axis")
            hs = min(l / n for l, n in zip(spatial_lengths, spatial_counts))
            steps = max(4, math.ceil(duration / (cfl * hs) - 1e-9))
        return cls((duration,) + spatial_lengths, (steps,) + spatial_counts, cfl)

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def h(self) -> tuple:
        return tuple(l / n for l, n in zip(self.lengths, self.counts))

    @property
    def steps(self) -> int:
        return self.counts[0]

    @property
    def dt(self) -> float:
        return self.h[0]

    @property
    def spatial_shape(self) -> tuple:
        return self.counts[1:]

    def mesh(self) -> list:
        """Spatial coordinate arrays x^1.. x^{m-1} (ij indexing)."""
        axes = [np.arange(n) * h for n, h in zip(self.counts[1:], self.h[1:])]
        return list(np.meshgrid(*axes, indexing="ij")) if axes else []

    def cell_volume(self) -> float:
        return float(np.prod(self.h[1:])) if self.m > 1 else 1.0


@dataclass
class SectionGrid:
    """Sampled section: ``y[A, ...]`` and ``p[mu, A, ...]`` on one x^0 slice."""

    y: np.ndarray
    p: np.ndarray
    t: float = 0.0
    step: int = 0
    model: str = "model"

    def check(self, spec: GridSpec, N: int) -> None:
        S = spec.spatial_shape
        if self.y.shape != (N,) + S or self.p.shape != (spec.m, N) + S:
            raise ValueError(f"section arrays have shapes {self.y.shape}, {self.p.shape}; "
                             f"expected {(N,) + S}, {(spec.m, N) + S}")
        if not (np.isfinite(self.y).all() and np.isfinite(self.p).all()):
            raise BlowUpError("non-finite value in section", self.step)

    def copy(self) -> "SectionGrid":
        return SectionGrid(self.y.copy(), self.p.copy(), self.t, self.step, self.model)


# -- well-posedness gate -----------------------------------------------------------


@dataclass
class EvolutionPlan:
    m: int
    N: int
    A00: np.ndarray
    Ass_inv: np.ndarray
    drift_terms: list  # per A: compiled b_0 + Gamma_0 in x
    spatial_terms: list  # per (i, A): compiled b_i + Gamma_i in x
    force: list  # per A: compiled -dH/dy in (x, y)
    force_scalar: list = field(default_factory=list)
    drift_scalar: list = field(default_factory=list)
    x_dependent: bool = False


def evolution_plan(sys: HamiltonianSystem) -> EvolutionPlan:
    """Run the well-posedness gate; raise WellPosednessError with the reason on refusal."""
    cached = getattr(sys, "_evolution_plan", None)
    if cached is not None:
        return cached
    c = sys.coords
    m, N = c.m, c.N
    ps = [c.p[mu][a] for mu in range(m) for a in range(N)]
    H = sys.H
    hess = sympy.Matrix(len(ps), len(ps), lambda i, j: sympy.diff(H, ps[i], ps[j]))
    if any(e.free_symbols for e in hess):
        raise WellPosednessError("H is not quadratic in the momenta with a constant Hessian")
    lin = [sympy.expand(sympy.diff(H, ps[i]) - sum(hess[i, j] * ps[j] for j in range(len(ps))))
           for i in range(len(ps))]
    ysyms = set(c.y)
    if any(e.free_symbols & (ysyms | set(ps)) for e in lin):
        raise WellPosednessError("linear momentum terms of H depend on the fields")
    gam = [sys.connection[mu, a] for mu in range(m) for a in range(N)]
    if any(g.free_symbols & ysyms for g in gam):
        raise WellPosednessError("connection coefficients depend on the fields")
    A = np.array(hess.tolist(), dtype=float)
    A00 = A[:N, :N]
    if abs(np.linalg.det(A00)) < 1e-12:
        raise WellPosednessError("time block of the inverse metric is singular")
    if m > 1:
        if np.abs(A[:N, N:]).max() > 0:
            raise WellPosednessError("inverse metric couples p^0 with spatial momenta")
        Ass = A[N:, N:]
        if abs(np.linalg.det(Ass)) < 1e-12:
            raise WellPosednessError("spatial block of the inverse metric is singular; p^i cannot be eliminated")
        Ass_inv = np.linalg.inv(Ass)
    else:
        Ass_inv = np.zeros((0, 0))
    xs = list(c.x)
    xy = xs + list(c.y)
    force_exprs = []
    for a in range(N):
        f = -sympy.diff(H, c.y[a])
        if f.free_symbols & set(ps):
            raise WellPosednessError("dH/dy depends on the momenta")
        force_exprs.append(f)
    drift = [lin[a] + gam[a] for a in range(N)]
    spatial = [lin[i] + gam[i] for i in range(N, m * N)]
    x_dep = any(e.free_symbols & set(xs) for e in drift + spatial + force_exprs)
    plan = EvolutionPlan(
        m, N, A00, Ass_inv,
        [compile_expr(e, xs) for e in drift],
        [compile_expr(e, xs) for e in spatial],
        [compile_expr(e, xy) for e in force_exprs],
        [compile_scalar(e, xy) for e in force_exprs],
        [compile_scalar(e, xs) for e in drift],
        x_dep,
    )
    sys._evolution_plan = plan
    return plan


def is_evolvable(sys: HamiltonianSystem) -> tuple:
    try:
        evolution_plan(sys)
        return True, ""
    except WellPosednessError as exc:
        return False, str(exc)


# -- finite differences --------------------------------------------------------------


def centered(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis) - np.roll(u, 1, axis)) / (2 * h)


def centered4(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (8 * (np.roll(u, -1, axis) - np.roll(u, 1, axis)) - (np.roll(u, -2, axis) - np.roll(u, 2, axis))) / (12 * h)


def _xs(spec: GridSpec, t: float, mesh) -> list:
    shape = spec.spatial_shape
    return [np.full(shape, t)] + list(mesh)


def _eval_list(fns, args, shape):
    return np.stack([np.broadcast_to(f(*args), shape) for f in fns]) if fns else np.zeros((0,) + shape)


def spatial_momenta(plan: EvolutionPlan, y: np.ndarray, spec: GridSpec, t: float, mesh=None, deriv=centered):
    """p^i_A from D_i y via the spatial block of the inverse metric."""
    m, N = plan.m, plan.N
    if m == 1:
        return np.zeros((0, N) + y.shape[1:])
    mesh = spec.mesh() if mesh is None else mesh
    S = spec.spatial_shape
    xs = _xs(spec, t, mesh)
    grads = np.stack([deriv(y, i, spec.h[i]) for i in range(1, m)])  # (m-1, N, ...)
    rhs = grads.reshape(((m - 1) * N,) + S) - _eval_list(plan.spatial_terms, xs, S)
    ps = np.tensordot(plan.Ass_inv, rhs, axes=(1, 0))
    return ps.reshape((m - 1, N) + S)


def _kick(plan, y, sp, spec, t, mesh, deriv=centered):
    """d_0 p^0 = -sum_i D_i p^i - dH/dy."""
    S = spec.spatial_shape
    xs = _xs(spec, t, mesh)
    out = _eval_list(plan.force, xs + list(y), S)
    for i in range(1, plan.m):
        out = out - deriv(sp[i - 1], i, spec.h[i])
    return out


def _drift(plan, p0, spec, t, mesh):
    S = spec.spatial_shape
    xs = _xs(spec, t, mesh)
    return np.tensordot(plan.A00, p0, axes=(1, 0)) + _eval_list(plan.drift_terms, xs, S)


def _advance(plan, y, p0, state, spec, scheme, t, h, mesh):
    if scheme == "euler":
        sp = state.p[1:] if plan.m > 1 else None
        if sp is None or sp.size == 0:
            sp = spatial_momenta(plan, y, spec, t, mesh)
        p0n = p0 + h * _kick(plan, y, sp, spec, t, mesh)
        yn = y + h * _drift(plan, p0n, spec, t, mesh)
    elif scheme == "leapfrog":
        sp = spatial_momenta(plan, y, spec, t, mesh)
        ph = p0 + 0.5 * h * _kick(plan, y, sp, spec, t, mesh)
        yn = y + h * _drift(plan, ph, spec, t + 0.5 * h, mesh)
        spn = spatial_momenta(plan, yn, spec, t + h, mesh)
        p0n = ph + 0.5 * h * _kick(plan, yn, spn, spec, t + h, mesh)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return yn, p0n


def step(sys: HamiltonianSystem, state: SectionGrid, spec: GridSpec, scheme: str = "euler",
         _mesh=None) -> SectionGrid:
    """Advance one time step."""
    plan = evolution_plan(sys)
    mesh = spec.mesh() if _mesh is None else _mesh
    h = spec.dt
    y, p0, t = state.y, state.p[0], state.t
    with np.errstate(over="ignore", invalid="ignore"):
        yn, p0n = _advance(plan, y, p0, state, spec, scheme, t, h, mesh)
    if not (np.isfinite(yn).all() and np.isfinite(p0n).all()):
        raise BlowUpError(f"non-finite value after step {state.step + 1}", state.step + 1)
    spn = spatial_momenta(plan, yn, spec, t + h, mesh)
    p = np.concatenate([p0n[None], spn]) if plan.m > 1 else p0n[None]
    return SectionGrid(yn, p, t + h, state.step + 1, state.model)


# -- initial data ----------------------------------------------------------------------


def initial_section(sys: HamiltonianSystem, spec: GridSpec, y_exprs, p0_exprs, t0: float = 0.0,
                    model: str | None = None) -> SectionGrid:
    """Section from expressions in x for y^A and p^0_A on the slice x^0 = t0; p^i follow from y."""
    plan = evolution_plan(sys)
    c = sys.coords
    mesh = spec.mesh()
    xs = _xs(spec, t0, mesh)
    S = spec.spatial_shape
    y = np.stack([np.broadcast_to(compile_expr(sympy.sympify(e), c.x)(*xs), S) for e in y_exprs]).astype(float)
    p0 = np.stack([np.broadcast_to(compile_expr(sympy.sympify(e), c.x)(*xs), S) for e in p0_exprs]).astype(float)
    sp = spatial_momenta(plan, y, spec, t0, mesh)
    p = np.concatenate([p0[None], sp]) if c.m > 1 else p0[None]
    return SectionGrid(y, p, t0, 0, model or sys.name)


def zero_section(sys: HamiltonianSystem, spec: GridSpec) -> SectionGrid:
    S = spec.spatial_shape
    return SectionGrid(np.zeros((sys.N,) + S), np.zeros((sys.m, sys.N) + S), 0.0, 0, sys.name)


# -- residuals ------------------------------------------------------------------------


def residuals(sys: HamiltonianSystem, states, spec: GridSpec) -> dict:
    """L-infinity residuals of the field equations at the middle of consecutive slices.

    ``states``: three or more consecutive slices; every interior slice is
    checked and the maximum reported.  Time derivatives are centered;
    spatial derivatives use fourth-order centered stencils.
    """
    states = list(states)
    if len(states) < 3:
        raise ValueError("residuals need at least three consecutive slices")
    plan = evolution_plan(sys)
    mesh = spec.mesh()
    out = {"y_evolution": 0.0, "p_divergence": 0.0}
    if plan.m > 1:
        out["spatial_p"] = 0.0
    for k in range(1, len(states) - 1):
        a, b, c = states[k - 1], states[k], states[k + 1]
        dt = c.t - a.t
        dy = (c.y - a.y) / dt - _drift(plan, b.p[0], spec, b.t, mesh)
        out["y_evolution"] = max(out["y_evolution"], float(np.abs(dy).max()))
        sp = b.p[1:]
        dp = (c.p[0] - a.p[0]) / dt - _kick(plan, b.y, sp, spec, b.t, mesh, deriv=centered4)
        out["p_divergence"] = max(out["p_divergence"], float(np.abs(dp).max()))
        if plan.m > 1:
            exact = spatial_momenta(plan, b.y, spec, b.t, mesh, deriv=centered4)
            out["spatial_p"] = max(out["spatial_p"], float(np.abs(sp - exact).max()))
    return out


# -- conserved currents -----------------------------------------------------------------


class CurrentEvaluator:
    """Numeric pullback of an (m-1)-form through sampled sections."""

    def __init__(self, sys: HamiltonianSystem, xi: DiffForm, spec: GridSpec):
        if xi.degree != sys.m - 1:
            raise ValueError(f"expected an {sys.m - 1}-form, got degree {xi.degree}")
        self.sys, self.xi, self.spec = sys, xi, spec
        c = sys.coords
        self.terms = [(I, compile_expr(coef, c.symbols)) for I, coef in xi.terms.items()]
        self.mesh = spec.mesh()

    def _point_args(self, st: SectionGrid) -> list:
        c = self.sys.coords
        xs = _xs(self.spec, st.t, self.mesh)
        args = list(xs) + [st.y[a] for a in range(c.N)]
        args += [st.p[mu][a] for mu in range(c.m) for a in range(c.N)]
        return args

    def _coefficient(self, st: SectionGrid, K: tuple, jac) -> np.ndarray:
        """Coefficient of dx^K in the pullback, given d(coordinate)/dx^nu arrays ``jac``."""
        S = self.spec.spatial_shape
        args = self._point_args(st)
        total = np.zeros(S)
        for I, fn in self.terms:
            val = np.broadcast_to(fn(*args), S)
            if not I:
                total = total + val
                continue
            M = np.stack([np.stack([jac(i, nu) for nu in K], axis=-1) for i in I], axis=-2)
            total = total + val * (np.linalg.det(M) if M.shape[-1] else 1.0)
        return total

    def _jacobian(self, st: SectionGrid, prev: SectionGrid | None, nxt: SectionGrid | None):
        spec, c, S = self.spec, self.sys.coords, self.spec.spatial_shape
        fields = [st.y[a] for a in range(c.N)] + [st.p[mu][a] for mu in range(c.m) for a in range(c.N)]
        if prev is not None and nxt is not None:
            dt = nxt.t - prev.t
            tf = [(nxt.y[a] - prev.y[a]) / dt for a in range(c.N)]
            tf += [(nxt.p[mu][a] - prev.p[mu][a]) / dt for mu in range(c.m) for a in range(c.N)]
        else:
            tf = None
        m = c.m

        def jac(i, nu):
            if i < m:
                return np.full(S, 1.0 if i == nu else 0.0)
            if nu == 0:
                if tf is None:
                    raise ValueError("time derivatives need neighbouring slices")
                return tf[i - m]
            return centered(fields[i - m], nu - 1, spec.h[nu])
        return jac

    def density(self, st: SectionGrid) -> np.ndarray:
        """J^0: coefficient of dx^1 ^ ... ^ dx^{m-1}."""
        K = tuple(range(1, self.sys.m))
        return self._coefficient(st, K, self._jacobian(st, None, None))

    def charge(self, st: SectionGrid) -> float:
        return float(self.density(st).sum() * self.spec.cell_volume())

    def components(self, prev, st, nxt) -> list:
        """J^mu with pullback = sum_mu J^mu d^{m-1}x_mu."""
        m = self.sys.m
        jac = self._jacobian(st, prev, nxt)
        out = []
        for mu in range(m):
            K = tuple(nu for nu in range(m) if nu != mu)
            out.append((-1) ** mu * self._coefficient(st, K, jac))
        return out

    def divergence(self, prev, st, nxt) -> np.ndarray:
        """d of the pulled-back form at the middle slice, as the d^m x coefficient."""
        m = self.sys.m
        dt = nxt.t - prev.t
        div = (self.density(nxt) - self.density(prev)) / dt
        if m > 1:
            J = self.components(prev, st, nxt)
            for mu in range(1, m):
                div = div + centered(J[mu], mu - 1, self.spec.h[mu])
        return div


def charge_drift(charges) -> dict:
    q = np.asarray(charges, dtype=float)
    q0 = q[0]
    absd = float(np.abs(q - q0).max())
    return {"initial": float(q0), "absolute": absd, "relative": absd / abs(q0) if q0 != 0 else math.inf}


def conserved_current(sys: HamiltonianSystem, xi: DiffForm, states, spec: GridSpec) -> dict:
    """Divergence (L-inf) over interior slices and the drift of the per-slice charge."""
    ev = CurrentEvaluator(sys, xi, spec)
    states = list(states)
    div = 0.0
    for k in range(1, len(states) - 1):
        div = max(div, float(np.abs(ev.divergence(states[k - 1], states[k], states[k + 1])).max()))
    charges = [ev.charge(s) for s in states]
    return {"divergence": div, "drift": charge_drift(charges), "charges": charges}


# -- runs --------------------------------------------------------------------------------


@dataclass
class RunResult:
    final: SectionGrid
    tail: list
    snapshots: list
    charges: dict
    steps: int
    wallclock: float
    scheme: str

    def summary(self, sys: HamiltonianSystem, spec: GridSpec) -> dict:
        res = residuals(sys, self.tail, spec) if len(self.tail) >= 3 else {}
        return {
            "steps": self.steps,
            "scheme": self.scheme,
            "residuals": res,
            "current_drift": {k: charge_drift(v) for k, v in self.charges.items()},
            "wallclock": self.wallclock,
        }


def simulate(sys: HamiltonianSystem, state: SectionGrid, spec: GridSpec, scheme: str = "euler",
             currents: dict | None = None, snapshot_every: int = 0, keep_all: bool = False) -> RunResult:
    """Run ``spec.steps`` steps, tracking per-slice charges of the given (m-1)-forms."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    plan = evolution_plan(sys)
    state.check(spec, sys.N)
    currents = currents or {}
    t0 = _time.perf_counter()
    if plan.m == 1 and not keep_all and not snapshot_every:
        return _simulate_mechanics(sys, plan, state, spec, scheme, currents, t0)
    evs = {k: CurrentEvaluator(sys, v, spec) for k, v in currents.items()}
    charges = {k: [ev.charge(state)] for k, ev in evs.items()}
    mesh = spec.mesh()
    tail = [state]
    snaps = [state]
    allst = [state] if keep_all else None
    cur = state
    for n in range(spec.steps):
        cur = step(sys, cur, spec, scheme, _mesh=mesh)
        for k, ev in evs.items():
            charges[k].append(ev.charge(cur))
        tail = (tail + [cur])[-3:]
        if snapshot_every and (n + 1) % snapshot_every == 0:
            snaps.append(cur)
        if keep_all:
            allst.append(cur)
    if snaps[-1] is not cur:
        snaps.append(cur)
    res = RunResult(cur, tail, allst if keep_all else snaps, charges, spec.steps,
                    _time.perf_counter() - t0, scheme)
    return res


def _simulate_mechanics(sys, plan, state, spec, scheme, currents, t0):
    """Scalar loop for m = 1 (plain floats, no array overhead)."""
    c = sys.coords
    N = c.N
    h = spec.dt
    A = plan.A00.tolist()
    force = plan.force_scalar
    drift = plan.drift_scalar
    y = [float(v) for v in state.y]
    p = [float(v) for v in state.p[0]]
    t = state.t
    qfns = {k: compile_scalar(v.value(), c.symbols) for k, v in currents.items()}
    charges = {k: [fn(t, *y, *p)] for k, fn in qfns.items()}
    hist = [(t, list(y), list(p))]
    rng = range(N)
    leap = scheme == "leapfrog"
    for n in range(spec.steps):
        try:
            if leap:
                f = [force[a](t, *y) for a in rng]
                p = [p[a] + 0.5 * h * f[a] for a in rng]
                th = t + 0.5 * h
                y = [y[a] + h * (sum(A[a][b] * p[b] for b in rng) + drift[a](th)) for a in rng]
                t += h
                f = [force[a](t, *y) for a in rng]
                p = [p[a] + 0.5 * h * f[a] for a in rng]
            else:
                f = [force[a](t, *y) for a in rng]
                p = [p[a] + h * f[a] for a in rng]
                y = [y[a] + h * (sum(A[a][b] * p[b] for b in rng) + drift[a](t)) for a in rng]
                t += h
            for k, fn in qfns.items():
                charges[k].append(fn(t, *y, *p))
            if not all(math.isfinite(v) for v in y + p):
                raise BlowUpError(f"non-finite value after step {n + 1}", n + 1)
        except OverflowError:
            raise BlowUpError(f"overflow during step {n + 1}", n + 1) from None
        if n >= spec.steps - 3:
            hist.append((t, list(y), list(p)))
    t_end = _time.perf_counter() - t0
    last = hist[-3:]
    tail = [SectionGrid(np.array(yy), np.array([pp]), tt, spec.steps - len(last) + 1 + i, state.model)
            for i, (tt, yy, pp) in enumerate(last)]
    final = tail[-1]
    return RunResult(final, tail, [state, final], charges, spec.steps, t_end, scheme)
