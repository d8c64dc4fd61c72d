import random

import pytest
import sympy

from msym import (Connection, CoordSystem, DiffForm, QuadraticLagrangian, Space, build_hamiltonian_system,
                  legendre_map, parse, poincare_cartan)
from msym.bundle import metric_inverse, one_nondegenerate_at
from msym.errors import HyperRegularityError, UnsupportedCaseError, WrongSpaceError
from msym.expr import is_structurally_zero
from msym.exterior import d, wedge

from oracles import Dense, random_poly

MM21 = CoordSystem(2, 1, Space.MULTIMOMENTUM)
S = sympy.Symbol


def B(c, *names):
    return DiffForm.basis(c, *names)


def test_zero_hamiltonian_theta_m2():
    sys = build_hamiltonian_system(0, m=2, N=1)
    expected = wedge(B(MM21, "dy0"), B(MM21, "dx1")) * S("p0_0") - wedge(B(MM21, "dy0"), B(MM21, "dx0")) * S("p1_0")
    assert sys.theta == expected
    assert "zero connection" in sys.notices[0]


def test_identity_metric_omega_matches_display():
    f = parse("y0^3/3 - 2*y0")
    H = parse("p0_0^2/2 + p1_0^2/2") - f
    sys = build_hamiltonian_system(H, m=2, N=1)
    c = MM21
    vm = [B(c, "dx1"), -B(c, "dx0")]
    expected = wedge(d(DiffForm.function(c, H)), B(c, "dx0", "dx1"))
    for mu in range(2):
        expected = expected - wedge(wedge(B(c, f"dp{mu}_0"), B(c, "dy0")), vm[mu])
    assert sys.omega == expected
    # independent oracle: components of -d Theta
    assert (Dense.of(sys.theta).d()).matches(sys.omega * -1)


def test_local_hamiltonian_shift_with_connection():
    gam = Connection(2, 2, ((parse("x0*y1"), parse("y0^2")), (0, parse("x1"))))
    H = parse("p0_0*p1_1 + y0")
    sys = build_hamiltonian_system(H, gam)
    c = sys.coords
    shift = sum(c.p[mu][a] * gam[mu, a] for mu in range(2) for a in range(2))
    assert is_structurally_zero(sys.H_local - sys.H - shift)
    assert sys.notices == ()


def test_mechanics_theta_is_poincare_cartan():
    c = CoordSystem(1, 1, Space.MULTIMOMENTUM)
    H = parse("p0_0^2/2 + y0^2/2")
    sys = build_hamiltonian_system(H, m=1, N=1)
    assert sys.theta == B(c, "dy0") * S("p0_0") - B(c, "dx0") * H


def test_wrong_space_rejected():
    with pytest.raises(WrongSpaceError):
        build_hamiltonian_system(parse("v0_0^2"), m=1, N=1)
    with pytest.raises(WrongSpaceError):
        Connection(1, 1, ((parse("p0_0"),),))


def test_omega_is_minus_d_theta_on_random_systems():
    rng = random.Random(5)
    for m, N in [(1, 1), (2, 1), (2, 2), (3, 1)]:
        c = CoordSystem(m, N, Space.MULTIMOMENTUM)
        E = list(c.x) + list(c.y)
        H = random_poly(rng, c.symbols, terms=4, max_deg=3)
        gam = Connection(m, N, tuple(tuple(random_poly(rng, E, 2, 2) for _ in range(N)) for _ in range(m)))
        sys = build_hamiltonian_system(H, gam)
        assert (d(sys.theta) * -1).equals(sys.omega)


# -- Lagrangians -----------------------------------------------------------------------------


def identity_lagrangian(f="y0^3/3"):
    return QuadraticLagrangian(2, 1, sympy.eye(2), ((0,), (0,)), parse(f))


def test_legendre_identity_metric():
    L = identity_lagrangian()
    lm = legendre_map(L)
    mm, jet = lm.system.coords, L.jet
    for mu in range(2):
        assert lm.forward[mm.p[mu][0]] == jet.v[mu][0]
    assert is_structurally_zero(lm.system.H - (parse("p0_0^2/2 + p1_0^2/2") - L.f))


def test_legendre_scaled_metric_hand_oracle():
    """[DERIVED] L = v^2 + f: p = 2v, H = p^2/4 - f."""
    f = parse("y0^2")
    L = QuadraticLagrangian(1, 1, sympy.Matrix([[2]]), ((0,),), f)
    lm = legendre_map(L)
    assert lm.forward[S("p0_0")] == 2 * S("v0_0")
    assert is_structurally_zero(lm.system.H - (S("p0_0") ** 2 / 4 - f))
    assert lm.inverse[S("v0_0")] == S("p0_0") / 2


def test_legendre_pullback_theta_matches_poincare_cartan():
    for L in [identity_lagrangian(),
              QuadraticLagrangian(2, 2, sympy.Matrix([[2, 1, 0, 0], [1, 3, 0, 0], [0, 0, -1, 0], [0, 0, 0, 1]]),
                                  ((parse("x1"), 0), (0, parse("x0^2"))), parse("y0*y1 - y1^3")),
              QuadraticLagrangian(1, 2, sympy.Matrix([[parse("1 + y0^2"), 0], [0, 1]]), ((0, 0),), parse("y1"))]:
        lm = legendre_map(L)
        theta_L, omega_L = poincare_cartan(L)
        assert lm.pull_to_jet(lm.system.theta).equals(theta_L)
        assert lm.pull_to_jet(lm.system.omega).equals(omega_L)
        assert lm.system.connection.gamma == L.gamma


def test_inverse_undoes_forward():
    L = QuadraticLagrangian(1, 2, sympy.Matrix([[parse("2 + y1^2"), 1], [1, 1]]), ((0, 0),), 0)
    lm = legendre_map(L)
    for v, e in lm.inverse.items():
        assert is_structurally_zero(sympy.sympify(e).subs(lm.forward, simultaneous=True) - v)


def test_singular_metric_rejected():
    L = QuadraticLagrangian(1, 2, sympy.Matrix([[1, 0], [0, 0]]), ((0, 0),), 0)
    with pytest.raises(HyperRegularityError):
        legendre_map(L)
    with pytest.raises(HyperRegularityError):
        metric_inverse(sympy.Matrix([[0]]))


def test_large_y_dependent_metric_unsupported():
    a = sympy.eye(6) + sympy.diag(*[parse("y0^2")] * 6)
    with pytest.raises(UnsupportedCaseError):
        metric_inverse(a)


def test_metric_must_be_symmetric():
    with pytest.raises(ValueError):
        QuadraticLagrangian(1, 2, sympy.Matrix([[1, 2], [0, 1]]), ((0, 0),), 0)


def test_poincare_cartan_free_particle():
    """[DERIVED] L = v^2/2 gives Theta_L = v dy - v^2/2 dt."""
    L = QuadraticLagrangian(1, 1, sympy.Matrix([[1]]), ((0,),), 0)
    theta, omega = poincare_cartan(L)
    jet = L.jet
    v = S("v0_0")
    assert theta == B(jet, "dy0") * v - B(jet, "dx0") * (v**2 / 2)
    assert omega == d(theta) * -1


def test_poincare_cartan_of_zero_lagrangian():
    L = QuadraticLagrangian(1, 1, sympy.Matrix([[0]]), ((0,),), 0)
    theta, _ = poincare_cartan(L)
    assert theta.is_zero()


def test_omega_L_one_nondegenerate_identity_metric():
    L = identity_lagrangian()
    _, omega = poincare_cartan(L)
    rng = random.Random(9)
    pt = {s: rng.uniform(-1, 1) for s in L.jet.symbols}
    assert one_nondegenerate_at(omega, pt)
