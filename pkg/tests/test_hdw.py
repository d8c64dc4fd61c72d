import itertools
import random

import numpy as np
import pytest
import sympy

from msym import Connection, CoordSystem, Space, build_hamiltonian_system, parse
from msym.errors import GaugeError, InternalConsistencyError
from msym.expr import evaluate, is_structurally_zero
from msym.exterior import SymbolicSection, contract, coordinate_vector, pullback
from msym.hdw import (Flatness, ResidualError, assemble_and_verify, count_freedom, curvature, curvature_components,
                      default_gauge, derive, free_slots, random_gauge, slot_name, solve_F, solve_G, trace_target,
                      zero_gauge)

from oracles import Dense, random_poly

S = sympy.Symbol


def quadratic_model(f="y0^3/3 - y0^2/2 + 2*y0"):
    return build_hamiltonian_system(parse("p0_0^2/2 + p1_0^2/2") - parse(f), m=2, N=1)


# -- count_freedom -------------------------------------------------------------------------


@pytest.mark.parametrize("m,N,expected", [(2, 1, 3), (1, 1, 0), (1, 4, 0), (3, 2, 16), (3, 1, 8)])
def test_count_freedom(m, N, expected):
    assert count_freedom(m, N) == expected
    assert len(free_slots(m, N)) == expected


# -- solve_F ------------------------------------------------------------------------------


def test_F_identity_metric_is_p():
    F = solve_F(quadratic_model())
    assert F == [[S("p0_0")], [S("p1_0")]]


def test_F_and_G_vanish_for_zero_hamiltonian():
    sys = build_hamiltonian_system(0, m=2, N=2)
    F = solve_F(sys)
    G, _ = solve_G(sys)
    assert all(e == 0 for row in F for e in row)
    assert all(e == 0 for blk in G for row in blk for e in row)


def test_F_general_metric_matches_matrix_product():
    """[DERIVED] F = a p via numpy at 10 random points."""
    m, N = 2, 2
    c = CoordSystem(m, N, Space.MULTIMOMENTUM)
    rng = random.Random(2)
    n = m * N
    A = sympy.zeros(n, n)
    for i in range(n):
        for j in range(i, n):
            A[i, j] = A[j, i] = sympy.Rational(rng.randint(-4, 4), rng.randint(1, 3))
    pvec = [c.p[mu][a] for mu in range(m) for a in range(N)]
    H = sympy.Rational(1, 2) * (sympy.Matrix([pvec]) * A * sympy.Matrix(pvec))[0, 0] - S("y0") * S("y1") ** 2
    F = solve_F(build_hamiltonian_system(H, m=m, N=N))
    An = np.array(A.tolist(), dtype=float)
    for _ in range(10):
        pt = {s: rng.uniform(-2, 2) for s in c.symbols}
        expected = An @ np.array([pt[p] for p in pvec])
        got = [evaluate(F[mu][a], pt) for mu in range(m) for a in range(N)]
        assert np.allclose(got, expected, rtol=1e-12, atol=1e-12)


# -- solve_G ------------------------------------------------------------------------------


def test_G_trace_is_df():
    f = parse("y0^3/3 - y0^2/2 + 2*y0")
    sys = quadratic_model()
    G, _ = solve_G(sys)
    assert is_structurally_zero(G[0][0][0] + G[1][1][0] - sympy.diff(f, S("y0")))


def test_G_forced_entry_with_zero_diagonal_gauge():
    """[DERIVED] gauge G0_00 = 0 leaves the single trace equation G1_01 = df/dy."""
    f = parse("y0^2 - y0^3")
    sys = quadratic_model("y0^2 - y0^3")
    gauge = {"G0_0_0": 0, "G0_0_1": 0, "G1_0_0": 0}
    G, g = solve_G(sys, gauge)
    assert is_structurally_zero(G[1][1][0] - sympy.diff(f, S("y0")))
    assert set(g) == set(gauge)


def test_gauge_entries_reproduced_verbatim():
    sys = quadratic_model()
    gauge = {"G0_0_0": parse("x1*p0_0"), "G0_0_1": parse("y0"), "G1_0_0": parse("3")}
    X = derive(sys, gauge)
    for k, v in gauge.items():
        assert X.gauge[k] == v
    assert X.G[0][0][0] == parse("x1*p0_0") and X.G[1][0][0] == parse("y0") and X.G[0][1][0] == 3


def test_trace_is_gauge_independent():
    rng = random.Random(0)
    c = CoordSystem(3, 2, Space.MULTIMOMENTUM)
    H = random_poly(rng, c.symbols, terms=5, max_deg=3)
    sys = build_hamiltonian_system(H, m=3, N=2)
    target = trace_target(sys)
    for gauge in [None, zero_gauge(sys), random_gauge(sys, seed=1), random_gauge(sys, seed=2)]:
        X = derive(sys, gauge)
        assert all(is_structurally_zero(t - e) for t, e in zip(X.trace(), target))


def test_gauge_count_errors_list_slots():
    sys = quadratic_model()
    with pytest.raises(GaugeError) as exc:
        solve_G(sys, {"G0_0_0": 0, "G0_0_1": 0})
    assert exc.value.slots == ("G1_0_0",)
    with pytest.raises(GaugeError) as exc:
        solve_G(sys, {"G0_0_0": 0, "G0_0_1": 0, "G1_0_0": 0, "G1_0_1": 0})
    assert "G1_0_1" in exc.value.slots and "trace-determined" in str(exc.value)
    with pytest.raises(GaugeError):
        solve_G(sys, {"G0_0_0": 0, "G0_0_1": 0, "G1_0_0": 0, "G7_0_0": 0})
    with pytest.raises(GaugeError):
        solve_G(sys, {"G0_0_0": 0, "G0_0_1": 0, "bogus": 0})


def test_default_gauge_splits_trace_evenly():
    sys = build_hamiltonian_system(parse("p0_0^2/2 + p1_0^2/2 + p2_0^2/2 - y0^4"), m=3, N=1)
    G, g = solve_G(sys)
    diag = [G[mu][mu][0] for mu in range(3)]
    assert all(is_structurally_zero(e - 4 * S("y0") ** 3 / 3) for e in diag)
    assert all(G[mu][rho][0] == 0 for mu in range(3) for rho in range(3) if mu != rho)
    assert len(g) == count_freedom(3, 1)


# -- m = 1 reduction ----------------------------------------------------------------------


def test_mechanics_recovers_hamilton_equations():
    H = parse("p0_0^2/2 + p0_1^2/2 + y0^2*y1")
    sys = build_hamiltonian_system(H, m=1, N=2)
    X = derive(sys)
    for a in range(2):
        assert X.F[0][a] == sympy.diff(H, S(f"p0_{a}"))
        assert is_structurally_zero(X.G[0][0][a] + sympy.diff(H, S(f"y{a}")))
    assert X.gauge == {}


# -- assemble_and_verify -------------------------------------------------------------------


def test_quadratic_model_default_gauge_verified():
    X = derive(quadratic_model())
    assert X.to_json()["residual"] == "0"
    assert len(X.factors) == 2
    for mu, fac in enumerate(X.factors):
        assert fac.component(S(f"x{mu}")) == 1
    # oracle: dense contraction factor by factor
    o = Dense.of(X.system.omega)
    for fac in reversed(X.factors):
        o = o.interior({k[0]: v for k, v in fac.terms.items()})
    assert all(sympy.expand(v) == 0 for v in o.comp.values())


def test_random_hamiltonians_give_zero_residual():
    for seed in range(5):
        rng = random.Random(100 + seed)
        c = CoordSystem(2, 2, Space.MULTIMOMENTUM)
        H = random_poly(rng, c.symbols, terms=5, max_deg=3)
        derive(build_hamiltonian_system(H, m=2, N=2), "random", seed=seed)


def test_oracle_equivalence_over_dimensions():
    rng = random.Random(11)
    for m, N in itertools.product([1, 2, 3], [1, 2]):
        c = CoordSystem(m, N, Space.MULTIMOMENTUM)
        E = list(c.x) + list(c.y)
        H = random_poly(rng, c.symbols, terms=4, max_deg=3)
        gam = Connection(m, N, tuple(tuple(random_poly(rng, E, 2, 2) for _ in range(N)) for _ in range(m)))
        sys = build_hamiltonian_system(H, gam)
        X = derive(sys, "random", seed=rng.randint(0, 999))
        assert contract(X.multivector, sys.omega).is_zero()


def test_corrupted_G_entry_reported():
    sys = quadratic_model()
    F = solve_F(sys)
    G, g = solve_G(sys)
    G[0][0][0] = G[0][0][0] + 1
    with pytest.raises(ResidualError) as exc:
        assemble_and_verify(sys, F, G, g)
    assert "dy0" in exc.value.offending
    assert isinstance(exc.value, InternalConsistencyError)


def test_corrupted_F_entry_reported():
    sys = quadratic_model()
    F = solve_F(sys)
    G, g = solve_G(sys)
    F[1][0] = F[1][0] + S("y0")
    with pytest.raises(ResidualError) as exc:
        assemble_and_verify(sys, F, G, g)
    assert any(k.startswith("dp") for k in exc.value.offending)


def test_exact_section_annihilates_all_contractions():
    """Plane wave y = sin(x1 - x0) of H = (-p0^2 + p1^2)/2."""
    sys = build_hamiltonian_system(parse("-p0_0^2/2 + p1_0^2/2"), m=2, N=1)
    base = CoordSystem(2, 1, Space.BASE)
    psi = SymbolicSection(base, {"y0": "sin(x1 - x0)", "p0_0": "cos(x1 - x0)", "p1_0": "cos(x1 - x0)"})
    for s in sys.coords.symbols:
        w = contract(coordinate_vector(sys.coords, s), sys.omega)
        assert pullback(w, psi).is_zero()
    # a non-solution is caught
    bad = SymbolicSection(base, {"y0": "sin(x1 - x0)", "p0_0": "0", "p1_0": "cos(x1 - x0)"})
    assert not pullback(contract(coordinate_vector(sys.coords, S("p0_0")), sys.omega), bad).is_zero()


# -- curvature ------------------------------------------------------------------------------


def test_curvature_empty_for_mechanics():
    sys = build_hamiltonian_system(parse("p0_0^2/2 + y0^3"), m=1, N=1)
    rep = curvature(derive(sys))
    assert rep.components == [] and rep.flat is Flatness.STRUCTURAL


def test_curvature_component_count():
    for m, N in [(2, 1), (3, 2)]:
        sys = build_hamiltonian_system(0, m=m, N=N)
        assert len(curvature_components(derive(sys))) == (m * (m - 1) // 2) * (N + N * m)


def test_free_field_zero_gauge_is_flat():
    """[DERIVED] F = p, G = 0: all bracket components are derivatives of constants."""
    sys = quadratic_model("0")
    rep = curvature(derive(sys, "zero"))
    assert rep.flat is Flatness.STRUCTURAL
    assert all(e == 0 for _, e in rep.components)


def test_y_gauge_gives_curvature_witness():
    """[DERIVED] G0_00 = y0 forces G1_01 = -y0; the p0 component of [X0, X1] is -p1."""
    sys = quadratic_model("0")
    X = derive(sys, {"G0_0_0": S("y0"), "G0_0_1": 0, "G1_0_0": 0})
    rep = curvature(X)
    assert rep.flat is Flatness.NO
    comps = dict(rep.components)
    assert is_structurally_zero(comps["p0_0[0,1]"] + S("p1_0"))
    assert abs(evaluate(comps[rep.witness_component], rep.witness)) >= 1e-9


def test_curvature_numeric_flat_for_transcendental_identity():
    sys = quadratic_model("0")
    g = {"G0_0_0": parse("sin(x0)^2 + cos(x0)^2 - 1"), "G0_0_1": 0, "G1_0_0": 0}
    rep = curvature(derive(sys, g))
    assert rep.flat in (Flatness.STRUCTURAL, Flatness.NUMERIC)


def test_slot_naming_round_trip():
    assert slot_name(1, 0, 2) == "G1_0_2"
    sys = quadratic_model()
    assert set(default_gauge(sys)) == {"G0_0_0", "G0_0_1", "G1_0_0"}
