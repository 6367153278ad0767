import numpy as np
import pytest
from hypothesis import given, strategies as st

from latticehqc.errors import DomainViolation, NonCoercive
from latticehqc.experiments import build_model_1d
from latticehqc.grid import LatticeFn1D, PeriodicGrid1D
from latticehqc.model import (AtomisticModel, Harmonic, LennardJones, energy, linearize, residual,
                              solve_full, solve_linear, solve_linear_nn, tangent_apply,
                              tangent_matrix)

seeds = st.integers(0, 2**32 - 1)


def zero_mean(rng, n, scale=1.0):
    f = scale * rng.normal(size=n)
    return f - f.mean()


def lj_model(N, rng, R=2, amplitude=0.2):
    l = rng.uniform(1.0, 1.1, size=2)
    return AtomisticModel(N, [LennardJones(l) for _ in range(R)], zero_mean(rng, N, amplitude), p=2)


def harmonic_model(N, rng, R=3, p=2, f=None):
    k = rng.uniform(1.0, 2.0, size=(R, p))
    pots = [Harmonic(k[r - 1], float(r)) for r in range(1, R + 1)]
    return AtomisticModel(N, pots, zero_mean(rng, N) if f is None else f, p=p)


def small_u(rng, N, scale=0.1):
    # displacements of order eps keep every bond near its reference length
    return zero_mean(rng, N, scale / N)


# -- pair potentials -------------------------------------------------------


@given(seeds)
def test_potential_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pots = [LennardJones(rng.uniform(0.8, 1.3)), Harmonic(rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                                                          rng.uniform(-1, 1))]
    for pot in pots:
        z = rng.uniform(0.9, 1.6) * (pot.l if isinstance(pot, LennardJones) else 1.0)
        h = 1e-5 * max(1.0, abs(z))
        d1 = (pot.eval(z + h) - pot.eval(z - h)) / (2 * h)
        d2 = (pot.deriv(z + h) - pot.deriv(z - h)) / (2 * h)
        assert d1 == pytest.approx(pot.deriv(z), rel=1e-6, abs=1e-9)
        assert d2 == pytest.approx(pot.deriv2(z), rel=1e-6, abs=1e-9)


def test_lennard_jones_minimum_and_stiffness():
    lj = LennardJones(1.0)
    assert lj.eval(1.0) == -1.0 and lj.deriv(1.0) == 0.0
    assert lj.deriv2(1.0) == 72.0
    h = 1e-6
    assert (lj.deriv(1 + h) - lj.deriv(1 - h)) / (2 * h) == pytest.approx(72.0, rel=1e-8)
    with pytest.raises(ValueError):
        LennardJones(0.0)


# -- model and energy ------------------------------------------------------


def test_model_validation():
    with pytest.raises(ValueError):
        AtomisticModel(4, [Harmonic(1.0, 1.0)], np.ones(4))
    with pytest.raises(ValueError):
        AtomisticModel(6, [Harmonic([1.0, 2.0, 3.0, 4.0], 1.0)], np.zeros(6), p=4)
    with pytest.raises(ValueError):
        AtomisticModel(4, [], np.zeros(4))


def test_energy_examples():
    m = AtomisticModel(2, [Harmonic([1.0, 2.0], 1.0)], np.zeros(2), p=2)
    assert energy(m, np.zeros(2)) == 0.0
    assert energy(m, np.array([0.0, 0.25])) == pytest.approx(0.1875, rel=1e-15)
    # with f = 0 only the bond part remains, whatever u is
    u = np.array([0.3, -0.1])
    z = 1 + (np.roll(u, -1) - u) / 0.5
    assert energy(m, u) == pytest.approx(np.mean(0.5 * np.array([1.0, 2.0]) * (z - 1) ** 2))


def test_domain_violation_reports_bond():
    m = AtomisticModel(4, [LennardJones(1.0)], np.zeros(4))
    u = np.array([0.0, 0.0, 0.0, 0.0])
    u[1] = -0.2  # bond (1, 2) gets z = 1 - 0.8 = 0.2 < 0.3
    with pytest.raises(DomainViolation) as info:
        energy(m, u)
    assert info.value.site == 1 and info.value.r == 1
    assert info.value.z == pytest.approx(0.2)
    with pytest.raises(DomainViolation):
        residual(m, u)
    with pytest.raises(DomainViolation):
        tangent_matrix(m, u)


def test_linear_nn_residual_is_strong_form(rng):
    N = 16
    psi = rng.uniform(1, 2, size=N)
    f = zero_mean(rng, N)
    m = AtomisticModel(N, [Harmonic(psi, 1.0)], f, p=N)
    u = small_u(rng, N)
    eps = 1.0 / N
    a = psi * (np.roll(u, -1) - u) / eps
    strong = -(a - np.roll(a, 1)) / eps - f
    assert np.allclose(residual(m, u).values, strong, rtol=1e-12, atol=1e-10)


def test_residual_is_energy_gradient_with_second_order_error(rng):
    m = lj_model(12, rng)
    u = small_u(rng, 12)
    v = rng.normal(size=12) / 12
    exact = np.mean(residual(m, u).values * v)
    errs = []
    for h in (1e-4, 1e-5, 1e-6):
        fd = (energy(m, u + h * v) - energy(m, u - h * v)) / (2 * h)
        errs.append(abs(fd - exact))
    assert errs[2] <= 1e-8 * abs(exact)
    # error ratio of a second order difference under a 10x step reduction
    assert 0.005 < errs[1] / errs[0] < 0.02


def test_tangent_examples(rng):
    m = lj_model(10, rng)
    u = small_u(rng, 10)
    assert np.allclose(tangent_apply(m, u, np.full(10, 3.0)).values, 0.0, atol=1e-8)
    q = harmonic_model(10, rng)
    A0 = tangent_matrix(q, np.zeros(10)).to_dense()
    A1 = tangent_matrix(q, small_u(rng, 10)).to_dense()
    assert np.array_equal(A0, A1)


@given(seeds)
def test_tangent_matches_residual_differences(seed):
    rng = np.random.default_rng(seed)
    m = lj_model(10, rng, R=3)
    u = small_u(rng, 10)
    w = rng.normal(size=10)
    h = 1e-6
    fd = (residual(m, u + h * w).values - residual(m, u - h * w).values) / (2 * h)
    exact = tangent_apply(m, u, w).values
    assert np.allclose(fd, exact, rtol=1e-5, atol=1e-5 * np.abs(exact).max())


@given(seeds)
def test_tangent_symmetry(seed):
    rng = np.random.default_rng(seed)
    m = lj_model(10, rng, R=3) if seed % 2 else harmonic_model(8, rng)
    u = small_u(rng, m.N)
    v, w = rng.normal(size=(2, m.N))
    a = np.mean(tangent_apply(m, u, w).values * v)
    b = np.mean(tangent_apply(m, u, v).values * w)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12 * np.abs(tangent_matrix(m, u).bands).max())


@given(seeds)
def test_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    m = lj_model(8, rng)
    u = small_u(rng, 8)
    c = rng.normal()
    assert energy(m, u + c) == pytest.approx(energy(m, u), rel=1e-12, abs=1e-12)
    assert np.allclose(residual(m, u + c).values, residual(m, u).values, rtol=1e-12, atol=1e-9)


# -- solvers ---------------------------------------------------------------


def test_solve_full_zero_force():
    m = AtomisticModel(8, [LennardJones([1.0, 1.0])], np.zeros(8), p=2)
    u = solve_full(m)
    assert np.array_equal(u.values, np.zeros(8))


def test_quadratic_model_converges_in_one_step(rng):
    m = harmonic_model(32, rng)
    u, info = solve_full(m, u0=small_u(rng, 32), return_info=True)
    assert info.iterations == 1
    assert np.max(np.abs(residual(m, u).values)) <= 1e-10


def test_linear_chain_at_n256_matches_direct_linear_solve():
    m = build_model_1d("harmonic", (1.0, 2.0), 2**8, R=3)
    u, info = solve_full(m, newton_tol=1e-10, return_info=True)
    assert info.iterations <= 2
    assert np.max(np.abs(residual(m, u).values)) <= 1e-10
    lin = linearize(m)
    ref = solve_linear(lin.psi_r, lin.f_eff)
    assert np.allclose(u.values, ref.values, rtol=0, atol=1e-12)
    assert abs(u.values.mean()) < 1e-15


def test_lennard_jones_newton_converges():
    m = build_model_1d("lj", (1.0, 9 / 8), 2**8, R=3, amplitude=50.0)
    u, info = solve_full(m, return_info=True)
    assert info.iterations <= 20
    assert np.max(np.abs(residual(m, u).values)) <= 1e-10
    assert abs(u.values.mean()) <= 1e-15


def test_linearize_harmonic_reference():
    m = build_model_1d("harmonic", (1.0, 2.0), 8, R=3)
    lin = linearize(m)
    # storage class 0 is 1-based index 1 (odd): stiffness 2
    for r in range(1, 4):
        expected = np.tile([2.0, 1.0], 4) * 3.0 ** (1 - r) * r**2
        assert np.allclose(lin.psi_r[r - 1], expected)
    assert np.array_equal(lin.xi_r, np.zeros_like(lin.xi_r))
    assert np.array_equal(lin.f_eff, m.f)


def test_linearize_lennard_jones_reference():
    m = AtomisticModel(4, [LennardJones(1.0)], np.zeros(4))
    lin = linearize(m)
    h = 1e-6
    fd = (LennardJones(1.0).deriv(1 + h) - LennardJones(1.0).deriv(1 - h)) / (2 * h)
    assert np.allclose(lin.psi_r[0], fd, rtol=1e-8)
    assert np.allclose(lin.psi_r[0], 72.0)


def test_stretched_lennard_jones_bonds_have_negative_moduli():
    m = AtomisticModel(4, [LennardJones(1.0)], np.zeros(4))
    stretch = 0.2 * np.arange(4) / 4  # every bond stretched to z = 1.2, wrap bond compressed
    lin = linearize(m, stretch)
    assert np.any(lin.psi_r[0] <= 0)
    with pytest.raises(NonCoercive):
        solve_linear_nn(lin.psi_r[0], np.zeros(4))


@given(seeds)
def test_linearized_problem_reproduces_newton_step(seed):
    """Harmonic bonds with the linearized moduli and prestress give the linear solution."""
    rng = np.random.default_rng(seed)
    m = build_model_1d("lj", tuple(rng.uniform(1.0, 1.1, size=2)), 16, R=2, amplitude=5.0)
    lin = linearize(m)
    pots = [Harmonic(lin.psi_r[r - 1] / r**2, float(r), lin.xi_r[r - 1] / r) for r in (1, 2)]
    quad = AtomisticModel(16, pots, m.f, p=16)
    u = solve_full(quad, newton_tol=1e-12)
    ref = solve_linear(lin.psi_r, lin.f_eff)
    assert np.allclose(u.values, ref.values, rtol=0, atol=1e-10)


def test_solve_linear_nn_examples(rng):
    N = 16
    assert np.array_equal(solve_linear_nn(np.ones(N), np.zeros(N)).values, np.zeros(N))
    f = zero_mean(rng, N)
    u1 = solve_linear_nn(np.ones(N), f).values
    u3 = solve_linear_nn(np.full(N, 3.0), f).values
    assert np.allclose(u3, u1 / 3.0, rtol=1e-13)
    with pytest.raises(NonCoercive):
        solve_linear_nn(np.array([1.0, 0.0, 1.0, 1.0]), np.zeros(4))
    with pytest.raises(ValueError):
        solve_linear_nn(np.ones(4), np.ones(4))


@given(seeds)
def test_solve_linear_nn_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 4
    psi = rng.uniform(0.1, 3.0, size=n)
    f = zero_mean(rng, n)
    eps = 1.0 / n
    D = (np.roll(np.eye(n), -1, axis=0) - np.eye(n)) / eps
    A = D.T @ np.diag(psi) @ D
    # bordered system written out by hand
    M = np.block([[A, np.ones((n, 1))], [np.ones((1, n)), np.zeros((1, 1))]])
    ref = np.linalg.solve(M, np.append(f, 0.0))[:n]
    u = solve_linear_nn(psi, f).values
    assert np.allclose(u, ref, rtol=0, atol=1e-12 * max(1.0, np.abs(ref).max()))
    # variational identity against a random test function
    v = rng.normal(size=n)
    lhs = np.mean(psi * (D @ u) * (D @ v))
    assert lhs == pytest.approx(np.mean(f * v), abs=1e-12)
