import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latticehqc.errors import NonCoercive
from latticehqc.lattice2d import (SQUARE_NEIGHBORS, BondTensors2D, Grid2D, LatticeModel2D,
                                  NeighborSet, TriangleMesh2D, VectorFn2D, apply_2d,
                                  case2_bonds, checkerboard_bonds, checkerboard_closed_form,
                                  choose_sampling_2d, energy_2d, fem_p1_solve, force_case2d,
                                  h1_2d, homogenize_2d, hqc2d_solve, interpolate_p1, l2_2d,
                                  reconstruct_2d, residual_2d, solve_cell_2d, solve_full_2d,
                                  write_deformed_csv)

seeds = st.integers(0, 2**32 - 1)
AXES = NeighborSet(((1, 0), (0, 1)))


def random_bonds(rng, p=(2, 2), neighbors=SQUARE_NEIGHBORS, lo=0.5, hi=2.0):
    return BondTensors2D(neighbors, rng.uniform(lo, hi, size=(len(neighbors), *p)))


def zero_mean_force(rng, n1, n2):
    f = rng.normal(size=(n1, n2, 2))
    return f - f.mean(axis=(0, 1))


def dense_lattice_matrix(model):
    """Scalar stiffness matrix built bond by bond on the flattened lattice."""
    n1, n2 = model.grid.shape
    eps = model.grid.epsilon
    A = np.zeros((n1 * n2, n1 * n2))
    for k, r in enumerate(model.bonds.neighbors):
        h2 = (eps * np.hypot(*r)) ** 2
        for s1 in range(n1):
            for s2 in range(n2):
                a, b = s1 * n2 + s2, ((s1 + r[0]) % n1) * n2 + (s2 + r[1]) % n2
                w = model.psi[k, s1, s2] / h2 / (n1 * n2)
                A[a, a] += w
                A[b, b] += w
                A[a, b] -= w
                A[b, a] -= w
    return A


def cell_oracle(bonds, weights):
    """Minimise sum_r sum_j w_r(j) (r_alpha + chi(j + r) - chi(j))^2 over zero-mean chi."""
    p1, p2 = bonds.p
    P = p1 * p2
    A = np.zeros((P, P))
    b = np.zeros((2, P))
    for k, r in enumerate(bonds.neighbors):
        for j1 in range(p1):
            for j2 in range(p2):
                a = j1 * p2 + j2
                c = ((j1 + r[0]) % p1) * p2 + (j2 + r[1]) % p2
                if a == c:
                    continue
                w = weights[k, j1, j2]
                A[[a, c, a, c], [a, c, c, a]] += [w, w, -w, -w]
                for al in range(2):
                    b[al, a] += w * r[al]
                    b[al, c] -= w * r[al]
    return (np.linalg.pinv(A) @ b.T).T.reshape(2, p1, p2)


# -- data types --------------------------------------------------------------


def test_grid_and_vector_fields():
    g = Grid2D(4, 6)
    assert g.shape == (4, 6) and g.epsilon == 0.25
    assert np.allclose(g.sites()[0, 0], [0.25, 0.25])
    v = VectorFn2D(g, np.arange(48.0).reshape(4, 6, 2))
    assert np.array_equal(v(1, 1), [0.0, 1.0])
    assert np.array_equal(v(5, 7), v(1, 1))
    assert np.allclose(v.zero_mean().mean(), 0.0)
    with pytest.raises(ValueError):
        VectorFn2D(g, np.zeros((4, 6)))
    with pytest.raises(ValueError):
        Grid2D(0, 3)
    with pytest.raises(ValueError):
        v.values[0, 0, 0] = 1.0


def test_neighbor_set_validation():
    assert len(SQUARE_NEIGHBORS) == 4
    assert np.allclose(SQUARE_NEIGHBORS.lengths, [1, 1, np.sqrt(2), np.sqrt(2)])
    for bad in ([], [(0, 0)], [(1, 0), (-1, 0)], [(1, 1), (1, 1)]):
        with pytest.raises(ValueError):
            NeighborSet(tuple(bad))


def test_bond_tensor_tiling_and_windows():
    b = checkerboard_bonds(1.0, 2.0, 0.25)
    assert b.p == (2, 2)
    t = b.tile((4, 6))
    assert t.shape == (4, 4, 6)
    assert np.array_equal(t[:, 2:4, 4:6], b.values)
    assert np.array_equal(b.window((1, 0))[0], b.values[0, ::-1])
    with pytest.raises(ValueError):
        b.tile((3, 4))


def test_material_tables():
    cb = checkerboard_bonds(1.0, 2.0, 0.25).values
    # 1-based index (1, 1) has i1 + i2 even: stiffness k1
    assert cb[0, 0, 0] == 1.0 and cb[0, 0, 1] == 2.0 and cb[0, 1, 1] == 1.0
    assert np.all(cb[2:] == 0.25)
    c2 = case2_bonds().values
    # (even, even) 1-based index sits at storage (1, 1)
    assert c2[0, 1, 1] == pytest.approx(1.3)
    assert c2[0, 0, 0] == pytest.approx(1.2)


# -- full lattice ------------------------------------------------------------


def test_zero_force_gives_zero():
    model = LatticeModel2D(Grid2D(8, 8), checkerboard_bonds())
    assert np.array_equal(solve_full_2d(model, np.zeros((8, 8, 2))).values, np.zeros((8, 8, 2)))


def test_homogeneous_nn_lattice_against_dense_oracle(rng):
    model = LatticeModel2D(Grid2D(4, 4), BondTensors2D(AXES, [1.3, 0.7]))
    f = zero_mean_force(rng, 4, 4)
    A = dense_lattice_matrix(model)
    u = solve_full_2d(model, f).values
    for c in range(2):
        ref = np.linalg.pinv(A) @ (f[..., c].ravel() / 16)
        assert np.allclose(u[..., c].ravel(), ref, rtol=0, atol=1e-12 * np.abs(ref).max())


@given(seeds)
def test_operator_matches_dense_matrix(seed):
    rng = np.random.default_rng(seed)
    model = LatticeModel2D(Grid2D(4, 6), random_bonds(rng))
    w = rng.normal(size=(4, 6))
    A = dense_lattice_matrix(model) * 24
    assert np.allclose(apply_2d(model, w).ravel(), A @ w.ravel(), rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("bonds", [checkerboard_bonds(1.0, 2.0, 0.25), case2_bonds()])
def test_reference_force_equilibrium(bonds):
    grid = Grid2D(64, 64)
    model = LatticeModel2D(grid, bonds)
    f = force_case2d(grid)
    u = solve_full_2d(model, f)
    assert np.abs(residual_2d(model, u, f).values).max() <= 1e-10
    assert np.allclose(u.mean(), 0.0, atol=1e-15)


def test_nonzero_mean_force_is_rejected():
    model = LatticeModel2D(Grid2D(4, 4), checkerboard_bonds())
    with pytest.raises(Exception):
        solve_full_2d(model, np.ones((4, 4, 2)))


def test_energy_gradient_and_minimum(rng):
    model = LatticeModel2D(Grid2D(8, 8), case2_bonds())
    f = zero_mean_force(rng, 8, 8)
    u = rng.normal(size=(8, 8, 2))
    v = rng.normal(size=(8, 8, 2))
    h = 1e-5
    fd = (energy_2d(model, u + h * v, f) - energy_2d(model, u - h * v, f)) / (2 * h)
    exact = np.mean(np.sum(residual_2d(model, u, f).values * v, axis=-1))
    assert fd == pytest.approx(exact, rel=1e-7)
    sol = solve_full_2d(model, f).values
    e_min = energy_2d(model, sol, f)
    assert e_min == pytest.approx(-0.5 * np.mean(np.sum(f * sol, axis=-1)), rel=1e-10)
    assert energy_2d(model, sol + 1e-3 * v, f) > e_min


def test_norms_and_deformed_csv(tmp_path):
    g = Grid2D(4, 4)
    v = np.zeros((4, 4, 2))
    v[..., 0] = 1.0
    assert l2_2d(v) == 1.0 and h1_2d(v, g.epsilon) == 0.0
    path = tmp_path / "deformed.csv"
    write_deformed_csv(path, VectorFn2D(g, v))
    assert b"\r\n" not in path.read_bytes()
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 16 and rows[0]["i1"] == "1"
    assert float(rows[0]["x1"]) == pytest.approx(1.25)


# -- cell problems -----------------------------------------------------------


def test_homogeneous_cell_has_zero_corrector():
    bonds = BondTensors2D(SQUARE_NEIGHBORS, np.full((4, 2, 2), 1.5))
    assert np.allclose(solve_cell_2d(bonds).chi, 0.0, atol=1e-15)
    one = BondTensors2D(SQUARE_NEIGHBORS, [1.0, 1.0, 0.5, 0.5])
    assert np.array_equal(solve_cell_2d(one).chi, np.zeros((2, 1, 1)))


def test_checkerboard_corrector_pattern():
    cell = solve_cell_2d(checkerboard_bonds(1.0, 2.0, 0.25))
    amp = checkerboard_closed_form(1.0, 2.0, 0.25)[0]
    assert amp == pytest.approx(-1 / 12)
    # (-1)^(i1 + i2) in 1-based indices; storage s = i - 1 keeps the parity of s1 + s2
    pattern = amp * np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert np.allclose(cell.chi[0], pattern, atol=1e-14)
    assert np.allclose(cell.chi[1], pattern, atol=1e-14)
    assert cell.residual <= 1e-12


@given(seeds)
def test_random_cell_problems_match_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    p = tuple(int(x) for x in rng.choice([1, 2, 3], size=2))
    bonds = random_bonds(rng, p)
    for convention, w in (("bond", bonds.values),
                          ("model", bonds.values / SQUARE_NEIGHBORS.lengths[:, None, None] ** 2)):
        cell = solve_cell_2d(bonds, convention)
        assert cell.residual <= 1e-12
        assert np.allclose(cell.chi.mean(axis=(1, 2)), 0.0, atol=1e-14)
        assert np.allclose(cell.chi, cell_oracle(bonds, w), rtol=0, atol=1e-12)


def test_noncoercive_cell_is_reported():
    # axis bonds only, with one row of horizontal bonds cut: columns decouple
    vals = np.ones((2, 2, 2))
    vals[1] = 0.0
    with pytest.raises(NonCoercive):
        solve_cell_2d(BondTensors2D(AXES, vals))


def test_closed_form_tensors():
    t = homogenize_2d(checkerboard_bonds(1.0, 2.0, 0.25))
    assert t.psi0[0, 0] == pytest.approx(23 / 3, abs=1e-12)
    assert t.psi0[1, 1] == pytest.approx(23 / 3, abs=1e-12)
    assert t.psi0[0, 1] == pytest.approx(-1 / 3, abs=1e-12)
    assert t.psi0[1, 0] == pytest.approx(-1 / 3, abs=1e-12)
    assert np.allclose(checkerboard_closed_form(1, 2, 0.25)[1:], [23 / 3, -1 / 3])
    assert np.array_equal(t.matrix(0, 1), -t.psi0[1, 0] * -np.eye(2))
    assert t.full().shape == (2, 2, 2, 2)


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.0, 2.0))
def test_checkerboard_tensors_match_closed_form(k1, k2, k3):
    t = homogenize_2d(checkerboard_bonds(k1, k2, k3)).psi0
    _, d, o = checkerboard_closed_form(k1, k2, k3)
    assert np.allclose(t, [[d, o], [o, d]], rtol=1e-11, atol=1e-12)


def test_closed_form_special_cases():
    t = homogenize_2d(checkerboard_bonds(1.7, 1.7, 0.3)).psi0
    assert abs(t[0, 1]) <= 1e-13
    t = homogenize_2d(checkerboard_bonds(1.0, 3.0, 0.0)).psi0
    assert t[0, 0] == pytest.approx(1 + 3 + 4 * 3 / 4)


@given(seeds)
def test_tensor_symmetry_and_positivity(seed):
    rng = np.random.default_rng(seed)
    bonds = random_bonds(rng, tuple(int(x) for x in rng.choice([1, 2, 4], size=2)))
    for conv in ("bond", "model"):
        t = homogenize_2d(bonds, convention=conv)
        assert np.allclose(t.psi0, t.psi0.T, atol=1e-12 * np.abs(t.psi0).max())
        assert t.min_eig > 0
        G = rng.normal(size=(2, 2))
        assert t.strain_form(G, G) > 0


@given(seeds)
def test_model_convention_is_rescaled_bond_convention(seed):
    rng = np.random.default_rng(seed)
    bonds = random_bonds(rng, (2, 3))
    scaled = BondTensors2D(SQUARE_NEIGHBORS,
                           bonds.values / SQUARE_NEIGHBORS.lengths[:, None, None] ** 2)
    model = homogenize_2d(bonds, convention="model").psi0
    ref = homogenize_2d(scaled, convention="bond").psi0 / 6
    assert np.allclose(model, ref, rtol=1e-12)
    with pytest.raises(ValueError):
        homogenize_2d(bonds, solve_cell_2d(bonds, "bond"), convention="model")


def effective_tensor_supercell(bonds, periods=4):
    """Model-convention tensor from a periodic supercell under imposed macro gradients.

    For each unit gradient e_beta the fluctuation solves the lattice equations with
    the affine part moved to the right-hand side; the average flux in direction
    alpha gives the tensor entry.
    """
    p1, p2 = bonds.p
    n1, n2 = periods * p1, periods * p2
    grid = Grid2D(n1, n2, 1.0)
    model = LatticeModel2D(grid, bonds)
    psi = model.psi
    nb = bonds.neighbors
    T = np.zeros((2, 2))
    for beta in range(2):
        rhs = np.zeros((n1, n2))
        for k, (r, length) in enumerate(zip(nb, nb.lengths)):
            g = psi[k] * r[beta] / length**2
            rhs += g - np.roll(g, (r[0], r[1]), axis=(0, 1))
        w = solve_full_2d(model, np.stack([rhs, np.zeros_like(rhs)], -1), tol=1e-13).values[..., 0]
        for k, (r, length) in enumerate(zip(nb, nb.lengths)):
            strain = (r[beta] + np.roll(w, (-r[0], -r[1]), axis=(0, 1)) - w) / length**2
            for alpha in range(2):
                T[alpha, beta] += np.mean(psi[k] * strain) * r[alpha]
    return T


@pytest.mark.parametrize("make", [lambda rng: case2_bonds(), lambda rng: random_bonds(rng, (2, 3))])
def test_model_tensor_matches_supercell(rng, make):
    bonds = make(rng)
    T = homogenize_2d(bonds, convention="model").psi0
    assert np.allclose(T, effective_tensor_supercell(bonds), rtol=1e-9)


# -- triangle HQC --------------------------------------------------------------


def test_mesh_geometry():
    mesh = TriangleMesh2D(16, 4)
    assert (mesh.M, mesh.K, mesh.n_nodes, mesh.H) == (4, 32, 16, 0.25)
    elem, lam = mesh.site_map()
    assert np.allclose(lam.sum(-1), 1.0) and np.all(lam >= -1e-15)
    assert np.allclose(mesh.basis_loads(np.ones((16, 16))).sum(), 1.0)
    nodal = np.arange(16.0)
    assert np.array_equal(interpolate_p1(mesh.interpolate(nodal), mesh), mesh.interpolate(nodal))
    with pytest.raises(ValueError):
        TriangleMesh2D(16, 3)


def test_sampling_rectangles():
    mesh = TriangleMesh2D(32, 4)
    rects = choose_sampling_2d(mesh, (2, 2))
    assert len(rects) == mesh.K
    assert all(r.inside for r in rects)
    elem, _ = mesh.site_map()
    for r in rects:
        s1, s2 = r.sites()
        assert np.all(elem[s1, s2] == r.element)
    with pytest.raises(ValueError):
        choose_sampling_2d(TriangleMesh2D(8, 8), (2, 2))


def test_isotropic_p1_stiffness_is_five_point_laplacian(rng):
    mesh = TriangleMesh2D(32, 8)
    f = zero_mean_force(rng, 32, 32)
    U = fem_p1_solve(mesh, 2.5 * np.eye(2), f)
    t = mesh.t
    Ug = U.reshape(t, t, 2)
    lap = 4 * Ug - sum(np.roll(Ug, s, axis=a) for s in (1, -1) for a in (0, 1))
    F = mesh.basis_loads(f).reshape(t, t, 2)
    # diagonal edges carry no stiffness for an isotropic tensor on right triangles
    assert np.allclose(2.5 * lap, F, rtol=0, atol=1e-13)


def test_homogeneous_material_hqc_is_p1_fem(rng):
    bonds = BondTensors2D(SQUARE_NEIGHBORS, [1.0, 1.5, 0.25, 0.5])
    grid = Grid2D(32, 32)
    model = LatticeModel2D(grid, bonds)
    f = force_case2d(grid)
    mesh = TriangleMesh2D(32, 8)
    sol = hqc2d_solve(model, f, mesh)
    T = np.zeros((2, 2))
    for r, k in zip(SQUARE_NEIGHBORS, [1.0, 1.5, 0.25, 0.5]):
        T += k * np.outer(r, r) / np.dot(r, r)
    assert np.allclose(sol.nodal, fem_p1_solve(mesh, T, f), rtol=0, atol=1e-13)
    assert np.array_equal(reconstruct_2d(sol).values, sol.values)


def test_periodic_material_hqc_uses_homogenized_tensor():
    bonds = case2_bonds()
    grid = Grid2D(64, 64)
    model = LatticeModel2D(grid, bonds)
    f = force_case2d(grid)
    mesh = TriangleMesh2D(64, 8)
    sol = hqc2d_solve(model, f, mesh)
    T = homogenize_2d(bonds, convention="model").psi0
    assert np.allclose(sol.tensors, T, atol=1e-13)
    assert np.allclose(sol.nodal, fem_p1_solve(mesh, T, f), atol=1e-13)
    # zero mean over atoms and the corrector improves the energy-norm error
    u = solve_full_2d(model, f).values
    assert np.allclose(sol.values.mean(axis=(0, 1)), 0.0, atol=1e-15)
    uc = reconstruct_2d(sol).values
    assert h1_2d(uc - u, grid.epsilon) < h1_2d(sol.values - u, grid.epsilon)
    sampled = hqc2d_solve(model, f, mesh, load_mode="sampled")
    assert l2_2d(sampled.values - u) < 2 * l2_2d(sol.values - u) + 1e-3
    with pytest.raises(ValueError):
        hqc2d_solve(model, f, mesh, load_mode="midpoint")
