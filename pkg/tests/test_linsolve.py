import numpy as np
import pytest
import scipy.sparse as sp

from gepup import (
    UNIT_SQUARE,
    GmgPreconditioner,
    JacobiPreconditioner,
    NumericalBreakdown,
    SolverError,
    assemble_mass,
    assemble_stiffness,
    build_hierarchy,
    build_space,
    cg_solve,
    neumann_solve,
    prolongation_matrix,
)


def csr(dense):
    return sp.csr_matrix(np.asarray(dense, dtype=float))


# ---- cg_solve ---------------------------------------------------------------


def test_cg_identity_single_iteration():
    A = csr(np.eye(5))
    b = np.array([1.0, -2.0, 3.0, 0.5, 0.0])
    x, rep = cg_solve(A, b)
    assert np.allclose(x, b, atol=1e-14)
    assert rep.iterations <= 1
    assert rep.converged


def test_cg_tridiagonal_known_solution():
    A = csr([[2, -1, 0], [-1, 2, -1], [0, -1, 2]])
    b = np.array([1.0, 0.0, 0.0])
    x, rep = cg_solve(A, b, rel_tol=1e-14)
    # dense direct oracle
    assert np.allclose(np.linalg.solve(A.toarray(), b), [0.75, 0.5, 0.25], atol=1e-14)
    assert np.allclose(x, [0.75, 0.5, 0.25], atol=1e-12)
    assert rep.converged


def test_cg_zero_rhs():
    A = csr(np.diag([2.0, 3.0]))
    x, rep = cg_solve(A, np.zeros(2))
    assert np.array_equal(x, np.zeros(2))
    assert rep.iterations == 0 and rep.converged


def test_cg_exact_in_n_iterations(rng):
    for n in range(2, 11):
        Q = rng.standard_normal((n, n))
        A = csr(Q @ Q.T + n * np.eye(n))
        b = rng.standard_normal(n)
        x, rep = cg_solve(A, b, rel_tol=1e-14)
        assert rep.iterations <= n
        assert np.allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)


def test_cg_breakdown_on_indefinite_matrix():
    A = csr(np.diag([1.0, -1.0]))
    with pytest.raises(NumericalBreakdown):
        cg_solve(A, np.array([1.0, 1.0]))


def test_cg_rejects_nonfinite_inputs():
    A = csr(np.eye(2))
    with pytest.raises(SolverError):
        cg_solve(A, np.array([np.nan, 0.0]))
    B = csr(np.eye(2))
    B.data[0] = np.inf
    with pytest.raises(SolverError):
        cg_solve(B, np.ones(2))


def test_cg_warm_start_converges_immediately():
    A = csr([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x_exact = np.linalg.solve(A.toarray(), b)
    x, rep = cg_solve(A, b, x0=x_exact)
    assert rep.iterations == 0
    assert np.allclose(x, x_exact)


# ---- neumann_solve ----------------------------------------------------------

PATH_LAPLACIAN = [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]


def test_neumann_path_graph_known_solution():
    A = csr(PATH_LAPLACIAN)
    b = np.array([1.0, 0.0, -1.0])
    w = np.ones(3)
    x, rep = neumann_solve(A, b, w, rel_tol=1e-14)
    # pseudoinverse oracle: the compatible mean-zero solution is (1, 0, -1)
    oracle = np.linalg.pinv(np.asarray(PATH_LAPLACIAN, float)) @ b
    assert np.allclose(oracle, [1.0, 0.0, -1.0], atol=1e-12)
    assert np.allclose(x, oracle, atol=1e-10)
    assert rep.converged


def test_neumann_pure_nullspace_rhs():
    A = csr(PATH_LAPLACIAN)
    x, rep = neumann_solve(A, np.full(3, 7.5), np.ones(3))
    assert np.allclose(x, 0.0, atol=1e-12)


def test_neumann_shift_invariance(rng):
    A = csr(PATH_LAPLACIAN)
    b = rng.standard_normal(3)
    b -= b.mean()
    w = np.array([0.5, 1.0, 0.5])
    x1, _ = neumann_solve(A, b, w, rel_tol=1e-14)
    x2, _ = neumann_solve(A, b + 3.25, w, rel_tol=1e-14)
    assert np.allclose(x1, x2, atol=1e-10)


def test_neumann_mass_weighted_mean_zero(ops_q3_l3, rng):
    A = ops_q3_l3.A
    w = ops_q3_l3.mass_weights
    b = rng.standard_normal(ops_q3_l3.space.n_dofs)
    x, rep = neumann_solve(A, b, w, precond=ops_q3_l3.gmg_A)
    assert rep.converged
    assert abs(w @ x) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(w)


# ---- geometric multigrid ------------------------------------------------------


def _poisson_gmg(level, degree=3):
    hier = build_hierarchy(UNIT_SQUARE, (1, 1), level)
    spaces = [build_space(m, degree) for m in hier.levels]
    mats = [assemble_stiffness(s) for s in spaces]
    prolong = [prolongation_matrix(a, b) for a, b in zip(spaces, spaces[1:])]
    return spaces, mats, GmgPreconditioner(mats, prolong, singular=True)


def test_gmg_zero_maps_to_zero():
    _, _, gmg = _poisson_gmg(2)
    z = gmg.apply(np.zeros(gmg.ops[-1].shape[0]))
    assert np.array_equal(z, np.zeros_like(z))


def test_gmg_is_linear_and_symmetric(rng):
    _, mats, gmg = _poisson_gmg(2)
    n = mats[-1].shape[0]
    for _ in range(4):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        left = u @ gmg.apply(v)
        right = v @ gmg.apply(u)
        assert abs(left - right) <= 1e-12 * max(abs(left), abs(right))
    a, bvec = rng.standard_normal(n), rng.standard_normal(n)
    assert np.allclose(
        gmg.apply(2.0 * a - 3.0 * bvec),
        2.0 * gmg.apply(a) - 3.0 * gmg.apply(bvec),
        rtol=1e-12,
        atol=1e-12,
    )


def test_gmg_single_level_equals_smoother_sweeps(rng):
    hier = build_hierarchy(UNIT_SQUARE, (1, 1), 0)
    space = build_space(hier.levels[0], 2)
    M = assemble_mass(space)
    gmg = GmgPreconditioner([M], [], singular=False)
    r = rng.standard_normal(space.n_dofs)
    # single level: direct coarse solve
    assert np.allclose(gmg.apply(r), np.linalg.solve(M.toarray(), r), atol=1e-12)


def test_prolongation_transpose_identity(rng):
    spaces, _, _ = _poisson_gmg(2)
    P = prolongation_matrix(spaces[-2], spaces[-1])
    v = rng.standard_normal(P.shape[1])
    w = rng.standard_normal(P.shape[0])
    assert (P @ v) @ w == pytest.approx(v @ (P.T @ w), rel=1e-13)


def test_prolongation_preserves_constants():
    spaces, _, _ = _poisson_gmg(3)
    for a, b in zip(spaces, spaces[1:]):
        P = prolongation_matrix(a, b)
        assert np.allclose(P @ np.ones(a.n_dofs), 1.0, atol=1e-13)


def test_gmg_cg_mesh_independent_iterations(rng):
    counts = []
    for level in (3, 4, 5, 6):
        spaces, mats, gmg = _poisson_gmg(level)
        space = spaces[-1]
        M = assemble_mass(space)
        w = M @ np.ones(space.n_dofs)
        rng_local = np.random.default_rng(99)
        b = rng_local.standard_normal(space.n_dofs)
        x, rep = neumann_solve(mats[-1], b, w, precond=gmg, rel_tol=1e-12)
        assert rep.converged
        counts.append(rep.iterations)
    assert max(counts) - min(counts) <= 5, counts
