import numpy as np
import pytest
from hypothesis import given, strategies as st

from oiasim.errors import ContractViolation, NumericalFailure, RankDeficiencyError
from oiasim.matkernels import (RANK_TOL, complex_normal, null_space, pseudo_inverse, random_orthonormal,
                               svd)

from conftest import crandn


def eig_oracle(h):
    """Eigenvalues of a Hermitian PSD matrix by power iteration with deflation."""
    h = h.copy()
    n = h.shape[0]
    vals = []
    gen = np.random.default_rng(0)
    for _ in range(n):
        v = gen.standard_normal(n) + 1j * gen.standard_normal(n)
        lam = 0.0
        for _ in range(5000):
            w = h @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                lam = 0.0
                break
            v_new = w / nw
            lam_new = np.real(np.vdot(v_new, h @ v_new))
            converged = abs(lam_new - lam) < 1e-15 * max(1.0, abs(lam_new))
            v, lam = v_new, lam_new
            if converged:
                break
        vals.append(lam)
        h = h - lam * np.outer(v, v.conj())
    return np.sort(np.array(vals))[::-1]


def check_svd(a):
    res = svd(a)
    s = res.singular
    assert np.all(s >= 0) and np.all(np.diff(s) <= 1e-12)
    n = s.size
    assert np.linalg.norm(res.left.conj().T @ res.left - np.eye(n)) < 1e-10
    assert np.linalg.norm(res.right.conj().T @ res.right - np.eye(n)) < 1e-10
    rec = res.left @ np.diag(s) @ res.right.conj().T
    assert np.linalg.norm(rec - a) <= 1e-8 * max(np.linalg.norm(a), 1e-300)


def test_svd_identity():
    assert np.allclose(svd(np.eye(2)).singular, [1, 1])


def test_svd_diagonal():
    res = svd(np.diag([3.0, 1.0]))
    assert np.allclose(res.singular, [3, 1])
    assert np.allclose(np.abs(res.right), np.eye(2))


def test_svd_random_4x3_against_power_iteration(rng):
    a = crandn(rng, 4, 3)
    check_svd(a)
    oracle = np.sqrt(np.maximum(eig_oracle(a.conj().T @ a), 0))
    assert np.allclose(svd(a).singular, oracle, atol=1e-8)


def test_svd_full_matrices_shapes(rng):
    res = svd(crandn(rng, 3, 5), full_matrices=True)
    assert res.left.shape == (3, 3) and res.right.shape == (5, 5)


def test_svd_rejects_non_finite():
    with pytest.raises(ContractViolation):
        svd(np.array([[1.0, np.nan]]))


def test_svd_non_convergence_reports_shape(monkeypatch):
    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(np.linalg, "svd", boom)
    with pytest.raises(NumericalFailure) as info:
        svd(np.ones((2, 3)))
    assert info.value.shape == (2, 3)


def test_null_space_coordinate_subspace():
    u = null_space(np.eye(3)[:, :2], 1)
    assert u.shape == (3, 1)
    assert np.isclose(abs(u[2, 0]), 1.0) and np.allclose(u[:2, 0], 0, atol=1e-12)


def test_null_space_empty_input_is_unitary():
    u = null_space(np.zeros((3, 0)), 3)
    assert np.linalg.norm(u.conj().T @ u - np.eye(3)) < 1e-12


def test_null_space_random(rng):
    a = random_orthonormal(4, 2, rng)
    u = null_space(a, 2)
    assert u.shape == (4, 2)
    assert np.linalg.norm(a.conj().T @ u) < 1e-10
    assert np.linalg.norm(u.conj().T @ u - np.eye(2)) < 1e-10


def test_null_space_dimension_mismatch():
    with pytest.raises(ContractViolation):
        null_space(np.eye(3)[:, :2], 2)


def test_pseudo_inverse_examples(rng):
    e1 = np.eye(3)[:, :1]
    assert np.allclose(pseudo_inverse(e1), e1.T)
    assert np.allclose(pseudo_inverse(2 * np.eye(2)), 0.5 * np.eye(2))
    a = crandn(rng, 4, 2)
    assert np.linalg.norm(pseudo_inverse(a) @ a - np.eye(2)) < 1e-8


def test_pseudo_inverse_rank_deficient():
    a = np.array([[1, 2], [2, 4], [3, 6]], dtype=complex)
    with pytest.raises(RankDeficiencyError):
        pseudo_inverse(a)
    with pytest.raises(RankDeficiencyError):
        pseudo_inverse(np.zeros((3, 1)))


def test_pseudo_inverse_wide_is_contract_violation(rng):
    with pytest.raises(ContractViolation):
        pseudo_inverse(crandn(rng, 2, 3))


def test_random_orthonormal_examples():
    z = random_orthonormal(1, 1, np.random.default_rng(3))
    assert z.shape == (1, 1) and np.isclose(abs(z[0, 0]), 1.0)
    q = random_orthonormal(3, 2, np.random.default_rng(3))
    assert np.linalg.norm(q.conj().T @ q - np.eye(2)) < 1e-10
    assert np.array_equal(q, random_orthonormal(3, 2, np.random.default_rng(3)))
    with pytest.raises(ContractViolation):
        random_orthonormal(2, 3, np.random.default_rng(3))


def test_random_orthonormal_rotation_invariance():
    # the first entry's modulus is Beta-distributed regardless of rotation; its
    # phase must be uniform, which fails for plain QR without phase correction
    gen = np.random.default_rng(8)
    phases = np.array([np.angle(random_orthonormal(3, 1, gen)[0, 0]) for _ in range(4000)])
    counts, _ = np.histogram(phases, bins=8, range=(-np.pi, np.pi))
    assert counts.min() > 400


def test_complex_normal_moments():
    z = complex_normal(np.random.default_rng(1), (200_000,))
    assert abs(np.mean(np.abs(z) ** 2) - 1) < 0.01
    assert abs(np.var(z.real) - 0.5) < 0.01 and abs(np.mean(z.real * z.imag)) < 0.01


shapes = st.tuples(st.integers(1, 8), st.integers(1, 8))


@given(shape=shapes, seed=st.integers(0, 2 ** 32 - 1))
def test_svd_invariants_property(shape, seed):
    check_svd(crandn(np.random.default_rng(seed), *shape))


@given(shape=shapes, seed=st.integers(0, 2 ** 32 - 1))
def test_last_right_singular_vector_minimises(shape, seed):
    gen = np.random.default_rng(seed)
    a = crandn(gen, *shape)
    res = svd(a, full_matrices=True)
    v = res.right[:, -1]
    best = np.linalg.norm(a @ v) ** 2
    s_min = res.singular[-1] if shape[0] >= shape[1] else 0.0
    assert abs(best - s_min ** 2) < 1e-9
    probes = crandn(gen, shape[1], 2000)
    probes /= np.linalg.norm(probes, axis=0)
    assert np.min(np.sum(np.abs(a @ probes) ** 2, axis=0)) >= best - 1e-9


@given(rows=st.integers(1, 8), cols=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_pseudo_inverse_matches_svd_form(rows, cols, seed):
    if cols > rows:
        rows, cols = cols, rows
    a = crandn(np.random.default_rng(seed), rows, cols)
    left, s, right = svd(a)
    assert s[-1] > RANK_TOL * s[0]
    assert np.linalg.norm(pseudo_inverse(a) - right @ np.diag(1 / s) @ left.conj().T) < 1e-8 * max(1, 1 / s[-1])
