import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sivcm.errors import NonFinite, NotSymmetric, SingularAfterRidge
from sivcm.linalg import gen_inverse, psd_inverse_sqrt, solve_spd, solve_spd_batch, sym_eig


def _sym(rng, d, rank=None):
    A = rng.standard_normal((d, rank or d))
    return A @ A.T


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 6), r=st.integers(0, 6), seed=st.integers(0, 2**31 - 1))
def test_moore_penrose_identities(d, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, d)
    M = _sym(rng, d, r) if r else np.zeros((d, d))
    G, rank = gen_inverse(M, return_rank=True)
    scale = max(1.0, np.abs(M).max())
    assert rank == (np.linalg.matrix_rank(M) if r else 0)
    assert np.allclose(M @ G @ M, M, atol=1e-8 * scale)
    assert np.allclose(G @ M @ G, G, atol=1e-8 * max(1.0, np.abs(G).max()))
    assert np.allclose(M @ G, (M @ G).T, atol=1e-8)
    assert np.allclose(G, np.linalg.pinv(M, hermitian=True), atol=1e-7 * max(1.0, np.abs(G).max()))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
def test_sym_eig_reconstructs(A):
    M = A + A.T
    eig = sym_eig(M)
    assert np.all(np.diff(eig.eigenvalues) <= 1e-12)
    V = eig.eigenvectors
    assert np.allclose((V * eig.eigenvalues) @ V.T, M, atol=1e-9 * max(1, np.abs(M).max()))


def test_indefinite_pinv_keeps_negative_directions():
    M = np.diag([3.0, -2.0, 0.0])
    assert np.allclose(gen_inverse(M), np.diag([1 / 3, -1 / 2, 0.0]))


def test_rejects_asymmetric_and_nonfinite():
    with pytest.raises(NotSymmetric):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NonFinite):
        gen_inverse(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        gen_inverse(np.eye(2), rel_tol=0.0)


def test_psd_inverse_sqrt():
    rng = np.random.default_rng(3)
    M = _sym(rng, 4)
    R = psd_inverse_sqrt(M)
    assert np.allclose(R @ M @ R, np.eye(4), atol=1e-8)


def test_solve_spd_and_ridge():
    rng = np.random.default_rng(4)
    M = _sym(rng, 5) + np.eye(5)
    b = rng.standard_normal(5)
    x, ridged = solve_spd(M, b)
    assert not ridged
    assert np.allclose(M @ x, b, atol=1e-10)
    # rank deficient: ridge kicks in once and the system is flagged
    S = _sym(rng, 4, 2)
    xs, rflags, failed = solve_spd_batch(S[None], rng.standard_normal((1, 4)))
    assert rflags[0] and not failed[0] and np.all(np.isfinite(xs))
    with pytest.raises(SingularAfterRidge):
        solve_spd(np.zeros((3, 3)), np.ones(3))
