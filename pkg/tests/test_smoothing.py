import importlib

import numpy as np
import pytest

from sivcm import _kernels_py
from sivcm.errors import EmptyWindow
from sivcm.kernels import Kernel
from sivcm.linalg import PIVOT_TOL, RIDGE_EPS
from sivcm.smoothing import (cond_moment, fit_curves, local_fit_batch, local_linear_fit,
                             nw_weight_matrix, nw_weights)

from conftest import linear_data, model_data
from oracles import dense_wls

BETA0 = np.array([1.0, 2.0]) / np.sqrt(5.0)


@pytest.mark.parametrize("k", list(Kernel))
def test_matches_dense_wls(k):
    d = model_data(50, seed=3)
    U = d.X @ BETA0
    for u in np.linspace(-0.8, 0.8, 7):
        a, b, ridged = local_linear_fit(d, BETA0, u, 0.6, k)
        ao, bo = dense_wls(U, d.Z, d.Y, u, 0.6, k)
        assert not ridged
        assert np.linalg.norm(a - ao) <= 1e-10 * np.linalg.norm(ao)
        assert np.linalg.norm(b - bo) <= 1e-9 * np.linalg.norm(bo)


def test_linear_curves_reproduced_exactly():
    d = linear_data()
    beta = np.array([0.6, 0.8])
    for u in (-0.5, 0.0, 0.4):
        a, b, _ = local_linear_fit(d, beta, u, 0.5)
        assert np.allclose(a, [1 + 2 * u, -1 + u], atol=1e-10)
        assert np.allclose(b, [2.0, 1.0], atol=1e-9)


def test_backends_agree():
    try:
        compiled = importlib.import_module("sivcm._kernels")
    except ImportError:
        pytest.skip("compiled core not built")
    d = model_data(200, seed=5)
    U = d.X @ BETA0
    o = np.argsort(U)
    pts = np.linspace(-1.6, 1.6, 41)
    for h in (0.05, 0.2, 0.7):
        args = (np.ascontiguousarray(U[o]), np.ascontiguousarray(d.Z[o]),
                np.ascontiguousarray(d.Y[o]), pts, h, 0, PIVOT_TOL, RIDGE_EPS)
        r1 = compiled.local_linear_batch(*args)
        r2 = _kernels_py.local_linear_batch(*args)
        for x, y in zip(r1[2:], r2[2:]):
            assert np.array_equal(np.asarray(x), np.asarray(y))
        ok = np.asarray(r1[3]) == 0
        clean = ok & ~np.asarray(r1[2], bool)
        for x, y in zip(r1[:2], r2[:2]):
            x, y = np.asarray(x), np.asarray(y)
            assert np.allclose(x[clean], y[clean], rtol=1e-10, atol=1e-10)
            # ridged systems are ill-conditioned; rounding order matters more there
            assert np.allclose(x[ok], y[ok], rtol=1e-6, atol=1e-6)


def test_permutation_invariance():
    d = model_data(80, seed=9)
    perm = np.random.default_rng(0).permutation(d.n)
    pts = np.linspace(-1, 1, 9)
    f1 = fit_curves(d, BETA0, pts, 0.4, 0.6)
    f2 = fit_curves(d.take(perm), BETA0, pts, 0.4, 0.6)
    assert np.allclose(f1.g_hat, f2.g_hat, atol=1e-10)
    assert np.allclose(f1.g_dot_hat, f2.g_dot_hat, atol=1e-9)


def test_empty_window_status_and_error():
    d = model_data(50, seed=1)
    fit = local_fit_batch(d.X @ BETA0, d.Z, d.Y, [10.0], 0.3)
    assert fit.status[0] == 1 and np.all(np.isnan(fit.a[0]))
    with pytest.raises(EmptyWindow) as exc:
        local_linear_fit(d, BETA0, 10.0, 0.3)
    assert exc.value.u == 10.0


def test_sparse_window_is_ridged_not_fatal():
    d = model_data(50, seed=1)
    U = d.X @ BETA0
    u = float(np.sort(U)[0])
    fit = local_fit_batch(U, d.Z, d.Y, [u], 1e-6)
    assert fit.status[0] == 0 and fit.ridged[0]


def test_nw_weights_are_probability_vectors():
    rng = np.random.default_rng(2)
    U = rng.uniform(-1, 1, 40)
    W = nw_weight_matrix(U, U, 0.3)
    assert np.all(W >= 0)
    assert np.allclose(W.sum(axis=1), 1.0, atol=1e-14)
    w = nw_weights(U, 0.1, 0.3)
    assert abs(w.sum() - 1.0) < 1e-14
    R = rng.standard_normal((40, 2))
    assert np.allclose(cond_moment(U, R, 0.1, 0.3), w @ R)
    with pytest.raises(EmptyWindow):
        nw_weights(U, 5.0, 0.3)
