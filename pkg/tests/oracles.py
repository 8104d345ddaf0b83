"""Independent reference implementations used to cross-check the library.

Everything here is deliberately naive: explicit loops for kernel values,
dense matrix inversion via ``np.linalg.inv`` for posteriors, central finite
differences for gradients, exhaustive grids for argmax queries. None of it
shares code with the package's fast paths.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def kernel_value(a, b, hyper) -> float:
    """Factorized SE covariance between two joint points, scalar loops only."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = 0.0
    for j, lam in enumerate(hyper.x_length_scales):
        s += (a[j] - b[j]) ** 2 / lam**2
    s += (a[-1] - b[-1]) ** 2 / hyper.fidelity_length_scale**2
    return hyper.signal_variance * math.exp(-0.5 * s)


def kernel_matrix(A, B, hyper) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    K = np.zeros((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            K[i, j] = kernel_value(A[i], B[j], hyper)
    return K


def dense_moments(X, y, hyper, q, include_noise=True, standardize=True):
    """Posterior mean/std at a single joint query via explicit dense inverse.

    Mirrors the library's target standardization convention so results are
    directly comparable with ``MultiFidelityGP.predict``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if standardize and n > 0:
        y_mean = float(np.mean(y))
        scale = float(np.std(y))
        y_scale = scale if scale > 1e-12 else 1.0
    else:
        y_mean, y_scale = 0.0, 1.0
    ys = (y - y_mean) / y_scale

    prior_var = hyper.signal_variance + (hyper.noise_std**2 if include_noise else 0.0)
    if n == 0:
        return y_mean, math.sqrt(prior_var) * y_scale

    K = kernel_matrix(X, X, hyper) + hyper.noise_std**2 * np.eye(n)
    K_inv = np.linalg.inv(K)
    k = np.array([kernel_value(q, X[i], hyper) for i in range(n)])
    mean = float(k @ K_inv @ ys)
    var = prior_var - float(k @ K_inv @ k)
    return mean * y_scale + y_mean, math.sqrt(max(var, 0.0)) * y_scale


def dense_log_marginal_likelihood(X, y, hyper) -> float:
    """Raw-target log marginal likelihood via dense inverse and slogdet."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    K = kernel_matrix(X, X, hyper) + hyper.noise_std**2 * np.eye(n)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * y @ np.linalg.inv(K) @ y - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def finite_difference_gradient(f, x, h=1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = np.zeros_like(x)
        hi[i] = h
        grad[i] = (f(x + hi) - f(x - hi)) / (2.0 * h)
    return grad


def grid_argmax(f, d, n_per_dim=100):
    """Exhaustive argmax of a scalar function on the unit hypercube."""
    axes = [np.linspace(0.0, 1.0, n_per_dim)] * d
    best_x, best_v = None, -np.inf
    for point in itertools.product(*axes):
        v = f(np.array(point))
        if v > best_v:
            best_v, best_x = v, np.array(point)
    return best_x, best_v
