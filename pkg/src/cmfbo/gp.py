"""Gaussian-process regression over the joint hyperparameter-fidelity space.

The surrogate models a black-box objective f(x, z) where x lives on the unit
hypercube and z on the unit fidelity interval. The covariance factorizes into
a squared-exponential kernel over x times a squared-exponential kernel over z;
the fidelity factor carries unit signal variance so the overall signal
variance is identifiable. Targets are standardized internally (zero mean,
unit scale) before fitting and de-standardized on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

NOISE_FLOOR = 1e-4

# Negative posterior variances inside [NEGATIVE_VARIANCE_TOL, 0) are rounding
# noise and snap to zero; anything below indicates a broken factorization.
NEGATIVE_VARIANCE_TOL = -1e-8

# Diagonal jitter escalation ladder used when the Cholesky factorization of
# K + eta^2 I fails: 1e-10 up to 1e-6 in x10 steps, then give up.
_JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# Log-space box constraints for marginal-likelihood fitting.
SIGNAL_VARIANCE_BOUNDS = (1e-4, 1e2)
X_LENGTH_SCALE_BOUNDS = (1e-2, 10.0)
FIDELITY_LENGTH_SCALE_BOUNDS = (5e-2, 10.0)
NOISE_STD_UPPER = 10.0

_UNIT_TOL = 1e-8


class GpNumericalError(RuntimeError):
    """Raised when the covariance factorization cannot be stabilized."""


@dataclass(frozen=True)
class KernelHyper:
    """Kernel hyperparameters of the factorized multi-fidelity covariance.

    Attributes
    ----------
    signal_variance : float
        Output variance of the x-kernel (the z-factor has unit variance).
    x_length_scales : tuple of float
        Per-dimension length scales over the hyperparameter axes.
    fidelity_length_scale : float
        Length scale of the fidelity kernel; also the step size of the
        progressive acquisition schedule.
    noise_std : float
        Observation noise standard deviation, floored at NOISE_FLOOR.
    """

    signal_variance: float
    x_length_scales: tuple[float, ...]
    fidelity_length_scale: float
    noise_std: float

    def __post_init__(self):
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(
            self, "x_length_scales", tuple(float(v) for v in self.x_length_scales)
        )
        object.__setattr__(self, "fidelity_length_scale", float(self.fidelity_length_scale))
        object.__setattr__(self, "noise_std", float(self.noise_std))
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if not self.x_length_scales or any(v <= 0 for v in self.x_length_scales):
            raise ValueError("x_length_scales must be non-empty and positive")
        if self.fidelity_length_scale <= 0:
            raise ValueError("fidelity_length_scale must be positive")
        if self.noise_std < NOISE_FLOOR:
            raise ValueError(f"noise_std must be >= {NOISE_FLOOR}")

    @property
    def ndim_x(self) -> int:
        return len(self.x_length_scales)

    def joint_length_scales(self) -> np.ndarray:
        """Length scales over the joint (x, z) input, fidelity last."""
        return np.array(self.x_length_scales + (self.fidelity_length_scale,))

    def to_log_vector(self) -> np.ndarray:
        return np.log(
            np.concatenate(
                (
                    [self.signal_variance],
                    self.x_length_scales,
                    [self.fidelity_length_scale, self.noise_std],
                )
            )
        )

    @classmethod
    def from_log_vector(cls, theta: np.ndarray, d: int) -> "KernelHyper":
        values = np.exp(np.asarray(theta, dtype=float))
        return cls(
            signal_variance=values[0],
            x_length_scales=tuple(values[1 : 1 + d]),
            fidelity_length_scale=values[1 + d],
            noise_std=max(values[2 + d], NOISE_FLOOR),
        )


def default_hyper(d: int, noise_std: float = 0.1) -> KernelHyper:
    """Broad prior defaults used before any data-driven fit."""
    return KernelHyper(
        signal_variance=1.0,
        x_length_scales=(0.5,) * d,
        fidelity_length_scale=0.5,
        noise_std=noise_std,
    )


def se_kernel(u, v, signal_variance: float, length_scales) -> float:
    """Squared-exponential covariance between two points.

    k(u, v) = signal_variance * exp(-1/2 * sum_i (u_i - v_i)^2 / l_i^2)
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    ls = np.asarray(length_scales, dtype=float).ravel()
    if u.shape != v.shape or u.shape != ls.shape:
        raise ValueError(
            f"dimension mismatch: u {u.shape}, v {v.shape}, length_scales {ls.shape}"
        )
    if signal_variance <= 0 or np.any(ls <= 0):
        raise ValueError("kernel hyperparameters must be positive")
    sq = np.sum(((u - v) / ls) ** 2)
    return float(signal_variance * math.exp(-0.5 * sq))


def mf_kernel(p, q, hyper: KernelHyper) -> float:
    """Factorized covariance between two joint (x, z) points.

    The x-factor carries the signal variance; the fidelity factor is a unit
    variance squared exponential with the fidelity length scale, so the
    product equals the plain x-kernel whenever z == z'.
    """
    x, z = p
    x2, z2 = q
    kx = se_kernel(x, x2, hyper.signal_variance, hyper.x_length_scales)
    kz = se_kernel([z], [z2], 1.0, [hyper.fidelity_length_scale])
    return kx * kz


def _se_matrix(A: np.ndarray, B: np.ndarray, signal_variance: float, length_scales: np.ndarray) -> np.ndarray:
    """Vectorized SE kernel matrix between row-stacked joint points."""
    diff = (A[:, None, :] - B[None, :, :]) / length_scales
    return signal_variance * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def joint_kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Kernel matrix of the factorized covariance on joint (x, z) rows."""
    return _se_matrix(np.asarray(A, float), np.asarray(B, float), hyper.signal_variance, hyper.joint_length_scales())


def _validate_joint(X, d: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected 2-d array of joint (x, z) rows, got shape {X.shape}")
    if X.shape[1] < 2:
        raise ValueError("joint points need at least one x dimension plus the fidelity")
    if d is not None and X.shape[1] != d + 1:
        raise ValueError(f"expected {d + 1} columns, got {X.shape[1]}")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError("joint points must be finite")
    if X.size and (X.min() < -_UNIT_TOL or X.max() > 1.0 + _UNIT_TOL):
        raise ValueError("joint points must be normalized to the unit hypercube")
    return X


def _stable_cholesky(K_noisy: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with escalating diagonal jitter.

    Returns the factor together with the jitter that was required. Raises
    GpNumericalError when even the largest jitter cannot rescue positive
    definiteness.
    """
    n = K_noisy.shape[0]
    last_error = None
    for jitter in _JITTER_LADDER:
        try:
            L = cholesky(K_noisy + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError as err:  # pragma: no cover - rare path
            last_error = err
    diag = np.diag(K_noisy)
    raise GpNumericalError(
        "covariance factorization failed after jitter escalation to "
        f"{_JITTER_LADDER[-1]:g} (n={n}, diag range [{diag.min():.3e}, {diag.max():.3e}]): "
        f"{last_error}"
    )


def log_marginal_likelihood(X, y, hyper: KernelHyper) -> float:
    """Gaussian log marginal likelihood of targets y at joint inputs X.

    Computes -1/2 y^T (K + eta^2 I)^-1 y - 1/2 log|K + eta^2 I| - n/2 log 2pi.
    """
    value, _ = _lml_and_grad(X, y, hyper, want_grad=False)
    return value


def log_marginal_likelihood_gradient(X, y, hyper: KernelHyper) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient w.r.t. the log-hyperparameters.

    Gradient order: log signal_variance, log x_length_scales..., log
    fidelity_length_scale, log noise_std.
    """
    return _lml_and_grad(X, y, hyper, want_grad=True)


def _lml_and_grad(X, y, hyper: KernelHyper, want_grad: bool):
    X = _validate_joint(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 1 or y.shape[0] != n:
        raise ValueError("need at least one observation with matching targets")

    ls = hyper.joint_length_scales()
    K = _se_matrix(X, X, hyper.signal_variance, ls)
    Ky = K + hyper.noise_std**2 * np.eye(n)
    L, _ = _stable_cholesky(Ky)
    alpha = cho_solve((L, True), y)
    lml = float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi)
    )
    if not want_grad:
        return lml, None

    Ky_inv = cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - Ky_inv
    grad = np.empty(len(ls) + 2)
    # d/dlog(sigma_f^2): the noise-free kernel itself.
    grad[0] = 0.5 * np.sum(M * K)
    # d/dlog(l_j): K scaled by the per-dimension squared distances.
    diff = (X[:, None, :] - X[None, :, :]) / ls
    for j in range(len(ls)):
        grad[1 + j] = 0.5 * np.sum(M * K * diff[:, :, j] ** 2)
    # d/dlog(eta): 2 eta^2 I.
    grad[-1] = hyper.noise_std**2 * np.trace(M)
    return lml, grad


@dataclass(frozen=True)
class HyperFitResult:
    """Outcome of a multi-restart marginal-likelihood fit."""

    hyper: KernelHyper
    log_likelihood: float
    fallback: bool  # all restarts failed; prior defaults returned instead


def _log_bounds(d: int, noise_floor: float) -> list[tuple[float, float]]:
    bounds = [tuple(np.log(SIGNAL_VARIANCE_BOUNDS))]
    bounds += [tuple(np.log(X_LENGTH_SCALE_BOUNDS))] * d
    bounds.append(tuple(np.log(FIDELITY_LENGTH_SCALE_BOUNDS)))
    bounds.append((math.log(noise_floor), math.log(NOISE_STD_UPPER)))
    return bounds


def _random_start(rng: np.random.Generator, d: int, noise_floor: float) -> np.ndarray:
    """Plausible random start in log space, well inside the bounds."""
    sv = rng.uniform(math.log(0.1), math.log(10.0))
    lam = rng.uniform(math.log(0.05), math.log(2.0), size=d)
    lz = rng.uniform(math.log(0.1), math.log(5.0))
    eta = rng.uniform(math.log(max(noise_floor, 1e-3)), math.log(0.5))
    return np.concatenate(([sv], lam, [lz, eta]))


def fit_hyperparameters(
    X,
    y,
    n_restarts: int = 5,
    rng: Optional[np.random.Generator] = None,
    start: Optional[KernelHyper] = None,
    noise_floor: float = NOISE_FLOOR,
    max_iter: int = 100,
) -> HyperFitResult:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    Runs bound-constrained L-BFGS-B ascents in log-parameter space from the
    provided start (if any), the prior defaults, and random restarts, and
    keeps the best optimum. Deterministic for a given generator state.
    """
    X = _validate_joint(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    d = p - 1
    if n < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    rng = rng if rng is not None else np.random.default_rng(0)
    bounds = _log_bounds(d, noise_floor)

    def objective(theta):
        hyper = KernelHyper.from_log_vector(theta, d)
        try:
            lml, grad = _lml_and_grad(X, y, hyper, want_grad=True)
        except GpNumericalError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml) or not np.all(np.isfinite(grad)):
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    starts = []
    if start is not None:
        starts.append(np.clip(start.to_log_vector(), [b[0] for b in bounds], [b[1] for b in bounds]))
    starts.append(default_hyper(d).to_log_vector())
    while len(starts) < max(n_restarts, 1):
        starts.append(_random_start(rng, d, noise_floor))
    starts = starts[: max(n_restarts, 1)]

    best_theta, best_value = None, np.inf
    for theta0 in starts:
        try:
            res = minimize(
                objective,
                theta0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": max_iter},
            )
        except (GpNumericalError, np.linalg.LinAlgError, ValueError):
            continue
        if np.isfinite(res.fun) and res.fun < best_value:
            best_value = float(res.fun)
            best_theta = np.asarray(res.x)

    if best_theta is None or best_value >= 1e24:
        return HyperFitResult(hyper=default_hyper(d), log_likelihood=-np.inf, fallback=True)
    return HyperFitResult(
        hyper=KernelHyper.from_log_vector(best_theta, d),
        log_likelihood=-best_value,
        fallback=False,
    )


class MultiFidelityGP(BaseEstimator):
    """GP regressor on joint (x, z) rows with a factorized SE covariance.

    Follows the scikit-learn estimator protocol: hyperparameters of the
    *estimator* are constructor arguments, quantities learned from data carry
    a trailing underscore. The fitted model is immutable in the sense that
    ``predict`` never mutates state; refitting builds fresh caches.

    Parameters
    ----------
    hyper : KernelHyper, optional
        Fixed kernel hyperparameters. When ``optimize`` is true they seed the
        first restart; when false they are used as-is.
    optimize : bool
        Maximize the marginal likelihood during ``fit`` (needs >= 2 rows).
    n_restarts : int
        Restarts for the marginal-likelihood ascent.
    noise_floor : float
        Lower bound on the fitted noise standard deviation.
    random_state : int, optional
        Seed for the fit restarts.
    """

    def __init__(
        self,
        hyper: Optional[KernelHyper] = None,
        optimize: bool = True,
        n_restarts: int = 5,
        noise_floor: float = NOISE_FLOOR,
        random_state: Optional[int] = None,
    ):
        self.hyper = hyper
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.noise_floor = noise_floor
        self.random_state = random_state

    # ------------------------------------------------------------------ fit

    def fit(self, X, y) -> "MultiFidelityGP":
        X = _validate_joint(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y carry different numbers of rows")
        if y.size and not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        n, p = X.shape
        self.n_features_in_ = p
        self.d_ = p - 1
        self.X_ = X.copy()
        self.y_ = y.copy()

        if n == 0:
            self.y_mean_, self.y_scale_ = 0.0, 1.0
        else:
            self.y_mean_ = float(np.mean(y))
            scale = float(np.std(y))
            self.y_scale_ = scale if scale > 1e-12 else 1.0
        self.y_std_ = (y - self.y_mean_) / self.y_scale_

        self.fit_fallback_ = False
        if self.optimize and n >= 2:
            result = fit_hyperparameters(
                X,
                self.y_std_,
                n_restarts=self.n_restarts,
                rng=np.random.default_rng(self.random_state),
                start=self.hyper,
                noise_floor=self.noise_floor,
            )
            self.hyper_ = result.hyper
            self.fit_fallback_ = result.fallback
            self.log_marginal_likelihood_ = result.log_likelihood
        else:
            self.hyper_ = self.hyper if self.hyper is not None else default_hyper(self.d_)
            self.log_marginal_likelihood_ = (
                log_marginal_likelihood(X, self.y_std_, self.hyper_) if n >= 1 else float("nan")
            )

        if n > 0:
            K = joint_kernel_matrix(X, X, self.hyper_)
            Ky = K + self.hyper_.noise_std**2 * np.eye(n)
            self.L_, self.jitter_ = _stable_cholesky(Ky)
            self.alpha_ = cho_solve((self.L_, True), self.y_std_)
        else:
            self.L_ = np.zeros((0, 0))
            self.alpha_ = np.zeros(0)
            self.jitter_ = 0.0
        return self

    # -------------------------------------------------------------- predict

    def _kvec(self, Q: np.ndarray) -> np.ndarray:
        return _se_matrix(Q, self.X_, self.hyper_.signal_variance, self.hyper_.joint_length_scales())

    def _standardized_moments(self, Q: np.ndarray, include_noise: bool) -> tuple[np.ndarray, np.ndarray]:
        n = self.X_.shape[0]
        prior_var = self.hyper_.signal_variance + (
            self.hyper_.noise_std**2 if include_noise else 0.0
        )
        if n == 0:
            m = Q.shape[0]
            return np.zeros(m), np.full(m, prior_var)
        Ks = self._kvec(Q)
        mean = Ks @ self.alpha_
        solved = cho_solve((self.L_, True), Ks.T)
        var = prior_var - np.einsum("ij,ji->i", Ks, solved)
        bad = var < NEGATIVE_VARIANCE_TOL
        if np.any(bad):
            raise GpNumericalError(
                f"posterior variance {var[bad].min():.3e} below tolerance "
                f"{NEGATIVE_VARIANCE_TOL:g}; factorization inconsistent"
            )
        return mean, np.maximum(var, 0.0)

    def predict(self, X, return_std: bool = False, include_noise: bool = True):
        """Posterior mean (and optionally standard deviation) at joint rows X.

        With ``include_noise`` the variance follows the observation-space
        posterior k(q,q) + eta^2 - k(q,X)(K + eta^2 I)^-1 k(X,q); without it
        the latent-function variance is returned.
        """
        Q = _validate_joint(X, d=self.d_)
        mean_std, var_std = self._standardized_moments(Q, include_noise)
        mean = mean_std * self.y_scale_ + self.y_mean_
        if not return_std:
            return mean
        return mean, np.sqrt(var_std) * self.y_scale_

    def standardized_std(self, X, include_noise: bool = False) -> np.ndarray:
        """Posterior standard deviation in standardized-target units."""
        Q = _validate_joint(X, d=self.d_)
        _, var_std = self._standardized_moments(Q, include_noise)
        return np.sqrt(var_std)

    # ------------------------------------------------------------ gradients

    def posterior_mean_gradient(self, q) -> tuple[float, np.ndarray]:
        """Posterior mean and its gradient w.r.t. the joint query coordinates."""
        Q = _validate_joint(np.atleast_2d(q), d=self.d_)
        if self.X_.shape[0] == 0:
            return self.y_mean_, np.zeros(self.n_features_in_)
        k = self._kvec(Q)[0]
        ls2 = self.hyper_.joint_length_scales() ** 2
        dk = -(Q[0] - self.X_) / ls2 * k[:, None]  # (n, p): dk_i/dq
        mean = float(k @ self.alpha_) * self.y_scale_ + self.y_mean_
        grad = (dk.T @ self.alpha_) * self.y_scale_
        return mean, grad

    def posterior_std_gradient(self, q, include_noise: bool = True) -> tuple[float, np.ndarray]:
        """Posterior std and its gradient w.r.t. the joint query coordinates.

        At (numerically) interpolated points the true gradient is undefined;
        it is reported as zero to keep gradient-based maximizers stable.
        """
        Q = _validate_joint(np.atleast_2d(q), d=self.d_)
        p = self.n_features_in_
        prior_var = self.hyper_.signal_variance + (
            self.hyper_.noise_std**2 if include_noise else 0.0
        )
        if self.X_.shape[0] == 0:
            return math.sqrt(prior_var) * self.y_scale_, np.zeros(p)
        k = self._kvec(Q)[0]
        v = cho_solve((self.L_, True), k)
        var = prior_var - float(k @ v)
        if var < NEGATIVE_VARIANCE_TOL:
            raise GpNumericalError(f"posterior variance {var:.3e} below tolerance")
        var = max(var, 0.0)
        std = math.sqrt(var)
        if std < 1e-12:
            return std * self.y_scale_, np.zeros(p)
        ls2 = self.hyper_.joint_length_scales() ** 2
        dk = -(Q[0] - self.X_) / ls2 * k[:, None]
        dvar = -2.0 * (dk.T @ v)
        return std * self.y_scale_, dvar / (2.0 * std) * self.y_scale_
