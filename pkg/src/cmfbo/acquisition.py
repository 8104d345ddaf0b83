"""UCB-family acquisition functions and their maximization.

The multi-fidelity acquisition scores a candidate x at target fidelity z by
its posterior mean there plus a confidence bonus taken at the top fidelity,
so exploration is always driven by uncertainty about the original objective.
The progressive procedure starts at the cheapest fidelity and climbs in steps
of the fidelity length scale while the surrogate stays confident at the
current candidate, warm-starting each inner maximization from the previous
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .gp import MultiFidelityGP

Z_MIN = 0.0
Z_MAX = 1.0


@dataclass(frozen=True)
class AcquisitionConfig:
    """Knobs of the acquisition maximization and the progressive schedule.

    ``epsilon`` gates the fidelity climb: it is compared against the
    latent posterior standard deviation in standardized-target units, where
    0.02 is negligible relative to the (unit) target range.
    """

    beta_coefficient: float = 0.2
    epsilon: float = 0.02
    lbfgs_restarts: int = 20
    lbfgs_max_iters: int = 200
    grad_tolerance: float = 1e-6
    warm_perturbations: int = 2
    warm_perturbation_std: float = 0.05

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lbfgs_restarts < 1:
            raise ValueError("need at least one restart")

    def to_dict(self) -> dict:
        return {
            "beta_coefficient": self.beta_coefficient,
            "epsilon": self.epsilon,
            "lbfgs_restarts": self.lbfgs_restarts,
            "lbfgs_max_iters": self.lbfgs_max_iters,
            "grad_tolerance": self.grad_tolerance,
            "warm_perturbations": self.warm_perturbations,
            "warm_perturbation_std": self.warm_perturbation_std,
        }


@dataclass(frozen=True)
class ProgressiveResult:
    """Outcome of the progressive procedure: the chosen pair plus the climb.

    ``fidelity_path`` records every (z, x, sigma) visited, in order; its z
    values are strictly increasing and its last entry equals the returned
    pair.
    """

    x: tuple[float, ...]
    z: float
    fidelity_path: tuple[tuple[float, tuple[float, ...], float], ...]


def beta_schedule(d: int, t: int, coefficient: float = 0.2) -> float:
    """Exploration weight at outer iteration t for d hyperparameter dims.

    beta = coefficient * d * ln(2 t), natural logarithm; strictly increasing
    in t.
    """
    if d < 1 or t < 1:
        raise ValueError("beta schedule needs d >= 1 and t >= 1")
    return coefficient * d * math.log(2.0 * t)


def _joint(x, z: float) -> np.ndarray:
    return np.append(np.asarray(x, dtype=float), z)


def mf_ucb(x, z_target: float, model: MultiFidelityGP, beta: float) -> float:
    """Posterior mean at (x, z_target) plus sqrt(beta) * std at (x, z_max)."""
    mean = model.predict([_joint(x, z_target)])
    _, std = model.predict([_joint(x, Z_MAX)], return_std=True)
    return float(mean[0] + math.sqrt(beta) * std[0])


def ucb(x, model: MultiFidelityGP, beta: float) -> float:
    """Single-fidelity upper confidence bound, evaluated at the top fidelity."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return mf_ucb(x, Z_MAX, model, beta)


def acquisition_gradient(x, z_target: float, model: MultiFidelityGP, beta: float) -> np.ndarray:
    """Gradient of mf_ucb w.r.t. x via analytic SE-kernel derivatives.

    Only the hyperparameter components are returned; when the exploration
    std underflows its gradient contribution is zero.
    """
    d = model.d_
    _, mean_grad = model.posterior_mean_gradient(_joint(x, z_target))
    _, std_grad = model.posterior_std_gradient(_joint(x, Z_MAX))
    return mean_grad[:d] + math.sqrt(beta) * std_grad[:d]


def maximize_acquisition(
    model: MultiFidelityGP,
    z_target: float,
    beta: float,
    init=None,
    config: AcquisitionConfig = AcquisitionConfig(),
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Maximize mf_ucb over the unit box with bound-constrained L-BFGS-B.

    Cold mode (no ``init``) ascends from ``lbfgs_restarts`` random starts;
    warm mode ascends from ``init`` plus a couple of Gaussian-perturbed
    copies, preserving locality around the previous candidate. The returned
    point is always feasible and never scores below the best start point;
    optimizer failures degrade to the best evaluated start rather than
    erroring.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    d = model.d_

    def value(x):
        return mf_ucb(x, z_target, model, beta)

    def neg_with_grad(x):
        return -value(x), -acquisition_gradient(x, z_target, model, beta)

    if init is None:
        starts = rng.random((config.lbfgs_restarts, d))
    else:
        init = np.clip(np.asarray(init, dtype=float), 0.0, 1.0)
        perturbed = init + rng.normal(
            0.0, config.warm_perturbation_std, size=(config.warm_perturbations, d)
        )
        starts = np.clip(np.vstack([init[None, :], perturbed]), 0.0, 1.0)

    best_x, best_v = None, -np.inf
    for x0 in starts:
        v0 = value(x0)
        if v0 > best_v:
            best_x, best_v = x0.copy(), v0
        try:
            res = minimize(
                neg_with_grad,
                x0,
                jac=True,
                method="L-BFGS-B",
                bounds=[(0.0, 1.0)] * d,
                options={"maxiter": config.lbfgs_max_iters, "gtol": config.grad_tolerance},
            )
        except Exception:
            continue
        xr = np.clip(res.x, 0.0, 1.0)
        vr = value(xr)
        if np.isfinite(vr) and vr > best_v:
            best_x, best_v = xr, vr
    return best_x


def progressive_acquisition(
    model: MultiFidelityGP,
    t: int,
    l_z: Optional[float] = None,
    config: AcquisitionConfig = AcquisitionConfig(),
    rng: Optional[np.random.Generator] = None,
) -> ProgressiveResult:
    """Pick the next (x, z) pair by climbing fidelities from the bottom.

    Starts with a cold maximization at z_min, then repeatedly raises z by
    ``l_z`` (capped at z_max) and re-maximizes warm from the previous
    candidate, as long as the model's latent uncertainty at the current pair
    stays below ``config.epsilon``. Returns the final pair plus the visited
    path. Deterministic for a fixed generator state and model.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if l_z is None:
        l_z = model.hyper_.fidelity_length_scale
    if l_z <= 0:
        raise ValueError("fidelity step must be positive")
    beta = beta_schedule(model.d_, t, config.beta_coefficient)

    z = Z_MIN
    x = maximize_acquisition(model, z, beta, init=None, config=config, rng=rng)
    sigma = float(model.standardized_std([_joint(x, z)], include_noise=False)[0])
    path = [(z, tuple(float(v) for v in x), sigma)]

    while z < Z_MAX and sigma < config.epsilon:
        z = min(z + l_z, Z_MAX)
        x = maximize_acquisition(model, z, beta, init=x, config=config, rng=rng)
        sigma = float(model.standardized_std([_joint(x, z)], include_noise=False)[0])
        path.append((z, tuple(float(v) for v in x), sigma))

    return ProgressiveResult(x=path[-1][1], z=z, fidelity_path=tuple(path))
