"""Search space definitions and the normalized observation record."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class SearchSpace:
    """Named box-constrained dimensions plus a continuous fidelity interval.

    All modelling and acquisition code works on the unit hypercube; this class
    owns the affine maps between raw coordinates and normalized ones.

    Parameters
    ----------
    dims : sequence of (name, lower, upper)
        One entry per hyperparameter dimension, lower < upper.
    fidelity_range : (z_min, z_max)
        Raw fidelity interval; z_max is the original objective.
    """

    dims: tuple[tuple[str, float, float], ...]
    fidelity_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        dims = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(
            self,
            "fidelity_range",
            (float(self.fidelity_range[0]), float(self.fidelity_range[1])),
        )
        if not dims:
            raise ValueError("search space needs at least one dimension")
        for name, lo, hi in dims:
            if not lo < hi:
                raise ValueError(f"dimension {name!r}: lower {lo} must be < upper {hi}")
        z_lo, z_hi = self.fidelity_range
        if not z_lo < z_hi:
            raise ValueError(f"fidelity range needs z_min < z_max, got {self.fidelity_range}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.dims)

    def lower(self) -> np.ndarray:
        return np.array([lo for _, lo, _ in self.dims])

    def upper(self) -> np.ndarray:
        return np.array([hi for _, _, hi in self.dims])

    def normalize(self, x) -> np.ndarray:
        """Map raw coordinates into the unit hypercube."""
        x = np.asarray(x, dtype=float)
        return (x - self.lower()) / (self.upper() - self.lower())

    def denormalize(self, u) -> np.ndarray:
        """Map unit-hypercube coordinates back to raw bounds."""
        u = np.asarray(u, dtype=float)
        return self.lower() + u * (self.upper() - self.lower())

    def normalize_fidelity(self, z: float) -> float:
        z_lo, z_hi = self.fidelity_range
        return (float(z) - z_lo) / (z_hi - z_lo)

    def denormalize_fidelity(self, u: float) -> float:
        z_lo, z_hi = self.fidelity_range
        return z_lo + float(u) * (z_hi - z_lo)

    def contains(self, x, tol: float = _UNIT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower() - tol) and np.all(x <= self.upper() + tol))

    def to_dict(self) -> dict:
        return {
            "dims": [[n, lo, hi] for n, lo, hi in self.dims],
            "fidelity_range": list(self.fidelity_range),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SearchSpace":
        return cls(
            dims=tuple((n, lo, hi) for n, lo, hi in payload["dims"]),
            fidelity_range=tuple(payload["fidelity_range"]),
        )


def unit_space(d: int) -> SearchSpace:
    """A d-dimensional unit box, handy for synthetic objectives."""
    return SearchSpace(dims=tuple((f"x{i}", 0.0, 1.0) for i in range(d)))


@dataclass(frozen=True)
class Observation:
    """One evaluated query in normalized coordinates.

    ``x`` and ``z`` live on the unit hypercube / unit fidelity interval.
    ``warm_source`` is the index of the earlier query whose artifact seeded
    this evaluation (-1 when the evaluation started cold). ``failed`` marks
    queries whose objective call errored; their ``y`` is imputed.
    """

    x: tuple[float, ...]
    z: float
    y: float
    cost: float
    artifact: Any = None
    warm_source: int = -1
    failed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "cost", float(self.cost))
        for v in self.x:
            if not -_UNIT_TOL <= v <= 1.0 + _UNIT_TOL:
                raise ValueError(f"normalized x component {v} outside [0, 1]")
        if not -_UNIT_TOL <= self.z <= 1.0 + _UNIT_TOL:
            raise ValueError(f"normalized fidelity {self.z} outside [0, 1]")
        if self.cost < 0:
            raise ValueError("cost must be non-negative")

    @property
    def point(self) -> np.ndarray:
        """Joint (x, z) coordinates as a flat array."""
        return np.array(self.x + (self.z,))


def observations_to_arrays(observations) -> tuple[np.ndarray, np.ndarray]:
    """Stack observations into (n, d+1) inputs and (n,) targets."""
    obs = list(observations)
    if not obs:
        raise ValueError("no observations to stack")
    X = np.array([o.point for o in obs])
    y = np.array([o.y for o in obs])
    return X, y
