"""Exact sampling of the limiting Gaussian displacement process.

The limit process Z is centered Gaussian with

    Cov(Z_t, Z_s) = K * (v(t) + v(s) - v(|t - s|)) / 2,

K = 2*sigma*C_beta^2*C_delta/(gamma^2*C_alpha^2), v a catalogued variance
function.  Sampling is by dense lower-triangular factorization of the grid
covariance (desk-scale grids, any v), with a jitter ladder to absorb roundoff
on nearly singular kernels: lam*I is added with lam doubling from
1e-14*trace/n up to 1e-10*trace/n, after which the model is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import TrajectoryEnsemble
from .mass_laws import VarianceFn, variance_fn
from .rng import stream

__all__ = [
    "CovarianceModel",
    "CovarianceFactorizationError",
    "covariance_matrix",
    "cholesky_with_jitter",
    "sample_limit_paths",
    "sample_fbm_direct",
    "limit_prefactor",
]

JITTER_START = 1e-14
JITTER_MAX = 1e-10


class CovarianceFactorizationError(ValueError):
    """Kernel not positive semidefinite within the jitter budget."""


def limit_prefactor(sigma=1.0, gamma=1.0, C_alpha=1.0, C_beta=1.0, C_delta=1.0):
    """Covariance prefactor K = 2*sigma*C_beta^2*C_delta/(gamma^2*C_alpha^2)."""
    return 2.0 * sigma * C_beta**2 * C_delta / (gamma**2 * C_alpha**2)


@dataclass(frozen=True)
class CovarianceModel:
    """A variance function, a prefactor K, and a strictly positive time grid."""

    v: VarianceFn
    K: float
    grid: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1:
            raise ValueError("grid must be a 1-D array with at least one point")
        if grid[0] <= 0.0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing and start after 0")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def from_family(cls, family, params, grid, sigma=1.0, gamma=1.0,
                    C_alpha=1.0, C_beta=1.0, C_delta=1.0):
        vf = variance_fn(family, params, gamma)
        K = limit_prefactor(sigma, gamma, C_alpha, C_beta, C_delta)
        return cls(v=vf, K=K, grid=np.asarray(grid, dtype=float))


def covariance_matrix(model: CovarianceModel) -> np.ndarray:
    """Exact grid covariance K/2 * (v(t_i) + v(t_j) - v(|t_i - t_j|))."""
    t = model.grid
    vt = model.v.v(t)
    vdiff = model.v.v(np.abs(t[:, None] - t[None, :]))
    return 0.5 * model.K * (vt[:, None] + vt[None, :] - vdiff)


def cholesky_with_jitter(C):
    """Lower Cholesky factor, retrying with a doubling diagonal jitter.

    Returns (L, jitter_used).  Raises CovarianceFactorizationError once the
    jitter would exceed 1e-10 * trace/n.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    scale = np.trace(C) / n
    try:
        return np.linalg.cholesky(C), 0.0
    except np.linalg.LinAlgError:
        pass
    lam = JITTER_START * scale
    while lam <= JITTER_MAX * scale:
        try:
            return np.linalg.cholesky(C + lam * np.eye(n)), lam
        except np.linalg.LinAlgError:
            lam *= 2.0
    raise CovarianceFactorizationError(
        f"covariance not PSD within jitter budget {JITTER_MAX * scale:.3e} (n = {n})"
    )


def _sample_gaussian_paths(C, n_traj, rng):
    L, _ = cholesky_with_jitter(C)
    z = rng.standard_normal((n_traj, C.shape[0]))
    return z @ L.T


def sample_limit_paths(model: CovarianceModel, n_traj, rng_seed, meta=None) -> TrajectoryEnsemble:
    """Draw n_traj exact paths of the limit process on the model grid.

    Z_0 = 0 is prepended, so the returned grid is [0, *model.grid].
    """
    n_traj = int(n_traj)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    C = covariance_matrix(model)
    rng = stream(rng_seed, 0x11)
    paths = _sample_gaussian_paths(C, n_traj, rng)
    grid = np.concatenate(([0.0], model.grid))
    paths = np.hstack([np.zeros((n_traj, 1)), paths])
    info = {"K": model.K, "family": model.v.family, "seed": int(rng_seed)}
    if meta:
        info.update(meta)
    return TrajectoryEnsemble(grid=grid, observables={"Z": paths}, meta=info)


def sample_fbm_direct(H, grid, n_traj, rng_seed) -> TrajectoryEnsemble:
    """Unit-scale fractional Brownian motion on the grid, by factorizing
    (t^2H + s^2H - |t-s|^2H)/2 directly.

    Independent of the variance-function route; used as a cross-check oracle
    for the stable_power limit model.
    """
    if not (0.0 < H < 1.0):
        raise ValueError(f"H must lie in (0, 1), got {H}")
    grid = np.asarray(grid, dtype=float)
    if grid[0] <= 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start after 0")
    t = grid
    C = 0.5 * (t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H))
    rng = stream(rng_seed, 0x12)
    paths = _sample_gaussian_paths(C, int(n_traj), rng)
    full_grid = np.concatenate(([0.0], grid))
    paths = np.hstack([np.zeros((paths.shape[0], 1)), paths])
    return TrajectoryEnsemble(grid=full_grid, observables={"B": paths},
                              meta={"H": float(H), "seed": int(rng_seed)})
