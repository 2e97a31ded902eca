"""Shared container for sampled path ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrajectoryEnsemble"]


@dataclass
class TrajectoryEnsemble:
    """A time grid plus one (n_traj, n_grid) path matrix per observable.

    grid[0] must be 0 and every path starts at 0; the grid is strictly
    increasing.  meta carries a config echo for provenance (written into
    output-file headers); sidecar holds per-path records such as sampled
    (A, H) pairs.
    """

    grid: np.ndarray
    observables: dict
    meta: dict = field(default_factory=dict)
    sidecar: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("grid must be a 1-D array with at least two points")
        if self.grid[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for name, paths in self.observables.items():
            paths = np.asarray(paths, dtype=float)
            if paths.ndim != 2 or paths.shape[1] != self.grid.size:
                raise ValueError(f"paths for {name!r} must be (n_traj, {self.grid.size})")
            if not np.all(paths[:, 0] == 0.0):
                raise ValueError(f"paths for {name!r} must start at 0")
            self.observables[name] = paths

    @property
    def n_traj(self) -> int:
        return next(iter(self.observables.values())).shape[0]

    @property
    def labels(self):
        return tuple(self.observables.keys())

    def __getitem__(self, name) -> np.ndarray:
        return self.observables[name]
