"""Drift and squared-diffusion regression targets from ensemble increments.

At finite ``dt`` the first two conditional moments of the increment give

    E[u_{n+1} - u_n] / dt      ~ f(u_n)
    E[(u_{n+1} - u_n)^2] / dt  ~ g(u_n)^2

with an O(dt) bias; no extrapolation in ``dt`` is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .library import _ensemble_chunks, vectorize_rows
from .simulate import EnsembleField


@dataclass
class TargetVectors:
    y_drift: np.ndarray
    y_diff: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.y_drift.shape[0]


def _increment_moment(u: np.ndarray, dt: float, power: int) -> np.ndarray:
    ns, nt, nx = u.shape
    if nt < 2:
        raise ValueError("need at least two time points")
    acc = np.zeros((nt - 1, nx))
    for start, stop in _ensemble_chunks(ns, (nt - 1) * nx):
        inc = np.diff(u[start:stop], axis=1)
        acc += (inc if power == 1 else inc**power).sum(axis=0)
    return vectorize_rows(acc / (ns * dt))


def drift_target(data: EnsembleField) -> np.ndarray:
    return _increment_moment(data.u, data.dt, 1)


def diffusion_target(data: EnsembleField) -> np.ndarray:
    # no 1/2! factor: the second moment is matched to g^2 directly
    return _increment_moment(data.u, data.dt, 2)


def km_targets(data: EnsembleField) -> TargetVectors:
    return TargetVectors(drift_target(data), diffusion_target(data))


def write_target_csv(path, y) -> None:
    y = np.asarray(y, dtype=float)
    with open(Path(path), "w") as fh:
        fh.write("row_index,value\n")
        for i, v in enumerate(y):
            fh.write(f"{i},{float(v)!r}\n")
