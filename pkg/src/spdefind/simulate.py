"""Finite-difference / semi-implicit Euler-Maruyama simulation of 1D SPDEs.

The state on ``N_x`` nodes obeys

    du = (eps * A u + F(u)) dt + sigma dW

where ``A`` is the 3-point Laplacian, ``F`` a polynomial source and ``dW`` a
vector of independent Wiener increments.  The Laplacian is treated implicitly,
the source and noise explicitly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .exceptions import BlowUp, LinearSolveFailure

DEFAULT_BLOWUP_BOUND = 1e6
_CHUNK = 250


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet"


@dataclass(frozen=True)
class Grid1d:
    """Uniform 1D grid on ``[0, length]``.

    For ``PERIODIC`` the nodes are ``x_j = j * dx`` with ``dx = L / N_x`` (the
    node at ``x = L`` is identified with ``x = 0``).  For ``DIRICHLET_ZERO``
    only the interior nodes ``x_j = (j + 1) * dx`` are stored and
    ``dx = L / (N_x + 1)``.
    """

    length: float
    n_nodes: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n_nodes < 3:
            raise ValueError(f"n_nodes must be >= 3, got {self.n_nodes}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        if self.boundary is Boundary.PERIODIC:
            return self.length / self.n_nodes
        return self.length / (self.n_nodes + 1)

    @property
    def x(self) -> np.ndarray:
        j = np.arange(self.n_nodes, dtype=float)
        if self.boundary is Boundary.PERIODIC:
            return j * self.dx
        return (j + 1.0) * self.dx


@dataclass(frozen=True)
class TimeSpec:
    horizon: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 2:
            raise ValueError("time spec must contain at least two time points")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt)) + 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


@dataclass(frozen=True)
class SpdeModel:
    """Additive-noise reaction-diffusion SPDE.

    ``drift_poly`` holds ``(power, coefficient)`` pairs of the source term, so
    Allen-Cahn is ``((1, 1.0), (3, -1.0))``.
    """

    diffusivity: float
    noise_amplitude: float
    drift_poly: tuple[tuple[int, float], ...] = ()
    name: str = "custom"

    def __post_init__(self):
        if self.diffusivity < 0 or self.noise_amplitude < 0:
            raise ValueError("diffusivity and noise_amplitude must be non-negative")
        poly = tuple((int(p), float(c)) for p, c in self.drift_poly)
        powers = [p for p, _ in poly]
        if len(set(powers)) != len(powers):
            raise ValueError(f"duplicate powers in drift_poly: {powers}")
        if any(p < 0 or p > 6 for p in powers):
            raise ValueError("drift_poly powers must lie in 0..6")
        object.__setattr__(self, "drift_poly", poly)

    def source(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u, dtype=float)
        for p, c in self.drift_poly:
            out += c * u**p
        return out


def heat_model(diffusivity=1.0, noise=1.0) -> SpdeModel:
    return SpdeModel(diffusivity, noise, (), "heat")


def allen_cahn_model(diffusivity=1.0, noise=1.0) -> SpdeModel:
    return SpdeModel(diffusivity, noise, ((1, 1.0), (3, -1.0)), "allen-cahn")


def nagumo_model(diffusivity=1.0, noise=1.0, alpha=-0.5) -> SpdeModel:
    # u (1 - u) (u - alpha) expanded
    poly = ((1, -alpha), (2, 1.0 + alpha), (3, -1.0))
    return SpdeModel(diffusivity, noise, poly, "nagumo")


def sigmoid_front(x: np.ndarray) -> np.ndarray:
    """Initial condition ``(1 + exp(-(2 - x) / sqrt(2)))**-1`` used by the benchmark cases."""
    return 1.0 / (1.0 + np.exp(-(2.0 - x) / np.sqrt(2.0)))


@dataclass
class WienerIncrements:
    dW: np.ndarray
    dt: float


@dataclass
class EnsembleField:
    """Ensemble of trajectories ``u[s, n, j]`` = member ``s`` at time ``t_n``, node ``x_j``."""

    u: np.ndarray
    grid: Grid1d
    time: TimeSpec
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != 3:
            raise ValueError(f"field must be 3D (ensembles, time, space), got shape {self.u.shape}")
        ns, nt, nx = self.u.shape
        if ns < 1:
            raise ValueError("field needs at least one ensemble member")
        if nx != self.grid.n_nodes:
            raise ValueError(f"space axis {nx} != grid.n_nodes {self.grid.n_nodes}")
        if nt != self.time.n_steps:
            raise ValueError(f"time axis {nt} != time.n_steps {self.time.n_steps}")

    @property
    def n_ensembles(self) -> int:
        return self.u.shape[0]

    @property
    def dt(self) -> float:
        return self.time.dt

    @property
    def dx(self) -> float:
        return self.grid.dx


def build_laplacian(grid: Grid1d) -> np.ndarray:
    """Dense 3-point Laplacian, rows ``(1, -2, 1) / dx**2``.

    Periodic grids get the wrap-around corner entries; Dirichlet-zero grids
    drop them (the boundary values are zero).
    """
    n = grid.n_nodes
    A = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    if grid.boundary is Boundary.PERIODIC:
        A[0, -1] = 1.0
        A[-1, 0] = 1.0
    return A / grid.dx**2


def ensemble_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one ensemble member, keyed on ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _member_noise(seed, index, n_incr, nx, dt, scale):
    return ensemble_rng(seed, index).standard_normal((n_incr, nx)) * (np.sqrt(dt) * scale)


def sample_wiener(n_ensembles: int, n_steps: int, grid: Grid1d, dt: float, seed: int,
                  scale_noise_by_sqrt_dx: bool = False) -> WienerIncrements:
    """Draw Wiener increments of shape ``(n_ensembles, n_steps - 1, N_x)``.

    Member ``s`` uses its own stream derived from ``(seed, s)``, so the draw
    for a member does not depend on how many other members are requested.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    scale = 1.0 / np.sqrt(grid.dx) if scale_noise_by_sqrt_dx else 1.0
    dW = np.empty((n_ensembles, n_steps - 1, grid.n_nodes))
    for s in range(n_ensembles):
        dW[s] = _member_noise(seed, s, n_steps - 1, grid.n_nodes, dt, scale)
    return WienerIncrements(dW, dt)


class _ImplicitOperator:
    """LU factorization of ``I - dt * eps * A``, built once per run."""

    def __init__(self, grid: Grid1d, diffusivity: float, dt: float):
        self.identity = diffusivity == 0.0
        if self.identity:
            return
        M = np.eye(grid.n_nodes) - dt * diffusivity * build_laplacian(grid)
        try:
            self.lu = lu_factor(M, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(str(exc)) from exc
        if np.any(np.diag(self.lu[0]) == 0.0):
            raise LinearSolveFailure("implicit operator is singular")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        # rhs: (..., N_x)
        if self.identity:
            return rhs
        return lu_solve(self.lu, rhs.T, check_finite=False).T


def step_semi_implicit(state, model: SpdeModel, grid: Grid1d, dt: float, dW_row) -> np.ndarray:
    """Advance one step: solve ``(I - dt eps A) u' = u + dt F(u) + sigma dW``."""
    state = np.asarray(state, dtype=float)
    op = _ImplicitOperator(grid, model.diffusivity, dt)
    rhs = state + dt * model.source(state) + model.noise_amplitude * np.asarray(dW_row, dtype=float)
    return op.solve(rhs)


def _resolve_initial(initial_condition, grid: Grid1d) -> np.ndarray:
    if callable(initial_condition):
        u0 = np.asarray(initial_condition(grid.x), dtype=float)
    else:
        u0 = np.asarray(initial_condition, dtype=float)
    if u0.shape != (grid.n_nodes,):
        raise ValueError(f"initial condition must have shape ({grid.n_nodes},), got {u0.shape}")
    return u0


def worker_count() -> int:
    env = os.environ.get("SPDEFIND_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            pass
    return cap


def simulate_ensemble(model: SpdeModel, grid: Grid1d, time: TimeSpec, n_ensembles: int,
                      initial_condition: Callable | Sequence[float] = sigmoid_front, seed: int = 42,
                      *, scale_noise_by_sqrt_dx: bool = False,
                      blowup_bound: float = DEFAULT_BLOWUP_BOUND) -> EnsembleField:
    """Simulate ``n_ensembles`` independent trajectories from a shared initial condition.

    Members are integrated in chunks, possibly on several threads (capped by
    ``SPDEFIND_THREADS``); each member's noise comes from its own
    ``(seed, index)`` stream so the output does not depend on scheduling.

    Raises
    ------
    BlowUp
        If any state entry exceeds ``blowup_bound`` in magnitude.
    """
    if n_ensembles < 1:
        raise ValueError("n_ensembles must be >= 1")
    u0 = _resolve_initial(initial_condition, grid)
    nt, nx, dt = time.n_steps, grid.n_nodes, time.dt
    op = _ImplicitOperator(grid, model.diffusivity, dt)
    scale = 1.0 / np.sqrt(grid.dx) if scale_noise_by_sqrt_dx else 1.0
    sigma = model.noise_amplitude
    u = np.empty((n_ensembles, nt, nx))

    def run_chunk(start, stop):
        m = stop - start
        noise = np.empty((m, nt - 1, nx))
        for i in range(m):
            noise[i] = _member_noise(seed, start + i, nt - 1, nx, dt, scale)
        cur = np.broadcast_to(u0, (m, nx)).copy()
        u[start:stop, 0] = cur
        for n in range(nt - 1):
            cur = op.solve(cur + dt * model.source(cur) + sigma * noise[:, n])
            if not np.all(np.abs(cur) <= blowup_bound):
                raise BlowUp(f"|u| exceeded {blowup_bound:g} at step {n + 1} (t={(n + 1) * dt:g}); "
                             "reduce dt")
            u[start:stop, n + 1] = cur

    bounds = [(s, min(s + _CHUNK, n_ensembles)) for s in range(0, n_ensembles, _CHUNK)]
    workers = min(worker_count(), len(bounds))
    if workers == 1:
        for b in bounds:
            run_chunk(*b)
    else:
        with ThreadPoolExecutor(workers) as pool:
            for fut in [pool.submit(run_chunk, *b) for b in bounds]:
                fut.result()
    return EnsembleField(u, grid, time, seed, {"model": model.name})
