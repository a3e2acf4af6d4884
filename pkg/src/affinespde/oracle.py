"""Independent full-resolution SPDE solvers and comparison diagnostics.

Nothing here knows about realizations: the grid solver steps the original
equation with a theta scheme on the sampled state, the modal solver steps
every retained eigen-amplitude directly.  Verification drives both sides
with the same increments and compares the resulting paths, so agreement is
evidence that the reduced model reproduces the weak solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import funalg, levy, operators
from .errors import GridMismatch, LinearSolveFailure, UnstableConfig
from .funalg import QExpFunction
from .grids import Grid1D
from .operators import OperatorSpec
from .realization import Curve, GridPath, Subspace, space_norm


def _normalize_field(f, grid: Grid1D):
    """Drift/volatility input -> vector on the grid or callable on vectors."""
    if f is None:
        return np.zeros(grid.n)
    if isinstance(f, QExpFunction):
        return funalg.evaluate(f, grid.points())
    if callable(f):
        return f
    arr = np.asarray(f, dtype=float)
    if arr.shape != (grid.n,):
        raise GridMismatch(f"field of shape {arr.shape} on a {grid.n}-point grid")
    return arr


def _field_at(f, r: np.ndarray) -> np.ndarray:
    return f(r) if callable(f) else f


def pinned_nodes(op: OperatorSpec, grid: Grid1D) -> tuple[int, ...]:
    """Grid rows held at their initial values: Dirichlet ends for the
    second-order operators, the far-field end for transport."""
    if isinstance(op, (operators.Cable, operators.TermStructure2)):
        return (0, grid.n - 1)
    if isinstance(op, (operators.Translation, operators.Transport)):
        return (grid.n - 1,)
    raise UnstableConfig(f"no grid stepping for {type(op).__name__}; "
                         f"use the modal solver")


def _default_theta(op: OperatorSpec) -> float:
    if isinstance(op, (operators.Cable, operators.TermStructure2)):
        return 0.5
    return 1.0


def _check_stability(op: OperatorSpec, grid: Grid1D, dt: float, theta: float):
    if isinstance(op, operators.TermStructure2):
        # eigenvalues grow to +infinity: forward stepping amplifies every
        # resolved high mode regardless of theta
        raise UnstableConfig(
            "term-structure generator has unbounded growing spectrum; grid "
            "stepping is ill-posed, use the modal solver")
    if isinstance(op, operators.Cable):
        if theta < 0.5:
            nu = op.lambda_c ** 2 * dt / (op.tau * grid.dx ** 2)
            if 2.0 * (1.0 - 2.0 * theta) * nu > 1.0:
                raise UnstableConfig(
                    f"theta = {theta} needs lambda_c^2 dt / (tau dx^2) <= "
                    f"{0.5 / (1 - 2 * theta):.3g}, got {nu:.3g}")
    elif isinstance(op, (operators.Translation, operators.Transport)):
        if theta < 0.5 and (1.0 - 2.0 * theta) * dt / grid.dx > 1.0:
            raise UnstableConfig(
                f"upwind theta scheme with theta = {theta} violates the "
                f"step bound dt <= dx / {1 - 2 * theta:.3g}")


def solve_spde_grid(op: OperatorSpec, grid: Grid1D, alpha, sigma: Sequence,
                    h0, increments: levy.IncrementMatrix,
                    theta: float | None = None) -> GridPath:
    """Theta-scheme reference solution of dr = (A r + alpha(r)) dt
    + sum_k sigma^k(r) dX^k on the sampled grid:

        (I - theta dt A) r_{n+1}
            = (I + (1-theta) dt A) r_n + dt alpha(r_n) + sum_k sigma^k(r_n) dXk

    with Dirichlet/far-field rows re-pinned to the initial samples after
    every step.  Noise and drift enter at the left endpoint, matching the
    left-limit convention of the jump integral."""
    if theta is None:
        theta = _default_theta(op)
    if not 0.0 <= theta <= 1.0:
        raise UnstableConfig(f"theta must sit in [0, 1], got {theta}")
    dt = increments.dt
    _check_stability(op, grid, dt, theta)
    pins = pinned_nodes(op, grid)

    h0_vec = _normalize_field(h0, grid)
    if callable(h0_vec):
        raise GridMismatch("initial curve must be a function or vector")
    alpha_f = _normalize_field(alpha, grid)
    sigma_f = [_normalize_field(s, grid) for s in sigma]
    if len(sigma_f) != increments.m:
        raise GridMismatch(f"{len(sigma_f)} volatility components vs "
                           f"{increments.m} driver columns")

    a_mat = operators.operator_matrix(op, grid, boundary="pinned").tocsc()
    eye = scipy.sparse.identity(grid.n, format="csc")
    rhs_mat = (eye + (1.0 - theta) * dt * a_mat).tocsr()
    solver = None
    if theta > 0.0:
        try:
            solver = scipy.sparse.linalg.splu(eye - theta * dt * a_mat)
        except RuntimeError as exc:
            raise LinearSolveFailure(f"theta-scheme factorization failed: {exc}") from exc

    n_steps = increments.n_steps
    values = np.zeros((n_steps + 1, grid.n))
    r = h0_vec.copy()
    values[0] = r
    pins_arr = np.array(pins, dtype=int)
    pin_vals = h0_vec[pins_arr]
    for n in range(n_steps):
        rhs = rhs_mat @ r + dt * _field_at(alpha_f, r)
        for k, s in enumerate(sigma_f):
            rhs = rhs + _field_at(s, r) * increments.values[n, k]
        r = solver.solve(rhs) if solver is not None else rhs
        r[pins_arr] = pin_vals
        values[n + 1] = r
    t_grid = np.arange(n_steps + 1) * dt
    return GridPath(t_grid, grid.points(), values, increments.seed)


def solve_spde_modal(op: OperatorSpec, indices: Sequence, alpha, sigma: Sequence,
                     a0: np.ndarray, increments: levy.IncrementMatrix) -> np.ndarray:
    """Eigen-amplitude reference solution: every retained mode steps with the
    exact exponential flow for its linear part,

        a_{n+1,i} = e^{g_i dt} a_{n,i} + (e^{g_i dt} - 1)/g_i alpha_i
                    + sum_k sigma_{k,i} dXk_n,

    noise entering at the left endpoint.  alpha and sigma rows are amplitude
    vectors over the given indices.  Returns amplitudes (steps+1, len(indices))."""
    indices = [operators._canonical_index(op, i) for i in indices]
    gvals = np.array([operators.generator_eigenvalue(op, i) for i in indices])
    n_modes = len(indices)
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (n_modes,):
        raise GridMismatch(f"initial amplitudes shape {a0.shape} for {n_modes} modes")
    alpha_vec = np.zeros(n_modes) if alpha is None else np.asarray(alpha, dtype=float)
    if alpha_vec.shape != (n_modes,):
        raise GridMismatch(f"drift amplitudes shape {alpha_vec.shape} for {n_modes} modes")
    sig = np.zeros((increments.m, n_modes))
    for k, s in enumerate(sigma):
        sig[k] = np.asarray(s, dtype=float)
    dt = increments.dt
    grow = np.exp(gvals * dt)
    drift = np.where(np.abs(gvals) < 1e-14, dt * alpha_vec,
                     (grow - 1.0) / np.where(np.abs(gvals) < 1e-14, 1.0, gvals)
                     * alpha_vec)
    amps = np.zeros((increments.n_steps + 1, n_modes))
    a = a0.copy()
    amps[0] = a
    for n in range(increments.n_steps):
        a = grow * a + drift + increments.values[n] @ sig
        amps[n + 1] = a
    return amps


def modal_path_to_grid(op: OperatorSpec, indices: Sequence, amps: np.ndarray,
                       dt: float, grid: Grid1D, seed: int = 0) -> GridPath:
    """Map amplitude rows onto grid samples of the eigenfunctions."""
    phi = np.vstack([funalg.evaluate(operators.eigenfunction_qexp(op, i),
                                     grid.points()) for i in indices])
    t_grid = np.arange(amps.shape[0]) * dt
    return GridPath(t_grid, grid.points(), amps @ phi, seed)


# ---------------------------------------------------------------------------
# comparison metrics


@dataclass(frozen=True)
class PathMetrics:
    sup_error: float
    relative: float
    per_time: np.ndarray
    scale: float


def _check_same_grids(a: GridPath, b: GridPath):
    if a.values.shape != b.values.shape:
        raise GridMismatch(f"paths of shape {a.values.shape} vs {b.values.shape}")
    if not np.allclose(a.t_grid, b.t_grid, rtol=1e-9, atol=1e-12):
        raise GridMismatch("paths sampled on different time grids")
    if not np.allclose(a.x_grid, b.x_grid, rtol=1e-9, atol=1e-12):
        raise GridMismatch("paths sampled on different spatial grids")


def compare_paths(a: GridPath, b: GridPath,
                  weights: np.ndarray | None = None) -> PathMetrics:
    """Sup over time of the weighted-L2 spatial distance, its relative
    version (normalized by the larger path magnitude, hence symmetric), and
    the full per-time series."""
    _check_same_grids(a, b)
    w = np.ones(a.values.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (a.values.shape[1],):
        raise GridMismatch(f"weight vector shape {w.shape} for "
                           f"{a.values.shape[1]} spatial nodes")
    diff = a.values - b.values
    per_time = np.sqrt(np.maximum((diff * diff * w).sum(axis=1), 0.0))
    mag = np.sqrt(np.maximum((a.values ** 2 * w).sum(axis=1), 0.0))
    mag_b = np.sqrt(np.maximum((b.values ** 2 * w).sum(axis=1), 0.0))
    scale = max(float(mag.max(initial=0.0)), float(mag_b.max(initial=0.0)))
    sup = float(per_time.max(initial=0.0))
    return PathMetrics(sup, sup / max(scale, 1e-300), per_time, scale)


def foliation_distance(path: GridPath, psi: Curve, V: Subspace) -> np.ndarray:
    """Per-time distance of the path from the moving affine leaf: the
    component of path(t) - psi(t) orthogonal to V in the working product."""
    if path.values.shape != psi.values.shape:
        raise GridMismatch(f"path shape {path.values.shape} vs curve "
                           f"shape {psi.values.shape}")
    if not np.allclose(path.t_grid, psi.t_grid, rtol=1e-9, atol=1e-12):
        raise GridMismatch("path and curve time grids differ")
    out = np.zeros(len(path.t_grid))
    for n in range(len(path.t_grid)):
        resid = V.complement_residual(path.values[n] - psi.values[n])
        out[n] = space_norm(V.space, resid)
    return out


def tangency_residual(op: OperatorSpec, alpha, psi: Curve, V: Subspace,
                      t_samples: Sequence[int], h_samples: Sequence[np.ndarray],
                      grid: Grid1D | None = None) -> float:
    """Max over sampled interior times and states of the component of
    A h + alpha(h) - dpsi/dt orthogonal to V: the leaf-tangency defect of the
    drift field.  Time derivative by central differences, A by the natural
    grid stencil (volatility plays no role here)."""
    from .realization import GridSpace
    if grid is None:
        if not isinstance(V.space, GridSpace):
            raise GridMismatch("tangency residual needs a grid space")
        grid = V.space.grid
    dt = float(psi.t_grid[1] - psi.t_grid[0])
    alpha_f = _normalize_field(alpha, grid)
    worst = 0.0
    for ti in t_samples:
        ti = int(ti)
        if not 0 < ti < len(psi.t_grid) - 1:
            raise GridMismatch(f"time index {ti} not interior")
        dpsi = (psi.values[ti + 1] - psi.values[ti - 1]) / (2.0 * dt)
        for h in h_samples:
            h = np.asarray(h, dtype=float)
            vec = operators.apply_grid(op, h, grid) + _field_at(alpha_f, h) - dpsi
            resid = V.complement_residual(vec)
            worst = max(worst, space_norm(V.space, resid))
    return worst


# ---------------------------------------------------------------------------
# path CSV formats


def write_grid_path(path: GridPath, file) -> None:
    """First row carries the spatial axis, each later row `t,value_1..`."""
    close = False
    if isinstance(file, str):
        file = open(file, "w")
        close = True
    try:
        file.write("x," + ",".join(f"{v:.17g}" for v in path.x_grid) + "\n")
        for t, row in zip(path.t_grid, path.values):
            file.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if close:
            file.close()


def read_grid_path(file, seed: int = 0) -> GridPath:
    close = False
    if isinstance(file, str):
        file = open(file)
        close = True
    try:
        header = file.readline().strip().split(",")
        if header[0] != "x":
            raise GridMismatch("grid path file must start with the x row")
        x_grid = np.array([float(v) for v in header[1:]])
        t_list, rows = [], []
        for line in file:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            t_list.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        values = np.array(rows)
        if values.shape[1] != len(x_grid):
            raise GridMismatch("row length does not match the x row")
        return GridPath(np.array(t_list), x_grid, values, seed)
    finally:
        if close:
            file.close()


def write_coordinate_csv(t_grid: np.ndarray, coords: np.ndarray, file) -> None:
    close = False
    if isinstance(file, str):
        file = open(file, "w")
        close = True
    try:
        d = coords.shape[1]
        file.write("t," + ",".join(f"Y_{i + 1}" for i in range(d)) + "\n")
        for t, row in zip(t_grid, coords):
            file.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if close:
            file.close()


def read_coordinate_csv(file) -> tuple[np.ndarray, np.ndarray]:
    close = False
    if isinstance(file, str):
        file = open(file)
        close = True
    try:
        header = file.readline().strip().split(",")
        if header[0] != "t":
            raise GridMismatch("coordinate file must start with a t header")
        t_list, rows = [], []
        for line in file:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            t_list.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        return np.array(t_list), np.array(rows)
    finally:
        if close:
            file.close()
