"""Affine realizations: detection, construction, curve and coordinate solvers.

The state r of the equation dr = (A r + alpha(r)) dt + sigma(r_-) dX is
represented either on a weighted 1-D grid, on a finite eigenbasis, or on a
profile x ray product space for the wedge transport.  A realization splits r
as psi(t) + sum_i Y_i(t) v_i where psi solves the deterministic PDE

    dpsi/dt = A psi + P_U alpha,    psi(0) = u0,

u0 + v0 is the splitting of the initial curve by the complement U of V
under the working inner product, and Y solves the d-dimensional SDE with
drift matrix B (A restricted to V) plus the V-components of alpha and sigma.

Checks implemented before a realization is built:

  1. V is invariant under A (images stay in the span, checked at coefficient
     level);
  2. the complement projection of the drift is constant along h + V (trivial
     for constant drift; sampled for callable drift);
  3. every volatility component has range inside V.

All three are necessary and sufficient for the affine structure when V is
finite dimensional and the complement projection of A vanishes on V, which
clause 1 guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import funalg, levy, operators
from .errors import (
    ConfigError,
    DomainError,
    DriftConditionFails,
    GridMismatch,
    LinearSolveFailure,
    MethodUnsupported,
    NotInvariant,
    NotQuasiExponential,
    SchemeUnsupported,
    SigmaEscapesV,
    TruncationTailTooLarge,
)
from .funalg import QExpFunction, SpanBasis
from .grids import Grid1D, trapezoid_weights
from .operators import EigenExpansion, OperatorSpec, RayBundle

DIM_CAP = 50
TOL_RANK = 1e-9
TOL_PROJECT = 1e-10


# ---------------------------------------------------------------------------
# state space descriptors: everything reduces to weighted vectors


@dataclass(frozen=True)
class GridSpace:
    """Weighted-L2 truncated grid: <f, g> = sum_i trap_i w(x_i) f_i g_i."""

    grid: Grid1D
    weight: QExpFunction | None = None
    label: str = "grid"

    def axis(self) -> np.ndarray:
        return self.grid.points()

    @property
    def size(self) -> int:
        return self.grid.n

    def weights(self) -> np.ndarray:
        w = trapezoid_weights(self.grid.n, self.grid.dx)
        if self.weight is not None:
            wv = funalg.evaluate(self.weight, self.grid.points())
            if np.any(wv <= 0):
                raise ConfigError("inner product weight must be positive on the grid")
            w = w * wv
        return w

    def sample(self, f) -> np.ndarray:
        if isinstance(f, QExpFunction):
            return funalg.evaluate(f, self.grid.points())
        arr = np.asarray(f, dtype=float)
        if arr.shape != (self.grid.n,):
            raise GridMismatch(f"vector of shape {arr.shape} on a {self.grid.n}-point grid")
        return arr


@dataclass(frozen=True)
class ModalSpace:
    """Coefficient space over a fixed tuple of catalog eigen-indices.  The
    eigenfunctions are declared orthonormal, a legitimate working inner
    product since the realization checks do not depend on the complement."""

    op: OperatorSpec
    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(
            operators._canonical_index(self.op, i) for i in self.indices))

    def axis(self) -> np.ndarray:
        return np.arange(len(self.indices), dtype=float)

    @property
    def size(self) -> int:
        return len(self.indices)

    def weights(self) -> np.ndarray:
        return np.ones(len(self.indices))

    def sample(self, f) -> np.ndarray:
        if isinstance(f, EigenExpansion):
            if f.op != self.op:
                raise GridMismatch("expansion belongs to a different operator")
            pos = {idx: i for i, idx in enumerate(self.indices)}
            out = np.zeros(len(self.indices))
            for idx, c in f.items:
                if idx not in pos:
                    raise DomainError(f"mode {idx} outside the space's index set")
                out[pos[idx]] = c
            return out
        arr = np.asarray(f, dtype=float)
        if arr.shape != (len(self.indices),):
            raise GridMismatch(f"coefficient vector of shape {arr.shape} for "
                               f"{len(self.indices)} modes")
        return arr


@dataclass(frozen=True)
class ProfileRaySpace:
    """Product space for the wedge transport: boundary profiles (opaque
    orthonormal labels) times a weighted ray grid.  Vectors are profile-major
    blocks of ray samples."""

    profiles: tuple[str, ...]
    ray: GridSpace

    def axis(self) -> np.ndarray:
        return np.arange(len(self.profiles) * self.ray.size, dtype=float)

    @property
    def size(self) -> int:
        return len(self.profiles) * self.ray.size

    def weights(self) -> np.ndarray:
        return np.tile(self.ray.weights(), len(self.profiles))

    def sample(self, f) -> np.ndarray:
        if isinstance(f, RayBundle):
            out = np.zeros(self.size)
            n = self.ray.size
            pos = {lbl: i for i, lbl in enumerate(self.profiles)}
            for lbl, fn in f.parts:
                if lbl not in pos:
                    raise DomainError(f"profile {lbl!r} outside the space")
                i = pos[lbl]
                out[i * n:(i + 1) * n] += self.ray.sample(fn)
            return out
        arr = np.asarray(f, dtype=float)
        if arr.shape != (self.size,):
            raise GridMismatch(f"vector of shape {arr.shape} for product size {self.size}")
        return arr


SpaceSpec = GridSpace | ModalSpace | ProfileRaySpace


def space_norm(space: SpaceSpec, vec: np.ndarray) -> float:
    w = space.weights()
    return float(math.sqrt(max(np.dot(w * vec, vec), 0.0)))


# ---------------------------------------------------------------------------
# subspaces and projections


@dataclass(frozen=True)
class Subspace:
    """Finite-dimensional subspace with sampled basis and Gram matrix."""

    basis: tuple
    space: SpaceSpec
    samples: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    label: str = "V"

    @classmethod
    def build(cls, basis: Sequence, space: SpaceSpec, label: str = "V",
              tol_rank: float = TOL_RANK) -> "Subspace":
        basis = tuple(basis)
        if basis:
            samples = np.vstack([space.sample(b) for b in basis])
        else:
            samples = np.zeros((0, space.size))
        w = space.weights()
        gram = (samples * w) @ samples.T
        if basis:
            eig = np.linalg.eigvalsh(gram)
            if eig[0] <= 1e-10 * max(eig[-1], 1e-300):
                raise LinearSolveFailure(
                    f"basis of {label} is numerically dependent "
                    f"(gram eigenvalue ratio {eig[0]:.2e} / {eig[-1]:.2e})")
        return cls(basis, space, samples, gram, label)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def coords(self, h: np.ndarray) -> np.ndarray:
        """Coordinates of the orthogonal projection of h onto the subspace."""
        if self.dim == 0:
            return np.zeros(0)
        rhs = self.samples @ (self.space.weights() * h)
        try:
            return np.linalg.solve(self.gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveFailure(f"gram solve failed: {exc}") from exc

    def project(self, h: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return np.zeros_like(h)
        return self.samples.T @ self.coords(h)

    def complement_residual(self, h: np.ndarray) -> np.ndarray:
        return h - self.project(h)

    def from_coords(self, c: np.ndarray) -> np.ndarray:
        return self.samples.T @ np.asarray(c, dtype=float)


# ---------------------------------------------------------------------------
# span computations across representations


def _coeff_matrix_generic(funcs: Sequence):
    first = funcs[0]
    if isinstance(first, QExpFunction):
        return funalg.coefficient_matrix(funcs)
    if isinstance(first, EigenExpansion):
        keys: list = []
        index: dict = {}
        rows = []
        for f in funcs:
            row = {}
            for idx, c in f.items:
                if idx not in index:
                    index[idx] = len(keys)
                    keys.append(idx)
                row[index[idx]] = c
            rows.append(row)
        mat = np.zeros((len(funcs), max(len(keys), 1)))
        for i, row in enumerate(rows):
            for k, c in row.items():
                mat[i, k] = c
        return mat, tuple(keys)
    if isinstance(first, RayBundle):
        labels = sorted({lbl for b in funcs for lbl, _fn in b.parts})
        rays = [fn for b in funcs for _lbl, fn in b.parts]
        if not rays:
            return np.zeros((len(funcs), 1)), ()
        ray_mat, ray_keys = funalg.coefficient_matrix(rays)
        k = ray_mat.shape[1]
        mat = np.zeros((len(funcs), max(len(labels) * k, 1)))
        pos = 0
        for i, b in enumerate(funcs):
            for lbl, _fn in b.parts:
                j = labels.index(lbl)
                mat[i, j * k:(j + 1) * k] += ray_mat[pos]
                pos += 1
        keys = tuple((lbl, key) for lbl in labels for key in ray_keys)
        return mat, keys
    raise DomainError(f"span computations need symbolic functions, got {type(first).__name__}")


def span_basis(funcs: Sequence, tol_rank: float = TOL_RANK) -> SpanBasis:
    """span_dimension generalized to eigen-expansions and ray bundles."""
    funcs = list(funcs)
    if not funcs:
        return SpanBasis((), 0, np.zeros((0, 0)))
    mat, keys = _coeff_matrix_generic(funcs)
    rank, piv = funalg.rank_and_pivots(mat, tol_rank)
    return SpanBasis(tuple(funcs[i] for i in piv), rank, mat[piv], keys)


def _resynthesize(span: SpanBasis) -> SpanBasis:
    """Re-express a quasi-exponential span through coefficient-orthonormal
    combinations.  Repeated derivative sweeps accumulate badly scaled
    functions; the recombined rows keep rank decisions on the same span well
    conditioned downstream."""
    if span.dim == 0 or not all(isinstance(f, QExpFunction) for f in span.functions):
        return span
    q, _ = np.linalg.qr(span.coefficient_matrix.T)
    rows = np.ascontiguousarray(q.T[:span.dim])
    for row in rows:
        lead = np.argmax(np.abs(row))
        if row[lead] < 0.0:
            row *= -1.0
    funcs = []
    for row in rows:
        funcs.append(QExpFunction.from_terms(
            (c, k[0], k[1], k[2], k[3])
            for c, k in zip(row, span.keys) if abs(c) > 1e-14))
    return SpanBasis(tuple(funcs), span.dim, rows, span.keys)


@dataclass(frozen=True)
class ClosureResult:
    status: str  # "quasi_exponential" or "not_detected"
    basis: SpanBasis
    iterations: int
    dims: tuple[int, ...]


def invariant_span(op: OperatorSpec, generators: Sequence, dim_cap: int = DIM_CAP,
                   tol_rank: float = TOL_RANK) -> ClosureResult:
    """Smallest A-invariant span containing the generators, by sweeping
    span <- span + A(span) until the dimension stabilizes or exceeds the cap.

    A stabilized sweep certifies quasi-exponential volatility; blowing
    through the cap reports not_detected (the closure may be infinite
    dimensional or merely larger than the cap)."""
    current = span_basis(generators, tol_rank)
    dims = [current.dim]
    iterations = 0
    while True:
        iterations += 1
        images = [operators.apply_exact(op, f) for f in current.functions]
        combined = span_basis(list(current.functions) + images, tol_rank)
        dims.append(combined.dim)
        if combined.dim == current.dim:
            return ClosureResult("quasi_exponential", _resynthesize(combined),
                                 iterations, tuple(dims))
        if combined.dim > dim_cap:
            return ClosureResult("not_detected", combined, iterations, tuple(dims))
        current = _resynthesize(combined)


@dataclass(frozen=True)
class InvarianceCheck:
    ok: bool
    dim: int
    offender: int | None = None
    residual: float = 0.0


def check_invariant(op: OperatorSpec, basis: Sequence,
                    tol_rank: float = TOL_RANK) -> InvarianceCheck:
    """Does span(basis) absorb its image under A?  On failure the certificate
    carries the first offending basis index and its relative residual after
    projecting the image back onto the span (coefficient level)."""
    basis = list(basis)
    images = [operators.apply_exact(op, f) for f in basis]
    mat, _keys = _coeff_matrix_generic(basis + images)
    b_mat, i_mat = mat[:len(basis)], mat[len(basis):]
    base = span_basis(basis, tol_rank)
    combined = span_basis(basis + images, tol_rank)
    if combined.dim == base.dim:
        return InvarianceCheck(True, base.dim)
    coef, *_ = np.linalg.lstsq(b_mat.T, i_mat.T, rcond=None)
    resid = i_mat.T - b_mat.T @ coef
    rel = np.linalg.norm(resid, axis=0) / np.maximum(
        np.linalg.norm(i_mat, axis=1), 1e-300)
    offender = int(np.argmax(rel))
    return InvarianceCheck(False, combined.dim, offender, float(rel[offender]))


# ---------------------------------------------------------------------------
# drift and volatility specifications


@dataclass(frozen=True)
class ConstantDrift:
    """State-independent drift; element None means zero."""

    element: object = None  # QExpFunction | EigenExpansion | RayBundle | ndarray | None


@dataclass(frozen=True)
class StateDrift:
    """Drift with values in V: coordinates depend on (t, Y).  Its complement
    projection vanishes identically, so the fiber condition holds by
    construction."""

    coords_fn: Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CallableDrift:
    """Opaque drift h -> alpha(h) on sampled vectors; usable in the decision
    procedures (sampled evidence) and the grid oracle, not in the reduced
    simulation."""

    fn: Callable[[np.ndarray], np.ndarray]


DriftSpec = ConstantDrift | StateDrift | CallableDrift


@dataclass(frozen=True)
class StateVol:
    """sigma^k(h) = scale(coordinates of P_V h) * base with base in V."""

    base: object
    scale_fn: Callable[[np.ndarray], float]


def drift_projection_constant(alpha: DriftSpec, V: Subspace,
                              probes: Sequence[np.ndarray] = (),
                              directions: Sequence[np.ndarray] = (),
                              tol: float = 1e-8) -> tuple[bool, float]:
    """Is the complement projection of the drift constant along each fiber
    h + V?  Constant and V-valued drift pass without sampling; callable drift
    is probed at the given base points and V-directions, which yields
    evidence, not proof."""
    if isinstance(alpha, (ConstantDrift, StateDrift)):
        return True, 0.0
    if not probes or not directions:
        raise DriftConditionFails("callable drift needs probe points and directions")
    worst = 0.0
    for h in probes:
        ref = V.complement_residual(alpha.fn(np.asarray(h, dtype=float)))
        for v in directions:
            dev = V.complement_residual(alpha.fn(np.asarray(h + v, dtype=float))) - ref
            worst = max(worst, space_norm(V.space, dev))
    return worst <= tol, worst


# ---------------------------------------------------------------------------
# semi-invariance correction


@dataclass(frozen=True)
class CorrectionOperator:
    """T = -P_U A P_V stored in factored low-rank form T = left @ right."""

    left: np.ndarray
    right: np.ndarray
    space: SpaceSpec

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.left @ (self.right @ np.asarray(h, dtype=float))

    def matrix(self) -> np.ndarray:
        return self.left @ self.right

    def operator_norm(self) -> float:
        """Largest singular value in the weighted metric."""
        w = self.space.weights()
        sq = np.sqrt(w)
        lw = self.left * sq[:, None]
        rw = self.right / np.maximum(sq[None, :], 1e-300)
        _q, rl = np.linalg.qr(lw)
        s = np.linalg.svd(rl @ rw, compute_uv=False)
        return float(s[0]) if s.size else 0.0


def semiinvariant_correction(op: OperatorSpec, V: Subspace) -> CorrectionOperator:
    """Correction making the complement projection of (A + T) vanish on V.
    The basis functions are assumed inside the generator's domain (true for
    every symbolic family here), so the extension of A used off the domain is
    immaterial: T acts through the projection onto V."""
    if V.dim == 0:
        n = V.space.size
        return CorrectionOperator(np.zeros((n, 0)), np.zeros((0, n)), V.space)
    images = np.vstack([V.space.sample(operators.apply_exact(op, b)) for b in V.basis])
    w = V.space.weights()
    phi_w = V.samples * w
    try:
        right = np.linalg.solve(V.gram, phi_w)                    # coords map
        inside = np.linalg.solve(V.gram, phi_w @ images.T)        # P_V images
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(f"gram solve failed: {exc}") from exc
    left = -(images.T - V.samples.T @ inside)
    return CorrectionOperator(left, right, V.space)


# ---------------------------------------------------------------------------
# realizations


@dataclass(frozen=True)
class VolCoord:
    coords: np.ndarray
    scale_fn: Callable[[np.ndarray], float] | None = None

    def at(self, y: np.ndarray) -> np.ndarray:
        if self.scale_fn is None:
            return self.coords
        return self.scale_fn(y) * self.coords


@dataclass(frozen=True)
class DriftSplit:
    """Drift separated by the complement: u_part lives in U (None means
    zero), v_coords are the V-coordinates (constant vector, or a callable of
    (t, Y) for V-valued state drift)."""

    kind: str  # "zero" | "constant" | "state"
    v_coords: object = None
    u_symbolic: object = None
    u_vector: np.ndarray | None = None

    def coords_at(self, t: float, y: np.ndarray) -> np.ndarray:
        if self.kind == "state":
            return np.asarray(self.v_coords(t, y), dtype=float)
        if self.kind == "constant":
            return self.v_coords
        return np.zeros(y.shape[-1] if y.ndim else 0)


@dataclass(frozen=True)
class Realization:
    op: OperatorSpec
    V: Subspace
    B: np.ndarray
    vols: tuple[VolCoord, ...]
    drift: DriftSplit
    psi_method: str
    mode_indices: tuple | None = None
    truncation_bound: float = 1e-6
    clauses: dict = field(default_factory=dict)
    correction_norm: float = 0.0

    @property
    def dim(self) -> int:
        return self.V.dim


def _symbolic_coords(basis: Sequence, target, tol: float):
    """Least-squares coordinates of target in span(basis) at coefficient
    level; returns (coords, relative residual)."""
    mat, _ = _coeff_matrix_generic(list(basis) + [target])
    b_mat, t_vec = mat[:-1], mat[-1]
    scale = max(np.linalg.norm(t_vec), 1e-300)
    coef, *_ = np.linalg.lstsq(b_mat.T, t_vec, rcond=None)
    resid = np.linalg.norm(b_mat.T @ coef - t_vec) / scale
    return coef, resid


def _linear_combination(basis: Sequence, coords: np.ndarray):
    out = None
    for b, c in zip(basis, coords):
        piece = b * float(c)
        out = piece if out is None else out + piece
    return out


def _is_symbolic(f) -> bool:
    return isinstance(f, (QExpFunction, EigenExpansion, RayBundle))


def build_realization(op: OperatorSpec, alpha: DriftSpec, vols: Sequence,
                      V: Subspace, tol_project: float = TOL_PROJECT,
                      tol_rank: float = TOL_RANK, drift_tol: float = 1e-8,
                      probes: Sequence = (), directions: Sequence = (),
                      psi_method: str = "spectral_truncation",
                      mode_indices: Sequence | None = None,
                      truncation_bound: float = 1e-6) -> Realization:
    """Run the three realization checks and assemble the reduced model.

    Raises NotInvariant / DriftConditionFails / SigmaEscapesV when the
    corresponding clause fails; the clause report lands in .clauses."""
    if V.dim and not all(_is_symbolic(b) for b in V.basis):
        raise DomainError("realization construction needs a symbolic basis")

    # clause 1: invariance, plus the coordinate matrix of A on V
    clauses: dict = {}
    if V.dim:
        inv = check_invariant(op, V.basis, tol_rank)
        if not inv.ok:
            raise NotInvariant(
                f"A maps basis element {inv.offender} outside {V.label} "
                f"(relative residual {inv.residual:.3e})")
        images = [operators.apply_exact(op, b) for b in V.basis]
        mat, _ = _coeff_matrix_generic(list(V.basis) + images)
        b_mat, i_mat = mat[:V.dim], mat[V.dim:]
        bt, *_ = np.linalg.lstsq(b_mat.T, i_mat.T, rcond=None)
        rel = np.linalg.norm(b_mat.T @ bt - i_mat.T) / max(
            np.linalg.norm(i_mat), 1e-300)
        if rel > 1e-8:
            raise NotInvariant(f"coordinate matrix residual {rel:.3e}")
        B = bt  # column i holds coordinates of A v_i
        clauses["invariant"] = {"ok": True, "dim": V.dim, "residual": float(rel)}
    else:
        B = np.zeros((0, 0))
        clauses["invariant"] = {"ok": True, "dim": 0, "residual": 0.0}

    # clause 3: volatility ranges inside V
    vol_coords = []
    for k, vol in enumerate(vols):
        scale_fn = None
        target = vol
        if isinstance(vol, StateVol):
            scale_fn, target = vol.scale_fn, vol.base
        if _is_symbolic(target) and V.dim:
            coords, resid = _symbolic_coords(V.basis, target, tol_project)
        else:
            vec = V.space.sample(target)
            coords = V.coords(vec)
            scale = max(space_norm(V.space, vec), 1e-300)
            resid = space_norm(V.space, vec - V.from_coords(coords)) / scale
        if resid > tol_project:
            raise SigmaEscapesV(
                f"volatility component {k} leaves {V.label} "
                f"(relative residual {resid:.3e})")
        vol_coords.append(VolCoord(np.asarray(coords, dtype=float), scale_fn))
    clauses["volatility_in_V"] = {"ok": True, "components": len(vol_coords)}

    # clause 2: drift constant along fibers, then split by the complement
    ok, dev = drift_projection_constant(alpha, V, probes, directions, drift_tol)
    if not ok:
        raise DriftConditionFails(
            f"complement drift varies along fibers (max deviation {dev:.3e})")
    sampled = isinstance(alpha, CallableDrift)
    clauses["drift_constant_on_fibers"] = {
        "ok": True, "max_deviation": float(dev), "sampled_evidence": sampled}

    if isinstance(alpha, StateDrift):
        drift = DriftSplit("state", v_coords=alpha.coords_fn)
    elif isinstance(alpha, CallableDrift):
        drift = DriftSplit("state", v_coords=None)  # not simulatable
    else:
        el = alpha.element
        if el is None:
            drift = DriftSplit("zero", v_coords=np.zeros(V.dim))
        else:
            vec = V.space.sample(el)
            coords = V.coords(vec)
            u_vec = vec - V.from_coords(coords)
            u_sym = None
            if _is_symbolic(el) and all(_is_symbolic(b) for b in V.basis):
                u_sym = el - _linear_combination(V.basis, coords) if V.dim else el
            if space_norm(V.space, u_vec) <= 1e-12 * max(1.0, space_norm(V.space, vec)):
                u_sym, u_vec = None, None
            drift = DriftSplit("constant", v_coords=coords,
                               u_symbolic=u_sym, u_vector=u_vec)

    correction_norm = 0.0
    if V.dim:
        correction_norm = semiinvariant_correction(op, V).operator_norm()

    return Realization(op=op, V=V, B=np.ascontiguousarray(B),
                       vols=tuple(vol_coords), drift=drift,
                       psi_method=psi_method,
                       mode_indices=tuple(mode_indices) if mode_indices else None,
                       truncation_bound=truncation_bound, clauses=clauses,
                       correction_norm=float(correction_norm))


def split_initial(real: Realization, h0) -> tuple[object, np.ndarray]:
    """Decompose the initial curve by the complement: h0 = u0 + sum v0_i v_i.
    Returns (u0, v0) with u0 symbolic whenever h0 and the basis are."""
    vec = real.V.space.sample(h0)
    v0 = real.V.coords(vec)
    if _is_symbolic(h0) and all(_is_symbolic(b) for b in real.V.basis):
        u0 = h0 - _linear_combination(real.V.basis, v0) if real.dim else h0
    else:
        u0 = vec - real.V.from_coords(v0)
    return u0, v0


# ---------------------------------------------------------------------------
# the deterministic carrier curve psi


@dataclass(frozen=True)
class Curve:
    t_grid: np.ndarray
    values: np.ndarray  # (len(t_grid), space.size)
    space: SpaceSpec
    meta: dict = field(default_factory=dict)


def _uniform_dt(t_grid: np.ndarray) -> float:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2:
        raise GridMismatch("time grid needs at least two points")
    steps = np.diff(t_grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-14):
        raise GridMismatch("time grid must be uniform")
    return float(steps[0])


def _shift_interp(vec: np.ndarray, x: np.ndarray, s: float) -> np.ndarray:
    """Samples of h(. + s) from samples of h, zero beyond the right edge
    (truncation assumes decay)."""
    return np.interp(x + s, x, vec, right=0.0)


def _modal_split_symbolic(op: OperatorSpec, f: QExpFunction, indices):
    """Exact eigen-coefficients of the resolvable terms; the rest is returned
    as a leftover function."""
    coefs = dict.fromkeys(indices, 0.0)
    leftover = []
    for term in f.terms:
        c, j, mu, nu, kind = term
        idx = None
        if isinstance(op, operators.Cable):
            n = round(nu)
            if (j == 0 and kind == "sin" and abs(mu) <= 1e-9
                    and abs(nu - n) <= 1e-9 and n >= 1):
                idx = int(n)
        elif isinstance(op, operators.TermStructure2):
            n = round(nu / math.pi)
            if (j == 0 and kind == "sin" and abs(mu + 1.0 / op.kappa) <= 1e-9
                    and abs(nu - n * math.pi) <= 1e-9 and n >= 1):
                idx = int(n)
        if idx is not None and idx in coefs:
            coefs[idx] += c
        else:
            leftover.append(term)
    return coefs, QExpFunction.from_terms(leftover)


def _modal_project_numeric(op: OperatorSpec, vec: np.ndarray, grid: Grid1D, indices):
    """Sturm-Liouville quadrature projection onto catalog modes (cable and
    term-structure families on their native intervals)."""
    x = grid.points()
    trap = trapezoid_weights(grid.n, grid.dx)
    coefs = {}
    if isinstance(op, operators.Cable):
        for n in indices:
            phi = np.sin(n * x)
            coefs[n] = float(np.dot(trap * phi, vec) / (math.pi / 2.0))
    elif isinstance(op, operators.TermStructure2):
        sl_w = np.exp(2.0 * x / op.kappa)
        for n in indices:
            phi = funalg.evaluate(operators.eigenfunction_qexp(op, n), x)
            coefs[n] = float(np.dot(trap * sl_w * phi, vec) / 0.5)
    else:
        raise MethodUnsupported(
            f"no grid-based modal projection for {type(op).__name__}")
    return coefs


def _phi1(g: float, t) -> np.ndarray:
    """(e^{g t} - 1)/g with the g -> 0 limit."""
    t = np.asarray(t, dtype=float)
    if abs(g) < 1e-14:
        return t.copy()
    return (np.exp(g * t) - 1.0) / g


def solve_psi(real: Realization, h0, t_grid: np.ndarray) -> Curve:
    """Deterministic curve through the foliation: dpsi/dt = A psi + P_U alpha
    with psi(0) = u0, the complement component of the initial curve."""
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_dt(t_grid)
    space = real.V.space
    u0, _v0 = split_initial(real, h0)
    method = real.psi_method

    if real.drift.kind == "state" and real.drift.v_coords is None:
        raise MethodUnsupported("callable drift cannot drive the reduced solver")

    if method == "shift_exact":
        if not isinstance(real.op, (operators.Translation, operators.Transport)):
            raise MethodUnsupported("shift_exact needs a transport generator")
        values = np.zeros((len(t_grid), space.size))
        if isinstance(u0, QExpFunction):
            for i, t in enumerate(t_grid):
                values[i] = space.sample(funalg.shift(u0, float(t)))
        elif isinstance(u0, RayBundle):
            for i, t in enumerate(t_grid):
                values[i] = space.sample(u0.shift_rays(float(t)))
        else:
            raise MethodUnsupported(
                "shift_exact needs a symbolic initial curve; use grid_implicit")
        u_sym, u_vec = real.drift.u_symbolic, real.drift.u_vector
        if u_sym is not None:
            # int_0^t S_{t-s} a ds = G(. + t) - G with G the running integral
            if isinstance(u_sym, QExpFunction):
                big_g = funalg.integrate_from_zero(u_sym)
                g0 = space.sample(big_g)
                for i, t in enumerate(t_grid):
                    values[i] += space.sample(funalg.shift(big_g, float(t))) - g0
            elif isinstance(u_sym, RayBundle):
                big_g = RayBundle.make(
                    (lbl, funalg.integrate_from_zero(fn)) for lbl, fn in u_sym.parts)
                g0 = space.sample(big_g)
                for i, t in enumerate(t_grid):
                    values[i] += space.sample(big_g.shift_rays(float(t))) - g0
            else:
                raise MethodUnsupported("symbolic drift remainder expected")
        elif u_vec is not None:
            if not isinstance(space, GridSpace):
                raise MethodUnsupported("sampled drift accumulation needs a grid space")
            x = space.grid.points()
            acc = np.zeros(space.size)
            a_prev = u_vec.copy()
            for i, t in enumerate(t_grid):
                if i:
                    a_cur = _shift_interp(u_vec, x, float(t))
                    acc = acc + 0.5 * dt * (a_prev + a_cur)
                    a_prev = a_cur
                values[i] += acc
        return Curve(t_grid, values, space)

    if method == "spectral_truncation":
        if isinstance(space, ModalSpace):
            indices = space.indices
            a0 = space.sample(u0) if not isinstance(u0, np.ndarray) else u0
            tail = 0.0
            drift_coefs = np.zeros(len(indices))
            if real.drift.kind == "constant":
                if real.drift.u_symbolic is not None or real.drift.u_vector is not None:
                    u_rep = (real.drift.u_symbolic
                             if real.drift.u_symbolic is not None else real.drift.u_vector)
                    drift_coefs = space.sample(u_rep) if not isinstance(u_rep, np.ndarray) else u_rep
            gvals = np.array([operators.generator_eigenvalue(real.op, i) for i in indices])
            amps = (np.exp(np.outer(t_grid, gvals)) * a0[None, :]
                    + np.vstack([_phi1(g, t_grid) for g in gvals]).T * drift_coefs[None, :])
            return Curve(t_grid, amps, space)
        if not isinstance(space, GridSpace):
            raise MethodUnsupported("spectral truncation needs a grid or modal space")
        if real.mode_indices is None:
            raise MethodUnsupported("spectral truncation needs mode_indices")
        indices = list(real.mode_indices)
        grid = space.grid
        scale = max(space_norm(space, space.sample(h0)), 1e-300)

        def expand(rep):
            if isinstance(rep, QExpFunction):
                coefs, left = _modal_split_symbolic(real.op, rep, indices)
                if not left.is_zero:
                    extra = _modal_project_numeric(real.op, space.sample(left), grid, indices)
                    for n in indices:
                        coefs[n] += extra[n]
                    recon = np.zeros(grid.n)
                    for n in indices:
                        recon += extra[n] * funalg.evaluate(
                            operators.eigenfunction_qexp(real.op, n), grid.points())
                    tail = space_norm(space, space.sample(left) - recon)
                else:
                    tail = 0.0
            else:
                vec = np.asarray(rep, dtype=float)
                coefs = _modal_project_numeric(real.op, vec, grid, indices)
                recon = np.zeros(grid.n)
                for n in indices:
                    recon += coefs[n] * funalg.evaluate(
                        operators.eigenfunction_qexp(real.op, n), grid.points())
                tail = space_norm(space, vec - recon)
            return np.array([coefs[n] for n in indices]), tail

        a0, tail = expand(u0)
        if tail > real.truncation_bound * scale:
            raise TruncationTailTooLarge(
                f"initial curve tail {tail:.3e} above bound "
                f"{real.truncation_bound:.1e} * {scale:.3e}")
        drift_coefs = np.zeros(len(indices))
        if real.drift.kind == "constant" and (
                real.drift.u_symbolic is not None or real.drift.u_vector is not None):
            u_rep = (real.drift.u_symbolic
                     if real.drift.u_symbolic is not None else real.drift.u_vector)
            drift_coefs, dtail = expand(u_rep)
            if dtail > real.truncation_bound * max(1.0, scale):
                raise TruncationTailTooLarge(
                    f"drift remainder tail {dtail:.3e} above bound")
        gvals = np.array([operators.generator_eigenvalue(real.op, i) for i in indices])
        amps = (np.exp(np.outer(t_grid, gvals)) * a0[None, :]
                + np.vstack([_phi1(g, t_grid) for g in gvals]).T * drift_coefs[None, :])
        phi = np.vstack([funalg.evaluate(operators.eigenfunction_qexp(real.op, n),
                                         grid.points()) for n in indices])
        return Curve(t_grid, amps @ phi, space,
                     meta={"truncation_tail": float(tail), "modes": len(indices)})

    if method == "grid_implicit":
        if not isinstance(space, GridSpace):
            raise MethodUnsupported("grid_implicit needs a grid space")
        import scipy.sparse
        import scipy.sparse.linalg
        mat = operators.operator_matrix(real.op, space.grid, boundary="pinned")
        n = space.size
        lhs = (scipy.sparse.identity(n, format="csc") - dt * mat.tocsc())
        try:
            solver = scipy.sparse.linalg.splu(lhs)
        except RuntimeError as exc:
            raise LinearSolveFailure(f"implicit factorization failed: {exc}") from exc
        u_vec = np.zeros(n)
        if real.drift.kind == "constant":
            if real.drift.u_vector is not None:
                u_vec = real.drift.u_vector
            elif real.drift.u_symbolic is not None:
                u_vec = space.sample(real.drift.u_symbolic)
        cur = space.sample(u0) if not isinstance(u0, np.ndarray) else u0.copy()
        values = np.zeros((len(t_grid), n))
        values[0] = cur
        for i in range(1, len(t_grid)):
            cur = solver.solve(cur + dt * u_vec)
            values[i] = cur
        return Curve(t_grid, values, space)

    raise MethodUnsupported(f"unknown curve method {method!r}")


# ---------------------------------------------------------------------------
# the V-coordinate process Y


@dataclass(frozen=True)
class CoordinatePath:
    t_grid: np.ndarray
    coords: np.ndarray  # (len(t_grid), dim)
    seed: int = 0


def _expm_with_integral(B: np.ndarray, dt: float):
    """(e^{B dt}, int_0^dt e^{B s} ds) from one augmented matrix exponential."""
    d = B.shape[0]
    if d == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    aug = np.zeros((2 * d, 2 * d))
    aug[:d, :d] = B * dt
    aug[:d, d:] = np.eye(d) * dt
    full = scipy.linalg.expm(aug)
    return full[:d, :d], full[:d, d:]


def simulate_coordinates(real: Realization, psi: Curve, v0: np.ndarray,
                         increments: levy.IncrementMatrix,
                         scheme: str = "euler") -> CoordinatePath:
    """Integrate dY = (B Y + alpha_V(t, Y)) dt + sum_k sigma_V^k(Y_-) dX^k
    against the provided increments (noise enters at the left endpoint).

    euler: explicit first-order stepping, allows state-dependent
    coefficients.  exp_exact: exponential integrator with the exact affine
    update for constant coefficients; additive noise only."""
    t_grid = psi.t_grid
    dt = _uniform_dt(t_grid)
    if increments.n_steps != len(t_grid) - 1:
        raise GridMismatch(
            f"{increments.n_steps} increments for {len(t_grid) - 1} time steps")
    if not math.isclose(increments.dt, dt, rel_tol=1e-9, abs_tol=1e-14):
        raise GridMismatch(f"increment dt {increments.dt} vs time grid dt {dt}")
    if len(real.vols) != increments.m:
        raise GridMismatch(
            f"{len(real.vols)} volatility components vs {increments.m} driver columns")
    d = real.dim
    v0 = np.asarray(v0, dtype=float).reshape(d)
    coords = np.zeros((len(t_grid), d))
    coords[0] = v0
    if real.drift.kind == "state" and real.drift.v_coords is None:
        raise MethodUnsupported("callable drift cannot drive the reduced simulation")

    if scheme == "euler":
        y = v0.copy()
        for n in range(increments.n_steps):
            t = float(t_grid[n])
            a = real.B @ y + real.drift.coords_at(t, y)
            noise = np.zeros(d)
            for k, vol in enumerate(real.vols):
                noise += vol.at(y) * increments.values[n, k]
            y = y + dt * a + noise
            coords[n + 1] = y
        return CoordinatePath(t_grid, coords, increments.seed)

    if scheme == "exp_exact":
        if real.drift.kind == "state":
            raise SchemeUnsupported("exp_exact needs constant drift coordinates")
        if any(v.scale_fn is not None for v in real.vols):
            raise SchemeUnsupported("exp_exact needs additive noise")
        e_mat, j_mat = _expm_with_integral(real.B, dt)
        a_v = real.drift.coords_at(0.0, v0)
        drift_term = j_mat @ a_v if d else np.zeros(0)
        sig = (np.vstack([v.coords for v in real.vols])
               if real.vols else np.zeros((0, d)))
        y = v0.copy()
        for n in range(increments.n_steps):
            y = e_mat @ y + drift_term + increments.values[n] @ sig
            coords[n + 1] = y
        return CoordinatePath(t_grid, coords, increments.seed)

    raise SchemeUnsupported(f"unknown scheme {scheme!r}")


def simulate_ensemble(real: Realization, psi: Curve, v0: np.ndarray,
                      spec: levy.LevySpec, seeds: Sequence[int],
                      scheme: str = "euler") -> np.ndarray:
    """Vectorized Monte Carlo over per-seed driver streams; constant
    coefficients only.  Returns coords of shape (n_paths, len(t_grid), dim).
    Path p is driven by the same increments as seed seeds[p]."""
    if real.drift.kind == "state" or any(v.scale_fn is not None for v in real.vols):
        raise SchemeUnsupported("ensemble stepping needs constant coefficients")
    t_grid = psi.t_grid
    dt = _uniform_dt(t_grid)
    n_steps = len(t_grid) - 1
    d = real.dim
    inc = levy.sample_increment_ensemble(spec, dt, n_steps, seeds)
    sig = (np.vstack([v.coords for v in real.vols])
           if real.vols else np.zeros((0, d)))
    a_v = real.drift.coords_at(0.0, np.zeros(d))
    out = np.zeros((len(seeds), len(t_grid), d))
    y = np.tile(np.asarray(v0, dtype=float).reshape(1, d), (len(seeds), 1))
    out[:, 0, :] = y
    if scheme == "euler":
        for n in range(n_steps):
            y = y + dt * (y @ real.B.T + a_v) + inc[:, n, :] @ sig
            out[:, n + 1, :] = y
    elif scheme == "exp_exact":
        e_mat, j_mat = _expm_with_integral(real.B, dt)
        drift_term = j_mat @ a_v if d else np.zeros(0)
        for n in range(n_steps):
            y = y @ e_mat.T + drift_term + inc[:, n, :] @ sig
            out[:, n + 1, :] = y
    else:
        raise SchemeUnsupported(f"unknown scheme {scheme!r}")
    return out


# ---------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True)
class GridPath:
    """Sampled path: values[n] are the state samples at t_grid[n] over the
    axis labels in x_grid (grid points, mode ordinals, or profile x ray
    flattened positions)."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    seed: int = 0


def reconstruct(psi: Curve, path: CoordinatePath, V: Subspace) -> GridPath:
    """r(t) = psi(t) + sum_i Y_i(t) v_i on the space axis."""
    if psi.values.shape[1] != V.space.size or V.space is not psi.space:
        if psi.values.shape[1] != V.space.size:
            raise GridMismatch("curve and subspace live on different spaces")
    if len(psi.t_grid) != len(path.t_grid) or not np.allclose(
            psi.t_grid, path.t_grid, rtol=1e-12, atol=1e-12):
        raise GridMismatch("curve and coordinate path time grids differ")
    values = psi.values + path.coords @ V.samples
    return GridPath(psi.t_grid, V.space.axis(), values, path.seed)
