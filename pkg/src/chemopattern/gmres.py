"""Matrix-free GMRES with Arnoldi orthonormalization and Givens rotations.

Full (non-restarted) GMRES for ``A x = b`` where ``A`` is only available as a
matrix-vector product. The Krylov basis is built with modified Gram-Schmidt
(plus one re-orthogonalization pass when orthogonality degrades), the
least-squares problem is triangularized incrementally with Givens rotations,
and the residual norm is tracked implicitly as the last entry of the rotated
right-hand side, so the solution itself is assembled only once, after the
iteration has stopped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, NumericalFaultError, SingularOperatorError

__all__ = [
    "LinearOperator",
    "GmresWorkspace",
    "GmresResult",
    "gmres_solve",
    "arnoldi_step",
    "apply_new_givens",
    "solve_triangular",
    "assemble_solution",
]

BREAKDOWN_TOL = 1e-14
# Re-orthogonalize below the 1e-8 orthonormality budget the workspace
# promises, so a just-under-trigger sweep cannot leave the basis outside it.
REORTH_TOL = 1e-9


@dataclass(frozen=True)
class LinearOperator:
    """An n-dimensional linear map given by its action ``x -> A @ x``."""

    n: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "LinearOperator":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"need a square matrix, got {matrix.shape}")
        return cls(matrix.shape[0], lambda x: matrix @ x)


@dataclass
class GmresWorkspace:
    """State of one GMRES run.

    ``V`` holds the orthonormal Krylov basis, ``H`` the upper-Hessenberg
    projection (column k is filled at iteration k+1), ``givens`` the rotation
    pairs ``(cos, sin)`` applied so far, and ``g`` the rotated vector
    ``r0 * Q e1`` whose entry past the triangular block is the implicit
    residual norm.
    """

    V: list[np.ndarray]
    H: np.ndarray
    givens: list[tuple[float, float]] = field(default_factory=list)
    g: np.ndarray = None
    residual_history: list[float] = field(default_factory=list)
    breakdown: bool = False

    @property
    def iterations(self) -> int:
        return len(self.givens)


@dataclass
class GmresResult:
    x: np.ndarray
    residual_history: np.ndarray
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.residual_history) - 1


def _new_workspace(r0_vec: np.ndarray, r0: float, max_iter: int) -> GmresWorkspace:
    ws = GmresWorkspace(
        V=[r0_vec / r0],
        H=np.zeros((max_iter + 1, max_iter)),
        g=np.zeros(max_iter + 1),
    )
    ws.g[0] = r0
    ws.residual_history.append(r0)
    return ws


def arnoldi_step(ws: GmresWorkspace, op: LinearOperator) -> None:
    """Extend the Krylov basis by one vector and fill one Hessenberg column.

    Applies the operator to the newest basis vector, orthogonalizes against
    all previous ones (modified Gram-Schmidt, with a second pass if any
    residual inner product exceeds ``REORTH_TOL`` relative to the column
    norm), and normalizes. A new-vector norm below ``BREAKDOWN_TOL`` marks
    the happy-breakdown state instead of appending a vector.
    """
    k = len(ws.V)
    col = k - 1
    if col >= ws.H.shape[1]:
        raise ValueError("workspace is full; increase max_iter")
    # Copy: the operator may hand back (a view of) its input, which the
    # in-place orthogonalization below must not clobber.
    w = np.array(op.apply(ws.V[-1]), dtype=float, copy=True)
    if w.shape != ws.V[-1].shape:
        raise DimensionMismatchError("operator changed the vector dimension")
    if not np.all(np.isfinite(w)):
        raise NumericalFaultError("operator produced non-finite values")
    scale = np.linalg.norm(w)
    for j in range(k):
        hj = float(np.dot(ws.V[j], w))
        ws.H[j, col] += hj
        w -= hj * ws.V[j]
    # One re-orthogonalization pass guards against the gradual loss of
    # orthogonality Gram-Schmidt sweeps suffer on non-symmetric operators.
    # The residual inner products are measured against the post-sweep norm,
    # i.e. against the vector that is about to be normalized.
    w_norm = float(np.linalg.norm(w))
    if k > 0 and w_norm > 0:
        dots = np.array([np.dot(ws.V[j], w) for j in range(k)])
        if np.max(np.abs(dots)) > REORTH_TOL * w_norm:
            for j in range(k):
                hj = float(np.dot(ws.V[j], w))
                ws.H[j, col] += hj
                w -= hj * ws.V[j]
    h_next = float(np.linalg.norm(w))
    ws.H[k, col] = h_next
    if h_next < BREAKDOWN_TOL * max(1.0, scale):
        ws.breakdown = True
    else:
        ws.V.append(w / h_next)


def apply_new_givens(ws: GmresWorkspace) -> float:
    """Triangularize the freshest Hessenberg column; return the residual norm.

    Previously computed rotations are applied to the new column, a new
    rotation zeroes the subdiagonal entry, and the rotated right-hand side
    ``g`` is updated. The implicit residual is ``|g[k]|`` after k rotations.
    """
    col = len(ws.givens)
    h = ws.H[:, col]
    for i, (c, s) in enumerate(ws.givens):
        hi, hi1 = h[i], h[i + 1]
        h[i] = c * hi + s * hi1
        h[i + 1] = -s * hi + c * hi1
    a, b = h[col], h[col + 1]
    nu = math.hypot(a, b)
    if nu == 0.0:
        c, s = 1.0, 0.0
    else:
        c, s = a / nu, b / nu
    h[col] = nu
    h[col + 1] = 0.0
    ws.givens.append((c, s))
    gk = ws.g[col]
    ws.g[col] = c * gk
    ws.g[col + 1] = -s * gk
    rk = abs(float(ws.g[col + 1]))
    ws.residual_history.append(rk)
    return rk


def solve_triangular(ws: GmresWorkspace, k: int | None = None) -> np.ndarray:
    """Back-substitute ``R y = g`` on the leading ``k x k`` triangular block."""
    if k is None:
        k = len(ws.givens)
    R = ws.H[:k, :k]
    y = np.zeros(k)
    pivot_floor = BREAKDOWN_TOL * max(1.0, float(np.max(np.abs(np.diag(R)))) if k else 1.0)
    for i in range(k - 1, -1, -1):
        if abs(R[i, i]) < pivot_floor:
            raise SingularOperatorError(f"zero pivot in triangular solve at row {i}")
        y[i] = (ws.g[i] - R[i, i + 1 :k] @ y[i + 1 :]) / R[i, i]
    return y


def assemble_solution(ws: GmresWorkspace, x0: np.ndarray, k: int | None = None) -> np.ndarray:
    """Solution iterate ``x_k = x0 + V y`` for the first ``k`` iterations."""
    if k is None:
        k = len(ws.givens)
    if k == 0:
        return np.array(x0, dtype=float, copy=True)
    y = solve_triangular(ws, k)
    basis = np.stack(ws.V[:k], axis=1)
    return x0 + basis @ y


def gmres_solve(
    op: LinearOperator,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    eps: float = 1e-10,
    max_iter: int | None = None,
) -> GmresResult:
    """Solve ``A x = b`` by full GMRES.

    Iterates until the implicit residual drops to ``eps`` or ``max_iter``
    (default: the problem dimension) is reached; the triangular solve and the
    update ``x = x0 + V y`` happen once, after the loop. A happy breakdown
    (invariant Krylov space) returns the exact solution in the current space
    if its residual meets ``eps`` and raises
    :class:`~chemopattern.errors.SingularOperatorError` otherwise.

    Returns a :class:`GmresResult` with the iterate, the residual history
    (entry 0 is the initial residual norm), and a convergence flag. When the
    iteration cap is hit, the best iterate is returned with
    ``converged=False``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    b = np.asarray(b, dtype=float)
    if b.shape != (op.n,):
        raise DimensionMismatchError(f"b has shape {b.shape}, operator dimension is {op.n}")
    if x0 is None:
        x0 = np.zeros(op.n)
    else:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (op.n,):
            raise DimensionMismatchError(f"x0 has shape {x0.shape}, operator dimension is {op.n}")
    if max_iter is None:
        max_iter = op.n
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    r0_vec = b - np.asarray(op.apply(x0), dtype=float)
    if not np.all(np.isfinite(r0_vec)):
        raise NumericalFaultError("initial residual is non-finite")
    r0 = float(np.linalg.norm(r0_vec))
    if r0 < eps:
        return GmresResult(x0.copy(), np.array([r0]), True)

    ws = _new_workspace(r0_vec, r0, max_iter)
    converged = False
    while ws.iterations < max_iter:
        arnoldi_step(ws, op)
        rk = apply_new_givens(ws)
        if ws.breakdown:
            if rk <= eps:
                converged = True
                break
            raise SingularOperatorError(
                f"Krylov space became invariant with residual {rk:.3e} > eps={eps:.3e}"
            )
        if rk <= eps:
            converged = True
            break
    x = assemble_solution(ws, x0)
    return GmresResult(x, np.array(ws.residual_history), converged)
