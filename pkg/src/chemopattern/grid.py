"""2D scalar fields on a uniform grid with zero-flux boundaries.

Conventions used everywhere in this package:

* A field is stored as a C-contiguous ``(nx, ny)`` float array. Index
  ``(i, j)`` means position ``(x, y) = (i*h, j*h)``, i.e. axis 0 is x and
  axis 1 is y. Row-major flattening (``values.ravel()``) therefore walks y
  fastest within each fixed-x line.
* Zero-flux (Neumann) boundaries are realized with ghost cells:

  - the Laplacian replicates the edge value (``f[-1] := f[0]``), which makes
    the 5-point stencil exactly conservative: the grid sum of ``laplacian(f)``
    vanishes for every field, so integral balance laws carry over to the
    discrete system;
  - centered gradients reflect across the boundary node (``f[-1] := f[1]``),
    which makes the normal derivative exactly zero on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "GridSpec",
    "ScalarField",
    "laplacian",
    "gradient",
    "dot_gradients",
    "chemotaxis_term",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid: ``nx*ny`` points with spacing ``h``."""

    nx: int
    ny: int
    h: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"space step must be positive, got {self.h}")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)


@dataclass
class ScalarField:
    """A real-valued concentration field on a :class:`GridSpec`.

    ``values`` has shape ``(nx, ny)`` and must be finite everywhere.
    """

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise DimensionMismatchError(
                f"field shape {values.shape} does not match grid {self.spec.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, spec: GridSpec, value: float) -> "ScalarField":
        return cls(spec, np.full(spec.shape, float(value)))

    @classmethod
    def from_flat(cls, spec: GridSpec, flat: np.ndarray) -> "ScalarField":
        """Build a field from a row-major flat vector of length ``nx*ny``."""
        flat = np.asarray(flat, dtype=float)
        if flat.size != spec.size:
            raise DimensionMismatchError(
                f"flat vector has {flat.size} entries, grid needs {spec.size}"
            )
        return cls(spec, flat.reshape(spec.shape))

    def flat(self) -> np.ndarray:
        """Row-major flat copy of the values."""
        return self.values.ravel().copy()

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.values.copy())


def _require_same_spec(a: ScalarField, b: ScalarField) -> None:
    if a.spec != b.spec:
        raise DimensionMismatchError(
            f"fields live on different grids: {a.spec} vs {b.spec}"
        )


# Array-level kernels. The simulator calls these directly in its inner loop;
# the public operations below wrap them in ScalarField.

def laplacian_array(a: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian with replicated (conservative zero-flux) ghosts."""
    p = np.pad(a, 1, mode="edge")
    return (
        p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * a
    ) / (h * h)


def gradient_arrays(a: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Centered gradients with reflected ghosts (zero normal derivative)."""
    p = np.pad(a, 1, mode="reflect")
    gx = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * h)
    gy = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * h)
    return gx, gy


def dot_gradients_array(u: np.ndarray, v: np.ndarray, h: float) -> np.ndarray:
    gux, guy = gradient_arrays(u, h)
    gvx, gvy = gradient_arrays(v, h)
    return gux * gvx + guy * gvy


def chemotaxis_term_array(u: np.ndarray, v: np.ndarray, b: float, h: float) -> np.ndarray:
    return -b * (dot_gradients_array(u, v, h) + u * laplacian_array(v, h))


def laplacian(f: ScalarField) -> ScalarField:
    """Discrete Laplacian of ``f`` with zero-flux boundaries.

    Interior points use the standard 5-point stencil
    ``(f[i+1,j] + f[i-1,j] + f[i,j+1] + f[i,j-1] - 4 f[i,j]) / h**2``; at the
    boundary the out-of-domain neighbor is replaced by the edge value, so the
    stencil is exactly conservative (see module docstring).
    """
    return ScalarField(f.spec, laplacian_array(f.values, f.spec.h))


def gradient(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Centered-difference gradient ``(df/dx, df/dy)`` of ``f``.

    Reflected ghosts make the centered normal derivative vanish exactly on
    the boundary.
    """
    gx, gy = gradient_arrays(f.values, f.spec.h)
    return ScalarField(f.spec, gx), ScalarField(f.spec, gy)


def dot_gradients(u: ScalarField, v: ScalarField) -> ScalarField:
    """Pointwise inner product of the gradients of two fields."""
    _require_same_spec(u, v)
    return ScalarField(u.spec, dot_gradients_array(u.values, v.values, u.spec.h))


def chemotaxis_term(u: ScalarField, v: ScalarField, b: float) -> ScalarField:
    """Chemotactic transport ``-b * (grad u . grad v + u * lap v)``.

    This is the expanded form of ``-b div(u grad v)`` and is the normative
    discretization of the transport term throughout the package (the same
    expansion defines the inversion operator in :mod:`chemopattern.reconstruct`).
    """
    _require_same_spec(u, v)
    return ScalarField(
        u.spec, chemotaxis_term_array(u.values, v.values, b, u.spec.h)
    )
