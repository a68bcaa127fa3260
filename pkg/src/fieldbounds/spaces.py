"""Discrete measure spaces, finite semi-metric index sets, and fields on their product.

A :class:`MeasureSpace` is a finite set of points carrying strictly positive
weights; the total mass is arbitrary (it is *not* normalised to 1).  An
:class:`IndexSpace` is a finite point set with a symmetric semi-distance
matrix, a designated center, and distances rescaled so the maximal distance
from the center equals 1.  A :class:`Field` is one real matrix over the
product of the two.

All objects are immutable after construction (arrays are set read-only), so
they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "MeasureSpace",
    "IndexSpace",
    "Field",
    "build_measure_space",
    "build_index_space",
    "build_index_space_from_matrix",
    "tensor_field",
    "make_field",
]

SYMMETRY_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Finite measure space (X, mu): points plus strictly positive weights."""

    points: tuple
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class IndexSpace:
    """Finite semi-metric index set with unit normalised radius.

    ``distance`` holds the normalised semi-distance matrix (symmetric, zero
    diagonal, max distance from ``center_index`` equal to 1).  ``radius`` is
    the pre-normalisation radius; multiplying ``distance`` by it recovers the
    original matrix.  Coincident points are allowed (semi-distance); a fully
    degenerate set (all points coincident) stores radius 1 by convention so
    the zero matrix is left untouched.
    """

    points: tuple
    distance: np.ndarray
    center_index: int
    radius: float
    min_positive_distance: float | None

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Field:
    """One realization f(x, t) over x_space x t_space, stored as a matrix."""

    values: np.ndarray
    x_space: MeasureSpace
    t_space: IndexSpace


def build_measure_space(coords, weights) -> MeasureSpace:
    """Validate and build a MeasureSpace.

    ``coords`` may be opaque labels or coordinate vectors; only their count
    matters here.  Every weight must be strictly positive and finite.
    """
    points = tuple(coords)
    w = np.asarray(weights, dtype=float)
    if len(points) == 0:
        raise ValueError("measure space needs at least one point")
    if w.ndim != 1 or len(points) != w.shape[0]:
        raise ValueError(
            f"points/weights length mismatch: {len(points)} vs {w.shape}"
        )
    bad = np.where(~(np.isfinite(w) & (w > 0.0)))[0]
    if bad.size:
        raise ValueError(
            f"weight at index {bad[0]} is {w[bad[0]]!r}; "
            "weights must be strictly positive and finite"
        )
    return MeasureSpace(points=points, weights=_freeze(w))


def _finalize_index_space(points, dist: np.ndarray) -> IndexSpace:
    # exact 1-center over the point set; ties broken by lowest index
    ecc = dist.max(axis=1)
    center = int(np.argmin(ecc))
    radius = float(ecc[center])
    if radius <= 0.0:
        radius = 1.0  # degenerate: all points coincide; keep zero matrix
    norm = dist / radius
    np.fill_diagonal(norm, 0.0)
    positive = norm[norm > 0.0]
    min_pos = float(positive.min()) if positive.size else None
    return IndexSpace(
        points=tuple(points),
        distance=_freeze(norm),
        center_index=center,
        radius=radius,
        min_positive_distance=min_pos,
    )


def build_index_space(coords, metric_exponent: float = 1.0) -> IndexSpace:
    """Build an IndexSpace from points in R^d with rho(t, s) = ||t - s||^alpha.

    ``metric_exponent`` (alpha) must lie in (0, 1] so that rho satisfies the
    triangle inequality.  Distances are normalised so that the max distance
    from the computed center is 1; the original radius is retained.
    """
    alpha = float(metric_exponent)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"metric exponent must be in (0, 1], got {alpha}")
    pts = np.asarray(coords, dtype=float)
    if pts.size == 0:
        raise ValueError("index space needs at least one point")
    if pts.ndim == 1:
        pts = pts[:, None]
    dist = cdist(pts, pts) ** alpha
    dist = 0.5 * (dist + dist.T)  # kill floating-point asymmetry
    return _finalize_index_space([tuple(row) for row in pts], dist)


def build_index_space_from_matrix(matrix) -> IndexSpace:
    """Build an IndexSpace from an explicit semi-distance matrix.

    The matrix must be square, symmetric (within 1e-12 absolute), with zero
    diagonal and non-negative entries.  Same normalisation contract as
    :func:`build_index_space`.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("distance matrix contains non-finite entries")
    asym = np.abs(m - m.T).max()
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix asymmetry {asym:.3e} exceeds {SYMMETRY_TOL}")
    if np.abs(np.diag(m)).max() > 0.0:
        raise ValueError("distance matrix must have an exactly zero diagonal")
    if m.min() < 0.0:
        i, j = np.unravel_index(int(np.argmin(m)), m.shape)
        raise ValueError(f"negative distance {m[i, j]} at ({i}, {j})")
    m = 0.5 * (m + m.T)
    return _finalize_index_space(range(m.shape[0]), m)


def tensor_field(g1, g2, x_space: MeasureSpace, t_space: IndexSpace) -> Field:
    """Build the factorized field f(x, t) = g1(x) * g2(t)."""
    a = np.asarray(g1, dtype=float)
    b = np.asarray(g2, dtype=float)
    if a.shape != (x_space.size,) or b.shape != (t_space.size,):
        raise ValueError(
            f"factor shapes {a.shape}, {b.shape} do not match spaces "
            f"({x_space.size}, {t_space.size})"
        )
    return make_field(np.outer(a, b), x_space, t_space)


def make_field(values, x_space: MeasureSpace, t_space: IndexSpace) -> Field:
    """Wrap a value matrix as a Field, validating shape and finiteness."""
    v = np.asarray(values, dtype=float)
    if v.shape != (x_space.size, t_space.size):
        raise ValueError(
            f"field shape {v.shape} does not match spaces "
            f"({x_space.size}, {t_space.size})"
        )
    if not np.isfinite(v).all():
        raise ValueError("field contains non-finite entries")
    return Field(values=_freeze(v), x_space=x_space, t_space=t_space)
