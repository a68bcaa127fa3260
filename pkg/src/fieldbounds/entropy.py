"""Covering numbers, packing bounds, entropy profiles, and dimension fits.

Exact minimal covering is set cover, which is NP-hard, so the default path
is a deterministic greedy upper bound (within a factor 1 + ln|T| of the
optimum).  An exact branch-and-bound solver is available behind a size cap.
Everywhere a covering number enters a bound formula with positive exponent,
an upper bound is the conservative direction, so greedy values keep every
reported bound valid.

Balls are closed: a point is covered when its distance to the center is
``<= eps``.  On a normalised index space the ball of radius 1 around the
center covers everything, hence N(1) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spaces import IndexSpace

__all__ = [
    "EntropyProfile",
    "covering_number_upper",
    "covering_number_exact",
    "packing_number_lower",
    "entropy_profile",
    "entropy_dimension_fit",
    "analytic_profile",
]

EXACT_COVER_CAP = 24


def greedy_cover_count(dist: np.ndarray, eps: float) -> int:
    """Greedy set-cover ball count for an arbitrary semi-distance matrix.

    Repeatedly picks the point whose closed eps-ball covers the most still
    uncovered points, ties broken by lowest index.  Returns an upper bound
    on the true covering number, never exceeding it by more than a factor
    1 + ln(n).  Gains are maintained incrementally, so the total work is
    O(n^2) regardless of the number of balls picked.
    """
    balls = dist <= eps  # closed balls; diagonal is always True for eps >= 0
    gains = balls.sum(axis=1)
    uncovered = np.ones(dist.shape[0], dtype=bool)
    remaining = int(uncovered.sum())
    count = 0
    while remaining:
        pick = int(np.argmax(gains))  # argmax returns the lowest index on ties
        newly = balls[pick] & uncovered
        uncovered &= ~balls[pick]
        remaining -= int(newly.sum())
        gains = gains - balls[:, newly].sum(axis=1)
        count += 1
    return count


def covering_number_upper(space: IndexSpace, eps: float) -> int:
    """Greedy upper bound on N(T, rho, eps) in normalised distance units."""
    if eps <= 0.0:
        raise ValueError(f"covering radius must be positive, got {eps}")
    return greedy_cover_count(space.distance, eps)


def covering_number_exact(space: IndexSpace, eps: float, cap: int = EXACT_COVER_CAP) -> int:
    """Exact minimal ball count by branch-and-bound; |T| must not exceed ``cap``."""
    if eps <= 0.0:
        raise ValueError(f"covering radius must be positive, got {eps}")
    n = space.size
    if n > cap:
        raise ValueError(
            f"exact set cover capped at {cap} points (|T| = {n}); use the upper bound"
        )
    balls = space.distance <= eps
    # bitmask per candidate ball; n <= cap keeps these in machine ints
    masks = []
    for i in range(n):
        m = 0
        for j in np.nonzero(balls[i])[0]:
            m |= 1 << int(j)
        masks.append(m)
    full = (1 << n) - 1
    sizes = [m.bit_count() for m in masks]
    best = greedy_cover_count(space.distance, eps)

    def search(covered: int, used: int) -> None:
        nonlocal best
        if covered == full:
            best = min(best, used)
            return
        remaining = full & ~covered
        max_gain = max(sizes)
        lower = used + math.ceil(remaining.bit_count() / max_gain)
        if lower >= best:
            return
        # branch on the lowest-index uncovered point
        target = (remaining & -remaining).bit_length() - 1
        candidates = [i for i in range(n) if masks[i] >> target & 1]
        candidates.sort(key=lambda i: (-(masks[i] & remaining).bit_count(), i))
        for i in candidates:
            search(covered | masks[i], used + 1)

    search(0, 0)
    return best


def packing_number_lower(space: IndexSpace, eps: float) -> int:
    """Size of a greedy maximal 2*eps-separated set; a lower bound for N(eps).

    The lower-bound property relies on the triangle inequality of the
    semi-distance (a closed eps-ball cannot hold two points more than
    2*eps apart).
    """
    if eps <= 0.0:
        raise ValueError(f"packing radius must be positive, got {eps}")
    dist = space.distance
    kept: list[int] = []
    for i in range(space.size):
        if all(dist[i, j] > 2.0 * eps for j in kept):
            kept.append(i)
    return len(kept)


@dataclass(frozen=True, eq=False)
class EntropyProfile:
    """Tabulated or analytic covering-number bounds over a radius grid.

    ``source`` is ``"computed"`` (greedy/packing tables over ``eps_grid``,
    with ``n_points`` recording |T| for saturation below the grid) or
    ``"analytic"`` (power law ``N(eps) = prefactor * eps**-exponent`` for
    eps < 1, and 1 for eps >= 1).
    """

    eps_grid: np.ndarray
    cover_upper: np.ndarray
    pack_lower: np.ndarray
    source: str
    n_points: int | None = None
    prefactor: float | None = None
    exponent: float | None = None

    def cover_at(self, eps: float) -> float:
        """Conservative covering-number upper bound at an arbitrary radius.

        Table lookups step to the nearest tabulated radius below ``eps``
        (covering numbers only grow as the radius shrinks); radii under the
        grid fall back to |T|.
        """
        if eps >= 1.0:
            return 1.0
        if self.source == "analytic":
            return max(1.0, self.prefactor * eps ** (-self.exponent))
        idx = np.searchsorted(-self.eps_grid, -eps, side="left")
        if idx >= self.eps_grid.size:
            return float(self.n_points)
        return float(self.cover_upper[idx])


def entropy_profile(space: IndexSpace, eps_grid) -> EntropyProfile:
    """Tabulate greedy upper and packing lower covering bounds over a grid.

    ``eps_grid`` must be strictly decreasing with values in (0, 1]
    (normalised radius units).
    """
    grid = np.asarray(eps_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("eps grid must be a non-empty 1-d sequence")
    if np.any(grid <= 0.0) or np.any(grid > 1.0):
        raise ValueError("eps grid values must lie in (0, 1]")
    if grid.size > 1 and np.any(np.diff(grid) >= 0.0):
        raise ValueError("eps grid must be strictly decreasing")
    cover = np.array([covering_number_upper(space, e) for e in grid])
    # greedy counts can wiggle on aligned lattices; a cover at a smaller
    # radius also covers at a larger one, so the running minimum from the
    # small end is still a valid upper bound and restores monotonicity
    cover = np.minimum.accumulate(cover[::-1])[::-1]
    pack = np.array([packing_number_lower(space, e) for e in grid])
    return EntropyProfile(
        eps_grid=grid,
        cover_upper=cover,
        pack_lower=pack,
        source="computed",
        n_points=space.size,
    )


def analytic_profile(prefactor: float, exponent: float, eps_grid=None) -> EntropyProfile:
    """Power-law profile N(eps) = prefactor * eps**-exponent on (0, 1)."""
    if prefactor <= 0.0 or exponent < 0.0:
        raise ValueError("analytic profile needs prefactor > 0 and exponent >= 0")
    grid = (
        np.geomspace(1.0, 2.0**-10, 11)
        if eps_grid is None
        else np.asarray(eps_grid, dtype=float)
    )
    n = np.maximum(1.0, prefactor * grid ** (-exponent))
    return EntropyProfile(
        eps_grid=grid,
        cover_upper=n,
        pack_lower=np.ones_like(n),
        source="analytic",
        prefactor=float(prefactor),
        exponent=float(exponent),
    )


def entropy_dimension_fit(profile: EntropyProfile, q: float = 1.0):
    """Least-squares power-law fit N(eps) ~ K**q * eps**-kappa on log scales.

    Uses profile points with eps < 1.  Returns ``(kappa, K, residual)``
    where ``kappa`` is the fitted decay exponent clamped at 0, ``K`` the
    prefactor expressed as a q-th root (so the analytic profile convention
    ``N = K**q * eps**-kappa`` round-trips), and ``residual`` the sum of
    squared log-scale residuals.
    """
    mask = profile.eps_grid < 1.0
    x = np.log(1.0 / profile.eps_grid[mask])
    y = np.log(profile.cover_upper[mask].astype(float))
    if x.size < 3:
        raise ValueError(f"need at least 3 grid points with eps < 1, got {x.size}")
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    residual = float(np.sum((design @ coef - y) ** 2))
    kappa = max(0.0, slope)
    big_k = math.exp(intercept / q)
    return kappa, big_k, residual
