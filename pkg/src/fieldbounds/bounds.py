"""Moment and tail bounds for suprema of random fields via entropy series.

The machinery has three layers:

1.  **Scalar constants.**  Upper bounds for the best constant comparing the
    p-norm of a normalised i.i.d. sum to the p-norm of one summand
    (:func:`rosenthal_constant`), and its analogue for superstrong-mixing
    stationary sequences built from the mixing coefficients
    (:func:`mixingale_coefficient`).

2.  **The entropy series.**  For a process Y on a finite index set T with
    scale sigma = sup_t |Y(t)|_Q and semi-distance d majorising the
    pairwise Q-norm increments, the Q-norm of sup_t Y(t) is bounded by

        sigma * inf_theta  sum_k theta^(k-1) * N(T, d/sigma, theta^k)^(1/Q)

    where N is the covering number.  :func:`entropy_series` evaluates the
    sum for one theta (with a closed-form geometric tail once the covering
    number saturates), :func:`optimize_theta` minimises it over a theta
    grid plus golden-section refinement.  Any theta gives a valid upper
    bound, so reporting the achieved minimum is sound.

3.  **Bound pipelines.**  :func:`field_moment_bound` (moments of the
    sup-over-t of the integrated p-th power of one field),
    :func:`normed_sum_moment_bound` (the same, uniformly over the number of
    summands, via Rosenthal-type constants), and
    :func:`realization_entropy_bound` (a per-realization random entropy
    bound for the sup-inside-the-integral norm).  Each returns a
    :class:`MomentBoundReport` retaining every intermediate for audit.

Tail estimates convert moment growth into survival bounds through a
Legendre transform (:func:`legendre_tail`) or through a fitted power
growth law (:func:`fit_power_growth` / :func:`power_growth_tail`).

Everything here is deliberately one-sided: covering numbers enter through
greedy *upper* bounds, infima over theta and over Holder splits are taken
over finite grids, and fitted growth laws are raised to majorise the data,
so every reported number stays a valid upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Protocol

import numpy as np

from .entropy import greedy_cover_count
from .spaces import Field, MeasureSpace, IndexSpace

__all__ = [
    "ROSENTHAL_CONSTANT",
    "ROSENTHAL_CONSTANT_SYMMETRIC",
    "DEFAULT_ALPHA_GRID",
    "rosenthal_constant",
    "GeometricDecay",
    "PowerDecay",
    "MixingaleCoefficient",
    "mixingale_coefficient",
    "SeriesEvaluation",
    "entropy_series",
    "optimize_theta",
    "power_law_bound",
    "legendre_tail",
    "TailBound",
    "tail_bound_table",
    "MomentOracle",
    "moment_scale",
    "increment_distance",
    "MomentBoundReport",
    "field_moment_bound",
    "normed_sum_moment_bound",
    "realization_entropy_bound",
    "PowerGrowthFit",
    "fit_power_growth",
    "power_growth_tail",
]

# Best published closed-form constant for the normalised-sum moment
# comparison, accurate to 0.5e-5; the second value applies to symmetric
# summand laws.
ROSENTHAL_CONSTANT = 1.77638
ROSENTHAL_CONSTANT_SYMMETRIC = 1.53572

# Holder-split grid for the increment-distance infimum.  Any conjugate pair
# gives a valid bound; the grid only affects tightness.
DEFAULT_ALPHA_GRID = (
    1.05, 1.1, 1.2, 1.35, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.5, 8.0, 10.0, 14.0, 20.0,
)

_THETA_MIN = 0.01
_THETA_MAX = 0.99


def rosenthal_constant(p: float, symmetric: bool = False) -> float:
    """Upper bound max(1, C * p / (e * ln p)) for the sum/summand norm ratio.

    Defined for p >= 2 (below 2 the ratio is unbounded over summand laws).
    The clamp at 1 reflects that taking a single summand forces the true
    constant to be at least 1.
    """
    p = float(p)
    if p < 2.0:
        raise ValueError(f"rosenthal constant needs p >= 2, got {p}")
    c = ROSENTHAL_CONSTANT_SYMMETRIC if symmetric else ROSENTHAL_CONSTANT
    return max(1.0, c * p / (math.e * math.log(p)))


@dataclass(frozen=True)
class GeometricDecay:
    """Mixing coefficients beta(k) = base * ratio**k, 0 < ratio < 1."""

    base: float
    ratio: float

    def __post_init__(self):
        if self.base < 0.0:
            raise ValueError("mixing coefficients must be non-negative")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"geometric decay needs ratio in (0, 1), got {self.ratio}")

    def __call__(self, k: np.ndarray) -> np.ndarray:
        return self.base * self.ratio**k


@dataclass(frozen=True)
class PowerDecay:
    """Mixing coefficients beta(k) = base * k**(-exponent), exponent > 0."""

    base: float
    exponent: float

    def __post_init__(self):
        if self.base < 0.0:
            raise ValueError("mixing coefficients must be non-negative")
        if self.exponent <= 0.0:
            raise ValueError(f"power decay needs a positive exponent, got {self.exponent}")

    def __call__(self, k: np.ndarray) -> np.ndarray:
        return self.base * k.astype(float) ** (-self.exponent)


@dataclass(frozen=True)
class MixingaleCoefficient:
    """Value of the mixing-sequence sum coefficient with its truncation audit."""

    value: float
    partial_sum: float
    tail_bound: float
    terms_used: int
    diverges: bool


def mixingale_coefficient(m: float, beta, truncation: int = 10_000) -> MixingaleCoefficient:
    """m * [sum_{k>=1} beta(k) * (k+1)^((m-2)/2)]^(1/m) with a certified tail.

    ``beta`` is a :class:`GeometricDecay`, a :class:`PowerDecay`, or an
    explicit non-negative non-increasing sequence.  Closed-form decays get a
    closed-form upper bound for the truncated tail; an explicit sequence is
    treated as exactly zero beyond its last entry.  Divergent sums (power
    decay too slow for the weight growth) are flagged instead of summed.
    """
    m = float(m)
    if m < 1.0:
        raise ValueError(f"mixingale coefficient needs m >= 1, got {m}")
    if truncation < 1:
        raise ValueError("truncation must be at least 1")
    c = (m - 2.0) / 2.0

    if isinstance(beta, (GeometricDecay, PowerDecay)):
        if isinstance(beta, PowerDecay) and c - beta.exponent >= -1.0:
            return MixingaleCoefficient(
                value=math.inf, partial_sum=math.inf, tail_bound=math.inf,
                terms_used=0, diverges=True,
            )
        k = np.arange(1, truncation + 1)
        partial = float(np.sum(beta(k) * (k + 1.0) ** c))
        terms_used = truncation
        kk = truncation
        growth = (1.0 + 1.0 / (kk + 1.0)) ** max(c, 0.0)
        if isinstance(beta, GeometricDecay):
            # ratio between consecutive terms is <= ratio * growth < 1 for
            # truncation large enough
            qr = beta.ratio * growth
            if qr >= 1.0:
                raise ValueError("truncation too small for a geometric tail certificate")
            first_tail_term = beta.base * beta.ratio ** (kk + 1) * (kk + 2.0) ** c
            tail = first_tail_term / (1.0 - qr)
        else:
            # integral comparison: sum_{k>K} k^(c-gamma) <= K^(c-gamma+1)/(gamma-c-1)
            e = c - beta.exponent
            tail = beta.base * growth * kk ** (e + 1.0) / (-e - 1.0)
    else:
        arr = np.asarray(beta, dtype=float)
        if arr.ndim != 1:
            raise ValueError("explicit mixing sequence must be 1-d")
        if np.any(arr < 0.0):
            raise ValueError("mixing coefficients must be non-negative")
        if arr.size > 1 and np.any(np.diff(arr) > 1e-12):
            raise ValueError("mixing coefficients must be non-increasing")
        arr = arr[:truncation]
        k = np.arange(1, arr.size + 1)
        partial = float(np.sum(arr * (k + 1.0) ** c))
        terms_used = int(arr.size)
        tail = 0.0  # sequence treated as zero beyond its support

    total = partial + tail
    value = m * total ** (1.0 / m)
    return MixingaleCoefficient(
        value=value, partial_sum=partial, tail_bound=tail,
        terms_used=terms_used, diverges=False,
    )


# ---------------------------------------------------------------------------
# entropy series
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeriesEvaluation:
    """One evaluation of the entropy series at a fixed theta.

    ``terms`` holds the explicitly summed values theta^(k-1) * N^(1/q);
    ``tail_bound`` the closed-form bound on the remaining tail;
    ``series_total`` their sum; ``total = sigma_factor * series_total``.
    """

    theta: float
    terms: np.ndarray
    tail_bound: float
    series_total: float
    sigma_factor: float
    total: float


def _series_saturating(
    cover_at: Callable[[float], float],
    q: float,
    theta: float,
    cutoff: float | None,
    n_sat: float,
) -> tuple[np.ndarray, float]:
    """Sum terms while theta^k >= cutoff; beyond that N is constant n_sat."""
    terms = []
    r = theta
    while cutoff is not None and r >= cutoff:
        terms.append((r / theta) * cover_at(r) ** (1.0 / q))
        r *= theta
    # r = theta^(K+1) here with K terms summed; remaining sum is
    # n_sat^(1/q) * theta^K / (1 - theta)
    tail = (r / theta) * n_sat ** (1.0 / q) / (1.0 - theta)
    return np.asarray(terms), tail


def _series_power_law(
    prefactor: float, exponent: float, q: float, theta: float, rel_tol: float = 1e-13
) -> tuple[np.ndarray, float]:
    """Sum theta^(k-1) * (prefactor * theta^(-k*exponent))^(1/q) analytically.

    Consecutive terms shrink by theta^(1 - exponent/q); the series diverges
    when exponent >= q.
    """
    ratio = theta ** (1.0 - exponent / q)
    if ratio >= 1.0:
        return np.asarray([math.inf]), math.inf
    amp = prefactor ** (1.0 / q)
    term = amp * theta ** (-exponent / q)
    terms = [term]
    total = term
    while term > rel_tol * total and len(terms) < 100_000:
        term *= ratio
        terms.append(term)
        total += term
    tail = terms[-1] * ratio / (1.0 - ratio)
    return np.asarray(terms), tail


def _evaluate_series(
    theta: float,
    sigma: float,
    q: float,
    *,
    cover_at: Callable[[float], float] | None = None,
    cutoff: float | None = None,
    n_sat: float = 1.0,
    power_law: tuple[float, float] | None = None,
) -> SeriesEvaluation:
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if power_law is not None:
        terms, tail = _series_power_law(power_law[0], power_law[1], q, theta)
    else:
        terms, tail = _series_saturating(cover_at, q, theta, cutoff, n_sat)
    series_total = float(terms.sum() + tail)
    return SeriesEvaluation(
        theta=theta,
        terms=terms,
        tail_bound=float(tail),
        series_total=series_total,
        sigma_factor=sigma,
        total=sigma * series_total,
    )


def entropy_series(profile, sigma: float, q: float, theta: float,
                   min_distance: float | None = None) -> SeriesEvaluation:
    """Evaluate sigma * sum_k theta^(k-1) * N(theta^k)^(1/q) from a profile.

    For computed profiles, covering numbers come from the tabulated greedy
    upper bounds (conservative step lookup between grid points); once
    theta^k drops below ``min_distance`` (the smallest positive normalised
    distance) the covering number is constant and the rest of the series is
    summed in closed form.  For analytic power-law profiles the closed-form
    geometric tail is used; the series is infinite when the profile
    exponent reaches q.  The result is an upper bound on the true series.
    """
    if sigma < 0.0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if q < 1.0:
        raise ValueError(f"series exponent q must be >= 1, got {q}")
    if profile.source == "analytic":
        return _evaluate_series(
            theta, sigma, q, power_law=(profile.prefactor, profile.exponent)
        )
    cutoff = min_distance if min_distance is not None else float(profile.eps_grid[-1])
    return _evaluate_series(
        theta, sigma, q,
        cover_at=profile.cover_at, cutoff=cutoff, n_sat=float(profile.n_points),
    )


def _optimize(
    evaluate: Callable[[float], SeriesEvaluation],
    coarse_step: float = 0.01,
    refine_tol: float = 1e-6,
) -> SeriesEvaluation:
    """Coarse theta grid plus golden-section refinement on the best bracket.

    Returns the best evaluation seen; since every theta yields a valid
    bound, the achieved minimum is an upper bound for the true infimum
    restricted to (0, 1).
    """
    grid = np.arange(_THETA_MIN, _THETA_MAX + coarse_step / 2, coarse_step)
    evals = [evaluate(float(t)) for t in grid]
    totals = [e.total for e in evals]
    best = evals[int(np.argmin(totals))]
    if not math.isfinite(best.total):
        return best
    lo = max(_THETA_MIN, best.theta - coarse_step)
    hi = min(_THETA_MAX, best.theta + coarse_step)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    for e in (fc, fd):
        if e.total < best.total:
            best = e
    while b - a > refine_tol:
        if fc.total <= fd.total:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = evaluate(c)
            if fc.total < best.total:
                best = fc
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = evaluate(d)
            if fd.total < best.total:
                best = fd
    return best


def optimize_theta(profile, sigma: float, q: float,
                   min_distance: float | None = None,
                   coarse_step: float = 0.01) -> tuple[float, float]:
    """Minimise the entropy series over theta; returns (theta_star, value).

    The true infimum may sit at the open boundary theta -> 0 (for example a
    one-point index set, where the series is 1/(1-theta) and the infimum is
    sigma); the reported value is the minimum over the evaluated thetas and
    is always a valid bound.
    """
    if sigma == 0.0:
        return _THETA_MIN, 0.0
    best = _optimize(
        lambda t: entropy_series(profile, sigma, q, t, min_distance=min_distance),
        coarse_step=coarse_step,
    )
    return best.theta, best.total


def power_law_bound(k: float, kappa: float, q: float, sigma: float) -> float:
    """Closed form k * sigma * (1 - kappa/q)^-1 * (kappa/q)^(-kappa/(q-kappa)).

    This is the exact infimum of the entropy series for the power-law
    covering majorant N(eps) = k**q * eps**-kappa, valid for
    0 <= kappa < q.  At kappa = 0 the last two factors tend to 1, giving
    k * sigma.
    """
    if not 0.0 <= kappa < q:
        raise ValueError(f"need 0 <= kappa < q, got kappa={kappa}, q={q}")
    if k <= 0.0 or sigma < 0.0:
        raise ValueError("need prefactor k > 0 and sigma >= 0")
    if kappa == 0.0:
        return k * sigma
    frac = kappa / q
    return k * sigma / (1.0 - frac) * frac ** (-kappa / (q - kappa))


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------


def legendre_tail(q_grid, nu_values, z: float) -> float:
    """exp(-h*(log z)) with h*(w) = max over the grid of (w*Q - Q*log nu(Q)).

    ``nu_values`` are moment bounds indexed by ``q_grid``; the result bounds
    the probability of exceeding ``z`` via Chebyshev optimised over Q.  No
    concavity of Q*log(nu) is assumed: the maximisation is exhaustive over
    the grid, which only weakens (never invalidates) the bound.  The value
    is clamped to [0, 1].
    """
    qs = np.asarray(q_grid, dtype=float)
    nus = np.asarray(nu_values, dtype=float)
    if qs.size == 0 or qs.shape != nus.shape:
        raise ValueError("q grid and nu values must be non-empty and match")
    if np.any(qs <= 1.0):
        raise ValueError("q grid values must exceed 1")
    if np.any(nus <= 0.0) or not np.isfinite(nus).all():
        raise ValueError("nu values must be positive and finite")
    z = float(z)
    if z <= 1.0:
        raise ValueError(f"threshold z must exceed 1, got {z}")
    h = qs * np.log(nus)
    h_star = float(np.max(math.log(z) * qs - h))
    if h_star <= 0.0:
        return 1.0
    if h_star >= 745.0:  # exp underflow limit for doubles
        return 0.0
    return math.exp(-h_star)


@dataclass(frozen=True, eq=False)
class TailBound:
    """Tabulated Legendre-transform tail over a threshold grid."""

    q_grid: np.ndarray
    h_values: np.ndarray
    z_grid: np.ndarray
    tail: np.ndarray


def tail_bound_table(q_grid, nu_values, z_grid) -> TailBound:
    """Evaluate :func:`legendre_tail` over a grid of thresholds."""
    qs = np.asarray(q_grid, dtype=float)
    nus = np.asarray(nu_values, dtype=float)
    zs = np.asarray(z_grid, dtype=float)
    tails = np.array([legendre_tail(qs, nus, z) for z in zs])
    return TailBound(
        q_grid=qs, h_values=qs * np.log(nus), z_grid=zs, tail=tails
    )


@dataclass(frozen=True)
class PowerGrowthFit:
    """Majorising power law c1 * Q**m for a moment-growth curve."""

    c1: float
    m: float
    residual: float
    poor_fit: bool


def fit_power_growth(q_grid, values, poor_fit_tol: float = 0.1) -> PowerGrowthFit:
    """Fit values(Q) <= c1 * Q**m by log-log least squares, then majorise.

    The intercept is raised so the fitted law dominates every grid point
    (required for the tail bound to stay one-sided).  ``poor_fit`` is set
    when the log-scale RMS residual exceeds ``poor_fit_tol``.
    """
    qs = np.asarray(q_grid, dtype=float)
    vals = np.asarray(values, dtype=float)
    if qs.size < 2 or qs.shape != vals.shape:
        raise ValueError("need at least two (Q, value) pairs")
    if np.any(qs < 1.0) or np.any(vals <= 0.0):
        raise ValueError("need Q >= 1 and positive values")
    x = np.log(qs)
    y = np.log(vals)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    m = float(coef[0])
    if m <= 0.0:
        raise ValueError(f"fitted growth exponent must be positive, got {m}")
    res = y - design @ coef
    c1 = math.exp(float(coef[1]) + max(0.0, float(res.max())))
    residual = float(np.sum(res**2))
    poor = math.sqrt(residual / qs.size) > poor_fit_tol
    return PowerGrowthFit(c1=c1, m=m, residual=residual, poor_fit=poor)


def power_growth_tail(fit: PowerGrowthFit, x: float) -> float:
    """Chebyshev tail exp(-c2 * x**(1/m)) for growth c1 * Q**m, c2 = m/(e*c1^(1/m)).

    The closed form is the Chebyshev bound optimised over real Q >= 1;
    below the crossover x = c1 * e**m the unconstrained optimum falls under
    Q = 1, so the bound degrades to min(1, c1/x).
    """
    if x <= 0.0:
        raise ValueError(f"threshold must be positive, got {x}")
    q_opt = (x / fit.c1) ** (1.0 / fit.m) / math.e
    if q_opt < 1.0:
        return min(1.0, fit.c1 / x)
    c2 = fit.m / (math.e * fit.c1 ** (1.0 / fit.m))
    exponent = c2 * x ** (1.0 / fit.m)
    return math.exp(-exponent) if exponent < 745.0 else 0.0


# ---------------------------------------------------------------------------
# moment-bound pipelines
# ---------------------------------------------------------------------------


class MomentOracle(Protocol):
    """Per-point moment data for a random field on an (X, T) grid.

    ``abs_moment(gamma)`` returns the matrix E|xi(x, t)|^gamma;
    ``increment_moment(v, t, s)`` the vector over x of E|xi(x,t)-xi(x,s)|^v;
    ``power_increment_moment(p, q, t, s)`` the vector over x of
    E| |xi(x,t)|^p - |xi(x,s)|^p |^q, or None when no closed form exists
    (callers then fall back to a Holder-split upper bound).
    ``max_order`` is the largest finite moment order (None = all finite).
    """

    grid_shape: tuple[int, int]
    max_order: float | None

    def abs_moment(self, gamma: float) -> np.ndarray: ...

    def increment_moment(self, v: float, t: int, s: int) -> np.ndarray: ...

    def power_increment_moment(
        self, p: float, q: float, t: int, s: int
    ) -> np.ndarray | None: ...


def _order_ok(moments: MomentOracle, gamma: float) -> bool:
    return moments.max_order is None or gamma <= moments.max_order


def _require_order(moments: MomentOracle, gamma: float, what: str) -> None:
    if not _order_ok(moments, gamma):
        raise ValueError(
            f"{what} needs moment order {gamma:g}, above the model's "
            f"largest finite order {moments.max_order:g}"
        )


def moment_scale(moments: MomentOracle, p: float, q: float,
                 x_space: MeasureSpace) -> float:
    """sup over t of integral_X [E|xi(x,t)|^(p*q)]^(1/q) d mu(x)."""
    _require_order(moments, p * q, "moment scale")
    m = moments.abs_moment(p * q)
    per_t = (x_space.weights[:, None] * m ** (1.0 / q)).sum(axis=0)
    return float(per_t.max())


def _holder_increment(
    moments: MomentOracle, p: float, q: float, t: int, s: int,
    alpha_grid,
) -> np.ndarray:
    """Upper bound per x for [E| |xi_t|^p - |xi_s|^p |^q]^(1/q).

    Combines | |a|^p - |b|^p | <= p |a-b| (|a|^(p-1) + |b|^(p-1)) with a
    Holder split at conjugate exponents (alpha, beta), minimised per point
    over the alpha grid.  Each grid point gives a valid majorant, so the
    pointwise minimum does too.
    """
    best = None
    for alpha in alpha_grid:
        beta = alpha / (alpha - 1.0)
        v1 = alpha * q
        v2 = (p - 1.0) * beta * q
        if not (_order_ok(moments, v1) and _order_ok(moments, v2)):
            continue
        inc = moments.increment_moment(v1, t, s) ** (1.0 / v1)
        m2 = moments.abs_moment(v2) ** (1.0 / (beta * q))
        cand = p * inc * (m2[:, t] + m2[:, s])
        best = cand if best is None else np.minimum(best, cand)
    if best is None:
        raise ValueError(
            "no feasible Holder split: every alpha grid point needs moment "
            "orders beyond the model's largest finite order"
        )
    return best


def increment_distance(
    moments: MomentOracle, p: float, q: float, t: int, s: int,
    x_space: MeasureSpace, literal_form: bool = False, alpha_grid=None,
) -> float:
    """Semi-distance between index points from moment increments.

    Default form: integral_X [E| |xi_t|^p - |xi_s|^p |^q]^(1/q) d mu, using
    the oracle's exact power-increment moments when available and a
    Holder-split majorant otherwise.  ``literal_form`` switches to
    integral_X |E|xi_t|^p - E|xi_s|^p|^(1/q) d mu instead.
    """
    if t == s:
        return 0.0
    w = x_space.weights
    if literal_form:
        _require_order(moments, p, "literal increment distance")
        m = moments.abs_moment(p)
        return float(np.sum(w * np.abs(m[:, t] - m[:, s]) ** (1.0 / q)))
    exact = moments.power_increment_moment(p, q, t, s)
    if exact is not None:
        return float(np.sum(w * exact ** (1.0 / q)))
    grid = DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid
    per_x = _holder_increment(moments, p, q, t, s, grid)
    return float(np.sum(w * per_x))


@dataclass(frozen=True, eq=False)
class MomentBoundReport:
    """A computed moment bound with all intermediates retained for audit.

    ``kind`` is ``"single-field"`` (bound on the pQ-th moment root of the
    sup-over-t integrated p-th power of one field), ``"normed-sums"`` (the
    same uniformly over the number of summands) or ``"random-entropy"``
    (per-realization bound for the sup-inside norm).  ``scale`` is the
    series multiplier; ``distances`` the raw semi-distance matrix before
    normalisation by ``scale``; ``bound`` the deliverable value.
    """

    kind: str
    p: float
    q: float
    scale: float
    distances: np.ndarray
    theta: float
    series: SeriesEvaluation | None
    bound: float
    details: dict = dataclass_field(default_factory=dict)


def _series_bound_from_distances(
    scale: float, rho: np.ndarray, q_series: float, coarse_step: float
) -> SeriesEvaluation:
    """Optimise the entropy series for a normalised distance matrix.

    The covering number is a step function of the radius, changing only at
    the distinct positive distance values, so greedy covers are computed
    once per distinct value and each theta evaluation reduces to vectorised
    lookups.  Below the smallest positive distance the count saturates at
    the radius-zero cover (which also handles coincident points).
    """
    positive = np.unique(rho[rho > 0.0])
    covers = np.array([float(greedy_cover_count(rho, u)) for u in positive])
    # a cover at a smaller radius is a cover at a larger one: running min
    # keeps each entry a valid upper bound and restores monotonicity
    covers = np.minimum.accumulate(covers[::-1])[::-1]
    n_sat = float(greedy_cover_count(rho, 0.0))
    cutoff = float(positive[0]) if positive.size else None
    amp = n_sat ** (1.0 / q_series)
    # index 0 of the lookup serves radii below every positive distance
    lookup = np.concatenate([[amp], covers ** (1.0 / q_series)])

    def evaluate(theta: float) -> SeriesEvaluation:
        if cutoff is None:
            terms = np.asarray([])
            tail = amp / (1.0 - theta)
        else:
            # number of explicitly summed terms: theta^k >= cutoff
            k_max = max(0, int(math.floor(math.log(cutoff) / math.log(theta))))
            while theta ** (k_max + 1) >= cutoff:
                k_max += 1
            while k_max > 0 and theta**k_max < cutoff:
                k_max -= 1
            if k_max == 0:
                terms = np.asarray([])
                tail = amp / (1.0 - theta)
            else:
                radii = theta ** np.arange(1, k_max + 1)
                n_pow = lookup[np.searchsorted(positive, radii, side="right")]
                terms = (radii / theta) * n_pow
                tail = theta**k_max * amp / (1.0 - theta)
        series_total = float(terms.sum() + tail)
        return SeriesEvaluation(
            theta=theta, terms=terms, tail_bound=float(tail),
            series_total=series_total, sigma_factor=scale,
            total=scale * series_total,
        )

    return _optimize(evaluate, coarse_step=coarse_step)


def _increment_matrix(
    moments: MomentOracle, p: float, q: float, x_space: MeasureSpace,
    n_t: int, literal_form: bool, alpha_grid,
) -> np.ndarray:
    d = np.zeros((n_t, n_t))
    for t in range(n_t):
        for s in range(t + 1, n_t):
            d[t, s] = d[s, t] = increment_distance(
                moments, p, q, t, s, x_space,
                literal_form=literal_form, alpha_grid=alpha_grid,
            )
    return d


def field_moment_bound(
    moments: MomentOracle,
    p: float,
    q: float,
    x_space: MeasureSpace,
    t_space: IndexSpace,
    literal_form: bool = False,
    alpha_grid=None,
    coarse_step: float = 0.01,
) -> MomentBoundReport:
    """Bound {E [sup_t integral |xi(x,t)|^p dmu]^q}^(1/(p q)) for one field.

    Builds the moment scale, the increment semi-distance matrix, normalises
    by the scale, and theta-optimises the entropy series with covering
    numbers at exponent 1/q.  The deliverable ``bound`` dominates the
    (p*q)-th moment root of the sup-over-t p-norm of the field.
    """
    if p < 2.0 or q < 1.0:
        raise ValueError(f"need p >= 2 and q >= 1, got p={p}, q={q}")
    n_t = t_space.size
    sigma = moment_scale(moments, p, q, x_space)
    dbar = _increment_matrix(moments, p, q, x_space, n_t, literal_form, alpha_grid)
    if sigma == 0.0:
        if dbar.max() > 1e-12:
            raise ValueError(
                "inconsistent moments: zero scale with non-zero increments"
            )
        return MomentBoundReport(
            kind="single-field", p=p, q=q, scale=0.0, distances=dbar,
            theta=_THETA_MIN, series=None, bound=0.0,
        )
    best = _series_bound_from_distances(sigma, dbar / sigma, q, coarse_step)
    return MomentBoundReport(
        kind="single-field", p=p, q=q, scale=sigma, distances=dbar,
        theta=best.theta, series=best, bound=best.total ** (1.0 / p),
        details={"moment_scale": sigma, "literal_form": literal_form},
    )


def normed_sum_moment_bound(
    moments: MomentOracle,
    p: float,
    q: float,
    x_space: MeasureSpace,
    t_space: IndexSpace,
    symmetric: bool = False,
    moment_constant: Callable[[float], float] | None = None,
    alpha_grid=None,
    coarse_step: float = 0.01,
) -> MomentBoundReport:
    """Uniform-in-n bound for normalised sums of i.i.d. copies of the field.

    The sup-over-t integrated p-th power of S_n = n^(-1/2) * sum xi_i obeys
    the same entropy-series bound as a single field once the scale and the
    increment distance absorb the sum/summand norm-comparison constants:

        scale   = C(p*q)^p * sigma
        r(t, s) = 2p * inf over conjugate (alpha, beta) of
                  C(alpha*q) * C((p-1)*beta*q)^(p-1) *
                  integral_X W(x)^(p-1) * rho_x(t, s) dmu

    with W the sup-over-t marginal moment root and rho_x the pairwise
    increment moment root.  ``moment_constant`` defaults to
    :func:`rosenthal_constant`; pass the mixingale coefficient to cover
    superstrong-mixing stationary sequences (every occurrence of the
    constant is substituted).  Conjugate pairs are restricted to
    alpha*q >= 2 and (p-1)*beta*q >= 2, where the constants are defined;
    alpha = 2 is always feasible for p >= 2, q >= 1.
    """
    if p < 2.0 or q < 1.0:
        raise ValueError(f"need p >= 2 and q >= 1, got p={p}, q={q}")
    constant = moment_constant or (lambda u: rosenthal_constant(u, symmetric=symmetric))
    grid = DEFAULT_ALPHA_GRID if alpha_grid is None else tuple(alpha_grid)
    n_t = t_space.size
    w = x_space.weights

    _require_order(moments, p * q, "normed-sum bound")
    sigma = moment_scale(moments, p, q, x_space)
    k_pq = constant(p * q)
    scale = k_pq**p * sigma

    # precompute per-alpha ingredients that do not depend on the pair (t, s)
    feasible = []
    for alpha in grid:
        beta = alpha / (alpha - 1.0)
        v1 = alpha * q
        v2 = (p - 1.0) * beta * q
        if v1 < 2.0 or v2 < 2.0:
            continue
        if not (_order_ok(moments, v1) and _order_ok(moments, v2)):
            continue
        w_gamma = (moments.abs_moment(v2) ** (1.0 / v2)).max(axis=1)  # sup over t
        factor = constant(v1) * constant(v2) ** (p - 1.0)
        feasible.append((alpha, v1, factor, w_gamma ** (p - 1.0)))
    if not feasible:
        raise ValueError(
            "no feasible conjugate pair: alpha grid gives no orders >= 2 "
            "within the model's finite moments"
        )

    r = np.zeros((n_t, n_t))
    alpha_choice = np.zeros((n_t, n_t))
    for t in range(n_t):
        for s in range(t + 1, n_t):
            best_val, best_alpha = math.inf, math.nan
            for alpha, v1, factor, w_pow in feasible:
                rho_x = moments.increment_moment(v1, t, s) ** (1.0 / v1)
                j = float(np.sum(w * w_pow * rho_x))
                val = 2.0 * p * factor * j
                if val < best_val:
                    best_val, best_alpha = val, alpha
            r[t, s] = r[s, t] = best_val
            alpha_choice[t, s] = alpha_choice[s, t] = best_alpha

    if scale == 0.0:
        if r.max() > 1e-12:
            raise ValueError("inconsistent moments: zero scale with non-zero increments")
        return MomentBoundReport(
            kind="normed-sums", p=p, q=q, scale=0.0, distances=r,
            theta=_THETA_MIN, series=None, bound=0.0,
        )
    best = _series_bound_from_distances(scale, r / scale, q, coarse_step)
    return MomentBoundReport(
        kind="normed-sums", p=p, q=q, scale=scale, distances=r,
        theta=best.theta, series=best, bound=best.total ** (1.0 / p),
        details={
            "moment_scale": sigma,
            "constant_pq": k_pq,
            "alpha_choice": alpha_choice,
        },
    )


def realization_entropy_bound(
    sample: Field, p: float, q: float, coarse_step: float = 0.01
) -> MomentBoundReport:
    """Per-realization random entropy bound for the sup-inside-integral norm.

    For one field realization f, the scale is
    Delta = sup_t [integral |f(x,t)|^(p q) dmu]^(1/q), the random distance
    delta(t,s) = [integral | |f_t|^p - |f_s|^p |^q dmu]^(1/q) / Delta, and
    the deliverable is lambda = Delta * inf_theta sum theta^(k-1) *
    N(T, delta, theta^k).  The covering number enters at full strength
    (exponent 1), which only enlarges the bound relative to the 1/q
    variant used elsewhere.  A zero realization returns 0 by convention.
    """
    if p < 1.0 or q < 1.0:
        raise ValueError(f"need p >= 1 and q >= 1, got p={p}, q={q}")
    w = sample.x_space.weights
    a = np.abs(sample.values)
    delta_scale = float(((w[:, None] * a ** (p * q)).sum(axis=0) ** (1.0 / q)).max())
    n_t = sample.t_space.size
    powers = a**p
    diffs = np.abs(powers[:, :, None] - powers[:, None, :])  # (x, t, s)
    dist = (w[:, None, None] * diffs**q).sum(axis=0) ** (1.0 / q)
    if delta_scale == 0.0:
        return MomentBoundReport(
            kind="random-entropy", p=p, q=q, scale=0.0, distances=dist,
            theta=_THETA_MIN, series=None, bound=0.0,
        )
    delta = dist / delta_scale
    best = _series_bound_from_distances(delta_scale, delta, 1.0, coarse_step)
    return MomentBoundReport(
        kind="random-entropy", p=p, q=q, scale=delta_scale, distances=dist,
        theta=best.theta, series=best, bound=best.total,
        details={"delta_scale": delta_scale},
    )
