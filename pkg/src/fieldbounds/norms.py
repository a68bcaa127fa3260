"""Weighted Lebesgue, mixed anisotropic, and hybrid sup/integral norms on fields.

The mixed norm nests one reduction per axis, innermost first, so the axis
order matters: reducing X at exponent p1 and then T at p2 is in general not
the same value as the other order.  An infinite exponent reduces by a plain
(unweighted) max of absolute values, which is the essential supremum on a
finite space where every point has positive mass.

Two hybrid norms are provided directly:

* ``cl_norm``  -- sup over t of the weighted p-norm over x (sup outside);
* ``lc_norm``  -- weighted p-norm over x of the sup over t (sup inside).

Moving the supremum inside never decreases the value, so
``cl_norm(f, p) <= lc_norm(f, p)`` for every field.

Continuity moduli use the *strict* window ``distance(t, s) < eps`` on the
index space's normalised distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spaces import Field, MeasureSpace

__all__ = [
    "INF",
    "NormSpec",
    "lp_norm",
    "mixed_norm",
    "cl_norm",
    "lc_norm",
    "cl_modulus",
    "lc_modulus",
]

INF = math.inf

# |v|^p overflows double precision when p*log(v_max) gets near 709; rescale
# by the max well before that.
_LOG_OVERFLOW_GUARD = 500.0


def _check_exponent(p: float) -> float:
    p = float(p)
    if p != INF and not (p >= 1.0 and math.isfinite(p)):
        raise ValueError(f"exponent must be >= 1 or inf, got {p}")
    return p


@dataclass(frozen=True)
class NormSpec:
    """Ordered axis/exponent pairs for a mixed norm; first entry is innermost.

    Axis identifiers are ``"x"`` and ``"t"``; each must appear exactly once.
    """

    axes: tuple[tuple[str, float], ...]

    def __init__(self, axes):
        entries = tuple((str(name), _check_exponent(p)) for name, p in axes)
        names = [name for name, _ in entries]
        if sorted(names) != ["t", "x"]:
            raise ValueError(
                f"norm spec must mention axes 'x' and 't' exactly once, got {names}"
            )
        object.__setattr__(self, "axes", entries)


def _reduce(arr: np.ndarray, axis: int, p: float, weights: np.ndarray | None) -> np.ndarray:
    """Reduce |arr| along one axis: weighted p-mean root, or max for p=inf."""
    if p == INF:
        return arr.max(axis=axis)
    w_shape = [1] * arr.ndim
    w_shape[axis] = -1
    w = np.ones(arr.shape[axis]) if weights is None else weights
    w = w.reshape(w_shape)
    amax = float(arr.max(initial=0.0))
    if amax > 0.0 and p * math.log(amax) > _LOG_OVERFLOW_GUARD:
        scaled = arr / amax
        return amax * np.sum(w * scaled**p, axis=axis) ** (1.0 / p)
    return np.sum(w * arr**p, axis=axis) ** (1.0 / p)


def lp_norm(values, p: float, weights=None) -> float:
    """Weighted L_p norm of a vector: (sum w_i |v_i|^p)^(1/p).

    For ``p = INF`` returns max |v_i| (weights are ignored: every point of a
    finite measure space has positive mass).
    """
    p = _check_exponent(p)
    v = np.abs(np.asarray(values, dtype=float))
    if p == INF:
        return float(v.max())
    w = None if weights is None else np.asarray(weights, dtype=float)
    if w is not None and w.shape != v.shape:
        raise ValueError(f"weights shape {w.shape} does not match values {v.shape}")
    return float(_reduce(v, 0, p, w))


def _axis_weights(field: Field, name: str) -> np.ndarray | None:
    # only the X axis carries measure weights; T reductions at finite p use
    # unit weights (counting measure), matching a discretised sup/integral
    if name == "x":
        return field.x_space.weights
    return None


def mixed_norm(field: Field, spec: NormSpec | list | tuple) -> float:
    """Nested mixed norm of a field, innermost axis first."""
    if not isinstance(spec, NormSpec):
        spec = NormSpec(spec)
    arr = np.abs(field.values)
    pos = {"x": 0, "t": 1}
    for name, p in spec.axes:
        ax = pos.pop(name)
        arr = _reduce(arr, ax, p, _axis_weights(field, name))
        pos = {k: (v - 1 if v > ax else v) for k, v in pos.items()}
    return float(arr)


def cl_norm(field: Field, p: float) -> float:
    """sup over t of the weighted p-norm over x (continuous-Lebesgue norm).

    Equals ``mixed_norm`` with exponent p innermost on x and inf on t.
    """
    p = _check_exponent(p)
    a = np.abs(field.values)
    if p == INF:
        return float(a.max())
    amax = float(a.max(initial=0.0))
    if amax == 0.0:
        return 0.0
    if p * math.log(amax) > _LOG_OVERFLOW_GUARD:
        return amax * float((field.x_space.weights @ (a / amax) ** p).max()) ** (1.0 / p)
    return float((field.x_space.weights @ a**p).max()) ** (1.0 / p)


def lc_norm(field: Field, p: float) -> float:
    """Weighted p-norm over x of the sup over t (Lebesgue-continuous norm).

    Equals ``mixed_norm`` with inf innermost on t and exponent p on x.
    """
    p = _check_exponent(p)
    per_x = np.abs(field.values).max(axis=1)
    if p == INF:
        return float(per_x.max())
    return float(_reduce(per_x, 0, p, field.x_space.weights))


def _close_pairs(field: Field, eps: float) -> tuple[np.ndarray, np.ndarray]:
    if eps <= 0.0:
        raise ValueError(f"modulus window must be positive, got {eps}")
    n = field.t_space.size
    iu, ju = np.triu_indices(n, k=1)
    keep = field.t_space.distance[iu, ju] < eps  # strict window
    return iu[keep], ju[keep]


def cl_modulus(field: Field, p: float, eps: float) -> float:
    """Max over pairs with distance(t, s) < eps of |f(., t) - f(., s)|_p."""
    p = _check_exponent(p)
    i, j = _close_pairs(field, eps)
    if i.size == 0:
        return 0.0
    diffs = np.abs(field.values[:, i] - field.values[:, j])
    per_pair = _reduce(diffs, 0, p, field.x_space.weights)
    return float(per_pair.max())


def lc_modulus(field: Field, p: float, eps: float) -> float:
    """Weighted p-norm over x of the per-point max increment within eps.

    The pairwise sup sits inside the integral, so this always dominates
    ``cl_modulus`` at the same (p, eps).
    """
    p = _check_exponent(p)
    i, j = _close_pairs(field, eps)
    if i.size == 0:
        return 0.0
    diffs = np.abs(field.values[:, i] - field.values[:, j])
    per_x = diffs.max(axis=1)
    return float(_reduce(per_x, 0, p, field.x_space.weights))
