"""Empirical Value-at-Risk and Conditional Value-at-Risk.

Two CVaR estimators live here:

* :func:`cvar_tail_average` averages the ``ceil((1 - beta) * N)`` largest
  values with equal weight. This is what the controller scores with.
* :func:`cvar_ru` evaluates the Rockafellar-Uryasev minimization
  ``min_eta eta + E[(Z - eta)^+] / (1 - beta)`` exactly for a weighted
  discrete law. It serves as the cross-check.

Confidence levels are read through their shortest decimal representation
(``0.95`` means 19/20 exactly), so tail sizes such as ``ceil(0.05 * 20)``
come out as 1 rather than 2.
"""
from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from ._validation import check_beta, check_values, check_weights

__all__ = [
    "SampleSet",
    "tail_size",
    "var",
    "tail_index_set",
    "cvar_tail_average",
    "cvar_ru",
]


@dataclass(frozen=True)
class SampleSet:
    """Finite weighted sample of a scalar random variable."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = check_values(self.values)
        weights = check_weights(self.weights, values.size)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, values):
        values = check_values(values)
        return cls(values, np.full(values.size, 1.0 / values.size))

    def __len__(self):
        return self.values.size


def _as_sample_set(s):
    if isinstance(s, SampleSet):
        return s
    return SampleSet.uniform(s)


def _beta_fraction(beta):
    return Fraction(repr(check_beta(beta)))


def _exact_sum(x):
    """Exact rational sum of finite floats via their binary mantissas."""
    mant, expo = np.frexp(np.asarray(x, dtype=float))
    ints = (mant * 2.0**53).astype(np.int64)
    expo = expo.astype(np.int64) - 53
    low = int(expo.min())
    total = sum(int(i) << int(e - low) for i, e in zip(ints, expo))
    return Fraction(total, 1 << -low) if low < 0 else Fraction(total << low)


def tail_size(n, beta):
    """Number of samples in the upper ``1 - beta`` tail, ``ceil((1-beta) n)``."""
    k = math.ceil((1 - _beta_fraction(beta)) * int(n))
    return max(1, min(int(n), k))


def var(s, beta):
    """Weighted empirical VaR: the smallest value whose cumulative weight reaches `beta`.

    Parameters
    ----------
    s : SampleSet or array_like
        Samples; a plain array is given uniform weights.
    beta : float
        Confidence level in (0, 1).
    """
    s = _as_sample_set(s)
    b = _beta_fraction(beta)
    order = np.argsort(s.values, kind="stable")
    v = s.values[order]
    w = s.weights[order]
    # float cumsum only locates the neighbourhood; the decision is exact
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, float(b) - 1e-6, side="left"))
    k = min(k, v.size - 1)
    fb = float(b)
    while k < v.size - 1:
        acc = math.fsum(w[:k + 1])
        # fsum is correctly rounded, so only near-ties need rational arithmetic
        if abs(acc - fb) > 1e-12:
            if acc >= fb:
                break
        elif _exact_sum(w[:k + 1]) >= b:
            break
        k += 1
    return float(v[k])


def tail_index_set(values, beta):
    """Indices of the ``ceil((1-beta) N)`` largest values.

    Ties are broken in favour of the lower original index. The result is
    ordered from largest value to smallest.

    >>> tail_index_set([3.0, 9.0, 9.0, 1.0], 0.5).tolist()
    [1, 2]
    """
    v = check_values(values)
    k = tail_size(v.size, beta)
    order = np.lexsort((np.arange(v.size), -v))
    return order[:k]


def cvar_tail_average(values, beta, axis=None):
    """Equal-weight tail-average CVaR estimate.

    With ``axis`` given, `values` may be a 2-d array and the estimate is taken
    independently along that axis (one estimate per candidate row, say).
    """
    if axis is None:
        v = check_values(values)
        idx = tail_index_set(v, beta)
        return math.fsum(v[idx]) / idx.size
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("values must be nonempty")
    k = tail_size(arr.shape[axis], beta)
    top = np.sort(arr, axis=axis)
    top = np.take(top, np.arange(arr.shape[axis] - k, arr.shape[axis]), axis=axis)
    return top.mean(axis=axis)


def cvar_ru(s, beta):
    """Rockafellar-Uryasev CVaR of a weighted discrete law, in closed form.

    The objective ``eta + E[(Z - eta)^+] / (1 - beta)`` is piecewise linear
    and convex in ``eta`` and attains its minimum at ``eta = VaR_beta``.
    """
    s = _as_sample_set(s)
    b = _beta_fraction(beta)
    eta = var(s, beta)
    excess = s.weights * np.maximum(s.values - eta, 0.0)
    return eta + math.fsum(excess) / float(1 - b)
