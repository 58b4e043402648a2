"""Closed-form results for multiplicative discounts.

Rate correspondence between bid augmentation ``a`` and price reduction
``r = a / (1 + a)``, the equal-rate gap ``a**2 / (1 + a)``, and the uniform
equilibrium with compensating supports: a bidder with price reduction ``r``
and values on ``U[0, 1 - r]`` bids ``(n - 1)/n * v / (1 - r)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "augmentation_to_reduction",
    "reduction_to_augmentation",
    "equal_rate_penalty",
    "uniform_equilibrium_bid",
    "uniform_expected_utility",
    "uniform_expected_utility_derivative",
]


def _as_array(x):
    return np.asarray(x, dtype=float)


def augmentation_to_reduction(a):
    """Price-reduction rate with the same equilibria as augmentation rate ``a``."""
    arr = _as_array(a)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError("augmentation rate must be >= 0")
    return a / (1.0 + a)


def reduction_to_augmentation(r):
    arr = _as_array(r)
    if np.any(arr < 0.0) or np.any(arr >= 1.0) or np.any(np.isnan(arr)):
        raise ValueError("reduction rate must lie in [0, 1)")
    return r / (1.0 - r)


def equal_rate_penalty(a):
    """Gap between rate ``a`` and ``a/(1+a)``, the rate it maps to across regimes."""
    arr = _as_array(a)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError("rate must be >= 0")
    return a * a / (1.0 + a)


def _check_n_r(n, r):
    if int(n) != n or n < 2:
        raise ValueError("need an integer bidder count n >= 2")
    if not 0.0 <= r < 1.0:
        raise ValueError("reduction rate must lie in [0, 1)")


def uniform_equilibrium_bid(n: int, r: float, v):
    """Equilibrium bid for ``n`` bidders when this bidder has reduction ``r`` and values on ``U[0, 1-r]``."""
    _check_n_r(n, r)
    arr = _as_array(v)
    if np.any(arr < 0.0) or np.any(arr > 1.0 - r):
        raise ValueError(f"valuation outside the support [0, {1.0 - r}]")
    return (n - 1) / n * v / (1.0 - r)


def uniform_expected_utility(n: int, r: float, v, b):
    """Expected utility of bidding ``b`` against ``n - 1`` opponents on the uniform equilibrium.

    Each opponent bids below ``b`` with probability ``n b / (n - 1)``, which
    requires ``b <= (n - 1)/n``.
    """
    _check_n_r(n, r)
    b_arr = _as_array(b)
    if np.any(b_arr < 0.0) or np.any(b_arr > (n - 1) / n):
        raise ValueError(f"bid must lie in [0, {(n - 1) / n}]")
    return (n / (n - 1) * b) ** (n - 1) * (v - b * (1.0 - r))


def uniform_expected_utility_derivative(n: int, r: float, v, b):
    _check_n_r(n, r)
    c = (n / (n - 1)) ** (n - 1)
    return c * ((n - 1) * b ** (n - 2) * (v - b * (1.0 - r)) - b ** (n - 1) * (1.0 - r))
