"""Executable checks of the pre/post-auction discount equivalences.

* Additive: price reductions ``r`` at bids ``b`` give every bidder the same
  utility as bid augmentations ``r`` at bids ``b - r``.
* Multiplicative: augmentation rates ``a`` at bids ``b`` match reduction
  rates ``a / (1 + a)`` at bids ``(1 + a) b``.
* Equal rates: the same multiplicative rate is worth more to a discounted
  bidder as a price reduction than as a bid augmentation, because
  augmentation ``a`` only matches reduction ``a / (1 + a)``.

Random instances are drawn on dyadic grids so every sum and product in
both regimes is exact in binary floating point; the additive identity can
then be asserted with zero tolerance, ties included.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analytic import augmentation_to_reduction, equal_rate_penalty
from .core import Form, Regime, resolve_batch
from .solver import SolverConfig, SolverError, solve

__all__ = [
    "EquivalenceReport",
    "check_additive_equivalence",
    "check_multiplicative_equivalence",
    "random_additive_instances",
    "random_multiplicative_instances",
    "run_additive_check",
    "run_multiplicative_check",
    "EqualRateRow",
    "EqualRateReport",
    "equal_rate_sweep",
]

MULT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class EquivalenceReport:
    theorem: str
    trials: int
    tie_cases: int
    seed: int | None
    max_deviation: float
    tolerance: float
    winner_sets_match: bool

    @property
    def passed(self) -> bool:
        return self.winner_sets_match and self.max_deviation <= self.tolerance

    def to_text(self) -> str:
        lines = [
            f"theorem: {self.theorem}",
            f"seed: {self.seed}",
            f"trials: {self.trials}",
            f"tie_cases: {self.tie_cases}",
            f"max_deviation: {self.max_deviation!r}",
            f"tolerance: {self.tolerance!r}",
            f"winner_sets_match: {str(self.winner_sets_match).lower()}",
            f"status: {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines) + "\n"


def _as_batch(*arrays):
    out = [np.atleast_2d(np.asarray(a, dtype=float)) for a in arrays]
    shape = out[0].shape
    if any(a.shape != shape for a in out):
        raise ValueError("v, b and discount arrays must share one shape")
    return out


def _count_ties(prob):
    return int(np.sum(np.max(prob, axis=1) < 1.0))


def check_additive_equivalence(v, b, r, seed=None) -> EquivalenceReport:
    """Compare utilities of (post, bids ``b``) with (pre, bids ``b - r``); exact equality expected."""
    v, b, r = _as_batch(v, b, r)
    if np.any(b < r):
        raise ValueError("additive check needs b >= r elementwise")
    p_post, _, u_post = resolve_batch(v, b, r, Regime.POST, Form.ADDITIVE)
    p_pre, _, u_pre = resolve_batch(v, b - r, r, Regime.PRE, Form.ADDITIVE)
    return EquivalenceReport(
        theorem="additive",
        trials=v.shape[0],
        tie_cases=_count_ties(p_post),
        seed=seed,
        max_deviation=float(np.max(np.abs(u_post - u_pre))),
        tolerance=0.0,
        winner_sets_match=bool(np.array_equal(p_post > 0, p_pre > 0)),
    )


def check_multiplicative_equivalence(v, b, a, seed=None) -> EquivalenceReport:
    """Compare (pre, bids ``b``, rates ``a``) with (post, bids ``(1+a) b``, rates ``a/(1+a)``).

    Deviation is relative to each bidder's valuation/bid scale.
    """
    v, b, a = _as_batch(v, b, a)
    p_pre, _, u_pre = resolve_batch(v, b, a, Regime.PRE, Form.MULTIPLICATIVE)
    r = augmentation_to_reduction(a)
    p_post, _, u_post = resolve_batch(v, b * (1.0 + a), r, Regime.POST, Form.MULTIPLICATIVE)
    scale = np.maximum(np.maximum(np.abs(v), np.abs(b)), np.finfo(float).tiny)
    return EquivalenceReport(
        theorem="multiplicative",
        trials=v.shape[0],
        tie_cases=_count_ties(p_pre),
        seed=seed,
        max_deviation=float(np.max(np.abs(u_pre - u_post) / scale)),
        tolerance=MULT_TOLERANCE,
        winner_sets_match=bool(np.array_equal(p_pre > 0, p_post > 0)),
    )


def _tie_rows(rng, trials, tie_cases):
    rows = rng.choice(trials, size=min(tie_cases, trials), replace=False)
    return np.sort(rows)


def random_additive_instances(rng, trials, n_bidders=5, tie_cases=1000, bits=10):
    """Dyadic ``(v, b, r)`` with ``b >= r``; ``tie_cases`` rows get a 2-4 way top tie."""
    q = 2.0**-bits
    v = rng.integers(1, 4 << bits, size=(trials, n_bidders)) * q
    r = rng.integers(0, 1 << (bits - 1), size=(trials, n_bidders)) * q
    b = r + rng.integers(0, 2 << bits, size=(trials, n_bidders)) * q
    for row in _tie_rows(rng, trials, tie_cases):
        k = rng.integers(2, min(4, n_bidders) + 1)
        who = rng.choice(n_bidders, size=k, replace=False)
        b[row, who] = b[row].max()
    return v, b, r


_AUG_RATES = np.array([0.0, 0.25, 0.5, 1.0])


def random_multiplicative_instances(rng, trials, n_bidders=5, tie_cases=1000, bits=10):
    """``(v, b, a)`` with ``a`` in {0, 1/4, 1/2, 1}; tie rows share one augmented bid exactly."""
    q = 2.0**-bits
    v = rng.integers(1, 4 << bits, size=(trials, n_bidders)) * q
    a = _AUG_RATES[rng.integers(0, _AUG_RATES.size, size=(trials, n_bidders))]
    b = rng.integers(0, 2 << bits, size=(trials, n_bidders)) * q
    for row in _tie_rows(rng, trials, tie_cases):
        k = rng.integers(2, min(4, n_bidders) + 1)
        who = rng.choice(n_bidders, size=k, replace=False)
        # 15 * j / 64 is divisible by every 1 + a on the rate menu
        top = 15.0 * rng.integers(1, 64) / 64.0
        aug = b[row] * (1.0 + a[row])
        top = max(top, 15.0 * np.ceil(aug.max() * 64.0 / 15.0) / 64.0)
        b[row, who] = top / (1.0 + a[row, who])
    return v, b, a


def run_additive_check(trials=100_000, seed=0, n_bidders=5, tie_cases=1000) -> EquivalenceReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    v, b, r = random_additive_instances(rng, trials, n_bidders, tie_cases)
    return check_additive_equivalence(v, b, r, seed=seed)


def run_multiplicative_check(trials=100_000, seed=0, n_bidders=5, tie_cases=1000) -> EquivalenceReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    v, b, a = random_multiplicative_instances(rng, trials, n_bidders, tie_cases)
    return check_multiplicative_equivalence(v, b, a, seed=seed)


@dataclass(frozen=True)
class EqualRateRow:
    """Discounted bidder's equilibrium surplus under rate ``rate`` in both regimes.

    ``loss`` is what the bidder gives up when the rate is applied as a bid
    augmentation (equivalent to reduction ``equivalent_reduction``) rather
    than as a price reduction.
    """

    rate: float
    equivalent_reduction: float
    rate_gap: float
    surplus_reduction: float | None
    surplus_augmentation: float | None
    error: str | None = None

    @property
    def loss(self) -> float | None:
        if self.surplus_reduction is None or self.surplus_augmentation is None:
            return None
        return self.surplus_reduction - self.surplus_augmentation


@dataclass(frozen=True)
class EqualRateReport:
    rows: tuple[EqualRateRow, ...]
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        losses = [row.loss for row in self.rows]
        if any(x is None for x in losses):
            return False
        if any(x < -self.tolerance for x in losses):
            return False
        return all(b >= a - self.tolerance for a, b in zip(losses, losses[1:]))

    def to_text(self) -> str:
        lines = ["theorem: equal-rate", "rate,equivalent_reduction,rate_gap,surplus_reduction,surplus_augmentation,loss"]
        for row in self.rows:
            cells = [row.rate, row.equivalent_reduction, row.rate_gap,
                     row.surplus_reduction, row.surplus_augmentation, row.loss]
            lines.append(",".join("nan" if c is None else repr(float(c)) for c in cells))
        lines.append(f"status: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def equal_rate_sweep(solver_cfg: SolverConfig, rates) -> EqualRateReport:
    """Equilibrium surplus of the discounted bidder, reduction vs augmentation, per rate.

    Augmentation rate ``a`` is solved as its equivalent reduction
    ``a / (1 + a)``.  Rates are processed in the given order; sort them
    ascending for the monotonicity verdict to be meaningful.
    """
    from .outcomes import integrate_outcomes

    def surplus(r):
        cfg = replace(solver_cfg, r=float(r))
        rep = solve(cfg, audit=False)
        return integrate_outcomes(rep.bid_functions, cfg.dist1, cfg.dist2, cfg.n, cfg.r).surplus_disc

    rows = []
    for a in rates:
        a = float(a)
        eq = float(augmentation_to_reduction(a))
        gap = float(equal_rate_penalty(a))
        try:
            s_red = surplus(a)
            s_aug = s_red if a == 0.0 else surplus(eq)
            rows.append(EqualRateRow(a, eq, gap, s_red, s_aug))
        except SolverError as exc:
            rows.append(EqualRateRow(a, eq, gap, None, None, str(exc)))
    return EqualRateReport(tuple(rows))
