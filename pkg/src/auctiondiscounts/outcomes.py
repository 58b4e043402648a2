"""Auction outcome statistics for one discounted bidder and ``n`` others.

Bidders bid on the solver's discrete grid: a valuation bids the bid of its
nearest tabulated knot (:meth:`TabulatedBidFunction.grid_bid`), so ties have
positive probability and are split evenly.  :func:`integrate_outcomes`
computes the statistics exactly over that discretization;
:func:`simulate_outcomes` estimates the same quantities by sampling and is
used to cross-check the integrator.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import Form, Regime, resolve_batch
from .distributions import ValuationDistribution
from .solver import SolverConfig, SolverError, TabulatedBidFunction, solve

__all__ = [
    "OutcomeError",
    "AuctionOutcomeStats",
    "SweepRow",
    "integrate_outcomes",
    "simulate_outcomes",
    "sweep",
    "write_outcomes_csv",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "r", "e_rev", "eff", "win_disc", "win_other",
    "surp_disc", "surp_other", "cost_disc", "cost_other",
]

_GL_NODES, _GL_WEIGHTS = leggauss(8)


class OutcomeError(ValueError):
    pass


@dataclass(frozen=True)
class AuctionOutcomeStats:
    """One row of outcome statistics.  "other" columns are per undiscounted bidder.

    ``stderr`` is filled by Monte Carlo runs only, with the same keys as
    :meth:`as_dict`.
    """

    r: float
    expected_revenue: float
    efficiency: float
    win_disc: float
    win_other: float
    surplus_disc: float
    surplus_other: float
    cost_disc: float
    cost_other: float
    n: int = 4
    stderr: dict | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return {
            "e_rev": self.expected_revenue,
            "eff": self.efficiency,
            "win_disc": self.win_disc,
            "win_other": self.win_other,
            "surp_disc": self.surplus_disc,
            "surp_other": self.surplus_other,
            "cost_disc": self.cost_disc,
            "cost_other": self.cost_other,
        }

    # conditional-on-win views are derived, never stored
    @property
    def cost_given_win_disc(self) -> float:
        return self.cost_disc / self.win_disc

    @property
    def cost_given_win_other(self) -> float:
        return self.cost_other / self.win_other

    @property
    def surplus_given_win_disc(self) -> float:
        return self.surplus_disc / self.win_disc

    @property
    def surplus_given_win_other(self) -> float:
        return self.surplus_other / self.win_other


def _check_tables(tables):
    if len(tables) != 2 or not all(isinstance(t, TabulatedBidFunction) for t in tables):
        raise OutcomeError("need a (discounted, undiscounted) pair of bid tables")
    # TabulatedBidFunction validates monotonicity on construction; re-check in
    # case arrays were mutated in place
    for t in tables:
        if np.any(np.diff(t.valuations) <= 0.0) or np.any(np.diff(t.bids) <= 0.0):
            raise OutcomeError("bid table is not strictly monotone")


def _cells_on_grid(tab: TabulatedBidFunction, grid: np.ndarray):
    """Valuation bounds (lo, hi] of the set of valuations bidding exactly each grid bid.

    ``lo[g]`` is the top of all cells bidding below ``grid[g]``, ``hi[g]`` the
    top of all cells bidding at most ``grid[g]``; equal when the table never
    bids ``grid[g]``.
    """
    edges = tab.cell_edges()
    below = np.searchsorted(tab.bids, grid, side="left")
    upto = np.searchsorted(tab.bids, grid, side="right")
    return edges[below], edges[upto]


def _tie_win(n_ties_pool: int, L: np.ndarray, q: np.ndarray, extra: int = 0):
    """E[1 / (1 + extra + T)] * P(rest of pool at or below), T ~ Binomial ties among the pool."""
    total = np.zeros_like(L)
    for t in range(n_ties_pool + 1):
        total += math.comb(n_ties_pool, t) * q**t * L ** (n_ties_pool - t) / (1 + extra + t)
    return total


def _cell_quadrature(dist, lo, hi, cut_a, cut_b, integrand):
    """Integrate ``integrand(v)`` against ``dist`` over each cell (lo, hi].

    Works in probability space (u = cdf(v)), split at the two kink points so
    each piece is smooth.
    """
    a = np.asarray(dist.cdf(lo), dtype=float)
    b = np.asarray(dist.cdf(hi), dtype=float)
    ka = np.asarray(dist.cdf(np.clip(cut_a, lo, hi)), dtype=float)
    kb = np.asarray(dist.cdf(np.clip(cut_b, lo, hi)), dtype=float)
    knots = np.sort(np.stack([a, ka, kb, b], axis=1), axis=1)
    total = np.zeros(a.shape)
    for j in range(3):
        left, right = knots[:, j], knots[:, j + 1]
        half = 0.5 * (right - left)
        active = half > 0.0
        if not np.any(active):
            continue
        mid = 0.5 * (right + left)
        u = mid[active, None] + half[active, None] * _GL_NODES[None, :]
        v = dist.quantile(np.clip(u, 0.0, 1.0))
        vals = integrand(v, np.flatnonzero(active))
        total[active] += half[active] * (vals * _GL_WEIGHTS[None, :]).sum(axis=1)
    return total


def integrate_outcomes(
    tables: tuple[TabulatedBidFunction, TabulatedBidFunction],
    dist1: ValuationDistribution,
    dist2: ValuationDistribution,
    n: int = 4,
    r: float = 0.0,
) -> AuctionOutcomeStats:
    """Exact outcome statistics over the discretized bid functions.

    For every grid bid, a bidder wins if all opponents bid strictly lower,
    and with probability ``1/k`` in a ``k``-way tie.  Efficiency integrates
    the event that the winner's valuation is at least every opponent's.
    """
    _check_tables(tables)
    if n < 1:
        raise OutcomeError("need n >= 1 undiscounted bidders")
    tab1, tab2 = tables
    grid = np.union1d(tab1.bids, tab2.bids)
    lo1, hi1 = _cells_on_grid(tab1, grid)
    lo2, hi2 = _cells_on_grid(tab2, grid)
    L1 = np.asarray(dist1.cdf(lo1), dtype=float)
    H1 = np.asarray(dist1.cdf(hi1), dtype=float)
    L2 = np.asarray(dist2.cdf(lo2), dtype=float)
    H2 = np.asarray(dist2.cdf(hi2), dtype=float)
    q1, q2 = H1 - L1, H2 - L2
    c = 1.0 - r

    win1 = _tie_win(n, L2, q2)
    win2 = L1 * _tie_win(n - 1, L2, q2) + q1 * _tie_win(n - 1, L2, q2, extra=1)

    win_disc = float(np.sum(q1 * win1))
    win_other = float(np.sum(q2 * win2))
    cost_disc = float(np.sum(q1 * win1 * c * grid))
    cost_other = float(np.sum(q2 * win2 * grid))
    surplus_disc = float(np.sum(win1 * (dist1.partial_mean(lo1, hi1) - c * grid * q1)))
    surplus_other = float(np.sum(win2 * (dist2.partial_mean(lo2, hi2) - grid * q2)))

    # revenue from the distribution of the top bid, less refunds to the discounted winner
    top_le = H1 * H2**n
    top_lt = L1 * L2**n
    revenue = float(np.sum(grid * (top_le - top_lt)) - r * np.sum(grid * q1 * win1))

    def eff1_integrand(v, idx):
        A = np.asarray(dist2.cdf(np.minimum(v, lo2[idx, None])))
        B = np.maximum(np.asarray(dist2.cdf(np.minimum(v, hi2[idx, None]))) - L2[idx, None], 0.0)
        out = np.zeros_like(v)
        for t in range(n + 1):
            out += math.comb(n, t) * A ** (n - t) * B**t / (1 + t)
        return out

    def eff2_integrand(v, idx):
        P0 = np.asarray(dist1.cdf(np.minimum(v, lo1[idx, None])))
        P1 = np.maximum(np.asarray(dist1.cdf(np.minimum(v, hi1[idx, None]))) - L1[idx, None], 0.0)
        below = L2[idx, None]
        tied = np.maximum(np.asarray(dist2.cdf(v)) - below, 0.0)
        out = np.zeros_like(v)
        for t in range(n):
            w = math.comb(n - 1, t) * below ** (n - 1 - t) * tied**t
            out += w * (P0 / (1 + t) + P1 / (2 + t))
        return out

    eff1 = _cell_quadrature(dist1, lo1, hi1, lo2, hi2, eff1_integrand)
    eff2 = _cell_quadrature(dist2, lo2, hi2, lo1, hi1, eff2_integrand)
    efficiency = float(eff1.sum() + n * eff2.sum())

    return AuctionOutcomeStats(
        r=r,
        expected_revenue=revenue,
        efficiency=efficiency,
        win_disc=win_disc,
        win_other=win_other,
        surplus_disc=surplus_disc,
        surplus_other=surplus_other,
        cost_disc=cost_disc,
        cost_other=cost_other,
        n=n,
    )


def simulate_outcomes(
    tables: tuple[TabulatedBidFunction, TabulatedBidFunction],
    dist1: ValuationDistribution,
    dist2: ValuationDistribution,
    n: int = 4,
    r: float = 0.0,
    samples: int = 1_000_000,
    seed: int = 0,
    batch: int = 200_000,
) -> AuctionOutcomeStats:
    """Monte Carlo estimate of the same statistics, with standard errors.

    Valuations are sampled per class, snapped to grid bids, and resolved
    through :func:`auctiondiscounts.core.resolve_batch`.  The result is a
    deterministic function of ``seed`` (and ``batch``).
    """
    _check_tables(tables)
    if samples < 10_000:
        raise OutcomeError("Monte Carlo needs at least 10_000 samples")
    tab1, tab2 = tables
    rng = np.random.default_rng(seed)
    amounts = np.array([r] + [0.0] * n)
    keys = ["e_rev", "eff", "win_disc", "win_other", "surp_disc", "surp_other", "cost_disc", "cost_other"]
    s1 = dict.fromkeys(keys, 0.0)
    s2 = dict.fromkeys(keys, 0.0)
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        v = np.empty((m, n + 1))
        v[:, 0] = dist1.sample(rng, m)
        v[:, 1:] = dist2.sample(rng, (m, n))
        b = np.empty_like(v)
        b[:, 0] = tab1.grid_bid(v[:, 0])
        b[:, 1:] = tab2.grid_bid(v[:, 1:])
        prob, price, util = resolve_batch(v, b, amounts, Regime.POST, Form.MULTIPLICATIVE)
        pay = prob * price
        efficient = v >= v.max(axis=1, keepdims=True)
        per = {
            "e_rev": pay.sum(axis=1),
            "eff": (prob * efficient).sum(axis=1),
            "win_disc": prob[:, 0],
            "win_other": prob[:, 1:].mean(axis=1),
            "surp_disc": util[:, 0],
            "surp_other": util[:, 1:].mean(axis=1),
            "cost_disc": pay[:, 0],
            "cost_other": pay[:, 1:].mean(axis=1),
        }
        for k in keys:
            s1[k] += float(per[k].sum())
            s2[k] += float((per[k] ** 2).sum())
        done += m
    mean = {k: s1[k] / samples for k in keys}
    se = {k: math.sqrt(max(s2[k] / samples - mean[k] ** 2, 0.0) / (samples - 1)) for k in keys}
    return AuctionOutcomeStats(
        r=r,
        expected_revenue=mean["e_rev"],
        efficiency=mean["eff"],
        win_disc=mean["win_disc"],
        win_other=mean["win_other"],
        surplus_disc=mean["surp_disc"],
        surplus_other=mean["surp_other"],
        cost_disc=mean["cost_disc"],
        cost_other=mean["cost_other"],
        n=n,
        stderr=se,
    )


@dataclass
class SweepRow:
    r: float
    stats: AuctionOutcomeStats | None
    error: str | None = None
    b_star: float | None = None

    @property
    def failed(self) -> bool:
        return self.stats is None


def sweep(r_values, solver_cfg: SolverConfig) -> list[SweepRow]:
    """Solve and integrate outcomes for each reduction rate.

    ``solver_cfg`` supplies distributions, ``n`` and numerical settings; its
    ``r`` is replaced per row.  A row whose solve fails is returned with
    ``stats=None`` and the error message; the sweep continues.
    """
    rows = []
    for r in r_values:
        cfg = replace(solver_cfg, r=float(r))
        try:
            report = solve(cfg, audit=False)
        except SolverError as exc:
            log.warning("solve failed at r=%g: %s", r, exc)
            rows.append(SweepRow(float(r), None, str(exc)))
            continue
        stats = integrate_outcomes(report.bid_functions, cfg.dist1, cfg.dist2, cfg.n, cfg.r)
        rows.append(SweepRow(float(r), stats, None, report.b_star))
    return rows


def _fmt(x: float, digits: int | None) -> str:
    if digits is None:
        return repr(float(x))
    return f"{x:.{digits}f}"


def write_outcomes_csv(rows, fh, round3: bool = False, conditional: bool = False) -> None:
    """Write sweep rows.  Failed rows carry ``nan`` in every statistic column.

    ``round3`` gives the 3-decimal presentation (efficiency at 2 decimals);
    ``conditional`` appends cost and surplus conditioned on winning.
    """
    w = csv.writer(fh, lineterminator="\n")
    extra = ["cost_win_disc", "cost_win_other", "surp_win_disc", "surp_win_other"]
    w.writerow(CSV_COLUMNS + (extra if conditional else []))
    for row in rows:
        digits = 3 if round3 else None
        r_cell = f"{row.r:.2f}" if round3 else repr(float(row.r))
        if row.stats is None:
            w.writerow([r_cell] + ["nan"] * (len(CSV_COLUMNS) - 1 + (len(extra) if conditional else 0)))
            continue
        d = row.stats.as_dict()
        cells = [r_cell]
        for k in CSV_COLUMNS[1:]:
            cells.append(_fmt(d[k], 2 if (round3 and k == "eff") else digits))
        if conditional:
            s = row.stats
            cells += [
                _fmt(v, digits)
                for v in (s.cost_given_win_disc, s.cost_given_win_other,
                          s.surplus_given_win_disc, s.surplus_given_win_other)
            ]
        w.writerow(cells)
