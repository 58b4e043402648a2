"""Equilibrium bid functions for one discounted bidder against ``n`` undiscounted bidders.

The discounted bidder (role 1) receives a post-auction price reduction of
``r`` times their bid; the ``n`` others (role 2) share one valuation
distribution and, by symmetry, one bid function.  With ``F_i, f_i``
evaluated at the inverse bid functions ``v_i(b)``, the first-order
conditions give::

    v2' = (1 - r) F2 / (n f2 [v1 - (1 - r) b])
    v1' = (F1 / f1) (1 / (v2 - b) - (n - 1) f2 v2' / F2)

Starting from the support maxima at a candidate top bid ``b*`` we take
Euler steps of ``b*/steps`` down to ``b = 0``.  A candidate is feasible when
both inverse functions keep strictly decreasing and every denominator stays
positive; ``b*`` is the largest feasible candidate, found by bisection.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionError, ValuationDistribution

__all__ = [
    "SolverError",
    "SingularityError",
    "BracketError",
    "Role",
    "SolverConfig",
    "Trajectory",
    "TabulatedBidFunction",
    "AuditResult",
    "SolveReport",
    "ode_rhs",
    "euler_integrate",
    "find_bstar",
    "invert",
    "best_response_audit",
    "solve",
    "write_tables_csv",
    "read_tables_csv",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure while computing equilibrium bid functions."""


class SingularityError(SolverError):
    """ODE right-hand side evaluated where a denominator or density vanishes."""

    def __init__(self, message, b, v1, v2):
        super().__init__(f"{message} at b={b!r}, v1={v1!r}, v2={v2!r}")
        self.b, self.v1, self.v2 = b, v1, v2


class BracketError(SolverError):
    """The b* bisection bracket does not straddle the feasibility boundary."""


class Role(enum.Enum):
    DISCOUNTED = "discounted"
    UNDISCOUNTED = "undiscounted"


@dataclass(frozen=True)
class SolverConfig:
    """Inputs of one equilibrium solve.

    ``bstar_tolerance`` is relative; the default bisects to (nearly) machine
    precision because backward integration amplifies any error in ``b*``
    like ``(b*/b)**(n+1)`` near the bottom of the bid range.
    """

    dist1: ValuationDistribution
    dist2: ValuationDistribution
    n: int = 4
    r: float = 0.0
    steps: int = 10_000
    bstar_tolerance: float = 1e-15
    bstar_bracket: tuple[float, float] | None = None
    max_iter: int = 60

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n (undiscounted bidders) must be an integer >= 1")
        if not 0.0 <= self.r < 1.0:
            raise ValueError("reduction rate r must lie in [0, 1)")
        if int(self.steps) != self.steps or self.steps < 100:
            raise ValueError("steps must be an integer >= 100")
        if not self.bstar_tolerance > 0.0:
            raise ValueError("bstar_tolerance must be > 0")
        for name in ("dist1", "dist2"):
            d = getattr(self, name)
            if getattr(d, "degenerate", False):
                raise DistributionError(f"{name} is degenerate (point mass); cannot solve")
            lo, hi = d.support()
            if not math.isfinite(hi):
                raise DistributionError(f"{name} has unbounded support; truncate it before solving")
            if lo < 0.0:
                raise DistributionError(f"{name} support must start at >= 0")
        if self.bstar_bracket is not None:
            lo, hi = self.bstar_bracket
            if not 0.0 < lo < hi:
                raise ValueError("bstar_bracket must satisfy 0 < lo < hi")

    @property
    def bracket(self) -> tuple[float, float]:
        if self.bstar_bracket is not None:
            return tuple(self.bstar_bracket)
        v2max = self.dist2.support()[1]
        return (1e-6 * v2max, v2max)


def ode_rhs(b: float, v1: float, v2: float, cfg: SolverConfig) -> tuple[float, float]:
    """Derivatives ``(v1', v2')`` of the inverse bid functions at bid ``b``."""
    c = 1.0 - cfg.r
    F1, f1 = (float(x) for x in (cfg.dist1.cdf(v1), cfg.dist1.pdf(v1)))
    F2, f2 = (float(x) for x in (cfg.dist2.cdf(v2), cfg.dist2.pdf(v2)))
    if not v1 - c * b > 0.0:
        raise SingularityError("discounted bidder at zero margin (v1 <= (1-r) b)", b, v1, v2)
    if not v2 - b > 0.0:
        raise SingularityError("undiscounted bidder at zero margin (v2 <= b)", b, v1, v2)
    if not (f1 > 0.0 and f2 > 0.0):
        raise SingularityError("zero valuation density", b, v1, v2)
    if not F2 > 0.0:
        raise SingularityError("zero opponent cdf F2", b, v1, v2)
    dv2 = c * F2 / (cfg.n * f2 * (v1 - c * b))
    dv1 = F1 / f1 * (1.0 / (v2 - b) - (cfg.n - 1) * f2 * dv2 / F2)
    return dv1, dv2


@dataclass
class Trajectory:
    """Euler trajectory of the inverse bid functions, ordered by increasing bid.

    ``clamped`` is the number of low knots pinned to a support minimum.
    ``fail_step`` counts Euler steps taken down from ``b*`` before
    infeasibility (``None`` when feasible).
    """

    b_star: float
    bids: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    feasible: bool
    fail_step: int | None = None
    reason: str = ""
    clamped: int = 0


def euler_integrate(b_star: float, cfg: SolverConfig) -> Trajectory:
    """Integrate the inverse bid functions down from candidate top bid ``b_star``.

    Returns an infeasible trajectory (not an exception) when the candidate
    breaks monotonicity or a denominator guard.  Once an inverse function
    would fall below its support minimum it is pinned there for the remaining
    knots; pinning role 2 freezes role 1 as well, since ``v1'`` is undefined
    with ``F2 = 0``.
    """
    lo1, hi1 = cfg.dist1.support()
    lo2, hi2 = cfg.dist2.support()
    if not 0.0 < b_star < hi2:
        raise ValueError(f"candidate b* must lie in (0, {hi2}), got {b_star}")
    F1, f1 = cfg.dist1.scalar_cdf_pdf()
    F2, f2 = cfg.dist2.scalar_cdf_pdf()
    n, c, steps = cfg.n, 1.0 - cfg.r, cfg.steps
    db = b_star / steps

    v1s = [0.0] * (steps + 1)
    v2s = [0.0] * (steps + 1)
    v1, v2 = hi1, hi2
    pin1 = pin2 = False
    clamped_at = None
    for k in range(steps):
        v1s[k], v2s[k] = v1, v2
        b = b_star * (steps - k) / steps
        m1 = v1 - c * b
        m2 = v2 - b
        # margins are checked on pinned knots too: pinning must not hide a collapse
        if m1 <= 0.0 or m2 <= 0.0:
            return _infeasible(b_star, cfg, k, "zero bidding margin")
        if pin2:
            continue
        F2v, f2v = F2(v2), f2(v2)
        if f2v <= 0.0 or F2v <= 0.0:
            return _infeasible(b_star, cfg, k, "undiscounted density or cdf vanished")
        dv2 = c * F2v / (n * f2v * m1)
        if not dv2 > 0.0:
            return _infeasible(b_star, cfg, k, "v2 not decreasing")
        if not pin1:
            f1v = f1(v1)
            if f1v <= 0.0:
                return _infeasible(b_star, cfg, k, "discounted density vanished")
            dv1 = F1(v1) / f1v * (1.0 / m2 - (n - 1) * f2v * dv2 / F2v)
            if not dv1 > 0.0:
                return _infeasible(b_star, cfg, k, "v1 not decreasing")
            v1 -= db * dv1
            if v1 <= lo1:
                v1, pin1 = lo1, True
                clamped_at = k + 1 if clamped_at is None else clamped_at
        v2 -= db * dv2
        if v2 <= lo2:
            v2, pin2 = lo2, True
            clamped_at = k + 1 if clamped_at is None else clamped_at
    v1s[steps], v2s[steps] = v1, v2

    bids = b_star * np.arange(steps + 1) / steps
    clamped = 0 if clamped_at is None else steps + 1 - clamped_at
    return Trajectory(
        b_star=b_star,
        bids=bids,
        v1=np.array(v1s[::-1]),
        v2=np.array(v2s[::-1]),
        feasible=True,
        clamped=clamped,
    )


def _infeasible(b_star, cfg, step, reason):
    return Trajectory(
        b_star=b_star,
        bids=np.empty(0),
        v1=np.empty(0),
        v2=np.empty(0),
        feasible=False,
        fail_step=step,
        reason=reason,
    )


def find_bstar(cfg: SolverConfig) -> tuple[float, Trajectory]:
    """Largest feasible top bid, by bisection on the configured bracket.

    Returns ``(b_star, trajectory)`` for the accepted candidate.
    """
    lo, hi = cfg.bracket
    hi = min(hi, np.nextafter(cfg.dist2.support()[1], 0.0))
    best = euler_integrate(lo, cfg)
    if not best.feasible:
        raise BracketError(
            f"lower bracket end {lo} is infeasible ({best.reason}); lower bstar_bracket[0]"
        )
    top = euler_integrate(hi, cfg)
    if top.feasible:
        raise BracketError(
            f"upper bracket end {hi} is feasible; widen bstar_bracket upward"
        )
    for _ in range(cfg.max_iter):
        if hi - lo <= cfg.bstar_tolerance * hi:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        traj = euler_integrate(mid, cfg)
        if traj.feasible:
            lo, best = mid, traj
        else:
            hi = mid
    log.debug("b* = %.17g (bracket width %.3g)", lo, hi - lo)
    return lo, best


@dataclass(frozen=True)
class TabulatedBidFunction:
    """Strictly increasing (valuation -> bid) table.

    Evaluation interpolates linearly between knots and is flat outside the
    tabulated valuations.  ``grid_bid`` instead snaps a valuation to the bid
    of its nearest knot (cells split at valuation midpoints); outcome
    integration and simulation both use that discrete bidding rule.
    """

    valuations: np.ndarray
    bids: np.ndarray
    role: Role

    def __post_init__(self):
        v = np.asarray(self.valuations, dtype=float)
        b = np.asarray(self.bids, dtype=float)
        object.__setattr__(self, "valuations", v)
        object.__setattr__(self, "bids", b)
        if v.ndim != 1 or v.shape != b.shape or v.size < 2:
            raise ValueError("bid table needs matching 1-d valuation and bid arrays (>= 2 knots)")
        if np.any(np.diff(v) <= 0.0) or np.any(np.diff(b) <= 0.0):
            raise ValueError("bid table must be strictly increasing in valuation and bid")

    def __len__(self):
        return self.valuations.size

    def __call__(self, v):
        return np.interp(v, self.valuations, self.bids)

    def cell_edges(self) -> np.ndarray:
        """Valuation boundaries of the knots' cells: ``len + 1`` edges, outer ones infinite."""
        mids = 0.5 * (self.valuations[1:] + self.valuations[:-1])
        return np.concatenate(([-np.inf], mids, [np.inf]))

    def grid_index(self, v) -> np.ndarray:
        mids = 0.5 * (self.valuations[1:] + self.valuations[:-1])
        return np.searchsorted(mids, v, side="left")

    def grid_bid(self, v):
        return self.bids[self.grid_index(v)]


def invert(traj: Trajectory) -> tuple[TabulatedBidFunction, TabulatedBidFunction]:
    """Turn a feasible trajectory into (discounted, undiscounted) bid tables.

    Knots pinned to a support minimum share one valuation; only the
    highest-bid one is kept so both coordinates stay strictly increasing.
    """
    if not traj.feasible:
        raise SolverError("cannot invert an infeasible trajectory")
    out = []
    for vals, role in ((traj.v1, Role.DISCOUNTED), (traj.v2, Role.UNDISCOUNTED)):
        keep = np.ones(vals.size, dtype=bool)
        keep[:-1] = vals[1:] != vals[:-1]
        v, b = vals[keep], traj.bids[keep]
        if np.any(np.diff(v) <= 0.0):
            raise SolverError("trajectory is not monotone; feasibility check was bypassed")
        out.append(TabulatedBidFunction(v, b, role))
    return out[0], out[1]


@dataclass(frozen=True)
class AuditResult:
    """Best-response gaps as fractions of the bid range: max and mean over probes."""

    max_gap1: float
    max_gap2: float
    mean_gap1: float
    mean_gap2: float
    probes: int


def _win_weights(tables, cfg, grid):
    tab1, tab2 = tables
    G1 = np.asarray(cfg.dist1.cdf(np.interp(grid, tab1.bids, tab1.valuations)))
    G2 = np.asarray(cfg.dist2.cdf(np.interp(grid, tab2.bids, tab2.valuations)))
    # an opponent bidding below the table's lowest bid has no mass
    G1 = np.where(grid < tab1.bids[0], 0.0, G1)
    G2 = np.where(grid < tab2.bids[0], 0.0, G2)
    w1 = G2 ** cfg.n
    w2 = G1 * G2 ** (cfg.n - 1)
    return w1, w2


def _argmax_bids(values, weights, grid, price_factor, chunk=256):
    best = np.empty(values.size)
    price = price_factor * grid
    for s in range(0, values.size, chunk):
        u = (values[s:s + chunk, None] - price[None, :]) * weights[None, :]
        best[s:s + chunk] = grid[np.argmax(u, axis=1)]
    return best


def best_response_audit(
    tables: tuple[TabulatedBidFunction, TabulatedBidFunction],
    cfg: SolverConfig,
    probe_count: int | None = None,
) -> AuditResult:
    """Compare each tabulated bid with the best response on the bid grid.

    Win probabilities come from the opponents' inverse bid functions and
    valuation cdfs (continuous distributions, so ties are ignored); the
    discounted bidder pays ``(1 - r)`` times their bid.  ``probe_count``
    knots are probed per role, evenly spaced; ``None`` probes every knot.
    """
    tab1, tab2 = tables
    grid = np.union1d(tab1.bids, tab2.bids)
    bid_range = grid[-1] - grid[0]
    w1, w2 = _win_weights(tables, cfg, grid)
    gaps = []
    for tab, w, factor in ((tab1, w1, 1.0 - cfg.r), (tab2, w2, 1.0)):
        if probe_count is None or probe_count >= len(tab):
            idx = np.arange(len(tab))
        else:
            if probe_count < 1:
                raise ValueError("probe_count must be >= 1")
            idx = np.unique(np.linspace(len(tab) - 1, 0, probe_count).round().astype(int))
        best = _argmax_bids(tab.valuations[idx], w, grid, factor)
        gaps.append(np.abs(best - tab.bids[idx]) / bid_range)
    return AuditResult(
        max_gap1=float(gaps[0].max()),
        max_gap2=float(gaps[1].max()),
        mean_gap1=float(gaps[0].mean()),
        mean_gap2=float(gaps[1].mean()),
        probes=int(max(g.size for g in gaps)),
    )


@dataclass
class SolveReport:
    config: SolverConfig
    b_star: float
    bid_functions: tuple[TabulatedBidFunction, TabulatedBidFunction]
    trajectory: Trajectory
    feasible: bool = True
    audit: AuditResult | None = None
    notes: list[str] = field(default_factory=list)

    # mean over probes: the max is set by the few zero-mass knots at the very
    # bottom of the bid range, where the shooting trajectory flattens out
    @property
    def best_response_gap1(self) -> float | None:
        return None if self.audit is None else self.audit.mean_gap1

    @property
    def best_response_gap2(self) -> float | None:
        return None if self.audit is None else self.audit.mean_gap2


def solve(cfg: SolverConfig, audit: bool = True, probe_count: int | None = None) -> SolveReport:
    """Find ``b*``, integrate, invert and (optionally) audit best responses."""
    b_star, traj = find_bstar(cfg)
    tables = invert(traj)
    notes = []
    if traj.clamped:
        notes.append(f"{traj.clamped} low knots pinned to the support minimum")
    result = best_response_audit(tables, cfg, probe_count) if audit else None
    return SolveReport(cfg, float(b_star), tables, traj, True, result, notes)


def write_tables_csv(tables, fh) -> None:
    """Write bid tables as ``role,valuation,bid`` rows with round-trippable floats."""
    import csv

    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["role", "valuation", "bid"])
    for tab in tables:
        for v, b in zip(tab.valuations.tolist(), tab.bids.tolist()):
            w.writerow([tab.role.value, repr(v), repr(b)])


def read_tables_csv(fh) -> tuple[TabulatedBidFunction, TabulatedBidFunction]:
    import csv

    reader = csv.DictReader(fh)
    if reader.fieldnames != ["role", "valuation", "bid"]:
        raise ValueError("bid table CSV must have header role,valuation,bid")
    rows = {Role.DISCOUNTED: ([], []), Role.UNDISCOUNTED: ([], [])}
    for row in reader:
        vals, bids = rows[Role(row["role"])]
        vals.append(float(row["valuation"]))
        bids.append(float(row["bid"]))
    return tuple(TabulatedBidFunction(np.array(v), np.array(b), role) for role, (v, b) in rows.items())
