"""Structural estimation of valuation distributions from first-price bid logs.

Pipeline: stream ``auction_id,bidder_class,bid`` rows, estimate each class's
bid distribution with a Gaussian kernel, build the distribution of the
highest opposing bid, invert each bidder's first-order condition to get a
pseudo-valuation per bid (Guerre-Perrigne-Vuong), trim, and fit a
log-normal per class by maximum likelihood.

The discounted class faces a post-auction price reduction ``r``, so its
first-order condition is that of ``(v - (1 - r) b) M(b)``::

    v = (1 - r) (b + M(b) / M'(b))

and the undiscounted class uses the ``r = 0`` case.
"""

from __future__ import annotations

import csv
import enum
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve
from scipy.special import ndtr

from .distributions import fit_lognormal_mle, fit_truncated_lognormal_mle

__all__ = [
    "EstimationError",
    "HeaderError",
    "BidderClass",
    "BidRecord",
    "RowError",
    "EstimationConfig",
    "BidDensity",
    "ClassFit",
    "EstimationResult",
    "iter_records",
    "ingest",
    "collect_bids",
    "silverman_bandwidth",
    "estimate_bid_density",
    "OpposingMax",
    "opposing_max",
    "pseudo_value",
    "foc_residual",
    "run_estimation",
]

HEADER = ["auction_id", "bidder_class", "bid"]


class EstimationError(ValueError):
    pass


class HeaderError(EstimationError):
    """The bid CSV lacks the required header row."""


class BidderClass(enum.Enum):
    DISCOUNTED = "discounted"
    OTHER = "other"


@dataclass(frozen=True, slots=True)
class BidRecord:
    auction_id: str
    bidder_class: BidderClass
    bid: float


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


def iter_records(fh, errors: list[RowError] | None = None) -> Iterator[BidRecord]:
    """Stream records from a CSV file object, one row at a time.

    Bad rows are appended to ``errors`` (with 1-based line numbers) and
    skipped.  A missing or wrong header raises :class:`HeaderError`.
    """
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != HEADER:
        raise HeaderError(f"bid CSV must start with header {','.join(HEADER)}; got {header!r}")
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            _add(errors, line, f"expected 3 fields, got {len(row)}")
            continue
        auction_id, cls, raw = (x.strip() for x in row)
        try:
            bidder_class = BidderClass(cls.lower())
        except ValueError:
            _add(errors, line, f"unknown bidder_class {cls!r} (expected discounted/other)")
            continue
        try:
            bid = float(raw)
        except ValueError:
            _add(errors, line, f"unparseable bid {raw!r}")
            continue
        if not (bid > 0.0 and math.isfinite(bid)):
            _add(errors, line, f"bid must be positive, got {raw}")
            continue
        yield BidRecord(auction_id, bidder_class, bid)


def _add(errors, line, message):
    if errors is not None:
        errors.append(RowError(line, message))


def ingest(fh) -> tuple[list[BidRecord], list[RowError]]:
    errors: list[RowError] = []
    records = list(iter_records(fh, errors))
    return records, errors


def collect_bids(records: Iterable[BidRecord]) -> dict[BidderClass, np.ndarray]:
    """Per-class bid arrays, in input order."""
    out: dict[BidderClass, list[float]] = {c: [] for c in BidderClass}
    for rec in records:
        out[rec.bidder_class].append(rec.bid)
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}


@dataclass(frozen=True)
class EstimationConfig:
    rate: float = 0.05
    bandwidth: float | None = None
    n_total: int = 5
    trim: tuple[float, float] = (0.01, 0.99)
    grid_size: int = 1 << 14

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise EstimationError("discount rate must lie in [0, 1)")
        if int(self.n_total) != self.n_total or self.n_total < 2:
            raise EstimationError("n_total must be an integer >= 2")
        lo, hi = self.trim
        if not 0.0 <= lo < hi <= 1.0:
            raise EstimationError("trim quantiles must satisfy 0 <= lo < hi <= 1")
        if self.bandwidth is not None and not self.bandwidth > 0.0:
            raise EstimationError("bandwidth must be > 0")


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


@dataclass
class BidDensity:
    """Kernel estimate of one class's bid distribution.

    ``cdf`` is the kernel-smoothed cdf and ``pdf`` its exact derivative
    (both from one cubic spline on a fine grid), so the pair is internally
    consistent; ``ecdf`` is the plain empirical cdf.
    """

    samples: np.ndarray
    bandwidth: float
    _spline: CubicSpline = field(repr=False)
    _dspline: object = field(repr=False)
    lo: float = 0.0
    hi: float = 0.0

    def ecdf(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.samples.size

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        inner = np.clip(self._spline(np.clip(x, self.lo, self.hi)), 0.0, 1.0)
        return np.where(x <= self.lo, 0.0, np.where(x >= self.hi, 1.0, inner))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inner = np.maximum(self._dspline(np.clip(x, self.lo, self.hi)), 0.0)
        return np.where((x <= self.lo) | (x >= self.hi), 0.0, inner)


def estimate_bid_density(samples, bandwidth: float | None = None, grid_size: int = 1 << 14) -> BidDensity:
    """Gaussian KDE via linear binning and FFT convolution.

    The smoothed cdf ``mean(Phi((x - X_i)/h))`` is evaluated on a grid of
    ``grid_size`` points spanning the sample +- 6 bandwidths and splined.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 100:
        raise EstimationError(f"need at least 100 bids per class, got {x.size}")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0.0:
        raise EstimationError("bid sample has zero spread; cannot estimate a density")
    lo, hi = x[0] - 6.0 * h, x[-1] + 6.0 * h
    grid = np.linspace(lo, hi, grid_size)
    dx = grid[1] - grid[0]
    # linear binning
    pos = (x - lo) / dx
    left = np.floor(pos).astype(int)
    frac = pos - left
    counts = np.bincount(left, 1.0 - frac, minlength=grid_size)
    counts += np.bincount(np.minimum(left + 1, grid_size - 1), frac, minlength=grid_size)
    offsets = dx * np.arange(-(grid_size - 1), grid_size)
    cdf_kernel = ndtr(offsets / h)
    G = fftconvolve(counts, cdf_kernel, mode="full")[grid_size - 1: 2 * grid_size - 1] / x.size
    G = np.clip(G, 0.0, 1.0)
    G[0], G[-1] = 0.0, 1.0
    spline = CubicSpline(grid, G)
    return BidDensity(x, h, spline, spline.derivative(), lo, hi)


@dataclass
class OpposingMax:
    """Cdf and density of the highest opposing bid for one bidder class."""

    cdf: object
    pdf: object


def opposing_max(disc: BidDensity, other: BidDensity, n_total: int, facing: BidderClass) -> OpposingMax:
    """Distribution of the top opposing bid, assuming independent bids.

    Each auction has one discounted bidder and ``n_total - 1`` others.  The
    discounted bidder faces ``n_total - 1`` others; an undiscounted bidder
    faces the discounted bidder and ``n_total - 2`` others.
    """
    k = n_total - 1
    if facing is BidderClass.DISCOUNTED:
        def cdf(b):
            return other.cdf(b) ** k

        def pdf(b):
            return k * other.cdf(b) ** (k - 1) * other.pdf(b)
    else:
        m = n_total - 2

        def cdf(b):
            return disc.cdf(b) * other.cdf(b) ** m

        def pdf(b):
            G2 = other.cdf(b)
            dens = disc.pdf(b) * G2**m
            if m > 0:
                dens = dens + m * disc.cdf(b) * G2 ** (m - 1) * other.pdf(b)
            return dens
    return OpposingMax(cdf, pdf)


def pseudo_value(b, M, M_prime, r: float = 0.0):
    """Valuation for which bid ``b`` satisfies the first-order condition.

    ``M``/``M_prime`` are the opposing-max cdf and density at ``b`` (arrays
    allowed).  Entries with ``M_prime <= 0`` come back as ``nan``.
    """
    b = np.asarray(b, dtype=float)
    M = np.asarray(M, dtype=float)
    Mp = np.asarray(M_prime, dtype=float)
    ok = Mp > 0.0
    ratio = np.divide(M, Mp, out=np.full(np.broadcast(M, Mp).shape, np.nan), where=ok)
    return (1.0 - r) * (b + ratio)


def foc_residual(v, b, opp: OpposingMax, r: float = 0.0, rel_step: float = 1e-6):
    """Central-difference derivative of ``(v - (1-r) b') M(b')`` at ``b' = b``.

    Normalized by ``(1 - r) M(b)``, the size of either term of the derivative.
    """
    b = np.asarray(b, dtype=float)
    h = rel_step * np.maximum(np.abs(b), 1.0)
    c = 1.0 - r

    def utility(x):
        return (v - c * x) * opp.cdf(x)

    d = (utility(b + h) - utility(b - h)) / (2.0 * h)
    return d / (c * opp.cdf(b))


@dataclass
class ClassFit:
    bidder_class: BidderClass
    sigma: float
    scale: float
    sample_count: int
    trimmed_count: int
    non_monotone: int
    bandwidth: float
    pseudo_values: np.ndarray = field(repr=False)
    bids: np.ndarray = field(repr=False)
    max_foc_residual: float = 0.0

    def summary(self) -> dict:
        return {
            "class": self.bidder_class.value,
            "sigma": self.sigma,
            "m": self.scale,
            "sample_count": self.sample_count,
            "trimmed_count": self.trimmed_count,
            "non_monotone": self.non_monotone,
            "bandwidth": self.bandwidth,
            "max_foc_residual": self.max_foc_residual,
        }


@dataclass
class EstimationResult:
    config: EstimationConfig
    fits: dict[BidderClass, ClassFit]

    def summary(self) -> dict:
        return {
            "rate": self.config.rate,
            "n_total": self.config.n_total,
            "trim": list(self.config.trim),
            "classes": [self.fits[c].summary() for c in BidderClass],
        }

    def write_pseudo_values(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bidder_class", "bid", "pseudo_value"])
        for c in BidderClass:
            f = self.fits[c]
            for b, v in zip(f.bids.tolist(), f.pseudo_values.tolist()):
                w.writerow([c.value, repr(b), repr(v)])


def _fit_class(cls, bids, opp, cfg, rate, bandwidth) -> ClassFit:
    lo_q, hi_q = cfg.trim
    order = np.argsort(bids, kind="stable")
    b = bids[order]
    n = b.size
    keep = np.ones(n, dtype=bool)
    if lo_q > 0.0 or hi_q < 1.0:
        b_lo, b_hi = np.quantile(b, [lo_q, hi_q])
        keep &= (b >= b_lo) & (b <= b_hi)
    v = pseudo_value(b, opp.cdf(b), opp.pdf(b), rate)
    keep &= np.isfinite(v) & (v > 0.0)
    # pseudo-values must rise with the bid; drop records that fall back
    idx = np.flatnonzero(keep)
    running = np.maximum.accumulate(v[idx])
    rising = np.ones(idx.size, dtype=bool)
    rising[1:] = v[idx][1:] > running[:-1]
    non_monotone = int((~rising).sum())
    keep[idx[~rising]] = False
    vals, kept_bids = v[keep], b[keep]
    if vals.size < 2:
        raise EstimationError(f"{cls.value}: fewer than 2 pseudo-values survive trimming")
    if lo_q > 0.0 or hi_q < 1.0:
        sigma, scale = fit_truncated_lognormal_mle(vals, vals.min(), vals.max())
    else:
        sigma, scale = fit_lognormal_mle(vals)
    resid = foc_residual(vals, kept_bids, opp, rate)
    return ClassFit(
        bidder_class=cls,
        sigma=sigma,
        scale=scale,
        sample_count=int(vals.size),
        trimmed_count=int(n - vals.size),
        non_monotone=non_monotone,
        bandwidth=float(bandwidth),
        pseudo_values=vals,
        bids=kept_bids,
        max_foc_residual=float(np.max(np.abs(resid))),
    )


def run_estimation(
    records: Iterable[BidRecord] | Mapping[BidderClass, np.ndarray],
    cfg: EstimationConfig = EstimationConfig(),
) -> EstimationResult:
    """Recover per-class log-normal valuation parameters from bids.

    ``records`` may be bid records or a ready ``{class: bids}`` mapping.
    Bids outside each class's ``cfg.trim`` quantiles are dropped before the
    fit, which then accounts for the truncation.
    """
    bids = dict(records) if isinstance(records, Mapping) else collect_bids(records)
    for c in BidderClass:
        if c not in bids or np.asarray(bids[c]).size == 0:
            raise EstimationError(f"no bids for class {c.value!r}")
    dens = {
        c: estimate_bid_density(bids[c], cfg.bandwidth, cfg.grid_size) for c in BidderClass
    }
    fits = {}
    for c in BidderClass:
        opp = opposing_max(dens[BidderClass.DISCOUNTED], dens[BidderClass.OTHER], cfg.n_total, c)
        rate = cfg.rate if c is BidderClass.DISCOUNTED else 0.0
        fits[c] = _fit_class(c, np.asarray(bids[c], dtype=float), opp, cfg, rate, dens[c].bandwidth)
    return EstimationResult(cfg, fits)
