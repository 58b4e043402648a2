"""Valuation distributions: uniform, log-normal and quantile-truncated log-normal.

All distributions are immutable and evaluate in closed form.  Array methods
accept scalars or numpy arrays; ``scalar_cdf_pdf`` returns plain-``math``
closures for the Euler integrator's inner loop, where numpy call overhead
dominates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "DistributionError",
    "Uniform",
    "LogNormal",
    "TruncatedLogNormal",
    "ValuationDistribution",
    "DegenerateFitWarning",
    "fit_lognormal_mle",
    "fit_truncated_lognormal_mle",
    "from_dict",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class DistributionError(ValueError):
    """Invalid distribution parameters or arguments."""


class DegenerateFitWarning(UserWarning):
    """A log-normal fit produced sigma == 0 (point mass)."""


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0.0) | (p > 1.0)) or np.any(np.isnan(p)):
        raise DistributionError("quantile requires p in [0, 1]")
    return p


def _phi(z):
    return _INV_SQRT2PI * np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise DistributionError(f"Uniform needs lo < hi, got ({self.lo}, {self.hi})")

    @property
    def degenerate(self) -> bool:
        return False

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def quantile(self, p):
        p = _check_prob(p)
        return self.lo + p * (self.hi - self.lo)

    def partial_mean(self, a, b):
        """Integral of ``x * pdf(x)`` over ``[a, b]`` (bounds clipped to support)."""
        a = np.clip(np.asarray(a, dtype=float), self.lo, self.hi)
        b = np.clip(np.asarray(b, dtype=float), self.lo, self.hi)
        b = np.maximum(a, b)
        return (b * b - a * a) / (2.0 * (self.hi - self.lo))

    def sample(self, rng: np.random.Generator, size):
        return rng.uniform(self.lo, self.hi, size)

    def scalar_cdf_pdf(self):
        lo, width = self.lo, self.hi - self.lo
        dens = 1.0 / width

        def cdf(x):
            u = (x - lo) / width
            return 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)

        def pdf(x):
            return dens if lo <= x <= lo + width else 0.0

        return cdf, pdf

    def to_dict(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LogNormal:
    """Log-normal with shape ``sigma`` and scale (median) ``scale``."""

    sigma: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0.0 or not math.isfinite(self.scale):
            raise DistributionError(f"LogNormal scale must be > 0, got {self.scale}")
        if not self.sigma >= 0.0 or not math.isfinite(self.sigma):
            raise DistributionError(f"LogNormal sigma must be >= 0, got {self.sigma}")

    @property
    def degenerate(self) -> bool:
        return self.sigma == 0.0

    def _require_spread(self):
        if self.degenerate:
            raise DistributionError("degenerate log-normal (sigma == 0) has no density")

    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(x, 0.0)) - math.log(self.scale)) / self.sigma

    def cdf(self, x):
        self._require_spread()
        return ndtr(self._z(x))

    def pdf(self, x):
        self._require_spread()
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        safe = np.where(pos, x, 1.0)
        z = self._z(safe)
        return np.where(pos, _phi(z) / (self.sigma * safe), 0.0)

    def quantile(self, p):
        p = _check_prob(p)
        return self.scale * np.exp(self.sigma * ndtri(p))

    def partial_mean(self, a, b):
        self._require_spread()
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        mean = self.scale * math.exp(0.5 * self.sigma**2)
        return mean * (ndtr(self._z(b) - self.sigma) - ndtr(self._z(a) - self.sigma))

    def sample(self, rng: np.random.Generator, size):
        return self.scale * np.exp(self.sigma * rng.standard_normal(size))

    def truncate(self, lower_q: float = 0.0, upper_q: float = 0.999) -> "TruncatedLogNormal":
        return TruncatedLogNormal(self.sigma, self.scale, lower_q, upper_q)

    def scalar_cdf_pdf(self):
        self._require_spread()
        log_m, s = math.log(self.scale), self.sigma
        erf, log, exp = math.erf, math.log, math.exp

        def cdf(x):
            if x <= 0.0:
                return 0.0
            return 0.5 * (1.0 + erf((log(x) - log_m) / (s * _SQRT2)))

        def pdf(x):
            if x <= 0.0:
                return 0.0
            z = (log(x) - log_m) / s
            return _INV_SQRT2PI * exp(-0.5 * z * z) / (s * x)

        return cdf, pdf

    def to_dict(self) -> dict:
        return {"kind": "lognormal", "sigma": self.sigma, "scale": self.scale}


@dataclass(frozen=True)
class TruncatedLogNormal:
    """Log-normal restricted to the parent's ``[lower_q, upper_q]`` quantile band, renormalized.

    The default keeps the whole lower tail: the equilibrium solver needs a
    finite top valuation but integrates bids all the way down to zero, which
    only matches a support that starts at zero.
    """

    sigma: float
    scale: float
    lower_q: float = 0.0
    upper_q: float = 0.999

    def __post_init__(self):
        LogNormal(self.sigma, self.scale)
        if self.sigma == 0.0:
            raise DistributionError("cannot truncate a degenerate log-normal (sigma == 0)")
        if not 0.0 <= self.lower_q < self.upper_q <= 1.0:
            raise DistributionError(
                f"need 0 <= lower_q < upper_q <= 1, got ({self.lower_q}, {self.upper_q})"
            )

    @property
    def parent(self) -> LogNormal:
        return LogNormal(self.sigma, self.scale)

    @property
    def degenerate(self) -> bool:
        return False

    @property
    def _mass(self) -> float:
        return self.upper_q - self.lower_q

    def support(self) -> tuple[float, float]:
        lo, hi = self.parent.quantile(np.array([self.lower_q, self.upper_q]))
        return (float(lo), float(hi))

    def cdf(self, x):
        u = (self.parent.cdf(x) - self.lower_q) / self._mass
        return np.clip(u, 0.0, 1.0)

    def pdf(self, x):
        lo, hi = self.support()
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, self.parent.pdf(x) / self._mass, 0.0)

    def quantile(self, p):
        p = _check_prob(p)
        return self.parent.quantile(self.lower_q + p * self._mass)

    def partial_mean(self, a, b):
        lo, hi = self.support()
        a = np.clip(np.asarray(a, dtype=float), lo, hi)
        b = np.clip(np.asarray(b, dtype=float), lo, hi)
        return self.parent.partial_mean(a, b) / self._mass

    def sample(self, rng: np.random.Generator, size):
        return self.quantile(rng.uniform(0.0, 1.0, size))

    def scalar_cdf_pdf(self):
        pcdf, ppdf = self.parent.scalar_cdf_pdf()
        lo, hi = self.support()
        q0, mass = self.lower_q, self._mass

        def cdf(x):
            if x <= lo:
                return 0.0
            if x >= hi:
                return 1.0
            return (pcdf(x) - q0) / mass

        def pdf(x):
            if x < lo or x > hi:
                return 0.0
            return ppdf(x) / mass

        return cdf, pdf

    def to_dict(self) -> dict:
        return {
            "kind": "truncated_lognormal",
            "sigma": self.sigma,
            "scale": self.scale,
            "lower_q": self.lower_q,
            "upper_q": self.upper_q,
        }


ValuationDistribution = Uniform | LogNormal | TruncatedLogNormal

_KINDS = {
    "uniform": (Uniform, {"lo", "hi"}, set()),
    "lognormal": (LogNormal, {"sigma", "scale"}, set()),
    "truncated_lognormal": (TruncatedLogNormal, {"sigma", "scale"}, {"lower_q", "upper_q"}),
}


def from_dict(record: dict) -> ValuationDistribution:
    """Build a distribution from its tagged-record form (see ``to_dict``)."""
    if not isinstance(record, dict) or "kind" not in record:
        raise DistributionError("distribution record needs a 'kind' field")
    kind = record["kind"]
    if kind not in _KINDS:
        raise DistributionError(f"unknown distribution kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls, required, optional = _KINDS[kind]
    keys = set(record) - {"kind"}
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise DistributionError(f"{kind}: missing parameter(s) {sorted(missing)}")
    if unknown:
        raise DistributionError(f"{kind}: unknown parameter(s) {sorted(unknown)}")
    try:
        params = {k: float(record[k]) for k in keys}
    except (TypeError, ValueError) as exc:
        raise DistributionError(f"{kind}: non-numeric parameter") from exc
    return cls(**params)


def _log_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DistributionError("need at least 2 samples to fit a log-normal")
    if np.any(~(x > 0.0)):
        raise DistributionError("log-normal fit requires strictly positive samples")
    return np.log(x)


def fit_lognormal_mle(samples) -> tuple[float, float]:
    """Closed-form log-normal MLE.

    Returns ``(sigma, scale)`` where ``scale = exp(mean(log x))`` and
    ``sigma`` is the population standard deviation of ``log x``.  A zero
    ``sigma`` is returned as-is with a :class:`DegenerateFitWarning`.
    """
    logs = _log_samples(samples)
    mu = float(np.mean(logs))
    sigma = float(np.sqrt(np.mean((logs - mu) ** 2)))
    if sigma == 0.0:
        warnings.warn("log-normal fit is degenerate (sigma == 0)", DegenerateFitWarning, stacklevel=2)
    return sigma, math.exp(mu)


def fit_truncated_lognormal_mle(samples, lower: float, upper: float) -> tuple[float, float]:
    """Log-normal MLE for a sample observed only inside ``[lower, upper]``.

    Maximizes the doubly-truncated normal likelihood of ``log x``.  The
    closed-form fit is used as the starting point; with ``lower=0`` and
    ``upper=inf`` the result coincides with :func:`fit_lognormal_mle`.
    """
    from scipy.optimize import minimize

    logs = _log_samples(samples)
    if not 0.0 <= lower < upper:
        raise DistributionError("need 0 <= lower < upper")
    a = math.log(lower) if lower > 0.0 else -math.inf
    b = math.log(upper) if math.isfinite(upper) else math.inf
    if logs.min() < a - 1e-12 or logs.max() > b + 1e-12:
        raise DistributionError("samples fall outside the truncation bounds")
    sigma0, scale0 = fit_lognormal_mle(samples)
    if sigma0 == 0.0:
        return sigma0, scale0
    n = logs.size
    sum_x, sum_x2 = logs.sum(), (logs * logs).sum()

    def nll(theta):
        mu, log_s = theta
        s = math.exp(log_s)
        za = (a - mu) / s
        zb = (b - mu) / s
        # log(Phi(zb) - Phi(za)) computed on the side with less cancellation
        if za > 0.0:
            mass = ndtr(-za) - ndtr(-zb)
        else:
            mass = ndtr(zb) - ndtr(za)
        if mass <= 0.0:
            return math.inf
        ss = sum_x2 - 2.0 * mu * sum_x + n * mu * mu
        return n * log_s + 0.5 * ss / (s * s) + n * math.log(mass)

    res = minimize(nll, x0=[math.log(scale0), math.log(sigma0)], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000})
    mu, log_s = res.x
    # no interior optimum (e.g. a sample flat in log space) sends sigma off to infinity
    if not res.success or abs(mu) > 700.0 or log_s > math.log(1e3 * max(sigma0, 1.0)):
        raise DistributionError(
            "truncated log-normal fit did not converge; the sample does not look log-normal"
        )
    return math.exp(log_s), math.exp(mu)
