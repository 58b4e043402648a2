"""First-price auctions with bid-augmentation and price-reduction discounts."""

from .analytic import (
    augmentation_to_reduction,
    equal_rate_penalty,
    reduction_to_augmentation,
    uniform_equilibrium_bid,
    uniform_expected_utility,
)
from .core import (
    AuctionInstance,
    AuctionResult,
    DiscountSpec,
    Form,
    Regime,
    effective_bid,
    resolve,
    virtual_valuation,
    winning_price,
)
from .distributions import LogNormal, TruncatedLogNormal, Uniform, fit_lognormal_mle
from .outcomes import AuctionOutcomeStats, integrate_outcomes, simulate_outcomes, sweep
from .solver import SolveReport, SolverConfig, TabulatedBidFunction, find_bstar, solve

__version__ = "0.1.0"
