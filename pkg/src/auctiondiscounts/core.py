"""First-price auction mechanics under pre- and post-auction discounts.

A discount is either a *bid augmentation* (pre-auction: the bid is inflated
for winner selection only) or a *price reduction* (post-auction: winner
selection uses the raw bid, the winner pays less).  Each comes in an
additive and a multiplicative form.  Ties on effective bids split the win
probability evenly; effective bids are compared exactly, with no epsilon.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AuctionError",
    "Regime",
    "Form",
    "DiscountSpec",
    "AuctionInstance",
    "AuctionResult",
    "effective_bid",
    "winning_price",
    "resolve",
    "resolve_batch",
    "virtual_valuation",
]


class AuctionError(ValueError):
    """Malformed auction input (negative bids, mismatched lengths, ...)."""


class Regime(enum.Enum):
    PRE = "pre"
    POST = "post"


class Form(enum.Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class DiscountSpec:
    """Discount mechanism: one regime and form shared by all bidders, per-bidder amounts.

    ``amounts[i]`` is a currency amount for additive discounts, a rate for
    multiplicative ones (augmentation ``a >= 0`` or reduction ``r`` in
    ``[0, 1)``).  A bidder without a discount has amount 0.
    """

    regime: Regime
    form: Form
    amounts: tuple[float, ...] = field(default=())

    def __post_init__(self):
        amounts = tuple(float(a) for a in self.amounts)
        object.__setattr__(self, "amounts", amounts)
        if any(not np.isfinite(a) or a < 0.0 for a in amounts):
            raise AuctionError("discount amounts must be finite and >= 0")
        if self.regime is Regime.POST and self.form is Form.MULTIPLICATIVE:
            if any(a >= 1.0 for a in amounts):
                raise AuctionError("price reduction rates must lie in [0, 1)")

    @classmethod
    def none(cls, n_bidders: int) -> "DiscountSpec":
        return cls(Regime.PRE, Form.ADDITIVE, (0.0,) * n_bidders)

    def __len__(self):
        return len(self.amounts)


@dataclass(frozen=True)
class AuctionInstance:
    valuations: tuple[float, ...]
    bids: tuple[float, ...]
    discount: DiscountSpec

    def __post_init__(self):
        object.__setattr__(self, "valuations", tuple(float(v) for v in self.valuations))
        object.__setattr__(self, "bids", tuple(float(b) for b in self.bids))
        n = len(self.valuations)
        if len(self.bids) != n or len(self.discount) != n:
            raise AuctionError(
                f"bidder counts differ: {n} valuations, {len(self.bids)} bids, "
                f"{len(self.discount)} discount amounts"
            )


@dataclass(frozen=True)
class AuctionResult:
    win_probability: tuple[float, ...]
    price: tuple[float, ...]
    utility: tuple[float, ...]


def _check_bid(bid):
    arr = np.asarray(bid, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise AuctionError("bids must be >= 0")


def effective_bid(bid, amount, regime: Regime, form: Form):
    """Bid used for winner selection. Post-auction discounts leave it unchanged."""
    _check_bid(bid)
    if regime is Regime.POST:
        return bid
    if form is Form.MULTIPLICATIVE:
        return bid * (1.0 + amount)
    return bid + amount


def winning_price(bid, amount, regime: Regime, form: Form):
    """Price a bidder pays if they win.

    Additive price reductions floor at zero; equilibrium bids satisfy
    ``bid >= amount`` so the floor never binds there.
    """
    _check_bid(bid)
    if regime is Regime.PRE:
        return bid
    if form is Form.MULTIPLICATIVE:
        return bid * (1.0 - amount)
    return np.maximum(bid - amount, 0.0) if isinstance(bid, np.ndarray) else max(bid - amount, 0.0)


def resolve_batch(valuations, bids, amounts, regime: Regime, form: Form):
    """Vectorized :func:`resolve` over a batch of auctions.

    All array arguments have shape ``(n_auctions, n_bidders)`` (``amounts``
    may also be ``(n_bidders,)``).  Returns ``(win_probability, price,
    utility)`` arrays of the same shape.
    """
    v = np.asarray(valuations, dtype=float)
    b = np.asarray(bids, dtype=float)
    amt = np.broadcast_to(np.asarray(amounts, dtype=float), b.shape)
    if v.shape != b.shape or b.ndim != 2:
        raise AuctionError("valuations and bids must share a 2-d (auctions, bidders) shape")
    if b.shape[1] == 0:
        raise AuctionError("an auction needs at least one bidder")
    eff = effective_bid(b, amt, regime, form)
    top = eff.max(axis=1, keepdims=True)
    winners = eff == top
    k = winners.sum(axis=1, keepdims=True)
    prob = winners / k
    price = winning_price(b, amt, regime, form)
    utility = prob * (v - price)
    return prob, price, utility


def resolve(instance: AuctionInstance) -> AuctionResult:
    """Win probabilities (1/k split over k tied maxima), prices and expected utilities."""
    if len(instance.valuations) == 0:
        raise AuctionError("an auction needs at least one bidder")
    d = instance.discount
    prob, price, utility = resolve_batch(
        [instance.valuations], [instance.bids], d.amounts, d.regime, d.form
    )
    return AuctionResult(tuple(prob[0].tolist()), tuple(price[0].tolist()), tuple(utility[0].tolist()))


def virtual_valuation(v, bid, amount, regime: Regime, form: Form = Form.MULTIPLICATIVE):
    """Valuation that makes a discounted bidder's utility look undiscounted.

    Price reduction ``r``: ``v + bid * r``.  Bid augmentation ``a``:
    ``v + bid*(1+a) * a/(1+a)``, written in terms of the augmented bid.
    Only multiplicative discounts have a virtual valuation.
    """
    if form is not Form.MULTIPLICATIVE:
        raise AuctionError("virtual valuations are defined for multiplicative discounts only")
    _check_bid(bid)
    if regime is Regime.POST:
        return v + bid * amount
    augmented = bid * (1.0 + amount)
    return v + augmented * (amount / (1.0 + amount))
