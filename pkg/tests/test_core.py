import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctiondiscounts.core import (
    AuctionError,
    AuctionInstance,
    DiscountSpec,
    Form,
    Regime,
    effective_bid,
    resolve,
    resolve_batch,
    virtual_valuation,
    winning_price,
)


def test_effective_bid_examples():
    assert effective_bid(2.0, 0.05, Regime.PRE, Form.MULTIPLICATIVE) == pytest.approx(2.1)
    assert effective_bid(2.0, 0.05, Regime.POST, Form.MULTIPLICATIVE) == 2.0
    assert effective_bid(3.0, 0.5, Regime.PRE, Form.ADDITIVE) == 3.5
    assert effective_bid(3.0, 0.5, Regime.POST, Form.ADDITIVE) == 3.0


def test_effective_bid_rejects_negative_bid():
    with pytest.raises(AuctionError):
        effective_bid(-0.1, 0.0, Regime.PRE, Form.ADDITIVE)


def test_winning_price_examples():
    assert winning_price(2.0, 0.05, Regime.POST, Form.MULTIPLICATIVE) == pytest.approx(1.9)
    assert winning_price(2.0, 0.10, Regime.PRE, Form.MULTIPLICATIVE) == 2.0
    # additive reduction larger than the bid floors at zero
    assert winning_price(0.3, 0.5, Regime.POST, Form.ADDITIVE) == 0.0
    assert winning_price(0.8, 0.5, Regime.POST, Form.ADDITIVE) == pytest.approx(0.3)


def test_resolve_two_way_tie():
    res = resolve(AuctionInstance((1.0, 1.0), (0.5, 0.5), DiscountSpec.none(2)))
    assert res.win_probability == (0.5, 0.5)
    assert res.utility == (0.25, 0.25)


def test_resolve_pre_multiplicative():
    spec = DiscountSpec(Regime.PRE, Form.MULTIPLICATIVE, (0.05, 0.0))
    res = resolve(AuctionInstance((1.0, 1.0), (0.50, 0.52), spec))
    # effective bids 0.525 vs 0.52
    assert res.win_probability == (1.0, 0.0)
    assert res.price[0] == 0.5
    assert res.utility[0] == pytest.approx(0.5)
    assert res.utility[1] == 0.0


def test_resolve_post_multiplicative():
    spec = DiscountSpec(Regime.POST, Form.MULTIPLICATIVE, (0.05, 0.0))
    res = resolve(AuctionInstance((1.0, 1.0), (0.52, 0.50), spec))
    assert res.win_probability == (1.0, 0.0)
    assert res.price[0] == pytest.approx(0.494)
    assert res.utility[0] == pytest.approx(0.506)


def test_resolve_errors():
    with pytest.raises(AuctionError):
        resolve(AuctionInstance((), (), DiscountSpec.none(0)))
    with pytest.raises(AuctionError):
        AuctionInstance((1.0, 1.0), (0.5,), DiscountSpec.none(2))
    with pytest.raises(AuctionError):
        DiscountSpec(Regime.POST, Form.MULTIPLICATIVE, (1.0,))
    with pytest.raises(AuctionError):
        DiscountSpec(Regime.PRE, Form.ADDITIVE, (-1.0,))


def test_virtual_valuation_examples():
    assert virtual_valuation(1.0, 0.8, 0.25, Regime.POST) == pytest.approx(1.2)
    assert virtual_valuation(1.0, 0.8, 1 / 3, Regime.PRE) == pytest.approx(1.0 + 0.8 * 4 / 3 * 0.25)
    assert virtual_valuation(1.0, 0.8, 0.0, Regime.POST) == 1.0
    with pytest.raises(AuctionError):
        virtual_valuation(1.0, 0.8, 0.1, Regime.POST, Form.ADDITIVE)


@pytest.mark.parametrize("regime", list(Regime))
def test_virtual_valuation_gives_undiscounted_utility(regime):
    # utility with the discount == plain first-price utility at the virtual valuation
    v, b, amt = 1.0, 0.8, 0.2
    spec = DiscountSpec(regime, Form.MULTIPLICATIVE, (amt, 0.0))
    res = resolve(AuctionInstance((v, 0.5), (b, 0.1), spec))
    eff = effective_bid(b, amt, regime, Form.MULTIPLICATIVE)
    vv = virtual_valuation(v, b, amt, regime)
    assert res.utility[0] == pytest.approx(vv - eff)


def test_win_probability_sums_to_one_for_every_tie_size():
    # each entry is the double nearest 1/k; their correctly rounded sum is
    # exactly 1 for every k up to 48, a naive running sum may be 1 ulp short
    for k in range(1, 41):
        prob, _, _ = resolve_batch(np.ones((1, k)), np.ones((1, k)), 0.0, Regime.PRE, Form.ADDITIVE)
        assert math.fsum(prob.ravel()) == 1.0
        assert abs(prob.sum() - 1.0) <= np.spacing(1.0)


@st.composite
def instances(draw):
    k = draw(st.integers(1, 7))
    level = st.integers(0, 8).map(lambda x: x / 8)
    v = draw(st.lists(st.integers(1, 64).map(lambda x: x / 16), min_size=k, max_size=k))
    b = draw(st.lists(level, min_size=k, max_size=k))
    r = draw(st.lists(st.integers(0, 3).map(lambda x: x / 4), min_size=k, max_size=k))
    return np.array([v]), np.array([b]), np.array([r])


@given(instances())
def test_tie_probabilities(inst):
    v, b, r = inst
    prob, _, _ = resolve_batch(v, b, r, Regime.PRE, Form.ADDITIVE)
    k = int((prob > 0).sum())
    assert math.fsum(prob.ravel()) == 1.0
    assert set(prob.ravel().tolist()) <= {0.0, 1.0 / k}


@given(instances(), st.sampled_from(list(Form)))
def test_post_discount_is_allocation_neutral(inst, form):
    v, b, r = inst
    p_post, _, _ = resolve_batch(v, b, r, Regime.POST, form)
    p_none, _, _ = resolve_batch(v, b, 0.0, Regime.PRE, Form.ADDITIVE)
    assert np.array_equal(p_post, p_none)


@settings(max_examples=200)
@given(instances(), st.sampled_from([0.5, 2.0, 4.0, 0.125]), st.sampled_from(list(Regime)))
def test_scale_covariance_additive(inst, c, regime):
    # powers of two keep the scaling exact
    v, b, r = inst
    p1, _, u1 = resolve_batch(v, b, r, regime, Form.ADDITIVE)
    p2, _, u2 = resolve_batch(c * v, c * b, c * r, regime, Form.ADDITIVE)
    assert np.array_equal(p1, p2)
    assert np.allclose(c * u1, u2, rtol=0, atol=1e-15)


@given(instances(), st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.sampled_from(list(Regime)))
def test_scale_covariance_multiplicative(inst, c, regime):
    v, b, r = inst
    p1, _, u1 = resolve_batch(v, b, r, regime, Form.MULTIPLICATIVE)
    p2, _, u2 = resolve_batch(c * v, c * b, r, regime, Form.MULTIPLICATIVE)
    assert np.array_equal(p1, p2)
    assert np.allclose(c * u1, u2, rtol=1e-14, atol=0)


@given(instances(), st.floats(0.1, 10.0))
def test_scale_covariance_any_factor(inst, c):
    # without ties a generic factor cannot flip the winner
    v, b, r = inst
    b = b + np.arange(b.shape[1]) / 1024
    p1, _, u1 = resolve_batch(v, b, r, Regime.POST, Form.MULTIPLICATIVE)
    p2, _, u2 = resolve_batch(c * v, c * b, r, Regime.POST, Form.MULTIPLICATIVE)
    assert np.array_equal(p1, p2)
    assert np.allclose(c * u1, u2, rtol=1e-12, atol=1e-12)
