import io

import numpy as np
import pytest

from auctiondiscounts.analytic import uniform_equilibrium_bid
from auctiondiscounts.distributions import DistributionError, LogNormal, Uniform
from auctiondiscounts.solver import (
    BracketError,
    Role,
    SingularityError,
    SolverConfig,
    TabulatedBidFunction,
    Trajectory,
    best_response_audit,
    euler_integrate,
    find_bstar,
    invert,
    ode_rhs,
    read_tables_csv,
    solve,
    write_tables_csv,
)

U01 = Uniform(0.0, 1.0)


@pytest.fixture(scope="module")
def symmetric():
    return solve(SolverConfig(U01, U01))


@pytest.fixture(scope="module")
def compensated():
    return solve(SolverConfig(Uniform(0.0, 0.8), U01, r=0.2), audit=False)


def test_ode_rhs_on_symmetric_line():
    cfg = SolverConfig(U01, U01)
    for b in (0.1, 0.4, 0.7):
        d1, d2 = ode_rhs(b, 1.25 * b, 1.25 * b, cfg)
        assert d1 == pytest.approx(1.25) and d2 == pytest.approx(1.25)


def test_ode_rhs_on_compensated_lines():
    cfg = SolverConfig(Uniform(0.0, 0.8), U01, r=0.2)
    for b in (0.1, 0.4, 0.7):
        d1, d2 = ode_rhs(b, 0.8 * 1.25 * b, 1.25 * b, cfg)
        assert d1 == pytest.approx(1.0) and d2 == pytest.approx(1.25)


def test_ode_rhs_singularity():
    cfg = SolverConfig(U01, U01, r=0.2)
    with pytest.raises(SingularityError) as info:
        ode_rhs(0.5, 0.8 * 0.5, 0.7, cfg)
    assert (info.value.b, info.value.v1, info.value.v2) == (0.5, 0.4, 0.7)
    with pytest.raises(SingularityError):
        ode_rhs(0.5, 0.7, 0.5, cfg)


def test_euler_from_true_top_bid_is_feasible():
    cfg = SolverConfig(U01, U01)
    traj = euler_integrate(0.8, cfg)
    assert traj.feasible
    assert traj.bids.size == cfg.steps + 1
    top = traj.bids >= 0.01
    assert np.allclose(traj.v2[top], 1.25 * traj.bids[top], rtol=0, atol=1e-6)


def test_euler_from_true_top_bid_reaches_zero():
    traj = euler_integrate(0.8, SolverConfig(U01, U01))
    assert abs(traj.v1[0]) < 1e-3 and abs(traj.v2[0]) < 1e-3


def test_euler_rejects_high_candidate_and_bad_input():
    cfg = SolverConfig(U01, U01)
    traj = euler_integrate(0.9, cfg)
    assert not traj.feasible
    assert traj.fail_step is not None and traj.reason
    with pytest.raises(ValueError):
        euler_integrate(0.0, cfg)


def test_find_bstar_examples(symmetric, compensated):
    assert symmetric.b_star == pytest.approx(0.8, abs=1e-4)
    assert compensated.b_star == pytest.approx(0.8, abs=1e-3)


def test_bracket_errors():
    with pytest.raises(BracketError):
        find_bstar(SolverConfig(U01, U01, bstar_bracket=(0.1, 0.2)))
    with pytest.raises(BracketError):
        find_bstar(SolverConfig(U01, U01, bstar_bracket=(0.85, 0.95)))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(U01, U01, steps=99)
    with pytest.raises(ValueError):
        SolverConfig(U01, U01, r=1.0)
    with pytest.raises(DistributionError):
        SolverConfig(LogNormal(0.4, 3.0), U01)
    with pytest.raises(DistributionError):
        SolverConfig(LogNormal(0.0, 3.0).truncate(), U01)


def test_invert_line():
    bids = np.linspace(0.0, 0.8, 101)
    traj = Trajectory(0.8, bids, 1.25 * bids, 1.25 * bids, True)
    t1, t2 = invert(traj)
    assert t1.role is Role.DISCOUNTED and t2.role is Role.UNDISCOUNTED
    v = np.linspace(0.0, 1.0, 777)
    assert np.allclose(t2(v), 0.8 * v, atol=1e-15)
    # knots are returned exactly
    assert np.array_equal(t2(t2.valuations), t2.bids)


def test_table_rejects_non_monotone():
    with pytest.raises(ValueError):
        TabulatedBidFunction(np.array([0.0, 0.5, 0.5]), np.array([0.0, 0.1, 0.2]), Role.DISCOUNTED)


def test_tables_shape(symmetric):
    for tab in symmetric.bid_functions:
        assert np.all(np.diff(tab.valuations) > 0) and np.all(np.diff(tab.bids) > 0)
        assert len(tab) <= symmetric.config.steps + 1
        assert tab.valuations[-1] == 1.0
        assert tab.bids[-1] == symmetric.b_star


def test_between_knots_matches_closed_form(symmetric):
    # over the whole valuation range, including the lowest knots
    v = np.linspace(0.0, 1.0, 200_001)
    for tab in symmetric.bid_functions:
        assert np.max(np.abs(tab(v) - 0.8 * v)) <= 2e-4


def test_error_is_confined_to_lowest_valuations(symmetric):
    # rounding in b* grows like b**-(n+1) on the way down, so only the
    # lowest knots drift off the closed form
    v = np.linspace(0.01, 1.0, 200_001)
    for tab in symmetric.bid_functions:
        assert np.max(np.abs(tab(v) - 0.8 * v)) <= 1e-6


def test_compensated_matches_closed_form(compensated):
    t1, t2 = compensated.bid_functions
    v1 = np.linspace(0.0, 0.8, 1001)
    v2 = np.linspace(0.0, 1.0, 1001)
    rng = compensated.b_star
    assert np.max(np.abs(t1(v1) - uniform_equilibrium_bid(5, 0.2, v1))) / rng < 5e-3
    assert np.max(np.abs(t2(v2) - uniform_equilibrium_bid(5, 0.0, v2))) / rng < 5e-3


def test_audit_symmetric(symmetric):
    a = symmetric.audit
    assert a.max_gap1 < 1e-3 and a.max_gap2 < 1e-3
    assert symmetric.best_response_gap1 < 1e-3 and symmetric.best_response_gap2 < 1e-3


def test_audit_single_probe_at_top(symmetric):
    a = best_response_audit(symmetric.bid_functions, symmetric.config, probe_count=1)
    assert a.probes == 1
    step = symmetric.b_star / symmetric.config.steps
    assert a.max_gap1 * symmetric.b_star <= step + 1e-15
    assert a.max_gap2 * symmetric.b_star <= step + 1e-15


def test_individual_rationality_and_dominance():
    r = 0.2
    rep = solve(SolverConfig(U01, U01, r=r, steps=2000), audit=False)
    t1, t2 = rep.bid_functions
    assert np.all((1 - r) * t1.bids <= t1.valuations)
    assert np.all(t2.bids <= t2.valuations)
    v = np.linspace(0.01, 1.0, 500)
    assert np.all(t1(v) >= t2(v))


def test_individual_rationality_lognormal():
    d = LogNormal(0.4, 3.0).truncate()
    rep = solve(SolverConfig(d, d, r=0.15, steps=2000), audit=False)
    t1, t2 = rep.bid_functions
    assert np.all(0.85 * t1.bids <= t1.valuations)
    assert np.all(t2.bids <= t2.valuations)


def test_bstar_nondecreasing_in_rate():
    tops = [
        find_bstar(SolverConfig(U01, U01, r=r, steps=1000))[0]
        for r in (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)
    ]
    assert all(b >= a for a, b in zip(tops, tops[1:]))


def test_tables_csv_round_trip(symmetric):
    buf = io.StringIO()
    write_tables_csv(symmetric.bid_functions, buf)
    assert buf.getvalue().splitlines()[0] == "role,valuation,bid"
    buf.seek(0)
    back = read_tables_csv(buf)
    for a, b in zip(symmetric.bid_functions, back):
        assert a.role is b.role
        assert np.array_equal(a.valuations, b.valuations)
        assert np.array_equal(a.bids, b.bids)
