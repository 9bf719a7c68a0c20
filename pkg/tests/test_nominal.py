import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachfilter.models import make_model
from reachfilter.nominal import (GoalDistanceCost, MpcConfig, MpcState, PriorKind, RocketLandingCost,
                                 mpc_step, rollout_cost, sample_sequences)


def rocket_config(**kw):
    kw.setdefault("cost", RocketLandingCost())
    return MpcConfig(**kw)


def test_rocket_cost_zero_at_pad_corner():
    m = make_model("rocket6")
    cfg = rocket_config(horizon_steps=1)
    for y, z in ((20, 20), (-20, 20), (20, -20), (-20, -20)):
        assert rollout_cost(m, [y, z, 0, 0, 0, 0], [[0, 0]], cfg) == 0.0


def test_rocket_cost_three_steps_by_hand():
    m = make_model("rocket6")
    dt = 0.1
    cfg = rocket_config(horizon_steps=3, dt=dt)
    # zero thrust: z stays at 100 for two stages, then drops by g dt^2
    zs = [100.0, 100.0, 100.0 - 9.81 * dt * dt]
    expected = sum(math.sqrt(400.0 + (z - 20.0) ** 2) for z in zs)
    assert rollout_cost(m, [0, 100, 0, 0, 0, 0], np.zeros((3, 2)), cfg) == pytest.approx(expected, rel=1e-14)


def test_vrocket_cost_uses_altitude_only():
    m = make_model("vrocket2")
    cfg = rocket_config(horizon_steps=1)
    assert rollout_cost(m, [20.0, 5.0], [[0.0]], cfg) == pytest.approx(20.0)  # |y| - 20 with y = 0
    assert rollout_cost(m, [20.0, 5.0], [[30.0]], cfg) == pytest.approx(50.0)


@settings(max_examples=100, deadline=None)
@given(x=st.lists(st.floats(-50, 150), min_size=6, max_size=6),
       u=st.lists(st.floats(-100, 100), min_size=2, max_size=2))
def test_more_thrust_costs_more(x, u):
    m = make_model("rocket6")
    cfg = rocket_config(horizon_steps=1)
    u = np.array(u)
    assert rollout_cost(m, x, [2 * u], cfg) >= rollout_cost(m, x, [u], cfg)


def test_rollout_cost_validation():
    m = make_model("rocket6")
    with pytest.raises(ValueError):
        rocket_config(horizon_steps=0)
    with pytest.raises(ValueError):
        rollout_cost(m, np.zeros(6), np.zeros((2, 2)), rocket_config(horizon_steps=3))
    assert rollout_cost(m, [np.inf, 0, 0, 0, 0, 0], [[0, 0]], rocket_config(horizon_steps=1)) == math.inf


def test_single_sample_takes_first_sequence():
    m = make_model("rocket6")
    cfg = rocket_config(horizon_steps=5, num_samples=1, rng_seed=4)
    first = sample_sequences(m, cfg, MpcState())[0, 0]
    u, st_ = mpc_step(m, [0, 100, 0, 0, 0, 0], 0.0, cfg)
    np.testing.assert_array_equal(u, first)
    assert st_.step == 1 and not st_.failed


def test_same_seed_same_control():
    m = make_model("rocket6")
    cfg = rocket_config(horizon_steps=10, num_samples=64, rng_seed=9)
    a, sa = mpc_step(m, [5, 80, 0.1, 0, -3, 0], 0.0, cfg)
    b, sb = mpc_step(m, [5, 80, 0.1, 0, -3, 0], 0.0, cfg)
    assert a.tobytes() == b.tobytes() and sa.previous.tobytes() == sb.previous.tobytes()
    c, _ = mpc_step(m, [5, 80, 0.1, 0, -3, 0], 0.0, rocket_config(horizon_steps=10, num_samples=64, rng_seed=10))
    assert c.tobytes() != a.tobytes()


def test_streams_differ_between_replans():
    m = make_model("vrocket2")
    cfg = rocket_config(horizon_steps=4, num_samples=8)
    s0 = sample_sequences(m, cfg, MpcState(step=0))
    s1 = sample_sequences(m, cfg, MpcState(step=1))
    assert not np.array_equal(s0, s1)


def test_all_infinite_costs_fall_back_to_zero():
    m = make_model("rocket6")
    u, st_ = mpc_step(m, [np.nan, 0, 0, 0, 0, 0], 0.0, rocket_config(horizon_steps=3, num_samples=16))
    assert u.tolist() == [0.0, 0.0] and st_.failed and st_.previous is None


def test_doubling_samples_never_worse():
    # uniform draws nest: the first K sequences of a 2K draw are the K draw
    m = make_model("rocket6")
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = np.r_[rng.uniform(-30, 30), rng.uniform(0, 120), rng.uniform(-0.3, 0.3), rng.normal(size=3)]
        seed = int(rng.integers(0, 2**32))
        best = []
        for k in (32, 64):
            cfg = rocket_config(horizon_steps=8, num_samples=k, rng_seed=seed)
            u, st_ = mpc_step(m, x, 0.0, cfg)
            best.append(rollout_cost(m, x, st_.previous, cfg))
        assert best[1] <= best[0]


@pytest.mark.parametrize("prior", list(PriorKind))
def test_outputs_within_bounds(prior):
    m = make_model("blimp4")
    cfg = MpcConfig(GoalDistanceCost((8.0, 8.0)), horizon_steps=5, num_samples=32, prior=prior, sigma=3.0)
    st_ = MpcState()
    x = np.array([1.0, 1.0, 2.0, 0.0])
    for _ in range(10):
        u, st_ = mpc_step(m, x, 0.0, cfg, st_)
        assert np.all(u >= m.u_lo) and np.all(u <= m.u_hi)
        assert np.all(st_.previous >= m.u_lo) and np.all(st_.previous <= m.u_hi)


def test_gaussian_prior_keeps_shifted_plan():
    m = make_model("vrocket2")
    cfg = rocket_config(horizon_steps=4, num_samples=8, prior=PriorKind.GAUSSIAN_AROUND_PREVIOUS)
    prev = np.array([[1.0], [2.0], [3.0], [4.0]])
    seqs = sample_sequences(m, cfg, MpcState(step=3, previous=prev))
    np.testing.assert_array_equal(seqs[0], [[2.0], [3.0], [4.0], [4.0]])


def test_blimp_turns_towards_goal():
    m = make_model("blimp4")
    goal = np.array([5.0, 5.0])
    cfg = MpcConfig(GoalDistanceCost(tuple(goal)), horizon_steps=20, dt=0.05, num_samples=4096)
    rng = np.random.default_rng(12)
    agree = total = 0
    while total < 100:
        x = np.r_[rng.uniform(0, 10, 2), 2.5, rng.uniform(-math.pi, math.pi)]
        dx = goal - x[:2]
        if np.linalg.norm(dx) < 2.0:
            continue
        err = math.remainder(math.atan2(dx[1], dx[0]) - x[3], 2 * math.pi)
        if abs(err) < math.radians(15) or abs(err) > math.radians(165):
            continue
        u, _ = mpc_step(m, x, 0.0, MpcConfig(cfg.cost, 20, 0.05, 4096, rng_seed=total))
        agree += np.sign(u[1]) * math.sin(err) > 0
        total += 1
    assert agree >= 95
