"""Tests for the small-network transient lattice oracle."""

import numpy as np
import pytest

from fluidlb import queue_tail_marginals


def test_single_server_reaches_mm1_stationary():
    # One server with d picks of itself is a plain M/M/1 queue; by
    # t=200 the transient is long gone and P(X >= l) = rho^l.
    res = queue_tail_marginals(1, 0.5, [200.0], cap=40, max_level=3)
    assert np.all(res.boundary_mass < 1e-8)
    expect = np.array([0.5, 0.25, 0.125])
    assert np.allclose(res.tails[0], expect, atol=1e-9)


def test_pure_death_matches_exponential_decay():
    # No arrivals: each initially busy server empties after an
    # exponential service time, so P(X >= 1) = exp(-t) exactly.
    res = queue_tail_marginals(2, 0.0, [1.0, 2.0], cap=5, max_level=2)
    assert np.allclose(res.tails[:, 0], np.exp(-np.array([1.0, 2.0])),
                       atol=1e-10)
    # nothing can climb past the single starting job
    assert np.all(res.tails[:, 1] == 0.0)


def test_random_routing_marginal_is_mm1():
    # With d=1 the picks ignore queue lengths, so each server is an
    # independent M/M/1 and the two-server marginal must match the
    # one-server run at every time.
    times = [0.5, 1.0, 3.0]
    one = queue_tail_marginals(1, 0.5, times, cap=35, d=1)
    two = queue_tail_marginals(2, 0.5, times, cap=35, d=1)
    assert np.allclose(one.tails, two.tails, atol=1e-10)


def test_sqd_beats_random_routing():
    res_d1 = queue_tail_marginals(2, 0.5, [5.0], cap=35, d=1)
    res_d2 = queue_tail_marginals(2, 0.5, [5.0], cap=35, d=2)
    # joining the shorter of two picks thins the upper tail
    assert res_d2.tails[0, 1] < res_d1.tails[0, 1]
    assert res_d2.tails[0, 2] < res_d1.tails[0, 2]


def test_two_server_reference_values():
    # Regression pins for the two-server d=2 network at rate 0.5,
    # one job per queue at t=0.  Values frozen from a cap-60 run and
    # cross-checked against direct expm on the dense generator.
    res = queue_tail_marginals(2, 0.5, [1.0, 2.0, 5.0], cap=30)
    assert res.tails[0, 0] == pytest.approx(0.5787522608446836, abs=1e-12)
    ref = np.array([
        [0.5788, 0.1709, 0.0242],
        [0.5093, 0.1812, 0.0426],
        [0.4919, 0.1861, 0.0585],
    ])
    assert np.allclose(res.tails, ref, atol=5e-5)


def test_cap_insensitivity():
    a = queue_tail_marginals(2, 0.5, [5.0], cap=20)
    b = queue_tail_marginals(2, 0.5, [5.0], cap=30)
    assert np.allclose(a.tails, b.tails, atol=1e-10)


def test_three_servers_run_and_interleave():
    # The three-server tail at a fixed level sits between the one- and
    # two-server values (finite-size effect shrinks toward mean field).
    t = [2.0]
    t1 = queue_tail_marginals(1, 0.5, t, cap=25).tails[0, 1]
    t2 = queue_tail_marginals(2, 0.5, t, cap=25).tails[0, 1]
    t3 = queue_tail_marginals(3, 0.5, t, cap=12).tails[0, 1]
    assert t3 < t2 < t1


def test_tiny_cap_trips_boundary_guard():
    with pytest.raises(RuntimeError):
        queue_tail_marginals(2, 0.9, [50.0], cap=3)


def test_input_validation():
    with pytest.raises(ValueError):
        queue_tail_marginals(0, 0.5, [1.0])
    with pytest.raises(ValueError):
        queue_tail_marginals(4, 0.5, [1.0])
    with pytest.raises(ValueError):
        queue_tail_marginals(2, -0.1, [1.0])
    with pytest.raises(ValueError):
        queue_tail_marginals(2, 0.5, [[1.0]])
    with pytest.raises(ValueError):
        queue_tail_marginals(2, 0.5, [-1.0])
    with pytest.raises(ValueError):
        queue_tail_marginals(2, 0.5, [1.0], cap=4, jobs_per_queue=5)


def test_start_state_and_zero_time():
    # at t=0 the distribution is the deterministic start state
    res = queue_tail_marginals(2, 0.5, [0.0], cap=10, jobs_per_queue=2)
    assert np.allclose(res.tails[0], [1.0, 1.0, 0.0], atol=1e-12)
