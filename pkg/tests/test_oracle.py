import json
from fractions import Fraction

import numpy as np
import pytest

from guardstrength import corpus
from guardstrength import expectation as E
from guardstrength.chain import explore, solve_exact
from guardstrength.errors import InfiniteReward
from guardstrength.oracle import (
    CUTOFF,
    TERMINATED,
    estimate_wp,
    simulate,
    simulate_chain,
    trial_generator,
)
from guardstrength.parser import parse_expectation, parse_program
from guardstrength.strengthen import apply_strengthening, make_box_strengthening, restricted_post
from guardstrength.syntax import State, eval_guard

from helpers import brw, ruin

HIT0 = parse_expectation("[n <= 0]")


def test_skip_terminates_immediately():
    out = simulate(parse_program("skip"), State(n=3), 100, seed=1)
    assert out.status == TERMINATED and out.final == State(n=3) and out.steps == 0


def test_diverge_is_cut_off():
    out = simulate(parse_program("diverge"), State(n=0), 100, seed=1)
    assert out.status == CUTOFF and out.final is None


def test_simulate_deterministic():
    loop = brw(20)
    a = [simulate(loop, State(n=5), 1000, seed=9, trial=t) for t in range(50)]
    b = [simulate(loop, State(n=5), 1000, seed=9, trial=t) for t in range(50)]
    assert a == b
    assert len({o.steps for o in a}) > 1


def test_final_state_violates_guard():
    loop = brw(12)
    for t in range(200):
        out = simulate(loop, State(n=6), 10**4, seed=2, trial=t)
        assert out.status == TERMINATED and not eval_guard(loop.guard, out.final)


def test_trial_streams_are_independent_of_order():
    u = [trial_generator(4, t).random() for t in range(5)]
    assert u[3] == trial_generator(4, 3).random()
    assert len(set(u)) == 5
    with pytest.raises(ValueError):
        trial_generator(-1, 0)


def test_zero_post_has_mean_zero():
    est = estimate_wp(brw(10), E.ZERO, State(n=1), 500, 1000, seed=3)
    assert est.mean == 0 and est.half_width == 0


def test_estimate_reproducible_to_the_byte():
    a = estimate_wp(brw(10), HIT0, State(n=2), 400, 1000, seed=11)
    b = estimate_wp(brw(10), HIT0, State(n=2), 400, 1000, seed=11)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    c = estimate_wp(brw(10), HIT0, State(n=2), 400, 1000, seed=12)
    assert c.mean != a.mean


def test_infinite_post_rejected():
    with pytest.raises(InfiniteReward):
        estimate_wp(parse_program("n := 0"), parse_expectation("[n = 0] * inf"), State(n=1), 3, 10, seed=0)


def test_cutoff_counts_as_zero():
    c = parse_program("{n := 0} [1/2] {diverge}")
    est = estimate_wp(c, E.ONE, State(n=1), 2000, 50, seed=5)
    assert est.cutoff_fraction + est.mean == pytest.approx(1.0)
    assert est.consistent_with(Fraction(1, 2))


def test_walk_agrees_with_exact_solve():
    loop = brw(10)
    exact = solve_exact(explore(loop, [State(n=1)]), HIT0).value(State(n=1))
    assert exact == ruin(1, 10)
    est = estimate_wp(loop, HIT0, State(n=1), 10**5, 10**4, seed=2024)
    assert est.cutoff_fraction == 0
    assert est.consistent_with(exact)


def test_continuous_walk_above_reported_lower_bound():
    e = corpus.load("continuous")
    M = 20
    loop = apply_strengthening(e.loop, make_box_strengthening(e.loop.guard, [("n", "<", M)]))
    f = parse_expectation("[n <= 0] * b")
    est = estimate_wp(loop, f, State(n=1, b=0), 10**5, 10**4, seed=7, signed=True)
    bound = (0 + Fraction(1, 2) * 1) * (1 - Fraction(1, M))
    assert bound == Fraction(19, 40)
    assert est.lower_consistent(bound)


def test_uniform_samples_are_in_range():
    c = parse_program("x :~ uniform(2, 3)")
    xs = [simulate(c, State(x=0), 10, seed=1, trial=t).final["x"] for t in range(200)]
    assert all(isinstance(x, Fraction) and 2 <= x <= 3 for x in xs)
    assert all(x.denominator & (x.denominator - 1) == 0 for x in xs)  # dyadic


# ---------------------------------------------------------------- bias and agreement

def _instance(name, M, init):
    e = corpus.load(name)
    loop = apply_strengthening(e.loop, e.spec(M))
    f = restricted_post(e.loop.guard, e.post())
    exact = solve_exact(explore(loop, [init]), f).value(init)
    return loop, f, exact, bool(e.meta.get("signed_post"))


INSTANCES = [
    ("1dbrw", 5, State(n=1)),
    ("1dbrw", 10, State(n=3)),
    ("flrw", 10, State(n=1)),
    ("flrw", 20, State(n=4)),
    ("petersburg", 8, State(a=1, b=1)),
    ("petersburg", 16, State(a=1, b=2)),
    ("3dsrw", 2, State(x=1, y=0, z=0)),
    ("3dsrw", 3, State(x=0, y=1, z=1)),
    ("bounded_update", 4, State(n=1, b=0)),
    ("bounded_update", 8, State(n=2, b=0)),
]
SEEDS = range(10)


@pytest.fixture(scope="module")
def exact_instances():
    return [_instance(*args) for args in INSTANCES]


def test_lower_bias_with_aggressive_cutoff(exact_instances):
    ok = total = 0
    for (_, _, init), (loop, f, exact, _) in zip(INSTANCES, exact_instances):
        for seed in SEEDS:
            est = estimate_wp(loop, f, init, 200, 4, seed, signed=True)
            ok += est.mean - 4 * est.half_width <= float(exact)
            total += 1
    assert ok >= 0.99 * total


def test_agreement_on_untruncated_chains(exact_instances):
    ok = total = 0
    for (name, M, init), (loop, f, exact, _) in zip(INSTANCES, exact_instances):
        for seed in SEEDS:
            est = estimate_wp(loop, f, init, 200, 10**5, seed, signed=True)
            assert est.cutoff_fraction == 0, name
            ok += est.consistent_with(exact)
            total += 1
    assert ok >= 0.99 * total


def test_chain_walk_matches_exact():
    ch = explore(brw(10), [State(n=1)])
    est = simulate_chain(ch, HIT0, State(n=1), 10**5, 10**4, seed=1)
    assert est.consistent_with(ruin(1, 10))
    again = simulate_chain(ch, HIT0, State(n=1), 10**5, 10**4, seed=1)
    assert again == est


def test_chain_walk_reports_cutoffs():
    ch = explore(brw(10), [State(n=5)])
    est = simulate_chain(ch, HIT0, State(n=5), 1000, 1, seed=0)
    assert est.cutoff_fraction == 1 and est.mean == 0
    assert np.isfinite(est.half_width)
