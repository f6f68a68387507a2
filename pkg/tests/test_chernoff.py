import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovbin import chernoff as ch
from markovbin.chernoff import (
    DegenerateInput,
    boundary_value,
    chernoff_information,
    grid_oracle_chernoff,
    iid_chernoff,
    information_projection_l1,
    min_pairwise_chernoff,
)
from markovbin.markov import Alphabet, InvalidInput, JointDistribution, MarkovModel, conditional_relative_entropy

# -log2(2 sqrt(0.25 * 0.75)) = 1 - log2(3)/2
SYMMETRIC_C = 0.20751874963942185
# grid oracle at resolution 4000 for (0.1, 0.9) vs (0.5, 0.5), frozen
ASYM_ORACLE = 0.16212645


def test_symmetric_iid_pair_closed_form():
    res = chernoff_information(MarkovModel.binary(0.25, 0.25), MarkovModel.binary(0.75, 0.75))
    assert res.converged
    assert res.value == pytest.approx(SYMMETRIC_C, abs=1e-9)
    # optimizer is the fair coin
    np.testing.assert_allclose(res.p_star.probs, 0.25, atol=1e-6)
    assert res.p_star.in_p_tilde()
    assert res.constraint_gap <= 1e-8


def test_asymmetric_pair_matches_oracle_both_orders():
    p1, p2 = MarkovModel.binary(0.1, 0.9), MarkovModel.binary(0.5, 0.5)
    a = chernoff_information(p1, p2)
    b = chernoff_information(p2, p1)
    assert a.value == pytest.approx(ASYM_ORACLE, abs=1e-3)
    assert a.value == pytest.approx(b.value, abs=1e-8)
    assert grid_oracle_chernoff(p1, p2, 2000) == pytest.approx(grid_oracle_chernoff(p2, p1, 2000), abs=1e-6)


def test_identical_models_rejected():
    p = MarkovModel.binary(0.3, 0.6)
    with pytest.raises(DegenerateInput):
        chernoff_information(p, MarkovModel.binary(0.3, 0.6))


def test_limit_towards_equal_goes_to_zero():
    p = MarkovModel.binary(0.3, 0.6)
    vals = [chernoff_information(p, MarkovModel.binary(0.3 + d, 0.6)).value for d in (0.1, 0.01, 0.001)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-5


def test_oracle_rejects_other_shapes():
    p = MarkovModel.random(np.random.default_rng(0), 1, Alphabet())
    q = MarkovModel.random(np.random.default_rng(1), 1, Alphabet())
    with pytest.raises(InvalidInput):
        grid_oracle_chernoff(p, q)


def test_mismatched_shapes_rejected():
    with pytest.raises(InvalidInput):
        chernoff_information(MarkovModel.binary(0.3, 0.6), MarkovModel.random(np.random.default_rng(0), 1, Alphabet()))


def test_dna_order3_solution_properties():
    rng = np.random.default_rng(5)
    p1, p2 = MarkovModel.random(rng, 3, floor=0.02), MarkovModel.random(rng, 3, floor=0.02)
    res = chernoff_information(p1, p2)
    assert res.converged
    assert res.p_star.in_p_tilde()
    assert res.constraint_gap <= 1e-8
    assert res.value == pytest.approx(conditional_relative_entropy(res.p_star, p1.joint), abs=1e-10)
    assert chernoff_information(p2, p1).value == pytest.approx(res.value, abs=1e-7)


def test_minimality_spot_check():
    rng = np.random.default_rng(9)
    p1, p2 = MarkovModel.random(rng, 1, Alphabet()), MarkovModel.random(rng, 1, Alphabet())
    res = chernoff_information(p1, p2)
    for _ in range(30):
        r = MarkovModel.random(rng, 1, Alphabet(), floor=0.01).joint.probs
        # walk from p* toward and past r until the boundary is crossed again
        d = r - res.p_star.probs
        f = lambda t: boundary_value(JointDistribution(1, p1.alphabet, res.p_star.probs + t * d), p1, p2)
        ts = np.linspace(1e-3, 1, 200)
        vals = [f(t) for t in ts]
        for (ta, fa), (tb, fb) in zip(zip(ts, vals), zip(ts[1:], vals[1:])):
            if fa * fb < 0:
                lo, hi = ta, tb
                for _ in range(60):
                    mid = (lo + hi) / 2
                    if f(lo) * f(mid) <= 0:
                        hi = mid
                    else:
                        lo = mid
                p = JointDistribution(1, p1.alphabet, res.p_star.probs + lo * d)
                assert conditional_relative_entropy(p, p1.joint) >= res.value - 1e-8


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_iid_embedded_matches_lambda_scan(a, b):
    if abs(a - b) < 0.05:
        return
    res = chernoff_information(MarkovModel.iid([1 - a, a]), MarkovModel.iid([1 - b, b]))
    ref, _ = iid_chernoff(np.array([1 - a, a]), np.array([1 - b, b]))
    assert res.value == pytest.approx(ref, abs=1e-4)
    assert res.value > 0


def test_augmented_lagrangian_fallback(monkeypatch):
    # force the first Newton attempt to fail so the warm-start path runs
    calls = {"n": 0}
    real = ch._newton_polish

    def flaky(prob, p, steps=50, tol=1e-13):
        calls["n"] += 1
        if calls["n"] == 1:
            return np.full_like(p, 1 / p.size), steps
        return real(prob, p, steps, tol)

    p1, p2 = MarkovModel.binary(0.1, 0.9), MarkovModel.binary(0.5, 0.5)
    direct = chernoff_information(p1, p2).value
    monkeypatch.setattr(ch, "_newton_polish", flaky)
    res = chernoff_information(p1, p2)
    assert calls["n"] >= 2
    assert res.converged
    assert res.value == pytest.approx(direct, abs=1e-8)


class TestPairwise:
    def test_two_models(self):
        a, b = MarkovModel.binary(0.2, 0.3), MarkovModel.binary(0.5, 0.8)
        rep = min_pairwise_chernoff([a, b])
        assert rep.c_min == pytest.approx(chernoff_information(a, b).value, abs=1e-12)
        assert rep.lbar_threshold * rep.c_min == pytest.approx(1.0)

    def test_near_duplicate_is_argmin(self):
        p1, p2 = MarkovModel.binary(0.2, 0.3), MarkovModel.binary(0.7, 0.8)
        p3 = MarkovModel.binary(0.22, 0.31)
        rep = min_pairwise_chernoff([p1, p2, p3])
        assert tuple(rep.argmin_pair) == (0, 2)
        np.testing.assert_allclose(rep.per_pair, rep.per_pair.T, atol=1e-8)
        assert np.all(np.diag(rep.per_pair) == 0)
        data = json.loads(rep.to_json())
        assert data["c_min"] == pytest.approx(rep.c_min)

    def test_needs_two(self):
        with pytest.raises(InvalidInput):
            min_pairwise_chernoff([MarkovModel.binary(0.2, 0.3)])


class TestProjection:
    def test_uniform_binary_matches_grid(self):
        q = MarkovModel.binary(0.5, 0.5)
        res = information_projection_l1(q, q.joint, 0.2)
        # 4000-point grid minimum over the ball complement, frozen
        assert res.converged
        assert res.value == pytest.approx(0.020692, abs=2e-5)
        assert np.abs(res.p_star.probs - q.joint.probs).sum() >= 0.2 - 1e-8

    def test_outside_ball_is_zero(self):
        q = MarkovModel.binary(0.2, 0.7)
        assert information_projection_l1(q, JointDistribution.uniform(1, Alphabet.binary()), 0.01).value == 0.0

    def test_empty_set(self):
        q = MarkovModel.binary(0.2, 0.7)
        assert information_projection_l1(q, q.joint, 2.5).value == math.inf
