import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovbin.markov import (
    Alphabet,
    Contig,
    InvalidInput,
    JointDistribution,
    MarkovModel,
    conditional,
    conditional_entropy,
    conditional_relative_entropy,
    context_marginal,
    empirical_type,
    gram_index,
    l1_distance,
    sequence_log_probability,
    sequence_log_probability_linear,
    type_class_count_log2_bound,
)

BIN = Alphabet.binary()
# frozen oracle values (closed forms evaluated by hand)
KL_HALF_QUARTER = 0.5 * math.log2(0.5 / 0.25) + 0.5 * math.log2(0.5 / 0.75)  # 0.2075187496
H2_01 = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))                       # 0.4689955936


def joint(order, alphabet, **grams):
    p = np.zeros(alphabet.size ** (order + 1))
    for g, v in grams.items():
        p[gram_index(g.lstrip("_"), alphabet)] = v
    return JointDistribution(order, alphabet, p)


# --- strategies ---------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def random_joint(seed, order=1, alphabet=BIN, floor=0.01):
    return MarkovModel.random(np.random.default_rng(seed), order, alphabet, floor=floor).joint


# --- types and constructors -----------------------------------------------------

class TestAlphabetAndJoint:
    def test_alphabet_bijection(self):
        a = Alphabet()
        assert a.size == 4
        assert a.decode(a.encode("GATTACA")) == "GATTACA"

    def test_alphabet_rejects_duplicates(self):
        with pytest.raises(InvalidInput):
            Alphabet(("A", "A"))

    def test_joint_validates(self):
        with pytest.raises(InvalidInput):
            JointDistribution(1, BIN, np.array([0.5, 0.5, 0.5, -0.5]))
        with pytest.raises(InvalidInput):
            JointDistribution(1, BIN, np.array([0.5, 0.5, 0.5]))
        with pytest.raises(InvalidInput):
            JointDistribution(1, BIN, np.array([0.3, 0.3, 0.3, 0.3]))

    def test_p_tilde_membership(self):
        assert JointDistribution.uniform(3).in_p_tilde()
        assert not JointDistribution.point_mass("AAAA").in_p_tilde()  # zeros
        # positive but inconsistent: p(01) != p(10)
        assert not JointDistribution(1, BIN, np.array([0.4, 0.3, 0.1, 0.2])).in_p_tilde()

    def test_json_round_trip(self):
        p = random_joint(1, 3, Alphabet())
        back = JointDistribution.from_json(p.to_json())
        assert back.order == 3 and back.alphabet == p.alphabet
        assert np.max(np.abs(back.probs - p.probs)) <= 1e-15

    def test_contig_symbol_bound(self):
        with pytest.raises(InvalidInput):
            Contig(np.array([0, 1, 4]), Alphabet())


class TestEmpiricalType:
    def test_acgt_orbit(self):
        p = empirical_type(Contig.from_string("ACGTACGT"), 3)
        for g in ("ACGT", "CGTA", "GTAC", "TACG"):
            assert p.prob(g) == 0.25
        assert np.count_nonzero(p.probs) == 4

    def test_binary_0110(self):
        p = empirical_type(Contig.from_string("0110", BIN), 1)
        np.testing.assert_array_equal(p.probs, [0.25] * 4)

    def test_constant(self):
        assert empirical_type(Contig.from_string("AAAA"), 3).prob("AAAA") == 1.0

    def test_too_short(self):
        with pytest.raises(InvalidInput):
            empirical_type(Contig.from_string("ACG"), 3)

    @given(st.text(alphabet="ACGT", min_size=4, max_size=200), st.integers(1, 3))
    def test_type_is_exactly_consistent(self, text, order):
        if len(text) < order + 1:
            return
        p = empirical_type(Contig.from_string(text), order)
        assert p.consistency_residual() <= 1e-15
        # counts are multiples of 1/L
        np.testing.assert_allclose(p.probs * len(text), np.round(p.probs * len(text)), atol=1e-9)


class TestMarginalsAndConditionals:
    def test_uniform_marginal(self):
        np.testing.assert_allclose(context_marginal(JointDistribution.uniform(3)), np.full(64, 1 / 64))

    def test_orbit_marginal(self):
        a = Alphabet()
        marg = context_marginal(empirical_type(Contig.from_string("ACGTACGT"), 3))
        for ctx in ("ACG", "CGT", "GTA", "TAC"):
            assert marg[gram_index(ctx, a)] == 0.25
        assert marg.sum() == 1.0

    def test_point_marginal(self):
        assert context_marginal(JointDistribution.point_mass("AAAA"))[0] == 1.0

    def test_uniform_conditional(self):
        c = conditional(JointDistribution.uniform(3))
        assert c.defined.all()
        np.testing.assert_allclose(c.probs, 0.25)

    def test_binary_conditional(self):
        p = JointDistribution(1, BIN, np.array([0.45, 0.05, 0.05, 0.45]))
        c = conditional(p)
        assert c.probs[0, 1] == pytest.approx(0.1, abs=1e-15)
        assert c.probs[1, 1] == pytest.approx(0.9, abs=1e-15)

    def test_point_mass_rows_undefined(self):
        c = conditional(JointDistribution.point_mass("AAAA"))
        assert c.defined[0] and c.probs[0, 0] == 1.0
        assert not c.defined[1:].any()
        assert not np.isnan(c.probs).any()


class TestDivergenceEntropy:
    def test_self_divergence(self):
        p = random_joint(3, 3, Alphabet())
        assert conditional_relative_entropy(p, p) == 0.0

    def test_bernoulli_kl(self):
        p = JointDistribution.uniform(1, BIN)
        q = MarkovModel.binary(0.25, 0.25).joint
        assert conditional_relative_entropy(p, q) == pytest.approx(KL_HALF_QUARTER, abs=1e-12)
        assert KL_HALF_QUARTER == pytest.approx(0.2075187496, abs=1e-10)

    def test_0110_against_uniform(self):
        p = empirical_type(Contig.from_string("0110", BIN), 1)
        assert conditional_relative_entropy(p, JointDistribution.uniform(1, BIN)) == 0.0

    def test_support_violation_is_infinite(self):
        p = JointDistribution.uniform(1, BIN)
        q = joint(1, BIN, _00=0.5, _11=0.5)
        assert conditional_relative_entropy(p, q) == math.inf

    def test_entropy_examples(self):
        assert conditional_entropy(JointDistribution.uniform(3)) == pytest.approx(2.0, abs=1e-12)
        assert conditional_entropy(JointDistribution.point_mass("AAAA")) == 0.0
        p = MarkovModel.binary(0.1, 0.9).joint
        np.testing.assert_allclose(context_marginal(p), [0.5, 0.5], atol=1e-12)
        assert conditional_entropy(p) == pytest.approx(H2_01, abs=1e-12)

    @settings(max_examples=50)
    @given(seeds, seeds)
    def test_nonnegative_and_zero_iff_equal_conditionals(self, s1, s2):
        p, q = random_joint(s1, 2, Alphabet()), random_joint(s2, 2, Alphabet())
        d = conditional_relative_entropy(p, q)
        if s1 == s2:
            assert d == 0.0
        else:
            assert d > 0
        # only the conditionals of q matter: reweighting q's contexts leaves D_c unchanged
        w = np.random.default_rng(s2).uniform(0.5, 2.0, size=16)
        reweighted = JointDistribution(2, q.alphabet, (q.table * (w / w.sum())[:, None] / q.table.sum(axis=1, keepdims=True)).ravel())
        assert conditional_relative_entropy(p, reweighted) == pytest.approx(d, abs=1e-10)

    @settings(max_examples=50)
    @given(seeds, seeds, seeds, st.floats(0, 1))
    def test_convex_in_first_argument(self, s1, s2, s3, lam):
        p, r, q = (random_joint(s, 1, Alphabet()) for s in (s1, s2, s3))
        mix = JointDistribution(1, p.alphabet, lam * p.probs + (1 - lam) * r.probs)
        lhs = conditional_relative_entropy(mix, q)
        rhs = lam * conditional_relative_entropy(p, q) + (1 - lam) * conditional_relative_entropy(r, q)
        assert lhs <= rhs + 1e-10

    @settings(max_examples=50)
    @given(seeds, seeds, seeds, seeds, st.floats(0, 1))
    def test_decision_region_convex(self, s1, s2, sa, sb, lam):
        p1, p2 = random_joint(s1), random_joint(s2)
        pa, pb = random_joint(sa), random_joint(sb)

        def side(p):
            return conditional_relative_entropy(p, p2) - conditional_relative_entropy(p, p1)

        if side(pa) < 0 or side(pb) < 0:
            return
        mix = JointDistribution(1, BIN, lam * pa.probs + (1 - lam) * pb.probs)
        assert side(mix) >= -1e-10


class TestL1:
    def test_examples(self):
        a = JointDistribution.point_mass("AAAA")
        b = JointDistribution.point_mass("AAAC")
        assert l1_distance(a, a) == 0.0
        assert l1_distance(a, b) == 2.0
        assert l1_distance(JointDistribution.uniform(3), a) == pytest.approx(2 * (1 - 1 / 256), abs=1e-14)

    @given(seeds, seeds, seeds)
    def test_metric_axioms(self, s1, s2, s3):
        p, q, r = (random_joint(s, 1, Alphabet()) for s in (s1, s2, s3))
        assert l1_distance(p, q) == pytest.approx(l1_distance(q, p), abs=1e-15)
        assert l1_distance(p, r) <= l1_distance(p, q) + l1_distance(q, r) + 1e-12


class TestSequenceLikelihood:
    def test_aaaa_uniform(self):
        q = MarkovModel(JointDistribution.uniform(3))
        assert sequence_log_probability(Contig.from_string("AAAA"), q) == pytest.approx(-14.0, abs=1e-12)

    def test_0110_half(self):
        q = MarkovModel.binary(0.5, 0.5)
        assert sequence_log_probability(Contig.from_string("0110", BIN), q) == pytest.approx(-5.0, abs=1e-12)

    def test_orbit_model(self):
        q = MarkovModel(empirical_type(Contig.from_string("ACGTACGT"), 3))
        assert sequence_log_probability(Contig.from_string("ACGTACGT"), q) == pytest.approx(-2.0, abs=1e-12)
        assert sequence_log_probability(Contig.from_string("ACGTACGA"), q) == -math.inf

    @settings(max_examples=40)
    @given(st.text(alphabet="01", min_size=3, max_size=40), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_cyclic_and_linear_differ_by_boundary(self, text, a, b):
        q = MarkovModel.binary(a, b)
        x = Contig.from_string(text, BIN)
        diff = sequence_log_probability(x, q) - sequence_log_probability_linear(x, q)
        # exactly the wrap-around transition x_L -> x_1
        i, j = int(text[-1]), int(text[0])
        assert diff == pytest.approx(math.log2(q.transitions[i, j]), abs=1e-10)

    def test_normalization_small(self):
        q = MarkovModel.binary(0.3, 0.8)
        for L in (2, 5, 8):
            total = sum(2 ** sequence_log_probability_linear(Contig.from_string("".join(s), BIN), q)
                        for s in itertools.product("01", repeat=L))
            assert total == pytest.approx(1.0, abs=1e-12)


class TestModels:
    def test_stationarity(self):
        q = MarkovModel.random(np.random.default_rng(0), 3)
        np.testing.assert_allclose(q.transitions.sum(axis=1), 1.0, atol=1e-12)
        assert q.joint.consistency_residual() <= 1e-12
        assert q.is_irreducible()

    def test_inconsistent_joint_rejected(self):
        with pytest.raises(InvalidInput):
            MarkovModel(JointDistribution(1, BIN, np.array([0.4, 0.3, 0.1, 0.2])))

    def test_type_count_bound_conventions(self):
        # binary m=1: both conventions give exponent 4
        assert type_class_count_log2_bound(10, 1, 2) == pytest.approx(4 * math.log2(11))
        assert type_class_count_log2_bound(10, 3, 4, "tetranucleotide") == pytest.approx(4 * math.log2(11))
        assert type_class_count_log2_bound(10, 3, 4) == pytest.approx(256 * math.log2(11))
