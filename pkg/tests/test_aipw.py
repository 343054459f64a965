import math

import numpy as np
import pytest

from core.agent import FloorSchedule, LoggedSample
from core.aipw import (
    CONST_TERM,
    DELTA_COEF,
    HORIZON_COEF,
    KAPPA_COEF,
    RegretBoundInputs,
    SchemeKind,
    ScoreMatrix,
    WeightScheme,
    aipw_elements,
    aipw_matrix,
    generalized_q,
    optimal_weights,
    rate_exponent,
    regret_bound,
    tree_entropy_bound,
    weight_sequence,
)
from core.exceptions import ConfigError, EstimationError


def _bracket(kappa, delta, T):
    return (
        KAPPA_COEF * kappa
        + CONST_TERM
        + DELTA_COEF * math.sqrt(math.log(1 / delta))
        + HORIZON_COEF / math.sqrt(T)
    )


class TestAipwElements:
    def test_worked_example(self):
        sample = LoggedSample(t=1, x=np.zeros(2), w=1, y=2.0, e=0.25)
        gamma = aipw_elements(sample, np.array([0.5, -1.0]))
        np.testing.assert_allclose(gamma, [0.5, 11.0])

    def test_zero_nuisance_is_ipw(self):
        sample = LoggedSample(t=3, x=np.zeros(1), w=2, y=1.5, e=0.3)
        gamma = aipw_elements(sample, np.zeros(3))
        np.testing.assert_allclose(gamma, [0.0, 0.0, 1.5 / 0.3])

    def test_exact_nuisance_returns_means(self):
        mu = np.array([0.2, -0.7, 1.1])
        sample = LoggedSample(t=1, x=np.zeros(1), w=1, y=-0.7, e=0.1)
        np.testing.assert_allclose(aipw_elements(sample, mu), mu)

    def test_does_not_mutate_nuisance(self):
        mu = np.array([1.0, 2.0])
        aipw_elements(LoggedSample(t=1, x=np.zeros(1), w=0, y=5.0, e=0.5), mu)
        np.testing.assert_array_equal(mu, [1.0, 2.0])

    @pytest.mark.parametrize("e", [0.0, -0.2, 1.5])
    def test_rejects_bad_propensity(self, e):
        with pytest.raises(EstimationError):
            aipw_elements(LoggedSample(t=1, x=np.zeros(1), w=0, y=1.0, e=e), [0, 0])

    def test_matrix_agrees_with_rows(self, rng):
        T, K = 25, 3
        actions = rng.integers(K, size=T)
        rewards = rng.normal(size=T)
        props = rng.uniform(0.05, 1.0, size=T)
        muhat = rng.normal(size=(T, K))
        gamma = aipw_matrix(actions, rewards, props, muhat)
        for t in range(T):
            sample = LoggedSample(
                t=t + 1, x=np.zeros(1), w=int(actions[t]), y=rewards[t], e=props[t]
            )
            np.testing.assert_allclose(gamma[t], aipw_elements(sample, muhat[t]))

    def test_matrix_names_bad_row(self):
        with pytest.raises(EstimationError, match="row 2"):
            aipw_matrix([0, 1], [1.0, 1.0], [0.5, 0.0], np.zeros((2, 2)))

    def test_conditionally_unbiased(self):
        gen = np.random.default_rng(77)
        n, K = 100_000, 3
        e = np.array([0.05, 0.45, 0.5])
        mu = np.array([0.3, -1.0, 2.0])
        muhat = np.tile([1.0, 0.0, -0.5], (n, 1))
        actions = gen.choice(K, size=n, p=e)
        rewards = mu[actions] + gen.normal(size=n)
        gamma = aipw_matrix(actions, rewards, e[actions], muhat)
        se = gamma.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(gamma.mean(axis=0) - mu) <= 4 * se)


class TestWeightScheme:
    @pytest.mark.parametrize(
        "token, kind, beta",
        [
            ("uniform", SchemeKind.UNIFORM, 0.0),
            ("FLOOR", SchemeKind.FLOOR, 0.0),
            ("power:0.25", SchemeKind.POWER, 0.25),
            (" power:1 ", SchemeKind.POWER, 1.0),
        ],
    )
    def test_parse(self, token, kind, beta):
        scheme = WeightScheme.parse(token)
        assert (scheme.kind, scheme.beta) == (kind, beta)

    @pytest.mark.parametrize("token", ["", "power", "power:x", "power:-1", "exp:2"])
    def test_parse_errors(self, token):
        with pytest.raises(ConfigError):
            WeightScheme.parse(token)

    def test_token_round_trip(self):
        for token in ("uniform", "floor", "power:0.5", "power:0.125"):
            assert WeightScheme.parse(token).token == token


class TestWeightSequence:
    def test_examples(self):
        sched = FloorSchedule(alpha=0.5, K=2)
        uniform = weight_sequence(WeightScheme.parse("uniform"), 3, sched)
        np.testing.assert_array_equal(uniform, [1, 1, 1])
        power = weight_sequence(WeightScheme.parse("power:0.5"), 4, sched)
        assert power[3] == pytest.approx(0.5)
        floor = weight_sequence(WeightScheme.parse("floor"), 4, sched)
        assert floor[3] == pytest.approx(0.25)

    def test_rejects_empty(self):
        with pytest.raises(EstimationError):
            weight_sequence(WeightScheme.parse("uniform"), 0, FloorSchedule(0.5, 2))


class TestGeneralizedQ:
    def test_uniform_is_mean(self, rng):
        gamma = rng.normal(size=(10, 3))
        actions = rng.integers(3, size=10)
        scores = ScoreMatrix(gamma=gamma, weights=np.ones(10))
        expected = gamma[np.arange(10), actions].mean()
        assert generalized_q(scores, actions) == pytest.approx(expected)

    def test_identical_rows(self):
        gamma = np.tile([4.0, -2.0], (6, 1))
        scores = ScoreMatrix(gamma=gamma, weights=np.arange(1.0, 7.0))
        assert generalized_q(scores, np.ones(6, dtype=int)) == pytest.approx(-2.0)

    def test_invariant_to_weight_scale(self, rng):
        gamma = rng.normal(size=(12, 2))
        h = rng.uniform(0.1, 2.0, size=12)
        actions = rng.integers(2, size=12)
        a = generalized_q(ScoreMatrix(gamma, h), actions)
        b = generalized_q(ScoreMatrix(gamma, 7 * h), actions)
        assert a == pytest.approx(b, rel=1e-14)

    def test_weighted_scores_sum_to_estimate(self, rng):
        gamma = rng.normal(size=(8, 3))
        scores = ScoreMatrix(gamma, np.arange(8, 0, -1.0))
        actions = rng.integers(3, size=8)
        total = scores.weighted[np.arange(8), actions].sum()
        assert total == pytest.approx(generalized_q(scores, actions))

    @pytest.mark.parametrize("bad", [-1, 2])
    def test_rejects_out_of_range_action(self, bad):
        scores = ScoreMatrix(gamma=np.zeros((3, 2)), weights=np.ones(3))
        with pytest.raises(EstimationError, match="row 3"):
            generalized_q(scores, [0, 1, bad])

    def test_reweighted_keeps_gamma(self):
        scores = ScoreMatrix.from_logged(
            [0, 1, 1], [1.0, 2.0, 3.0], [0.5, 0.5, 0.25], np.zeros((3, 2))
        )
        floored = scores.reweighted(WeightScheme.parse("floor"), FloorSchedule(1, 2))
        np.testing.assert_array_equal(floored.gamma, scores.gamma)
        np.testing.assert_allclose(floored.weights, [0.5, 0.25, 1 / 6])

    def test_score_matrix_shape_check(self):
        with pytest.raises(EstimationError):
            ScoreMatrix(gamma=np.zeros((3, 2)), weights=np.ones(4))


class TestOptimalWeights:
    def test_closed_form(self):
        np.testing.assert_allclose(
            optimal_weights(np.array([1.0, 0.5, 0.25])), [4 / 7, 2 / 7, 1 / 7]
        )

    def test_constant_floor_gives_uniform(self):
        np.testing.assert_allclose(optimal_weights(np.full(5, 0.1)), 0.2)

    def test_matches_bisection_oracle(self):
        gen = np.random.default_rng(8)
        for _ in range(20):
            g = np.sort(gen.uniform(0.01, 0.5, size=50))[::-1]
            # smallest c with some h on the simplex satisfying h <= c g
            lo, hi = 0.0, 1.0 / g.min()
            for _ in range(200):
                mid = (lo + hi) / 2
                if mid * g.sum() >= 1.0:
                    hi = mid
                else:
                    lo = mid
            h = optimal_weights(g)
            assert h.sum() == pytest.approx(1.0)
            assert np.max(h / g) == pytest.approx(hi, rel=1e-9)
            assert np.abs(h - hi * g).max() <= 1e-6
            other = gen.dirichlet(np.ones(50))
            assert np.max(other / g) >= np.max(h / g) - 1e-12


class TestRegretBound:
    def _inputs(self, h, g, T, M=3.0, delta=0.05, kappa=5.21):
        return RegretBoundInputs(M=M, T=T, delta=delta, kappa=kappa, h=h, g=g)

    def test_floor_matched_prefactor(self):
        T = 500
        g = FloorSchedule(0.5, 2).sequence(T)
        bound = regret_bound(self._inputs(g, g, T))
        expected = 3.0 * math.sqrt(T) / g.sum() * _bracket(5.21, 0.05, T)
        assert bound == pytest.approx(expected, rel=1e-12)

    def test_uniform_prefactor(self):
        T = 500
        g = FloorSchedule(0.5, 2).sequence(T)
        bound = regret_bound(self._inputs(np.ones(T), g, T))
        expected = 3.0 / (math.sqrt(T) * g[-1]) * _bracket(5.21, 0.05, T)
        assert bound == pytest.approx(expected, rel=1e-12)

    def test_rate_at_large_horizon(self):
        sched = FloorSchedule(0.25, 2)
        T = 1_000_000
        small = regret_bound(self._inputs(sched.sequence(T), sched.sequence(T), T))
        big_g = sched.sequence(4 * T)
        big = regret_bound(self._inputs(big_g, big_g, 4 * T))
        assert big / small == pytest.approx(4**-0.25, rel=0.01)

    @pytest.mark.parametrize(
        "changes",
        [
            {"delta": 0.0},
            {"delta": 1.0},
            {"h": np.array([1.0, 0.0, 1.0])},
            {"g": np.array([0.1, 0.2, 0.1])},
            {"h": np.ones(2)},
        ],
    )
    def test_invalid_inputs(self, changes):
        values = {"h": np.ones(3), "g": np.full(3, 0.5), "T": 3}
        values.update(changes)
        with pytest.raises(EstimationError):
            regret_bound(self._inputs(**values))


class TestTreeEntropyBound:
    def test_known_values(self):
        assert tree_entropy_bound(2, 3, 2) == pytest.approx(5.209774, abs=1e-6)
        assert tree_entropy_bound(1, 1, 2) == pytest.approx(2.5110, abs=1e-3)

    def test_monotone(self):
        base = tree_entropy_bound(2, 3, 2)
        assert tree_entropy_bound(3, 3, 2) > base
        assert tree_entropy_bound(2, 4, 2) > base
        assert tree_entropy_bound(2, 3, 3) > base

    @pytest.mark.parametrize("args", [(0, 3, 2), (2, 0, 2), (2, 3, 1)])
    def test_rejects(self, args):
        with pytest.raises(EstimationError):
            tree_entropy_bound(*args)


class TestRateExponent:
    @pytest.mark.parametrize(
        "alpha, beta, expected",
        [
            (0.25, 0.25, -0.25),
            (0.5, 0.0, 0.0),
            (0.0, 0.0, -0.5),
            (0.2, 0.8, 0.3),
            (0.5, 1.0, 0.5),
            (0.25, 2.0, 0.5),
        ],
    )
    def test_values(self, alpha, beta, expected):
        assert rate_exponent(alpha, beta) == pytest.approx(expected)
