"""
Generalized AIPW Estimator Module

Builds per-arm AIPW elements from logged bandit data, reweights them with a
pre-specified deterministic weight sequence h_t, and evaluates the weighted
value estimate of a policy. Also hosts the closed-form calculators that go
with the estimator: optimal weights for a known floor, the finite-sample
regret bound, the entropy-integral bound of depth-L trees, and the regret
bound's polynomial rate.

Usage:
    from core.aipw import ScoreMatrix, WeightScheme, generalized_q

    scores = ScoreMatrix.from_logged(actions, rewards, propensities, muhat)
    scores = scores.reweighted(WeightScheme.parse("floor"), sched)
    value = generalized_q(scores, policy_actions)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .agent import FloorSchedule, LoggedSample
from .exceptions import ConfigError, EstimationError

logger = logging.getLogger(__name__)

# Constants of the high-probability regret bound
KAPPA_COEF = 475.0
CONST_TERM = 1180.0
DELTA_COEF = 160.0
HORIZON_COEF = 160.0


class SchemeKind(str, Enum):
    UNIFORM = "uniform"
    POWER = "power"
    FLOOR = "floor"


@dataclass(frozen=True)
class WeightScheme:
    """Rule producing the pre-specified weights h_1..h_T."""

    kind: SchemeKind
    beta: float = 0.0

    @classmethod
    def parse(cls, token: str) -> "WeightScheme":
        """Parses `uniform`, `floor` or `power:<beta>`."""
        token = token.strip().lower()
        if token == SchemeKind.UNIFORM.value:
            return cls(SchemeKind.UNIFORM)
        if token == SchemeKind.FLOOR.value:
            return cls(SchemeKind.FLOOR)
        if token.startswith(SchemeKind.POWER.value + ":"):
            try:
                beta = float(token.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"Bad exponent in weight scheme '{token}'") from None
            if not math.isfinite(beta) or beta < 0:
                raise ConfigError(f"Weight exponent must be >= 0, got {beta}")
            return cls(SchemeKind.POWER, beta)
        raise ConfigError(
            f"Unknown weight scheme '{token}' (expected uniform, floor, power:<beta>)"
        )

    @property
    def token(self) -> str:
        if self.kind is SchemeKind.POWER:
            return f"power:{self.beta:g}"
        return self.kind.value


@dataclass(frozen=True)
class RegretBoundInputs:
    M: float
    T: int
    delta: float
    kappa: float
    h: np.ndarray
    g: np.ndarray

    def validate(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise EstimationError(f"delta must lie in (0, 1), got {self.delta}")
        if len(self.h) != self.T or len(self.g) != self.T:
            raise EstimationError("h and g must both have length T")
        if np.any(self.h <= 0) or np.any(self.g <= 0):
            raise EstimationError("weights and floors must be positive")
        if np.any(np.diff(self.g) > 0):
            raise EstimationError("the floor sequence must be nonincreasing")


@dataclass(frozen=True)
class ScoreMatrix:
    """Raw AIPW elements and the weights applied to them."""

    gamma: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.gamma.ndim != 2 or self.weights.shape != (self.gamma.shape[0],):
            raise EstimationError(
                f"gamma {self.gamma.shape} and weights {self.weights.shape} disagree"
            )
        if np.any(self.weights <= 0):
            raise EstimationError("weights must be positive")

    @classmethod
    def from_logged(cls, actions, rewards, propensities, muhat) -> "ScoreMatrix":
        gamma = aipw_matrix(actions, rewards, propensities, muhat)
        return cls(gamma=gamma, weights=np.ones(gamma.shape[0]))

    @property
    def weighted(self) -> np.ndarray:
        """Gamma_tilde_t(w) = h_t Gamma_hat_t(w) / sum_s h_s."""
        return self.gamma * (self.weights / self.weights.sum())[:, None]

    def reweighted(self, scheme: WeightScheme, sched: FloorSchedule) -> "ScoreMatrix":
        h = weight_sequence(scheme, self.gamma.shape[0], sched)
        return ScoreMatrix(gamma=self.gamma, weights=h)


def aipw_elements(sample: LoggedSample, muhat: np.ndarray) -> np.ndarray:
    """Gamma_hat(w) = muhat[w] + 1{w = W} (Y - muhat[w]) / e for every arm."""
    if not 0.0 < sample.e <= 1.0:
        raise EstimationError(
            f"Propensity must lie in (0, 1], got {sample.e} at t={sample.t}"
        )
    scores = np.array(muhat, dtype=float, copy=True)
    scores[sample.w] += (sample.y - scores[sample.w]) / sample.e
    return scores


def aipw_matrix(actions, rewards, propensities, muhat) -> np.ndarray:
    """Vectorized AIPW elements for T logged rows (T x K)."""
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=float)
    propensities = np.asarray(propensities, dtype=float)
    gamma = np.array(muhat, dtype=float, copy=True)
    if np.any(propensities <= 0) or np.any(propensities > 1):
        bad = int(np.flatnonzero((propensities <= 0) | (propensities > 1))[0])
        raise EstimationError(
            f"Propensity must lie in (0, 1], got {propensities[bad]} at row {bad + 1}"
        )
    rows = np.arange(len(actions))
    gamma[rows, actions] += (rewards - gamma[rows, actions]) / propensities
    return gamma


def weight_sequence(scheme: WeightScheme, T: int, sched: FloorSchedule) -> np.ndarray:
    """h_1..h_T: ones, t^(-beta), or the floor g(t)."""
    if T < 1:
        raise EstimationError(f"T must be at least 1, got {T}")
    if scheme.kind is SchemeKind.UNIFORM:
        return np.ones(T)
    if scheme.kind is SchemeKind.POWER:
        return np.arange(1, T + 1, dtype=float) ** (-scheme.beta)
    return sched.sequence(T)


def generalized_q(scores: ScoreMatrix, policy_actions: np.ndarray) -> float:
    """sum_t h_t Gamma_hat_t(pi(X_t)) / sum_t h_t."""
    policy_actions = np.asarray(policy_actions, dtype=np.int64)
    K = scores.gamma.shape[1]
    out_of_range = (policy_actions < 0) | (policy_actions >= K)
    if np.any(out_of_range):
        bad = int(np.flatnonzero(out_of_range)[0])
        raise EstimationError(
            f"Action must lie in 0..{K - 1}, "
            f"got {policy_actions[bad]} at row {bad + 1}"
        )
    picked = scores.gamma[np.arange(len(policy_actions)), policy_actions]
    h = scores.weights
    return float(np.dot(h, picked) / h.sum())


def optimal_weights(g: np.ndarray) -> np.ndarray:
    """Minimizer g_t / sum_s g_s of max_t (h_t / g_t) over the simplex."""
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        raise EstimationError("floor values must be positive")
    return g / g.sum()


def regret_bound(inputs: RegretBoundInputs) -> float:
    """High-probability regret bound of the argmax policy."""
    inputs.validate()
    h, g, T = np.asarray(inputs.h, float), np.asarray(inputs.g, float), inputs.T
    prefactor = inputs.M * math.sqrt(T) * float(np.max(h / g)) / float(h.sum())
    bracket = (
        KAPPA_COEF * inputs.kappa
        + CONST_TERM
        + DELTA_COEF * math.sqrt(math.log(1.0 / inputs.delta))
        + HORIZON_COEF / math.sqrt(T)
    )
    return prefactor * bracket


def tree_entropy_bound(L: int, p: int, K: int) -> float:
    """Entropy-integral upper bound of depth-L trees on p features, K actions."""
    if L < 1 or p < 1:
        raise EstimationError(f"Need L >= 1 and p >= 1, got L={L}, p={p}")
    if K < 2:
        raise EstimationError(f"Need K >= 2 actions, got {K}")
    internal = 2**L - 1
    return math.sqrt(internal * math.log(p) + 2**L * math.log(K)) + (
        4.0 / 3.0
    ) * L**0.25 * math.sqrt(internal)


def rate_exponent(alpha: float, beta: float) -> float:
    """Polynomial exponent of T in the bound for g_t = t^(-alpha), h_t = t^(-beta).

    The prefactor sqrt(T) max(h/g) / sum(h) grows like T^(max(alpha, beta) - 1/2)
    while sum(h) diverges polynomially (beta < 1). For beta >= 1 the weight sum
    stays bounded up to a log factor and the exponent is 1/2 + max(alpha - beta, 0).
    """
    if beta >= 1.0:
        return 0.5 + max(alpha - beta, 0.0)
    return max(alpha, beta) - 0.5
