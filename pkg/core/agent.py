"""
Data-Collection Agent Module

Simulates adaptive data collection with a floored linear Thompson sampling
agent:

1. per-arm Bayesian linear regression posteriors give preliminary assignment
   probabilities (Monte Carlo argmax frequencies),
2. the probabilities are floored at g(t) = t^(-alpha) / K and the remaining
   mass is shrunk proportionally,
3. an action is sampled, its propensity logged, and the chosen arm's
   posterior updated.

Per step the agent consumes exactly m_draws x K standard normals and one
uniform from the replication's Generator, so horizon prefixes of a run are
reproducible.
"""

import logging
from dataclasses import dataclass

import numpy as np

from config import settings

from .exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)

DEGENERATE_MASS = 1e-12


@dataclass(frozen=True)
class FloorSchedule:
    """Assignment-probability floor g(t) = t^(-alpha) / K."""

    alpha: float
    K: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")

    def floor(self, t: int) -> float:
        if t < 1:
            raise ValueError(f"time index must be >= 1, got {t}")
        return t ** (-self.alpha) / self.K

    def sequence(self, T: int) -> np.ndarray:
        """(g(1), ..., g(T))."""
        return np.arange(1, T + 1, dtype=float) ** (-self.alpha) / self.K


@dataclass(frozen=True)
class LoggedSample:
    """One collection step (X_t, W_t, Y_t, e_t(X_t; W_t))."""

    t: int
    x: np.ndarray
    w: int
    y: float
    e: float
    # full floored assignment vector at this step
    probs: np.ndarray | None = None


class GreedyPolicy:
    """Posterior-mean greedy policy frozen from an agent (ties -> lowest arm)."""

    def __init__(self, theta: np.ndarray):
        self.theta = np.array(theta, dtype=float, copy=True)

    def __call__(self, x: np.ndarray) -> int:
        return int(np.argmax(self.theta @ np.asarray(x, dtype=float)))

    def predict_batch(self, contexts: np.ndarray) -> np.ndarray:
        return np.argmax(np.asarray(contexts) @ self.theta.T, axis=1)


class AgentState:
    """
    Per-arm recursive least squares statistics for linear Thompson sampling.

    Arm w keeps A_w = ridge * I + sum x x^T, its inverse (maintained with
    Sherman-Morrison rank-one updates) and b_w = sum x y. The posterior over
    theta_w is Gaussian(A_w^-1 b_w, prior_variance * A_w^-1).
    """

    def __init__(
        self,
        p: int,
        K: int,
        ridge: float | None = None,
        prior_variance: float | None = None,
        m_draws: int | None = None,
    ):
        self.p = p
        self.K = K
        self.ridge = settings.TS_RIDGE if ridge is None else ridge
        self.prior_variance = (
            settings.TS_PRIOR_VARIANCE if prior_variance is None else prior_variance
        )
        self.m_draws = settings.TS_MC_DRAWS if m_draws is None else m_draws
        if self.ridge <= 0:
            raise ValueError(f"ridge must be positive, got {self.ridge}")
        if self.m_draws < 1:
            raise ValueError(f"m_draws must be positive, got {self.m_draws}")

        self.A = np.tile(self.ridge * np.eye(p), (K, 1, 1))
        self.A_inv = np.tile(np.eye(p) / self.ridge, (K, 1, 1))
        self.b = np.zeros((K, p))
        self.theta = np.zeros((K, p))
        logger.debug(
            f"AgentState initialized: p={p}, K={K}, ridge={self.ridge}, "
            f"v2={self.prior_variance}, m_draws={self.m_draws}"
        )

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionMismatchError(
                f"Context has shape {x.shape}, agent expects ({self.p},)"
            )
        return x

    def posterior_means(self) -> np.ndarray:
        """K x p matrix of theta_hat_w = A_w^-1 b_w."""
        return self.theta.copy()

    def preliminary_probs(
        self, x: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Monte Carlo Thompson sampling probabilities (argmax frequencies).

        Each round draws every arm's score x . theta_tilde_w, whose law is
        Gaussian(x . theta_hat_w, v^2 x^T A_w^-1 x); the argmax (lowest index
        on ties) is counted.
        """
        x = self._check(x)
        mean = self.theta @ x
        var = np.einsum("i,kij,j->k", x, self.A_inv, x)
        sd = np.sqrt(self.prior_variance * np.maximum(var, 0.0))
        z = rng.standard_normal((self.m_draws, self.K))
        winners = np.argmax(mean + z * sd, axis=1)
        counts = np.bincount(winners, minlength=self.K)
        return counts / self.m_draws

    def update(self, w: int, x: np.ndarray, y: float) -> None:
        """Rank-one update of arm w with the observation (x, y)."""
        x = self._check(x)
        self.A[w] += np.outer(x, x)
        Ax = self.A_inv[w] @ x
        self.A_inv[w] -= np.outer(Ax, Ax) / (1.0 + x @ Ax)
        # keep the inverse symmetric
        self.A_inv[w] = (self.A_inv[w] + self.A_inv[w].T) / 2
        self.b[w] += x * y
        self.theta[w] = self.A_inv[w] @ self.b[w]

    def greedy_policy(self) -> GreedyPolicy:
        return GreedyPolicy(self.theta)


def apply_floor(ebar: np.ndarray, t: int, sched: FloorSchedule) -> np.ndarray:
    """Floors arms below g(t) at g(t) and shrinks the rest toward g(t).

    Arms with ebar_w >= g keep e_w = g + c (ebar_w - g), where c makes the
    vector sum to one. When no mass is left to shrink the uniform vector is
    returned.
    """
    ebar = np.asarray(ebar, dtype=float)
    K = ebar.shape[0]
    g = sched.floor(t)
    below = ebar < g
    denom = float(np.sum(ebar[~below] - g))
    if denom < DEGENERATE_MASS:
        return np.full(K, 1.0 / K)
    c = (1.0 - K * g) / denom
    return np.where(below, g, g + c * (ebar - g))


def _sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    w = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(w, probs.shape[0] - 1)


def select_and_log(
    state: AgentState,
    env_step: tuple,
    t: int,
    sched: FloorSchedule,
    rng: np.random.Generator,
) -> LoggedSample:
    """Runs one collection step and updates the agent with its outcome."""
    if t < 1:
        raise ValueError(f"time index must be >= 1, got {t}")
    x, potentials = env_step
    ebar = state.preliminary_probs(x, rng)
    probs = apply_floor(ebar, t, sched)
    w = _sample_action(probs, rng)
    y = float(potentials[w])
    state.update(w, x, y)
    return LoggedSample(
        t=t, x=np.asarray(x, dtype=float), w=w, y=y, e=float(probs[w]), probs=probs
    )
