"""
Nuisance Outcome Model Module

Sequential plug-in estimate mu_hat_t(x; w) of the mean reward, fitted per arm
by ridge regression on strictly past observations. The experiment loop calls
`predict` for step t before `update` with step t's sample, and `update`
rejects any time index that does not increase, so a prediction can never see
its own outcome.
"""

import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from config import settings

from .agent import LoggedSample
from .exceptions import DimensionMismatchError, StrictPastViolation

logger = logging.getLogger(__name__)


def _design(x: np.ndarray, intercept: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not intercept:
        return x
    if x.ndim == 1:
        return np.concatenate(([1.0], x))
    return np.column_stack([np.ones(x.shape[0]), x])


def batch_ridge(
    contexts: np.ndarray, rewards: np.ndarray, ridge: float, intercept: bool = True
) -> np.ndarray:
    """Closed-form ridge coefficients (ridge * I + X'X)^-1 X'y."""
    design = _design(np.atleast_2d(contexts), intercept)
    gram = ridge * np.eye(design.shape[1]) + design.T @ design
    return cho_solve(cho_factor(gram), design.T @ np.asarray(rewards, dtype=float))


class NuisanceModel:
    """Per-arm ridge regression updated one observation at a time."""

    def __init__(
        self,
        p: int,
        K: int,
        ridge: float | None = None,
        intercept: bool | None = None,
    ):
        self.p = p
        self.K = K
        self.ridge = settings.NUISANCE_RIDGE if ridge is None else ridge
        self.intercept = (
            settings.NUISANCE_INTERCEPT if intercept is None else intercept
        )
        if self.ridge <= 0:
            raise ValueError(f"ridge must be positive, got {self.ridge}")
        d = p + int(self.intercept)
        self.gram = np.tile(self.ridge * np.eye(d), (K, 1, 1))
        self.moment = np.zeros((K, d))
        self.theta = np.zeros((K, d))
        self.last_t = 0

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionMismatchError(
                f"Context has shape {x.shape}, model expects ({self.p},)"
            )
        return x

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Fitted mean of every arm at x (zeros before any data)."""
        return self.theta @ _design(self._check(x), self.intercept)

    def update(self, sample: LoggedSample) -> "NuisanceModel":
        """Adds one observation to the chosen arm's statistics."""
        if sample.t <= self.last_t:
            raise StrictPastViolation(
                f"Sample index {sample.t} does not follow last index {self.last_t}"
            )
        xt = _design(self._check(sample.x), self.intercept)
        w = sample.w
        self.gram[w] += np.outer(xt, xt)
        self.moment[w] += xt * sample.y
        self.theta[w] = cho_solve(cho_factor(self.gram[w]), self.moment[w])
        self.last_t = sample.t
        return self

    def coefficients(self) -> np.ndarray:
        return self.theta.copy()


def sequential_predictions(
    contexts: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    propensities: np.ndarray,
    K: int,
    model: NuisanceModel | None = None,
) -> np.ndarray:
    """T x K matrix whose row t is mu_hat fitted on rows before t.

    Replays a logged dataset through predict-then-update, the same order the
    collection loop uses.
    """
    contexts = np.asarray(contexts, dtype=float)
    T, p = contexts.shape
    if model is None:
        model = NuisanceModel(p, K)
    muhat = np.empty((T, K))
    for i in range(T):
        muhat[i] = model.predict(contexts[i])
        model.update(
            LoggedSample(
                t=i + 1,
                x=contexts[i],
                w=int(actions[i]),
                y=float(rewards[i]),
                e=float(propensities[i]),
            )
        )
    logger.debug(f"Replayed {T} rows through the nuisance model")
    return muhat
