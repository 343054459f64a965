"""
Out-of-Sample Evaluation Module

Policy value and regret of tree policies (and of the frozen collection agent)
on a noise-free test set, measured against the best tree of the same class on
that test set.
"""

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .env import TestSet
from .exceptions import DimensionMismatchError, EstimationError
from .treepolicy import (
    SearchResult,
    TreeClassSpec,
    TreePolicy,
    exact_search,
    predict_batch,
)

logger = logging.getLogger(__name__)


class BatchPolicy(Protocol):
    def predict_batch(self, contexts: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class RegretReport:
    policy_value: float
    best_value: float
    regret: float
    n_test: int

    @classmethod
    def from_values(cls, policy_value: float, best_value: float, n_test: int):
        return cls(
            policy_value=policy_value,
            best_value=best_value,
            regret=best_value - policy_value,
            n_test=n_test,
        )


def _check_test(test: TestSet) -> None:
    if test.n_test == 0:
        raise EstimationError("Cannot evaluate on an empty test set")


def _value_of_actions(actions: np.ndarray, test: TestSet) -> float:
    picked = test.true_means[np.arange(test.n_test), actions]
    return float(picked.mean())


def policy_value(tree: TreePolicy, test: TestSet) -> float:
    """Mean true reward of `tree` over the test contexts."""
    _check_test(test)
    return _value_of_actions(predict_batch(tree, test.contexts), test)


def best_in_class(test: TestSet, spec: TreeClassSpec) -> tuple[TreePolicy, float]:
    """Best tree on the test set's true-mean matrix and its value."""
    _check_test(test)
    if test.true_means.shape[1] != spec.K:
        raise DimensionMismatchError(
            f"Test set has {test.true_means.shape[1]} arms, class has K={spec.K}"
        )
    result: SearchResult = exact_search(test.true_means, test.contexts, spec)
    best = result.objective / test.n_test
    logger.info(f"Best-in-class value {best:.6f} on {test.n_test} test contexts")
    return result.tree, best


def regret(
    tree: TreePolicy,
    test: TestSet,
    spec: TreeClassSpec,
    best_value: float | None = None,
) -> RegretReport:
    """best_value - policy_value; `best_value` is computed when not supplied."""
    if best_value is None:
        _, best_value = best_in_class(test, spec)
    return RegretReport.from_values(policy_value(tree, test), best_value, test.n_test)


def agent_regret(
    policy: BatchPolicy,
    test: TestSet,
    spec: TreeClassSpec,
    best_value: float | None = None,
) -> RegretReport:
    """Regret of a frozen agent policy against the same tree reference."""
    _check_test(test)
    if best_value is None:
        _, best_value = best_in_class(test, spec)
    actions = np.asarray(policy.predict_batch(test.contexts), dtype=np.int64)
    value = _value_of_actions(actions, test)
    return RegretReport.from_values(value, best_value, test.n_test)
