"""Domain logic: environments, agent, estimators, tree search, evaluation."""
