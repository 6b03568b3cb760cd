"""SupSplitLog logistic bandits and a regret benchmark harness."""
