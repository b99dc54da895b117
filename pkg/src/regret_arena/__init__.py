"""Regret minimization and multiagent actor-critic toolkit for small poker games."""
