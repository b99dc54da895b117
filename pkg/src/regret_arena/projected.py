"""Exact tabular projected policy iteration on directly parameterized simplex policies.

Four rules share one shape, theta <- P(theta + alpha_k * g) per info state with
alpha_k = k^{-1/2} and P the Euclidean simplex projection:

* ``pgpi``:  g(s, a) = v_eta(s, a), the reach-weighted local value
* ``acpi``:  g(s, a) = v_eta(s, a) - sum_b theta(s, b) v_eta(s, b)
* ``spgpi``: g(s, a) = v^c(s, a) / B(s)  (a q-value)
* ``sacpi``: g(s, a) = v^c(s, a) / B(s) - sum_b theta(s, b) v^c(s, b) / B(s)

The baseline only shifts g by a constant per state, so ``acpi`` reproduces
``pgpi`` (and ``sacpi`` reproduces ``spgpi``) step for step. Every state runs
its own online gradient ascent, whose local regret is tracked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedValueError
from .games.base import Game
from .games.tree import (
    GameTree,
    counterfactual_values,
    infoset_others_reach,
    infoset_own_reach,
    node_values,
    reach_probs,
    state_expectation,
)
from .metrics import as_flat, as_tree, nash_conv
from .policy import SimplexParamPolicy, project_rows
from .records import SCHEMAS, RunRecord

RULES = ("pgpi", "acpi", "spgpi", "sacpi")
INTERIOR_FLOOR = 1e-9


@dataclass
class ScoreGradients:
    """Exact per-slot gradient ingredients for every info state's acting player."""

    tree: GameTree
    v_eta: np.ndarray  # sum over h in s of eta(h) * value_i(ha)
    v_c: np.ndarray  # counterfactual action values
    eta: np.ndarray  # acting player's own reach, per info state
    B: np.ndarray  # Bayes normalizer, per info state

    def for_key(self, key: str) -> dict[str, np.ndarray | float]:
        s = self.tree.key_index[key]
        sl = self.tree.slots(s)
        return {"v_eta": self.v_eta[sl], "v_c": self.v_c[sl], "eta": float(self.eta[s]), "B": float(self.B[s])}

    def q_values(self) -> np.ndarray:
        """v^c / B, raising if some info state is unreachable for the others."""
        if np.any(self.B <= 0):
            s = int(np.flatnonzero(self.B <= 0)[0])
            raise UndefinedValueError(f"info state {self.tree.keys[s]!r} has zero Bayes normalizer")
        return self.v_c / self.B[self.tree.sa_infoset]


def score_gradient(joint, game: Game | GameTree) -> ScoreGradients:
    tree = as_tree(game)
    theta = as_flat(tree, joint)
    reach = reach_probs(tree, theta)
    values = node_values(tree, theta)
    child = np.flatnonzero(tree.sa >= 0)
    par = tree.parent[child]
    full = reach[par].prod(axis=1)
    v_eta = np.bincount(tree.sa[child], weights=full * values[child, tree.player[par]], minlength=tree.num_sa)
    v_c = counterfactual_values(tree, theta, reach=reach, values=values)
    return ScoreGradients(tree, v_eta, v_c, infoset_own_reach(tree, reach), infoset_others_reach(tree, reach))


def step_size(k: int) -> float:
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    return 1.0 / math.sqrt(k)


def rule_gradient(rule: str, theta: np.ndarray, grads: ScoreGradients) -> np.ndarray:
    tree = grads.tree
    if rule in ("pgpi", "acpi"):
        g = grads.v_eta
    elif rule in ("spgpi", "sacpi"):
        g = grads.q_values()
    else:
        raise ValueError(f"unknown rule {rule!r}; choose from {RULES}")
    if rule in ("acpi", "sacpi"):
        g = g - state_expectation(tree, theta, g)[tree.sa_infoset]
    return g


def project_flat(tree: GameTree, y: np.ndarray, floor: float = INTERIOR_FLOOR) -> np.ndarray:
    """Project every info state's slice onto its simplex, then clamp to ``floor`` and renormalize."""
    out = np.empty_like(y)
    padded = tree.padded_slots
    for m in np.unique(tree.num_actions):
        states = np.flatnonzero(tree.num_actions == m)
        slots = padded[states, :m]
        rows = project_rows(y[slots])
        if floor > 0:
            rows = np.maximum(rows, floor)
            rows /= rows.sum(axis=1, keepdims=True)
        out[slots] = rows
    return out


def projected_step(rule: str, theta: np.ndarray, grads: ScoreGradients, k: int) -> np.ndarray:
    return project_flat(grads.tree, theta + step_size(k) * rule_gradient(rule, theta, grads))


def _apply(rule, policy, grads, k):
    tree = grads.tree
    flat = as_flat(tree, policy.to_tabular()) if isinstance(policy, SimplexParamPolicy) else as_flat(tree, policy)
    nxt = projected_step(rule, flat, grads, k)
    return SimplexParamPolicy({key: nxt[tree.slots(s)] for s, key in enumerate(tree.keys)})


def pgpi_step(policy, grads: ScoreGradients, k: int) -> SimplexParamPolicy:
    return _apply("pgpi", policy, grads, k)


def acpi_step(policy, grads: ScoreGradients, k: int) -> SimplexParamPolicy:
    return _apply("acpi", policy, grads, k)


def spgpi_step(policy, grads: ScoreGradients, k: int) -> SimplexParamPolicy:
    return _apply("spgpi", policy, grads, k)


def sacpi_step(policy, grads: ScoreGradients, k: int) -> SimplexParamPolicy:
    return _apply("sacpi", policy, grads, k)


@dataclass
class LocalRegretTracker:
    """Per-state regret of the online learner run at each info state.

    ``R(s) = max_a sum_k g_k(s, a) - sum_k theta_k(s) . g_k(s)`` for the
    tracked utility ``g`` (v_eta for the plain rules, q-values for the strong
    ones). The bound uses Delta r as the largest per-iteration spread
    ``max_a g - min_a g`` seen at the state, and separately the game's raw
    reward range. Unweighted counterfactual regrets are accumulated for
    reporting only.
    """

    tree: GameTree
    raw_range: float
    cum_value: np.ndarray = field(init=False)
    cum_expected: np.ndarray = field(init=False)
    spread: np.ndarray = field(init=False)
    cum_cf: np.ndarray = field(init=False)
    cum_cf_expected: np.ndarray = field(init=False)
    iterations: int = 0

    def __post_init__(self):
        self.cum_value = np.zeros(self.tree.num_sa)
        self.cum_expected = np.zeros(self.tree.num_infosets)
        self.spread = np.zeros(self.tree.num_infosets)
        self.cum_cf = np.zeros(self.tree.num_sa)
        self.cum_cf_expected = np.zeros(self.tree.num_infosets)

    def observe(self, theta: np.ndarray, utility: np.ndarray, v_c: np.ndarray) -> None:
        tree = self.tree
        idx = tree.sa_infoset
        self.cum_value += utility
        self.cum_expected += state_expectation(tree, theta, utility)
        hi = np.full(tree.num_infosets, -np.inf)
        lo = np.full(tree.num_infosets, np.inf)
        np.maximum.at(hi, idx, utility)
        np.minimum.at(lo, idx, utility)
        self.spread = np.maximum(self.spread, hi - lo)
        self.cum_cf += v_c
        self.cum_cf_expected += state_expectation(tree, theta, v_c)
        self.iterations += 1

    @staticmethod
    def _max_per_state(tree, per_sa):
        out = np.full(tree.num_infosets, -np.inf)
        np.maximum.at(out, tree.sa_infoset, per_sa)
        return out

    def regrets(self) -> np.ndarray:
        return self._max_per_state(self.tree, self.cum_value) - self.cum_expected

    def counterfactual_regrets(self) -> np.ndarray:
        return self._max_per_state(self.tree, self.cum_cf) - self.cum_cf_expected

    def bound(self, delta_r) -> np.ndarray:
        k = self.iterations
        return math.sqrt(k) + (math.sqrt(k) - 0.5) * self.tree.num_actions * np.asarray(delta_r) ** 2

    def observed_bounds(self) -> np.ndarray:
        return self.bound(self.spread)

    def raw_bounds(self) -> np.ndarray:
        return self.bound(np.full(self.tree.num_infosets, self.raw_range))

    def satisfied(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.regrets() <= self.observed_bounds() + tol))

    def raw_satisfied(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.regrets() <= self.raw_bounds() + tol))


@dataclass
class ProjectedResult:
    record: RunRecord
    tracker: LocalRegretTracker
    policy: np.ndarray
    average_policy: np.ndarray
    history: list[np.ndarray] = field(default_factory=list)


def run_projected(
    game: Game | GameTree,
    rule: str,
    iterations: int,
    eval_every: int = 1,
    keep_history: bool = False,
    metadata: dict | None = None,
) -> ProjectedResult:
    """Run ``iterations`` projected updates from the uniform policy, all players at once."""
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; choose from {RULES}")
    if iterations < 1:
        raise ValueError(f"projected iteration needs K >= 1, got {iterations}")
    if eval_every < 1:
        raise ValueError(f"eval stride must be >= 1, got {eval_every}")
    tree = as_tree(game)
    lo, hi = tree.game.spec.reward_range
    tracker = LocalRegretTracker(tree, float(hi - lo))
    record = RunRecord(SCHEMAS["projected"], metadata=dict(metadata or {}))
    record.metadata.setdefault("algorithm", "projected")
    record.metadata.setdefault("game", tree.game.name)
    record.metadata.setdefault("rule", rule)
    theta = tree.uniform_policy()
    total = np.zeros(tree.num_sa)
    history = [theta.copy()] if keep_history else []
    strong = rule in ("spgpi", "sacpi")
    for k in range(1, iterations + 1):
        grads = score_gradient(theta, tree)
        tracker.observe(theta, grads.q_values() if strong else grads.v_eta, grads.v_c)
        total += theta
        theta = projected_step(rule, theta, grads, k)
        if keep_history:
            history.append(theta.copy())
        if k % eval_every == 0 or k == iterations:
            regrets = tracker.regrets()
            bounds = tracker.observed_bounds()
            worst = int(np.argmax(regrets))
            record.append(k, rule, nash_conv(theta, tree), float(regrets[worst]), float(bounds[worst]), tracker.satisfied())
    return ProjectedResult(record, tracker, theta, total / iterations, history)
