"""Vanilla counterfactual regret minimization.

Two update schedules are supported. ``simultaneous`` evaluates once per
iteration and updates every player's regrets from that single walk.
``alternating`` (the default) updates players in turn within an iteration,
each one seeing the policies already updated earlier in the same iteration;
it converges markedly faster on poker games.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .games.base import Game
from .games.tree import (
    GameTree,
    counterfactual_values,
    infoset_own_reach,
    node_values,
    reach_probs,
    state_expectation,
)
from .io import atomic_write_text, fmt_exact
from .metrics import as_flat, as_tree, nash_conv_details
from .policy import TabularPolicy
from .records import RunRecord, nashconv_columns


def regret_matching(creg_row) -> np.ndarray:
    pos = np.maximum(np.asarray(creg_row, dtype=float), 0.0)
    d = pos.sum()
    if d > 0:
        return pos / d
    return np.full(len(pos), 1.0 / len(pos))


def regret_matching_flat(tree: GameTree, creg: np.ndarray) -> np.ndarray:
    """Regret matching applied to every info state of a flat regret vector."""
    pos = np.maximum(creg, 0.0)
    d = np.bincount(tree.sa_infoset, weights=pos, minlength=tree.num_infosets)[tree.sa_infoset]
    return np.where(d > 0, pos / np.where(d > 0, d, 1.0), tree.uniform_policy())


@dataclass
class CfValues:
    """Counterfactual action values ``v_sa`` (flat over slots) and state values ``v_s``."""

    tree: GameTree
    v_sa: np.ndarray
    v_s: np.ndarray

    def action_values(self, key: str) -> np.ndarray:
        return self.v_sa[self.tree.slots(self.tree.key_index[key])]

    def state_value(self, key: str) -> float:
        return float(self.v_s[self.tree.key_index[key]])


def _walk(tree: GameTree, policy: np.ndarray):
    reach = reach_probs(tree, policy)
    vc = counterfactual_values(tree, policy, reach=reach, values=node_values(tree, policy))
    return vc, state_expectation(tree, policy, vc), infoset_own_reach(tree, reach)


def policy_eval_tree_walk(joint, game: Game | GameTree) -> CfValues:
    """Exact counterfactual values of every info state for its acting player."""
    tree = as_tree(game)
    flat = as_flat(tree, joint)
    vc, vs, _ = _walk(tree, flat)
    return CfValues(tree, vc, vs)


@dataclass
class RegretTable:
    """Cumulative regrets, average-policy weights and the current policy, all flat over slots."""

    tree: GameTree
    creg: np.ndarray
    avg_weight: np.ndarray
    policy: np.ndarray
    iterations: int = 0
    alternating: bool = True

    @classmethod
    def fresh(cls, game: Game | GameTree, alternating: bool = True) -> "RegretTable":
        tree = as_tree(game)
        return cls(tree, np.zeros(tree.num_sa), np.zeros(tree.num_sa), tree.uniform_policy(), 0, alternating)

    def regrets(self, key: str) -> np.ndarray:
        return self.creg[self.tree.slots(self.tree.key_index[key])]

    def weights(self, key: str) -> np.ndarray:
        return self.avg_weight[self.tree.slots(self.tree.key_index[key])]

    def current_policy(self) -> TabularPolicy:
        return TabularPolicy.from_flat(self.tree, self.policy)


def cfr_iteration(state: RegretTable, k: int) -> tuple[RegretTable, TabularPolicy]:
    """One CFR iteration, updating ``state`` in place.

    Regrets grow by v^c(s, a) - v^c(s) and the average-policy weights by
    eta_i(s) * pi(s, a), both taken from the exact evaluation walk.
    """
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    tree = state.tree
    groups = range(tree.num_players) if state.alternating else [None]
    for player in groups:
        vc, vs, own = _walk(tree, state.policy)
        d_creg = vc - vs[tree.sa_infoset]
        d_weight = own[tree.sa_infoset] * state.policy
        if player is None:
            state.creg += d_creg
            state.avg_weight += d_weight
        else:
            mask = tree.infoset_player[tree.sa_infoset] == player
            state.creg[mask] += d_creg[mask]
            state.avg_weight[mask] += d_weight[mask]
        state.policy = regret_matching_flat(tree, state.creg)
    state.iterations = k
    return state, state.current_policy()


def average_policy_flat(state: RegretTable) -> np.ndarray:
    tree = state.tree
    d = np.bincount(tree.sa_infoset, weights=state.avg_weight, minlength=tree.num_infosets)[tree.sa_infoset]
    return np.where(d > 0, state.avg_weight / np.where(d > 0, d, 1.0), tree.uniform_policy())


def average_policy(state: RegretTable) -> TabularPolicy:
    if state.iterations < 1:
        raise ValueError("average policy needs at least one completed iteration")
    return TabularPolicy.from_flat(state.tree, average_policy_flat(state))


def run_cfr(
    game: Game | GameTree,
    iterations: int,
    eval_every: int = 10,
    alternating: bool = True,
    metadata: dict | None = None,
) -> tuple[RunRecord, TabularPolicy, RegretTable]:
    """Run ``iterations`` CFR iterations, logging NashConv of the average policy every stride."""
    if iterations < 1:
        raise ValueError(f"CFR needs at least one iteration, got {iterations}")
    if eval_every < 1:
        raise ValueError(f"eval stride must be >= 1, got {eval_every}")
    tree = as_tree(game)
    state = RegretTable.fresh(tree, alternating)
    record = RunRecord(nashconv_columns(tree.num_players), metadata=dict(metadata or {}))
    record.metadata.setdefault("algorithm", "cfr")
    record.metadata.setdefault("game", tree.game.name)
    record.metadata.setdefault("updates", "alternating" if alternating else "simultaneous")
    for k in range(1, iterations + 1):
        cfr_iteration(state, k)
        if k % eval_every == 0 or k == iterations:
            nc, deltas = nash_conv_details(average_policy_flat(state), tree)
            record.append(k, nc, *deltas)
    return record, average_policy(state), state


def save_checkpoint(state: RegretTable, path) -> tuple[Path, Path]:
    """Average policy at ``path`` and the regret/weight table at ``<path>.regrets``."""
    path = Path(path)
    average_policy(state).save(path)
    lines = []
    for s, key in enumerate(state.tree.keys):
        sl = state.tree.slots(s)
        lines.append(f"{key}\tR\t" + ",".join(fmt_exact(x) for x in state.creg[sl]))
        lines.append(f"{key}\tS\t" + ",".join(fmt_exact(x) for x in state.avg_weight[sl]))
    regrets = atomic_write_text(path.with_name(path.name + ".regrets"), "\n".join(lines) + "\n")
    return path, regrets


def load_checkpoint(
    game: Game | GameTree, regrets_path, iterations: int, alternating: bool = True
) -> RegretTable:
    """Rebuild a ``RegretTable`` from a regrets file written by ``save_checkpoint``."""
    state = RegretTable.fresh(game, alternating)
    tree = state.tree
    for line in Path(regrets_path).read_text().splitlines():
        if not line.strip():
            continue
        key, kind, body = line.split("\t")
        values = np.array([float(x) for x in body.split(",")])
        target = state.creg if kind == "R" else state.avg_weight
        target[tree.slots(tree.key_index[key])] = values
    state.policy = regret_matching_flat(tree, state.creg)
    state.iterations = iterations
    return state
