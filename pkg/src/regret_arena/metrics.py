"""Exact evaluation oracles: expected returns, best responses, NashConv and
the q-value / counterfactual-value relation.

All functions take either a ``Game`` or a compiled ``GameTree`` and a joint
policy given as a ``TabularPolicy`` (keys for every player) or a flat vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedValueError
from .games.base import Game
from .games.tree import (
    GameTree,
    counterfactual_values,
    edge_factors,
    infoset_others_reach,
    node_values,
    others_reach,
    reach_probs,
    tree_for,
)
from .policy import TabularPolicy


def as_tree(game: Game | GameTree) -> GameTree:
    return game if isinstance(game, GameTree) else tree_for(game)


def as_flat(tree: GameTree, joint) -> np.ndarray:
    if isinstance(joint, TabularPolicy):
        return joint.to_flat(tree)
    flat = np.asarray(joint, dtype=float)
    if flat.shape != (tree.num_sa,):
        raise ValueError(f"flat policy must have {tree.num_sa} entries, got {flat.shape}")
    return flat


@dataclass
class BestResponseResult:
    player: int
    br_policy: TabularPolicy
    br_value: float
    delta: float


def expected_returns(joint, game) -> np.ndarray:
    tree = as_tree(game)
    return node_values(tree, as_flat(tree, joint))[0]


def best_response_flat(tree: GameTree, policy: np.ndarray, player: int) -> tuple[np.ndarray, float]:
    """Best-response action per info state of ``player`` and its value.

    Backward induction over depths: at each of the player's info states the
    action values are summed over member histories weighted by the others'
    (chance included) reach; unreachable states fall back to action 0.
    """
    reach = reach_probs(tree, policy)
    opp = others_reach(reach, player)
    f = edge_factors(tree, policy)
    val = tree.utils[:, player].copy()
    br = np.zeros(tree.num_infosets, dtype=np.int64)
    padded = tree.padded_slots
    for start, end in reversed(tree.levels[1:]):
        ch = np.arange(start, end)
        par = tree.parent[ch]
        mine = tree.parent_player[ch] == player
        w = f[ch].copy()
        if mine.any():
            c, p = ch[mine], par[mine]
            av = np.bincount(tree.sa[c], weights=opp[p] * val[c], minlength=tree.num_sa)
            states = np.unique(tree.infoset[p])
            rows = padded[states]
            scores = np.where(rows >= 0, av[np.maximum(rows, 0)], -np.inf)
            br[states] = np.argmax(scores, axis=1)
            w[mine] = tree.action[c] == br[tree.infoset[p]]
        np.add.at(val, par, w * val[ch])
    return br, float(val[0])


def best_response(joint, player: int, game) -> BestResponseResult:
    tree = as_tree(game)
    flat = as_flat(tree, joint)
    br, value = best_response_flat(tree, flat, player)
    table = {}
    for s in tree.infosets_of(player):
        row = np.zeros(int(tree.num_actions[s]))
        row[br[s]] = 1.0
        table[tree.keys[s]] = row
    on_policy = node_values(tree, flat)[0, player]
    return BestResponseResult(player, TabularPolicy(table), value, value - on_policy)


def nash_conv_details(joint, game) -> tuple[float, np.ndarray]:
    """NashConv and the per-player deltas."""
    tree = as_tree(game)
    flat = as_flat(tree, joint)
    on_policy = node_values(tree, flat)[0]
    deltas = np.array(
        [best_response_flat(tree, flat, i)[1] - on_policy[i] for i in range(tree.num_players)]
    )
    return float(deltas.sum()), deltas


def nash_conv(joint, game) -> float:
    return nash_conv_details(joint, game)[0]


def bayes_normalizers(joint, game) -> np.ndarray:
    """B(s) = sum over h in s of the others' reach, one entry per info state."""
    tree = as_tree(game)
    return infoset_others_reach(tree, reach_probs(tree, as_flat(tree, joint)))


def bayes_normalizer(joint, key: str, game) -> float:
    tree = as_tree(game)
    b = bayes_normalizers(joint, tree)[tree.key_index[key]]
    if b <= 0.0:
        raise UndefinedValueError(f"info state {key!r} is unreachable under the others' policies")
    return float(b)


def q_values_exact(joint, player: int, game) -> dict[str, np.ndarray]:
    """q(s, a) = v^c(s, a) / B(s) for each info state of ``player``."""
    tree = as_tree(game)
    flat = as_flat(tree, joint)
    reach = reach_probs(tree, flat)
    vc = counterfactual_values(tree, flat, reach=reach)
    b = infoset_others_reach(tree, reach)
    out = {}
    for s in tree.infosets_of(player):
        if b[s] <= 0.0:
            raise UndefinedValueError(f"info state {tree.keys[s]!r} has zero Bayes normalizer")
        out[tree.keys[s]] = vc[tree.slots(s)] / b[s]
    return out


def state_values_exact(joint, player: int, game) -> dict[str, float]:
    """v(s) = sum_a pi(s, a) q(s, a) for each info state of ``player``."""
    tree = as_tree(game)
    flat = as_flat(tree, joint)
    q = q_values_exact(flat, player, tree)
    return {k: float(flat[tree.slots(tree.key_index[k])] @ row) for k, row in q.items()}
