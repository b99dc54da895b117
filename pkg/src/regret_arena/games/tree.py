"""Flattened game trees and vectorized full-tree passes.

``compile_tree`` expands a game breadth-first into parallel numpy arrays, so
every node's parent has a smaller index and each depth is a contiguous slice.
Policies are handled as flat vectors indexed by ``sa`` (one slot per
info-state/action pair), which turns reach, value and counterfactual
computations into a handful of array operations per depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GameError
from .base import CHANCE, CHANCE_TOLERANCE, TERMINAL, Game


@dataclass(eq=False)
class GameTree:
    game: Game
    num_players: int
    parent: np.ndarray
    depth: np.ndarray
    player: np.ndarray  # acting player, CHANCE or TERMINAL
    infoset: np.ndarray  # info-state id at decision nodes, else -1
    action: np.ndarray  # action id on the edge from the parent
    chance_prob: np.ndarray  # edge probability below chance nodes, else 0
    sa: np.ndarray  # flat (info state, action) slot on the edge below decisions, else -1
    child_start: np.ndarray
    num_children: np.ndarray
    utils: np.ndarray  # (nodes, players); zero at non-terminals
    levels: list[tuple[int, int]]
    keys: list[str]
    infoset_player: np.ndarray
    num_actions: np.ndarray
    offset: np.ndarray  # first sa slot of each info state
    action_labels: list[tuple[str, ...]]
    infoset_depth: np.ndarray
    key_index: dict[str, int] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.parent)

    @property
    def num_infosets(self) -> int:
        return len(self.keys)

    @property
    def num_sa(self) -> int:
        return int(self.offset[-1] + self.num_actions[-1]) if self.keys else 0

    def infosets_of(self, player: int) -> np.ndarray:
        return np.flatnonzero(self.infoset_player == player)

    def slots(self, s: int) -> slice:
        return slice(int(self.offset[s]), int(self.offset[s] + self.num_actions[s]))

    # per-sa lookups, built lazily
    @property
    def sa_infoset(self) -> np.ndarray:
        if not hasattr(self, "_sa_infoset"):
            self._sa_infoset = np.repeat(np.arange(self.num_infosets), self.num_actions)
        return self._sa_infoset

    @property
    def sa_action(self) -> np.ndarray:
        if not hasattr(self, "_sa_action"):
            self._sa_action = np.arange(self.num_sa) - self.offset[self.sa_infoset]
        return self._sa_action

    @property
    def padded_slots(self) -> np.ndarray:
        """(infosets, max actions) matrix of sa slots, -1 where padded."""
        if not hasattr(self, "_padded"):
            width = int(self.num_actions.max()) if self.keys else 0
            pad = -np.ones((self.num_infosets, width), dtype=np.int64)
            pad[self.sa_infoset, self.sa_action] = np.arange(self.num_sa)
            self._padded = pad
        return self._padded

    @property
    def parent_player(self) -> np.ndarray:
        if not hasattr(self, "_parent_player"):
            pp = np.full(self.num_nodes, CHANCE, dtype=np.int64)
            pp[1:] = self.player[self.parent[1:]]
            self._parent_player = pp
        return self._parent_player

    @property
    def rep_node(self) -> np.ndarray:
        """One decision node per info state (the first in BFS order)."""
        if not hasattr(self, "_rep"):
            rep = np.full(self.num_infosets, -1, dtype=np.int64)
            dec = np.flatnonzero(self.infoset >= 0)
            # reversed assignment leaves the smallest node index in place
            rep[self.infoset[dec[::-1]]] = dec[::-1]
            self._rep = rep
        return self._rep

    def uniform_policy(self) -> np.ndarray:
        return 1.0 / self.num_actions[self.sa_infoset].astype(float)


def compile_tree(game: Game) -> GameTree:
    n = game.num_players
    states = [game._initial_state()]
    parent = [-1]
    depth = [0]
    action = [-1]
    chance_prob = [0.0]
    sa = [-1]
    player: list[int] = []
    infoset: list[int] = []
    child_start: list[int] = []
    num_children: list[int] = []
    utils: dict[int, list[float]] = {}
    keys: list[str] = []
    key_index: dict[str, int] = {}
    infoset_player: list[int] = []
    num_actions: list[int] = []
    offset: list[int] = []
    labels: list[tuple[str, ...]] = []
    infoset_depth: list[int] = []
    total_sa = 0

    i = 0
    while i < len(states):
        state = states[i]
        p = game._player(state)
        player.append(p)
        child_start.append(len(states))
        if p == TERMINAL:
            infoset.append(-1)
            num_children.append(0)
            utils[i] = list(game._returns(state))
        elif p == CHANCE:
            infoset.append(-1)
            outcomes = game._chance(state)
            probs = [o.prob for o in outcomes]
            if any(q < 0.0 or q > 1.0 for q in probs) or abs(sum(probs) - 1.0) > CHANCE_TOLERANCE:
                raise GameError(f"chance probabilities at node {i} do not form a distribution: {probs}")
            num_children.append(len(outcomes))
            for o in outcomes:
                states.append(game._next(state, o.action))
                parent.append(i)
                depth.append(depth[i] + 1)
                action.append(o.action.id)
                chance_prob.append(o.prob)
                sa.append(-1)
        else:
            key = game._key(state, p)
            legal = game._legal(state)
            lab = tuple(a.label for a in legal)
            s = key_index.get(key)
            if s is None:
                s = len(keys)
                key_index[key] = s
                keys.append(key)
                infoset_player.append(p)
                num_actions.append(len(legal))
                offset.append(total_sa)
                labels.append(lab)
                infoset_depth.append(depth[i])
                total_sa += len(legal)
            elif labels[s] != lab:
                raise GameError(f"info state {key!r} has inconsistent legal actions")
            elif infoset_depth[s] != depth[i]:
                raise GameError(f"info state {key!r} spans several depths")
            infoset.append(s)
            num_children.append(len(legal))
            for a in legal:
                states.append(game._next(state, a))
                parent.append(i)
                depth.append(depth[i] + 1)
                action.append(a.id)
                chance_prob.append(0.0)
                sa.append(offset[s] + a.id)
        i += 1

    num_nodes = len(states)
    util = np.zeros((num_nodes, n))
    for node, u in utils.items():
        util[node] = u
    depth_arr = np.asarray(depth, dtype=np.int64)
    bounds = np.flatnonzero(np.diff(depth_arr)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [num_nodes]])
    return GameTree(
        game=game,
        num_players=n,
        parent=np.asarray(parent, dtype=np.int64),
        depth=depth_arr,
        player=np.asarray(player, dtype=np.int64),
        infoset=np.asarray(infoset, dtype=np.int64),
        action=np.asarray(action, dtype=np.int64),
        chance_prob=np.asarray(chance_prob, dtype=float),
        sa=np.asarray(sa, dtype=np.int64),
        child_start=np.asarray(child_start, dtype=np.int64),
        num_children=np.asarray(num_children, dtype=np.int64),
        utils=util,
        levels=list(zip(starts.tolist(), ends.tolist())),
        keys=keys,
        infoset_player=np.asarray(infoset_player, dtype=np.int64),
        num_actions=np.asarray(num_actions, dtype=np.int64),
        offset=np.asarray(offset, dtype=np.int64),
        action_labels=labels,
        infoset_depth=np.asarray(infoset_depth, dtype=np.int64),
        key_index=key_index,
    )


_TREE_CACHE: dict[str, GameTree] = {}


def tree_for(game: Game) -> GameTree:
    """Compiled tree of ``game``, cached by game name."""
    tree = _TREE_CACHE.get(game.name)
    if tree is None or type(tree.game) is not type(game):
        tree = compile_tree(game)
        _TREE_CACHE[game.name] = tree
    return tree


def enumerate_info_states(game: Game) -> dict[str, int]:
    """Every reachable info-state key mapped to its legal action count."""
    tree = tree_for(game)
    return {k: int(m) for k, m in zip(tree.keys, tree.num_actions)}


# -- vectorized passes -----------------------------------------------------


def edge_factors(tree: GameTree, policy: np.ndarray) -> np.ndarray:
    """Probability of the edge into each node (1 at the root)."""
    f = tree.chance_prob.copy()
    dec = tree.sa >= 0
    f[dec] = policy[tree.sa[dec]]
    f[0] = 1.0
    return f


def reach_probs(tree: GameTree, policy: np.ndarray) -> np.ndarray:
    """Per-contributor reach, shape (nodes, players + 1); last column is chance."""
    n = tree.num_players
    f = edge_factors(tree, policy)
    col = np.where(tree.parent_player >= 0, tree.parent_player, n)
    reach = np.ones((tree.num_nodes, n + 1))
    for start, end in tree.levels[1:]:
        block = reach[tree.parent[start:end]]
        block[np.arange(end - start), col[start:end]] *= f[start:end]
        reach[start:end] = block
    return reach


def others_reach(reach: np.ndarray, player: int) -> np.ndarray:
    """Reach contributed by everyone except ``player`` (chance included)."""
    mask = np.ones(reach.shape[1], dtype=bool)
    mask[player] = False
    return reach[:, mask].prod(axis=1)


def node_values(tree: GameTree, policy: np.ndarray) -> np.ndarray:
    """Expected returns below every node under ``policy``, shape (nodes, players)."""
    f = edge_factors(tree, policy)
    values = tree.utils.copy()
    for start, end in reversed(tree.levels[1:]):
        np.add.at(values, tree.parent[start:end], f[start:end, None] * values[start:end])
    return values


def counterfactual_values(
    tree: GameTree, policy: np.ndarray, reach: np.ndarray | None = None, values: np.ndarray | None = None
) -> np.ndarray:
    """Counterfactual action values v^c(s, a) for the acting player at s, flat over sa."""
    if reach is None:
        reach = reach_probs(tree, policy)
    if values is None:
        values = node_values(tree, policy)
    child = np.flatnonzero(tree.sa >= 0)
    par = tree.parent[child]
    acting = tree.player[par]
    # product over the other columns, not total / own, so zero own reach is safe
    others = np.ones(len(child))
    for j in range(tree.num_players + 1):
        others = np.where(acting == j, others, others * reach[par, j])
    contrib = others * values[child, acting]
    return np.bincount(tree.sa[child], weights=contrib, minlength=tree.num_sa)


def state_expectation(tree: GameTree, policy: np.ndarray, per_sa: np.ndarray) -> np.ndarray:
    """Sum over actions of policy(s, a) * per_sa(s, a), one entry per info state."""
    return np.bincount(tree.sa_infoset, weights=policy * per_sa, minlength=tree.num_infosets)


def infoset_own_reach(tree: GameTree, reach: np.ndarray) -> np.ndarray:
    """Acting player's own reach eta_i(s) at every info state."""
    rep = tree.rep_node
    return reach[rep, tree.infoset_player]


def infoset_others_reach(tree: GameTree, reach: np.ndarray) -> np.ndarray:
    """Bayes normalizer: sum over histories in s of the others' reach."""
    dec = np.flatnonzero(tree.infoset >= 0)
    acting = tree.player[dec]
    n = tree.num_players
    others = np.ones(len(dec))
    for j in range(n + 1):
        others = np.where(acting == j, others, others * reach[dec, j])
    return np.bincount(tree.infoset[dec], weights=others, minlength=tree.num_infosets)
