"""Tabular self-play actor-critic with (state, action) critics.

The actor keeps softmax logits per info state; the critic is a table of
q(s, a) estimates (or v(s) for A2C) fitted by squared-error SGD on discounted
episode returns. Each round samples ``n_q * batch_size`` episodes with the
policy frozen, applies ``n_q`` critic batches, then one actor step computed
from the last batch. Actor rules:

* ``qpg``:  grad_b = sum_a dpi(a)/dtheta_b * A(a) = pi(b) A(b)
* ``rpg``:  n_{a+} times the QPG gradient (n_{a+}: actions with positive advantage)
* ``rmpg``: grad_b = sum_a dpi(a)/dtheta_b * max(A(a), 0)
* ``a2c``:  (onehot(a_t) - pi) * (G_t - v(s_t))

with A(a) = q(a) - sum_b pi(b) q(b).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .games.base import CHANCE, TERMINAL, Game
from .games.tree import GameTree, edge_factors, tree_for
from .metrics import nash_conv
from .policy import (
    TEMPERATURE_FLOOR,
    LogitPolicy,
    RewardNormalizer,
    Schedule,
    softmax,
    softmax_jacobian,
)
from .records import RunRecord, SCHEMAS

VARIANTS = ("qpg", "rpg", "rmpg", "a2c")


# -- per-state gradient rules ----------------------------------------------------


def advantages(q_row, pi_row) -> np.ndarray:
    q_row = np.asarray(q_row, dtype=float)
    return q_row - np.dot(pi_row, q_row)


def count_positive(adv, strict: bool = True) -> int:
    """n_{a+}: actions with positive advantage (``strict=False`` also counts zeros)."""
    adv = np.asarray(adv)
    return int(np.sum(adv > 0) if strict else np.sum(adv >= 0))


def actor_gradient_qpg(q_row, pi_row, jacobian=None, temperature: float = 1.0) -> np.ndarray:
    pi_row = np.asarray(pi_row, dtype=float)
    jac = softmax_jacobian(pi_row) if jacobian is None else jacobian
    return jac.T @ advantages(q_row, pi_row) / temperature


def actor_gradient_rpg(q_row, pi_row, jacobian=None, temperature: float = 1.0, strict: bool = True) -> np.ndarray:
    n_plus = count_positive(advantages(q_row, pi_row), strict)
    return n_plus * actor_gradient_qpg(q_row, pi_row, jacobian, temperature)


def actor_gradient_rmpg(q_row, pi_row, jacobian=None, temperature: float = 1.0) -> np.ndarray:
    pi_row = np.asarray(pi_row, dtype=float)
    jac = softmax_jacobian(pi_row) if jacobian is None else jacobian
    return jac.T @ np.maximum(advantages(q_row, pi_row), 0.0) / temperature


def actor_gradient_a2c(action: int, G: float, v: float, pi_row, temperature: float = 1.0) -> np.ndarray:
    pi_row = np.asarray(pi_row, dtype=float)
    onehot = np.zeros(len(pi_row))
    onehot[action] = 1.0
    return (onehot - pi_row) * (G - v) / temperature


def entropy_bonus_gradient(pi_row, temperature: float = 1.0) -> np.ndarray:
    """Gradient of -sum pi log pi with respect to the logits."""
    pi_row = np.asarray(pi_row, dtype=float)
    logp = np.log(pi_row)
    return -pi_row * (logp - np.dot(pi_row, logp)) / temperature


def flat_gradients(
    tree: GameTree, pi: np.ndarray, q: np.ndarray, variant: str, strict: bool = True
) -> np.ndarray:
    """The all-action rule of ``variant`` evaluated at every info state at once (temperature 1)."""
    idx = tree.sa_infoset
    adv = q - np.bincount(idx, weights=pi * q, minlength=tree.num_infosets)[idx]
    if variant == "qpg":
        return pi * adv
    if variant == "rpg":
        pos = adv > 0 if strict else adv >= 0
        n_plus = np.bincount(idx, weights=pos.astype(float), minlength=tree.num_infosets)[idx]
        return n_plus * (pi * adv)
    if variant == "rmpg":
        plus = np.maximum(adv, 0.0)
        return pi * plus - pi * np.bincount(idx, weights=pi * plus, minlength=tree.num_infosets)[idx]
    raise ValueError(f"no all-action rule for variant {variant!r}")


def flat_entropy_gradient(tree: GameTree, pi: np.ndarray) -> np.ndarray:
    idx = tree.sa_infoset
    logp = np.log(np.maximum(pi, 1e-300))
    return -pi * (logp - np.bincount(idx, weights=pi * logp, minlength=tree.num_infosets)[idx])


def flat_softmax(tree: GameTree, logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    idx = tree.sa_infoset
    z = logits / temperature
    zmax = np.full(tree.num_infosets, -np.inf)
    np.maximum.at(zmax, idx, z)
    e = np.exp(z - zmax[idx])
    return e / np.bincount(idx, weights=e, minlength=tree.num_infosets)[idx]


def center_logits(tree: GameTree, logits: np.ndarray) -> np.ndarray:
    idx = tree.sa_infoset
    mean = np.bincount(idx, weights=logits, minlength=tree.num_infosets) / tree.num_actions
    return logits - mean[idx]


# -- tables -------------------------------------------------------------------------


@dataclass
class QTable:
    """Tabular q(s, a) estimates, flat over the tree's (info state, action) slots."""

    tree: GameTree
    values: np.ndarray

    @classmethod
    def zeros(cls, tree: GameTree) -> "QTable":
        return cls(tree, np.zeros(tree.num_sa))

    def __getitem__(self, key: str) -> np.ndarray:
        return self.values[self.tree.slots(self.tree.key_index[key])]


@dataclass
class VTable:
    """Tabular v(s) estimates, one per info state."""

    tree: GameTree
    values: np.ndarray

    @classmethod
    def zeros(cls, tree: GameTree) -> "VTable":
        return cls(tree, np.zeros(tree.num_infosets))

    def __getitem__(self, key: str) -> float:
        return float(self.values[self.tree.key_index[key]])


def critic_update(
    table: np.ndarray, index: np.ndarray, targets: np.ndarray, lr: float, seen: np.ndarray | None = None
) -> float:
    """One tabular SGD step on (G - w[index])^2; returns the pre-step mean squared error.

    With a fixed ``lr`` each touched entry moves by ``lr * 2 * mean(G - w)``
    over its batch entries. Passing ``seen`` (running per-entry sample counts,
    updated in place) switches to the per-entry step 1 / (2 n), which keeps
    every entry equal to the running mean of its targets.
    """
    if len(index) == 0:
        raise ValueError("critic batch is empty")
    err = targets - table[index]
    loss = float(np.mean(err**2))
    sums = np.bincount(index, weights=err, minlength=len(table))
    counts = np.bincount(index, minlength=len(table))
    hit = counts > 0
    if seen is None:
        table[hit] += lr * 2.0 * sums[hit] / counts[hit]
    else:
        seen += counts
        table[hit] += sums[hit] / seen[hit]
    return loss


# -- episodes ---------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    key: str
    action: int
    reward: float
    player: int
    behavior_prob: float


def sample_episode(joint: LogitPolicy, game: Game, rng: np.random.Generator):
    """One episode through the ``Game`` API; returns per-player transitions and the returns."""
    h = game.initial_history()
    steps: list[list[list]] = [[] for _ in range(game.num_players)]
    while not game.is_terminal(h):
        p = game.current_player(h)
        if p == CHANCE:
            outcomes = game.chance_outcomes(h)
            j = rng.choice(len(outcomes), p=[o.prob for o in outcomes])
            h = game.apply(h, outcomes[j].action)
            continue
        key = game.info_state_key(h, p)
        probs = joint.probs(key)
        a = int(rng.choice(len(probs), p=probs))
        steps[p].append([key, a, 0.0, p, float(probs[a])])
        h = game.apply(h, a)
    returns = game.returns(h)
    out = []
    for p, seq in enumerate(steps):
        if seq:
            seq[-1][2] = float(returns[p])
        out.append([Transition(*s) for s in seq])
    return out, returns


def discounted_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Backward accumulation G_t = r_t + gamma * G_{t+1}, starting from ``bootstrap``."""
    rewards = [t.reward if isinstance(t, Transition) else t for t in rewards]
    out = np.empty(len(rewards))
    g = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        out[t] = g
    return out


@dataclass
class EpisodeBatch:
    """Decisions of ``count`` sampled episodes, ordered by episode then depth."""

    episode: np.ndarray
    player: np.ndarray
    infoset: np.ndarray
    sa: np.ndarray
    steps_after: np.ndarray  # own decisions remaining after this one in the episode
    returns: np.ndarray  # (count, players)


def sample_batch(tree: GameTree, policy: np.ndarray, rng: np.random.Generator, count: int) -> EpisodeBatch:
    """Sample ``count`` episodes at once by walking the compiled tree level by level."""
    f = edge_factors(tree, policy)
    node = np.zeros(count, dtype=np.int64)
    ep, pl, inf, sa = [], [], [], []
    live = np.arange(count)
    while True:
        live = live[tree.player[node[live]] != TERMINAL]
        if len(live) == 0:
            break
        cur = node[live]
        start = tree.child_start[cur]
        width = tree.num_children[cur]
        u = rng.random(len(live))
        choice = width - 1
        cum = np.zeros(len(live))
        undecided = np.ones(len(live), dtype=bool)
        for j in range(int(width.max())):
            valid = j < width
            cum = cum + np.where(valid, f[np.where(valid, start + j, 0)], 0.0)
            take = undecided & valid & (u < cum)
            choice = np.where(take, j, choice)
            undecided &= ~take
        child = start + choice
        dec = tree.player[cur] >= 0
        if dec.any():
            ep.append(live[dec])
            pl.append(tree.player[cur[dec]])
            inf.append(tree.infoset[cur[dec]])
            sa.append(tree.sa[child[dec]])
        node[live] = child
    episode = np.concatenate(ep) if ep else np.zeros(0, dtype=np.int64)
    order = np.argsort(episode, kind="stable")
    episode = episode[order]
    player = np.concatenate(pl)[order]
    infoset = np.concatenate(inf)[order]
    slots = np.concatenate(sa)[order]
    # own decisions remaining: count later records with the same (episode, player)
    n = tree.num_players
    group = episode * n + player
    total = np.bincount(group, minlength=count * n)
    by_group = np.argsort(group, kind="stable")
    g_sorted = group[by_group]
    rank = np.arange(len(group)) - np.searchsorted(g_sorted, g_sorted)
    steps_after = np.empty(len(group), dtype=np.int64)
    steps_after[by_group] = total[g_sorted] - rank - 1
    return EpisodeBatch(episode, player, infoset, slots, steps_after, tree.utils[node])


# -- trainer -----------------------------------------------------------------------


def _schedule(value) -> Schedule:
    return value if isinstance(value, Schedule) else Schedule.parse(str(value))


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class TrainerConfig:
    variant: str = "rpg"
    gamma: float = 0.99
    critic_lr: Schedule = Schedule("constant", 0.001)
    actor_lr: Schedule = Schedule("linear-anneal", 0.1, 0.0, 20_000_000)
    n_q: int = 16
    batch_size: int = 8
    entropy_cost: float = 0.1
    temperature: Schedule = Schedule("constant", 1.0)
    episodes: int = 500_000
    seed: int = 0
    eval_every: int = 50_000
    horizon_scale: float = 1 / 40
    strict_positive: bool = True
    normalize_rewards: bool = True
    freeze_policy: bool = False
    critic_averaging: bool = False

    _CASTS = {
        "variant": str,
        "gamma": float,
        "critic_lr": _schedule,
        "actor_lr": _schedule,
        "n_q": int,
        "batch_size": int,
        "entropy_cost": float,
        "temperature": _schedule,
        "episodes": int,
        "seed": int,
        "eval_every": int,
        "horizon_scale": float,
        "strict_positive": _bool,
        "normalize_rewards": _bool,
        "freeze_policy": _bool,
        "critic_averaging": _bool,
    }

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.n_q < 1 or self.batch_size < 1:
            raise ValueError("n_q and batch_size must be >= 1")
        if self.episodes < 1 or self.eval_every < 1:
            raise ValueError("episodes and eval_every must be >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: "TrainerConfig | None" = None) -> "TrainerConfig":
        known = cls.field_names()
        parsed = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown trainer config key {key!r}; known keys: {', '.join(known)}")
            try:
                parsed[key] = cls._CASTS[key](raw)
            except ValueError as exc:
                raise ValueError(f"bad value for config key {key!r}: {exc}") from None
        return dataclasses.replace(base or cls(), **parsed)

    def as_mapping(self) -> dict[str, str]:
        return {name: str(getattr(self, name)) for name in self.field_names()}

    @property
    def scaled_actor_lr(self) -> Schedule:
        return self.actor_lr.scaled(self.horizon_scale)

    @property
    def scaled_temperature(self) -> Schedule:
        return self.temperature.scaled(self.horizon_scale)

    @property
    def scaled_critic_lr(self) -> Schedule:
        return self.critic_lr.scaled(self.horizon_scale)


@dataclass
class TrainResult:
    record: RunRecord
    policy: LogitPolicy
    logits: np.ndarray
    critic: np.ndarray
    tree: GameTree
    visits: np.ndarray = field(default_factory=lambda: np.zeros(0))


def train(config: TrainerConfig, game: Game | GameTree, initial_logits: np.ndarray | None = None) -> TrainResult:
    """Self-play training; every player learns simultaneously with its own tables."""
    tree = game if isinstance(game, GameTree) else tree_for(game)
    n = tree.num_players
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    logits = np.zeros(tree.num_sa) if initial_logits is None else np.array(initial_logits, dtype=float)
    a2c = config.variant == "a2c"
    critic = np.zeros(tree.num_infosets if a2c else tree.num_sa)
    visits = np.zeros(tree.num_sa)
    seen = np.zeros(len(critic), dtype=np.int64) if config.critic_averaging else None
    normalizers = [RewardNormalizer() for _ in range(n)]
    actor_lr, temp_sched, critic_sched = config.scaled_actor_lr, config.scaled_temperature, config.scaled_critic_lr
    record = RunRecord(
        SCHEMAS["train"],
        metadata={"algorithm": "actor-critic", "game": tree.game.name, "variant": config.variant, "seed": config.seed},
    )
    per_round = config.n_q * config.batch_size
    done = 0
    next_eval = config.eval_every
    losses: list[float] = []
    while done < config.episodes:
        # a round never straddles an evaluation point, so records land on exact multiples of eval_every
        count = min(per_round, config.episodes - done, next_eval - done)
        tau = max(temp_sched.value(done), TEMPERATURE_FLOOR)
        pi = flat_softmax(tree, logits, tau)
        batch = sample_batch(tree, pi, rng, count)
        np.add.at(visits, batch.sa, 1.0)

        rewards = batch.returns.copy()
        if config.normalize_rewards:
            for e in range(count):
                for p in range(n):
                    rewards[e, p] = normalizers[p].normalize(rewards[e, p])
        G = rewards[batch.episode, batch.player] * config.gamma ** batch.steps_after
        index = batch.infoset if a2c else batch.sa

        bounds = np.searchsorted(batch.episode, np.arange(0, count + config.batch_size, config.batch_size))
        losses = []
        for b in range(len(bounds) - 1):
            lo, hi = bounds[b], bounds[b + 1]
            if hi > lo:
                losses.append(critic_update(critic, index[lo:hi], G[lo:hi], critic_sched.value(done), seen))

        if not config.freeze_policy:
            lo, hi = bounds[len(bounds) - 2], bounds[len(bounds) - 1]
            episodes_in_batch = max(1, min(config.batch_size, count - (len(bounds) - 2) * config.batch_size))
            grad = _actor_step(tree, pi, critic, batch, G, lo, hi, config, tau) / episodes_in_batch
            logits = center_logits(tree, logits + actor_lr.value(done) * grad)

        done += count
        if done >= next_eval or done == config.episodes:
            while next_eval <= done:
                next_eval += config.eval_every
            eval_pi = flat_softmax(tree, logits, 1.0)
            ent = -np.bincount(tree.sa_infoset, weights=eval_pi * np.log(eval_pi), minlength=tree.num_infosets)
            record.append(
                done,
                config.variant,
                config.seed,
                nash_conv(eval_pi, tree),
                float(ent.mean()),
                float(np.mean(losses)) if losses else 0.0,
            )
    policy = LogitPolicy({k: logits[tree.slots(s)].copy() for s, k in enumerate(tree.keys)}, 1.0)
    return TrainResult(record, policy, logits, critic, tree, visits)


def _actor_step(tree, pi, critic, batch: EpisodeBatch, G, lo, hi, config: TrainerConfig, tau) -> np.ndarray:
    """Summed logit gradient over the decisions recorded in ``[lo, hi)``."""
    inf = batch.infoset[lo:hi]
    per_state = np.bincount(inf, minlength=tree.num_infosets).astype(float)[tree.sa_infoset]
    if config.variant == "a2c":
        adv = G[lo:hi] - critic[inf]
        onehot = np.bincount(batch.sa[lo:hi], weights=adv, minlength=tree.num_sa)
        base = np.bincount(inf, weights=adv, minlength=tree.num_infosets)[tree.sa_infoset]
        grad = onehot - pi * base
    else:
        grad = per_state * flat_gradients(tree, pi, critic, config.variant, config.strict_positive)
    if config.entropy_cost:
        grad = grad + config.entropy_cost * per_state * flat_entropy_gradient(tree, pi)
    return grad / tau
