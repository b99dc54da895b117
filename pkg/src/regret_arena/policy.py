"""Tabular policies, softmax/logit helpers, simplex projection and schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import MissingPolicyEntryError
from .games.tree import GameTree
from .io import atomic_write_text, fmt_exact

TEMPERATURE_FLOOR = 1e-3
VARIANCE_FLOOR = 1e-8


# -- softmax -----------------------------------------------------------------


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=float) / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_jacobian(pi) -> np.ndarray:
    """J[a, b] = d pi(a) / d theta_b = 1{a=b} pi(a) - pi(a) pi(b)."""
    pi = np.asarray(pi, dtype=float)
    return np.diag(pi) - np.outer(pi, pi)


# -- projection onto the probability simplex ------------------------------------


def project_simplex(y) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by sort-and-threshold."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("project_simplex expects a vector; use project_rows for matrices")
    return project_rows(y[None, :])[0]


def project_rows(y) -> np.ndarray:
    """Row-wise simplex projection of a 2-D array."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot project non-finite values")
    m = y.shape[1]
    u = -np.sort(-y, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, m + 1)
    cond = u - css / idx > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(len(y)), rho] / (rho + 1)
    return np.maximum(y - tau[:, None], 0.0)


def shift_invariance_check(y, k: float, tol: float = 1e-9) -> bool:
    """True iff projecting y and y - k*1 agree componentwise within ``tol``."""
    y = np.asarray(y, dtype=float)
    return bool(np.all(np.abs(project_simplex(y - k) - project_simplex(y)) <= tol))


# -- schedules -----------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Step-indexed scalar schedule.

    ``constant`` returns ``start``; ``linear-anneal`` interpolates from
    ``start`` to ``end`` over ``horizon`` steps and then holds ``end``;
    ``inverse-sqrt`` returns ``start / sqrt(step)`` for step >= 1.
    """

    kind: str = "constant"
    start: float = 1.0
    end: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "linear-anneal", "inverse-sqrt"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear-anneal" and self.horizon < 1:
            raise ValueError("linear-anneal needs a positive horizon")

    def value(self, step: int) -> float:
        if self.kind == "constant":
            return self.start
        if self.kind == "inverse-sqrt":
            return self.start / math.sqrt(max(step, 1))
        frac = min(max(step, 0) / self.horizon, 1.0)
        return self.start + (self.end - self.start) * frac

    def scaled(self, factor: float) -> "Schedule":
        if self.kind != "linear-anneal":
            return self
        return Schedule(self.kind, self.start, self.end, max(1, int(round(self.horizon * factor))))

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """``0.01`` | ``constant:0.01`` | ``linear-anneal:start:end:horizon`` | ``inverse-sqrt[:start]``."""
        parts = text.strip().split(":")
        try:
            if len(parts) == 1 and parts[0] != "inverse-sqrt":
                return cls("constant", float(parts[0]))
            kind, args = parts[0], [float(p) for p in parts[1:]]
            if kind == "constant" and len(args) == 1:
                return cls(kind, args[0])
            if kind == "inverse-sqrt" and len(args) <= 1:
                return cls(kind, args[0] if args else 1.0)
            if kind == "linear-anneal" and len(args) == 3:
                return cls(kind, args[0], args[1], int(args[2]))
        except ValueError:
            pass
        raise ValueError(f"cannot parse schedule {text!r}")

    def __str__(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.start:g}"
        if self.kind == "inverse-sqrt":
            return f"inverse-sqrt:{self.start:g}"
        return f"linear-anneal:{self.start:g}:{self.end:g}:{self.horizon}"


# -- streaming reward normalization ------------------------------------------------


@dataclass
class RewardNormalizer:
    """Welford running mean/variance; each sample is normalized after it is absorbed."""

    eps: float = VARIANCE_FLOOR
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count else 0.0

    def normalize(self, x: float) -> float:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        return (x - self.mean) / max(math.sqrt(self.variance), self.eps)

    def normalize_many(self, xs: Iterable[float]) -> np.ndarray:
        return np.array([self.normalize(float(x)) for x in xs])


# -- policy tables -------------------------------------------------------------------


class TabularPolicy:
    """Map from info-state key to a probability vector over legal actions."""

    def __init__(self, table: Mapping[str, np.ndarray] | None = None):
        self.table: dict[str, np.ndarray] = {k: np.asarray(v, dtype=float) for k, v in (table or {}).items()}

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.table[key]
        except KeyError:
            raise MissingPolicyEntryError(key) from None

    def __contains__(self, key) -> bool:
        return key in self.table

    def __len__(self) -> int:
        return len(self.table)

    def __iter__(self):
        return iter(self.table)

    def items(self):
        return self.table.items()

    def copy(self) -> "TabularPolicy":
        return TabularPolicy({k: v.copy() for k, v in self.table.items()})

    def merged(self, other: "TabularPolicy") -> "TabularPolicy":
        out = self.copy()
        out.table.update({k: v.copy() for k, v in other.table.items()})
        return out

    def for_player(self, player: int) -> "TabularPolicy":
        prefix = f"p{player}|"
        return TabularPolicy({k: v for k, v in self.table.items() if k.startswith(prefix)})

    @classmethod
    def uniform(cls, tree: GameTree) -> "TabularPolicy":
        return cls.from_flat(tree, tree.uniform_policy())

    @classmethod
    def from_flat(cls, tree: GameTree, flat: np.ndarray) -> "TabularPolicy":
        return cls({k: np.array(flat[tree.slots(s)]) for s, k in enumerate(tree.keys)})

    def to_flat(self, tree: GameTree) -> np.ndarray:
        flat = np.empty(tree.num_sa)
        for s, key in enumerate(tree.keys):
            row = self[key]
            if len(row) != tree.num_actions[s]:
                raise ValueError(f"info state {key!r}: expected {tree.num_actions[s]} actions, got {len(row)}")
            flat[tree.slots(s)] = row
        return flat

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return all(np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol for v in self.table.values())

    def save(self, path) -> Path:
        lines = [f"{k}\t" + ",".join(fmt_exact(x) for x in v) for k, v in sorted(self.table.items())]
        return atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class LogitPolicy:
    """Softmax policy over per-info-state logits."""

    logits: dict[str, np.ndarray] = field(default_factory=dict)
    temperature: float = 1.0

    @classmethod
    def zeros(cls, tree: GameTree, player: int | None = None) -> "LogitPolicy":
        keep = range(tree.num_infosets) if player is None else tree.infosets_of(player)
        return cls({tree.keys[s]: np.zeros(int(tree.num_actions[s])) for s in keep})

    def probs(self, key: str, temperature: float | None = None) -> np.ndarray:
        try:
            theta = self.logits[key]
        except KeyError:
            raise MissingPolicyEntryError(key) from None
        return softmax(theta, self.temperature if temperature is None else temperature)

    def to_tabular(self, temperature: float | None = None) -> TabularPolicy:
        return TabularPolicy({k: self.probs(k, temperature) for k in self.logits})

    def save(self, path) -> Path:
        lines = [f"{k}\tL\t" + ",".join(fmt_exact(x) for x in v) for k, v in sorted(self.logits.items())]
        return atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class SimplexParamPolicy:
    """Direct simplex parameters theta_s; the policy is theta itself."""

    weights: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def uniform(cls, tree: GameTree) -> "SimplexParamPolicy":
        return cls({k: np.full(int(m), 1.0 / m) for k, m in zip(tree.keys, tree.num_actions)})

    def to_tabular(self) -> TabularPolicy:
        return TabularPolicy({k: v.copy() for k, v in self.weights.items()})


def load_policy(path) -> TabularPolicy | LogitPolicy:
    """Read a policy file written by ``TabularPolicy.save`` or ``LogitPolicy.save``."""
    probs: dict[str, np.ndarray] = {}
    logits: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        try:
            if len(fields) == 2:
                probs[fields[0]] = np.array([float(x) for x in fields[1].split(",")])
            elif len(fields) == 3 and fields[1] == "L":
                logits[fields[0]] = np.array([float(x) for x in fields[2].split(",")])
            else:
                raise ValueError("unexpected field layout")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed policy line ({exc})") from None
    if probs and logits:
        raise ValueError(f"{path}: mixes probability and logit rows")
    if logits:
        return LogitPolicy(logits)
    return TabularPolicy(probs)


def load_tabular(paths: Iterable) -> TabularPolicy:
    """Merge one or more policy files into a probability table (logits at temperature 1)."""
    merged = TabularPolicy()
    for p in paths:
        pol = load_policy(p)
        if isinstance(pol, LogitPolicy):
            pol = pol.to_tabular(1.0)
        merged = merged.merged(pol)
    return merged
