"""Extensive-form game abstraction.

Games are immutable rule objects; histories are immutable values carrying a
game-private state snapshot so that ``apply`` is O(1) instead of a replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import ContractViolation, GameError, IllegalActionError

CHANCE = -1
TERMINAL = -2

CHANCE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Action:
    id: int
    label: str


@dataclass(frozen=True)
class ChanceOutcome:
    action: Action
    prob: float


@dataclass(frozen=True)
class History:
    """Action sequence from the root (chance moves included)."""

    moves: tuple[Action, ...] = ()
    state: Any = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.moves)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.moves)


@dataclass(frozen=True)
class GameSpec:
    name: str
    num_players: int
    max_episode_length: int
    reward_range: tuple[float, float]
    params: dict = field(default_factory=dict)


def key_player(key: str) -> int:
    """Player index encoded in an info-state key ``p<i>|...``."""
    return int(key[1 : key.index("|")])


class Game:
    """Base class; subclasses implement the underscore hooks on raw states."""

    spec: GameSpec

    @property
    def num_players(self) -> int:
        return self.spec.num_players

    @property
    def name(self) -> str:
        return self.spec.name

    # -- hooks -------------------------------------------------------------
    def _initial_state(self) -> Any:
        raise NotImplementedError

    def _player(self, state) -> int:
        raise NotImplementedError

    def _legal(self, state) -> list[Action]:
        raise NotImplementedError

    def _chance(self, state) -> list[ChanceOutcome]:
        raise NotImplementedError

    def _next(self, state, action: Action) -> Any:
        raise NotImplementedError

    def _returns(self, state) -> Sequence[float]:
        raise NotImplementedError

    def _key(self, state, player: int) -> str:
        raise NotImplementedError

    # -- public API --------------------------------------------------------
    def initial_history(self) -> History:
        return History((), self._initial_state())

    def _state_of(self, h: History):
        if not isinstance(h, History):
            raise GameError(f"expected a History, got {type(h).__name__}")
        if h.state is None:
            if h.moves:
                return self.replay(h.ids).state
            return self._initial_state()
        return h.state

    def current_player(self, h: History) -> int:
        return self._player(self._state_of(h))

    def is_terminal(self, h: History) -> bool:
        return self.current_player(h) == TERMINAL

    def is_chance(self, h: History) -> bool:
        return self.current_player(h) == CHANCE

    def legal_actions(self, h: History) -> list[Action]:
        state = self._state_of(h)
        p = self._player(state)
        if p == TERMINAL:
            raise ContractViolation("legal_actions called on a terminal history")
        if p == CHANCE:
            return [o.action for o in self._chance(state)]
        return self._legal(state)

    def chance_outcomes(self, h: History) -> list[ChanceOutcome]:
        state = self._state_of(h)
        if self._player(state) != CHANCE:
            raise ContractViolation("chance_outcomes called on a non-chance node")
        return self._chance(state)

    def apply(self, h: History, a: Action | int) -> History:
        state = self._state_of(h)
        if self._player(state) == TERMINAL:
            raise ContractViolation("apply called on a terminal history")
        legal = self.legal_actions(h)
        aid = a.id if isinstance(a, Action) else int(a)
        if not 0 <= aid < len(legal):
            raise IllegalActionError(
                f"action id {aid} out of range for {len(legal)} legal actions"
            )
        action = legal[aid]
        if isinstance(a, Action) and a.label != action.label:
            raise IllegalActionError(
                f"action {a.label!r} does not match legal action {action.label!r} at id {aid}"
            )
        return History(h.moves + (action,), self._next(state, action))

    def returns(self, h: History) -> np.ndarray:
        state = self._state_of(h)
        if self._player(state) != TERMINAL:
            raise ContractViolation("returns called on a non-terminal history")
        return np.asarray(self._returns(state), dtype=float)

    def info_state_key(self, h: History, player: int) -> str:
        if not 0 <= player < self.num_players:
            raise GameError(f"player {player} out of range")
        return self._key(self._state_of(h), player)

    def replay(self, ids: Sequence[int]) -> History:
        """Rebuild a history from action ids, validating every step."""
        h = self.initial_history()
        for aid in ids:
            h = self.apply(h, aid)
        return h

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"
