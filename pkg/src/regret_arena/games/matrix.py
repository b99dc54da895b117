"""Two-player matrix games and their one-shot extensive-form lifting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import TERMINAL, Action, Game, GameSpec


@dataclass(frozen=True)
class MatrixGame:
    """Bimatrix game; ``row[i, j]`` and ``col[i, j]`` are payoffs for joint play (i, j)."""

    name: str
    actions: tuple[str, ...]
    row: np.ndarray
    col: np.ndarray

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def payoff_vs(self, player: int, other: np.ndarray) -> np.ndarray:
        """Expected payoff of each pure action of ``player`` against a mixed co-player."""
        if player == 0:
            return self.row @ other
        return self.col.T @ other


def _symmetric(name, actions, table) -> MatrixGame:
    a = np.array(table, dtype=float)
    return MatrixGame(name, actions, a, a.T.copy())


MATCHING_PENNIES = MatrixGame(
    "mp",
    ("H", "T"),
    np.array([[1.0, -1.0], [-1.0, 1.0]]),
    np.array([[-1.0, 1.0], [1.0, -1.0]]),
)
ROCK_PAPER_SCISSORS = _symmetric("rps", ("R", "P", "S"), [[0, -1, 1], [1, 0, -1], [-1, 1, 0]])
BIASED_RPS = _symmetric(
    "brps", ("R", "P", "S"), [[0, -0.25, 0.5], [0.25, 0, -0.05], [-0.5, 0.05, 0]]
)
# Constant-sum (2) variant; the symmetric reading gives the column player the transpose.
GENERALIZED_RPS = _symmetric("grps", ("R", "P", "S"), [[1, 0, 2], [2, 1, 0], [0, 2, 1]])

MATRIX_GAMES = {g.name: g for g in (MATCHING_PENNIES, ROCK_PAPER_SCISSORS, BIASED_RPS, GENERALIZED_RPS)}


def get_matrix_game(name: str) -> MatrixGame:
    try:
        return MATRIX_GAMES[name]
    except KeyError:
        raise ValueError(f"unknown matrix game {name!r}; choose from {sorted(MATRIX_GAMES)}") from None


class LiftedMatrixGame(Game):
    """Row player moves, then the column player moves without seeing it."""

    def __init__(self, matrix: MatrixGame):
        self.matrix = matrix
        lo = float(min(matrix.row.min(), matrix.col.min()))
        hi = float(max(matrix.row.max(), matrix.col.max()))
        self.spec = GameSpec(
            name=f"matrix:{matrix.name}",
            num_players=2,
            max_episode_length=2,
            reward_range=(lo, hi),
            params={"matrix": matrix.name},
        )
        self._actions = [Action(i, lab) for i, lab in enumerate(matrix.actions)]

    def _initial_state(self):
        return ()

    def _player(self, state):
        return TERMINAL if len(state) == 2 else len(state)

    def _legal(self, state):
        return list(self._actions)

    def _next(self, state, action):
        return state + (action.id,)

    def _returns(self, state):
        r, c = state
        return [self.matrix.row[r, c], self.matrix.col[r, c]]

    def _key(self, state, player):
        return f"p{player}||"
