"""Game engines: Kuhn, Leduc and lifted matrix games."""

from .base import CHANCE, TERMINAL, Action, ChanceOutcome, Game, GameSpec, History, key_player
from .kuhn import KuhnPoker
from .leduc import LeducPoker
from .matrix import (
    BIASED_RPS,
    GENERALIZED_RPS,
    MATCHING_PENNIES,
    MATRIX_GAMES,
    ROCK_PAPER_SCISSORS,
    LiftedMatrixGame,
    MatrixGame,
    get_matrix_game,
)
from .tree import GameTree, compile_tree, enumerate_info_states, tree_for


def load_game(name: str) -> Game:
    """Build a game from ``kuhn:<n>``, ``leduc:<n>[:penalty]`` or ``matrix:<name>``."""
    kind, _, rest = name.partition(":")
    try:
        if kind == "kuhn":
            return KuhnPoker(int(rest))
        if kind == "leduc":
            n, _, flag = rest.partition(":")
            if flag not in ("", "penalty"):
                raise ValueError(flag)
            return LeducPoker(int(n), penalty_mode=flag == "penalty")
        if kind == "matrix":
            return LiftedMatrixGame(get_matrix_game(rest))
    except ValueError as exc:
        raise ValueError(f"bad game string {name!r}: {exc}") from None
    raise ValueError(f"bad game string {name!r}; expected kuhn:<n>, leduc:<n> or matrix:<name>")


__all__ = [
    "CHANCE",
    "TERMINAL",
    "Action",
    "ChanceOutcome",
    "Game",
    "GameSpec",
    "GameTree",
    "History",
    "KuhnPoker",
    "LeducPoker",
    "LiftedMatrixGame",
    "MatrixGame",
    "MATRIX_GAMES",
    "MATCHING_PENNIES",
    "ROCK_PAPER_SCISSORS",
    "BIASED_RPS",
    "GENERALIZED_RPS",
    "compile_tree",
    "enumerate_info_states",
    "get_matrix_game",
    "key_player",
    "load_game",
    "tree_for",
]
