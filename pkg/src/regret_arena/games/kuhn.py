"""n-player Kuhn poker.

Each player antes 1 chip and holds one more; the deck has n+1 ranks. Play
goes round the table once; after the first bet every other player answers it
exactly once (call or fold) and the hand ends.
"""

from __future__ import annotations

from typing import NamedTuple

from .base import CHANCE, TERMINAL, Action, ChanceOutcome, Game, GameSpec

RANK_CHARS = "23456789TJQKA"

PASS = Action(0, "pass")
BET = Action(1, "bet")
_CODES = {"pass": "p", "bet": "b"}


def rank_labels(num_ranks: int) -> str:
    if num_ranks > len(RANK_CHARS):
        raise ValueError(f"at most {len(RANK_CHARS)} ranks supported")
    # small decks end at K (J < Q < K for three cards); the ace only joins a 13-rank deck
    if num_ranks < len(RANK_CHARS):
        return RANK_CHARS[-num_ranks - 1 : -1]
    return RANK_CHARS


class KuhnState(NamedTuple):
    cards: tuple[int, ...]
    bets: str


class KuhnPoker(Game):
    def __init__(self, num_players: int = 2):
        if num_players < 2:
            raise ValueError("Kuhn poker needs at least two players")
        n = num_players
        self.deck_size = n + 1
        self.labels = rank_labels(self.deck_size)
        self.spec = GameSpec(
            name=f"kuhn:{n}",
            num_players=n,
            max_episode_length=n + 2 * n - 1,
            reward_range=(-2.0, 2.0 * n - 2.0),
            params={"deck_size": n + 1, "ante": 1, "bet": 1},
        )

    def _initial_state(self):
        return KuhnState((), "")

    def _first_bet(self, bets: str) -> int:
        return bets.find("b")

    def _player(self, state):
        n = self.num_players
        if len(state.cards) < n:
            return CHANCE
        j = self._first_bet(state.bets)
        if j < 0:
            return TERMINAL if len(state.bets) == n else len(state.bets)
        answered = len(state.bets) - j - 1
        if answered == n - 1:
            return TERMINAL
        return (j + 1 + answered) % n

    def _legal(self, state):
        return [PASS, BET]

    def _chance(self, state):
        left = [c for c in range(self.deck_size) if c not in state.cards]
        p = 1.0 / len(left)
        return [ChanceOutcome(Action(i, f"deal:{self.labels[c]}"), p) for i, c in enumerate(left)]

    def _next(self, state, action):
        if len(state.cards) < self.num_players:
            left = [c for c in range(self.deck_size) if c not in state.cards]
            return KuhnState(state.cards + (left[action.id],), state.bets)
        return KuhnState(state.cards, state.bets + _CODES[action.label])

    def _returns(self, state):
        n = self.num_players
        contrib = [1] * n
        j = self._first_bet(state.bets)
        if j < 0:
            contenders = list(range(n))
        else:
            contrib[j] += 1
            contenders = [j]
            for k, code in enumerate(state.bets[j + 1 :]):
                p = (j + 1 + k) % n
                if code == "b":
                    contrib[p] += 1
                    contenders.append(p)
        winner = max(contenders, key=lambda p: state.cards[p])
        pot = sum(contrib)
        return [(pot if p == winner else 0) - contrib[p] for p in range(n)]

    def _key(self, state, player):
        card = self.labels[state.cards[player]] if player < len(state.cards) else ""
        return f"p{player}|{card}|{state.bets}"
