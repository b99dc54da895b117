"""n-player Leduc hold'em.

Deck of 2(n+1) cards in two suits (card id c has rank c // 2). Ante 1, one
private card each, a betting round with bet size 2, one public card, a second
round with bet size 4, at most two raises per round. A pair with the public
card beats any non-pair; otherwise the higher rank wins and ties split.

With ``penalty_mode`` every decision exposes fold/call/raise; picking one that
is illegal ends the hand at once, charging the offender ``penalty`` chips that
the other players share equally.
"""

from __future__ import annotations

from typing import NamedTuple

from .base import CHANCE, TERMINAL, Action, ChanceOutcome, Game, GameSpec
from .kuhn import rank_labels

FOLD, CALL, RAISE = "fold", "call", "raise"
_CODES = {FOLD: "f", CALL: "c", RAISE: "r"}
MAX_RAISES = 2
BET_SIZES = (2, 4)


class LeducState(NamedTuple):
    private: tuple[int, ...]
    public: int  # -1 until revealed
    rounds: tuple[str, ...]  # action codes per betting round
    contrib: tuple[int, ...]
    folded: tuple[bool, ...]
    raises: int
    pending: int  # players still owing an action this round
    to_act: int
    offender: int  # penalty-mode offender, -1 otherwise


class LeducPoker(Game):
    def __init__(self, num_players: int = 2, penalty_mode: bool = False, penalty: float = 2.0):
        if num_players < 2:
            raise ValueError("Leduc poker needs at least two players")
        n = num_players
        self.deck_size = 2 * (n + 1)
        self.labels = rank_labels(n + 1)
        self.penalty_mode = penalty_mode
        self.penalty = float(penalty)
        max_contrib = 1 + MAX_RAISES * sum(BET_SIZES)
        round_len = 3 * n - 2
        self.spec = GameSpec(
            name=f"leduc:{n}" + (":penalty" if penalty_mode else ""),
            num_players=n,
            max_episode_length=n + round_len + 1 + round_len,
            reward_range=(-float(max_contrib), float((n - 1) * max_contrib)),
            params={
                "deck_size": self.deck_size,
                "ante": 1,
                "bet_sizes": BET_SIZES,
                "max_raises": MAX_RAISES,
                "penalty_mode": penalty_mode,
                "penalty": self.penalty,
            },
        )

    # -- helpers -----------------------------------------------------------
    def _remaining(self, state) -> list[int]:
        used = set(state.private)
        if state.public >= 0:
            used.add(state.public)
        return [c for c in range(self.deck_size) if c not in used]

    def _active(self, state) -> list[int]:
        return [p for p in range(self.num_players) if not state.folded[p]]

    def _next_active(self, state, after: int) -> int:
        n = self.num_players
        for k in range(1, n + 1):
            p = (after + k) % n
            if not state.folded[p]:
                return p
        raise AssertionError("no active player")

    def _round_over(self, state) -> bool:
        return state.pending == 0

    def _strict_legal(self, state) -> list[str]:
        p = state.to_act
        labels = []
        if state.contrib[p] < max(state.contrib):
            labels.append(FOLD)
        labels.append(CALL)
        if state.raises < MAX_RAISES:
            labels.append(RAISE)
        return labels

    # -- hooks -------------------------------------------------------------
    def _initial_state(self):
        n = self.num_players
        return LeducState((), -1, ("",), (1,) * n, (False,) * n, 0, n, 0, -1)

    def _player(self, state):
        if state.offender >= 0:
            return TERMINAL
        if len(state.private) < self.num_players:
            return CHANCE
        if len(self._active(state)) == 1:
            return TERMINAL
        if self._round_over(state):
            if len(state.rounds) == 1 and state.public < 0:
                return CHANCE
            return TERMINAL
        return state.to_act

    def _legal(self, state):
        if self.penalty_mode:
            return [Action(0, FOLD), Action(1, CALL), Action(2, RAISE)]
        return [Action(i, lab) for i, lab in enumerate(self._strict_legal(state))]

    def _chance(self, state):
        left = self._remaining(state)
        p = 1.0 / len(left)
        tag = "deal" if len(state.private) < self.num_players else "public"
        return [
            ChanceOutcome(Action(i, f"{tag}:{self.labels[c // 2]}{'ab'[c % 2]}"), p)
            for i, c in enumerate(left)
        ]

    def _next(self, state, action):
        n = self.num_players
        if len(state.private) < n:
            card = self._remaining(state)[action.id]
            return state._replace(private=state.private + (card,))
        if state.public < 0 and self._round_over(state):
            card = self._remaining(state)[action.id]
            first = self._next_active(state, n - 1)
            return state._replace(
                public=card,
                rounds=state.rounds + ("",),
                raises=0,
                pending=len(self._active(state)),
                to_act=first,
            )
        p = state.to_act
        label = action.label
        if label not in self._strict_legal(state):
            return state._replace(offender=p)
        rounds = state.rounds[:-1] + (state.rounds[-1] + _CODES[label],)
        contrib = list(state.contrib)
        folded = state.folded
        raises = state.raises
        pending = state.pending - 1
        if label == FOLD:
            folded = folded[:p] + (True,) + folded[p + 1 :]
        elif label == CALL:
            contrib[p] = max(contrib)
        else:
            contrib[p] = max(contrib) + BET_SIZES[len(state.rounds) - 1]
            raises += 1
            pending = sum(1 for q in range(n) if not folded[q]) - 1
        nxt = state._replace(
            rounds=rounds, contrib=tuple(contrib), folded=folded, raises=raises, pending=pending
        )
        if pending > 0:
            nxt = nxt._replace(to_act=self._next_active(nxt, p))
        return nxt

    def _returns(self, state):
        n = self.num_players
        if state.offender >= 0:
            share = self.penalty / (n - 1)
            return [-self.penalty if p == state.offender else share for p in range(n)]
        active = self._active(state)
        if len(active) == 1:
            winners = active
        else:
            pub_rank = state.public // 2

            def strength(p):
                rank = state.private[p] // 2
                return (rank == pub_rank, rank)

            best = max(strength(p) for p in active)
            winners = [p for p in active if strength(p) == best]
        pot = sum(state.contrib)
        share = pot / len(winners)
        return [(share if p in winners else 0.0) - state.contrib[p] for p in range(n)]

    def _key(self, state, player):
        card = self.labels[state.private[player] // 2] if player < len(state.private) else ""
        public = "/".join(state.rounds)
        if state.public >= 0:
            r1, r2 = state.rounds
            public = f"{r1}/{self.labels[state.public // 2]}/{r2}"
        return f"p{player}|{card}|{public}"
