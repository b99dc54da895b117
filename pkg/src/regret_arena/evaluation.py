"""Head-to-head evaluation of a policy against a fixed opponent policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actor_critic import sample_batch
from .games.base import Game
from .games.tree import GameTree
from .metrics import as_flat, as_tree, expected_returns
from .policy import TabularPolicy


@dataclass
class SeatResult:
    seat: int
    mean: float
    stderr: float
    exact: float
    episodes: int


@dataclass
class HeadToHeadReport:
    seats: list[SeatResult] = field(default_factory=list)

    @property
    def mean(self) -> float:
        """Return to the learner averaged over seats, each seat weighted equally."""
        return float(np.mean([s.mean for s in self.seats]))

    @property
    def stderr(self) -> float:
        return float(np.sqrt(np.sum([s.stderr**2 for s in self.seats])) / len(self.seats))

    @property
    def exact(self) -> float:
        return float(np.mean([s.exact for s in self.seats]))


def seat_joint(tree: GameTree, learner: np.ndarray, fixture: np.ndarray, seat: int) -> np.ndarray:
    """Fixture everywhere except the info states of ``seat``, which follow the learner."""
    joint = fixture.copy()
    mine = tree.infoset_player[tree.sa_infoset] == seat
    joint[mine] = learner[mine]
    return joint


def head_to_head(
    learner: TabularPolicy | np.ndarray,
    fixture: TabularPolicy | np.ndarray,
    game: Game | GameTree,
    episodes: int,
    seed: int = 0,
    seats: list[int] | None = None,
) -> HeadToHeadReport:
    """Sample ``episodes`` per seat with the learner in that seat and the fixture elsewhere."""
    if episodes < 1:
        raise ValueError("head-to-head needs at least one episode per seat")
    tree = as_tree(game)
    lf, ff = as_flat(tree, learner), as_flat(tree, fixture)
    seats = list(range(tree.num_players)) if seats is None else seats
    streams = np.random.SeedSequence(seed).spawn(len(seats))
    report = HeadToHeadReport()
    for seat, stream in zip(seats, streams):
        rng = np.random.default_rng(stream)
        joint = seat_joint(tree, lf, ff, seat)
        returns = sample_batch(tree, joint, rng, episodes).returns[:, seat]
        stderr = float(returns.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else float("nan")
        report.seats.append(
            SeatResult(seat, float(returns.mean()), stderr, float(expected_returns(joint, tree)[seat]), episodes)
        )
    return report
