"""Continuous-time learning dynamics on two-player matrix games.

Three vector fields act on a joint point (x, y) of mixed strategies, with
u = payoff of each pure action against the co-player's mixture and
A(a) = u(a) - pi . u:

* replicator:  x'(a) = x(a) A(a)
* qpg:         x'(a) = x(a) (x(a) A(a) - sum_b x(b)^2 A(b))
* rpg:         n_{a+} times the qpg field, n_{a+} = #{a : A(a) > 0}
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationError
from .games.matrix import MatrixGame
from .io import fmt_metric

CLAMP_TOLERANCE = 1e-6


@dataclass(frozen=True)
class JointPoint:
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def of(cls, x, y) -> "JointPoint":
        return cls(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @classmethod
    def uniform(cls, game: MatrixGame) -> "JointPoint":
        m = game.num_actions
        return cls(np.full(m, 1.0 / m), np.full(m, 1.0 / m))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


Field = Callable[[JointPoint, MatrixGame], JointPoint]


def _advantages(point: JointPoint, game: MatrixGame):
    ux = game.payoff_vs(0, point.y)
    uy = game.payoff_vs(1, point.x)
    return ux - point.x @ ux, uy - point.y @ uy


def replicator_field(point: JointPoint, game: MatrixGame) -> JointPoint:
    ax, ay = _advantages(point, game)
    return JointPoint(point.x * ax, point.y * ay)


def _qpg_one(pi, adv):
    return pi * (pi * adv - np.sum(pi**2 * adv))


def qpg_field(point: JointPoint, game: MatrixGame) -> JointPoint:
    ax, ay = _advantages(point, game)
    return JointPoint(_qpg_one(point.x, ax), _qpg_one(point.y, ay))


def make_rpg_field(strict: bool = True) -> Field:
    def rpg_field(point: JointPoint, game: MatrixGame) -> JointPoint:
        ax, ay = _advantages(point, game)
        nx = np.sum(ax > 0) if strict else np.sum(ax >= 0)
        ny = np.sum(ay > 0) if strict else np.sum(ay >= 0)
        return JointPoint(nx * _qpg_one(point.x, ax), ny * _qpg_one(point.y, ay))

    return rpg_field


rpg_field = make_rpg_field(strict=True)

FIELDS: dict[str, Field] = {"replicator": replicator_field, "qpg": qpg_field, "rpg": rpg_field}


def get_field(name: str) -> Field:
    try:
        return FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(FIELDS)}") from None


# -- integration ------------------------------------------------------------------


@dataclass
class Trace:
    t: np.ndarray  # (steps + 1,)
    x: np.ndarray  # (steps + 1, m)
    y: np.ndarray
    avg_x: np.ndarray  # running mean of the visited points
    avg_y: np.ndarray

    @property
    def final_average(self) -> JointPoint:
        return JointPoint(self.avg_x[-1], self.avg_y[-1])

    def rows(self) -> list[tuple]:
        m = self.x.shape[1]
        keep = 1 if m == 2 else 2
        out = []
        for i in range(len(self.t)):
            coords = [v for a in range(keep) for v in (self.x[i, a], self.y[i, a])]
            avgs = [v for a in range(keep) for v in (self.avg_x[i, a], self.avg_y[i, a])]
            out.append((self.t[i], *coords, *avgs))
        return out


def _renormalize(v: np.ndarray, dt: float) -> np.ndarray:
    if np.any(v < -CLAMP_TOLERANCE) or not np.all(np.isfinite(v)):
        raise IntegrationError(
            f"trajectory left the simplex (min component {v.min():.3g}); try a smaller dt than {dt}"
        )
    v = np.maximum(v, 0.0)
    return v / v.sum()


def _step(field: Field, game: MatrixGame, p: JointPoint, dt: float, method: str) -> JointPoint:
    if method == "euler":
        d = field(p, game)
        return JointPoint(p.x + dt * d.x, p.y + dt * d.y)
    if method == "rk4":

        def at(base, d, h):
            return JointPoint(base.x + h * d.x, base.y + h * d.y)

        k1 = field(p, game)
        k2 = field(at(p, k1, dt / 2), game)
        k3 = field(at(p, k2, dt / 2), game)
        k4 = field(at(p, k3, dt), game)
        return JointPoint(
            p.x + dt / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x),
            p.y + dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
        )
    raise ValueError(f"unknown integration method {method!r}; use 'euler' or 'rk4'")


def integrate(
    field: Field, start: JointPoint, game: MatrixGame, dt: float = 0.01, steps: int = 1000, method: str = "euler"
) -> Trace:
    """Fixed-step integration with post-step simplex repair and a running time average."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    m = game.num_actions
    xs = np.empty((steps + 1, m))
    ys = np.empty((steps + 1, m))
    p = JointPoint(np.asarray(start.x, dtype=float), np.asarray(start.y, dtype=float))
    xs[0], ys[0] = p.x, p.y
    for i in range(1, steps + 1):
        q = _step(field, game, p, dt, method)
        p = JointPoint(_renormalize(q.x, dt), _renormalize(q.y, dt))
        xs[i], ys[i] = p.x, p.y
    counts = np.arange(1, steps + 2)[:, None]
    return Trace(
        np.arange(steps + 1) * dt,
        xs,
        ys,
        np.cumsum(xs, axis=0) / counts,
        np.cumsum(ys, axis=0) / counts,
    )


def return_distances(trace: Trace, leave: float = 0.1) -> np.ndarray:
    """Distances to the start at each closest approach after the trajectory has moved ``leave`` away."""
    pts = np.hstack([trace.x, trace.y])
    d = np.linalg.norm(pts - pts[0], axis=1)
    away = np.flatnonzero(d > leave)
    if len(away) == 0:
        return np.zeros(0)
    d = d[away[0] :]
    interior = (d[1:-1] < d[:-2]) & (d[1:-1] <= d[2:]) & (d[1:-1] < leave)
    return d[1:-1][interior]


# -- grids ---------------------------------------------------------------------------


def simplex_lattice(resolution: int) -> np.ndarray:
    """Points of the 2-simplex (3 actions) on a lattice with ``resolution`` values per axis."""
    g = np.linspace(0.0, 1.0, resolution)
    pts = [(a, b, 1.0 - a - b) for a in g for b in g if a + b <= 1.0 + 1e-12]
    return np.maximum(np.array(pts), 0.0)


def vector_field_grid(field: Field, game: MatrixGame, resolution: int) -> list[tuple]:
    """Rows ``x1,y1,dx1,dy1`` (two actions) or ``x1,y1,x2,y2,dx1,dy1,dx2,dy2`` (three)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    rows = []
    if game.num_actions == 2:
        g = np.linspace(0.0, 1.0, resolution)
        for x1 in g:
            for y1 in g:
                d = field(JointPoint.of([x1, 1 - x1], [y1, 1 - y1]), game)
                rows.append((x1, y1, d.x[0], d.y[0]))
        return rows
    if game.num_actions == 3:
        lattice = simplex_lattice(resolution)
        for x in lattice:
            for y in lattice:
                d = field(JointPoint(x, y), game)
                rows.append((x[0], y[0], x[1], y[1], d.x[0], d.y[0], d.x[1], d.y[1]))
        return rows
    raise ValueError("grids support 2- or 3-action games only")


def grid_columns(game: MatrixGame) -> tuple[str, ...]:
    if game.num_actions == 2:
        return ("x1", "y1", "dx1", "dy1")
    return ("x1", "y1", "x2", "y2", "dx1", "dy1", "dx2", "dy2")


def trace_columns(game: MatrixGame) -> tuple[str, ...]:
    if game.num_actions == 2:
        return ("t", "x1", "y1", "avg_x1", "avg_y1")
    return ("t", "x1", "y1", "x2", "y2", "avg_x1", "avg_y1", "avg_x2", "avg_y2")


def rows_to_csv(columns, rows) -> str:
    lines = [",".join(columns)] + [",".join(fmt_metric(float(v)) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# -- equilibria ------------------------------------------------------------------------


def support_enumeration(game: MatrixGame, tol: float = 1e-10) -> list[JointPoint]:
    """All Nash equilibria of a nondegenerate bimatrix game (equal-size supports)."""
    A, B = game.row, game.col
    m, n = A.shape
    found: list[JointPoint] = []
    for size in range(1, min(m, n) + 1):
        for I in itertools.combinations(range(m), size):
            for J in itertools.combinations(range(n), size):
                y = _indifferent(A[np.ix_(I, J)], size)
                x = _indifferent(B[np.ix_(I, J)].T, size)
                if x is None or y is None:
                    continue
                xf = np.zeros(m)
                yf = np.zeros(n)
                xf[list(I)] = x
                yf[list(J)] = y
                u = A @ yf
                v = B.T @ xf
                if u.max() <= xf @ u + tol and v.max() <= v @ yf + tol:
                    if not any(np.allclose(xf, e.x) and np.allclose(yf, e.y) for e in found):
                        found.append(JointPoint(xf, yf))
    return found


def _indifferent(M: np.ndarray, size: int):
    """Mixture z >= 0 summing to 1 with M @ z constant across rows, or None."""
    lhs = np.zeros((size + 1, size + 1))
    lhs[:size, :size] = M
    lhs[:size, size] = -1.0
    lhs[size, :size] = 1.0
    rhs = np.zeros(size + 1)
    rhs[size] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    z = sol[:size]
    if np.any(z < -1e-12):
        return None
    return np.maximum(z, 0.0)
