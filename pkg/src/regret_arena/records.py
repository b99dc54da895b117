"""Run records: ordered metric rows plus metadata, written as CSV (and optionally JSON)."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .io import atomic_write_text, fmt_metric

# Header of every CSV the toolkit emits, keyed by schema name.
SCHEMAS: dict[str, tuple[str, ...]] = {
    "nashconv2": ("step", "nashconv", "delta_p0", "delta_p1"),
    "nashconv3": ("step", "nashconv", "delta_p0", "delta_p1", "delta_p2"),
    "headtohead": ("step", "mean_return_vs_fixture", "seat"),
    "train": ("episode", "variant", "seed", "nashconv", "entropy_mean", "critic_loss"),
    "projected": ("k", "rule", "nashconv", "max_local_regret", "bound", "bound_satisfied"),
    "grid2": ("x1", "y1", "dx1", "dy1"),
    "grid3": ("x1", "y1", "x2", "y2", "dx1", "dy1", "dx2", "dy2"),
    "trace2": ("t", "x1", "y1", "avg_x1", "avg_y1"),
    "trace3": ("t", "x1", "y1", "x2", "y2", "avg_x1", "avg_y1", "avg_x2", "avg_y2"),
}


def nashconv_columns(num_players: int) -> tuple[str, ...]:
    return ("step", "nashconv") + tuple(f"delta_p{i}" for i in range(num_players))


def normalize_config(config: Mapping[str, Any]) -> str:
    """Canonical ``key=value`` text, sorted by key, used for hashing."""
    return "".join(f"{k}={config[k]}\n" for k in sorted(config))


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(normalize_config(config).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    step_column: int = 0
    monotone: bool = True

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        if self.monotone and self.rows and not values[self.step_column] > self.rows[-1][self.step_column]:
            raise ValueError("record steps must be strictly increasing")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def last(self, name: str):
        return self.rows[-1][self.columns.index(name)]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(fmt_metric(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        body = {
            "metadata": self.metadata,
            "columns": list(self.columns),
            "rows": [[fmt_metric(v) for v in row] for row in self.rows],
        }
        return json.dumps(body, indent=1, sort_keys=True) + "\n"

    def write(self, path, json_mirror: bool = False) -> Path:
        """CSV body at ``path``; run metadata (with timestamp) in ``<path>.meta.json``."""
        path = Path(path)
        atomic_write_text(path, self.to_csv())
        meta = dict(self.metadata)
        meta.setdefault("timestamp", _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        atomic_write_text(path.with_name(path.name + ".meta.json"), json.dumps(meta, indent=1, sort_keys=True) + "\n")
        if json_mirror:
            atomic_write_text(path.with_suffix(".json"), self.to_json())
        return path


def read_csv_header(path) -> tuple[str, ...]:
    with open(path) as fh:
        return tuple(fh.readline().rstrip("\n").split(","))


def validate_csv(path, expected: Sequence[str] | None = None) -> list[str]:
    """Problems found in a CSV: unknown header, ragged rows or non-numeric metrics."""
    problems = []
    lines = Path(path).read_text().splitlines()
    if not lines:
        return [f"{path}: empty file"]
    header = tuple(lines[0].split(","))
    if expected is not None and header != tuple(expected):
        problems.append(f"{path}: header {header} != {tuple(expected)}")
    elif expected is None and header not in SCHEMAS.values():
        problems.append(f"{path}: header {header} matches no known schema")
    text_columns = {"variant", "rule", "bound_satisfied"}
    for n, line in enumerate(lines[1:], 2):
        cells = line.split(",")
        if len(cells) != len(header):
            problems.append(f"{path}:{n}: {len(cells)} cells, expected {len(header)}")
            continue
        for name, cell in zip(header, cells):
            if name in text_columns:
                continue
            try:
                float(cell)
            except ValueError:
                problems.append(f"{path}:{n}: column {name} is not numeric: {cell!r}")
    return problems
