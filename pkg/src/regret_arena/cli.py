"""Command-line entry point: ``regret-arena <command> [options]``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .actor_critic import VARIANTS, TrainerConfig, train
from .cfr import run_cfr, save_checkpoint
from .errors import MissingPolicyEntryError, UndefinedValueError
from .evaluation import head_to_head
from .games import load_game
from .games.matrix import LiftedMatrixGame
from .games.tree import tree_for
from .io import atomic_write_text
from .metrics import nash_conv_details
from .policy import LogitPolicy, load_tabular
from .projected import RULES, run_projected
from .records import SCHEMAS, RunRecord, config_hash, validate_csv

OUT_ENV = "REGRET_ARENA_OUT"


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value, got {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(game: str) -> str:
    return game.replace(":", "-")


def _write_record(record: RunRecord, path: Path, args) -> Path:
    record.write(path, json_mirror=getattr(args, "json", False))
    print(f"wrote {path}")
    return path


def _game(name: str):
    try:
        return load_game(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _int_option(value, default: int) -> int:
    return default if value is None else int(value)


def _usage(msg: str) -> int:
    print(f"usage error: {msg}", file=sys.stderr)
    return 2


def _apply_config(args, allowed: set[str]) -> dict[str, str]:
    """Fill unset options from ``--config``; unknown keys are an error naming the key."""
    if not args.config:
        return {}
    values = read_config(args.config)
    for key, value in values.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}; allowed: {', '.join(sorted(allowed))}")
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return values


# -- commands -----------------------------------------------------------------------


def cmd_cfr(args) -> int:
    _apply_config(args, {"game", "iterations", "eval_every", "simultaneous"})
    if not args.game:
        return _usage("--game is required")
    iterations = _int_option(args.iterations, 1000)
    eval_every = _int_option(args.eval_every, 10)
    if iterations < 1:
        return _usage("--iterations must be >= 1")
    if eval_every < 1:
        return _usage("--eval-every must be >= 1")
    simultaneous = str(args.simultaneous).lower() in ("1", "true", "yes") if args.simultaneous else False
    game = _game(args.game)
    cfg = {"command": "cfr", "game": args.game, "iterations": iterations, "eval_every": eval_every, "simultaneous": simultaneous}
    record, avg, state = run_cfr(
        game, iterations, eval_every, alternating=not simultaneous, metadata={"config_hash": config_hash(cfg), "seed": args.seed}
    )
    out = _out_dir(args)
    stem = f"cfr_{_slug(args.game)}_{iterations}"
    _write_record(record, out / f"{stem}.csv", args)
    policy_path, regrets_path = save_checkpoint(state, out / f"{stem}.policy")
    print(f"wrote {policy_path}\nwrote {regrets_path}")
    print(f"final nashconv {record.last('nashconv'):.6g}")
    return 0


def cmd_train(args) -> int:
    fields = set(TrainerConfig.field_names())
    file_values = _apply_config(args, fields | {"game"})
    if not args.game:
        return _usage("--game is required")
    overrides = {k: v for k, v in file_values.items() if k in fields}
    for key in ("variant", "episodes", "seed", "eval_every"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            return _usage(f"--set expects key=value, got {item!r}")
        if key.replace("-", "_") not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        overrides[key.replace("-", "_")] = value
    if overrides.get("variant", "rpg") not in VARIANTS:
        return _usage(f"unknown variant {overrides['variant']!r}; choose from {', '.join(VARIANTS)}")
    config = TrainerConfig.from_mapping(overrides)
    game = _game(args.game)
    mapping = dict(config.as_mapping(), game=args.game)
    result = train(config, game)
    result.record.metadata["config_hash"] = config_hash(mapping)
    result.record.metadata["config"] = mapping
    out = _out_dir(args)
    stem = f"train_{config.variant}_{_slug(args.game)}_s{config.seed}"
    _write_record(result.record, out / f"{stem}.csv", args)
    tree = result.tree
    for p in range(tree.num_players):
        part = LogitPolicy({tree.keys[s]: result.logits[tree.slots(s)].copy() for s in tree.infosets_of(p)})
        path = part.save(out / f"{stem}_p{p}.policy")
        print(f"wrote {path}")
    print(f"final nashconv {result.record.last('nashconv'):.6g}")
    return 0


def cmd_eval(args) -> int:
    _apply_config(args, {"game", "mode", "episodes", "seed"})
    if not args.game:
        return _usage("--game is required")
    mode = args.mode or "nashconv"
    if mode not in ("nashconv", "headtohead"):
        return _usage(f"unknown eval mode {mode!r}")
    if mode == "headtohead" and not args.opponent:
        return _usage("headtohead mode needs --opponent")
    game = _game(args.game)
    tree = tree_for(game)
    policy = load_tabular(args.policies)
    if mode == "nashconv":
        nc, deltas = nash_conv_details(policy.to_flat(tree), tree)
        print(f"nashconv {nc:.12g}")
        for i, d in enumerate(deltas):
            print(f"delta_p{i} {d:.12g}")
        return 0
    fixture = load_tabular(args.opponent)
    episodes = _int_option(args.episodes, 100_000)
    if episodes < 1:
        return _usage("--episodes must be >= 1")
    report = head_to_head(policy, fixture, tree, episodes, _int_option(args.seed, 0))
    record = RunRecord(SCHEMAS["headtohead"], monotone=False, metadata={"game": args.game, "episodes": episodes})
    for s in report.seats:
        print(f"seat {s.seat}: mean {s.mean:.6g} +- {s.stderr:.3g} (exact {s.exact:.6g})")
        record.append(episodes, s.mean, s.seat)
    print(f"seat-averaged mean {report.mean:.6g} +- {report.stderr:.3g}")
    if args.out or os.environ.get(OUT_ENV):
        _write_record(record, _out_dir(args) / f"headtohead_{_slug(args.game)}.csv", args)
    return 0


def _parse_point(text: str, m: int) -> dyn.JointPoint:
    try:
        xs, ys = text.split(";")
        x = np.array([float(v) for v in xs.split(",")])
        y = np.array([float(v) for v in ys.split(",")])
    except ValueError:
        raise ConfigError(f"--start expects 'x1,x2,...;y1,y2,...', got {text!r}") from None
    if len(x) != m or len(y) != m:
        raise ConfigError(f"--start needs {m} probabilities per player")
    return dyn.JointPoint(x, y)


def cmd_dynamics(args) -> int:
    _apply_config(args, {"game", "field", "mode", "resolution", "dt", "steps", "method", "start", "stride"})
    if not args.game:
        return _usage("--game is required")
    game = _game(args.game)
    if not isinstance(game, LiftedMatrixGame):
        return _usage(f"dynamics needs a matrix game, got {args.game!r}")
    matrix = game.matrix
    field_name = args.field or "rpg"
    if field_name not in dyn.FIELDS:
        return _usage(f"unknown field {field_name!r}; choose from {', '.join(sorted(dyn.FIELDS))}")
    field = dyn.FIELDS[field_name]
    mode = args.mode or "grid"
    out = _out_dir(args)
    stem = f"dynamics_{_slug(args.game)}_{field_name}_{mode}"
    if mode == "grid":
        rows = dyn.vector_field_grid(field, matrix, _int_option(args.resolution, 11))
        path = atomic_write_text(out / f"{stem}.csv", dyn.rows_to_csv(dyn.grid_columns(matrix), rows))
        print(f"wrote {path} ({len(rows)} rows)")
        return 0
    if mode not in ("trace", "avgtrace"):
        return _usage(f"unknown dynamics mode {mode!r}")
    eq = dyn.support_enumeration(matrix)[0]
    if args.start:
        start = _parse_point(args.start, matrix.num_actions)
    else:
        # default start: the equilibrium with 0.2 moved from the row player's second action to its first
        shift = np.zeros(matrix.num_actions)
        shift[0], shift[1] = 0.2, -0.2
        start = dyn.JointPoint(eq.x + shift, eq.y.copy())
    dt = 0.01 if args.dt is None else float(args.dt)
    trace = dyn.integrate(field, start, matrix, dt, _int_option(args.steps, 100_000), args.method or "euler")
    stride = _int_option(args.stride, 1 if mode == "trace" else 100)
    if stride < 1:
        return _usage("--stride must be >= 1")
    rows = trace.rows()
    keep = rows[::stride] if rows[::stride][-1] is rows[-1] else rows[::stride] + [rows[-1]]
    path = atomic_write_text(out / f"{stem}.csv", dyn.rows_to_csv(dyn.trace_columns(matrix), keep))
    print(f"wrote {path}")
    avg = trace.final_average
    dist = max(np.abs(avg.x - eq.x).max(), np.abs(avg.y - eq.y).max())
    print("final average x " + " ".join(f"{v:.6f}" for v in avg.x) + " y " + " ".join(f"{v:.6f}" for v in avg.y))
    print(f"distance to equilibrium {dist:.6g}")
    return 0


def cmd_projected(args) -> int:
    _apply_config(args, {"game", "rule", "iterations", "eval_every"})
    if not args.game:
        return _usage("--game is required")
    rule = args.rule or "acpi"
    if rule not in RULES:
        return _usage(f"unknown rule {rule!r}; choose from {', '.join(RULES)}")
    iterations = int(args.iterations) if args.iterations is not None else 1000
    if iterations < 1:
        return _usage("K must be >= 1")
    eval_every = _int_option(args.eval_every, 1)
    if eval_every < 1:
        return _usage("--eval-every must be >= 1")
    game = _game(args.game)
    cfg = {"command": "projected", "game": args.game, "rule": rule, "iterations": iterations, "eval_every": eval_every}
    result = run_projected(game, rule, iterations, eval_every, metadata={"config_hash": config_hash(cfg)})
    tr = result.tracker
    result.record.metadata["raw_bound_satisfied"] = tr.raw_satisfied()
    result.record.metadata["max_counterfactual_regret"] = float(tr.counterfactual_regrets().max())
    out = _out_dir(args)
    _write_record(result.record, out / f"projected_{_slug(args.game)}_{rule}_{iterations}.csv", args)
    print(f"final nashconv {result.record.last('nashconv'):.6g}")
    print(f"local regret bound satisfied at every state: {tr.satisfied()} (raw reward range: {tr.raw_satisfied()})")
    return 0


def cmd_selfcheck(args) -> int:
    paths = [Path(p) for p in args.paths] if args.paths else sorted(_out_dir(args).glob("*.csv"))
    if not paths:
        print("no CSV files to check")
        return 0
    problems = []
    for p in paths:
        problems += validate_csv(p)
    for msg in problems:
        print(msg)
    print(f"checked {len(paths)} file(s), {len(problems)} problem(s)")
    return 1 if problems else 0


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regret-arena", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--game", help="kuhn:<n> | leduc:<n>[:penalty] | matrix:<mp|rps|brps|grps>")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
        p.add_argument("--config", help="flat key=value file; explicit flags win")
        p.add_argument("--json", action="store_true", help="also write a JSON mirror of the CSV")
        if seed:
            p.add_argument("--seed", type=int)

    p = sub.add_parser("cfr", help="vanilla CFR; NashConv curve and average-policy checkpoint")
    common(p)
    p.add_argument("--iterations", "-K", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--simultaneous", action="store_const", const="true", help="update all players from one walk")
    p.set_defaults(func=cmd_cfr)

    p = sub.add_parser("train", help="self-play actor-critic (qpg, rpg, rmpg, a2c)")
    common(p)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--episodes", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any trainer config field")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact NashConv or head-to-head against a fixed policy")
    common(p)
    p.add_argument("policies", nargs="+", help="policy files (merged)")
    p.add_argument("--mode", choices=("nashconv", "headtohead"))
    p.add_argument("--opponent", nargs="+", help="fixture policy files for headtohead")
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dynamics", help="vector-field grids and traces on matrix games")
    common(p, seed=False)
    p.add_argument("--field", choices=sorted(dyn.FIELDS))
    p.add_argument("--mode", choices=("grid", "trace", "avgtrace"))
    p.add_argument("--resolution", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--method", choices=("euler", "rk4"))
    p.add_argument("--start", help="'x1,x2,...;y1,y2,...'")
    p.add_argument("--stride", type=int, help="write every n-th trace row")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("projected", help="projected PGPI/ACPI/SPGPI/SACPI with local-regret checks")
    common(p)
    p.add_argument("--rule", choices=RULES)
    p.add_argument("--iterations", "-K", type=int)
    p.add_argument("--eval-every", type=int)
    p.set_defaults(func=cmd_projected)

    p = sub.add_parser("selfcheck", help="validate CSV outputs against their schemas")
    p.add_argument("paths", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        return _usage(str(exc))
    except (ConfigError, KeyError, MissingPolicyEntryError, UndefinedValueError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
