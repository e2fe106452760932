"""Command-line entry point: ``raydar <validate|coverage|trace|train|infer|plot>``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import dataset as ds
from . import dqn
from . import rlenv
from . import svg
from .raytrace import ReceiverInObstacle, coverage_csv, coverage_map
from .scene import (
    QUADRANT_NAMES,
    Scene,
    SceneError,
    apply_overlay,
    parse_overlay,
    read_scene_document,
    scene_problems,
    split_quadrants,
    to_occupancy,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
DEFAULT_SEED = 7


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    def __init__(self, lines):
        super().__init__("\n".join(lines))
        self.lines = list(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _pair(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None
    return x, y


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scene", help="scene JSON document")
    common.add_argument("--overlay", help="overlay JSON applied on top of the scene")
    common.add_argument("--quadrant", choices=QUADRANT_NAMES, help="restrict to one quadrant of a city scene")
    common.add_argument("--tx", help="transmitter id (default: the scene's first)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--max-depth", type=int, help="override the scene's reflection order")

    parser = _Parser(prog="raydar", description="Ray-traced digital twins and DQN navigation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("validate", parents=[common], help="check a scene for invariant violations")
    p = sub.add_parser("coverage", parents=[common], help="coverage map CSV (and SVG heatmap)")
    p.add_argument("--svg", action="store_true")
    p = sub.add_parser("trace", parents=[common], help="dataset CSV for the DQN")
    p.add_argument("--mode", choices=("per-cell", "per-path"), default="per-cell")

    p = sub.add_parser("train", parents=[common], help="train a DQN navigation agent")
    defaults = dqn.DQNConfig()
    p.add_argument("--episodes", type=int, default=defaults.episodes)
    p.add_argument("--epsilon", type=float, default=defaults.epsilon)
    p.add_argument("--gamma", type=float, default=defaults.gamma)
    p.add_argument("--hidden", type=int, default=defaults.hidden)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--max-steps", type=int, help="episode step cap (default 20*(nx+ny))")
    p.add_argument("--start", type=_pair, help="start x,y in meters (omit for random pairs)")
    p.add_argument("--target", type=_pair, help="target x,y in meters")

    p = sub.add_parser("infer", parents=[common], help="greedy rollout of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", type=_pair, required=True)
    p.add_argument("--target", type=_pair, required=True)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("plot", parents=[common], help="SVG training curves from an episode log")
    p.add_argument("--log", required=True, help="episode log CSV written by train")
    return parser


# --------------------------------------------------------------------------
# helpers


def _read_text(path: str | None, what: str) -> str:
    if not path:
        raise UsageError(f"--{what} is required")
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path!r}: {exc.strerror}") from None


def _problems(exc: SceneError) -> list[str]:
    return list(exc.problems)


def load_run_scene(args) -> Scene:
    """Scene after optional quadrant selection and overlay, fully validated."""
    text = _read_text(args.scene, "scene")
    try:
        scene = read_scene_document(text)
    except SceneError as exc:
        raise ValidationFailure(_problems(exc)) from None
    problems = scene_problems(scene)
    if problems:
        raise ValidationFailure(problems)
    try:
        if args.quadrant:
            if len(scene.transmitters) != 4:
                raise SceneError("--quadrant needs a scene with one transmitter per quadrant")
            scene = split_quadrants(scene, scene.transmitters)[QUADRANT_NAMES.index(args.quadrant)]
        if args.overlay:
            scene = apply_overlay(scene, parse_overlay(_read_text(args.overlay, "overlay")))
    except SceneError as exc:
        raise ValidationFailure(_problems(exc)) from None
    if args.max_depth is not None and args.max_depth < 0:
        raise UsageError("--max-depth must be nonnegative")
    if args.tx is not None and args.tx not in {t.id for t in scene.transmitters}:
        raise ValidationFailure([f"unknown transmitter id {args.tx!r}"])
    return scene


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _coverage(scene: Scene, args):
    try:
        return coverage_map(scene, args.tx, max_depth=args.max_depth)
    except ReceiverInObstacle as exc:
        raise RuntimeError(str(exc)) from None


def _environment(scene: Scene, args, max_steps: int | None = None) -> rlenv.NavEnv:
    rows = ds.generate_dataset(_coverage(scene, args), ds.PER_CELL)
    return rlenv.NavEnv.from_rows(to_occupancy(scene), rows, scene.grid, max_steps)


def _cell(env: rlenv.NavEnv, point, name: str) -> tuple[int, int]:
    try:
        cell = env.cell_of(*point)
    except ValueError as exc:
        raise ValidationFailure([f"{name}: {exc}"]) from None
    if not env.occupancy.is_free(*cell):
        raise ValidationFailure([f"{name} {point} lies in a blocked cell"])
    return cell


# --------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    load_run_scene(args)
    print("OK")
    return EXIT_OK


def cmd_coverage(args) -> int:
    scene = load_run_scene(args)
    out = _out_dir(args)
    cmap = _coverage(scene, args)
    stem = f"coverage_{cmap.tx_id}"
    _write(out / f"{stem}.csv", coverage_csv(cmap))
    if args.svg:
        _write(out / f"{stem}.svg", svg.heatmap_svg(cmap, seed=args.seed))
    print(f"dead-cell fraction {cmap.dead_fraction():.4f}")
    return EXIT_OK


def cmd_trace(args) -> int:
    scene = load_run_scene(args)
    out = _out_dir(args)
    mode = ds.PER_CELL if args.mode == "per-cell" else ds.PER_PATH
    rows = ds.generate_dataset(_coverage(scene, args), mode)
    _write(out / f"dataset_{mode}.csv", ds.write_csv(rows))
    print(ds.stats(rows, scene.grid).summary())
    return EXIT_OK


def cmd_train(args) -> int:
    if (args.start is None) != (args.target is None):
        raise UsageError("--start and --target go together")
    try:
        config = dqn.DQNConfig(gamma=args.gamma, epsilon=args.epsilon, episodes=args.episodes,
                               hidden=args.hidden, lr=args.lr, seed=args.seed, max_steps=args.max_steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scene = load_run_scene(args)
    out = _out_dir(args)
    env = _environment(scene, args)
    start = target = None
    if args.start is not None:
        start, target = _cell(env, args.start, "start"), _cell(env, args.target, "target")
        if start == target:
            raise ValidationFailure(["start and target coincide"])
    norm = dqn.Normalizer.for_env(env)
    net, report = dqn.train(env, config, start, target, norm)
    meta = asdict(config) | {"scene": scene.name, "tx": args.tx, "max_depth": args.max_depth}
    best = report.best_network if report.best_network is not None else net
    dqn.save_checkpoint(out / "checkpoint.json", best, norm, meta)
    dqn.save_checkpoint(out / "final.json", net, norm, meta)
    _write(out / "episodes.csv", rlenv.episode_log_csv(report.steps, report.total_reward, report.collisions,
                                                      report.reached, seed=args.seed))
    print(f"episodes {len(report.steps)}, reached {sum(report.reached)}")
    print(f"minimum steps: {report.best_summary()}")
    return EXIT_OK


def cmd_infer(args) -> int:
    scene = load_run_scene(args)
    try:
        net, norm, _ = dqn.load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise UsageError(f"cannot read checkpoint {args.checkpoint!r}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationFailure([f"checkpoint: {exc}"]) from None
    out = _out_dir(args)
    env = _environment(scene, args)
    start, target = _cell(env, args.start, "start"), _cell(env, args.target, "target")
    traj = dqn.infer_path(net, env, start, target, args.max_steps, norm)
    _write(out / "trajectory.csv", rlenv.trajectory_csv(scene.grid, traj.cells, traj.actions, traj.rewards,
                                                        traj.collided, seed=args.seed))
    if args.svg:
        _write(out / "trajectory.svg", svg.path_svg(env.occupancy, scene.grid, traj.cells, target, seed=args.seed))
    print(f"reached {'yes' if traj.reached else 'no'}, steps {traj.steps}, collisions {traj.collisions}")
    return EXIT_OK


def cmd_plot(args) -> int:
    text = _read_text(args.log, "log")
    try:
        log = rlenv.read_episode_log(text)
    except rlenv.EnvError as exc:
        raise ValidationFailure([str(exc)]) from None
    if not log["episode"]:
        raise ValidationFailure(["episode log has no rows"])
    seed = args.seed
    for line in text.splitlines():
        if line.startswith("# seed="):
            seed = int(line.split("=", 1)[1])
            break
    out = _out_dir(args)
    charts = (("reward", "total_reward", "total reward"), ("steps", "steps", "steps"),
              ("collisions", "collisions", "collisions"))
    for stem, key, label in charts:
        _write(out / f"{stem}.svg", svg.line_chart_svg(log[key], f"{label} per episode", label, seed=seed))
    print(f"wrote {len(charts)} charts to {out}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "coverage": cmd_coverage,
    "trace": cmd_trace,
    "train": cmd_train,
    "infer": cmd_infer,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"raydar: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        for line in exc.lines:
            print(line)
        return EXIT_VALIDATION
    except (dqn.TrainingDiverged, dqn.UnreachableTarget, RuntimeError) as exc:
        print(f"raydar: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
