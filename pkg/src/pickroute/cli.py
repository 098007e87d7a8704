"""Command line entry point: ``pickroute {generate,solve,train,evaluate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .evaluation import ALL_METHODS, ConfigurationError, evaluate
from .exact import solve_optimal
from .heuristics import HEURISTICS, HeuristicKind, run_heuristic
from .policy import WeightsError, decode, load_params, save_params
from .tourgraph import InvalidActionError
from .trainer import TrainConfig, train
from .warehouse import (
    GeometryError,
    ProblemClass,
    all_problem_classes,
    generate_instance,
    load_instances,
    save_instances,
    to_aisle_sequence,
)

CONTRACT_ERRORS = (GeometryError, InvalidActionError, ConfigurationError, WeightsError, ValueError, KeyError)

log = logging.getLogger("pickroute")


def parse_classes(text: str, mode: str = "normal") -> list[ProblemClass]:
    if text == "all":
        return all_problem_classes(mode)
    return [ProblemClass.parse(part, mode) for part in text.split(";") if part]


def parse_weights(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        name, sep, path = part.partition("=")
        if sep:
            out[name] = path
        else:
            out["model"] = name
    return out


def cmd_generate(args) -> int:
    pclass = ProblemClass.parse(args.pclass, args.mode)
    insts = [generate_instance(pclass, args.seed + i) for i in range(args.count)]
    save_instances(insts, args.out)
    log.info("wrote %d instances of class %s to %s", len(insts), pclass, args.out)
    return 0


def cmd_solve(args) -> int:
    params = load_params(args.weights) if args.weights else None
    for inst in load_instances(args.instance):
        seq = to_aisle_sequence(inst)
        if args.method == "optimal":
            rollout = solve_optimal(inst)[1]
        elif args.method in ("model", "simplified"):
            if params is None:
                raise ConfigurationError(f"method {args.method!r} needs --weights")
            if args.method == "simplified" and not params.cfg.simplified:
                raise ConfigurationError(f"{args.weights} holds a standard model, not a simplified one")
            rollout = decode(seq, params, "greedy")
        else:
            rollout = run_heuristic(args.method, seq)
        if args.dump_route:
            sys.stdout.write(rollout.dumps())
        else:
            print(rollout.total_length)
    return 0


def build_train_config(preset: str, overrides: dict) -> TrainConfig:
    if preset == "standard":
        cfg = TrainConfig.standard()
    elif preset == "simplified":
        cfg = TrainConfig.simplified_preset()
    else:
        cfg = TrainConfig.desk()
    overrides = dict(overrides)
    model = overrides.pop("model", {})
    lr = overrides.pop("lr", None)
    if "classes" in overrides:
        overrides["classes"] = tuple(ProblemClass.parse(c) for c in overrides["classes"])
    unknown = set(overrides) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown training overrides {sorted(unknown)}")
    cfg = replace(cfg, **overrides)
    if model:
        cfg = replace(cfg, model=replace(cfg.model, **model))
    if lr is not None:
        cfg = replace(cfg, adam=replace(cfg.adam, lr=float(lr)))
    return cfg


def cmd_train(args) -> int:
    overrides = json.loads(Path(args.overrides).read_text()) if args.overrides else {}
    if args.history:
        overrides["history_csv"] = args.history
    if args.checkpoint_dir:
        overrides["checkpoint_dir"] = args.checkpoint_dir
    cfg = build_train_config(args.preset, overrides)
    params, state = train(cfg)
    save_params(params, args.out_weights)
    log.info("trained %d steps, %d baseline updates; weights in %s", state.step, state.gate_updates, args.out_weights)
    return 0


def cmd_evaluate(args) -> int:
    methods = [m for m in args.methods.split(",") if m]
    report = evaluate(
        methods,
        parse_classes(args.classes, args.mode),
        instances_per_class=args.count,
        seed=args.seed,
        weights=parse_weights(args.weights),
    )
    text = report.to_csv(timing=args.timing)
    if args.csv:
        Path(args.csv).write_text(text)
    if args.markdown:
        Path(args.markdown).write_text(report.to_markdown())
    if not args.csv and not args.markdown:
        sys.stdout.write(report.to_markdown())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pickroute", description=__doc__)
    parser.add_argument("--config", help="JSON file with per-subcommand option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random instances to a JSON file")
    p.add_argument("--class", dest="pclass", required=True, help="aisles,items e.g. 5,30")
    p.add_argument("--mode", choices=("normal", "uniform"), default="normal")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="route the instances in a file")
    p.add_argument("--method", choices=("optimal",) + tuple(k.value for k in HEURISTICS) + ("model", "simplified"),
                   default="optimal")
    p.add_argument("--instance", required=True)
    p.add_argument("--weights")
    p.add_argument("--dump-route", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the attention policy")
    p.add_argument("--preset", choices=("standard", "simplified", "desk"), default="standard")
    p.add_argument("--overrides", help="JSON file overriding TrainConfig fields")
    p.add_argument("--out-weights", required=True)
    p.add_argument("--history", help="CSV file for per-step training history")
    p.add_argument("--checkpoint-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="optimality gaps per problem class")
    p.add_argument("--methods", default=",".join(("optimal",) + tuple(k.value for k in HeuristicKind)),
                   help=f"comma list from {', '.join(ALL_METHODS)}")
    p.add_argument("--classes", default="all", help="'all' or 'A,M;A,M;...'")
    p.add_argument("--mode", choices=("normal", "uniform"), default="normal")
    p.add_argument("--count", type=int, default=100, help="instances per class")
    p.add_argument("--weights", help="PATH or model=PATH,simplified=PATH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.add_argument("--markdown")
    p.add_argument("--timing", action="store_true", help="add mean runtimes to the CSV")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    doc = json.loads(Path(known.config).read_text())
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, defaults in doc.items():
        if name not in subparsers.choices:
            raise ConfigurationError(f"config file names unknown subcommand {name!r}")
        sub = subparsers.choices[name]
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        sub.set_defaults(**defaults)
        # a value from the config file satisfies a required option
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CONTRACT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
