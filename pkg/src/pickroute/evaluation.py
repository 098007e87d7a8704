"""Optimality-gap benchmarking of heuristics and trained policies."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exact import solve_optimal
from .heuristics import HeuristicKind, run_heuristic
from .policy import PolicyParameters, decode, load_params
from .warehouse import Instance, ProblemClass, generate_instance, to_aisle_sequence

HEURISTIC_METHODS = tuple(k.value for k in HeuristicKind)
MODEL_METHODS = ("model", "simplified")
ALL_METHODS = ("optimal",) + HEURISTIC_METHODS + MODEL_METHODS
THREADS_ENV = "PICKROUTE_THREADS"

_MODE_CODE = {"normal": 0, "uniform": 1}


class SolverBugError(RuntimeError):
    """A method produced a tour shorter than the optimum."""


class ConfigurationError(ValueError):
    pass


def optimality_gap(length, optimal) -> float:
    if not optimal > 0:
        raise ValueError("optimal length must be positive")
    if length < optimal:
        raise SolverBugError(f"length {length} is below the optimum {optimal}")
    return 100.0 * (length - optimal) / optimal


def instance_seed(pclass: ProblemClass, seed: int, index: int) -> int:
    ss = np.random.SeedSequence([seed, pclass.n_aisles, pclass.m, _MODE_CODE[pclass.mode], index])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def benchmark_instances(pclass: ProblemClass, count: int, seed: int) -> list[Instance]:
    return [generate_instance(pclass, instance_seed(pclass, seed, i)) for i in range(count)]


@dataclass(frozen=True)
class GapRow:
    pclass: ProblemClass
    method: str
    count: int
    mean_gap: float
    std_error: float
    mean_runtime: float


@dataclass
class GapReport:
    rows: list[GapRow]

    def row(self, pclass: ProblemClass, method: str) -> GapRow:
        for r in self.rows:
            if r.pclass == pclass and r.method == method:
                return r
        raise KeyError((pclass, method))

    def to_csv(self, timing: bool = False) -> str:
        # runtimes vary between runs, so they are opt-in to keep the CSV reproducible
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["aisles", "items", "mode", "method", "count", "mean_gap", "std_error"]
        w.writerow(header + (["mean_runtime_s"] if timing else []))
        for r in self.rows:
            line = [r.pclass.n_aisles, r.pclass.m, r.pclass.mode, r.method, r.count,
                    f"{r.mean_gap:.6f}", f"{r.std_error:.6f}"]
            w.writerow(line + ([f"{r.mean_runtime:.6f}"] if timing else []))
        return buf.getvalue()

    def to_markdown(self) -> str:
        methods = list(dict.fromkeys(r.method for r in self.rows))
        classes = list(dict.fromkeys(r.pclass for r in self.rows))
        lines = [
            "| Aisles | Items | " + " | ".join(methods) + " |",
            "|---|---|" + "---|" * len(methods),
        ]
        for pc in classes:
            cells = [f"{self.row(pc, m).mean_gap:.2f}" for m in methods]
            lines.append(f"| {pc.n_aisles} | {pc.m} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _run_method(method: str, inst: Instance, models: Mapping[str, PolicyParameters]):
    seq = to_aisle_sequence(inst)
    if method == "optimal":
        return solve_optimal(inst)[0]
    if method in HEURISTIC_METHODS:
        return run_heuristic(method, seq).total_length
    return decode(seq, models[method], "greedy").total_length


def _evaluate_instance(args) -> tuple[float, dict[str, tuple[float, float]]]:
    inst, methods, models = args
    optimal = solve_optimal(inst)[0]
    out = {}
    for method in methods:
        t0 = time.perf_counter()
        length = _run_method(method, inst, models)
        out[method] = (length, time.perf_counter() - t0)
    return optimal, out


def load_models(methods: Sequence[str], weights: Mapping[str, str | Path] | None) -> dict[str, PolicyParameters]:
    models = {}
    for method in methods:
        if method not in MODEL_METHODS:
            continue
        path = (weights or {}).get(method)
        if path is None:
            raise ConfigurationError(f"method {method!r} needs trained weights")
        params = load_params(path)
        if method == "simplified" and not params.cfg.simplified:
            raise ConfigurationError(f"{path} holds a standard model, not a simplified one")
        models[method] = params
    return models


def evaluate(
    methods: Sequence[str],
    classes: Sequence[ProblemClass],
    instances_per_class: int = 100,
    seed: int = 0,
    weights: Mapping[str, str | Path] | None = None,
    models: Mapping[str, PolicyParameters] | None = None,
    workers: int | None = None,
) -> GapReport:
    """Mean per-instance optimality gap for each (class, method)."""
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigurationError(f"unknown method {m!r}")
    models = dict(models or {})
    models.update(load_models([m for m in methods if m not in models], weights))
    workers = workers or int(os.environ.get(THREADS_ENV, "1"))
    rows = []
    for pclass in classes:
        insts = benchmark_instances(pclass, instances_per_class, seed)
        jobs = [(inst, tuple(methods), models) for inst in insts]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_evaluate_instance, jobs))
        else:
            results = [_evaluate_instance(j) for j in jobs]
        for method in methods:
            gaps, times = [], []
            for inst, (optimal, per_method) in zip(insts, results):
                length, dt = per_method[method]
                try:
                    gaps.append(optimality_gap(length, optimal))
                except SolverBugError as exc:
                    raise SolverBugError(f"{method} on instance seed {inst.seed}: {exc}") from None
                times.append(dt)
            gaps = np.array(gaps)
            se = float(gaps.std(ddof=1) / math.sqrt(len(gaps))) if len(gaps) > 1 else 0.0
            rows.append(GapRow(pclass, method, len(gaps), float(gaps.mean()), se, float(np.mean(times))))
    return GapReport(rows)
