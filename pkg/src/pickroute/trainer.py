"""REINFORCE with a greedy rollout baseline and a paired t-test baseline gate."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import autodiff as ad
from .autodiff import AdamConfig
from .policy import (
    ModelConfig,
    PolicyParameters,
    decode_batch,
    decode_logits,
    forward_batch,
    init_params,
    save_params,
    sequence_log_prob,
)
from .warehouse import (
    AISLE_COUNTS,
    PICK_LIST_SIZES,
    AisleSequence,
    ProblemClass,
    generate_instance,
    to_aisle_sequence,
)

log = logging.getLogger(__name__)

HISTORY_COLUMNS = (
    "epoch", "step", "mean_len", "mean_baseline", "mean_advantage", "grad_norm", "gate_updates",
)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    steps_per_epoch: int = 100
    batch_size: int = 16
    alpha: float = 0.05
    classes: tuple[ProblemClass, ...] = tuple(ProblemClass(a, m) for a in AISLE_COUNTS for m in PICK_LIST_SIZES)
    eval_size: int = 256
    seed: int = 0
    adam: AdamConfig = AdamConfig()
    model: ModelConfig = ModelConfig()
    checkpoint_dir: str | None = None
    history_csv: str | None = None

    @property
    def simplified(self) -> bool:
        return self.model.simplified

    @classmethod
    def standard(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def simplified_preset(cls, **overrides) -> "TrainConfig":
        base = dict(
            epochs=150,
            steps_per_epoch=200,
            classes=tuple(ProblemClass(a, m) for a in (25, 30) for m in PICK_LIST_SIZES),
            model=ModelConfig(simplified=True),
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small single-class run that finishes in about a minute on one core."""
        base = dict(
            epochs=20,
            steps_per_epoch=50,
            classes=(ProblemClass(5, 30),),
            model=ModelConfig(d_h=64),
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class BatchStats:
    lengths: np.ndarray
    baselines: np.ndarray
    advantages: np.ndarray
    grad_norm: float = 0.0

    @property
    def mean_len(self) -> float:
        return float(self.lengths.mean())

    @property
    def mean_baseline(self) -> float:
        return float(self.baselines.mean())

    @property
    def mean_advantage(self) -> float:
        return float(self.advantages.mean())


@dataclass
class TrainState:
    params: PolicyParameters
    baseline: PolicyParameters
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    gate_updates: int = 0
    history: list[dict] = field(default_factory=list)
    epoch_log: list[dict] = field(default_factory=list)


def advantage(length, baseline) -> float:
    # the baseline is clamped to 1 LU so near-zero tours cannot blow up the ratio
    return (length - baseline) / max(baseline, 1.0)


def reinforce_gradient(
    seqs: Sequence[AisleSequence],
    params: PolicyParameters,
    baseline: PolicyParameters,
    rng: np.random.Generator,
) -> tuple[dict[str, np.ndarray], BatchStats]:
    """Batch-mean policy gradient of the baseline-normalised REINFORCE loss."""
    simplified = params.cfg.simplified
    base_rollouts = decode_batch(seqs, baseline, "greedy")
    logits, _ = forward_batch(seqs, params)
    B, n, d_out = logits.shape
    if not np.isfinite(logits.data).all():
        raise TrainingDiverged("non-finite logits", {"params": params.snapshot()})
    lengths, rows, masks, chosen, weights = [], [], [], [], []
    advs = []
    for b, seq in enumerate(seqs):
        offset = n - len(seq)
        rollout, picks, mask = decode_logits(seq, logits.data[b, offset:], "sample", rng, simplified)
        a = advantage(rollout.total_length, base_rollouts[b].total_length)
        lengths.append(rollout.total_length)
        advs.append(a)
        rows.extend(b * n + offset + i for i in range(len(seq)))
        masks.append(mask)
        chosen.extend(picks)
        # descending adv * log p lowers the expected tour length
        weights.extend([a / B] * len(seq))
    logp = sequence_log_prob(ad.reshape(logits, (B * n, d_out)), rows, np.concatenate(masks), chosen)
    loss = ad.sum(ad.mul(logp, np.array(weights)))
    params.zero_grad()
    grads = ad.backward(loss, params.values())
    params.zero_grad()
    batch = BatchStats(
        np.array(lengths, dtype=float),
        np.array([r.total_length for r in base_rollouts], dtype=float),
        np.array(advs),
        ad.global_norm(grads),
    )
    return grads, batch


def paired_t_pvalue(candidate: Sequence[float], baseline: Sequence[float]) -> float:
    """One-sided p-value for mean(candidate - baseline) < 0."""
    c = np.asarray(candidate, dtype=float)
    b = np.asarray(baseline, dtype=float)
    if c.shape != b.shape or c.size < 2:
        raise ValueError("paired samples must have equal length >= 2")
    d = c - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        return 0.0 if mean < 0 else 1.0
    t = mean / (sd / math.sqrt(d.size))
    return float(stats.t.cdf(t, df=d.size - 1))


def baseline_gate(costs_candidate, costs_baseline, alpha: float = 0.05) -> bool:
    return paired_t_pvalue(costs_candidate, costs_baseline) < alpha


def _draw_batch(cfg: TrainConfig, rng: np.random.Generator) -> list[AisleSequence]:
    pclass = cfg.classes[int(rng.integers(len(cfg.classes)))]
    seeds = rng.integers(0, 2**63 - 1, size=cfg.batch_size)
    return [to_aisle_sequence(generate_instance(pclass, int(s))) for s in seeds]


def _draw_eval_set(cfg: TrainConfig, rng: np.random.Generator) -> list[AisleSequence]:
    out = []
    for _ in range(cfg.eval_size):
        pclass = cfg.classes[int(rng.integers(len(cfg.classes)))]
        out.append(to_aisle_sequence(generate_instance(pclass, int(rng.integers(0, 2**63 - 1)))))
    return out


def greedy_lengths(seqs: Sequence[AisleSequence], params: PolicyParameters) -> np.ndarray:
    return np.array([r.total_length for r in decode_batch(seqs, params, "greedy")], dtype=float)


def init_state(cfg: TrainConfig, params: PolicyParameters | None = None) -> TrainState:
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg.model, seed=int(rng.integers(2**31)))
    return TrainState(params, params.copy(), rng)


def train_step(state: TrainState, cfg: TrainConfig) -> BatchStats:
    seqs = _draw_batch(cfg, state.rng)
    grads, batch = reinforce_gradient(seqs, state.params, state.baseline, state.rng)
    if not (math.isfinite(batch.grad_norm) and np.isfinite(batch.advantages).all()):
        raise TrainingDiverged(
            f"non-finite gradient at epoch {state.epoch} step {state.step}",
            {"params": state.params.snapshot(), "lengths": batch.lengths, "baselines": batch.baselines},
        )
    ad.adam_step(state.params.values(), grads, cfg.adam)
    state.step += 1
    state.history.append({
        "epoch": state.epoch,
        "step": state.step,
        "mean_len": batch.mean_len,
        "mean_baseline": batch.mean_baseline,
        "mean_advantage": batch.mean_advantage,
        "grad_norm": batch.grad_norm,
        "gate_updates": state.gate_updates,
    })
    return batch


def end_epoch(state: TrainState, cfg: TrainConfig, held_out: Sequence[AisleSequence] | None = None) -> bool:
    """Evaluate candidate vs baseline on a fresh set; promote the candidate if significantly better."""
    eval_set = _draw_eval_set(cfg, state.rng)
    cand = greedy_lengths(eval_set, state.params)
    base = greedy_lengths(eval_set, state.baseline)
    p = paired_t_pvalue(cand, base)
    accepted = p < cfg.alpha
    if accepted:
        state.baseline = state.params.copy()
        state.gate_updates += 1
    record = {
        "epoch": state.epoch,
        "candidate_mean": float(cand.mean()),
        "baseline_mean": float(base.mean()),
        "p_value": p,
        "accepted": accepted,
    }
    if held_out is not None:
        record["held_out_baseline_mean"] = float(greedy_lengths(held_out, state.baseline).mean())
    state.epoch_log.append(record)
    log.info("epoch %d: candidate %.2f baseline %.2f p=%.3g%s", state.epoch,
             record["candidate_mean"], record["baseline_mean"], p, " (baseline updated)" if accepted else "")
    return accepted


def train(
    cfg: TrainConfig,
    params: PolicyParameters | None = None,
    held_out: Sequence[AisleSequence] | None = None,
) -> tuple[PolicyParameters, TrainState]:
    state = init_state(cfg, params)
    writer = None
    fh = None
    if cfg.history_csv:
        fh = open(cfg.history_csv, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
    try:
        for epoch in range(cfg.epochs):
            state.epoch = epoch
            for _ in range(cfg.steps_per_epoch):
                train_step(state, cfg)
                if writer:
                    writer.writerow(state.history[-1])
            end_epoch(state, cfg, held_out)
            if cfg.checkpoint_dir:
                Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
                save_params(state.params, Path(cfg.checkpoint_dir) / f"epoch{epoch:03d}.weights")
    finally:
        if fh:
            fh.close()
    return state.params, state


def with_model(cfg: TrainConfig, **model_overrides) -> TrainConfig:
    return replace(cfg, model=replace(cfg.model, **model_overrides))
