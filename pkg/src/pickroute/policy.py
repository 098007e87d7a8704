"""Attention policy over aisle sequences and decoding against tour-graph masks."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .tourgraph import ACTION_PAIRS, N_ACTIONS, Rollout, reset, step
from .warehouse import AisleSequence

WEIGHTS_MAGIC = b"PKRW"
WEIGHTS_VERSION = 1


class WeightsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 128
    n_heads: int = 8
    n_layers: int = 3
    d_ff: int | None = None
    clip: float = 10.0
    d_z: int = 90
    d_out: int = N_ACTIONS
    simplified: bool = False
    # "aisle": physical aisle index; "sequence": position among non-empty aisles
    encoding: str = "aisle"

    def __post_init__(self):
        if self.d_h % self.n_heads:
            raise ValueError(f"d_h={self.d_h} is not divisible by {self.n_heads} heads")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_h)
        if self.encoding not in ("aisle", "sequence"):
            raise ValueError(f"unknown encoding mode {self.encoding!r}")

    @property
    def d_k(self) -> int:
        return self.d_h // self.n_heads


def aisle_encoding(position, d_h: int) -> np.ndarray:
    """Sinusoidal encoding; works on a scalar or an array of positions."""
    pos = np.asarray(position, dtype=np.float64)[..., None]
    j = np.arange(d_h) // 2
    angle = pos / np.power(10000.0, 2 * j / d_h)
    return np.where(np.arange(d_h) % 2 == 0, np.sin(angle), np.cos(angle))


class PolicyParameters:
    """Named parameter tensors of the policy network."""

    def __init__(self, cfg: ModelConfig, tensors: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = {name: Parameter(np.array(v, dtype=np.float64), name) for name, v in tensors.items()}
        expected = parameter_shapes(cfg)
        for name, shape in expected.items():
            if name not in self.params:
                raise WeightsError(f"missing tensor {name!r}")
            if self.params[name].shape != shape:
                raise WeightsError(
                    f"tensor {name!r}: expected shape {shape}, got {self.params[name].shape}"
                )
        extra = set(self.params) - set(expected)
        if extra:
            raise WeightsError(f"unexpected tensors {sorted(extra)}")

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def values(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(self.cfg, self.snapshot())


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f = cfg.d_h, cfg.d_ff
    shapes = {"embed.W": (cfg.d_z, d), "embed.b": (d,)}
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes.update({
            p + "W_Q": (d, d), p + "W_K": (d, d), p + "W_V": (d, d), p + "W_O": (d, d),
            p + "norm1.gain": (d,), p + "norm1.bias": (d,),
            p + "ff.W1": (d, f), p + "ff.b1": (f,), p + "ff.W2": (f, d), p + "ff.b2": (d,),
            p + "norm2.gain": (d,), p + "norm2.bias": (d,),
        })
    shapes.update({"out.W": (d, cfg.d_out), "out.b": (cfg.d_out,)})
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> PolicyParameters:
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(cfg.d_h)
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".gain"):
            tensors[name] = np.ones(shape)
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return PolicyParameters(cfg, tensors)


# -- forward ---------------------------------------------------------------------


def _positions(seq: AisleSequence, cfg: ModelConfig) -> np.ndarray:
    if cfg.encoding == "aisle":
        return seq.positions
    return np.arange(len(seq))


def batch_inputs(seqs: Sequence[AisleSequence], cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left-pad a batch to a common length.

    Returns inputs ``(B, n, d_z)``, encodings positions ``(B, n)`` and a
    ``(B, n)`` flag marking real (non-pad) rows.
    """
    n = max(len(s) for s in seqs)
    z = np.zeros((len(seqs), n, cfg.d_z))
    pos = np.zeros((len(seqs), n))
    real = np.zeros((len(seqs), n), dtype=bool)
    for b, seq in enumerate(seqs):
        k = len(seq)
        if seq.geometry.slots_per_aisle != cfg.d_z:
            raise ad.ShapeError(f"aisle vectors have {seq.geometry.slots_per_aisle} slots, model expects {cfg.d_z}")
        z[b, n - k:] = seq.z
        pos[b, n - k:] = _positions(seq, cfg)
        real[b, n - k:] = True
    return z, pos, real


def anti_causal_mask(n: int) -> np.ndarray:
    """True where query i may not attend to key j, i.e. j < i."""
    i, j = np.indices((n, n))
    return i > j


def forward_padded(z: np.ndarray, pos: np.ndarray, params: PolicyParameters) -> Tensor:
    """Clipped logits ``(B, n, 16)`` for already padded inputs."""
    cfg = params.cfg
    if z.ndim != 3 or z.shape[-1] != cfg.d_z:
        raise ad.ShapeError(f"forward: expected inputs (B, n, {cfg.d_z}), got {z.shape}")
    n = z.shape[1]
    x = ad.matmul(z, params["embed.W"]) + params["embed.b"]
    x = ad.scale(x, math.sqrt(cfg.d_h)) + aisle_encoding(pos, cfg.d_h)
    mask = anti_causal_mask(n)
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        q = ad.split_heads(x @ params[p + "W_Q"], cfg.n_heads)
        k = ad.split_heads(x @ params[p + "W_K"], cfg.n_heads)
        v = ad.split_heads(x @ params[p + "W_V"], cfg.n_heads)
        scores = ad.scale(q @ ad.transpose(k, (0, 1, 3, 2)), 1.0 / math.sqrt(cfg.d_k))
        attn = ad.masked_softmax(scores, mask) @ v
        mha = ad.concat_heads(attn) @ params[p + "W_O"]
        x = ad.layer_norm(x + mha, params[p + "norm1.gain"], params[p + "norm1.bias"])
        ff = ad.relu(x @ params[p + "ff.W1"] + params[p + "ff.b1"]) @ params[p + "ff.W2"]
        x = ad.layer_norm(x + ff + params[p + "ff.b2"], params[p + "norm2.gain"], params[p + "norm2.bias"])
    out = x @ params["out.W"] + params["out.b"]
    return ad.scale(ad.tanh(out), cfg.clip)


def forward(seq: AisleSequence, params: PolicyParameters) -> Tensor:
    """Logits ``(n, 16)`` for every non-empty aisle in one pass."""
    z, pos, _ = batch_inputs([seq], params.cfg)
    return ad.reshape(forward_padded(z, pos, params), (len(seq), params.cfg.d_out))


def forward_batch(seqs: Sequence[AisleSequence], params: PolicyParameters) -> tuple[Tensor, np.ndarray]:
    z, pos, real = batch_inputs(seqs, params.cfg)
    return forward_padded(z, pos, params), real


# -- decoding ----------------------------------------------------------------------


def _masked_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.where(mask, logits, -np.inf)
    e = np.exp(x - x.max())
    return e / e.sum()


def decode_logits(
    seq: AisleSequence,
    logits: np.ndarray,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    simplified: bool = False,
) -> tuple[Rollout, list[int], np.ndarray]:
    """Build a tour from precomputed logits.

    Returns the rollout, the chosen pair index per aisle and the validity
    masks ``(n, 16)`` that were applied.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling needs an rng")
    env = reset(seq)
    chosen, masks, costs, logps = [], [], [], []
    for i in range(len(seq)):
        mask = env.mask(simplified)
        p = _masked_probs(logits[i], mask)
        if mode == "greedy":
            k = int(np.argmax(p))
        else:
            k = int(rng.choice(N_ACTIONS, p=p))
        env, cost = step(env, ACTION_PAIRS[k], simplified)
        chosen.append(k)
        masks.append(mask)
        costs.append(cost)
        logps.append(math.log(p[k]))
    assert env.eq_state.terminal
    rollout = Rollout(
        list(env.history), costs, env.accumulated_cost, logps, env.eq_state,
        [a.index for a in seq],
    )
    return rollout, chosen, np.array(masks)


def decode(
    seq: AisleSequence,
    params: PolicyParameters,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> Rollout:
    with ad.no_grad():
        logits = forward(seq, params).data
    return decode_logits(seq, logits, mode, rng, params.cfg.simplified)[0]


def decode_batch(
    seqs: Sequence[AisleSequence],
    params: PolicyParameters,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    chunk: int = 64,
) -> list[Rollout]:
    out = []
    for start in range(0, len(seqs), chunk):
        part = seqs[start:start + chunk]
        with ad.no_grad():
            logits, _ = forward_batch(part, params)
        n = logits.shape[1]
        for b, seq in enumerate(part):
            rows = logits.data[b, n - len(seq):]
            out.append(decode_logits(seq, rows, mode, rng, params.cfg.simplified)[0])
    return out


def sequence_log_prob(
    logits: Tensor,
    rows: Sequence[int],
    masks: np.ndarray,
    chosen: Sequence[int],
) -> Tensor:
    """Per-step log-probabilities of ``chosen`` as a differentiable 1-d tensor.

    ``logits`` is 2-d (flattened over batch and aisles); ``rows`` selects the
    decoded aisles and ``masks`` holds their validity masks.
    """
    sel = ad.gather_rows(logits, rows)
    probs = ad.masked_softmax(sel, ~np.asarray(masks, dtype=bool))
    return ad.log(ad.pick(probs, chosen))


def log_prob_of_actions(seq: AisleSequence, params: PolicyParameters, chosen: Sequence[int]) -> Tensor:
    """Summed log-probability of a fixed action sequence (scalar tensor)."""
    logits = forward(seq, params)
    env = reset(seq)
    masks = []
    for k in chosen:
        masks.append(env.mask(params.cfg.simplified))
        env, _ = step(env, ACTION_PAIRS[k], params.cfg.simplified)
    return ad.sum(sequence_log_prob(logits, range(len(seq)), np.array(masks), chosen))


# -- persistence --------------------------------------------------------------------
#
# Layout: 4-byte magic, little-endian uint32 header length, UTF-8 JSON header
# {format_version, config, tensors: [{name, shape, offset}]}, then the tensors
# as contiguous little-endian float64, offsets relative to the data section.


def save_params(params: PolicyParameters, path: str | Path) -> None:
    directory, blobs, offset = [], [], 0
    for name, p in params.params.items():
        blob = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        directory.append({"name": name, "shape": list(p.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"format_version": WEIGHTS_VERSION, "config": asdict(params.cfg), "tensors": directory},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_params(path: str | Path, expected: ModelConfig | None = None) -> PolicyParameters:
    raw = Path(path).read_bytes()
    if raw[:4] != WEIGHTS_MAGIC:
        raise WeightsError(f"{path}: not a weights file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen])
    if header.get("format_version") != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported weights format_version {header.get('format_version')!r}")
    cfg = ModelConfig(**header["config"])
    if expected is not None:
        for key, want in asdict(expected).items():
            got = getattr(cfg, key)
            if key != "simplified" and got != want:
                raise WeightsError(f"config mismatch for {key}: expected {want}, got {got}")
    data = raw[8 + hlen:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return PolicyParameters(cfg, tensors)
