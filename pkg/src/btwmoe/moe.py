"""A small multimodal mixture-of-experts model in plain NumPy.

Each modality has its own affine encoder and, inside every MoE layer, its
own router over a shared pool of two-layer GELU experts. Routing is top-k
with the gate softmax taken over the selected logits only; expert outputs
are gate-weighted and added back through a residual connection. Modality
embeddings are mean-pooled before the task head.

Backpropagation is written out analytically (reverse mode), with the top-k
selection treated as a constant and the gate softmax differentiated exactly.
A finite-difference gradient checker guards the whole thing.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import (
    InvalidInputError,
    InvalidStateError,
    NumericOverflowError,
    ShapeError,
)

REGRESSION = "regression"
CLASSIFICATION = "classification"

CHECKPOINT_MAGIC = b"BTWM"
CHECKPOINT_FORMAT_VERSION = 1

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class MoeConfig:
    input_dims: tuple[int, ...]
    embed_dim: int = 32
    n_experts: int = 4
    top_k: int = 2
    expert_hidden: int = 64
    n_moe_layers: int = 1
    task: str = REGRESSION
    n_classes: int = 0
    activation: str = "gelu"

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        if len(self.input_dims) < 1 or any(d < 1 for d in self.input_dims):
            raise InvalidInputError(f"bad input_dims {self.input_dims}")
        if not (1 <= self.top_k <= self.n_experts):
            raise InvalidInputError(f"top_k {self.top_k} outside [1, {self.n_experts}]")
        if self.embed_dim < 1 or self.expert_hidden < 1 or self.n_moe_layers < 1:
            raise InvalidInputError("embed_dim, expert_hidden, n_moe_layers must be >= 1")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise InvalidInputError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and self.n_classes < 2:
            raise InvalidInputError("classification needs n_classes >= 2")
        if self.activation != "gelu":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")

    @property
    def n_modalities(self) -> int:
        return len(self.input_dims)

    @property
    def head_dim(self) -> int:
        return 1 if self.task == REGRESSION else self.n_classes

    def to_dict(self) -> dict:
        return {
            "input_dims": list(self.input_dims),
            "embed_dim": self.embed_dim,
            "n_experts": self.n_experts,
            "top_k": self.top_k,
            "expert_hidden": self.expert_hidden,
            "n_moe_layers": self.n_moe_layers,
            "task": self.task,
            "n_classes": self.n_classes,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MoeConfig":
        d = dict(d)
        d["input_dims"] = tuple(d["input_dims"])
        return cls(**d)


@dataclass
class DataBatch:
    """Per-modality feature matrices (each (B, d_m)) plus optional targets."""

    features: list[np.ndarray]
    targets: np.ndarray | None = None

    @property
    def n_instances(self) -> int:
        return int(self.features[0].shape[0])

    def take(self, idx: np.ndarray) -> "DataBatch":
        return DataBatch(
            features=[f[idx] for f in self.features],
            targets=None if self.targets is None else self.targets[idx],
        )


@dataclass
class ModelParams:
    config: MoeConfig
    enc_w: list[np.ndarray]
    enc_b: list[np.ndarray]
    router_w: list[list[np.ndarray]]  # [layer][modality] (D, E)
    exp_w1: list[list[np.ndarray]]  # [layer][expert] (D, H)
    exp_b1: list[list[np.ndarray]]
    exp_w2: list[list[np.ndarray]]  # [layer][expert] (H, D)
    exp_b2: list[list[np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray
    version: int = 0

    def tensors(self):
        """(name, array) pairs in fixed declaration order."""
        cfg = self.config
        for m in range(cfg.n_modalities):
            yield f"enc_w[{m}]", self.enc_w[m]
            yield f"enc_b[{m}]", self.enc_b[m]
        for layer in range(cfg.n_moe_layers):
            for m in range(cfg.n_modalities):
                yield f"router_w[{layer}][{m}]", self.router_w[layer][m]
            for e in range(cfg.n_experts):
                yield f"exp_w1[{layer}][{e}]", self.exp_w1[layer][e]
                yield f"exp_b1[{layer}][{e}]", self.exp_b1[layer][e]
                yield f"exp_w2[{layer}][{e}]", self.exp_w2[layer][e]
                yield f"exp_b2[{layer}][{e}]", self.exp_b2[layer][e]
        yield "head_w", self.head_w
        yield "head_b", self.head_b

    def map_tensors(self, fn) -> "ModelParams":
        """Structural copy with fn(name, array) applied to every tensor."""
        cfg = self.config
        return ModelParams(
            config=cfg,
            enc_w=[fn(f"enc_w[{m}]", self.enc_w[m]) for m in range(cfg.n_modalities)],
            enc_b=[fn(f"enc_b[{m}]", self.enc_b[m]) for m in range(cfg.n_modalities)],
            router_w=[
                [fn(f"router_w[{l}][{m}]", self.router_w[l][m]) for m in range(cfg.n_modalities)]
                for l in range(cfg.n_moe_layers)
            ],
            exp_w1=[
                [fn(f"exp_w1[{l}][{e}]", self.exp_w1[l][e]) for e in range(cfg.n_experts)]
                for l in range(cfg.n_moe_layers)
            ],
            exp_b1=[
                [fn(f"exp_b1[{l}][{e}]", self.exp_b1[l][e]) for e in range(cfg.n_experts)]
                for l in range(cfg.n_moe_layers)
            ],
            exp_w2=[
                [fn(f"exp_w2[{l}][{e}]", self.exp_w2[l][e]) for e in range(cfg.n_experts)]
                for l in range(cfg.n_moe_layers)
            ],
            exp_b2=[
                [fn(f"exp_b2[{l}][{e}]", self.exp_b2[l][e]) for e in range(cfg.n_experts)]
                for l in range(cfg.n_moe_layers)
            ],
            head_w=fn("head_w", self.head_w),
            head_b=fn("head_b", self.head_b),
            version=self.version,
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(config: MoeConfig, seed: int | np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases, in declaration order from one stream."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d, h, e_n = config.embed_dim, config.expert_hidden, config.n_experts
    enc_w = [_glorot(rng, dim, d, (dim, d)) for dim in config.input_dims]
    enc_b = [np.zeros(d) for _ in config.input_dims]
    router_w, exp_w1, exp_b1, exp_w2, exp_b2 = [], [], [], [], []
    for _ in range(config.n_moe_layers):
        router_w.append([_glorot(rng, d, e_n, (d, e_n)) for _ in range(config.n_modalities)])
        exp_w1.append([_glorot(rng, d, h, (d, h)) for _ in range(e_n)])
        exp_b1.append([np.zeros(h) for _ in range(e_n)])
        exp_w2.append([_glorot(rng, h, d, (h, d)) for _ in range(e_n)])
        exp_b2.append([np.zeros(d) for _ in range(e_n)])
    head_w = _glorot(rng, d, config.head_dim, (d, config.head_dim))
    head_b = np.zeros(config.head_dim)
    return ModelParams(
        config=config,
        enc_w=enc_w,
        enc_b=enc_b,
        router_w=router_w,
        exp_w1=exp_w1,
        exp_b1=exp_b1,
        exp_w2=exp_w2,
        exp_b2=exp_b2,
        head_w=head_w,
        head_b=head_b,
    )


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(arr: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericOverflowError(f"non-finite activation in {layer}")


@dataclass
class _LayerCache:
    t_in: np.ndarray
    logits: np.ndarray
    selected: np.ndarray  # (B, K) expert indices
    gate: np.ndarray  # (B, K)
    expert_rows: dict = field(default_factory=dict)  # e -> (rows, slots, z1, h, z2)


@dataclass
class ForwardTrace:
    params: ModelParams
    params_version: int
    modalities: list[int]
    features: list[np.ndarray]
    weights: np.ndarray | None
    embed_pre: list[np.ndarray]
    layer_caches: list[list[_LayerCache]]  # [stream][layer]
    pooled: np.ndarray
    scores: np.ndarray
    probs: np.ndarray | None


def _top_k_select(logits: np.ndarray, k: int) -> np.ndarray:
    # Stable sort on negated logits: equal logits keep index order, so the
    # lower expert index wins ties.
    order = np.argsort(-logits, axis=1, kind="stable")
    return order[:, :k]


def _forward(
    params: ModelParams,
    batch: DataBatch,
    weights: np.ndarray | None = None,
    modalities: list[int] | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    cfg = params.config
    active = list(range(cfg.n_modalities)) if modalities is None else list(modalities)
    for m in active:
        if not 0 <= m < cfg.n_modalities:
            raise InvalidInputError(f"modality index {m} out of range")
    if len(batch.features) != cfg.n_modalities:
        raise ShapeError(
            f"batch has {len(batch.features)} modalities, config expects {cfg.n_modalities}"
        )
    b = batch.n_instances
    for m in active:
        if batch.features[m].shape != (b, cfg.input_dims[m]):
            raise ShapeError(
                f"modality {m} features {batch.features[m].shape} != {(b, cfg.input_dims[m])}"
            )
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (b, len(active)):
            raise ShapeError(f"weights {weights.shape} != {(b, len(active))}")

    embed_pre: list[np.ndarray] = []
    streams: list[np.ndarray] = []
    layer_caches: list[list[_LayerCache]] = []
    for s, m in enumerate(active):
        e0 = batch.features[m] @ params.enc_w[m] + params.enc_b[m]
        _check_finite(e0, f"encoder[{m}]")
        embed_pre.append(e0)
        t = e0 * weights[:, s : s + 1] if weights is not None else e0
        caches: list[_LayerCache] = []
        for layer in range(cfg.n_moe_layers):
            logits = t @ params.router_w[layer][m]
            _check_finite(logits, f"router[{layer}][{m}]")
            selected = _top_k_select(logits, cfg.top_k)
            gate = _softmax_rows(np.take_along_axis(logits, selected, axis=1))
            out = np.zeros_like(t)
            cache = _LayerCache(t_in=t, logits=logits, selected=selected, gate=gate)
            for e in range(cfg.n_experts):
                rows, slots = np.nonzero(selected == e)
                if rows.size == 0:
                    continue
                z1 = t[rows] @ params.exp_w1[layer][e] + params.exp_b1[layer][e]
                h = _gelu(z1)
                z2 = h @ params.exp_w2[layer][e] + params.exp_b2[layer][e]
                _check_finite(z2, f"expert[{layer}][{e}]")
                out[rows] += gate[rows, slots][:, None] * z2
                cache.expert_rows[e] = (rows, slots, z1, h, z2)
            t = t + out
            caches.append(cache)
        streams.append(t)
        layer_caches.append(caches)

    pooled = sum(streams) / len(streams)
    scores = pooled @ params.head_w + params.head_b
    _check_finite(scores, "head")
    if cfg.task == REGRESSION:
        predictions = scores[:, 0]
        probs = None
    else:
        probs = _softmax_rows(scores)
        predictions = probs

    trace = ForwardTrace(
        params=params,
        params_version=params.version,
        modalities=active,
        features=batch.features,
        weights=weights,
        embed_pre=embed_pre,
        layer_caches=layer_caches,
        pooled=pooled,
        scores=scores,
        probs=probs,
    )
    return predictions, trace


def forward(
    params: ModelParams,
    batch: DataBatch,
    modality_weights: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Multimodal forward pass; returns predictions and the trace for backward.

    Regression predictions are a (B,) vector of means; classification
    predictions are (B, C) softmax probabilities. When modality_weights
    (B, M) are given, each modality embedding is scaled by its entry before
    routing; all-ones weights reproduce the unweighted pass bit for bit.
    """
    return _forward(params, batch, weights=modality_weights, modalities=None)


def unimodal_forward(params: ModelParams, batch: DataBatch, modality: int) -> np.ndarray:
    """Forward pass over a single modality stream (the pool has one element)."""
    predictions, _ = _forward(params, batch, weights=None, modalities=[modality])
    return predictions


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.tensors()}


def backward(trace: ForwardTrace, loss_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every parameter tensor.

    loss_grad is the gradient of the loss w.r.t. the forward predictions:
    (B,) for regression means, (B, C) for classification probabilities (the
    softmax is differentiated here). Top-k selection is held constant.
    """
    params = trace.params
    if params.version != trace.params_version:
        raise InvalidStateError("stale trace: parameters changed since the forward pass")
    cfg = params.config
    grads = zero_grads(params)

    if cfg.task == REGRESSION:
        d_scores = np.asarray(loss_grad, dtype=np.float64)[:, None]
    else:
        d_probs = np.asarray(loss_grad, dtype=np.float64)
        p = trace.probs
        d_scores = p * (d_probs - np.sum(d_probs * p, axis=1, keepdims=True))

    grads["head_w"] += trace.pooled.T @ d_scores
    grads["head_b"] += d_scores.sum(axis=0)
    d_pooled = d_scores @ params.head_w.T

    n_streams = len(trace.modalities)
    for s, m in enumerate(trace.modalities):
        d_t = d_pooled / n_streams
        for layer in reversed(range(cfg.n_moe_layers)):
            cache = trace.layer_caches[s][layer]
            d_out = d_t
            d_t_in = d_t.copy()  # residual path
            d_gate = np.zeros_like(cache.gate)
            for e in range(cfg.n_experts):
                if e not in cache.expert_rows:
                    continue
                rows, slots, z1, h, z2 = cache.expert_rows[e]
                d_rows = d_out[rows]
                d_gate[rows, slots] += np.sum(d_rows * z2, axis=1)
                d_z2 = cache.gate[rows, slots][:, None] * d_rows
                grads[f"exp_w2[{layer}][{e}]"] += h.T @ d_z2
                grads[f"exp_b2[{layer}][{e}]"] += d_z2.sum(axis=0)
                d_h = d_z2 @ params.exp_w2[layer][e].T
                d_z1 = d_h * _gelu_grad(z1)
                grads[f"exp_w1[{layer}][{e}]"] += cache.t_in[rows].T @ d_z1
                grads[f"exp_b1[{layer}][{e}]"] += d_z1.sum(axis=0)
                d_t_in[rows] += d_z1 @ params.exp_w1[layer][e].T
            # Gate softmax over the selected logits only.
            d_sel_logits = cache.gate * (
                d_gate - np.sum(d_gate * cache.gate, axis=1, keepdims=True)
            )
            d_logits = np.zeros_like(cache.logits)
            np.put_along_axis(d_logits, cache.selected, d_sel_logits, axis=1)
            grads[f"router_w[{layer}][{m}]"] += cache.t_in.T @ d_logits
            d_t_in += d_logits @ params.router_w[layer][m].T
            d_t = d_t_in
        if trace.weights is not None:
            d_t = d_t * trace.weights[:, s : s + 1]
        grads[f"enc_w[{m}]"] += trace.features[m].T @ d_t
        grads[f"enc_b[{m}]"] += d_t.sum(axis=0)
    return grads


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> ModelParams:
    """One plain gradient step; returns new parameters, inputs untouched."""
    if lr < 0:
        raise InvalidInputError(f"lr must be >= 0, got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError(f"non-finite gradient for {name}")
    updated = params.map_tensors(lambda name, arr: arr - lr * grads[name])
    updated.version = params.version + 1
    return updated


def mse_loss_and_grad(predictions: np.ndarray, targets: np.ndarray):
    diff = predictions - targets
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.shape[0]


def cross_entropy_loss_and_grad(probs: np.ndarray, labels: np.ndarray):
    b = probs.shape[0]
    idx = np.arange(b)
    p_true = np.clip(probs[idx, labels], 1e-12, None)
    loss = float(-np.mean(np.log(p_true)))
    d_probs = np.zeros_like(probs)
    d_probs[idx, labels] = -1.0 / (p_true * b)
    return loss, d_probs


def loss_and_pred_grad(config: MoeConfig, predictions: np.ndarray, targets: np.ndarray):
    if config.task == REGRESSION:
        return mse_loss_and_grad(predictions, targets)
    return cross_entropy_loss_and_grad(predictions, targets.astype(np.int64))


def grad_check(
    params: ModelParams,
    batch: DataBatch,
    n_probes: int = 50,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes n_probes scalar parameters chosen uniformly over all tensors.
    The relative denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if n_probes < 1:
        raise InvalidInputError("n_probes must be >= 1")
    if batch.targets is None:
        raise InvalidInputError("grad_check needs a batch with targets")

    predictions, trace = _forward(params, batch)
    _, d_pred = loss_and_pred_grad(params.config, predictions, batch.targets)
    grads = backward(trace, d_pred)

    named = list(params.tensors())
    sizes = np.array([arr.size for _, arr in named])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])

    def loss_at() -> float:
        pred, _ = _forward(params, batch)
        return loss_and_pred_grad(params.config, pred, batch.targets)[0]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for flat in rng.integers(0, total, size=n_probes):
        t_idx = int(np.searchsorted(offsets, flat, side="right")) - 1
        name, arr = named[t_idx]
        local = int(flat - offsets[t_idx])
        idx = np.unravel_index(local, arr.shape)
        original = arr[idx]
        arr[idx] = original + epsilon
        loss_plus = loss_at()
        arr[idx] = original - epsilon
        loss_minus = loss_at()
        arr[idx] = original
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grads[name][idx]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def save_checkpoint(params: ModelParams, path) -> None:
    """Versioned binary container: magic, format version, config, tensors."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_FORMAT_VERSION))
    cfg_bytes = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    for _, arr in params.tensors():
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        data = fh.read()
    view = io.BytesIO(data)
    magic = view.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"bad checkpoint magic {magic!r}")
    (fmt_version,) = struct.unpack("<I", view.read(4))
    if fmt_version != CHECKPOINT_FORMAT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint format version {fmt_version}")
    (cfg_len,) = struct.unpack("<I", view.read(4))
    config = MoeConfig.from_dict(json.loads(view.read(cfg_len).decode("utf-8")))
    params = init_params(config, seed=0)

    # Tensors were written in tensors() declaration order; read them all
    # before reassembling, keyed by name.
    read: dict[str, np.ndarray] = {}
    for name, like in params.tensors():
        (ndim,) = struct.unpack("<I", view.read(4))
        shape = tuple(struct.unpack("<I", view.read(4))[0] for _ in range(ndim))
        if shape != like.shape:
            raise ShapeError(f"checkpoint tensor {name} has shape {shape}, expected {like.shape}")
        n_bytes = int(np.prod(shape)) * 8
        read[name] = np.frombuffer(view.read(n_bytes), dtype="<f8").reshape(shape).astype(np.float64)

    loaded = params.map_tensors(lambda name, _arr: read[name])
    loaded.version = 0
    return loaded
