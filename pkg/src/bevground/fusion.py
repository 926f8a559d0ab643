"""Query selection and fusion: cosine selector, attention fuser, box head.

The selector projects object queries and the aggregated context vector into
a shared space with two seeded MLPs, ranks object queries by cosine
similarity to the context, and keeps the top k (ties resolve to the lower
row index). The fuser then runs each block as three scaled-dot-product
attention sub-layers over the selected rows:

    1. self-attention over the selected queries,
    2. cross-attention against the full object-query set,
    3. cross-attention against the (projected) aggregated context,

each followed by a residual connection and layer normalization (post-norm,
no positional encodings). All weights regenerate deterministically from the
config seed, so a weight bundle is just the config itself.

The box head maps each fused row to (x, y, z, w, l, h, yaw, vx, vy, logit);
sizes go through exp, the confidence through a logistic, and the
moving/stopped label is derived from the predicted velocity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .attributes import MOVING_SPEED_THRESHOLD, MovementState
from .errors import DimensionMismatch, ValidationError, ZeroVector
from .evaluation import PredictedBox
from .rng import SplitMix64
from .token_protocol import Adapter, as_context_query, as_object_queries

LAYERNORM_EPS = 1e-5
ZERO_NORM_EPS = 1e-12

SUBLAYER_NAMES = ("self", "object", "semantics")


@dataclass(frozen=True)
class ProjectionPair:
    """The two MLPs aligning object queries and the context into one space."""

    object_mlp: Adapter
    context_mlp: Adapter

    @classmethod
    def seeded(cls, seed: int, query_dim: int, context_dim: int, target_dim: int) -> "ProjectionPair":
        return cls(
            object_mlp=Adapter.seeded(seed, query_dim, target_dim, hidden_dim=target_dim),
            context_mlp=Adapter.seeded(seed + 1, context_dim, target_dim, hidden_dim=target_dim),
        )


def similarity(q, context, proj: ProjectionPair) -> np.ndarray:
    """Cosine similarity of every projected object query to the projected context."""
    queries = as_object_queries(q)
    ctx = as_context_query(context)
    q_hat = proj.object_mlp.apply(queries)
    c_hat = proj.context_mlp.apply(ctx.reshape(1, -1))[0]
    q_norms = np.linalg.norm(q_hat, axis=1)
    c_norm = float(np.linalg.norm(c_hat))
    if c_norm < ZERO_NORM_EPS:
        raise ZeroVector("projected context query has zero norm")
    if np.any(q_norms < ZERO_NORM_EPS):
        row = int(np.argmin(q_norms))
        raise ZeroVector(f"projected object query row {row} has zero norm")
    return (q_hat @ c_hat) / (q_norms * c_norm)


@dataclass(frozen=True)
class SelectedQueries:
    indices: tuple[int, ...]
    rows: np.ndarray


def select_top_k(q, sims: np.ndarray, k: int) -> SelectedQueries:
    """Top-k rows by similarity, descending; equal similarities keep lower index."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    queries = as_object_queries(q)
    sims = np.asarray(sims, dtype=np.float64).reshape(-1)
    if sims.shape[0] != queries.shape[0]:
        raise DimensionMismatch("similarity length must equal the number of object queries")
    order = np.lexsort((np.arange(sims.shape[0]), -sims))
    chosen = order[: min(k, sims.shape[0])]
    return SelectedQueries(indices=tuple(int(i) for i in chosen), rows=queries[chosen])


@dataclass(frozen=True)
class FuserConfig:
    k: int = 256
    heads: int = 4
    blocks: int = 1
    d: int = 256
    seed: int = 0

    def __post_init__(self):
        if min(self.k, self.heads, self.blocks, self.d) < 1:
            raise ValidationError("k, heads, blocks and d must be positive")
        if self.d % self.heads != 0:
            raise ValidationError("d must be divisible by heads")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FuserConfig":
        return cls(**json.loads(text))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "FuserConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(handle.read())


def build_fuser_weights(cfg: FuserConfig, query_dim: int, context_dim: int) -> list[dict[str, dict[str, np.ndarray]]]:
    """Per-block, per-sublayer weight arrays, regenerated from cfg.seed.

    Draw order is fixed (blocks, then self/object/semantics, then
    wq, wk, wv, wo), so the layout is a pure function of the config.
    """
    stream = SplitMix64(cfg.seed)
    src_dims = {"self": query_dim, "object": query_dim, "semantics": context_dim}
    blocks = []
    for _ in range(cfg.blocks):
        block = {}
        for name in SUBLAYER_NAMES:
            block[name] = {
                "wq": stream.uniform((query_dim, cfg.d)),
                "wk": stream.uniform((src_dims[name], cfg.d)),
                "wv": stream.uniform((src_dims[name], cfg.d)),
                "wo": stream.uniform((cfg.d, query_dim)),
                "ln_gamma": np.ones(query_dim),
                "ln_beta": np.zeros(query_dim),
            }
        blocks.append(block)
    return blocks


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def _attention(x: np.ndarray, source: np.ndarray, w: dict[str, np.ndarray], heads: int,
               collect: list | None) -> np.ndarray:
    d = w["wq"].shape[1]
    head_dim = d // heads
    q = x @ w["wq"]
    k = source @ w["wk"]
    v = source @ w["wv"]
    outputs = []
    for h in range(heads):
        sl = slice(h * head_dim, (h + 1) * head_dim)
        logits = q[:, sl] @ k[:, sl].T / math.sqrt(head_dim)
        attn = _softmax_rows(logits)
        if collect is not None:
            collect.append(attn)
        outputs.append(attn @ v[:, sl])
    return np.concatenate(outputs, axis=1) @ w["wo"]


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LAYERNORM_EPS) * gamma + beta


def fuse(selected: SelectedQueries, all_q, c_tilde, cfg: FuserConfig,
         collect_attention: list | None = None) -> np.ndarray:
    """Run the fusion stack over the selected queries; returns a (k, C_B) matrix."""
    x = np.asarray(selected.rows, dtype=np.float64)
    queries = as_object_queries(all_q)
    context = as_context_query(c_tilde).reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != queries.shape[1]:
        raise DimensionMismatch("selected rows and object queries disagree on width")
    weights = build_fuser_weights(cfg, queries.shape[1], context.shape[1])
    sources = {"self": None, "object": queries, "semantics": context}
    for block in weights:
        for name in SUBLAYER_NAMES:
            source = x if sources[name] is None else sources[name]
            attn_out = _attention(x, source, block[name], cfg.heads, collect_attention)
            x = _layer_norm(x + attn_out, block[name]["ln_gamma"], block[name]["ln_beta"])
    return x


@dataclass(frozen=True)
class BoxHead:
    """Affine map from fused rows to the 10 box parameters."""

    w: np.ndarray
    b: np.ndarray

    @classmethod
    def seeded(cls, seed: int, query_dim: int) -> "BoxHead":
        stream = SplitMix64(seed)
        return cls(w=stream.uniform((query_dim, 10)), b=stream.uniform((10,)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def decode_boxes(fused: np.ndarray, head: BoxHead) -> list[PredictedBox]:
    """One predicted box per fused row; sizes via exp, confidence via logistic."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.ndim != 2 or head.w.shape[0] != fused.shape[1] or head.w.shape[1] != 10:
        raise DimensionMismatch("box head expects (k, C_B) rows and a (C_B, 10) map")
    raw = fused @ head.w + head.b
    sizes = np.exp(raw[:, 3:6])
    scores = _sigmoid(raw[:, 9])
    boxes = []
    for i in range(raw.shape[0]):
        vx, vy = float(raw[i, 7]), float(raw[i, 8])
        moving = math.hypot(vx, vy) >= MOVING_SPEED_THRESHOLD
        boxes.append(
            PredictedBox(
                center=(float(raw[i, 0]), float(raw[i, 1]), float(raw[i, 2])),
                size_wlh=(float(sizes[i, 0]), float(sizes[i, 1]), float(sizes[i, 2])),
                yaw=float(raw[i, 6]),
                velocity_xy=(vx, vy),
                movement=MovementState.MOVING if moving else MovementState.STOPPED,
                score=float(scores[i]),
            )
        )
    return boxes
