"""Context-aggregation token protocol, run against a deterministic toy LM.

The protocol extends a base vocabulary with two reserved tokens. ``[DET]``
is a task marker: it announces that the token after it exists only to pull
multimodal context into a single vector. ``[EMB]`` is that placeholder; it
must immediately follow ``[DET]``, it is excluded from the text loss, and
its input embedding is replaced by a supplied context query vector. The
hidden state the model produces at the placeholder position is the
aggregated context.

Concretely, during greedy auto-regression over input embeddings:

    step k feeds [x_m, e(g_0), ..., e(g_{k-1})] and emits token g_k,
    returning the hidden state at the last input position.

When g_n = [DET] the model must emit g_{n+1} = [EMB]; the input embedding
appended for the placeholder slot is the context query (never the [EMB]
word embedding), so the hidden state returned by the following step is the
hidden at the placeholder position, and that is the aggregated context.
One pair per response; anything else is a protocol violation.

The toy LM stands in for a real language model: its hidden state is a
seeded affine map of the mean prefix embedding and its token emissions
follow a fixed schedule, so every trace is a pure function of (seed,
inputs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, ProtocolError, Truncated, ValidationError
from .hog import PLURALS
from .rng import SplitMix64

DET_TOKEN = "[DET]"
EMB_TOKEN = "[EMB]"
EOS_TOKEN = "<eos>"

_COUNT_WORDS = (
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
)


class Vocabulary:
    """Token-string/id mapping with reserved protocol and end-of-sequence ids."""

    def __init__(self, base_tokens: Sequence[str]):
        seen = []
        for token in base_tokens:
            if token in (DET_TOKEN, EMB_TOKEN, EOS_TOKEN):
                raise ValidationError(f"{token!r} is reserved")
            if token not in seen:
                seen.append(token)
        self._tokens = tuple(seen) + (EOS_TOKEN, DET_TOKEN, EMB_TOKEN)
        self._ids = {token: i for i, token in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def encode(self, token: str) -> int:
        if token not in self._ids:
            raise ValidationError(f"unknown token {token!r}")
        return self._ids[token]

    def decode(self, token_id: int) -> str:
        return self._tokens[token_id]

    @property
    def det_id(self) -> int:
        return self._ids[DET_TOKEN]

    @property
    def emb_id(self) -> int:
        return self._ids[EMB_TOKEN]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS_TOKEN]


def as_object_queries(q) -> np.ndarray:
    arr = np.asarray(q, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DimensionMismatch(f"object queries must be a nonempty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("object queries must be finite")
    return arr


def as_context_query(c) -> np.ndarray:
    arr = np.asarray(c, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("context query must be finite")
    return arr


@dataclass(frozen=True)
class Adapter:
    """Two affine layers with an elementwise nonlinearity between them."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    nonlinearity: str = "relu"

    @classmethod
    def seeded(cls, seed: int, in_dim: int, out_dim: int, hidden_dim: int | None = None,
               nonlinearity: str = "relu") -> "Adapter":
        hidden_dim = out_dim if hidden_dim is None else hidden_dim
        stream = SplitMix64(seed)
        return cls(
            w1=stream.uniform((in_dim, hidden_dim)),
            b1=stream.uniform((hidden_dim,)),
            w2=stream.uniform((hidden_dim, out_dim)),
            b2=stream.uniform((out_dim,)),
            nonlinearity=nonlinearity,
        )

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def apply(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.w1.shape[0]:
            raise DimensionMismatch(
                f"adapter expects input dim {self.w1.shape[0]}, got {rows.shape[-1]}"
            )
        hidden = rows @ self.w1 + self.b1
        if self.nonlinearity == "relu":
            hidden = np.maximum(hidden, 0.0)
        elif self.nonlinearity != "identity":
            raise ValidationError(f"unknown nonlinearity {self.nonlinearity!r}")
        return hidden @ self.w2 + self.b2


def build_multimodal_input(q, adapter: Adapter, text_embeddings) -> np.ndarray:
    """Adapted object queries followed by text embeddings: the LM input prefix."""
    queries = as_object_queries(q)
    text = np.asarray(text_embeddings, dtype=np.float64)
    if text.size == 0:
        text = text.reshape(0, adapter.out_dim)
    if text.ndim != 2 or text.shape[1] != adapter.out_dim:
        raise DimensionMismatch(
            f"text embeddings must be (*, {adapter.out_dim}), got shape {text.shape}"
        )
    return np.vstack([adapter.apply(queries), text])


def render_thinking_response(values: dict[str, str], count: int) -> str:
    """Verbose scene description ending in the [DET] [EMB] pair.

    Example: "There are two stopped black cars in the front right of the
    ego vehicle. They are at [DET] [EMB]".
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    count_word = _COUNT_WORDS[count] if count < len(_COUNT_WORDS) else str(count)
    words = ["There", "is" if count == 1 else "are", count_word]
    if "movement" in values:
        words.append(values["movement"])
    if "appearance" in values:
        words.append(values["appearance"])
    if "category" in values:
        noun = values["category"].replace("_", " ") if count == 1 else PLURALS[values["category"]]
        words.extend(noun.split(" "))
    else:
        words.append("object" if count == 1 else "objects")
    if "relationship" in values:
        words.extend(["in", "the", *values["relationship"].split("_"), "of", "the", "ego", "vehicle"])
    head = " ".join(words)
    tail = "It is" if count == 1 else "They are"
    return f"{head}. {tail} at {DET_TOKEN} {EMB_TOKEN}"


class ToyLM(Protocol):
    """Minimal step interface the aggregation loop drives."""

    vocab: Vocabulary

    def step(self, prefix: np.ndarray) -> tuple[np.ndarray, int]:
        """Hidden state at the last prefix position and the next token id."""
        ...

    def embed(self, token_id: int) -> np.ndarray:
        """Input (word) embedding of a token."""
        ...


class ScriptedToyLM:
    """Deterministic LM fixture: seeded affine hidden map, scripted emissions.

    The hidden state is ``W @ mean(prefix) + b``. Token emissions follow
    ``schedule`` positionally (the k-th generated token is ``schedule[k]``),
    padding with end-of-sequence past the end, so emissions are a pure
    function of the prefix length. ``base_len`` is the multimodal prefix
    length the run starts from.
    """

    def __init__(self, seed: int, hidden_dim: int, vocab: Vocabulary,
                 schedule: Sequence[int], base_len: int):
        stream = SplitMix64(seed)
        self.weight = stream.uniform((hidden_dim, hidden_dim))
        self.bias = stream.uniform((hidden_dim,))
        self.embeddings = stream.uniform((len(vocab), hidden_dim))
        self.readout_weight = stream.uniform((len(vocab), hidden_dim))
        self.readout_bias = stream.uniform((len(vocab),))
        self.vocab = vocab
        self.schedule = tuple(schedule)
        self.base_len = base_len
        self.hidden_dim = hidden_dim

    def step(self, prefix: np.ndarray) -> tuple[np.ndarray, int]:
        prefix = np.asarray(prefix, dtype=np.float64)
        if prefix.ndim != 2 or prefix.shape[1] != self.hidden_dim:
            raise DimensionMismatch(f"prefix must be (*, {self.hidden_dim}), got {prefix.shape}")
        hidden = self.weight @ prefix.mean(axis=0) + self.bias
        generated = prefix.shape[0] - self.base_len
        if 0 <= generated < len(self.schedule):
            token = self.schedule[generated]
        else:
            token = self.vocab.eos_id
        return hidden, token

    def embed(self, token_id: int) -> np.ndarray:
        return self.embeddings[token_id]

    def readout(self, hidden: np.ndarray) -> np.ndarray:
        """Logits over the vocabulary; used to evaluate the text loss."""
        return self.readout_weight @ hidden + self.readout_bias


@dataclass(frozen=True)
class AggregationTrace:
    """Everything one aggregation run produced, for inspection and replay."""

    x_m: np.ndarray
    tokens: tuple[int, ...]
    token_strings: tuple[str, ...]
    det_position: int
    emb_position: int
    aggregated_context: np.ndarray
    loss_mask: tuple[bool, ...]
    input_embeddings: np.ndarray
    step_hiddens: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.token_strings),
            "det_position": self.det_position,
            "loss_mask": [1 if keep else 0 for keep in self.loss_mask],
            "aggregated_context": [float(v) for v in self.aggregated_context],
        }


def run_aggregation(lm: ToyLM, x_m, context_query, max_steps: int) -> AggregationTrace:
    """Greedy auto-regression with context-query substitution at the [EMB] slot."""
    if max_steps < 2:
        raise ValidationError("max_steps must be >= 2")
    x_m = np.asarray(x_m, dtype=np.float64)
    context = as_context_query(context_query)
    vocab = lm.vocab
    inputs = [row for row in x_m]
    tokens: list[int] = []
    hiddens: list[np.ndarray] = []
    det_position: int | None = None
    emb_position: int | None = None
    aggregated: np.ndarray | None = None
    expect_emb = False
    capture_next = False
    finished = False

    for _ in range(max_steps):
        hidden, token = lm.step(np.asarray(inputs))
        if capture_next:
            aggregated = hidden
            capture_next = False
        position = len(tokens)
        tokens.append(token)
        hiddens.append(hidden)
        if expect_emb:
            if token != vocab.emb_id:
                raise ProtocolError(f"[DET] must be followed by [EMB], got {vocab.decode(token)!r}")
            emb_position = position
            expect_emb = False
            inputs.append(context)
            capture_next = True
            continue
        if token == vocab.emb_id:
            raise ProtocolError("[EMB] without a preceding [DET]")
        if token == vocab.det_id:
            if det_position is not None:
                raise ProtocolError("second [DET] after a completed pair")
            det_position = position
            expect_emb = True
            inputs.append(lm.embed(token))
            continue
        if token == vocab.eos_id:
            finished = True
            break
        inputs.append(lm.embed(token))

    if det_position is None or emb_position is None or aggregated is None:
        if finished:
            raise ProtocolError("generation ended without a completed [DET] [EMB] pair")
        raise Truncated(f"no completed [DET] [EMB] pair within {max_steps} steps")

    return AggregationTrace(
        x_m=x_m,
        tokens=tuple(tokens),
        token_strings=tuple(vocab.decode(t) for t in tokens),
        det_position=det_position,
        emb_position=emb_position,
        aggregated_context=aggregated,
        loss_mask=tuple(i != emb_position for i in range(len(tokens))),
        input_embeddings=np.asarray(inputs),
        step_hiddens=tuple(hiddens),
    )


def build_loss_mask(tokens: Sequence[int], vocab: Vocabulary) -> list[bool]:
    """Text-loss mask over a token id sequence: False exactly at [EMB]."""
    det_id, emb_id = vocab.det_id, vocab.emb_id
    det_count = sum(1 for t in tokens if t == det_id)
    emb_count = sum(1 for t in tokens if t == emb_id)
    if det_count > 1 or emb_count > 1:
        raise ProtocolError("at most one [DET] [EMB] pair is allowed")
    mask = []
    for i, token in enumerate(tokens):
        if token == emb_id:
            if i == 0 or tokens[i - 1] != det_id:
                raise ProtocolError("[EMB] without a preceding [DET]")
            mask.append(False)
            continue
        if token == det_id and (i + 1 >= len(tokens) or tokens[i + 1] != emb_id):
            raise ProtocolError("[DET] must be followed by [EMB]")
        mask.append(True)
    return mask
