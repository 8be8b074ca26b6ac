"""The AGHMN model: utterance readers, fused memory banks, attention summarizers and classifier"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from aghmn import autodiff as ad
from aghmn.autodiff import Node, ParamSet
from aghmn.cells import AgruParams, GruParams, agru_summarize, biagru_summarize, bigru_encode, gru_fold, uniform_init
from aghmn.errors import ContractError, DimensionError

if TYPE_CHECKING:
    from aghmn.data import Conversation, Vocabulary

logger = logging.getLogger(__name__)

Reader = Literal["bigru", "cnn"]
Fusion = Literal["unif", "bif"]
Summarizer = Literal["soft", "agru", "biagru"]

READERS: tuple[str, ...] = ("bigru", "cnn")
FUSIONS: tuple[str, ...] = ("unif", "bif")
SUMMARIZERS: tuple[str, ...] = ("soft", "agru", "biagru")

FUSION_NAMES = {"unif": "UniF", "bif": "BiF"}
SUMMARIZER_NAMES = {"soft": "Soft", "agru": "AGRU", "biagru": "BiAGRU"}


class ModelConfig(BaseModel):
    """Architecture selectors and dimensions.

    ``K = 0`` disables the memory entirely (history-blind ablation, o_t = q_t).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    d_w: int = Field(300, gt=0)
    d1: int = Field(100, gt=0)
    K: int = Field(40, ge=0)
    n_classes: int = Field(6, gt=0)
    reader: Reader = "bigru"
    fusion: Fusion = "unif"
    summarizer: Summarizer = "agru"
    dropout_p: float = Field(0.3, ge=0.0, lt=1.0)
    cnn_widths: tuple[int, ...] = (3, 4, 5)
    cnn_maps: int = Field(64, gt=0)

    @field_validator("cnn_widths")
    @classmethod
    def _widths_positive(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v or any(w <= 0 for w in v):
            raise ValueError("cnn_widths must be a nonempty list of positive widths")
        return v

    @property
    def variant(self) -> str:
        """Display name, e.g. ``BiF-AGRU`` or ``UniF-Soft (cnn)``."""
        name = f"{FUSION_NAMES[self.fusion]}-{SUMMARIZER_NAMES[self.summarizer]}"
        return name if self.reader == "bigru" else f"{name} (cnn)"


@dataclass
class MemoryBank:
    """Fused memory vectors for one query step, oldest first."""

    vectors: list[Node] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class StepTrace:
    """Forward result for one utterance step."""

    t: int
    speaker: str
    weights: list[float]
    distribution: Node
    gold: int

    @property
    def probs(self) -> np.ndarray:
        return self.distribution.value

    @property
    def pred(self) -> int:
        return int(np.argmax(self.distribution.value))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def init_params(
    cfg: ModelConfig,
    vocab_size: int,
    seed: int,
    embeddings: Optional[np.ndarray] = None,
) -> ParamSet:
    """Create every trainable tensor of the configured variant.

    Args:
        cfg: Model configuration
        vocab_size: Number of embedding rows (including the unknown row)
        seed: Seed for uniform initialization
        embeddings: Optional initial embedding matrix (vocab_size x d_w)
    """
    rng = np.random.default_rng(seed)
    params = ParamSet(seed=seed)
    d1 = cfg.d1

    if embeddings is None:
        embeddings = rng.uniform(-0.25, 0.25, size=(vocab_size, cfg.d_w))
        embeddings[0] = 0.0
    if embeddings.shape != (vocab_size, cfg.d_w):
        raise DimensionError("init_params", f"embedding matrix {embeddings.shape}, expected ({vocab_size}, {cfg.d_w})")
    params.add("embedding", embeddings)

    if cfg.reader == "bigru":
        GruParams.create(params, "reader.fwd", cfg.d_w, d1, rng)
        GruParams.create(params, "reader.bwd", cfg.d_w, d1, rng)
        params.add("reader.w_u", uniform_init(rng, (d1, 2 * d1), d1))
        params.add("reader.b_u", uniform_init(rng, (d1,), d1))
    else:
        for width in cfg.cnn_widths:
            params.add(f"reader.conv{width}.w", uniform_init(rng, (cfg.cnn_maps, width, cfg.d_w), width * cfg.d_w))
            params.add(f"reader.conv{width}.b", uniform_init(rng, (cfg.cnn_maps,), width * cfg.d_w))
        pooled = cfg.cnn_maps * len(cfg.cnn_widths)
        params.add("reader.w_u", uniform_init(rng, (d1, pooled), d1))
        params.add("reader.b_u", uniform_init(rng, (d1,), d1))

    if cfg.K > 0:
        GruParams.create(params, "fusion.fwd", d1, d1, rng)
        if cfg.fusion == "bif":
            GruParams.create(params, "fusion.bwd", d1, d1, rng)
        if cfg.summarizer in ("agru", "biagru"):
            AgruParams.create(params, "summarizer.fwd", d1, d1, rng)
        if cfg.summarizer == "biagru":
            AgruParams.create(params, "summarizer.bwd", d1, d1, rng)

    params.add("classifier.w_o", uniform_init(rng, (cfg.n_classes, d1), d1))
    params.add("classifier.b_o", uniform_init(rng, (cfg.n_classes,), d1))
    logger.debug("Initialized %s with %d tensors (%d scalars)", cfg.variant, len(params), params.size())
    return params


# ---------------------------------------------------------------------------
# Utterance readers
# ---------------------------------------------------------------------------

def _rows(x: Node) -> list[Node]:
    if x.value.ndim != 2 or x.shape[0] == 0:
        raise ContractError(f"an utterance needs at least one word vector, got shape {x.shape}")
    return [ad.take(x, n) for n in range(x.shape[0])]


def read_utterance_bigru(x: Node, params: ParamSet) -> Node:
    """BiGRU over words, max-over-time of concatenated states, then tanh(W_u h + b_u)."""
    words = _rows(x)
    fwd, bwd = bigru_encode(words, GruParams.from_params(params, "reader.fwd"), GruParams.from_params(params, "reader.bwd"))
    states = ad.stack([ad.concat(f, b) for f, b in zip(fwd, bwd)])
    pooled = ad.max_over_time(states)
    return ad.tanh(ad.add(ad.matmul(params["reader.w_u"], pooled), params["reader.b_u"]))


def read_utterance_cnn(x: Node, params: ParamSet, widths: Sequence[int] = (3, 4, 5)) -> Node:
    """Valid 1-D convolutions per width, max-over-time each, concatenated, then relu(W_u h + b_u).

    Utterances shorter than the widest filter are padded with zero vectors.
    """
    words = _rows(x)
    shortfall = max(widths) - len(words)
    if shortfall > 0:
        words = words + [ad.zeros(x.shape[1])] * shortfall
    padded = ad.stack(words)
    pooled = [
        ad.max_over_time(ad.conv1d(padded, params[f"reader.conv{w}.w"], params[f"reader.conv{w}.b"]))
        for w in widths
    ]
    return ad.relu(ad.add(ad.matmul(params["reader.w_u"], ad.concat(*pooled)), params["reader.b_u"]))


def read_utterance(x: Node, cfg: ModelConfig, params: ParamSet) -> Node:
    if cfg.reader == "bigru":
        return read_utterance_bigru(x, params)
    return read_utterance_cnn(x, params, cfg.cnn_widths)


# ---------------------------------------------------------------------------
# Memory, attention, summarizing
# ---------------------------------------------------------------------------

def build_memory_bank(history: Sequence[Node], fusion: Fusion, params: ParamSet) -> MemoryBank:
    """Fuse the last <= K utterance embeddings into memory vectors.

    UniF: memory_k = GRU state_k + u_k. BiF: memory_k = fwd_k + bwd_k + u_k.
    """
    if not history:
        return MemoryBank()
    if fusion == "unif":
        states = gru_fold(history, GruParams.from_params(params, "fusion.fwd"))
        return MemoryBank([ad.add(s, u) for s, u in zip(states, history)])
    fwd, bwd = bigru_encode(history, GruParams.from_params(params, "fusion.fwd"), GruParams.from_params(params, "fusion.bwd"))
    return MemoryBank([ad.add(ad.add(f, b), u) for f, b, u in zip(fwd, bwd, history)])


def attention_weights(q: Node, bank: MemoryBank) -> Node:
    """a_k = softmax_k(q . M_k), returned as a (K,) node.

    Raises:
        ContractError: If the bank is empty
    """
    if not bank.vectors:
        raise ContractError("attention over an empty memory bank")
    return ad.softmax(ad.stack([ad.dot(q, m) for m in bank.vectors]))


def soft_attention(bank: MemoryBank, weights: Node) -> Node:
    """c = sum_k a_k M_k."""
    if weights.shape != (len(bank),):
        raise ContractError(f"{len(bank)} memories but weights of shape {weights.shape}")
    return ad.weighted_sum(weights, ad.stack(bank.vectors))


Context = Union[None, Node, tuple[Node, Node]]


def summarize(bank: MemoryBank, weights: Node, summarizer: Summarizer, params: ParamSet) -> Context:
    if summarizer == "soft":
        return soft_attention(bank, weights)
    scalars = [ad.take(weights, k) for k in range(len(bank))]
    if summarizer == "agru":
        return agru_summarize(bank.vectors, scalars, AgruParams.from_params(params, "summarizer.fwd"))
    return biagru_summarize(
        bank.vectors, scalars,
        AgruParams.from_params(params, "summarizer.fwd"),
        AgruParams.from_params(params, "summarizer.bwd"),
    )


def refine_query(q: Node, context: Context) -> Node:
    """o = q + c (soft/agru), q + c_f + c_b (biagru), or q when there is no history."""
    if context is None:
        return q
    if isinstance(context, tuple):
        forward, backward = context
        return ad.add(ad.add(q, forward), backward)
    return ad.add(q, context)


def classify(o: Node, w_o: Node, b_o: Node) -> Node:
    """softmax(W_o o + b_o) with W_o oriented (n_classes, d1)."""
    return ad.softmax(ad.add(ad.matmul(w_o, o), b_o))


# ---------------------------------------------------------------------------
# Conversation level
# ---------------------------------------------------------------------------

def conversation_forward(
    conv: "Conversation",
    cfg: ModelConfig,
    params: ParamSet,
    vocab: "Vocabulary",
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> list[StepTrace]:
    """Run the model over a conversation, one trace per utterance.

    Each utterance is read once; its embedding serves as the query at its own
    step and as history for the following steps.

    Args:
        conv: Conversation to process
        cfg: Model configuration
        params: Model parameters
        vocab: Vocabulary used to map tokens to embedding rows
        train: Enables dropout on word embeddings and on o_t
        rng: Dropout generator (required when ``train`` is set and dropout_p > 0)
    """
    if not conv.utterances:
        raise ContractError(f"conversation '{conv.id}' is empty")
    p = cfg.dropout_p
    table = params["embedding"]
    traces: list[StepTrace] = []
    embeddings: list[Node] = []
    for t, utt in enumerate(conv.utterances):
        x = ad.dropout(ad.embedding(table, vocab.encode(utt.tokens)), p, train, rng)
        q = read_utterance(x, cfg, params)
        history = embeddings[max(0, t - cfg.K):t] if cfg.K > 0 else []
        embeddings.append(q)

        weights: list[float] = []
        context: Context = None
        if history:
            bank = build_memory_bank(history, cfg.fusion, params)
            a = attention_weights(q, bank)
            weights = a.value.tolist()
            context = summarize(bank, a, cfg.summarizer, params)
        o = ad.dropout(refine_query(q, context), p, train, rng)
        y = classify(o, params["classifier.w_o"], params["classifier.b_o"])
        traces.append(StepTrace(t=t + 1, speaker=utt.speaker, weights=weights, distribution=y, gold=utt.label))
    return traces


def nll_loss(traces: Sequence[StepTrace], gold: Optional[Sequence[int]] = None) -> Node:
    """Mean negative log-likelihood of the gold labels over all steps.

    Args:
        traces: Step traces, possibly from several conversations
        gold: Gold labels aligned with ``traces`` (defaults to each trace's own label)
    """
    if not traces:
        raise ContractError("loss over zero steps")
    labels = list(gold) if gold is not None else [tr.gold for tr in traces]
    if len(labels) != len(traces):
        raise ContractError(f"{len(traces)} traces but {len(labels)} gold labels")
    picks = []
    for tr, label in zip(traces, labels):
        n_classes = tr.distribution.shape[0]
        if not 0 <= label < n_classes:
            raise ContractError(f"gold label {label} outside [0, {n_classes})")
        picks.append(ad.log(ad.take(tr.distribution, label)))
    return ad.scale(ad.total(ad.stack(picks)), -1.0 / len(picks))


@dataclass
class Model:
    """A configured model bound to its parameters and vocabulary."""

    cfg: ModelConfig
    params: ParamSet
    vocab: "Vocabulary"
    labels: list[str] = field(default_factory=list)

    def forward(self, conv: "Conversation", train: bool = False, rng: Optional[np.random.Generator] = None) -> list[StepTrace]:
        return conversation_forward(conv, self.cfg, self.params, self.vocab, train=train, rng=rng)

    def loss(self, conv: "Conversation", train: bool = False, rng: Optional[np.random.Generator] = None) -> Node:
        return nll_loss(self.forward(conv, train=train, rng=rng))
