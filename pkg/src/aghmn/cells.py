"""Recurrent building blocks: GRU, BiGRU and the attention-gated GRU (AGRU / BiAGRU)"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from aghmn import autodiff as ad
from aghmn.autodiff import Node, ParamSet
from aghmn.errors import ContractError, DimensionError

Weight = Union[Node, float]


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], hidden: int) -> np.ndarray:
    """Uniform in [-1/sqrt(hidden), 1/sqrt(hidden)]."""
    bound = 1.0 / np.sqrt(hidden)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class GruParams:
    """Parameters of one GRU direction. W* are hidden x input, U* hidden x hidden."""

    wz: Node
    wr: Node
    wh: Node
    uz: Node
    ur: Node
    uh: Node
    bz: Node
    br: Node
    bh: Node

    @property
    def hidden(self) -> int:
        return self.uz.shape[0]

    @property
    def input_size(self) -> int:
        return self.wz.shape[1]

    @classmethod
    def from_params(cls, params: ParamSet, prefix: str) -> "GruParams":
        return cls(**{f: params[f"{prefix}.{f}"] for f in cls.__dataclass_fields__})

    @classmethod
    def create(cls, params: ParamSet, prefix: str, input_size: int, hidden: int, rng: np.random.Generator) -> "GruParams":
        """Register freshly initialized GRU parameters under ``prefix``."""
        for gate in ("z", "r", "h"):
            params.add(f"{prefix}.w{gate}", uniform_init(rng, (hidden, input_size), hidden))
            params.add(f"{prefix}.u{gate}", uniform_init(rng, (hidden, hidden), hidden))
            params.add(f"{prefix}.b{gate}", uniform_init(rng, (hidden,), hidden))
        return cls.from_params(params, prefix)


@dataclass(frozen=True)
class AgruParams:
    """AGRU parameters: a GRU without the update gate, which the attention weight replaces."""

    wr: Node
    wh: Node
    ur: Node
    uh: Node
    br: Node
    bh: Node

    @property
    def hidden(self) -> int:
        return self.ur.shape[0]

    @property
    def input_size(self) -> int:
        return self.wr.shape[1]

    @classmethod
    def from_params(cls, params: ParamSet, prefix: str) -> "AgruParams":
        return cls(**{f: params[f"{prefix}.{f}"] for f in cls.__dataclass_fields__})

    @classmethod
    def create(cls, params: ParamSet, prefix: str, input_size: int, hidden: int, rng: np.random.Generator) -> "AgruParams":
        for gate in ("r", "h"):
            params.add(f"{prefix}.w{gate}", uniform_init(rng, (hidden, input_size), hidden))
            params.add(f"{prefix}.u{gate}", uniform_init(rng, (hidden, hidden), hidden))
            params.add(f"{prefix}.b{gate}", uniform_init(rng, (hidden,), hidden))
        return cls.from_params(params, prefix)


def _check_step(op: str, x: Node, h_prev: Node, input_size: int, hidden: int) -> None:
    if x.shape != (input_size,) or h_prev.shape != (hidden,):
        raise DimensionError(op, f"input {x.shape} / state {h_prev.shape}, expected ({input_size},) / ({hidden},)")


def _affine(w: Node, x: Node, u: Node, h: Node, b: Node) -> Node:
    return ad.add(ad.add(ad.matmul(w, x), ad.matmul(u, h)), b)


def gru_step(x: Node, h_prev: Node, p: GruParams) -> Node:
    """One GRU transition.

    z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
    h~ = tanh(Wh x + Uh (r * h) + bh), h = (1 - z) * h_prev + z * h~
    """
    _check_step("gru_step", x, h_prev, p.input_size, p.hidden)
    z = ad.sigmoid(_affine(p.wz, x, p.uz, h_prev, p.bz))
    r = ad.sigmoid(_affine(p.wr, x, p.ur, h_prev, p.br))
    candidate = ad.tanh(_affine(p.wh, x, p.uh, ad.mul(r, h_prev), p.bh))
    keep = ad.sub(ad.constant(1.0), z)
    return ad.add(ad.mul(keep, h_prev), ad.mul(z, candidate))


def gru_fold(seq: Sequence[Node], p: GruParams) -> list[Node]:
    """Run a GRU left to right from a zero state and return every hidden state."""
    h = ad.zeros(p.hidden)
    states = []
    for x in seq:
        h = gru_step(x, h, p)
        states.append(h)
    return states


def bigru_encode(seq: Sequence[Node], fwd: GruParams, bwd: GruParams) -> tuple[list[Node], list[Node]]:
    """Forward and backward GRU states, both aligned with ``seq`` positions.

    Raises:
        ContractError: If ``seq`` is empty
    """
    if not seq:
        raise ContractError("bigru_encode needs a nonempty sequence")
    forward_states = gru_fold(seq, fwd)
    backward_states = gru_fold(list(reversed(seq)), bwd)[::-1]
    return forward_states, backward_states


def _as_weight(a: Weight) -> Node:
    node = a if isinstance(a, Node) else ad.constant(a)
    if node.value.size != 1:
        raise ContractError(f"attention weight must be a scalar, got shape {node.shape}")
    value = float(node.value.reshape(-1)[0])
    if not 0.0 <= value <= 1.0:
        raise ContractError(f"attention weight must lie in [0, 1], got {value}")
    return node


def agru_step(m: Node, a: Weight, h_prev: Node, p: AgruParams) -> Node:
    """One AGRU transition: h = a * h~ + (1 - a) * h_prev.

    The candidate h~ keeps the GRU reset gate; the scalar weight ``a`` takes
    the place of the update gate and is broadcast over the hidden units.

    Raises:
        ContractError: If ``a`` lies outside [0, 1]
    """
    a = _as_weight(a)
    _check_step("agru_step", m, h_prev, p.input_size, p.hidden)
    r = ad.sigmoid(_affine(p.wr, m, p.ur, h_prev, p.br))
    candidate = ad.tanh(_affine(p.wh, m, p.uh, ad.mul(r, h_prev), p.bh))
    keep = ad.sub(ad.constant(1.0), a)
    return ad.add(ad.mul(a, candidate), ad.mul(keep, h_prev))


def _check_bank(memories: Sequence[Node], weights: Sequence[Weight]) -> None:
    if len(memories) != len(weights):
        raise ContractError(f"{len(memories)} memories but {len(weights)} weights")
    if not memories:
        raise ContractError("cannot summarize an empty memory bank")


def agru_summarize(memories: Sequence[Node], weights: Sequence[Weight], p: AgruParams) -> Node:
    """Fold the AGRU over memories oldest-first and return the final state."""
    _check_bank(memories, weights)
    h = ad.zeros(p.hidden)
    for m, a in zip(memories, weights):
        h = agru_step(m, a, h, p)
    return h


def biagru_summarize(
    memories: Sequence[Node], weights: Sequence[Weight], pf: AgruParams, pb: AgruParams
) -> tuple[Node, Node]:
    """Forward (oldest-first) and backward (newest-first) AGRU summaries."""
    _check_bank(memories, weights)
    forward = agru_summarize(memories, weights, pf)
    backward = agru_summarize(list(reversed(memories)), list(reversed(weights)), pb)
    return forward, backward
