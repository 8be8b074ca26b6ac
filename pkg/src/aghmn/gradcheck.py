"""End-to-end finite-difference verification of every model variant"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from aghmn import autodiff as ad
from aghmn.data import Conversation, Utterance, Vocabulary, build_vocab
from aghmn.model import FUSIONS, READERS, SUMMARIZERS, Model, ModelConfig, init_params

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4

# Hook applied to analytic gradients before comparison; lets tests plant a fault.
GradHook = Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]]


def tiny_config(reader: str = "bigru", fusion: str = "unif", summarizer: str = "agru") -> ModelConfig:
    """d_w=4, d1=3, K=3, two classes, four CNN maps; dropout off."""
    return ModelConfig(
        d_w=4, d1=3, K=3, n_classes=2, reader=reader, fusion=fusion, summarizer=summarizer,
        dropout_p=0.0, cnn_maps=4,
    )


def tiny_conversation(seed: int = 0) -> Conversation:
    """Three utterances of at most four words over a six-word vocabulary."""
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"]
    utterances = tuple(
        Utterance(
            speaker="AB"[t % 2],
            tokens=tuple(words[i] for i in rng.integers(0, len(words), size=int(rng.integers(1, 5)))),
            label=int(rng.integers(0, 2)),
        )
        for t in range(3)
    )
    return Conversation(f"gradcheck-{seed}", utterances)


@dataclass
class VariantResult:
    cfg: ModelConfig
    worst: float
    worst_param: str
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst < TOLERANCE

    @property
    def failures(self) -> list[str]:
        return sorted(name for name, err in self.per_param.items() if err >= TOLERANCE)


def check_variant(
    cfg: ModelConfig,
    seed: int = 0,
    eps: float = 1e-5,
    hook: Optional[GradHook] = None,
) -> VariantResult:
    """Compare backward against central differences for one variant.

    The unknown-word row is excluded because training keeps it frozen.
    """
    conv = tiny_conversation(seed)
    vocab: Vocabulary = build_vocab([conv])
    params = init_params(cfg, len(vocab), seed=seed)
    model = Model(cfg, params, vocab)

    params.zero_grad()
    ad.backward(model.loss(conv))
    analytic = params.grads()
    if hook is not None:
        analytic = hook(analytic)
    numeric = ad.finite_diff_grad(lambda _: model.loss(conv), params, eps=eps)

    per_param = {}
    for name in params:
        err = ad.relative_error(analytic[name], numeric[name])
        if name == "embedding":
            err = err[1:]
        per_param[name] = float(err.max()) if err.size else 0.0
    worst_param = max(per_param, key=per_param.get)
    result = VariantResult(cfg, per_param[worst_param], worst_param, per_param)
    logger.info("%s seed %d: worst relative error %.2e (%s)", cfg.variant, seed, result.worst, worst_param)
    return result


def all_variants() -> list[ModelConfig]:
    """Every reader x fusion x summarizer combination on the tiny config."""
    return [tiny_config(r, f, s) for r, f, s in itertools.product(READERS, FUSIONS, SUMMARIZERS)]


def run_grad_check(seeds: int = 1, hook: Optional[GradHook] = None) -> list[VariantResult]:
    """Worst result over ``seeds`` seeds for every variant."""
    results = []
    for cfg in all_variants():
        runs = [check_variant(cfg, seed=s, hook=hook) for s in range(seeds)]
        results.append(max(runs, key=lambda r: r.worst))
    return results
