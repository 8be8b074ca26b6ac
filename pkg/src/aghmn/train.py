"""Optimization and evaluation: Adam, gradient clipping, plateau decay, early stopping, metrics"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support

from aghmn import autodiff as ad
from aghmn.autodiff import ParamSet
from aghmn.data import UNK_INDEX, Conversation
from aghmn.errors import ContractError
from aghmn.model import Model, nll_loss

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimizer and schedule settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr0: float = Field(5e-4, gt=0)
    clip_norm: float = Field(5.0, gt=0)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    decay: float = Field(0.95, gt=0.0, lt=1.0)
    patience: int = Field(10, gt=0)
    max_epochs: int = Field(100, gt=0)
    seed: int = 1
    workers: int = Field(1, gt=0)


@dataclass
class OptState:
    """Adam moments and schedule state."""

    lr: float
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, lr: float) -> "OptState":
        return cls(
            lr=lr,
            m={name: np.zeros_like(node.value) for name, node in params.items()},
            v={name: np.zeros_like(node.value) for name, node in params.items()},
        )


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Rescale all gradients together when their global L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}


def adam_step(params: ParamSet, grads: Mapping[str, np.ndarray], opt: OptState) -> OptState:
    """One bias-corrected Adam update of ``params`` in place."""
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for name, node in params.items():
        g = grads[name]
        if g.shape != node.shape:
            raise ContractError(f"gradient for '{name}' has shape {g.shape}, parameter {node.shape}")
        opt.m[name] = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g * g
        m_hat = opt.m[name] / c1
        v_hat = opt.v[name] / c2
        node.value = node.value - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return opt


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

class MetricsReport(BaseModel):
    """Per-class and aggregate classification metrics.

    Per-class accuracy is the class recall; the weighted accuracy therefore
    equals overall accuracy.
    """

    labels: list[str]
    support: list[int]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    accuracy: float
    weighted_f1: float
    macro_f1: float
    n: int
    confusion: list[list[int]] = Field(default_factory=list)

    @property
    def per_class_acc(self) -> list[float]:
        return self.recall


def compute_metrics(gold: Sequence[int], pred: Sequence[int], labels: Sequence[str]) -> MetricsReport:
    """Metrics from aligned gold/predicted class indices.

    A class with no predictions and no gold instances gets F1 = 0 and still
    counts in the macro average.

    Raises:
        ContractError: Empty or misaligned label sequences
    """
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold labels but {len(pred)} predictions")
    if len(gold) == 0:
        raise ContractError("no predictions to score")
    classes = list(range(len(labels)))
    precision, recall, f1, support = precision_recall_fscore_support(
        gold, pred, labels=classes, average=None, zero_division=0,
    )
    confusion = confusion_matrix(gold, pred, labels=classes)
    n = int(support.sum())
    return MetricsReport(
        labels=list(labels),
        support=support.tolist(),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        accuracy=float(accuracy_score(gold, pred)),
        weighted_f1=float(np.dot(support, f1) / n),
        macro_f1=float(np.mean(f1)),
        n=n,
        confusion=confusion.tolist(),
    )


def predict(model: Model, dataset: Sequence[Conversation], workers: int = 1) -> list[list]:
    """Forward every conversation with dropout off; thread-parallel over frozen parameters."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(model.forward, dataset))
    return [model.forward(conv) for conv in dataset]


def evaluate(model: Model, dataset: Sequence[Conversation], workers: int = 1) -> MetricsReport:
    """Argmax predictions over ``dataset`` summarized as a MetricsReport."""
    if not dataset:
        raise ContractError("cannot evaluate an empty dataset")
    gold, pred = [], []
    for traces in predict(model, dataset, workers):
        gold.extend(tr.gold for tr in traces)
        pred.extend(tr.pred for tr in traces)
    return compute_metrics(gold, pred, model.labels or [str(c) for c in range(model.cfg.n_classes)])


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

class EpochRecord(BaseModel):
    """One line of the epoch log."""

    model_config = ConfigDict(frozen=True)

    epoch: int
    train_loss: float
    val_acc: float
    val_f1: float
    val_mf1: float
    lr: float


@dataclass
class FitResult:
    best_epoch: int
    best_val_mf1: float
    log: list[EpochRecord]
    stopped_early: bool


def train_conversation(model: Model, conv: Conversation, opt: OptState, clip_norm: float,
                       rng: np.random.Generator) -> float:
    """One optimizer step on one conversation; returns the summed step NLL."""
    traces = model.forward(conv, train=True, rng=rng)
    loss = nll_loss(traces)
    model.params.zero_grad()
    ad.backward(loss)
    grads = model.params.grads()
    # the unknown-word row stays a frozen zero vector
    grads["embedding"][UNK_INDEX] = 0.0
    adam_step(model.params, clip_gradients(grads, clip_norm), opt)
    return loss.item() * len(traces)


def fit(
    model: Model,
    train_set: Sequence[Conversation],
    val_set: Sequence[Conversation],
    cfg: TrainConfig,
    log_path: Optional[Path] = None,
) -> FitResult:
    """Train ``model`` in place and leave it holding the best-validation-mF1 parameters.

    Every epoch visits the training conversations in a seeded shuffled order,
    one optimizer step per conversation. Each epoch whose validation mF1 is
    not strictly above the best so far multiplies the learning rate by
    ``cfg.decay``; ``cfg.patience`` such epochs in a row stop training.

    Args:
        model: Model to train
        train_set: Training conversations
        val_set: Validation conversations
        cfg: Training configuration
        log_path: Optional JSONL file that receives one EpochRecord per epoch
    """
    if not train_set or not val_set:
        raise ContractError("fit needs nonempty training and validation splits")
    rng = np.random.default_rng(cfg.seed)
    opt = OptState.for_params(model.params, cfg.lr0)
    n_steps = sum(len(conv) for conv in train_set)

    best_state = model.params.state()
    best_mf1, best_epoch, bad_epochs = -1.0, 0, 0
    log: list[EpochRecord] = []
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        for i in rng.permutation(len(train_set)):
            total += train_conversation(model, train_set[int(i)], opt, cfg.clip_norm, rng)
        report = evaluate(model, val_set, cfg.workers)
        record = EpochRecord(
            epoch=epoch, train_loss=total / n_steps, val_acc=report.accuracy,
            val_f1=report.weighted_f1, val_mf1=report.macro_f1, lr=opt.lr,
        )
        log.append(record)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")
        logger.info("epoch %d  loss %.4f  val acc %.4f  f1 %.4f  mF1 %.4f  lr %.2e",
                    epoch, record.train_loss, record.val_acc, record.val_f1, record.val_mf1, record.lr)

        if report.macro_f1 > best_mf1:
            best_mf1, best_epoch, bad_epochs = report.macro_f1, epoch, 0
            best_state = model.params.state()
        else:
            bad_epochs += 1
            opt.lr *= cfg.decay
            if bad_epochs >= cfg.patience:
                stopped_early = True
                logger.info("Early stop after %d epochs without improvement", bad_epochs)
                break

    model.params.load_state(best_state)
    return FitResult(best_epoch=best_epoch, best_val_mf1=best_mf1, log=log, stopped_early=stopped_early)
