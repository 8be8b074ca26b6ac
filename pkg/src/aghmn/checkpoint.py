"""Checkpoint files: named parameters plus a digest-guarded metadata record"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import ValidationError

from aghmn.autodiff import ParamSet
from aghmn.data import Vocabulary
from aghmn.errors import CheckpointError, ContractError
from aghmn.model import Model, ModelConfig, init_params

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_META_KEY = "__meta__"
_PARAM_PREFIX = "param__"


def config_digest(cfg: ModelConfig, labels: list[str], vocab: Vocabulary, shapes: dict[str, list[int]]) -> str:
    """sha256 over the canonical JSON of everything that fixes parameter layout and meaning."""
    canonical = json.dumps(
        {"config": cfg.model_dump(mode="json"), "labels": labels, "vocab": vocab.words, "shapes": shapes},
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(path: Path, model: Model, extra: Optional[dict[str, Any]] = None) -> Path:
    """Write ``model`` to ``path`` (numpy archive).

    Args:
        path: Destination file
        model: Model to save (labels must be set)
        extra: Additional JSON-serializable metadata (best epoch, seed, ...)
    """
    shapes = {name: list(node.shape) for name, node in model.params.items()}
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.model_dump(mode="json"),
        "labels": model.labels,
        "vocab": model.vocab.words,
        "shapes": shapes,
        "seed": model.params.seed,
        "digest": config_digest(model.cfg, model.labels, model.vocab, shapes),
        "extra": extra or {},
    }
    arrays = {f"{_PARAM_PREFIX}{name}": node.value for name, node in model.params.items()}
    arrays[_META_KEY] = np.array(json.dumps(meta))
    path = Path(path)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info("Saved checkpoint %s (%s, %d tensors)", path, model.cfg.variant, len(shapes))
    return path


def _parse_meta(path: Path, meta: Any) -> tuple[ModelConfig, Vocabulary, list[str], dict[str, list[int]], str]:
    try:
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('format_version')}")
        cfg = ModelConfig(**meta["config"])
        vocab = Vocabulary(list(meta["vocab"]))
        labels = [str(label) for label in meta["labels"]]
        shapes = {str(name): list(shape) for name, shape in meta["shapes"].items()}
        digest = str(meta["digest"])
    except (KeyError, TypeError, AttributeError, ValidationError, ContractError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint metadata: {e}") from None
    if len(labels) != cfg.n_classes:
        raise CheckpointError(f"{path}: malformed checkpoint metadata: {len(labels)} labels for {cfg.n_classes} classes")
    return cfg, vocab, labels, shapes, digest


def load_checkpoint(path: Path) -> tuple[Model, dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        Tuple of (model, metadata)

    Raises:
        CheckpointError: Unreadable file, malformed metadata, unknown format version,
            digest or shape mismatch
    """
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive[_META_KEY]))
            arrays = {
                key[len(_PARAM_PREFIX):]: archive[key]
                for key in archive.files if key.startswith(_PARAM_PREFIX)
            }
    except (OSError, KeyError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None

    cfg, vocab, labels, stored_shapes, digest = _parse_meta(path, meta)
    shapes = {name: list(arr.shape) for name, arr in arrays.items()}
    if shapes != stored_shapes:
        raise CheckpointError(f"{path}: stored parameter shapes do not match the metadata")
    if config_digest(cfg, labels, vocab, shapes) != digest:
        raise CheckpointError(f"{path}: config digest mismatch; the checkpoint was altered or belongs to another variant")
    expected = {name: list(node.shape) for name, node in init_params(cfg, len(vocab), seed=0).items()}
    if expected != shapes:
        raise CheckpointError(f"{path}: parameters do not match the {cfg.variant} layout")

    params = ParamSet(seed=meta.get("seed", 0))
    for name in stored_shapes:
        params.add(name, arrays[name])
    return Model(cfg, params, vocab, labels), meta
