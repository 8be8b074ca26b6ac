"""Run configuration: profiles, flat key = value files, validation"""

from __future__ import annotations

import json
import tomllib
from pathlib import Path
from typing import Any, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from aghmn.errors import ConfigError
from aghmn.model import Fusion, ModelConfig, Reader, Summarizer
from aghmn.train import TrainConfig

IEMOCAP_LABELS = ["happy", "sad", "neutral", "angry", "excited", "frustrated"]
MELD_LABELS = ["anger", "disgust", "sadness", "joy", "neutral", "surprise", "fear"]

# Long conversations take a wide context window, short ones a narrow one.
PROFILES: dict[str, dict[str, Any]] = {
    "long": {"K": 40, "labels": IEMOCAP_LABELS},
    "short": {"K": 10, "labels": MELD_LABELS},
}

PATH_FIELDS = ("train_path", "val_path", "test_path", "embeddings_path")


class RunConfig(BaseModel):
    """Everything one experiment needs, as a flat record."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    profile: Literal["long", "short"] = "long"

    # model
    d_w: int = Field(300, gt=0)
    d1: int = Field(100, gt=0)
    K: Optional[int] = Field(None, ge=0)
    reader: Reader = "bigru"
    fusion: Fusion = "unif"
    summarizer: Summarizer = "agru"
    cnn_widths: tuple[int, ...] = (3, 4, 5)
    cnn_maps: int = Field(64, gt=0)

    # training
    lr0: float = Field(5e-4, gt=0)
    clip_norm: float = Field(5.0, gt=0)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    decay: float = Field(0.95, gt=0.0, lt=1.0)
    patience: int = Field(10, gt=0)
    max_epochs: int = Field(100, gt=0)
    workers: int = Field(1, gt=0)
    seed: int = 1

    # data
    train_path: Optional[Path] = None
    val_path: Optional[Path] = None
    test_path: Optional[Path] = None
    embeddings_path: Optional[Path] = None
    out_dir: Path = Path("runs")
    labels: Optional[list[str]] = None
    min_freq: int = Field(1, ge=1)
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)

    @field_validator("labels")
    @classmethod
    def _labels_unique(cls, v: Optional[list[str]]) -> Optional[list[str]]:
        if v is not None:
            if not v:
                raise ValueError("labels must be nonempty")
            if len(set(v)) != len(v):
                raise ValueError("labels must not repeat")
        return v

    @model_validator(mode="before")
    @classmethod
    def _resolve_profile(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        defaults = PROFILES.get(data.get("profile", "long"))
        if defaults is None:
            return data
        data = dict(data)
        if data.get("K") is None:
            data["K"] = defaults["K"]
        if data.get("labels") is None:
            data["labels"] = list(defaults["labels"])
        return data

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(
            d_w=self.d_w, d1=self.d1, K=self.K, n_classes=self.n_classes,
            reader=self.reader, fusion=self.fusion, summarizer=self.summarizer,
            dropout_p=self.dropout, cnn_widths=self.cnn_widths, cnn_maps=self.cnn_maps,
        )

    def to_train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            lr0=self.lr0, clip_norm=self.clip_norm, dropout=self.dropout, decay=self.decay,
            patience=self.patience, max_epochs=self.max_epochs, workers=self.workers,
            seed=self.seed if seed is None else seed,
        )

    def validate_paths(self) -> None:
        """Check that the referenced corpora exist.

        Raises:
            ConfigError: Missing training corpus or a referenced file that does not exist
        """
        problems = []
        if self.train_path is None:
            problems.append("train_path: required")
        for name in PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                problems.append(f"{name}: file not found: {value}")
        if problems:
            raise ConfigError(problems)


def _format_errors(e: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()]


def build_run_config(values: Mapping[str, Any]) -> RunConfig:
    """Validate ``values`` into a RunConfig.

    Raises:
        ConfigError: One ``field: message`` entry per invalid field
    """
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None


def parse_override(text: str) -> tuple[str, Any]:
    """Parse one ``key=value`` override using the config-file value syntax.

    Bare words that are not valid values are taken as strings.
    """
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError([f"override: expected key=value, got '{text}'"])
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.strip(), value


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Read a flat ``key = value`` config file and apply overrides.

    Args:
        path: Config file (None for defaults only)
        overrides: Values that replace file entries (CLI flags)

    Raises:
        ConfigError: Unreadable file, unknown key or invalid value
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                values = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError([f"config: file not found: {path}"]) from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError([f"config: {path}: {e}"]) from None
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError([f"{k}: sections are not supported; use flat keys" for k in nested])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_run_config(values)


def dump_run_config(cfg: RunConfig) -> str:
    """Render ``cfg`` as flat ``key = value`` text that load_run_config reads back."""
    lines = []
    for key, value in cfg.model_dump(mode="json").items():
        if value is None:
            continue
        lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"
