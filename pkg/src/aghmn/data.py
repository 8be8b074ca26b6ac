"""Corpus loading, vocabulary, embeddings and the synthetic contextual corpus"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from aghmn.errors import ContractError, CorpusFormatError, LabelMismatchError

logger = logging.getLogger(__name__)

UNK_INDEX = 0
UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[str, ...]
    label: int


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)


class CorpusRecord(BaseModel):
    """One line of a corpus file."""

    model_config = ConfigDict(extra="forbid")

    conv_id: str = Field(..., min_length=1)
    turn: int = Field(..., ge=1)
    speaker: str
    text: str
    label: str


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into word runs with each punctuation mark its own token."""
    return _TOKEN_RE.findall(text.lower())


def load_conversations(path: Path, labels: Sequence[str]) -> list[Conversation]:
    """Read a JSONL corpus into conversations ordered by id, turns ordered by index.

    Args:
        path: Corpus file, one CorpusRecord per line (blank lines are skipped)
        labels: Label strings; a label's position is its class index

    Raises:
        CorpusFormatError: Malformed line, duplicate turn, or an utterance with no tokens
        LabelMismatchError: A label outside ``labels``
    """
    path = Path(path)
    label_index = {label: i for i, label in enumerate(labels)}
    turns: dict[str, dict[int, Utterance]] = defaultdict(dict)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = CorpusRecord.model_validate_json(line)
            except ValidationError as e:
                raise CorpusFormatError(f"{path}:{lineno}: malformed record: {e.errors()[0]['msg']}") from None
            if record.label not in label_index:
                raise LabelMismatchError(f"{path}:{lineno}: label '{record.label}' is not in the label list {list(labels)}")
            tokens = tokenize(record.text)
            if not tokens:
                raise CorpusFormatError(f"{path}:{lineno}: conversation '{record.conv_id}' turn {record.turn} has no tokens")
            if record.turn in turns[record.conv_id]:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate turn {record.turn} in conversation '{record.conv_id}'")
            turns[record.conv_id][record.turn] = Utterance(record.speaker, tuple(tokens), label_index[record.label])

    conversations = [
        Conversation(conv_id, tuple(by_turn[t] for t in sorted(by_turn)))
        for conv_id, by_turn in sorted(turns.items())
    ]
    logger.info("Loaded %d conversations (%d utterances) from %s",
                len(conversations), sum(len(c) for c in conversations), path)
    return conversations


def write_conversations(conversations: Iterable[Conversation], path: Path, labels: Sequence[str]) -> None:
    """Write conversations in the corpus record format (inverse of load_conversations)."""
    with open(path, "w", encoding="utf-8") as f:
        for conv in conversations:
            for turn, utt in enumerate(conv.utterances, start=1):
                record = CorpusRecord(
                    conv_id=conv.id, turn=turn, speaker=utt.speaker,
                    text=" ".join(utt.tokens), label=labels[utt.label],
                )
                f.write(record.model_dump_json() + "\n")


def split_conversations(
    conversations: Sequence[Conversation], fraction: float, seed: int
) -> tuple[list[Conversation], list[Conversation]]:
    """Seeded shuffle split; returns (kept, held out) with ``fraction`` held out."""
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"split fraction must lie in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(len(conversations))
    n_held = max(1, int(round(len(conversations) * fraction)))
    held = sorted(order[:n_held].tolist())
    kept = sorted(order[n_held:].tolist())
    return [conversations[i] for i in kept], [conversations[i] for i in held]


# ---------------------------------------------------------------------------
# Vocabulary and embeddings
# ---------------------------------------------------------------------------

@dataclass
class Vocabulary:
    """Word/index mapping; index 0 is the unknown word."""

    words: list[str] = field(default_factory=lambda: [UNK_TOKEN])

    def __post_init__(self):
        if not self.words or self.words[0] != UNK_TOKEN:
            raise ContractError(f"vocabulary must start with {UNK_TOKEN}")
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK_INDEX)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(w, UNK_INDEX) for w in tokens]


def build_vocab(conversations: Iterable[Conversation], min_freq: int = 1) -> Vocabulary:
    """Index words with frequency >= ``min_freq`` by descending frequency, then lexicographically."""
    if min_freq < 1:
        raise ContractError(f"min_freq must be >= 1, got {min_freq}")
    counts = Counter(w for conv in conversations for utt in conv.utterances for w in utt.tokens)
    kept = sorted((w for w, c in counts.items() if c >= min_freq), key=lambda w: (-counts[w], w))
    return Vocabulary([UNK_TOKEN] + kept)


@dataclass
class EmbeddingTable:
    """Initial embedding matrix with per-row provenance."""

    matrix: np.ndarray
    pretrained: np.ndarray

    @property
    def coverage(self) -> float:
        """Fraction of in-vocabulary rows (unknown excluded) copied from the file."""
        rows = len(self.pretrained) - 1
        return float(self.pretrained[1:].sum()) / rows if rows else 0.0


def _is_header(parts: list[str]) -> bool:
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_embeddings(path: Optional[Path], vocab: Vocabulary, dim: int, seed: int) -> EmbeddingTable:
    """Build the initial embedding table for ``vocab``.

    Rows found in the text file are copied; the rest are drawn from a seeded
    uniform [-0.25, 0.25]; the unknown row is zero.

    Args:
        path: Space-separated text file ("word v1 ... vd" per line, optional
            "count dim" header), or None for all-random rows
        vocab: Vocabulary to cover
        dim: Word-vector size d_w
        seed: Seed for the random rows

    Raises:
        CorpusFormatError: If a line's vector length differs from ``dim``
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    matrix[UNK_INDEX] = 0.0
    pretrained = np.zeros(len(vocab), dtype=bool)

    if path is not None:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.rstrip().split(" ")
                if not line.strip() or (lineno == 1 and _is_header(parts)):
                    continue
                word, values = parts[0], parts[1:]
                if len(values) != dim:
                    raise CorpusFormatError(f"{path}:{lineno}: vector for '{word}' has {len(values)} values, expected {dim}")
                idx = vocab.lookup(word)
                if idx == UNK_INDEX:
                    continue
                try:
                    matrix[idx] = np.array(values, dtype=np.float64)
                except ValueError:
                    raise CorpusFormatError(f"{path}:{lineno}: vector for '{word}' is not numeric") from None
                pretrained[idx] = True

    table = EmbeddingTable(matrix, pretrained)
    logger.info("Embedding coverage: %.1f%% of %d words pretrained", 100 * table.coverage, len(vocab) - 1)
    return table


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

class SyntheticSpec(BaseModel):
    """Generator parameters plus the bookkeeping of what was generated."""

    n_conversations: int
    len_range: tuple[int, int]
    n_classes: int
    carry_prob: float
    seed: int
    labels: list[str]
    keywords: list[list[str]]
    fillers: list[str]
    n_utterances: int = 0
    n_carried: int = 0

    @property
    def oracle_ceiling(self) -> float:
        """Expected keyword-oracle accuracy: carried utterances are right 1/n_classes of the time."""
        if not self.n_utterances:
            return 0.0
        carried = self.n_carried / self.n_utterances
        return 1.0 - carried * (1.0 - 1.0 / self.n_classes)

    def to_json(self) -> str:
        data = self.model_dump()
        data["oracle_ceiling"] = self.oracle_ceiling
        return json.dumps(data, indent=2)


def generate_synthetic(
    n_conversations: int,
    len_range: tuple[int, int] = (4, 12),
    n_classes: int = 4,
    seed: int = 7,
    carry_prob: float = 0.3,
    keywords_per_class: int = 5,
    n_fillers: int = 40,
) -> tuple[list[Conversation], SyntheticSpec]:
    """Generate a two-speaker corpus whose labels sometimes live only in the history.

    Each class owns a disjoint keyword set. An ordinary utterance draws a class
    uniformly, two to five filler words and one or two of that class's keywords.
    With probability ``carry_prob`` (once the speaker has spoken before) an
    utterance instead copies the label of the same speaker's previous
    utterance and carries no keywords at all.
    """
    if n_classes < 2:
        raise ContractError(f"n_classes must be >= 2, got {n_classes}")
    lo, hi = len_range
    if not 1 <= lo <= hi:
        raise ContractError(f"invalid length range {len_range}")
    if not 0.0 <= carry_prob <= 1.0:
        raise ContractError(f"carry probability must lie in [0, 1], got {carry_prob}")

    rng = np.random.default_rng(seed)
    labels = [f"class_{c}" for c in range(n_classes)]
    keywords = [[f"kw{c}x{i}" for i in range(keywords_per_class)] for c in range(n_classes)]
    fillers = [f"w{i}" for i in range(n_fillers)]
    speakers = ("A", "B")
    width = len(str(n_conversations))

    conversations = []
    n_utterances = n_carried = 0
    for ci in range(n_conversations):
        length = int(rng.integers(lo, hi + 1))
        last_label: dict[str, int] = {}
        utterances = []
        for t in range(length):
            speaker = speakers[t % 2]
            words = [fillers[i] for i in rng.integers(0, n_fillers, size=int(rng.integers(2, 6)))]
            if speaker in last_label and rng.random() < carry_prob:
                label = last_label[speaker]
                n_carried += 1
            else:
                label = int(rng.integers(0, n_classes))
                picks = rng.choice(keywords_per_class, size=int(rng.integers(1, 3)), replace=False)
                for k in picks:
                    words.insert(int(rng.integers(0, len(words) + 1)), keywords[label][int(k)])
            last_label[speaker] = label
            utterances.append(Utterance(speaker, tuple(words), label))
        n_utterances += length
        conversations.append(Conversation(f"syn-{ci:0{width}d}", tuple(utterances)))

    spec = SyntheticSpec(
        n_conversations=n_conversations, len_range=(lo, hi), n_classes=n_classes,
        carry_prob=carry_prob, seed=seed, labels=labels, keywords=keywords, fillers=fillers,
        n_utterances=n_utterances, n_carried=n_carried,
    )
    logger.info("Generated %d conversations, %d utterances (%d context-carried)",
                n_conversations, n_utterances, n_carried)
    return conversations, spec


def keyword_oracle_accuracy(conversations: Sequence[Conversation], spec: SyntheticSpec) -> float:
    """Accuracy of the history-blind keyword lookup."""
    owner = {w: c for c, words in enumerate(spec.keywords) for w in words}
    correct = total = 0
    for conv in conversations:
        for utt in conv.utterances:
            guess = next((owner[w] for w in utt.tokens if w in owner), 0)
            correct += guess == utt.label
            total += 1
    return correct / total if total else 0.0
