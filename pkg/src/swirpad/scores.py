"""Score sets and their CSV file format (``sample_id,score,label,pai_species``)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .data import LABELS
from .errors import BadSchema, IoError, MissingFile

SCORE_HEADER = ["sample_id", "score", "label", "pai_species"]


@dataclass(frozen=True)
class ScoreSet:
    """PAD scores of one system; low = bona fide, high = attack, range [0, 100]."""

    system_id: str
    scores: Mapping[str, float]
    labels: Mapping[str, str]
    species: Mapping[str, Optional[str]] = field(default_factory=dict)

    def __post_init__(self):
        keys = set(self.scores)
        if set(self.labels) != keys:
            raise BadSchema(f"{self.system_id}: score and label maps have different sample ids")
        species = dict(self.species)
        if not set(species) <= keys:
            raise BadSchema(f"{self.system_id}: species map has unknown sample ids")
        for k in keys:
            species.setdefault(k, None)
            s = self.scores[k]
            if not (isinstance(s, (int, float, np.floating)) and math.isfinite(s) and 0.0 <= s <= 100.0):
                raise BadSchema(f"{self.system_id}: score of {k} out of [0, 100]: {s!r}")
            if self.labels[k] not in LABELS:
                raise BadSchema(f"{self.system_id}: label of {k} must be one of {LABELS}")
            if self.labels[k] == "attack" and not species[k]:
                raise BadSchema(f"{self.system_id}: attack {k} without pai_species")
        object.__setattr__(self, "scores", {k: float(self.scores[k]) for k in sorted(keys)})
        object.__setattr__(self, "labels", {k: self.labels[k] for k in sorted(keys)})
        object.__setattr__(
            self, "species", {k: (species[k] if self.labels[k] == "attack" else None) for k in sorted(keys)}
        )

    def __len__(self):
        return len(self.scores)

    def ids(self) -> list[str]:
        return list(self.scores)

    def arrays(self):
        """``(scores, is_attack, species)`` arrays in sample-id order."""
        ids = self.ids()
        s = np.array([self.scores[k] for k in ids], dtype=np.float64)
        attack = np.array([self.labels[k] == "attack" for k in ids], dtype=bool)
        species = np.array([self.species[k] or "" for k in ids], dtype=object)
        return s, attack, species

    def with_scores(self, system_id: str, scores: Mapping[str, float]) -> "ScoreSet":
        return ScoreSet(system_id, scores, self.labels, self.species)


def format_scores(scores: ScoreSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for k in scores.ids():
        w.writerow([k, f"{scores.scores[k]:.6f}", scores.labels[k], scores.species[k] or ""])
    return buf.getvalue()


def parse_scores(text: str, system_id: str = "") -> ScoreSet:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != SCORE_HEADER:
        raise BadSchema(f"score file header must be {','.join(SCORE_HEADER)}")
    scores, labels, species = {}, {}, {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SCORE_HEADER):
            raise BadSchema(f"score file line {lineno}: expected 4 columns, got {len(row)}")
        sid, score, label, sp = row
        if sid in scores:
            raise BadSchema(f"score file line {lineno}: duplicate sample_id {sid}")
        try:
            scores[sid] = float(score)
        except ValueError:
            raise BadSchema(f"score file line {lineno}: score {score!r} is not a number") from None
        labels[sid] = label
        species[sid] = sp or None
    return ScoreSet(system_id, scores, labels, species)


def persist_scores(scores: ScoreSet, path) -> None:
    """Write a score CSV sorted by sample id, scores to 6 decimals."""
    try:
        Path(path).write_text(format_scores(scores), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write score file {path}: {exc}") from None


def load_scores(path, system_id: Optional[str] = None) -> ScoreSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"score file not found: {path}") from None
    except OSError as exc:
        raise IoError(f"cannot read score file {path}: {exc}") from None
    try:
        return parse_scores(text, system_id if system_id is not None else path.stem)
    except BadSchema as exc:
        raise BadSchema(f"{path}: {exc}") from None
