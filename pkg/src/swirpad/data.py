"""Corpus format: 16-bit PGM channel files per sample plus a CSV manifest.

Layout of a corpus directory::

    corpus/
      manifest.csv
      train_bf_0000/wl1200.pgm  wl1300.pgm  wl1450.pgm  wl1550.pgm
      ...

The manifest header is exactly ``sample_id,path,label,pai_species,split``;
``path`` is the sample directory relative to the manifest.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import BadImage, BadSchema, DuplicateId, MissingFile, OutOfBounds, UnknownId

WAVELENGTHS = (1200, 1300, 1450, 1550)
CHANNEL_FILES = tuple(f"wl{w}.pgm" for w in WAVELENGTHS)
FRAME_SHAPE = (64, 64)
ROI_SHAPE = (18, 58)
DEFAULT_CROP = (23, 3)
MAXVAL = 65535

LABELS = ("bona_fide", "attack")
SPLITS = ("train", "validation", "test")
MANIFEST_HEADER = ["sample_id", "path", "label", "pai_species", "split"]


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise BadImage("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM into a 2-D array.

    16-bit images (maxval > 255) are big-endian per the netpbm convention
    and come back as ``uint16``; 8-bit images come back as ``uint8``.
    """
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise BadImage(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise BadImage(f"malformed PGM header: {exc}") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 65535:
        raise BadImage(f"invalid PGM header values {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace byte before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    raster = data[pos:pos + nbytes]
    if len(raster) != nbytes:
        raise BadImage(f"PGM raster truncated: {len(raster)} of {nbytes} bytes")
    img = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return img.astype(np.uint16 if maxval > 255 else np.uint8)


def encode_pgm(img: np.ndarray) -> bytes:
    """Encode a 2-D uint16 array as a 16-bit binary PGM (maxval 65535)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise BadImage(f"expected a 2-D image, got shape {img.shape}")
    if img.dtype != np.uint16:
        raise BadImage(f"expected uint16 pixels, got {img.dtype}")
    h, w = img.shape
    header = f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii")
    return header + img.astype(">u2").tobytes()


def read_pgm(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"channel file not found: {path}") from None
    try:
        return decode_pgm(data)
    except BadImage as exc:
        raise BadImage(f"{path}: {exc}") from None


def write_pgm(path: Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img))


# -- domain types -------------------------------------------------------------

@dataclass(frozen=True)
class SwirSample:
    """One acquisition: four co-registered 64x64 16-bit frames.

    ``channels`` has shape (4, 64, 64), ordered by ascending wavelength.
    """

    sample_id: str
    channels: np.ndarray
    label: str
    pai_species: Optional[str] = None
    split: str = "train"

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.shape != (len(WAVELENGTHS), *FRAME_SHAPE):
            raise BadImage(f"{self.sample_id}: expected channels of shape (4, 64, 64), got {ch.shape}")
        if ch.dtype != np.uint16:
            raise BadImage(f"{self.sample_id}: expected uint16 intensities, got {ch.dtype}")
        _check_labels(self.sample_id, self.label, self.pai_species, self.split)
        ch = ch.copy()
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def is_attack(self) -> bool:
        return self.label == "attack"


@dataclass(frozen=True)
class RoiStack:
    """Fixed-size finger-slot crop of a sample; ``channels`` is (4, 18, 58)."""

    channels: np.ndarray
    origin: tuple[int, int]

    @property
    def n_pixels(self) -> int:
        return int(self.channels.shape[1] * self.channels.shape[2])


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    path: str
    label: str
    pai_species: Optional[str]
    split: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    corpus_root: Path
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {e.sample_id: e for e in self.entries})

    def __len__(self):
        return len(self.entries)

    def __contains__(self, sample_id):
        return sample_id in self._index

    def entry(self, sample_id: str) -> ManifestEntry:
        try:
            return self._index[sample_id]
        except KeyError:
            raise UnknownId(f"sample id not in manifest: {sample_id}") from None

    def ids(self, split: Optional[str] = None, label: Optional[str] = None) -> list[str]:
        return [
            e.sample_id
            for e in self.entries
            if (split is None or e.split == split) and (label is None or e.label == label)
        ]

    def counts(self) -> dict[str, dict[str, int]]:
        """Per-split counts: ``{split: {"bona_fide": n, "attack": m, "total": n + m}}``."""
        c = Counter((e.split, e.label) for e in self.entries)
        out = {}
        for split in SPLITS:
            bf, pa = c[(split, "bona_fide")], c[(split, "attack")]
            out[split] = {"bona_fide": bf, "attack": pa, "total": bf + pa}
        return out

    def species(self, split: Optional[str] = None) -> set[str]:
        return {
            e.pai_species
            for e in self.entries
            if e.pai_species and (split is None or e.split == split)
        }


def _check_labels(sample_id, label, pai_species, split):
    if label not in LABELS:
        raise BadSchema(f"{sample_id}: label must be one of {LABELS}, got {label!r}")
    if split not in SPLITS:
        raise BadSchema(f"{sample_id}: split must be one of {SPLITS}, got {split!r}")
    if label == "attack" and not pai_species:
        raise BadSchema(f"{sample_id}: attack sample without pai_species")
    if label == "bona_fide" and pai_species:
        raise BadSchema(f"{sample_id}: bona fide sample with pai_species {pai_species!r}")


# -- manifest -----------------------------------------------------------------

def parse_manifest(text: str, corpus_root: Path, check_files: bool = True) -> Manifest:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise BadSchema("manifest is empty (missing header row)") from None
    if header != MANIFEST_HEADER:
        raise BadSchema(f"manifest header must be {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
    entries = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise BadSchema(f"manifest line {lineno}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}")
        sample_id, path, label, species, split = row
        if not sample_id:
            raise BadSchema(f"manifest line {lineno}: empty sample_id")
        _check_labels(sample_id, label, species, split)
        if sample_id in seen:
            raise DuplicateId(f"duplicate sample_id in manifest: {sample_id}")
        seen.add(sample_id)
        if check_files:
            sample_dir = corpus_root / path
            for name in CHANNEL_FILES:
                if not (sample_dir / name).is_file():
                    raise MissingFile(f"{sample_id}: missing channel file {sample_dir / name}")
        entries.append(ManifestEntry(sample_id, path, label, species or None, split))
    return Manifest(tuple(entries), corpus_root)


def load_manifest(path) -> Manifest:
    """Load and validate a manifest CSV; the corpus root is its directory.

    ``path`` may also name the corpus directory itself, in which case
    ``manifest.csv`` inside it is read.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.csv"
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"manifest not found: {path}") from None
    return parse_manifest(text, path.parent)


def format_manifest(entries: Iterable[ManifestEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        writer.writerow([e.sample_id, e.path, e.label, e.pai_species or "", e.split])
    return buf.getvalue()


def write_manifest(path, entries: Iterable[ManifestEntry]) -> None:
    Path(path).write_text(format_manifest(entries), encoding="utf-8")


# -- samples ------------------------------------------------------------------

def load_sample(manifest: Manifest, sample_id: str) -> SwirSample:
    entry = manifest.entry(sample_id)
    sample_dir = manifest.corpus_root / entry.path
    channels = []
    for name in CHANNEL_FILES:
        img = read_pgm(sample_dir / name)
        if img.shape != FRAME_SHAPE:
            raise BadImage(f"{sample_dir / name}: expected 64x64, got {img.shape[1]}x{img.shape[0]}")
        if img.dtype != np.uint16:
            raise BadImage(f"{sample_dir / name}: expected 16-bit samples, got 8-bit")
        channels.append(img)
    return SwirSample(sample_id, np.stack(channels), entry.label, entry.pai_species, entry.split)


def write_sample(sample_dir, sample: SwirSample) -> None:
    """Write the four channel files of ``sample`` into ``sample_dir``."""
    sample_dir = Path(sample_dir)
    sample_dir.mkdir(parents=True, exist_ok=True)
    for name, img in zip(CHANNEL_FILES, sample.channels):
        write_pgm(sample_dir / name, img)


def extract_roi(sample: SwirSample, crop: tuple[int, int] = DEFAULT_CROP) -> RoiStack:
    row, col = (int(v) for v in crop)
    h, w = ROI_SHAPE
    H, W = sample.channels.shape[1:]
    if row < 0 or col < 0 or row + h > H or col + w > W:
        raise OutOfBounds(f"crop origin ({row}, {col}) + {h}x{w} exceeds the {H}x{W} frame")
    return RoiStack(sample.channels[:, row:row + h, col:col + w], (row, col))
