"""Deterministic synthetic SWIR corpus.

Each sample is a 64x64 four-band frame: a dark sensor housing with the
18x58 finger slot filled by one material. A material is described by its
mean remission per band; pixels add a per-finger offset, a box-filtered
texture field and white noise on top of it. Every sample draws from its own
generator keyed by ``(seed, sample_id)``, so corpus content depends only on
the configuration.

The default material table is invented. It encodes the one qualitative
fact the pipeline relies on: skin remission drops sharply at 1450 nm
(water absorption) while most artefact materials stay flat or rise there.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    DEFAULT_CROP,
    FRAME_SHAPE,
    MAXVAL,
    ROI_SHAPE,
    SPLITS,
    Manifest,
    ManifestEntry,
    SwirSample,
    load_manifest,
    write_manifest,
    write_sample,
)
from .errors import BadConfig, IoError, MissingFile
from .spectra import normalized_differences

HOUSING_LEVEL = 0.03
HOUSING_NOISE_SD = 0.004


@dataclass(frozen=True)
class MaterialModel:
    name: str
    kind: str  # "skin" or "pai"
    mean_remission: tuple
    pixel_noise_sd: float = 0.02
    spatial_texture_scale: float = 5.0
    subject_variation_sd: float = 0.01

    def __post_init__(self):
        if self.kind not in ("skin", "pai"):
            raise BadConfig(f"material {self.name}: kind must be 'skin' or 'pai', got {self.kind!r}")
        m = tuple(float(v) for v in self.mean_remission)
        if len(m) != 4 or not all(0.0 <= v <= 1.0 for v in m):
            raise BadConfig(f"material {self.name}: need four mean remissions in [0, 1], got {m}")
        if min(self.pixel_noise_sd, self.subject_variation_sd, self.spatial_texture_scale) < 0:
            raise BadConfig(f"material {self.name}: noise parameters must be non-negative")
        object.__setattr__(self, "mean_remission", m)


DEFAULT_MATERIALS = (
    MaterialModel("skin", "skin", (0.45, 0.40, 0.12, 0.25), 0.02, 5.0, 0.012),
    # confuser: close to skin except for a brighter 1200 nm band
    MaterialModel("playdoh_like", "pai", (0.48, 0.38, 0.13, 0.26), 0.02, 5.0, 0.012),
    MaterialModel("latex_like", "pai", (0.50, 0.50, 0.48, 0.50), 0.02, 5.0, 0.015),
    MaterialModel("glue_overlay_like", "pai", (0.30, 0.34, 0.45, 0.40), 0.02, 5.0, 0.015),
    MaterialModel("silicone_like", "pai", (0.58, 0.55, 0.40, 0.50), 0.02, 5.0, 0.015),
    MaterialModel("dragonskin_like", "pai", (0.52, 0.46, 0.30, 0.40), 0.02, 5.0, 0.015),
    MaterialModel("wax_like", "pai", (0.62, 0.60, 0.52, 0.55), 0.02, 5.0, 0.015),
    MaterialModel("printout_like", "pai", (0.70, 0.68, 0.64, 0.66), 0.02, 5.0, 0.015),
    MaterialModel("gelatin_like", "pai", (0.40, 0.36, 0.22, 0.30), 0.02, 5.0, 0.015),
)
DEFAULT_HOLDOUT = ("silicone_like", "dragonskin_like", "wax_like", "printout_like", "gelatin_like")


@dataclass(frozen=True)
class SynthConfig:
    """Corpus size per split and class, material roster, unknown-attack holdout.

    ``test_attack`` counts test attacks made of known materials; each
    holdout material additionally contributes ``test_unknown_per_material``
    test attacks.
    """

    seed: int = 0
    train_bona_fide: int = 130
    train_attack: int = 130
    validation_bona_fide: int = 90
    validation_attack: int = 90
    test_bona_fide: int = 300
    test_attack: int = 90
    test_unknown_per_material: int = 6
    materials: tuple = DEFAULT_MATERIALS
    holdout: tuple = DEFAULT_HOLDOUT

    def __post_init__(self):
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            raise BadConfig("material names must be unique")
        by_name = {m.name: m for m in self.materials}
        for h in self.holdout:
            if h not in by_name:
                raise BadConfig(f"holdout material {h!r} is not in the roster")
            if by_name[h].kind != "pai":
                raise BadConfig(f"holdout material {h!r} is not a PAI material")
        for key in ("train_bona_fide", "train_attack", "validation_bona_fide", "validation_attack",
                    "test_bona_fide", "test_attack", "test_unknown_per_material"):
            if getattr(self, key) < 0:
                raise BadConfig(f"{key} must be >= 0")
        if not self.skin_materials and (self.train_bona_fide or self.validation_bona_fide or self.test_bona_fide):
            raise BadConfig("roster has no skin material")
        if not self.known_pai and (self.train_attack or self.validation_attack or self.test_attack):
            raise BadConfig("roster has no non-holdout PAI material")

    @property
    def skin_materials(self) -> list[MaterialModel]:
        return [m for m in self.materials if m.kind == "skin"]

    @property
    def known_pai(self) -> list[MaterialModel]:
        return [m for m in self.materials if m.kind == "pai" and m.name not in self.holdout]

    @property
    def holdout_pai(self) -> list[MaterialModel]:
        return [m for m in self.materials if m.name in self.holdout]

    def material(self, name: str) -> MaterialModel:
        for m in self.materials:
            if m.name == name:
                return m
        raise BadConfig(f"unknown material {name!r}")


# -- config file --------------------------------------------------------------

_INT_KEYS = ("seed", "train_bona_fide", "train_attack", "validation_bona_fide", "validation_attack",
             "test_bona_fide", "test_attack", "test_unknown_per_material")


def parse_config(text: str) -> SynthConfig:
    """Parse the ``key = value`` config format.

    Recognized keys: the integer fields of :class:`SynthConfig`,
    ``holdout`` (comma-separated names, may be empty), ``drop_materials``
    (comma-separated) and ``material.<name>`` with value
    ``kind, r1200, r1300, r1450, r1550, pixel_noise_sd, texture_scale, subject_sd``
    which adds or replaces a roster entry. Blank lines and ``#`` comments
    are ignored.
    """
    values: dict = {}
    roster = {m.name: m for m in DEFAULT_MATERIALS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise BadConfig(f"config line {lineno}: expected 'key = value'")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key == "holdout":
                values["holdout"] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "drop_materials":
                for name in (v.strip() for v in value.split(",") if v.strip()):
                    roster.pop(name, None)
            elif key.startswith("material."):
                name = key[len("material."):]
                parts = [v.strip() for v in value.split(",")]
                if len(parts) != 8:
                    raise BadConfig(f"config line {lineno}: material needs 8 comma-separated fields")
                nums = [float(v) for v in parts[1:]]
                roster[name] = MaterialModel(name, parts[0], tuple(nums[:4]), nums[4], nums[5], nums[6])
            else:
                raise BadConfig(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, BadConfig):
                raise
            raise BadConfig(f"config line {lineno}: {exc}") from None
    values.setdefault("holdout", tuple(h for h in DEFAULT_HOLDOUT if h in roster))
    return SynthConfig(materials=tuple(roster.values()), **values)


def load_config(path) -> SynthConfig:
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFile(f"synth config not found: {path}") from None


def format_config(config: SynthConfig) -> str:
    lines = [f"{k} = {getattr(config, k)}" for k in _INT_KEYS]
    lines.append(f"holdout = {','.join(config.holdout)}")
    for m in config.materials:
        vals = ", ".join(repr(v) for v in m.mean_remission)
        lines.append(
            f"material.{m.name} = {m.kind}, {vals}, {m.pixel_noise_sd!r}, "
            f"{m.spatial_texture_scale!r}, {m.subject_variation_sd!r}"
        )
    return "\n".join(lines) + "\n"


# -- generation -----------------------------------------------------------------

def sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(sample_id.encode("utf-8"))])


def material_signature(model: MaterialModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one pixel's four-band signature, clamped to [0, 1].

    Marginally a pixel is mean + per-finger offset + texture + white noise;
    texture and white noise each carry half of ``pixel_noise_sd**2``.
    """
    mean = np.asarray(model.mean_remission)
    offset = rng.standard_normal(4) * model.subject_variation_sd
    noise = rng.standard_normal(4) * model.pixel_noise_sd
    return np.clip(mean + offset + noise, 0.0, 1.0)


def _box_smooth(field: np.ndarray, size: int) -> np.ndarray:
    """Unit-variance box-filtered version of an i.i.d. N(0, 1) field."""
    if size <= 1:
        return field
    lo = (size - 1) // 2
    padded = np.pad(field, ((0, 0), (lo, size - 1 - lo), (lo, size - 1 - lo)), mode="wrap")
    c = padded.cumsum(axis=1).cumsum(axis=2)
    c = np.pad(c, ((0, 0), (1, 0), (1, 0)))
    H, W = field.shape[1:]
    s = c[:, size:size + H, size:size + W] - c[:, :H, size:size + W] - c[:, size:size + H, :W] + c[:, :H, :W]
    return s / size  # mean of size**2 unit normals has sd 1/size


def material_patch(model: MaterialModel, rng: np.random.Generator, shape=ROI_SHAPE) -> np.ndarray:
    """(4, H, W) remission patch of one finger/artefact."""
    mean = np.asarray(model.mean_remission)[:, None, None]
    offset = rng.standard_normal(4)[:, None, None] * model.subject_variation_sd
    size = int(round(model.spatial_texture_scale))
    texture = _box_smooth(rng.standard_normal((4, *shape)), size)
    white = rng.standard_normal((4, *shape))
    sd = model.pixel_noise_sd / np.sqrt(2.0)
    return np.clip(mean + offset + sd * texture + sd * white, 0.0, 1.0)


def render_frame(model: MaterialModel, rng: np.random.Generator, slot=DEFAULT_CROP) -> np.ndarray:
    """Full (4, 64, 64) uint16 frame: housing background plus the material in the slot."""
    frame = HOUSING_LEVEL + HOUSING_NOISE_SD * rng.standard_normal((4, *FRAME_SHAPE))
    r, c = slot
    h, w = ROI_SHAPE
    frame[:, r:r + h, c:c + w] = material_patch(model, rng)
    return np.round(np.clip(frame, 0.0, 1.0) * MAXVAL).astype(np.uint16)


@dataclass(frozen=True)
class _Plan:
    sample_id: str
    split: str
    material: MaterialModel


def plan_corpus(config: SynthConfig) -> list[_Plan]:
    plans = []
    for split in SPLITS:
        n_bf = getattr(config, f"{split}_bona_fide")
        n_pa = getattr(config, f"{split}_attack")
        skins, known = config.skin_materials, config.known_pai
        for k in range(n_bf):
            plans.append(_Plan(f"{split}_bf_{k:04d}", split, skins[k % len(skins)]))
        for k in range(n_pa):
            plans.append(_Plan(f"{split}_pa_{k:04d}", split, known[k % len(known)]))
    k = config.test_attack
    for m in config.holdout_pai:
        for _ in range(config.test_unknown_per_material):
            plans.append(_Plan(f"test_pa_{k:04d}", "test", m))
            k += 1
    return plans


def synth_sample(config: SynthConfig, plan: _Plan) -> SwirSample:
    rng = sample_rng(config.seed, plan.sample_id)
    frame = render_frame(plan.material, rng)
    attack = plan.material.kind == "pai"
    return SwirSample(
        plan.sample_id,
        frame,
        "attack" if attack else "bona_fide",
        plan.material.name if attack else None,
        plan.split,
    )


def generate_dataset(config: SynthConfig, out_dir) -> Manifest:
    """Write the corpus (PGM channel files + ``manifest.csv``) and return its manifest."""
    out_dir = Path(out_dir)
    entries = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for plan in plan_corpus(config):
            sample = synth_sample(config, plan)
            write_sample(out_dir / plan.sample_id, sample)
            entries.append(ManifestEntry(plan.sample_id, plan.sample_id, sample.label, sample.pai_species, plan.split))
        write_manifest(out_dir / "manifest.csv", entries)
    except OSError as exc:
        raise IoError(f"cannot write corpus to {out_dir}: {exc}") from None
    return load_manifest(out_dir / "manifest.csv")


def mean_diff_vector(model: MaterialModel) -> np.ndarray:
    """Normalized difference vector of the material's mean remission."""
    return normalized_differences(np.asarray(model.mean_remission))
