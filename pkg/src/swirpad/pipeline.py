"""Corpus-level glue: ROI loading, CNN inputs, training and scoring per system."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import svm as svm_mod
from .cnn import INPUT_SHAPE, TrainConfig, build_reference_net, extract_features, forward, train
from .cnn.net import ResidualNet
from .data import DEFAULT_CROP, Manifest, RoiStack, extract_roi, load_sample
from .errors import EmptySet
from .scores import ScoreSet
from .spectra import compose_rgb

log = logging.getLogger(__name__)

SYSTEMS = ("ss", "res")


def derive_seed(seed: int, component: str) -> int:
    """Stable per-component seed: first 4 bytes of sha256("<seed>:<component>")."""
    digest = hashlib.sha256(f"{int(seed)}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class SplitData:
    ids: list
    rois: list
    labels: list
    species: list

    @property
    def targets(self) -> np.ndarray:
        """0 for bona fide, 1 for attack."""
        return np.array([1.0 if lab == "attack" else 0.0 for lab in self.labels])

    def score_set(self, system_id: str, scores) -> ScoreSet:
        return ScoreSet(
            system_id,
            dict(zip(self.ids, (float(s) for s in scores))),
            dict(zip(self.ids, self.labels)),
            dict(zip(self.ids, self.species)),
        )


def load_split(manifest: Manifest, split: str, crop=DEFAULT_CROP) -> SplitData:
    ids = manifest.ids(split=split)
    if not ids:
        raise EmptySet(f"manifest has no {split} samples")
    rois, labels, species = [], [], []
    for sid in ids:
        sample = load_sample(manifest, sid)
        rois.append(extract_roi(sample, crop))
        labels.append(sample.label)
        species.append(sample.pai_species)
    return SplitData(ids, rois, labels, species)


def cnn_input(roi: RoiStack) -> np.ndarray:
    """Zero-pad the (H, W, 3) composite of ``roi`` to the net's 3x24x64 input."""
    rgb = np.moveaxis(compose_rgb(roi), -1, 0)
    _, H, W = INPUT_SHAPE
    h, w = rgb.shape[1:]
    top, left = (H - h) // 2, (W - w) // 2
    out = np.zeros(INPUT_SHAPE, dtype=np.float32)
    out[:, top:top + h, left:left + w] = rgb
    return out


def cnn_inputs(rois) -> np.ndarray:
    return np.stack([cnn_input(r) for r in rois])


# -- spectral signatures + SVM ------------------------------------------------

def train_spectral_svm(train: SplitData, kernel="rbf", C=1.0, gamma=None, tol=1e-3, max_passes=200,
                       per_class=2000, seed=0) -> svm_mod.SvmModel:
    skin = [r for r, lab in zip(train.rois, train.labels) if lab == "bona_fide"]
    nonskin = [r for r, lab in zip(train.rois, train.labels) if lab == "attack"]
    X, y = svm_mod.pixel_training_set(skin, nonskin, per_class, derive_seed(seed, "svm-pixels"))
    log.info("training pixel SVM on %d pixels", X.shape[0])
    return svm_mod.train_smo(X, y, kernel, C, gamma, tol, max_passes, derive_seed(seed, "svm-smo"))


def score_spectral(model: svm_mod.SvmModel, data: SplitData, system_id="ss") -> ScoreSet:
    return data.score_set(system_id, [svm_mod.score_spectral_signature(model, r) for r in data.rois])


# -- residual CNN -------------------------------------------------------------

def train_cnn(train_data: SplitData, val_data: SplitData, config: TrainConfig, seed=0):
    """Train the reference net; init and shuffling seeds both derive from ``seed``."""
    net = build_reference_net(derive_seed(seed, "cnn-init"))
    config = dataclasses.replace(config, seed=derive_seed(seed, "cnn-shuffle"))
    return train(net, (cnn_inputs(train_data.rois), train_data.targets),
                 (cnn_inputs(val_data.rois), val_data.targets), config)


def cnn_scores(net: ResidualNet, data: SplitData, batch_size=64) -> np.ndarray:
    net.eval()
    X = cnn_inputs(data.rois)
    return np.concatenate([forward(net, X[k:k + batch_size]) for k in range(0, X.shape[0], batch_size)])


def score_cnn(net: ResidualNet, data: SplitData, system_id="res") -> ScoreSet:
    return data.score_set(system_id, cnn_scores(net, data))


def cnn_features(net: ResidualNet, data: SplitData, batch_size=64) -> np.ndarray:
    net.eval()
    X = cnn_inputs(data.rois)
    return np.concatenate([extract_features(net, X[k:k + batch_size]) for k in range(0, X.shape[0], batch_size)])


def train_feature_svm(net: ResidualNet, train_data: SplitData, kernel="rbf", C=1.0, gamma=None, tol=1e-3,
                      max_passes=200, seed=0) -> svm_mod.SvmModel:
    """SVM on min-max scaled CNN features; attacks are the +1 class."""
    scaled, scaler = svm_mod.minmax_scale(cnn_features(net, train_data))
    y = np.where(train_data.targets > 0, 1.0, -1.0)
    return svm_mod.train_smo(scaled, y, kernel, C, gamma, tol, max_passes, derive_seed(seed, "feature-svm"),
                             scaler=scaler)


def feature_svm_decisions(model: svm_mod.SvmModel, net: ResidualNet, data: SplitData) -> np.ndarray:
    """Binary decisions (1 = attack) of the feature SVM."""
    return (svm_mod.predict(model, model.scale(cnn_features(net, data))) > 0).astype(int)
