"""Adam training with binary cross-entropy and early stopping; gradient check."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import EmptySet, SingleClass
from .layers import BatchNorm2d
from .net import ResidualNet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    early_stop_patience: int = 20
    seed: int = 0
    hflip: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    p = 1.0 / (1.0 + np.exp(-z))
    return float(loss), (p - y) / z.shape[0]


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for _, p in params]
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.value -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.value.dtype)


def mean_loss(net: ResidualNet, X, y, batch_size: int = 64) -> float:
    """BCE over a whole set in the net's current mode, without touching gradients."""
    total = 0.0
    for start in range(0, X.shape[0], batch_size):
        xb, yb = X[start:start + batch_size], y[start:start + batch_size]
        loss, _ = bce_with_logits(net.logits(xb), yb)
        total += loss * xb.shape[0]
    return total / X.shape[0]


def _check_set(name, X, y, need_both=True):
    if X is None or len(X) == 0:
        raise EmptySet(f"{name} set is empty")
    if len(X) != len(y):
        raise ValueError(f"{name} set: {len(X)} inputs but {len(y)} targets")
    if need_both and (np.all(y == y[0])):
        raise SingleClass(f"{name} set has a single class")


def train(net: ResidualNet, train_set, val_set, config: TrainConfig = TrainConfig()):
    """Fit ``net`` on ``(X, y)`` pairs; targets are 0 (bona fide) and 1 (attack).

    Each epoch shuffles the training set with a seeded generator and takes
    one Adam step per mini-batch. Validation loss is computed in eval mode
    after every epoch; training stops once it has not improved for
    ``early_stop_patience`` epochs and the best weights are restored.

    Returns ``(net, history)`` where ``history`` is a list of
    ``{"epoch", "train_loss", "val_loss"}`` dicts.
    """
    X, y = np.asarray(train_set[0]), np.asarray(train_set[1], dtype=np.float64)
    Xv, yv = np.asarray(val_set[0]), np.asarray(val_set[1], dtype=np.float64)
    _check_set("training", X, y)
    _check_set("validation", Xv, yv, need_both=False)
    rng = np.random.default_rng(config.seed)
    opt = Adam(net.params(), config.learning_rate, config.beta1, config.beta2, config.eps)
    history = []
    best_loss, best_state, since_best = np.inf, net.state(), 0
    for epoch in range(1, config.max_epochs + 1):
        net.train()
        order = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            if config.hflip:
                flip = rng.random(idx.size) < 0.5
                xb = np.where(flip[:, None, None, None], xb[..., ::-1], xb)
            net.zero_grad()
            loss, dlogits = bce_with_logits(net.logits(xb), y[idx])
            net.backward(dlogits)
            opt.step()
            total += loss * idx.size
        net.eval()
        train_loss = total / X.shape[0]
        val_loss = mean_loss(net, Xv, yv)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d train_loss %.5f val_loss %.5f", epoch, train_loss, val_loss)
        if val_loss < best_loss:
            best_loss, best_state, since_best = val_loss, net.state(), 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break
    net.load_state(best_state)
    net.eval()
    return net, history


def gradient_check(net: ResidualNet, batch, labels, epsilon: float = 1e-5, n_params: int = 50, seed: int = 0,
                   floor: float = 1e-6) -> float:
    """Max relative error between backprop and central finite differences.

    Checks ``n_params`` parameter entries sampled with ``seed`` (plus the
    dense bias), in training mode, without updating BN running statistics.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``. Entries whose
    +/-epsilon perturbation flips any ReLU are skipped: the loss is not
    differentiable across the kink, so the finite difference is no oracle
    there. Use a float64 network for meaningful results.
    """
    X = np.asarray(batch)
    y = np.asarray(labels, dtype=np.float64)
    bn_layers = _bn_layers(net)
    saved = [l.track_stats for l in bn_layers]
    for l in bn_layers:
        l.track_stats = False
    mode = net.train_mode
    net.train()
    relus = _relu_layers(net)

    def loss_and_masks():
        loss, _ = bce_with_logits(net.logits(X), y)
        return loss, [r._mask.copy() for r in relus]

    try:
        net.zero_grad()
        _, dlogits = bce_with_logits(net.logits(X), y)
        base_masks = [r._mask.copy() for r in relus]
        net.backward(dlogits)
        params = net.params()
        rng = np.random.default_rng(seed)
        sizes = np.array([p.size for _, p in params])
        flat = rng.choice(int(sizes.sum()), size=min(n_params, int(sizes.sum())), replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        picks = []
        for f in sorted(flat.tolist()):
            k = int(np.searchsorted(offsets, f, side="right") - 1)
            picks.append((k, f - offsets[k]))
        picks.append((len(params) - 1, 0))  # dense bias
        worst, skipped = 0.0, 0
        for k, i in picks:
            p = params[k][1]
            v = p.value.reshape(-1)
            old = v[i]
            v[i] = old + epsilon
            lp, mp = loss_and_masks()
            v[i] = old - epsilon
            lm, mm = loss_and_masks()
            v[i] = old
            if any((a != b).any() or (a != c).any() for a, b, c in zip(base_masks, mp, mm)):
                skipped += 1
                continue
            numeric = (lp - lm) / (2 * epsilon)
            analytic = float(p.grad.reshape(-1)[i])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
        if skipped:
            log.info("gradient check skipped %d of %d entries at ReLU kinks", skipped, len(picks))
        return worst
    finally:
        for l, s in zip(bn_layers, saved):
            l.track_stats = s
        net.train(mode)


def _relu_layers(net):
    out = [net.stem_relu]
    for b in net.blocks:
        out += [b.relu1, b.relu_out]
    return out


def _bn_layers(net) -> list[BatchNorm2d]:
    out = [net.stem_bn]
    for b in net.blocks:
        out += [b.bn1, b.bn2] + ([b.short_bn] if b.projection else [])
    return out
