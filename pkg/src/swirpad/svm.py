"""Binary soft-margin SVM trained by sequential minimal optimization.

The solver works on the dual

    min_a  1/2 a^T Q a - sum(a)    s.t.  0 <= a_i <= C,  sum(y_i a_i) = 0

with ``Q_ij = y_i y_j K(x_i, x_j)``, using maximal-violating-pair working
set selection with second-order information and a dense Gram matrix.
Class +1 is non-skin / attack, class -1 is skin / bona fide, so a
positive decision value points towards an attack.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import RoiStack
from .errors import BadSchema, DimensionMismatch, EmptyInput, MissingFile, SingleClass
from .spectra import N_DIFFS, roi_differences

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
KERNELS = ("linear", "rbf")


@dataclass(frozen=True)
class Scaler:
    """Per-column min/max recorded by :func:`minmax_scale`."""

    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mins.shape[0]:
            raise DimensionMismatch(f"scaler expects {self.mins.shape[0]} columns, got {X.shape[-1]}")
        span = self.maxs - self.mins
        out = np.zeros(np.broadcast_shapes(X.shape, span.shape))
        np.divide(X - self.mins, span, out=out, where=span > 0)
        return out


def minmax_scale(features) -> tuple[np.ndarray, Scaler]:
    """Map each column to [0, 1]; constant columns map to 0."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("minmax_scale needs at least one row of a 2-D matrix")
    scaler = Scaler(X.min(axis=0), X.max(axis=0))
    return scaler.transform(X), scaler


@dataclass(frozen=True)
class SvmModel:
    kernel: str
    gamma: Optional[float]
    C: float
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    feature_dim: int
    scaler: Optional[Scaler] = None
    converged: bool = True
    n_iter: int = 0

    @property
    def n_support(self) -> int:
        return int(self.dual_coefs.shape[0])

    def scale(self, X) -> np.ndarray:
        """Apply the stored scaler (identity when the model has none)."""
        X = np.asarray(X, dtype=np.float64)
        return X if self.scaler is None else self.scaler.transform(X)


def kernel_matrix(A, B, kernel: str, gamma: Optional[float] = None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def dual_objective(alpha, y, K) -> float:
    """Dual objective ``sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`` (to maximize)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def _solve_dual(K, y, C, tol, max_iter):
    """SMO on a precomputed Gram matrix. Returns (alpha, bias, converged, n_iter)."""
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a^T Q a - e^T a
    diag = np.diag(K).copy()
    converged = False
    it = 0
    pos = y > 0
    while it < max_iter:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = (pos & ~at_upper) | (~pos & ~at_lower)
        low = (pos & ~at_lower) | (~pos & ~at_upper)
        minus_yg = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, minus_yg, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        g_min = np.min(np.where(low, minus_yg, np.inf))
        if g_max - g_min < tol:
            converged = True
            break
        Ki = K[i]
        b = g_max - minus_yg
        a = diag[i] + diag - 2.0 * Ki
        a = np.where(a > 0, a, 1e-12)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        # move alpha_i by y_i t and alpha_j by -y_j t, t >= 0
        t = b[j] / a[j]
        t = min(t, C - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else C - alpha[j])
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = min(max(old_i + y[i] * t, 0.0), C)
        alpha[j] = min(max(old_j - y[j] * t, 0.0), C)
        grad += y * (y[i] * (alpha[i] - old_i) * Ki + y[j] * (alpha[j] - old_j) * K[j])
        it += 1

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_upper = alpha >= C
        ub_mask = (pos & ~at_upper) | (~pos & at_upper)
        lb_mask = (pos & at_upper) | (~pos & ~at_upper)
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return alpha, -rho, converged, it


def train_smo(
    features,
    labels,
    kernel: str = "rbf",
    C: float = 1.0,
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    max_passes: int = 200,
    seed: int = 0,
    scaler: Optional[Scaler] = None,
) -> SvmModel:
    """Train a binary SVM on ``features`` with labels in {-1, +1}.

    ``gamma`` defaults to ``1 / feature_dim`` for the rbf kernel. Training
    stops once the maximal KKT violation drops below ``tol`` or after
    ``max_passes * n`` pair updates; in the latter case the returned model
    has ``converged=False``. ``seed`` fixes the order in which examples are
    presented, which only decides ties in working-set selection.

    ``scaler`` is stored on the model as-is; pass the one returned by
    :func:`minmax_scale` when ``features`` were scaled with it.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise DimensionMismatch(f"features must be a 2-D matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise EmptyInput("no training examples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise SingleClass("training labels contain a single class")
    if scaler is not None and scaler.mins.shape[0] != X.shape[1]:
        raise DimensionMismatch("scaler width differs from feature_dim")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if C <= 0:
        raise ValueError("C must be positive")
    dim = X.shape[1]
    if kernel == "rbf":
        gamma = 1.0 / dim if gamma is None else float(gamma)
        if gamma <= 0:
            raise ValueError("gamma must be positive")
    else:
        gamma = None

    order = np.random.default_rng(seed).permutation(X.shape[0])
    X, y = X[order], y[order]
    K = kernel_matrix(X, X, kernel, gamma)
    max_iter = max(1, int(max_passes)) * X.shape[0]
    alpha, bias, converged, n_iter = _solve_dual(K, y, float(C), float(tol), max_iter)
    if not converged:
        log.warning("SMO stopped after %d iterations without meeting tol=%g", n_iter, tol)

    sv = alpha > 0
    if not sv.any():
        # degenerate: keep one zero-weight vector so the model stays well-formed
        sv[0] = True
    return SvmModel(
        kernel=kernel,
        gamma=gamma,
        C=float(C),
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * y)[sv].copy(),
        bias=float(bias),
        feature_dim=dim,
        scaler=scaler,
        converged=converged,
        n_iter=n_iter,
    )


def decision_values(model: SvmModel, X, chunk: int = 4096) -> np.ndarray:
    """Decision values for the rows of ``X`` (already scaled, like training data)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.feature_dim:
        raise DimensionMismatch(f"model expects {model.feature_dim} features, got {X.shape[1]}")
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        K = kernel_matrix(X[start:start + chunk], model.support_vectors, model.kernel, model.gamma)
        out[start:start + chunk] = K @ model.dual_coefs + model.bias
    return out


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a single feature vector, got shape {x.shape}")
    return float(decision_values(model, x[None, :])[0])


def predict(model: SvmModel, X) -> np.ndarray:
    """+1 / -1 predictions; a zero decision value counts as -1 (skin)."""
    return np.where(decision_values(model, X) > 0, 1, -1)


# -- spectral-signature PAD ---------------------------------------------------

def score_spectral_signature(model: SvmModel, roi: RoiStack) -> float:
    """Percentage of ROI pixels the SVM labels non-skin, in [0, 100]."""
    if model.feature_dim != N_DIFFS:
        raise DimensionMismatch(f"spectral-signature model must take {N_DIFFS} features, has {model.feature_dim}")
    dv = decision_values(model, model.scale(roi_differences(roi)))
    return 100.0 * np.count_nonzero(dv > 0) / dv.shape[0]


def pixel_training_set(rois_skin, rois_nonskin, per_class: int = 2000, seed: int = 0):
    """Uniformly subsample up to ``per_class`` pixel difference vectors per class.

    Every pixel of a bona fide ROI is labelled skin (-1) and every pixel of
    an attack ROI non-skin (+1). Returns ``(X, y)``.
    """
    rng = np.random.default_rng(seed)
    parts_X, parts_y = [], []
    for rois, label in ((rois_skin, -1.0), (rois_nonskin, 1.0)):
        mats = [roi_differences(r) for r in rois]
        if not mats:
            raise SingleClass("pixel training needs ROIs of both classes")
        pool = np.concatenate(mats)
        if pool.shape[0] > per_class:
            idx = np.sort(rng.choice(pool.shape[0], size=per_class, replace=False))
            pool = pool[idx]
        parts_X.append(pool)
        parts_y.append(np.full(pool.shape[0], label))
    return np.concatenate(parts_X), np.concatenate(parts_y)


# -- persistence --------------------------------------------------------------

def _f(v: float) -> str:
    return repr(float(v))


def format_model(model: SvmModel) -> str:
    lines = [
        f"format_version {FORMAT_VERSION}",
        f"kernel {model.kernel}",
        f"gamma {_f(model.gamma) if model.gamma is not None else 'none'}",
        f"C {_f(model.C)}",
        f"bias {_f(model.bias)}",
        f"feature_dim {model.feature_dim}",
        f"converged {int(model.converged)}",
        f"scaler {'none' if model.scaler is None else model.feature_dim}",
    ]
    if model.scaler is not None:
        for lo, hi in zip(model.scaler.mins, model.scaler.maxs):
            lines.append(f"{_f(lo)} {_f(hi)}")
    lines.append(f"support_vectors {model.n_support}")
    for coef, sv in zip(model.dual_coefs, model.support_vectors):
        lines.append(" ".join([_f(coef)] + [_f(v) for v in sv]))
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> SvmModel:
    lines = text.splitlines()
    pos = 0

    def field(name):
        nonlocal pos
        if pos >= len(lines):
            raise BadSchema(f"SVM model truncated before '{name}'")
        key, _, value = lines[pos].partition(" ")
        if key != name:
            raise BadSchema(f"SVM model: expected '{name}' on line {pos + 1}, got '{key}'")
        pos += 1
        return value.strip()

    try:
        version = int(field("format_version"))
        if version != FORMAT_VERSION:
            raise BadSchema(f"unsupported SVM model format_version {version}")
        kernel = field("kernel")
        if kernel not in KERNELS:
            raise BadSchema(f"unknown kernel {kernel!r}")
        g = field("gamma")
        gamma = None if g == "none" else float(g)
        C = float(field("C"))
        bias = float(field("bias"))
        dim = int(field("feature_dim"))
        converged = bool(int(field("converged")))
        s = field("scaler")
        scaler = None
        if s != "none":
            rows = np.array([[float(v) for v in lines[pos + k].split()] for k in range(int(s))])
            pos += int(s)
            scaler = Scaler(rows[:, 0].copy(), rows[:, 1].copy())
        n_sv = int(field("support_vectors"))
        body = np.array([[float(v) for v in lines[pos + k].split()] for k in range(n_sv)])
    except (ValueError, IndexError) as exc:
        raise BadSchema(f"malformed SVM model: {exc}") from None
    if body.shape != (n_sv, dim + 1):
        raise BadSchema(f"SVM model body has shape {body.shape}, expected ({n_sv}, {dim + 1})")
    return SvmModel(kernel, gamma, C, body[:, 1:].copy(), body[:, 0].copy(), bias, dim, scaler, converged)


def save_model(model: SvmModel, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def load_model(path) -> SvmModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"SVM model not found: {path}") from None
    return parse_model(text)
