"""Weighted-sum score fusion of two PAD systems.

The fused score is ``(1 - alpha) * s1 + alpha * s2``; ``alpha`` is chosen
on a grid over [0, 1] to minimize the D-EER of the fused scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlphaOutOfRange, KeyMismatch
from .metrics import d_eer
from .scores import ScoreSet

# D-EER values closer than this are treated as tied (the smaller alpha wins)
TIE_TOL = 1e-12


@dataclass(frozen=True)
class FusionResult:
    alpha: float
    fused: ScoreSet
    val_d_eer: float
    grid: tuple = ()  # (alpha, d_eer) for every grid point


def _check_keys(s1: ScoreSet, s2: ScoreSet):
    if s1.ids() != s2.ids():
        missing = set(s1.ids()) ^ set(s2.ids())
        raise KeyMismatch(f"score sets {s1.system_id!r} and {s2.system_id!r} differ on {len(missing)} sample ids")
    if s1.labels != s2.labels:
        raise KeyMismatch(f"score sets {s1.system_id!r} and {s2.system_id!r} disagree on labels")


def fuse(s1: ScoreSet, s2: ScoreSet, alpha: float, system_id: str | None = None) -> ScoreSet:
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    _check_keys(s1, s2)
    if system_id is None:
        system_id = f"{s1.system_id}+{s2.system_id}"
    fused = {}
    for k in s1.ids():
        v = (1.0 - alpha) * s1.scores[k] + alpha * s2.scores[k]
        # convex combination; clamp one-ulp overshoot past the range ends
        fused[k] = min(max(v, 0.0), 100.0)
    return s1.with_scores(system_id, fused)


def alpha_grid(step: float) -> np.ndarray:
    if not 0.0 < step <= 0.5:
        raise ValueError(f"grid_step must lie in (0, 0.5], got {step}")
    n = int(np.floor(1.0 / step + 1e-9))
    grid = np.round(np.arange(n + 1) * step, 12)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return grid


def optimize_alpha(s1: ScoreSet, s2: ScoreSet, grid_step: float = 0.01) -> FusionResult:
    """Grid search for the fusion weight with the lowest D-EER (smallest alpha on ties)."""
    _check_keys(s1, s2)
    best = None
    evaluated = []
    for alpha in alpha_grid(grid_step):
        alpha = float(alpha)
        fused = fuse(s1, s2, alpha)
        rate, _ = d_eer(fused)
        evaluated.append((alpha, rate))
        if best is None or rate < best[1] - TIE_TOL:
            best = (alpha, rate, fused)
    alpha, rate, fused = best
    return FusionResult(alpha, fused, rate, tuple(evaluated))


def fuse_chain(sets: Sequence[ScoreSet], alphas: Sequence[float]) -> ScoreSet:
    """Fuse several systems by repeated pairwise fusion, left to right."""
    if len(alphas) != len(sets) - 1:
        raise ValueError("need one alpha per pairwise fusion step")
    out = sets[0]
    for nxt, a in zip(sets[1:], alphas):
        out = fuse(out, nxt, a)
    return out
