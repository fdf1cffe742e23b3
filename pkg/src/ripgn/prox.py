"""Closed-form proximal mappings used by the inner solver.

All operations act componentwise (or per gradient group) and are pure;
the scalar objective behind prox_t G at a point x is

    G(u) + (1/(2t)) (u - x)^2

with G collecting the box indicator, the quadratic tether to the
current outer anchor, and the optional barrier penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .regularizers import Barrier, BoxSet

__all__ = [
    "ProxGParams",
    "prox_box_quadratic",
    "prox_barrier_box_quadratic",
    "prox_conj_quadratic_fit",
    "dual_ball_projection",
]


@dataclass(frozen=True)
class ProxGParams:
    """Step, tether weight, anchor, box, and optional barrier."""

    step: float
    weight: float
    anchor: np.ndarray
    box: BoxSet
    barrier: Barrier | None = None

    def __post_init__(self):
        if self.step <= 0:
            raise DomainError("prox step must be positive")
        if self.weight < 0:
            raise DomainError("tether weight must be nonnegative")


def prox_box_quadratic(params: ProxGParams, x) -> np.ndarray:
    """Weighted average of x and the anchor, clipped to the box."""
    if params.barrier is not None:
        raise DomainError("barrier present; use prox_barrier_box_quadratic")
    inv_t = 1.0 / params.step
    u = (inv_t * np.asarray(x) + params.weight * params.anchor) / (
        inv_t + params.weight
    )
    return params.box.project(u)


def _region(u, lo, hi):
    u = np.asarray(u)
    return np.where(u < lo, 0, np.where(u > hi, 2, 1))


def prox_barrier_box_quadratic(params: ProxGParams, x) -> np.ndarray:
    """Piecewise formula selected by the input's barrier region.

    The branch is chosen from where x sits relative to the barrier
    thresholds.  When the returned value crosses into a different
    region than its branch assumed, the printed formula is not
    self-consistent; those components fall back to evaluating all
    three per-region minimizers (each clipped to region and box) and
    keeping the one with the smallest objective.
    """
    bar = params.barrier
    if bar is None:
        raise DomainError("barrier required; use prox_box_quadratic")
    x = np.asarray(x, dtype=float)
    inv_t = 1.0 / params.step
    beta = params.weight
    z = params.anchor
    lmin2 = bar.strength_min**2
    lmax2 = bar.strength_max**2
    lo_thr, hi_thr = bar.threshold_min, bar.threshold_max

    base = inv_t * x + beta * z
    mid = base / (inv_t + beta)
    low = (lmin2 * lo_thr + base) / (lmin2 + inv_t + beta)
    if np.isfinite(hi_thr):
        high = (lmax2 * hi_thr + base) / (lmax2 + inv_t + beta)
    else:
        high = mid
    region_x = _region(x, lo_thr, hi_thr)
    primary = params.box.project(
        np.where(region_x == 0, low, np.where(region_x == 2, high, mid))
    )

    bad = _region(primary, lo_thr, hi_thr) != region_x
    if np.any(bad):
        box = params.box

        def objective(u):
            val = 0.5 * beta * (u - z) ** 2 + 0.5 * inv_t * (u - x) ** 2
            val += 0.5 * lmin2 * np.minimum(u - lo_thr, 0.0) ** 2
            val += 0.5 * lmax2 * np.maximum(u - hi_thr, 0.0) ** 2
            return val

        # per-region minimizer clipped to region-and-box; empty pieces
        # are masked out
        pieces = [
            (low, box.lower, min(lo_thr, box.upper)),
            (mid, max(lo_thr, box.lower), min(hi_thr, box.upper)),
            (high, max(hi_thr, box.lower), box.upper),
        ]
        cands, vals = [], []
        for formula, lo_b, hi_b in pieces:
            if lo_b > hi_b or not np.isfinite(lo_b):
                continue
            cand = np.clip(formula, lo_b, hi_b)
            cands.append(cand)
            vals.append(objective(cand))
        cands = np.stack(cands)
        vals = np.stack(vals)
        best = cands[np.argmin(vals, axis=0), np.arange(x.size)]
        primary = np.where(bad, best, primary)
    return primary


def prox_conj_quadratic_fit(s: float, offset, y, weight: float = 1.0) -> np.ndarray:
    """Conjugate prox of the quadratic fit (weight/2)*||y - offset||^2.

    For the default weight this is (y - s*offset) / (1 + s).
    """
    if s < 0:
        raise DomainError("dual step must be nonnegative")
    if weight <= 0:
        raise DomainError("quadratic weight must be positive")
    return (np.asarray(y) - s * np.asarray(offset)) / (1.0 + s / weight)


def dual_ball_projection(mode: str, alpha: float, y) -> np.ndarray:
    """Projection onto the dual-norm ball of radius alpha.

    mode "group": rows (i, i + n) pair into Euclidean groups, each
    radially scaled to length <= alpha (conjugate of the group (2,1)
    norm).  mode "l1": componentwise clip to [-alpha, alpha]
    (conjugate of the plain l1 norm).
    """
    if alpha < 0:
        raise DomainError("ball radius must be nonnegative")
    y = np.asarray(y, dtype=float)
    if mode == "l1":
        return np.clip(y, -alpha, alpha)
    if mode != "group":
        raise DomainError(f"unknown dual ball mode {mode!r}")
    if y.size % 2:
        raise DomainError("group mode needs an even-length vector")
    n = y.size // 2
    g1, g2 = y[:n], y[n:]
    norms = np.hypot(g1, g2)
    scale = np.where(norms > alpha, alpha / np.maximum(norms, 1e-300), 1.0)
    return np.concatenate([scale * g1, scale * g2])
