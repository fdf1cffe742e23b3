"""Regularization schemes wired for the two-block inner solver.

Each scheme packages: the regularizer value entering the outer
objective, the prox of the componentwise block G (box + quadratic
tether + optional barriers), the second operator block K2 with the
conjugate prox of its outer function F2, and (for the differentiable
schemes) gradients and Hessians for the damped Newton baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .pdps import LinearBlock
from .prox import (
    ProxGParams,
    dual_ball_projection,
    prox_barrier_box_quadratic,
    prox_box_quadratic,
    prox_conj_quadratic_fit,
)
from .regularizers import (
    Barrier,
    BoxSet,
    SmoothnessPrior,
    TvOperator,
    smoothed_tv,
    tv_value,
)

__all__ = [
    "SmoothScheme",
    "TvScheme",
    "SmoothedTvScheme",
    "SmoothedTvBlock",
    "SCHEME_NAMES",
]

SCHEME_NAMES = ("smooth", "tv", "smoothed_tv")


class SmoothedTvBlock:
    """Nonlinear per-element map x -> sqrt(|grad x|^2 + gamma).

    Each Jacobian row is a contraction of the corresponding stacked
    gradient rows (the scaling |g|/f never exceeds one), so the plain
    gradient operator norm bounds the Jacobian norm at every point.
    """

    is_linear = False

    def __init__(self, tv_op: TvOperator, gamma: float):
        if gamma <= 0:
            raise DomainError("smoothing parameter must be positive")
        self.tv_op = tv_op
        self.gamma = gamma

    @property
    def shape(self):
        return (self.tv_op.n_elements, self.tv_op.n_nodes)

    def value(self, x):
        g1, g2 = self.tv_op.gradients(x)
        return np.sqrt(g1 * g1 + g2 * g2 + self.gamma)

    def jacobian(self, x):
        _, _, jac = smoothed_tv(self.tv_op, x, self.gamma)
        return LinearBlock(jac)

    def norm_bound_operator(self):
        """Operator whose norm bounds the Jacobian norm globally."""
        return self.tv_op.stacked


@dataclass
class SmoothScheme:
    """Gaussian-kernel smoothness penalty plus a lower barrier.

    Outer regularizer: ||R (sigma - mean)||^2 + B_min(sigma).  The
    quadratic enters the splitting through K2 = R; the barrier is
    diagonal and lives in G.
    """

    prior: SmoothnessPrior
    barrier: Barrier
    box: BoxSet

    name = "smooth"
    nonlinear_inner = False
    newton_supported = True

    def reg_value(self, sigma) -> float:
        return self.prior.value(sigma) + self.barrier.total(sigma)

    def g_barrier(self):
        return self.barrier

    def k2_block(self, z=None):
        return LinearBlock(self.prior.factor)

    def f2_conj_prox(self):
        c = self.prior.mean_image
        # F2(y) = ||y - R mean||^2 has quadratic weight 2
        return lambda y, s: prox_conj_quadratic_fit(s, c, y, weight=2.0)

    def f2_value(self):
        c = self.prior.mean_image
        return lambda y: float((y - c) @ (y - c))

    def reg_gradient(self, sigma) -> np.ndarray:
        return self.prior.gradient(sigma) + self.barrier.gradient(sigma)

    def reg_hessian(self, sigma) -> np.ndarray:
        h = self.prior.hessian().copy()
        h[np.diag_indices_from(h)] += self.barrier.hessian_diag(sigma)
        return h


@dataclass
class TvScheme:
    """Isotropic total variation with a box constraint only."""

    tv_op: TvOperator
    alpha: float
    box: BoxSet

    name = "tv"
    nonlinear_inner = False
    newton_supported = False

    def reg_value(self, sigma) -> float:
        return self.alpha * tv_value(self.tv_op, sigma)

    def g_barrier(self):
        return None

    def k2_block(self, z=None):
        return LinearBlock(self.tv_op.stacked)

    def f2_conj_prox(self):
        return lambda y, s: dual_ball_projection("group", self.alpha, y)

    def f2_value(self):
        n = self.tv_op.n_elements

        def value(y):
            return self.alpha * float(np.sum(np.hypot(y[:n], y[n:])))

        return value


@dataclass
class SmoothedTvScheme:
    """Smoothed total variation with lower and upper barriers.

    The per-element map is nonlinear, so subproblems run through the
    nonlinear splitting variant; the objective stays differentiable,
    which also enables the Newton baseline.
    """

    tv_op: TvOperator
    alpha: float
    gamma: float
    barrier: Barrier
    box: BoxSet

    name = "smoothed_tv"
    nonlinear_inner = True
    newton_supported = True

    def reg_value(self, sigma) -> float:
        value, _, _ = smoothed_tv(self.tv_op, sigma, self.gamma)
        return self.alpha * value + self.barrier.total(sigma)

    def g_barrier(self):
        return self.barrier

    def k2_block(self, z=None):
        return SmoothedTvBlock(self.tv_op, self.gamma)

    def f2_conj_prox(self):
        return lambda y, s: dual_ball_projection("l1", self.alpha, y)

    def f2_value(self):
        return lambda y: self.alpha * float(np.sum(np.abs(y)))

    def reg_gradient(self, sigma) -> np.ndarray:
        _, f, jac = smoothed_tv(self.tv_op, sigma, self.gamma)
        return self.alpha * np.asarray(jac.sum(axis=0)).ravel() + (
            self.barrier.gradient(sigma)
        )

    def reg_hessian(self, sigma) -> np.ndarray:
        g1, g2 = self.tv_op.gradients(sigma)
        f = np.sqrt(g1 * g1 + g2 * g2 + self.gamma)
        r1, r2 = self.tv_op.r1, self.tv_op.r2
        inv = sp.diags(1.0 / f)
        h = (r1.T @ inv @ r1 + r2.T @ inv @ r2).toarray()
        gr = sp.diags(g1 / f**1.5) @ r1 + sp.diags(g2 / f**1.5) @ r2
        h -= (gr.T @ gr).toarray()
        h *= self.alpha
        h[np.diag_indices_from(h)] += self.barrier.hessian_diag(sigma)
        return h


def g_prox_factory(scheme, anchor: np.ndarray, weight: float):
    """Prox handle (v, t) -> argmin of the scheme's componentwise block."""
    barrier = scheme.g_barrier()
    if barrier is not None and (barrier.strength_min > 0 or barrier.strength_max > 0):
        def handle(v, t):
            params = ProxGParams(
                step=t, weight=weight, anchor=anchor, box=scheme.box, barrier=barrier
            )
            return prox_barrier_box_quadratic(params, v)
    else:
        def handle(v, t):
            params = ProxGParams(
                step=t, weight=weight, anchor=anchor, box=scheme.box
            )
            return prox_box_quadratic(params, v)
    return handle


def g_value_factory(scheme, anchor: np.ndarray, weight: float, box_tol: float = 1e-12):
    """Value of the componentwise block, infinite outside the box."""
    barrier = scheme.g_barrier()

    def value(x):
        if not scheme.box.contains(x, tol=box_tol):
            return np.inf
        d = x - anchor
        val = 0.5 * weight * float(d @ d)
        if barrier is not None:
            val += barrier.total(x)
        return val

    return value
