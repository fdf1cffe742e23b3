"""Regularization building blocks: box set, total variation from P1
elements, smoothed total variation, Gaussian-kernel smoothness prior,
and piecewise-quadratic barrier penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DomainError, SolveError
from .mesh import ElementGeometry, Mesh2D

__all__ = [
    "BoxSet",
    "TvOperator",
    "SmoothnessPrior",
    "Barrier",
    "build_tv_operator",
    "tv_value",
    "smoothed_tv",
    "build_smoothness_prior",
    "barrier_value",
]


@dataclass(frozen=True)
class BoxSet:
    """Componentwise box constraint [lower, upper]."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise DomainError("box requires lower < upper")

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        """Containment with per-bound relative slack tol."""
        x = np.asarray(x)
        lo = self.lower - tol * max(1.0, abs(self.lower))
        hi = self.upper + tol * max(1.0, abs(self.upper))
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass
class TvOperator:
    """Area-weighted per-element gradient operator.

    r1/r2 hold V_i * d(phi_j)/d(x_l) on element i's nodes, so the row
    pair (i, i + n_elements) of the stacked operator carries element
    i's weighted gradient; its Euclidean length is that element's
    contribution to the total variation.
    """

    r1: sp.csr_matrix
    r2: sp.csr_matrix

    @property
    def n_elements(self) -> int:
        return self.r1.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.r1.shape[1]

    @property
    def stacked(self) -> sp.csr_matrix:
        if not hasattr(self, "_stacked"):
            self._stacked = sp.vstack([self.r1, self.r2], format="csr")
        return self._stacked

    def gradients(self, sigma):
        return self.r1 @ sigma, self.r2 @ sigma


def build_tv_operator(mesh: Mesh2D, geometry: ElementGeometry) -> TvOperator:
    """Assemble the two stacked difference operators from P1 gradients."""
    tri = mesh.triangles
    n_el, n_nodes = tri.shape[0], mesh.n_nodes
    rows = np.repeat(np.arange(n_el), 3)
    cols = tri.ravel()
    w = geometry.areas[:, None] * geometry.gradients[:, :, 0]
    r1 = sp.coo_matrix((w.ravel(), (rows, cols)), shape=(n_el, n_nodes)).tocsr()
    w = geometry.areas[:, None] * geometry.gradients[:, :, 1]
    r2 = sp.coo_matrix((w.ravel(), (rows, cols)), shape=(n_el, n_nodes)).tocsr()
    return TvOperator(r1=r1, r2=r2)


def tv_value(op: TvOperator, sigma) -> float:
    """Isotropic total variation: sum of per-element gradient norms."""
    g1, g2 = op.gradients(sigma)
    return float(np.sum(np.hypot(g1, g2)))


def smoothed_tv(op: TvOperator, sigma, gamma: float):
    """Smoothed total variation and its per-element map.

    Returns (value, f, jac) with f_i = sqrt(g1_i^2 + g2_i^2 + gamma),
    value = sum(f), and jac the sparse (n_elements, n_nodes) Jacobian
    of f, as needed by the nonlinear inner solver.
    """
    if gamma <= 0:
        raise DomainError("smoothing parameter must be positive")
    g1, g2 = op.gradients(sigma)
    f = np.sqrt(g1 * g1 + g2 * g2 + gamma)
    jac = sp.diags(g1 / f) @ op.r1 + sp.diags(g2 / f) @ op.r2
    return float(f.sum()), f, jac.tocsr()


@dataclass
class SmoothnessPrior:
    """Gaussian-kernel smoothness prior in factored form.

    factor is R with R^T R = (kernel)^{-1}; the penalty is
    ||R (sigma - mean)||^2.
    """

    factor: np.ndarray
    mean: np.ndarray
    kernel_amplitude: float
    kernel_width_sq: float
    kernel: np.ndarray = field(repr=False, default=None)

    def value(self, sigma) -> float:
        d = self.factor @ (np.asarray(sigma) - self.mean)
        return float(d @ d)

    @property
    def mean_image(self) -> np.ndarray:
        """Offset R @ mean used by the dual-block formulation."""
        return self.factor @ self.mean

    def gradient(self, sigma) -> np.ndarray:
        d = self.factor @ (np.asarray(sigma) - self.mean)
        return 2.0 * (self.factor.T @ d)

    def hessian(self) -> np.ndarray:
        return 2.0 * (self.factor.T @ self.factor)


def build_smoothness_prior(mesh: Mesh2D, a: float, b: float, sigma_mean) -> SmoothnessPrior:
    """Factor the inverse Gaussian kernel over the mesh nodes.

    Kernel entries are a * exp(-|x_i - x_j|^2 / (2 b)).  The factor R
    satisfies (R^T R)^{-1} = kernel; it is the transposed Cholesky
    factor of the explicitly inverted kernel, which is fine at the node
    counts this package targets.
    """
    if a <= 0 or b <= 0:
        raise DomainError("kernel parameters a, b must be positive")
    x = np.asarray(mesh.nodes, dtype=float)
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    kernel = a * np.exp(-d2 / (2.0 * b))
    try:
        c, low = scipy.linalg.cho_factor(kernel)
        inv = scipy.linalg.cho_solve((c, low), np.eye(len(x)))
        inv = 0.5 * (inv + inv.T)
        factor = np.linalg.cholesky(inv).T
    except np.linalg.LinAlgError as exc:
        raise SolveError(
            "kernel factorization failed; condition estimate "
            f"{np.linalg.cond(kernel):.3e}"
        ) from exc
    mean = np.broadcast_to(np.asarray(sigma_mean, dtype=float), (len(x),)).copy()
    return SmoothnessPrior(
        factor=factor,
        mean=mean,
        kernel_amplitude=float(a),
        kernel_width_sq=float(b),
        kernel=kernel,
    )


@dataclass(frozen=True)
class Barrier:
    """Piecewise-quadratic penalty outside [threshold_min, threshold_max].

    Either side can be disabled with strength 0.  Contributes nothing
    inside the thresholds and is continuously differentiable.
    """

    strength_min: float
    strength_max: float
    threshold_min: float
    threshold_max: float = np.inf

    def __post_init__(self):
        if self.strength_min < 0 or self.strength_max < 0:
            raise DomainError("barrier strengths must be nonnegative")
        if not self.threshold_min <= self.threshold_max:
            raise DomainError("barrier thresholds out of order")

    def below(self, sigma) -> np.ndarray:
        return np.minimum(np.asarray(sigma) - self.threshold_min, 0.0)

    def above(self, sigma) -> np.ndarray:
        return np.maximum(np.asarray(sigma) - self.threshold_max, 0.0)

    def total(self, sigma) -> float:
        lo, hi = barrier_value(self, sigma)
        return lo + hi

    def gradient(self, sigma) -> np.ndarray:
        return (
            self.strength_min**2 * self.below(sigma)
            + self.strength_max**2 * self.above(sigma)
        )

    def hessian_diag(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma)
        return self.strength_min**2 * (sigma < self.threshold_min) + (
            self.strength_max**2 * (sigma > self.threshold_max)
        )


def barrier_value(barrier: Barrier, sigma) -> tuple:
    """(below-threshold penalty, above-threshold penalty)."""
    lo = barrier.below(sigma)
    hi = barrier.above(sigma)
    return (
        0.5 * barrier.strength_min**2 * float(lo @ lo),
        0.5 * barrier.strength_max**2 * float(hi @ hi),
    )
