"""Two-block primal-dual proximal splitting with per-block step lengths.

Solves min_x G(x) + F1(K1 x) + F2(K2 x) by alternating a primal prox
step, over-relaxation, and one dual prox step per block:

    x+   = prox_{tG}(x - t K1* y1 - t K2* y2)
    xbar = 2 x+ - x
    y1+  = prox_{s1 F1*}(y1 + s1 K1 xbar)
    y2+  = prox_{s2 F2*}(y2 + s2 K2 xbar)

Distinct dual steps s1, s2 balance blocks of different scale; they are
valid whenever (1 + lam) t s1 L1^2 < 1 and (1 + 1/lam) t s2 L2^2 < 1
for operator norm bounds L1, L2.  The same loop runs the nonlinear
variant, where K(xbar) is evaluated exactly in the dual steps while the
primal step uses the adjoint Jacobian at the current iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError

__all__ = [
    "LinearBlock",
    "TwoBlockProblem",
    "PdpsStepParams",
    "PdpsResult",
    "operator_norm",
    "step_lengths",
    "pdps_solve",
    "nlpdps_solve",
]


class LinearBlock:
    """Matrix-backed operator block (dense or sparse)."""

    def __init__(self, mat):
        self.mat = mat

    @property
    def shape(self):
        return self.mat.shape

    def value(self, x):
        return self.mat @ x

    def adjoint(self, y):
        return self.mat.T @ y

    def jacobian(self, x):
        return self

    @property
    def is_linear(self):
        return True


@dataclass
class TwoBlockProblem:
    """One saddle-point problem instance for the splitting loop.

    Blocks expose value(x) and jacobian(x); a LinearBlock's jacobian is
    itself.  The conjugate prox handles take (point, step).  g_prox
    takes (point, step).  Value handles are used for objective tracing
    and diagnostics only.
    """

    g_prox: callable
    g_value: callable
    k1: object
    f1_conj_prox: callable
    f1_value: callable
    k2: object = None
    f2_conj_prox: callable = None
    f2_value: callable = None
    n_primal: int = 0

    def objective(self, x) -> float:
        val = self.g_value(x) + self.f1_value(self.k1.value(x))
        if self.k2 is not None:
            val += self.f2_value(self.k2.value(x))
        return float(val)

    def check_adjoint(self, seed: int = 0, probes: int = 10, tol: float = 1e-10):
        """Random-probe adjoint consistency <Kx, y> == <x, K*y>."""
        rng = np.random.default_rng(seed)
        for block in (self.k1, self.k2):
            if block is None or not getattr(block, "is_linear", False):
                continue
            m, n = block.shape
            for _ in range(probes):
                x = rng.standard_normal(n)
                y = rng.standard_normal(m)
                lhs = float(block.value(x) @ y)
                rhs = float(x @ block.adjoint(y))
                scale = max(abs(lhs), abs(rhs), 1e-30)
                if abs(lhs - rhs) > tol * scale:
                    raise DomainError(
                        f"adjoint probe failed: {lhs} vs {rhs}"
                    )
        return True


@dataclass(frozen=True)
class PdpsStepParams:
    """Step lengths plus the bounds they were derived from."""

    t: float
    s1: float
    s2: float
    delta: float
    lam: float
    l1: float
    l2: float
    balanced: bool = True

    def __post_init__(self):
        if min(self.t, self.s1, self.s2) <= 0:
            raise DomainError("step lengths must be positive")
        if self.balanced:
            c1 = (1.0 + self.lam) * self.t * self.s1 * self.l1**2
            c2 = (1.0 + 1.0 / self.lam) * self.t * self.s2 * self.l2**2
            if not (c1 < 1.0 and c2 < 1.0):
                raise DomainError(
                    f"step conditions violated: {c1:.3f}, {c2:.3f} must be < 1"
                )

    @classmethod
    def unbalanced(cls, t: float, l: float, lam: float = 1.0) -> "PdpsStepParams":
        """Single shared dual step s = 1/(t L^2), bypassing the two-block
        condition; used only as the comparison baseline."""
        if t <= 0 or l <= 0:
            raise DomainError("t and L must be positive")
        s = 1.0 / (t * l * l)
        return cls(t=t, s1=s, s2=s, delta=0.0, lam=lam, l1=l, l2=l, balanced=False)


def operator_norm(op, iters: int = 100, seed: int = 0) -> float:
    """Power-method bound on the spectral norm, inflated by 1.01.

    Deterministic for a given seed.  Returns 0 for the zero operator.
    """
    if iters < 1:
        raise DomainError("need at least one power iteration")
    if isinstance(op, np.ndarray) or hasattr(op, "toarray"):
        op = LinearBlock(op)
    n = op.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = op.value(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = op.adjoint(w)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return 0.0
        v /= nv
    est = float(np.linalg.norm(op.value(v)))
    return 1.01 * est


def step_lengths(
    t: float, l1: float, l2: float, delta: float, lam: float = 1.0
) -> PdpsStepParams:
    """Balanced dual steps s_j = (1 - delta) / ((1 + lam^{+-1}) t L_j^2)."""
    if t <= 0 or l1 <= 0 or l2 <= 0 or lam <= 0:
        raise DomainError("t, L1, L2, lam must be positive")
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    s1 = (1.0 - delta) / ((1.0 + lam) * t * l1 * l1)
    s2 = (1.0 - delta) / ((1.0 + 1.0 / lam) * t * l2 * l2)
    return PdpsStepParams(t=t, s1=s1, s2=s2, delta=delta, lam=lam, l1=l1, l2=l2)


@dataclass
class PdpsResult:
    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray | None
    objective_trace: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int
    warnings: list = field(default_factory=list)


def _splitting_loop(
    problem: TwoBlockProblem,
    params: PdpsStepParams,
    x0,
    y1_0,
    y2_0,
    iters: int,
    refresh_every: int,
    trace_every: int,
    norm_check_every: int,
) -> PdpsResult:
    t, s1, s2 = params.t, params.s1, params.s2
    x = np.array(x0, dtype=float)
    m1 = problem.k1.shape[0]
    y1 = np.zeros(m1) if y1_0 is None else np.array(y1_0, dtype=float)
    has_k2 = problem.k2 is not None
    if has_k2:
        m2 = problem.k2.shape[0]
        y2 = np.zeros(m2) if y2_0 is None else np.array(y2_0, dtype=float)
    else:
        y2 = None

    j1 = problem.k1.jacobian(x)
    j2 = problem.k2.jacobian(x) if has_k2 else None
    trace = []
    warnings: list = []
    dx = dy1 = dy2 = None
    for i in range(iters):
        if i > 0 and refresh_every > 0 and i % refresh_every == 0:
            j1 = problem.k1.jacobian(x)
            if has_k2:
                j2 = problem.k2.jacobian(x)
        if norm_check_every and i and i % norm_check_every == 0:
            for blk, jac, bound, name in (
                (problem.k1, j1, params.l1, "K1"),
                (problem.k2, j2, params.l2, "K2"),
            ):
                if blk is None or getattr(blk, "is_linear", False):
                    continue
                drift = operator_norm(jac, iters=30) / 1.01
                if drift > 1.1 * bound:
                    warnings.append(
                        f"iteration {i}: {name} norm {drift:.3e} exceeds "
                        f"frozen bound {bound:.3e} by >10%"
                    )
                    norm_check_every = 0  # report once

        v = x - t * j1.adjoint(y1)
        if has_k2:
            v -= t * j2.adjoint(y2)
        x_new = problem.g_prox(v, t)
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError("non-finite primal iterate", iteration=i)
        xbar = 2.0 * x_new - x
        y1_new = problem.f1_conj_prox(y1 + s1 * problem.k1.value(xbar), s1)
        if has_k2:
            y2_new = problem.f2_conj_prox(y2 + s2 * problem.k2.value(xbar), s2)
        if i == iters - 1:
            dx = x - x_new
            dy1 = y1 - y1_new
            if has_k2:
                dy2 = y2 - y2_new
        x, y1 = x_new, y1_new
        if has_k2:
            y2 = y2_new
        if trace_every and (i % trace_every == 0 or i == iters - 1):
            trace.append(problem.objective(x))

    residual = dx / t - j1.adjoint(dy1)
    if has_k2:
        residual -= j2.adjoint(dy2)
    return PdpsResult(
        x=x,
        y1=y1,
        y2=y2,
        objective_trace=np.array(trace),
        residual=residual,
        residual_norm=float(np.linalg.norm(residual)),
        iterations=iters,
        warnings=warnings,
    )


def pdps_solve(
    problem: TwoBlockProblem,
    params: PdpsStepParams,
    x0,
    y1_0=None,
    y2_0=None,
    iters: int = 6000,
    trace_every: int = 1,
) -> PdpsResult:
    """Run the linear two-block iteration for a fixed iteration count."""
    for block in (problem.k1, problem.k2):
        if block is not None and not getattr(block, "is_linear", False):
            raise DomainError("pdps_solve requires linear blocks; use nlpdps_solve")
    return _splitting_loop(
        problem, params, x0, y1_0, y2_0, iters,
        refresh_every=0, trace_every=trace_every, norm_check_every=0,
    )


def nlpdps_solve(
    problem: TwoBlockProblem,
    params: PdpsStepParams,
    x0,
    y1_0=None,
    y2_0=None,
    iters: int = 6000,
    refresh_every: int = 1,
    trace_every: int = 1,
    norm_check_every: int = 1000,
) -> PdpsResult:
    """Nonlinear-operator variant: exact block values in the dual steps,
    adjoint Jacobians (refreshed every `refresh_every` iterations) in the
    primal step.  Linear blocks pass through unchanged, reproducing
    pdps_solve exactly."""
    if refresh_every < 1:
        raise DomainError("refresh cadence must be >= 1")
    return _splitting_loop(
        problem, params, x0, y1_0, y2_0, iters,
        refresh_every=refresh_every, trace_every=trace_every,
        norm_check_every=norm_check_every,
    )
