"""Relaxed inexact proximal Gauss-Newton outer loop and baselines.

Each outer iteration linearizes the weighted measurement residual at
the current point z, solves the convex surrogate

    min_x 0.5||K1 x - b||^2 + F(x) + (beta/2)||x - z||^2

inexactly with the two-block splitting solver, checks sufficient
decrease of the surrogate, and relaxes:

    z+ = (1 - w) z + w x_tilde,    w in (0, 1].

The damped Newton baseline and the full-problem nonlinear splitting
baseline share the stagnation stopping rule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError
from .forward import CEMModel, misfit, weighted_residual
from .pdps import (
    LinearBlock,
    TwoBlockProblem,
    nlpdps_solve,
    operator_norm,
    pdps_solve,
    step_lengths,
)
from .prox import prox_conj_quadratic_fit
from .schemes import g_prox_factory, g_value_factory

__all__ = [
    "RipgnConfig",
    "ConvergenceTrace",
    "TraceEntry",
    "RipgnResult",
    "ConvergenceBoundInputs",
    "GaussNewtonProblem",
    "linearize_subproblem",
    "ripgn_solve",
    "estimate_w_bound",
    "relaxation_linesearch",
    "LinesearchState",
    "LinesearchResult",
    "stagnation_stop",
    "StagnationDecision",
    "residual_stop",
    "newton_baseline",
    "NewtonObjective",
]


@dataclass(frozen=True)
class RipgnConfig:
    """Outer-loop parameters.

    Defaults follow the reference operating point: relaxation 3/4,
    tether weight 1e-10, inner step t = 1e-6 with margin delta = 0.01,
    and 6000 inner iterations per linearization.  The stagnation rule
    fires once an iterate improves the objective by less than 0.5,
    activates after the eighth iterate, and confirms with a two-iterate
    lookahead, so at least ten iterates are always computed.
    """

    w: float = 0.75
    beta: float = 1e-10
    t: float = 1e-6
    delta: float = 0.01
    lam: float = 1.0
    inner_iters: int = 6000
    max_outer: int = 60
    stag_threshold: float = 0.5
    stag_activation: int = 8
    stag_lookahead: int = 2
    linesearch: str = "off"  # off | fractional-error | descent-check
    w_grid: tuple = (1.0, 0.9, 0.75, 0.5, 0.25)
    linesearch_eps: float | None = None
    residual_rho: float | None = None
    residual_max_rounds: int = 4
    jacobian_refresh: int = 1
    norm_seed: int = 0
    norm_iters: int = 100
    inner_trace_every: int = 0
    divergence_factor: float = 10.0
    keep_subproblems: bool = False

    def __post_init__(self):
        if not 0.0 < self.w <= 1.0:
            raise DomainError("relaxation w must lie in (0, 1]")
        if self.beta < 0:
            raise DomainError("tether weight beta must be nonnegative")
        if self.inner_iters < 1:
            raise DomainError("need at least one inner iteration")
        if self.linesearch not in ("off", "fractional-error", "descent-check"):
            raise DomainError(f"unknown linesearch mode {self.linesearch!r}")


@dataclass
class TraceEntry:
    k: int
    j_start: float        # objective at the iteration's linearization point
    step_norm: float      # ||x_tilde - z||
    subproblem_j: float   # surrogate objective at the inner solution
    wall_ms: float
    w: float


@dataclass
class ConvergenceTrace:
    """Per-outer-iteration diagnostics; one entry per completed iteration."""

    entries: list = field(default_factory=list)

    def add(self, *args, **kwargs):
        self.entries.append(TraceEntry(*args, **kwargs))

    def __len__(self):
        return len(self.entries)

    def lines(self):
        out = []
        for e in self.entries:
            out.append(
                f"{e.k} {e.j_start!r} {e.step_norm!r} {e.subproblem_j!r} "
                f"{e.wall_ms:.3f} {e.w!r}"
            )
        return out

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("\n".join(self.lines()) + "\n")


@dataclass
class RipgnResult:
    z: np.ndarray
    j_value: float
    status: str  # stagnation | max_outer | diverged | fixed_point | safeguard_stop
    trace: ConvergenceTrace
    j_history: list          # objective at z^0, z^1, ...
    iterations: int          # index of the returned iterate
    warnings: list = field(default_factory=list)
    iterates: list = field(default_factory=list, repr=False)
    subproblems: list = field(default_factory=list, repr=False)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


class GaussNewtonProblem:
    """Measurement model plus regularization scheme.

    Provides the outer objective and builds one surrogate subproblem
    per linearization point.
    """

    def __init__(self, model: CEMModel, measured, weights, scheme):
        self.model = model
        self.measured = np.asarray(measured, dtype=float)
        self.weights = weights
        self.scheme = scheme
        self._l2_cache = None

    def objective(self, sigma) -> float:
        sigma = np.asarray(sigma, dtype=float)
        if not self.scheme.box.contains(sigma, tol=1e-12) or np.any(sigma <= 0):
            return np.inf
        a = weighted_residual(self.model, sigma, self.measured, self.weights)
        return 0.5 * float(a @ a) + self.scheme.reg_value(sigma)

    def data_residual(self, sigma) -> np.ndarray:
        return weighted_residual(self.model, sigma, self.measured, self.weights)

    def l2_bound(self, z, config: RipgnConfig) -> float:
        if self._l2_cache is not None:
            return self._l2_cache
        block = self.scheme.k2_block(z)
        if getattr(block, "is_linear", False):
            op = block
        elif hasattr(block, "norm_bound_operator"):
            # a global Jacobian bound holds on every iterate, so one
            # estimate serves all subproblems
            op = block.norm_bound_operator()
        else:
            # no global bound: freeze the Jacobian norm at the current
            # linearization point (drift is flagged inside the solver)
            return operator_norm(
                block.jacobian(z), iters=config.norm_iters, seed=config.norm_seed
            )
        self._l2_cache = operator_norm(
            op, iters=config.norm_iters, seed=config.norm_seed
        )
        return self._l2_cache

    def linearize(self, z, config: RipgnConfig):
        return linearize_subproblem(
            self.model, self.scheme, z, config.beta,
            measured=self.measured, weights=self.weights,
        )


def linearize_subproblem(
    model: CEMModel, scheme, z, beta, *, measured, weights
) -> tuple:
    """Build the two-block surrogate at the linearization point z.

    Returns (problem, lin) where lin carries the weighted Jacobian k1
    and offset b; the surrogate data term 0.5||k1 x - b||^2 equals the
    true misfit at x = z.
    """
    z = np.asarray(z, dtype=float)
    lin = misfit(model, z, measured, weights)
    b = lin.offset
    problem = TwoBlockProblem(
        g_prox=g_prox_factory(scheme, z, beta),
        g_value=g_value_factory(scheme, z, beta),
        k1=LinearBlock(lin.k1),
        f1_conj_prox=lambda y, s: prox_conj_quadratic_fit(s, b, y),
        f1_value=lambda y: 0.5 * float((y - b) @ (y - b)),
        k2=scheme.k2_block(z),
        f2_conj_prox=scheme.f2_conj_prox(),
        f2_value=scheme.f2_value(),
        n_primal=z.size,
    )
    return problem, lin


def _solve_inner(problem, params, z, config: RipgnConfig, nonlinear: bool):
    """One inexact subproblem solve, optionally extended until the
    fixed-point residual test ||e|| <= rho ||x - z|| accepts."""
    solver = nlpdps_solve if nonlinear else pdps_solve
    kwargs = dict(trace_every=config.inner_trace_every)
    if nonlinear:
        kwargs["refresh_every"] = config.jacobian_refresh
    res = solver(problem, params, z, iters=config.inner_iters, **kwargs)
    warnings = list(res.warnings)
    if config.residual_rho is None:
        return res, warnings
    rounds = 1
    while not residual_stop(
        res.residual_norm, float(np.linalg.norm(res.x - z)), config.residual_rho
    ):
        if rounds >= config.residual_max_rounds:
            warnings.append(
                f"inner residual test still failing after {rounds} rounds"
            )
            break
        res = solver(
            problem, params, res.x, y1_0=res.y1, y2_0=res.y2,
            iters=config.inner_iters, **kwargs,
        )
        warnings.extend(res.warnings)
        rounds += 1
    return res, warnings


def ripgn_solve(problem: GaussNewtonProblem, config: RipgnConfig, z0) -> RipgnResult:
    """Run the relaxed inexact proximal Gauss-Newton loop.

    Divergence (objective above divergence_factor times the initial
    value, or non-finite inner iterates) is reported in the result
    status rather than raised: blow-ups at large relaxation are an
    expected outcome that sweep harnesses tabulate.
    """
    z = np.asarray(z0, dtype=float).copy()
    j0 = problem.objective(z)
    if not np.isfinite(j0):
        raise DomainError("initial iterate has non-finite objective")
    scheme = problem.scheme
    nonlinear = scheme.nonlinear_inner
    trace = ConvergenceTrace()
    j_history = [j0]
    iterates = [z.copy()]
    warnings: list = []
    subproblems: list = []
    status = "max_outer"
    selected = None

    for k in range(config.max_outer):
        tic = time.perf_counter()
        tb, lin = problem.linearize(z, config)
        tb.check_adjoint(seed=config.norm_seed)
        l1 = operator_norm(tb.k1, iters=config.norm_iters, seed=config.norm_seed)
        l2 = problem.l2_bound(z, config)
        params = step_lengths(config.t, l1, max(l2, 1e-300), config.delta, config.lam)
        if config.keep_subproblems:
            subproblems.append(
                {"k": k, "z": z.copy(), "k1": lin.k1, "b": lin.offset,
                 "l1": l1, "l2": l2}
            )

        j_z = j_history[-1]
        surrogate_at_z = tb.objective(z)
        try:
            inner, inner_warnings = _solve_inner(tb, params, z, config, nonlinear)
        except DivergenceError as exc:
            warnings.append(f"inner solve diverged at outer {k}: {exc}")
            status = "diverged"
            break
        warnings.extend(inner_warnings)
        x_tilde = inner.x
        surrogate_at_x = tb.objective(x_tilde)

        if surrogate_at_x > surrogate_at_z:
            # sufficient decrease failed: double the inner budget by
            # continuing the same solve (warm duals avoid repeating the
            # startup transient), then keep the current point and stop
            solver = nlpdps_solve if nonlinear else pdps_solve
            kwargs = dict(trace_every=config.inner_trace_every)
            if nonlinear:
                kwargs["refresh_every"] = config.jacobian_refresh
            try:
                inner = solver(
                    tb, params, inner.x, y1_0=inner.y1, y2_0=inner.y2,
                    iters=config.inner_iters, **kwargs,
                )
                x_tilde = inner.x
                surrogate_at_x = tb.objective(x_tilde)
            except DivergenceError as exc:
                warnings.append(f"inner retry diverged at outer {k}: {exc}")
                status = "diverged"
                break
            if surrogate_at_x > surrogate_at_z:
                warnings.append(
                    f"outer {k}: surrogate decrease unattainable "
                    f"({surrogate_at_x!r} > {surrogate_at_z!r}); keeping iterate"
                )
                status = "safeguard_stop"
                break

        dx = x_tilde - z
        step_norm = float(np.linalg.norm(dx))
        if step_norm == 0.0:
            trace.add(k, j_z, 0.0, surrogate_at_x,
                      1e3 * (time.perf_counter() - tic), 0.0)
            status = "fixed_point"
            selected = len(iterates) - 1
            break

        w_k = config.w
        if config.linesearch != "off":
            state = LinesearchState(
                z=z, x_tilde=x_tilde, j_z=j_z,
                objective=problem.objective,
                misfit_norm_sq=lambda s: float(
                    np.sum(problem.data_residual(s) ** 2)
                ),
                linear_norm_sq=lambda s: float(
                    np.sum((lin.k1 @ s - lin.offset) ** 2)
                ),
                beta=config.beta,
                eps=config.linesearch_eps,
            )
            ls = relaxation_linesearch(
                config.linesearch, config.w_grid, state, fallback_w=config.w
            )
            w_k = ls.w

        z_new = z + w_k * dx
        j_new = problem.objective(z_new)
        trace.add(k, j_z, step_norm, surrogate_at_x,
                  1e3 * (time.perf_counter() - tic), w_k)
        j_history.append(j_new)
        iterates.append(z_new.copy())
        if not np.isfinite(j_new) or j_new > config.divergence_factor * j0:
            status = "diverged"
            z = z_new
            break
        z = z_new

        decision = stagnation_stop(
            j_history,
            threshold=config.stag_threshold,
            activation=config.stag_activation,
            lookahead=config.stag_lookahead,
        )
        if decision.kind == "stop":
            status = "stagnation"
            selected = decision.index
            break

    if selected is None:
        selected = len(iterates) - 1
    return RipgnResult(
        z=iterates[selected],
        j_value=j_history[selected],
        status=status,
        trace=trace,
        j_history=j_history,
        iterations=selected,
        warnings=warnings,
        iterates=iterates,
        subproblems=subproblems,
    )


@dataclass(frozen=True)
class ConvergenceBoundInputs:
    """User-supplied constants for the relaxation bound diagnostic."""

    lin_error_const: float   # quadratic linearization-error constant
    misfit_sup: float        # bound on the residual norm over the domain
    lin_radius: float        # radius on which the quadratic bound holds
    margin: float            # positive slack below the tether weight
    j_initial: float
    f_lower: float           # lower bound of the regularizer


def estimate_w_bound(inputs: ConvergenceBoundInputs, beta: float) -> float:
    """Largest provably safe relaxation weight.

    min(1, radius / sqrt(2 (J0 - inf F) / beta),
          (beta - margin) / (2 C sup||A||)).
    Diagnostic only: the constants are estimates the caller supplies.
    """
    if min(inputs.lin_error_const, inputs.misfit_sup, inputs.lin_radius,
           inputs.margin) <= 0:
        raise DomainError("bound inputs must be positive")
    if not inputs.margin < beta:
        raise DomainError("margin must be smaller than beta")
    gap = inputs.j_initial - inputs.f_lower
    if gap <= 0:
        raise DomainError("initial objective must exceed the regularizer bound")
    radius_term = inputs.lin_radius / np.sqrt(2.0 * gap / beta)
    error_term = (beta - inputs.margin) / (
        2.0 * inputs.lin_error_const * inputs.misfit_sup
    )
    return float(min(1.0, radius_term, error_term))


@dataclass
class LinesearchState:
    """Inputs to the relaxation linesearch at one outer iteration."""

    z: np.ndarray
    x_tilde: np.ndarray
    j_z: float
    objective: callable            # sigma -> J(sigma)
    misfit_norm_sq: callable       # sigma -> ||A(sigma)||^2
    linear_norm_sq: callable       # sigma -> ||A_k(sigma)||^2
    beta: float
    eps: float | None = None       # defaults to beta / 2
    lin_radius: float | None = None
    j_gap: float | None = None     # J(z0) - inf F, for the radius bound


@dataclass(frozen=True)
class LinesearchResult:
    w: float
    accepted: bool


def relaxation_linesearch(
    mode: str, w_grid, state: LinesearchState, fallback_w: float
) -> LinesearchResult:
    """Largest grid relaxation passing the selected admissibility test.

    fractional-error: the measured ratio
        max(0, (||A(z+)||^2 - ||A_k(z+)||^2) / (2 w ||x - z||^2))
    replaces the a-priori linearization constant in the relaxation
    bound, which must then still admit w.

    descent-check: requires the realized decrease
        J(z) - J(z+) >= (w eps / 2) ||x - z||^2.

    Falls back to the configured base weight when no grid value passes.
    """
    if mode not in ("fractional-error", "descent-check"):
        raise DomainError(f"unknown linesearch mode {mode!r}")
    eps = state.eps if state.eps is not None else state.beta / 2.0
    dx = state.x_tilde - state.z
    dx_sq = float(dx @ dx)
    if dx_sq == 0.0:
        return LinesearchResult(fallback_w, False)
    for w in sorted(set(w_grid), reverse=True):
        if not 0.0 < w <= 1.0:
            continue
        z_new = state.z + w * dx
        if mode == "descent-check":
            j_new = state.objective(z_new)
            if state.j_z - j_new >= 0.5 * w * eps * dx_sq:
                return LinesearchResult(float(w), True)
            continue
        frac = (state.misfit_norm_sq(z_new) - state.linear_norm_sq(z_new)) / (
            2.0 * w * dx_sq
        )
        frac = max(0.0, frac)
        if frac > 0.0 and w > (state.beta - eps) / (2.0 * frac):
            continue
        if state.lin_radius is not None and state.j_gap is not None:
            if w > state.lin_radius / np.sqrt(
                2.0 * state.j_gap / max(state.beta, 1e-300)
            ):
                continue
        return LinesearchResult(float(w), True)
    return LinesearchResult(fallback_w, False)


@dataclass(frozen=True)
class StagnationDecision:
    kind: str            # continue | tentative | stop
    index: int | None    # trigger iterate for tentative/stop


def stagnation_stop(
    j_values,
    threshold: float = 0.5,
    activation: int = 8,
    lookahead: int = 2,
) -> StagnationDecision:
    """Stagnation rule over the objective history.

    j_values[0] is the initial objective and j_values[i] the value after
    computed iterate i.  An iterate whose decrease falls below the
    threshold triggers a tentative stop once i >= activation; the next
    `lookahead` iterates can rescue it by decreasing at least the
    threshold, otherwise the trigger iterate is the answer and the
    lookahead iterates are discarded.
    """
    j = [float(v) for v in j_values]
    n = len(j) - 1
    deltas = [j[i - 1] - j[i] for i in range(1, n + 1)]  # deltas[i-1] = iterate i
    k = activation
    while k <= n:
        if deltas[k - 1] >= threshold:
            k += 1
            continue
        window = deltas[k : k + lookahead]
        if any(d >= threshold for d in window):
            k += 1
            continue
        if len(window) < lookahead:
            return StagnationDecision("tentative", k)
        return StagnationDecision("stop", k)
    return StagnationDecision("continue", None)


def residual_stop(residual_norm: float, step_norm: float, rho: float) -> bool:
    """Accept the inner solve when ||e|| <= rho ||x - z||."""
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    return residual_norm <= rho * step_norm


class NewtonObjective:
    """Smooth composite objective for the damped Newton baseline.

    Wraps the measurement model and a differentiable scheme; the
    Hessian is the Gauss-Newton data approximation plus the exact
    regularizer and barrier Hessians.
    """

    def __init__(self, model: CEMModel, measured, weights, scheme):
        if not scheme.newton_supported:
            raise DomainError(
                f"scheme {scheme.name!r} has no differentiable objective"
            )
        self.model = model
        self.measured = np.asarray(measured, dtype=float)
        self.weights = weights
        self.scheme = scheme
        self.box = scheme.box

    def value(self, sigma) -> float:
        a = weighted_residual(self.model, sigma, self.measured, self.weights)
        return 0.5 * float(a @ a) + self.scheme.reg_value(sigma)

    def value_gradient_hessian(self, sigma):
        lin = misfit(self.model, sigma, self.measured, self.weights)
        a = lin.residual
        val = 0.5 * float(a @ a) + self.scheme.reg_value(sigma)
        grad = lin.k1.T @ a + self.scheme.reg_gradient(sigma)
        hess = lin.k1.T @ lin.k1 + self.scheme.reg_hessian(sigma)
        return val, grad, hess


def newton_baseline(
    objective,
    z0,
    max_outer: int = 60,
    armijo_c1: float = 1e-4,
    backtrack: float = 0.5,
    max_backtracks: int = 30,
    stag_threshold: float = 0.5,
    stag_activation: int = 8,
    stag_lookahead: int = 2,
    grad_tol: float = 0.0,
) -> RipgnResult:
    """Damped Newton with Armijo backtracking on a smooth objective.

    `objective` provides value(x) and value_gradient_hessian(x); an
    optional `box` attribute keeps iterates feasible.  Indefinite or
    singular systems get an escalating diagonal shift.  Shares the
    stagnation stopping rule with the Gauss-Newton loop; the trace's w
    column records the accepted step length.
    """
    z = np.asarray(z0, dtype=float).copy()
    box = getattr(objective, "box", None)
    trace = ConvergenceTrace()
    j_history = [float(objective.value(z))]
    iterates = [z.copy()]
    warnings: list = []
    status = "max_outer"
    selected = None

    for k in range(max_outer):
        tic = time.perf_counter()
        val, grad, hess = objective.value_gradient_hessian(z)
        if grad_tol > 0 and float(np.linalg.norm(grad)) <= grad_tol:
            status = "fixed_point"
            selected = len(iterates) - 1
            break
        shift = 0.0
        scale = float(np.trace(hess)) / max(1, hess.shape[0])
        for attempt in range(12):
            try:
                h = hess if shift == 0.0 else hess + shift * np.eye(hess.shape[0])
                step = np.linalg.solve(h, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and float(grad @ step) < 0:
                break
            shift = max(1e-12 * scale, shift * 10 if shift else 1e-10 * scale)
        else:
            warnings.append(f"outer {k}: no descent direction found")
            status = "safeguard_stop"
            break

        slope = float(grad @ step)
        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            cand = z + alpha * step
            if box is not None:
                cand = box.project(cand)
            j_new = objective.value(cand)
            if np.isfinite(j_new) and j_new <= val + armijo_c1 * alpha * slope:
                accepted = True
                break
            alpha *= backtrack
        if not accepted:
            warnings.append(f"outer {k}: backtracking failed")
            status = "safeguard_stop"
            break

        step_norm = float(np.linalg.norm(cand - z))
        trace.add(k, val, step_norm, j_new,
                  1e3 * (time.perf_counter() - tic), alpha)
        z = cand
        j_history.append(float(j_new))
        iterates.append(z.copy())
        decision = stagnation_stop(
            j_history, threshold=stag_threshold,
            activation=stag_activation, lookahead=stag_lookahead,
        )
        if decision.kind == "stop":
            status = "stagnation"
            selected = decision.index
            break

    if selected is None:
        selected = len(iterates) - 1
    return RipgnResult(
        z=iterates[selected],
        j_value=j_history[selected],
        status=status,
        trace=trace,
        j_history=j_history,
        iterations=selected,
        warnings=warnings,
        iterates=iterates,
    )
