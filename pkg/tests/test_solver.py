import numpy as np
import pytest

from ripgn.errors import DomainError
from ripgn.forward import CEMModel, forward_solve
from ripgn.mesh import build_disc_mesh, element_geometry
from ripgn.pdps import LinearBlock, TwoBlockProblem
from ripgn.prox import prox_conj_quadratic_fit
from ripgn.regularizers import BoxSet, build_tv_operator
from ripgn.schemes import TvScheme
from ripgn.solver import (
    ConvergenceBoundInputs,
    GaussNewtonProblem,
    LinesearchState,
    RipgnConfig,
    estimate_w_bound,
    linearize_subproblem,
    newton_baseline,
    relaxation_linesearch,
    residual_stop,
    ripgn_solve,
    stagnation_stop,
)


# -- small linear and scalar problems -----------------------------------


class LinearMapProblem:
    """J(x) = 0.5||M x - d||^2 + box indicator, through the same
    interface the EIT problem provides."""

    def __init__(self, mat, data, box):
        self.mat = np.asarray(mat, dtype=float)
        self.data = np.asarray(data, dtype=float)
        self.box = box
        self.scheme = self

    # scheme-like surface
    nonlinear_inner = False
    name = "linear-toy"

    def reg_value(self, x):
        return 0.0

    def data_residual(self, x):
        return self.mat @ x - self.data

    def objective(self, x):
        if not self.box.contains(x, tol=1e-12):
            return np.inf
        r = self.mat @ x - self.data
        return 0.5 * float(r @ r)

    def l2_bound(self, z, config):
        return 1e-12

    def linearize(self, z, config):
        z = np.asarray(z, dtype=float)
        r = self.mat @ z - self.data
        b = self.mat @ z - r  # equals data; kept in the anchored form
        beta = config.beta
        box = self.box

        def g_prox(v, t):
            inv_t = 1.0 / t
            return box.project((inv_t * v + beta * z) / (inv_t + beta))

        def g_value(x):
            if not box.contains(x, tol=1e-12):
                return np.inf
            d = x - z
            return 0.5 * beta * float(d @ d)

        problem = TwoBlockProblem(
            g_prox=g_prox,
            g_value=g_value,
            k1=LinearBlock(self.mat),
            f1_conj_prox=lambda y, s: prox_conj_quadratic_fit(s, b, y),
            f1_value=lambda y: 0.5 * float((y - b) @ (y - b)),
            k2=LinearBlock(np.zeros((1, z.size))),
            f2_conj_prox=lambda y, s: np.zeros_like(y),
            f2_value=lambda y: 0.0,
            n_primal=z.size,
        )

        class Lin:
            k1 = self.mat
            offset = b

        return problem, Lin()


def test_identity_misfit_single_outer_step():
    # A(x) = x, no regularizer, w = 1, beta = 0: one linearization is
    # exact, so one outer iteration lands at the minimum
    box = BoxSet(-10.0, 10.0)
    prob = LinearMapProblem(np.eye(3), np.zeros(3), box)
    config = RipgnConfig(w=1.0, beta=0.0, t=0.3, inner_iters=5000, max_outer=1)
    res = ripgn_solve(prob, config, np.array([2.0, -1.0, 3.0]))
    assert np.abs(res.z).max() < 1e-6
    assert len(res.trace) == 1


def projected_gradient(mat, data, box, x0, steps=300000):
    x = x0.copy()
    lip = np.linalg.norm(mat, 2) ** 2
    for _ in range(steps):
        x = box.project(x - (1.0 / lip) * (mat.T @ (mat @ x - data)))
    return x


def test_box_constrained_linear_matches_projected_gradient():
    rng = np.random.default_rng(30)
    mat = rng.standard_normal((6, 4))
    data = rng.standard_normal(6) * 2
    box = BoxSet(-0.3, 0.4)
    oracle = projected_gradient(mat, data, box, np.zeros(4))
    prob = LinearMapProblem(mat, data, box)
    config = RipgnConfig(
        w=1.0, beta=0.0, t=0.1, inner_iters=20000, max_outer=3,
        stag_activation=10**9,
    )
    res = ripgn_solve(prob, config, np.zeros(4))
    assert np.abs(res.z - oracle).max() < 1e-5


def test_scalar_square_linearization_error_constant():
    # A(x) = x^2 has ||A(x) - A(y) - A'(y)(x - y)|| = (x - y)^2 exactly,
    # so the quadratic-error constant is 1
    rng = np.random.default_rng(31)
    for _ in range(100):
        x, y = rng.uniform(-3, 3, size=2)
        lin = y * y + 2 * y * (x - y)
        err = abs(x * x - lin)
        assert err == pytest.approx((x - y) ** 2, rel=1e-12, abs=1e-14)


# -- linearize_subproblem on the physical model -------------------------


@pytest.fixture(scope="module")
def eit_setup():
    mesh = build_disc_mesh(0.1, 8, 0.25, 0.022)
    model = CEMModel(mesh)
    geo = element_geometry(mesh)
    tv = build_tv_operator(mesh, geo)
    scheme = TvScheme(tv_op=tv, alpha=100.0, box=BoxSet(1e-4, 1e12))
    rng = np.random.default_rng(2)
    sigma_star = 0.028 * np.exp(0.2 * rng.standard_normal(mesh.n_nodes))
    measured = forward_solve(model, sigma_star).currents
    return model, scheme, measured


def test_linearized_misfit_matches_true_misfit_at_anchor(eit_setup):
    model, scheme, measured = eit_setup
    z = np.full(model.n_sigma_nodes, 0.03)
    tb, lin = linearize_subproblem(
        model, scheme, z, 1e-10, measured=measured, weights=5e4
    )
    a = lin.residual
    lin_fit = tb.f1_value(tb.k1.value(z))
    assert lin_fit == pytest.approx(0.5 * float(a @ a), rel=1e-10)


def test_surrogate_equals_objective_at_anchor(eit_setup):
    model, scheme, measured = eit_setup
    problem = GaussNewtonProblem(model, measured, 5e4, scheme)
    z = np.full(model.n_sigma_nodes, 0.03)
    tb, _ = linearize_subproblem(
        model, scheme, z, 1e-10, measured=measured, weights=5e4
    )
    assert tb.objective(z) == pytest.approx(problem.objective(z), rel=1e-12)


def test_adjoint_probes_pass_on_assembled_blocks(eit_setup):
    model, scheme, measured = eit_setup
    z = np.full(model.n_sigma_nodes, 0.03)
    tb, _ = linearize_subproblem(
        model, scheme, z, 1e-10, measured=measured, weights=5e4
    )
    assert tb.check_adjoint(seed=4, probes=10, tol=1e-10)


# -- relaxation bound and linesearch ------------------------------------


def test_w_bound_error_term():
    inputs = ConvergenceBoundInputs(
        lin_error_const=1.0, misfit_sup=1.0, lin_radius=1e12,
        margin=0.5, j_initial=1.0 + 1e-12, f_lower=1.0,
    )
    assert estimate_w_bound(inputs, beta=1.0) == pytest.approx(0.25)


def test_w_bound_vanishing_error_constant():
    inputs = ConvergenceBoundInputs(
        lin_error_const=1e-12, misfit_sup=1.0, lin_radius=0.5,
        margin=0.1, j_initial=2.0, f_lower=0.0,
    )
    beta = 0.5
    expected = min(1.0, 0.5 / np.sqrt(2 * 2.0 / beta))
    assert estimate_w_bound(inputs, beta) == pytest.approx(expected)


def test_w_bound_never_exceeds_one():
    inputs = ConvergenceBoundInputs(
        lin_error_const=1e-9, misfit_sup=1e-9, lin_radius=1e9,
        margin=1e-3, j_initial=1.0, f_lower=0.99,
    )
    assert estimate_w_bound(inputs, beta=1.0) == 1.0


def test_w_bound_domain_errors():
    inputs = ConvergenceBoundInputs(
        lin_error_const=1.0, misfit_sup=1.0, lin_radius=1.0,
        margin=2.0, j_initial=1.0, f_lower=0.0,
    )
    with pytest.raises(DomainError):
        estimate_w_bound(inputs, beta=1.0)  # margin >= beta
    inputs2 = ConvergenceBoundInputs(
        lin_error_const=1.0, misfit_sup=1.0, lin_radius=1.0,
        margin=0.1, j_initial=0.0, f_lower=1.0,
    )
    with pytest.raises(DomainError):
        estimate_w_bound(inputs2, beta=1.0)  # nonpositive gap


def linesearch_state_linear(z, x_tilde, mat, data, beta=1.0):
    def obj(s):
        r = mat @ s - data
        return 0.5 * float(r @ r)

    return LinesearchState(
        z=z, x_tilde=x_tilde, j_z=obj(z),
        objective=obj,
        misfit_norm_sq=lambda s: float(np.sum((mat @ s - data) ** 2)),
        linear_norm_sq=lambda s: float(np.sum((mat @ s - data) ** 2)),
        beta=beta,
    )


def test_linesearch_linear_map_accepts_largest():
    # a linear misfit has zero fractional linearization error, so the
    # largest grid value is admissible
    rng = np.random.default_rng(33)
    mat = rng.standard_normal((5, 3))
    data = rng.standard_normal(5)
    z = np.zeros(3)
    x_tilde = np.linalg.lstsq(mat, data, rcond=None)[0]
    state = linesearch_state_linear(z, x_tilde, mat, data)
    res = relaxation_linesearch(
        "fractional-error", (0.25, 0.5, 1.0), state, fallback_w=0.1
    )
    assert res.accepted and res.w == 1.0


def test_linesearch_descent_check_selects_decreasing_w():
    # objective decreases only for the smallest candidate
    z = np.array([0.0])
    x_tilde = np.array([1.0])

    def obj(s):
        v = s[0]
        return (v - 0.2) ** 2  # decreases from z only while v <= 0.4

    state = LinesearchState(
        z=z, x_tilde=x_tilde, j_z=obj(z),
        objective=obj,
        misfit_norm_sq=lambda s: 0.0,
        linear_norm_sq=lambda s: 0.0,
        beta=1e-8,
        eps=1e-8,
    )
    res = relaxation_linesearch(
        "descent-check", (1.0, 0.75, 0.5, 0.25), state, fallback_w=0.75
    )
    assert res.accepted and res.w == 0.25


def test_linesearch_degenerate_grid_fallback():
    z = np.array([0.0])
    x_tilde = np.array([1.0])

    def obj_increasing(s):
        return float(s[0])  # any step increases J... backwards

    state = LinesearchState(
        z=z, x_tilde=x_tilde, j_z=0.0,
        objective=lambda s: 1.0 + float(s[0]),
        misfit_norm_sq=lambda s: 0.0,
        linear_norm_sq=lambda s: 0.0,
        beta=1e-8,
        eps=1e-8,
    )
    res = relaxation_linesearch(
        "descent-check", (0.6,), state, fallback_w=0.6
    )
    assert not res.accepted and res.w == 0.6

    ok_state = LinesearchState(
        z=z, x_tilde=x_tilde, j_z=1.0,
        objective=lambda s: 0.0,
        misfit_norm_sq=lambda s: 0.0,
        linear_norm_sq=lambda s: 0.0,
        beta=1e-8,
        eps=1e-8,
    )
    res = relaxation_linesearch("descent-check", (0.6,), ok_state, fallback_w=0.6)
    assert res.accepted and res.w == 0.6


def test_linesearch_rejects_unknown_mode():
    state = LinesearchState(
        z=np.zeros(1), x_tilde=np.ones(1), j_z=0.0,
        objective=lambda s: 0.0, misfit_norm_sq=lambda s: 0.0,
        linear_norm_sq=lambda s: 0.0, beta=1.0,
    )
    with pytest.raises(DomainError):
        relaxation_linesearch("bogus", (1.0,), state, fallback_w=1.0)


# -- stopping rules ------------------------------------------------------


def js_from_deltas(deltas, j0=1000.0):
    js = [j0]
    for d in deltas:
        js.append(js[-1] - d)
    return js


def test_stagnation_never_triggers_on_large_decreases():
    js = js_from_deltas([10.0] * 10)
    assert stagnation_stop(js).kind == "continue"


def test_stagnation_confirmed_stop_discards_lookahead():
    js = js_from_deltas([10.0] * 8 + [0.4, 0.3, 0.2])
    decision = stagnation_stop(js)
    assert decision.kind == "stop"
    assert decision.index == 9


def test_stagnation_lookahead_rescue():
    js = js_from_deltas([10.0] * 8 + [0.4, 0.7, 10.0])
    assert stagnation_stop(js).kind == "continue"


def test_stagnation_tentative_waits_for_lookahead():
    js = js_from_deltas([10.0] * 8 + [0.4])
    decision = stagnation_stop(js)
    assert decision.kind == "tentative"
    assert decision.index == 9
    js = js_from_deltas([10.0] * 8 + [0.4, 0.3])
    assert stagnation_stop(js).kind == "tentative"


def test_stagnation_not_active_before_activation():
    js = js_from_deltas([0.1] * 7)
    assert stagnation_stop(js).kind == "continue"


def test_stagnation_trigger_at_activation_means_ten_iterates():
    js = js_from_deltas([10.0] * 7 + [0.1, 0.2, 0.3])
    decision = stagnation_stop(js)
    assert decision.kind == "stop"
    assert decision.index == 8
    # ten computed iterates: trigger at 8 plus two lookahead


def test_stagnation_second_trigger_after_rescue():
    js = js_from_deltas([10.0] * 8 + [0.4, 0.7, 0.1, 0.2, 0.3])
    decision = stagnation_stop(js)
    assert decision.kind == "stop"
    assert decision.index == 11


def test_stagnation_negative_deltas_count_as_stalls():
    js = js_from_deltas([10.0] * 8 + [-5.0, 0.1, 0.1])
    decision = stagnation_stop(js)
    assert decision.kind == "stop" and decision.index == 9


def test_residual_stop_rule():
    assert residual_stop(0.0, 1.0, 0.5)
    assert not residual_stop(1e-9, 1.0, 0.0)
    assert residual_stop(0.49, 1.0, 0.5)
    assert not residual_stop(0.51, 1.0, 0.5)
    with pytest.raises(DomainError):
        residual_stop(1.0, 1.0, -0.1)


def test_residual_stop_geometric_sequence():
    # residual halves each round while the step stays near 1: the first
    # accepted index matches the closed form
    rho = 0.01
    k = 0
    e = 1.0
    while not residual_stop(e, 1.0, rho):
        e *= 0.5
        k += 1
    assert k == int(np.ceil(np.log2(1.0 / rho)))


# -- Newton baseline -----------------------------------------------------


class QuadraticObjective:
    def __init__(self, h, c):
        self.h = h
        self.c = c

    def value(self, x):
        d = x - self.c
        return 0.5 * float(d @ self.h @ d)

    def value_gradient_hessian(self, x):
        d = x - self.c
        g = self.h @ d
        return 0.5 * float(d @ g), g, self.h


def test_newton_exact_on_quadratic():
    rng = np.random.default_rng(40)
    m = rng.standard_normal((4, 4))
    h = m @ m.T + 4 * np.eye(4)
    c = rng.standard_normal(4)
    obj = QuadraticObjective(h, c)
    res = newton_baseline(obj, np.zeros(4), max_outer=1)
    assert np.abs(res.z - c).max() < 1e-10
    assert res.trace.entries[0].w == 1.0  # full step accepted


def test_newton_armijo_descent_contract():
    # every accepted step decreases the objective
    def rosen_like(x):
        return (1 - x[0]) ** 2 + 5 * (x[1] - x[0] ** 2) ** 2

    class Obj:
        def value(self, x):
            return rosen_like(x)

        def value_gradient_hessian(self, x):
            f = rosen_like(x)
            g = np.array(
                [
                    -2 * (1 - x[0]) - 20 * (x[1] - x[0] ** 2) * x[0],
                    10 * (x[1] - x[0] ** 2),
                ]
            )
            h = np.array(
                [
                    [2 - 20 * x[1] + 60 * x[0] ** 2, -20 * x[0]],
                    [-20 * x[0], 10.0],
                ]
            )
            return f, g, h

    res = newton_baseline(Obj(), np.array([-1.0, 1.0]), max_outer=50,
                          stag_activation=10**9, grad_tol=1e-10)
    js = res.j_history
    assert all(js[i + 1] < js[i] for i in range(len(js) - 1))
    assert res.j_value < 1e-12


def test_newton_levenberg_rescues_indefinite_hessian():
    class Indefinite:
        def value(self, x):
            return float(np.sum(x**4) + 0.1 * np.sum(x**2))

        def value_gradient_hessian(self, x):
            g = 4 * x**3 + 0.2 * x
            h = np.diag(12 * x**2 + 0.2) - 10.0 * np.eye(x.size)
            return self.value(x), g, h

    res = newton_baseline(
        Indefinite(), np.array([1.0, -2.0]), max_outer=60,
        stag_activation=10**9, grad_tol=1e-8,
    )
    assert res.j_value < 0.5


# -- outer loop invariants on the physical problem -----------------------


@pytest.fixture(scope="module")
def small_run(eit_setup):
    model, scheme, measured = eit_setup
    # measured currents come from a rough random field; start homogeneous
    problem = GaussNewtonProblem(model, measured, 5e4, scheme)
    config = RipgnConfig(
        w=0.75, beta=1e-10, inner_iters=1500, max_outer=8,
        stag_activation=10**9, keep_subproblems=True,
    )
    z0 = np.full(model.n_sigma_nodes, 0.028)
    return problem, config, ripgn_solve(problem, config, z0)


def test_outer_objective_decreases(small_run):
    problem, config, res = small_run
    js = res.j_history
    assert all(js[i + 1] < js[i] for i in range(len(js) - 1))


def test_descent_inequality(small_run):
    # J(z) - J_lin(z+) >= (w beta / 2) ||x - z||^2 whenever the
    # surrogate decreased, with J_lin the linearized objective
    problem, config, res = small_run
    for k, entry in enumerate(res.trace.entries):
        sub = res.subproblems[k]
        z = sub["z"]
        z_next = res.iterates[k + 1]
        j_z = res.j_history[k]
        lin_fit = 0.5 * float(np.sum((sub["k1"] @ z_next - sub["b"]) ** 2))
        j_lin = lin_fit + problem.scheme.reg_value(z_next)
        lhs = j_z - j_lin
        rhs = 0.5 * entry.w * config.beta * entry.step_norm**2
        assert lhs >= rhs - 1e-10 * max(1.0, abs(j_z))


def test_interpolation_identity(small_run):
    problem, config, res = small_run
    for k, entry in enumerate(res.trace.entries):
        dz = res.iterates[k + 1] - res.iterates[k]
        assert np.linalg.norm(dz) == pytest.approx(
            entry.w * entry.step_norm, rel=1e-12
        )


def test_trace_length_matches_iterations(small_run):
    problem, config, res = small_run
    assert len(res.trace) == len(res.j_history) - 1


def test_residual_mode_extends_inner_solve():
    rng = np.random.default_rng(41)
    mat = rng.standard_normal((8, 5))
    data = rng.standard_normal(8)
    box = BoxSet(-5.0, 5.0)
    prob = LinearMapProblem(mat, data, box)
    base = RipgnConfig(w=1.0, beta=0.0, t=0.05, inner_iters=40, max_outer=1,
                       stag_activation=10**9)
    loose = ripgn_solve(prob, base, np.zeros(5))
    strict = ripgn_solve(
        prob,
        RipgnConfig(w=1.0, beta=0.0, t=0.05, inner_iters=40, max_outer=1,
                    stag_activation=10**9, residual_rho=1e-8,
                    residual_max_rounds=50),
        np.zeros(5),
    )
    oracle = np.linalg.lstsq(mat, data, rcond=None)[0]
    assert np.linalg.norm(strict.z - oracle) < np.linalg.norm(loose.z - oracle)
    assert np.linalg.norm(strict.z - oracle) < 1e-6


def test_linesearch_mode_inside_outer_loop():
    # linear misfit: zero fractional linearization error, so the
    # linesearch promotes every step to the largest grid weight
    rng = np.random.default_rng(42)
    mat = rng.standard_normal((6, 4))
    data = rng.standard_normal(6)
    box = BoxSet(-5.0, 5.0)
    prob = LinearMapProblem(mat, data, box)
    config = RipgnConfig(
        w=0.25, beta=1e-10, t=0.05, inner_iters=3000, max_outer=3,
        stag_activation=10**9, linesearch="fractional-error",
        w_grid=(1.0, 0.5, 0.25),
    )
    res = ripgn_solve(prob, config, np.zeros(4))
    assert all(e.w == 1.0 for e in res.trace.entries)


def test_fixed_point_reports_finite_convergence():
    box = BoxSet(-1.0, 1.0)
    prob = LinearMapProblem(np.eye(2), np.zeros(2), box)
    config = RipgnConfig(w=1.0, beta=1e-10, t=0.5, inner_iters=400,
                         max_outer=5)
    res = ripgn_solve(prob, config, np.zeros(2))
    assert res.status == "fixed_point"
    assert np.array_equal(res.z, np.zeros(2))
