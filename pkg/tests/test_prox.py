"""Oracle-backed tests for the proximal mappings.

Scalar proxes are checked against ternary search on the true objective
(convex in one variable, so the search is an independent exact oracle);
group projections against a dense sweep of the ball boundary; conjugate
proxes against the Moreau identity with hand-rolled primal proxes.
"""

import numpy as np
import pytest

from ripgn.errors import DomainError
from ripgn.prox import (
    ProxGParams,
    dual_ball_projection,
    prox_barrier_box_quadratic,
    prox_box_quadratic,
    prox_conj_quadratic_fit,
)
from ripgn.regularizers import Barrier, BoxSet


def scalar_objective(params: ProxGParams, x):
    bar = params.barrier

    def h(u):
        val = 0.5 * params.weight * (u - params.anchor[0]) ** 2
        val += 0.5 / params.step * (u - x) ** 2
        if bar is not None:
            val += 0.5 * bar.strength_min**2 * min(u - bar.threshold_min, 0.0) ** 2
            val += 0.5 * bar.strength_max**2 * max(u - bar.threshold_max, 0.0) ** 2
        return val

    return h


def ternary_minimize(h, lo, hi, iters=200):
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if h(m1) <= h(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def random_params(rng, with_barrier):
    t = 10.0 ** rng.uniform(-2, 2)
    beta = rng.choice([0.0, 10.0 ** rng.uniform(-3, 1)])
    z = rng.uniform(-3, 3)
    lo = rng.uniform(-4, 0)
    hi = lo + rng.uniform(0.5, 6)
    barrier = None
    if with_barrier:
        bmin = rng.uniform(-2, 1)
        bmax = bmin + rng.uniform(0.2, 3)
        barrier = Barrier(
            strength_min=rng.choice([0.0, rng.uniform(0.1, 5)]),
            strength_max=rng.choice([0.0, rng.uniform(0.1, 5)]),
            threshold_min=bmin,
            threshold_max=bmax,
        )
    return ProxGParams(
        step=t, weight=beta, anchor=np.array([z]), box=BoxSet(lo, hi),
        barrier=barrier,
    )


@pytest.mark.parametrize("with_barrier", [False, True])
def test_scalar_prox_against_ternary_oracle(with_barrier):
    rng = np.random.default_rng(11)
    fn = prox_barrier_box_quadratic if with_barrier else prox_box_quadratic
    for _ in range(100):
        params = random_params(rng, with_barrier)
        x = rng.uniform(-6, 6)
        got = fn(params, np.array([x]))[0]
        h = scalar_objective(params, x)
        ref = ternary_minimize(h, params.box.lower, params.box.upper)
        assert got == pytest.approx(ref, abs=1e-6)
        assert h(got) <= h(ref) + 1e-12


def test_box_prox_reduces_to_projection_at_zero_weight():
    params = ProxGParams(
        step=0.5, weight=0.0, anchor=np.array([9.0]), box=BoxSet(0.0, 1.0)
    )
    x = np.array([-2.0, 0.4, 7.0])
    assert np.allclose(prox_box_quadratic(params, x), [0.0, 0.4, 1.0])


def test_box_prox_table_value():
    params = ProxGParams(
        step=1.0, weight=1.0, anchor=np.array([0.0]), box=BoxSet(0.0, 10.0)
    )
    assert prox_box_quadratic(params, np.array([4.0]))[0] == pytest.approx(2.0)


def test_box_prox_fixed_point():
    rng = np.random.default_rng(12)
    for _ in range(20):
        t = 10.0 ** rng.uniform(-3, 3)
        beta = 10.0 ** rng.uniform(-3, 3)
        z = rng.uniform(0.1, 0.9)
        params = ProxGParams(
            step=t, weight=beta, anchor=np.array([z]), box=BoxSet(0.0, 1.0)
        )
        out = prox_box_quadratic(params, np.array([z]))[0]
        assert out == pytest.approx(z, rel=1e-12)


def test_barrier_prox_inside_matches_plain():
    bar = Barrier(strength_min=2.0, strength_max=3.0, threshold_min=-1.0,
                  threshold_max=1.0)
    with_bar = ProxGParams(
        step=0.7, weight=0.3, anchor=np.array([0.2]), box=BoxSet(-5.0, 5.0),
        barrier=bar,
    )
    plain = ProxGParams(
        step=0.7, weight=0.3, anchor=np.array([0.2]), box=BoxSet(-5.0, 5.0)
    )
    x = np.array([0.5])  # inside the thresholds
    assert prox_barrier_box_quadratic(with_bar, x)[0] == pytest.approx(
        prox_box_quadratic(plain, x)[0], rel=1e-14
    )


def test_barrier_prox_printed_value():
    bar = Barrier(strength_min=2.0, strength_max=0.0, threshold_min=1.0)
    params = ProxGParams(
        step=1.0, weight=0.0, anchor=np.array([0.0]), box=BoxSet(0.0, 10.0),
        barrier=bar,
    )
    # below-threshold branch: (l^2 thr + x/t) / (l^2 + 1/t) = 4/5
    assert prox_barrier_box_quadratic(params, np.array([0.0]))[0] == (
        pytest.approx(0.8, abs=1e-12)
    )


def test_barrier_prox_zero_strength_reduces_to_plain():
    bar = Barrier(strength_min=0.0, strength_max=0.0, threshold_min=1.0,
                  threshold_max=2.0)
    params = ProxGParams(
        step=0.5, weight=0.2, anchor=np.array([0.4]), box=BoxSet(0.0, 10.0),
        barrier=bar,
    )
    plain = ProxGParams(
        step=0.5, weight=0.2, anchor=np.array([0.4]), box=BoxSet(0.0, 10.0)
    )
    x = np.array([0.3])  # below threshold, but the barrier has no strength
    assert prox_barrier_box_quadratic(params, x)[0] == pytest.approx(
        prox_box_quadratic(plain, x)[0], rel=1e-14
    )


def test_prox_nonexpansive():
    rng = np.random.default_rng(13)
    for with_barrier in (False, True):
        fn = prox_barrier_box_quadratic if with_barrier else prox_box_quadratic
        for _ in range(100):
            params = random_params(rng, with_barrier)
            x, y = rng.uniform(-6, 6, size=2)
            px = fn(params, np.array([x]))[0]
            py = fn(params, np.array([y]))[0]
            assert abs(px - py) <= abs(x - y) + 1e-12


def test_prox_optimality_against_perturbations():
    rng = np.random.default_rng(14)
    for with_barrier in (False, True):
        fn = prox_barrier_box_quadratic if with_barrier else prox_box_quadratic
        for _ in range(10):
            params = random_params(rng, with_barrier)
            x = rng.uniform(-6, 6)
            got = fn(params, np.array([x]))[0]
            h = scalar_objective(params, x)
            base = h(got)
            perturbed = got + rng.uniform(-1e-3, 1e-3, size=1000)
            perturbed = np.clip(perturbed, params.box.lower, params.box.upper)
            values = np.array([h(u) for u in perturbed])
            assert base <= values.min() + 1e-12


def test_conj_quadratic_identity_limit():
    y = np.array([3.0, -1.0])
    out = prox_conj_quadratic_fit(1e-14, np.array([5.0, 5.0]), y)
    assert np.allclose(out, y, atol=1e-12)


def test_conj_quadratic_resolvent_inverse():
    rng = np.random.default_rng(15)
    for _ in range(20):
        s = 10.0 ** rng.uniform(-3, 2)
        b = rng.standard_normal(4)
        v = rng.standard_normal(4)
        y = (1 + s) * v + s * b
        assert np.allclose(prox_conj_quadratic_fit(s, b, y), v, rtol=1e-12)


def quad_prox(tau, b, v, weight=1.0):
    # prox of tau * (weight/2)||. - b||^2 at v
    return (v + tau * weight * b) / (1 + tau * weight)


@pytest.mark.parametrize("weight", [1.0, 2.0])
def test_conj_quadratic_moreau_identity(weight):
    rng = np.random.default_rng(16)
    for _ in range(100):
        s = 10.0 ** rng.uniform(-2, 2)
        b = rng.standard_normal(3)
        y = 5 * rng.standard_normal(3)
        lhs = prox_conj_quadratic_fit(s, b, y, weight=weight)
        rhs = y - s * quad_prox(1.0 / s, b, y / s, weight=weight)
        assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(y).max())


def group_shrink(alpha, tau, y):
    # prox of tau * alpha * ||.||_{2,1} with rows (i, i + n)
    n = y.size // 2
    g = np.stack([y[:n], y[n:]])
    norms = np.maximum(np.hypot(g[0], g[1]), 1e-300)
    scale = np.maximum(0.0, 1.0 - tau * alpha / norms)
    return np.concatenate([scale * g[0], scale * g[1]])


def test_dual_ball_group_inside_unchanged():
    y = np.array([0.1, 0.2, 0.05, -0.1])
    assert np.array_equal(dual_ball_projection("group", 1.0, y), y)


def test_dual_ball_group_radial():
    out = dual_ball_projection("group", 1.0, np.array([3.0, 4.0]))
    assert np.allclose(out, [0.6, 0.8], rtol=1e-14)


def test_dual_ball_group_against_boundary_sweep():
    # oracle: coarse sweep of the ball boundary, then ternary refinement
    # of the (locally convex) distance over the bracketing arc
    rng = np.random.default_rng(17)
    theta = np.linspace(0, 2 * np.pi, 4001)
    for _ in range(100):
        alpha = 10.0 ** rng.uniform(-2, 1)
        g = rng.standard_normal(2) * 3
        out = dual_ball_projection("group", alpha, np.array([g[0], g[1]]))
        if np.hypot(*g) <= alpha:
            assert np.allclose(out, g)
            continue

        def dist(th):
            return np.hypot(alpha * np.cos(th) - g[0], alpha * np.sin(th) - g[1])

        k = int(np.argmin(dist(theta)))
        lo, hi = theta[k] - 2e-3, theta[k] + 2e-3
        for _ in range(120):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if dist(m1) <= dist(m2):
                hi = m2
            else:
                lo = m1
        best_th = 0.5 * (lo + hi)
        best = alpha * np.array([np.cos(best_th), np.sin(best_th)])
        assert np.abs(out - best).max() < 1e-6 * max(1.0, alpha)


def test_dual_ball_l1_is_clip():
    y = np.array([-3.0, 0.2, 5.0])
    assert np.allclose(dual_ball_projection("l1", 1.0, y), [-1.0, 0.2, 1.0])


def test_dual_ball_zero_radius():
    y = np.array([1.0, -2.0, 3.0, 4.0])
    assert np.array_equal(dual_ball_projection("group", 0.0, y), np.zeros(4))


def test_dual_ball_moreau_identity():
    rng = np.random.default_rng(18)
    for _ in range(100):
        alpha = 10.0 ** rng.uniform(-2, 1)
        s = 10.0 ** rng.uniform(-2, 2)
        y = rng.standard_normal(6) * 4
        lhs = dual_ball_projection("group", alpha, y)
        rhs = y - s * group_shrink(alpha, 1.0 / s, y / s)
        assert np.abs(lhs - rhs).max() < 1e-10 * max(1.0, np.abs(y).max())


def test_dual_ball_nonexpansive():
    rng = np.random.default_rng(19)
    for _ in range(100):
        alpha = 10.0 ** rng.uniform(-2, 1)
        y1 = rng.standard_normal(6)
        y2 = rng.standard_normal(6)
        p1 = dual_ball_projection("group", alpha, y1)
        p2 = dual_ball_projection("group", alpha, y2)
        assert np.linalg.norm(p1 - p2) <= np.linalg.norm(y1 - y2) + 1e-12


def test_bad_arguments_rejected():
    with pytest.raises(DomainError):
        dual_ball_projection("banana", 1.0, np.zeros(2))
    with pytest.raises(DomainError):
        dual_ball_projection("group", -1.0, np.zeros(2))
    with pytest.raises(DomainError):
        ProxGParams(step=0.0, weight=1.0, anchor=np.zeros(1),
                    box=BoxSet(0.0, 1.0))
    with pytest.raises(DomainError):
        prox_conj_quadratic_fit(-1.0, np.zeros(1), np.zeros(1))
    params = ProxGParams(step=1.0, weight=0.0, anchor=np.zeros(1),
                         box=BoxSet(0.0, 1.0))
    with pytest.raises(DomainError):
        prox_barrier_box_quadratic(params, np.zeros(1))
