"""Command-line entry points.

Subcommands:
  simulate    phantom -> dataset files (measurements + meshes)
  reconstruct dataset + scheme + solver -> reconstruction outputs
  sweep       grid over relaxation weights and solvers
  check       built-in invariant and oracle self-checks
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import RipgnError


def _cmd_simulate(args) -> int:
    from .forward import CEMModel, save_measurements
    from .harness import (
        _parse_inclusions,
        build_case_meshes,
        make_phantom,
        parse_config,
        simulate_measurements,
    )
    from .mesh import write_mesh

    cfg = parse_config(args.config)
    out = Path(args.output or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    inv_mesh, sim_mesh = build_case_meshes(cfg)
    sim_model = CEMModel(
        sim_mesh,
        contact_impedances=cfg["contact_impedance"],
        excitation_volts=cfg["excitation_volts"],
    )
    phantom = make_phantom(
        {"background": cfg["background"],
         "inclusions": _parse_inclusions(cfg["inclusions"])}
    )
    dataset = simulate_measurements(
        phantom, sim_model, inv_mesh, cfg["noise_rel"], cfg["seed"], cfg["la_diag"]
    )
    save_measurements(out / "measurements.txt", dataset.measurements,
                      sim_model.n_electrodes)
    write_mesh(sim_mesh, out / "simulation_mesh.txt")
    write_mesh(inv_mesh, out / "inversion_mesh.txt")
    print(f"wrote dataset (seed {cfg['seed']}, noise {cfg['noise_rel']}) to {out}")
    return 0


def _cmd_reconstruct(args) -> int:
    from .harness import run_case

    case = run_case(args.config, output_dir=args.output)
    for key, value in case.summary.items():
        print(f"{key} {value}")
    return case.exit_status


def _cmd_sweep(args) -> int:
    from .harness import parse_config, run_sweep

    cfg = parse_config(args.config)
    out = Path(args.output or cfg["output_dir"])
    results = run_sweep(cfg, output_dir=out)
    print((out / "sweep_summary.txt").read_text(), end="")
    return max(r.exit_status for r in results)


def _check(name, fn, failures):
    try:
        fn()
        print(f"PASS {name}")
    except Exception as exc:  # noqa: BLE001 - report and continue
        failures.append(name)
        print(f"FAIL {name}: {exc}")


def _cmd_check(args) -> int:
    """Fast self-checks of the numerical core."""
    from .forward import CEMModel, forward_solve, jacobian
    from .mesh import build_disc_mesh, element_geometry
    from .pdps import (
        LinearBlock,
        TwoBlockProblem,
        operator_norm,
        pdps_solve,
        step_lengths,
    )
    from .prox import (
        ProxGParams,
        dual_ball_projection,
        prox_box_quadratic,
        prox_conj_quadratic_fit,
    )
    from .regularizers import BoxSet, build_tv_operator, tv_value
    from .solver import stagnation_stop

    failures: list = []
    mesh = build_disc_mesh(0.1, 8, 0.3, 0.02)
    geo = element_geometry(mesh)
    model = CEMModel(mesh)
    rng = np.random.default_rng(1)
    sigma = 0.028 * np.exp(0.2 * rng.standard_normal(mesh.n_nodes))

    def check_affine():
        field = 3 * mesh.nodes[:, 0] - 2 * mesh.nodes[:, 1]
        g = np.einsum("tiv,ti->tv", geo.gradients, field[mesh.triangles])
        assert np.abs(g - [3.0, -2.0]).max() < 1e-10

    def check_kirchhoff():
        sol = forward_solve(model, sigma)
        mat = sol.current_matrix
        for p in range(model.n_electrodes):
            assert abs(mat[:, p].sum()) < 1e-12 * np.linalg.norm(mat[:, p])

    def check_reciprocity():
        mat = forward_solve(model, sigma).current_matrix
        assert np.abs(mat - mat.T).max() < 1e-8 * np.abs(mat).max()

    def check_jacobian():
        jac = jacobian(model, sigma)
        for _ in range(3):
            h = rng.standard_normal(mesh.n_nodes)
            h /= np.linalg.norm(h)
            eps = 1e-6 * np.linalg.norm(sigma)
            fd = (
                forward_solve(model, sigma + eps * h).currents
                - forward_solve(model, sigma - eps * h).currents
            ) / (2 * eps)
            ref = jac @ h
            assert np.linalg.norm(fd - ref) < 1e-5 * np.linalg.norm(ref)

    def check_prox():
        box = BoxSet(0.0, 10.0)
        params = ProxGParams(step=1.0, weight=1.0, anchor=np.zeros(1), box=box)
        assert abs(prox_box_quadratic(params, np.array([4.0]))[0] - 2.0) < 1e-12
        y = prox_conj_quadratic_fit(0.5, np.array([1.0]), np.array([2.0]))
        assert abs(y[0] - 1.0) < 1e-12
        g = dual_ball_projection("group", 1.0, np.array([3.0, 4.0]))
        assert np.abs(g - [0.6, 0.8]).max() < 1e-12

    def check_pdps():
        n = 4
        c = np.arange(1.0, n + 1)
        prob = TwoBlockProblem(
            g_prox=lambda v, t: (v + t * c) / (1 + t),
            g_value=lambda x: 0.5 * float((x - c) @ (x - c)),
            k1=LinearBlock(np.eye(n)),
            f1_conj_prox=lambda y, s: prox_conj_quadratic_fit(s, np.zeros(n), y),
            f1_value=lambda y: 0.5 * float(y @ y),
            n_primal=n,
        )
        params = step_lengths(1.0, operator_norm(np.eye(n)), 1.0, 0.01)
        res = pdps_solve(prob, params, np.zeros(n), iters=3000)
        assert np.abs(res.x - c / 2).max() < 1e-6

    def check_tv():
        tv = build_tv_operator(mesh, geo)
        assert abs(tv_value(tv, mesh.nodes[:, 0]) - geo.total_area) < 1e-12

    def check_stagnation():
        js = [100.0]
        for d in [10.0] * 8 + [0.4, 0.3, 0.2]:
            js.append(js[-1] - d)
        dec = stagnation_stop(js)
        assert dec.kind == "stop" and dec.index == 9

    _check("p1-affine-exactness", check_affine, failures)
    _check("kirchhoff-current-sums", check_kirchhoff, failures)
    _check("reciprocity", check_reciprocity, failures)
    _check("jacobian-vs-finite-differences", check_jacobian, failures)
    _check("prox-closed-forms", check_prox, failures)
    _check("pdps-quadratic-toy", check_pdps, failures)
    _check("tv-affine-field", check_tv, failures)
    _check("stagnation-rule", check_stagnation, failures)
    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ripgn",
        description="Relaxed inexact proximal Gauss-Newton EIT reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a phantom dataset")
    p_sim.add_argument("config")
    p_sim.add_argument("--output", default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="run one reconstruction case")
    p_rec.add_argument("config")
    p_rec.add_argument("--output", default=None)
    p_rec.set_defaults(func=_cmd_reconstruct)

    p_sweep = sub.add_parser("sweep", help="sweep relaxation weights and solvers")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--output", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_check = sub.add_parser("check", help="run built-in self-checks")
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RipgnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
