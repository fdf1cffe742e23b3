#!/usr/bin/env python3
"""Inner step-length study on the first linearized subproblem.

Scans the primal step t, solving the first subproblem of the desk TV
case to a fixed iteration budget with balanced dual steps, and compares
against the unbalanced single-step variant s1 = s2 = 1/(t L^2).  Prints
the final surrogate objective per setting.

Usage: python scripts/step_scan.py [iters]
"""

import sys

import numpy as np

from ripgn.forward import CEMModel
from ripgn.harness import (
    Phantom,
    build_scheme,
    homogeneous_fit,
    parse_config,
    simulate_measurements,
)
from ripgn.mesh import build_disc_mesh, element_geometry
from ripgn.pdps import PdpsStepParams, operator_norm, pdps_solve, step_lengths
from ripgn.solver import linearize_subproblem


def main():
    iters = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
    cfg = parse_config({"scheme": "tv", "alpha": "1e4"})
    arc = cfg["electrode_width"] / cfg["radius"]
    mesh_sim = build_disc_mesh(cfg["radius"], cfg["n_electrodes"], arc,
                               cfg["h_simulation"])
    mesh_inv = build_disc_mesh(cfg["radius"], cfg["n_electrodes"], arc,
                               cfg["h_inversion"])
    geo = element_geometry(mesh_inv)
    model_sim, model_inv = CEMModel(mesh_sim), CEMModel(mesh_inv)
    phantom = Phantom(background=cfg["background"],
                      inclusions=((0.045, 0.02, 0.04, 1e-3),))
    ds = simulate_measurements(phantom, model_sim, mesh_inv,
                               cfg["noise_rel"], cfg["seed"], cfg["la_diag"])
    sigma_hom, _ = homogeneous_fit(model_inv, ds.measurements, cfg["la_diag"])
    scheme = build_scheme(cfg, mesh_inv, geo, sigma_hom, j_hom=0.0)
    z = np.full(model_inv.n_sigma_nodes, sigma_hom)
    tb, _ = linearize_subproblem(model_inv, scheme, z, cfg["beta"],
                                 measured=ds.measurements,
                                 weights=cfg["la_diag"])
    l1 = operator_norm(tb.k1, iters=150)
    l2 = operator_norm(tb.k2, iters=150)
    print(f"L1={l1:.5g} L2={l2:.5g} surrogate at start {tb.objective(z):.6g}")
    print(f"{'t':>10} {'balanced':>14} {'unbalanced':>14}")
    for t in [1e-8, 1e-7, 1e-6, 1e-5, 1e-4]:
        bal = pdps_solve(tb, step_lengths(t, l1, l2, cfg["delta"]), z,
                         iters=iters, trace_every=0)
        unb = pdps_solve(tb, PdpsStepParams.unbalanced(t, max(l1, l2)), z,
                         iters=iters, trace_every=0)
        print(f"{t:>10.0e} {tb.objective(bal.x):>14.6g} "
              f"{tb.objective(unb.x):>14.6g}")


if __name__ == "__main__":
    main()
