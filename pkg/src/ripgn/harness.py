"""Experiment harness: phantoms, simulated measurements, metrics,
case orchestration, and file outputs.

A case is described by a flat key-value config file.  Measurements are
always simulated on a finer mesh than the one used for inversion, and
the reconstruction never touches the simulation mesh.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .forward import (
    CEMModel,
    forward_solve,
    load_measurements,
    save_measurements,
    weighted_residual,
)
from .mesh import Mesh2D, build_disc_mesh, element_geometry, read_mesh, write_mesh
from .pdps import TwoBlockProblem, nlpdps_solve, operator_norm, step_lengths
from .prox import prox_conj_quadratic_fit
from .regularizers import Barrier, BoxSet, build_smoothness_prior, build_tv_operator
from .schemes import (
    SCHEME_NAMES,
    SmoothedTvScheme,
    SmoothScheme,
    TvScheme,
    g_prox_factory,
    g_value_factory,
)
from .solver import (
    GaussNewtonProblem,
    NewtonObjective,
    RipgnConfig,
    RipgnResult,
    newton_baseline,
    ripgn_solve,
)

__all__ = [
    "Phantom",
    "Dataset",
    "make_phantom",
    "simulate_measurements",
    "apply_noise",
    "relative_error",
    "homogeneous_fit",
    "parse_config",
    "run_case",
    "run_sweep",
    "write_raster",
]

RNG_NAME = "numpy default_rng (PCG64)"

SOLVER_NAMES = ("ripgn", "gn", "newton", "nlpdps")


@dataclass(frozen=True)
class Phantom:
    """Piecewise-constant conductivity: background plus circular
    inclusions (center_x, center_y, radius, value)."""

    background: float
    inclusions: tuple = ()

    def __post_init__(self):
        if self.background <= 0:
            raise DomainError("background conductivity must be positive")
        for cx, cy, r, v in self.inclusions:
            if v <= 0:
                raise DomainError("inclusion conductivity must be positive")
            if r < 0:
                raise DomainError("inclusion radius must be nonnegative")

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.full(pts.shape[0], self.background)
        for cx, cy, r, v in self.inclusions:
            inside = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 < r * r
            vals[inside] = v
        return vals

    def on_mesh(self, mesh: Mesh2D) -> np.ndarray:
        return self(mesh.nodes)


def make_phantom(spec) -> Phantom:
    """Build a phantom from {'background': float, 'inclusions': [...]}.

    Each inclusion is (cx, cy, radius, value).
    """
    if isinstance(spec, Phantom):
        return spec
    background = float(spec["background"])
    inclusions = tuple(
        tuple(float(v) for v in inc) for inc in spec.get("inclusions", ())
    )
    return Phantom(background=background, inclusions=inclusions)


@dataclass
class Dataset:
    """Simulated measurements plus the meshes on either side.

    The simulation mesh must be strictly finer than the inversion mesh
    so reconstructions cannot commit the inverse crime.
    """

    sim_mesh: Mesh2D
    inv_mesh: Mesh2D
    measurements: np.ndarray
    noise_rel: float
    seed: int
    la_diag: float
    clean_currents: np.ndarray = None
    sigma_hom: float | None = None
    rng_name: str = RNG_NAME

    def __post_init__(self):
        if self.sim_mesh.n_nodes <= self.inv_mesh.n_nodes:
            raise ConfigurationError(
                "simulation mesh must have more nodes than the inversion mesh"
            )


def apply_noise(currents: np.ndarray, noise_rel: float, rng) -> np.ndarray:
    """Additive Gaussian noise with per-entry std noise_rel * |I_i|."""
    if noise_rel < 0:
        raise DomainError("noise level must be nonnegative")
    currents = np.asarray(currents, dtype=float)
    if noise_rel == 0:
        return currents.copy()
    return currents + noise_rel * np.abs(currents) * rng.standard_normal(
        currents.size
    )


def simulate_measurements(
    phantom: Phantom,
    sim_model: CEMModel,
    inv_mesh: Mesh2D,
    noise_rel: float,
    seed: int,
    la_diag: float,
) -> Dataset:
    """Forward-solve the phantom on the fine mesh and add noise.

    Deterministic for a given seed.
    """
    sigma = phantom.on_mesh(sim_model.mesh)
    sol = forward_solve(sim_model, sigma)
    rng = np.random.default_rng(seed)
    measured = apply_noise(sol.currents, noise_rel, rng)
    return Dataset(
        sim_mesh=sim_model.mesh,
        inv_mesh=inv_mesh,
        measurements=measured,
        noise_rel=noise_rel,
        seed=seed,
        la_diag=la_diag,
        clean_currents=sol.currents,
    )


def relative_error(estimate, truth) -> float:
    """Euclidean relative error in percent."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise DomainError("estimate and truth must have equal length")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise DomainError("truth vector must be nonzero")
    return 100.0 * float(np.linalg.norm(estimate - truth)) / denom


def homogeneous_fit(
    model: CEMModel,
    measured,
    la_diag,
    lo: float = 1e-4,
    hi: float = 10.0,
    grid: int = 40,
    refine_tol: float = 1e-4,
) -> tuple:
    """Constant conductivity minimizing the weighted data misfit.

    Coarse log-spaced scan followed by golden-section refinement on the
    log axis.  Returns (sigma_hom, misfit_value).
    """

    def jd(c):
        sigma = np.full(model.n_sigma_nodes, c)
        a = weighted_residual(model, sigma, measured, la_diag)
        return 0.5 * float(a @ a)

    logs = np.linspace(math.log(lo), math.log(hi), grid)
    vals = [jd(math.exp(t)) for t in logs]
    i = int(np.argmin(vals))
    a = logs[max(0, i - 1)]
    b = logs[min(grid - 1, i + 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = jd(math.exp(c)), jd(math.exp(d))
    while b - a > refine_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = jd(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = jd(math.exp(d))
    best = math.exp((a + b) / 2.0)
    return best, jd(best)


# -- configuration ------------------------------------------------------

DEFAULTS = {
    "scheme": "tv",
    "solver": "ripgn",
    "w": 0.75,
    "beta": 1e-10,
    "t": 1e-6,
    "delta": 0.01,
    "lambda": 1.0,
    "inner_iters": 6000,
    "max_outer": 60,
    "alpha": 1e4,
    "gamma": 1e-12,
    "la_diag": 5e4,
    "sigma_min": 1e-4,
    "sigma_max": 1e10,
    "l_min_scale": 100.0,
    "l_max_scale": 100.0,
    "v_min": 1e-8,
    "v_max": 1e12,
    "a": 1e-3,
    "b": 1e-4,
    "noise_rel": 0.005,
    "seed": 7,
    "radius": 0.12,
    "n_electrodes": 16,
    "electrode_width": 0.025,
    "h_inversion": 0.01,
    "h_simulation": 0.0065,
    "background": 0.028,
    "inclusions": "0.045 0.02 0.04 1e-3",
    "inner_refresh": 1,
    "linesearch": "off",
    "residual_rho": "",
    "nlpdps_iters": 0,          # 0: 20x the inner budget
    "nlpdps_trace_every": 50,
    "contact_impedance": 1e-7,
    "excitation_volts": 1.0,
    "inversion_mesh": "",
    "simulation_mesh": "",
    "measurements": "",
    "output_dir": "out",
    "sweep_w": "0.25 0.5 0.75",
    "sweep_solvers": "ripgn",
}

_FLOAT_KEYS = {
    "w", "beta", "t", "delta", "lambda", "alpha", "gamma", "la_diag",
    "sigma_min", "sigma_max", "l_min_scale", "l_max_scale", "v_min", "v_max",
    "a", "b", "noise_rel", "radius", "electrode_width", "h_inversion",
    "h_simulation", "background", "contact_impedance", "excitation_volts",
}
_INT_KEYS = {
    "inner_iters", "max_outer", "seed", "n_electrodes", "inner_refresh",
    "nlpdps_iters", "nlpdps_trace_every",
}


def parse_config(source) -> dict:
    """Parse a flat key-value config (file path or raw text) over defaults.

    Lines are "key value" or "key = value"; '#' starts a comment.
    Unknown keys raise a configuration error.
    """
    if isinstance(source, dict):
        raw = {str(k): str(v) for k, v in source.items()}
    else:
        path = Path(source)
        if path.exists():
            text = path.read_text()
        else:
            raise ConfigurationError(f"config file not found: {source}")
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ConfigurationError(
                        f"line {lineno}: expected 'key value', got {line!r}"
                    )
                key, value = parts
            raw[key.strip()] = value.strip()

    cfg = dict(DEFAULTS)
    explicit = raw.pop("_explicit", "")
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigurationError(f"unknown config key {key!r}")
        cfg[key] = value
    for key in _FLOAT_KEYS:
        cfg[key] = float(cfg[key])
    for key in _INT_KEYS:
        cfg[key] = int(float(cfg[key]))
    cfg["_explicit"] = " ".join(sorted(set(explicit.split()) | set(raw)))
    if cfg["scheme"] not in SCHEME_NAMES:
        raise ConfigurationError(
            f"unknown scheme {cfg['scheme']!r}; pick one of {SCHEME_NAMES}"
        )
    if cfg["solver"] not in SOLVER_NAMES:
        raise ConfigurationError(
            f"unknown solver {cfg['solver']!r}; pick one of {SOLVER_NAMES}"
        )
    return cfg


def _parse_inclusions(text: str) -> tuple:
    """Inclusions as 'cx cy r value [; cx cy r value ...]'."""
    items = []
    for chunk in str(text).split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = [float(v) for v in chunk.split()]
        if len(vals) != 4:
            raise ConfigurationError(
                f"inclusion needs 4 numbers (cx cy r value), got {chunk!r}"
            )
        items.append(tuple(vals))
    return tuple(items)


def build_case_meshes(cfg: dict) -> tuple:
    """(inversion mesh, simulation mesh) from paths or generator keys."""
    arc = cfg["electrode_width"] / cfg["radius"]
    if cfg["inversion_mesh"]:
        inv = read_mesh(cfg["inversion_mesh"])
    else:
        inv = build_disc_mesh(
            cfg["radius"], cfg["n_electrodes"], arc, cfg["h_inversion"]
        )
    if cfg["simulation_mesh"]:
        sim = read_mesh(cfg["simulation_mesh"])
    else:
        sim = build_disc_mesh(
            cfg["radius"], cfg["n_electrodes"], arc, cfg["h_simulation"]
        )
    return inv, sim


def build_scheme(cfg: dict, mesh: Mesh2D, geometry, sigma_hom: float, j_hom: float):
    """Instantiate the configured scheme; barrier strengths follow the
    first-iterate rule strength = scale * sqrt(2 J(sigma_hom))."""
    box = BoxSet(cfg["v_min"], cfg["v_max"])
    name = cfg["scheme"]
    if name == "tv":
        # the pure TV scheme has no barrier, so by default its lower box
        # bound takes over the positivity floor
        if "v_min" not in cfg.get("_explicit", "").split():
            box = BoxSet(max(cfg["v_min"], cfg["sigma_min"]), cfg["v_max"])
        tv_op = build_tv_operator(mesh, geometry)
        return TvScheme(tv_op=tv_op, alpha=cfg["alpha"], box=box)
    strength = math.sqrt(2.0 * j_hom)
    if name == "smooth":
        prior = build_smoothness_prior(mesh, cfg["a"], cfg["b"], sigma_hom)
        barrier = Barrier(
            strength_min=cfg["l_min_scale"] * strength,
            strength_max=0.0,
            threshold_min=cfg["sigma_min"],
        )
        return SmoothScheme(prior=prior, barrier=barrier, box=box)
    tv_op = build_tv_operator(mesh, geometry)
    barrier = Barrier(
        strength_min=cfg["l_min_scale"] * strength,
        strength_max=cfg["l_max_scale"] * strength,
        threshold_min=cfg["sigma_min"],
        threshold_max=cfg["sigma_max"],
    )
    return SmoothedTvScheme(
        tv_op=tv_op, alpha=cfg["alpha"], gamma=cfg["gamma"],
        barrier=barrier, box=box,
    )


def ripgn_config(cfg: dict, **overrides) -> RipgnConfig:
    kw = dict(
        w=cfg["w"],
        beta=cfg["beta"],
        t=cfg["t"],
        delta=cfg["delta"],
        lam=cfg["lambda"],
        inner_iters=cfg["inner_iters"],
        max_outer=cfg["max_outer"],
        linesearch=cfg["linesearch"],
        jacobian_refresh=cfg["inner_refresh"],
        residual_rho=float(cfg["residual_rho"]) if cfg["residual_rho"] else None,
    )
    kw.update(overrides)
    return RipgnConfig(**kw)


class _WeightedCurrentsBlock:
    """Nonlinear block sigma -> weights * I(sigma) for the full-problem
    splitting baseline.

    The over-relaxed dual-step point 2 x+ - x can leave the positive
    cone even though every primal iterate stays inside the box, so the
    measurement map is extended by clamping evaluation points to a
    positive floor.  Jacobians are only ever requested at primal
    iterates, which the prox keeps feasible.
    """

    is_linear = False

    def __init__(self, model: CEMModel, weights, floor: float = 1e-8):
        self.model = model
        self.weights = np.broadcast_to(
            np.asarray(weights, dtype=float), (model.n_electrodes**2,)
        )
        self.floor = floor

    @property
    def shape(self):
        return (self.model.n_electrodes**2, self.model.n_sigma_nodes)

    def value(self, x):
        x = np.maximum(x, self.floor)
        return self.weights * forward_solve(self.model, x).currents

    def jacobian(self, x):
        from .forward import jacobian as fwd_jacobian
        from .pdps import LinearBlock

        x = np.maximum(x, self.floor)
        return LinearBlock(self.weights[:, None] * fwd_jacobian(self.model, x))


def nlpdps_baseline(
    problem: GaussNewtonProblem, cfg: dict, sigma0: np.ndarray
) -> RipgnResult:
    """Solve the full nonsmooth problem with the nonlinear splitting.

    The measurement map enters as a nonlinear block; barriers (if the
    scheme has them) stay in the componentwise block.  Runs a fixed
    iteration budget, by default twenty times the inner budget of one
    Gauss-Newton linearization.
    """
    from .solver import ConvergenceTrace

    scheme = problem.scheme
    model = problem.model
    k1 = _WeightedCurrentsBlock(model, problem.weights)
    target = problem.weights * np.asarray(problem.measured, dtype=float)
    z0 = np.asarray(sigma0, dtype=float)
    tb = TwoBlockProblem(
        g_prox=g_prox_factory(scheme, z0, 0.0),
        g_value=g_value_factory(scheme, z0, 0.0),
        k1=k1,
        f1_conj_prox=lambda y, s: prox_conj_quadratic_fit(s, target, y),
        f1_value=lambda y: 0.5 * float((y - target) @ (y - target)),
        k2=scheme.k2_block(z0),
        f2_conj_prox=scheme.f2_conj_prox(),
        f2_value=scheme.f2_value(),
        n_primal=z0.size,
    )
    l1 = operator_norm(k1.jacobian(z0), iters=60)
    k2 = scheme.k2_block(z0)
    if getattr(k2, "is_linear", False):
        l2_op = k2
    elif hasattr(k2, "norm_bound_operator"):
        l2_op = k2.norm_bound_operator()
    else:
        l2_op = k2.jacobian(z0)
    l2 = operator_norm(l2_op, iters=60)
    params = step_lengths(cfg["t"], l1, max(l2, 1e-300), cfg["delta"], cfg["lambda"])
    iters = cfg["nlpdps_iters"] or 20 * cfg["inner_iters"]
    tic = time.perf_counter()
    res = nlpdps_solve(
        tb, params, z0, iters=iters,
        refresh_every=cfg["inner_refresh"],
        trace_every=cfg["nlpdps_trace_every"],
        norm_check_every=0,
    )
    j_final = problem.objective(res.x)
    trace = ConvergenceTrace()
    trace.add(0, float(tb.objective(z0)), float(np.linalg.norm(res.x - z0)),
              float(tb.objective(res.x)), 1e3 * (time.perf_counter() - tic), 1.0)
    return RipgnResult(
        z=res.x,
        j_value=j_final,
        status="max_outer",
        trace=trace,
        j_history=[float(tb.objective(z0))]
        + [float(v) for v in res.objective_trace],
        iterations=iters,
        warnings=list(res.warnings),
        iterates=[z0, res.x],
    )


# -- outputs ------------------------------------------------------------

def resample_to_grid(mesh: Mesh2D, values, n: int = 256):
    """Linear interpolation of a nodal field on an n-by-n pixel grid
    over the disc's bounding box; NaN outside the mesh."""
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
    interp = LinearTriInterpolator(tri, np.asarray(values, dtype=float))
    r = mesh.radius
    axis = (np.arange(n) + 0.5) / n * (2 * r) - r
    xx, yy = np.meshgrid(axis, axis)
    out = interp(xx, yy)
    return np.where(out.mask, np.nan, out.data)


def write_raster(path, grid) -> None:
    """16-bit binary portable graymap; 0 marks pixels outside the mesh,
    data scales linearly onto 1..65535 with the range in a comment."""
    grid = np.asarray(grid, dtype=float)
    valid = np.isfinite(grid)
    if valid.any():
        lo = float(np.nanmin(grid))
        hi = float(np.nanmax(grid))
    else:
        lo = hi = 0.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.zeros(grid.shape, dtype=np.uint16)
    scaled[valid] = (1.0 + 65534.0 * (grid[valid] - lo) / span).astype(np.uint16)
    header = f"P5\n# range {lo!r} {hi!r} nodata 0\n{grid.shape[1]} {grid.shape[0]}\n65535\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(scaled.astype(">u2").tobytes())


def write_reconstruction_csv(path, mesh: Mesh2D, values) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,sigma\n")
        for (x, y), v in zip(mesh.nodes, np.asarray(values, dtype=float)):
            fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")


def _summary_lines(info: dict) -> list:
    return [f"{k} {v}" for k, v in info.items()]


@dataclass
class CaseResult:
    sigma: np.ndarray
    result: RipgnResult
    dataset: Dataset
    summary: dict
    output_dir: Path
    exit_status: int


def run_case(config, output_dir=None) -> CaseResult:
    """Run one configured case end to end and write its outputs.

    Outputs: reconstruction.csv, reconstruction.pgm, trace.txt,
    summary.txt (plus measurements.txt and the generated meshes when
    the case simulates its own data).  Exit status: 0 converged or
    stopped by stagnation, 1 finished with warnings, 2 diverged.
    """
    cfg = parse_config(config)
    out = Path(output_dir if output_dir is not None else cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    inv_mesh, sim_mesh = build_case_meshes(cfg)
    inv_geo = element_geometry(inv_mesh)
    inv_model = CEMModel(
        inv_mesh, inv_geo,
        contact_impedances=cfg["contact_impedance"],
        excitation_volts=cfg["excitation_volts"],
    )

    phantom = None
    sigma_true = None
    if cfg["measurements"]:
        measured = load_measurements(cfg["measurements"])
        if measured.size != inv_model.n_electrodes**2:
            raise ConfigurationError(
                "measurement file does not match the electrode count"
            )
        dataset = Dataset(
            sim_mesh=sim_mesh, inv_mesh=inv_mesh, measurements=measured,
            noise_rel=cfg["noise_rel"], seed=cfg["seed"],
            la_diag=cfg["la_diag"],
        )
    else:
        phantom = make_phantom(
            {"background": cfg["background"],
             "inclusions": _parse_inclusions(cfg["inclusions"])}
        )
        sim_model = CEMModel(
            sim_mesh,
            contact_impedances=cfg["contact_impedance"],
            excitation_volts=cfg["excitation_volts"],
        )
        dataset = simulate_measurements(
            phantom, sim_model, inv_mesh, cfg["noise_rel"], cfg["seed"],
            cfg["la_diag"],
        )
        sigma_true = phantom.on_mesh(inv_mesh)
        save_measurements(
            out / "measurements.txt", dataset.measurements, inv_model.n_electrodes
        )
        write_mesh(sim_mesh, out / "simulation_mesh.txt")
    write_mesh(inv_mesh, out / "inversion_mesh.txt")

    # reconstruction must only ever see the inversion mesh
    assert inv_model.mesh is dataset.inv_mesh

    sigma_hom, _ = homogeneous_fit(inv_model, dataset.measurements, cfg["la_diag"])
    dataset.sigma_hom = sigma_hom
    sigma1 = np.full(inv_model.n_sigma_nodes, sigma_hom)

    # barrier strengths reference the full objective at the homogeneous
    # start; barriers themselves contribute nothing there
    probe_scheme = build_scheme(cfg, inv_mesh, inv_geo, sigma_hom, j_hom=0.0)
    probe = GaussNewtonProblem(
        inv_model, dataset.measurements, cfg["la_diag"], probe_scheme
    )
    j_hom = probe.objective(sigma1)
    scheme = build_scheme(cfg, inv_mesh, inv_geo, sigma_hom, j_hom=j_hom)
    problem = GaussNewtonProblem(
        inv_model, dataset.measurements, cfg["la_diag"], scheme
    )

    solver = cfg["solver"]
    if solver == "ripgn":
        result = ripgn_solve(problem, ripgn_config(cfg), sigma1)
    elif solver == "gn":
        result = ripgn_solve(problem, ripgn_config(cfg, w=1.0, beta=0.0), sigma1)
    elif solver == "newton":
        objective = NewtonObjective(
            inv_model, dataset.measurements, cfg["la_diag"], scheme
        )
        result = newton_baseline(objective, sigma1, max_outer=cfg["max_outer"])
    else:
        result = nlpdps_baseline(problem, cfg, sigma1)

    wall_s = time.perf_counter() - t_start
    write_reconstruction_csv(out / "reconstruction.csv", inv_mesh, result.z)
    write_raster(out / "reconstruction.pgm", resample_to_grid(inv_mesh, result.z))
    result.trace.write(out / "trace.txt")

    summary = {
        "status": result.status,
        "scheme": cfg["scheme"],
        "solver": solver,
        "w": cfg["w"],
        "beta": cfg["beta"],
        "iterations": result.iterations,
        "j_initial": repr(float(result.j_history[0])),
        "j_final": repr(float(result.j_value)),
        "sigma_hom": repr(float(sigma_hom)),
        "seed": cfg["seed"],
        "rng": dataset.rng_name,
        "warnings": len(result.warnings),
        "wall_s": f"{wall_s:.3f}",
    }
    if sigma_true is not None:
        summary["re_percent"] = f"{relative_error(result.z, sigma_true):.4f}"
        summary["re_homogeneous"] = f"{relative_error(sigma1, sigma_true):.4f}"
    (out / "summary.txt").write_text("\n".join(_summary_lines(summary)) + "\n")

    if result.status == "diverged":
        exit_status = 2
    elif result.warnings or result.status == "safeguard_stop":
        exit_status = 1
    else:
        exit_status = 0
    return CaseResult(
        sigma=result.z,
        result=result,
        dataset=dataset,
        summary=summary,
        output_dir=out,
        exit_status=exit_status,
    )


def run_sweep(config, output_dir=None) -> list:
    """Grid of runs over relaxation weights and solvers.

    Writes each run into its own subdirectory plus a combined
    sweep_summary.txt table.
    """
    cfg = parse_config(config)
    out = Path(output_dir if output_dir is not None else cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ws = [float(v) for v in str(cfg["sweep_w"]).split()]
    solvers = str(cfg["sweep_solvers"]).split()
    rows = []
    results = []
    for solver in solvers:
        if solver not in SOLVER_NAMES:
            raise ConfigurationError(f"unknown solver {solver!r} in sweep")
        if solver == "ripgn":
            solver_ws = ws
        elif solver == "gn":
            solver_ws = [1.0]  # the plain preset is w = 1 by definition
        else:
            solver_ws = [cfg["w"]]
        for w in solver_ws:
            sub = dict(cfg)
            sub["solver"] = solver
            sub["w"] = w
            name = f"{solver}_w{w:g}"
            case = run_case(
                {k: v for k, v in sub.items()}, output_dir=out / name
            )
            results.append(case)
            row = dict(case.summary)
            row["run"] = name
            rows.append(row)
    cols = ["run", "solver", "w", "iterations", "j_final", "status", "wall_s"]
    if any("re_percent" in r for r in rows):
        cols.append("re_percent")
    lines = ["\t".join(cols)]
    for row in rows:
        lines.append("\t".join(str(row.get(c, "-")) for c in cols))
    (out / "sweep_summary.txt").write_text("\n".join(lines) + "\n")
    return results
