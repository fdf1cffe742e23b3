"""Complete electrode model forward solver and measurement Jacobian.

The model is potential-driven: each excitation sets one electrode to a
fixed potential with all others grounded, and the measured quantities
are the electrode currents.  Discretization uses P1 elements for both
the potential and the conductivity on the same mesh.  Electrode
currents are represented in the zero-sum basis n_j = e_1 - e_{j+1}, so
the per-excitation current sum vanishes identically.

The assembled block system is

    [[D1, 0 ], [u     ]   [rhs_pot]
     [D2, D3]] [i_coef] = [rhs_cur]

with D1 the conductivity stiffness plus electrode contact terms, D2/D3
the current-basis coupling rows, and D3 = I + 1 1^T (2 on the diagonal,
1 off it).  The solver eliminates the lower block in closed form
(D3^{-1} = I - 1 1^T / L), which is algebraically identical to
factorizing the full block-triangular matrix but avoids the 1/zeta
cancellation when contact impedances are tiny.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DomainError, SolveError
from .mesh import ElementGeometry, Mesh2D, element_geometry

__all__ = [
    "CEMModel",
    "AssembledSystem",
    "ForwardSolution",
    "LinearizedMisfit",
    "assemble_system",
    "forward_solve",
    "jacobian",
    "misfit",
    "weighted_residual",
    "save_measurements",
    "load_measurements",
]

DEFAULT_CONTACT_IMPEDANCE = 1e-7  # ohm * m
DEFAULT_EXCITATION_VOLTS = 1.0


class CEMModel:
    """Electrode configuration plus precomputed mesh quantities.

    Everything that does not depend on the conductivity (electrode mass
    terms, current-basis blocks, right-hand sides, per-node stiffness
    derivative blocks) is assembled once here and shared read-only.
    """

    def __init__(
        self,
        mesh: Mesh2D,
        geometry: ElementGeometry | None = None,
        contact_impedances=DEFAULT_CONTACT_IMPEDANCE,
        excitation_volts: float = DEFAULT_EXCITATION_VOLTS,
    ):
        self.mesh = mesh
        self.geometry = geometry if geometry is not None else element_geometry(mesh)
        L = mesh.n_electrodes
        N = mesh.n_nodes
        zeta = np.broadcast_to(np.asarray(contact_impedances, dtype=float), (L,))
        if np.any(zeta <= 0):
            raise DomainError("contact impedances must be positive")
        self.contact_impedances = np.array(zeta)
        if excitation_volts == 0:
            raise DomainError("excitation potential must be nonzero")
        self.excitation_volts = float(excitation_volts)
        # excitation p sets electrode p to the drive potential, rest grounded
        self.excitation_potentials = excitation_volts * np.eye(L)
        self.n_sigma_nodes = N
        self.n_electrodes = L

        tri = mesh.triangles
        grads = self.geometry.gradients
        self._areas = self.geometry.areas
        # grad-grad products per element, for stiffness and its derivative
        self._gdot = np.einsum("tiv,tjv->tij", grads, grads)
        self._stiff_rows = np.repeat(tri, 3, axis=1).ravel()
        self._stiff_cols = np.tile(tri, (1, 3)).ravel()

        self._build_electrode_terms()
        self._build_current_blocks()
        self._build_sigma_patches()

    # -- construction helpers -------------------------------------------

    def _build_electrode_terms(self):
        mesh, geo = self.mesh, self.geometry
        N, L = self.n_sigma_nodes, self.n_electrodes
        rows, cols, vals = [], [], []
        m_vecs = np.zeros((L, N))
        abs_e = np.zeros(L)
        node_sets = []
        for k, (edges, lens) in enumerate(
            zip(mesh.electrode_edges, geo.electrode_edge_lengths)
        ):
            inv_z = 1.0 / self.contact_impedances[k]
            nodes_k = set()
            for (a, b), ell in zip(edges, lens):
                nodes_k.update((int(a), int(b)))
                rows.extend((a, b, a, b))
                cols.extend((a, b, b, a))
                vals.extend(
                    (inv_z * ell / 3, inv_z * ell / 3, inv_z * ell / 6, inv_z * ell / 6)
                )
                m_vecs[k, a] += ell / 2
                m_vecs[k, b] += ell / 2
                abs_e[k] += ell
            node_sets.append(np.array(sorted(nodes_k), dtype=int))
        self.electrode_mass = sp.coo_matrix(
            (vals, (rows, cols)), shape=(N, N)
        ).tocsr()
        self.electrode_integrals = m_vecs  # (L, N): integral of phi_i over e_k
        self.electrode_lengths = abs_e
        self.electrode_nodes = node_sets
        sel_rows = np.concatenate(
            [np.full(len(s), k) for k, s in enumerate(node_sets)]
        )
        sel_cols = np.concatenate(node_sets)
        self.electrode_selector = sp.coo_matrix(
            (np.ones(len(sel_cols)), (sel_rows, sel_cols)), shape=(L, N)
        ).tocsr()

    def _build_current_blocks(self):
        N, L = self.n_sigma_nodes, self.n_electrodes
        zeta = self.contact_impedances
        # current basis n_j = e_1 - e_{j+1}
        nmat = np.zeros((L, L - 1))
        nmat[0, :] = 1.0
        nmat[np.arange(1, L), np.arange(L - 1)] = -1.0
        self.current_basis = nmat
        d2 = -(
            self.electrode_integrals[0] / zeta[0]
            - self.electrode_integrals[1:] / zeta[1:, None]
        )
        self.d2 = sp.csr_matrix(d2)
        self.d3 = sp.csr_matrix(np.eye(L - 1) + np.ones((L - 1, L - 1)))
        self.extraction = sp.hstack(
            [sp.csr_matrix((L, N)), sp.csr_matrix(nmat)], format="csr"
        )
        U = self.excitation_potentials  # (L, L), column p = excitation p
        rhs_pot = (self.electrode_integrals / zeta[:, None]).T @ U  # (N, L)
        scaled = (self.electrode_lengths / zeta) * U.T  # (L, L): [p, k]
        rhs_cur = scaled[:, 1:].T - scaled[:, 0][None, :]
        self.rhs_pot = rhs_pot
        self.rhs_cur = rhs_cur  # (L-1, L)
        self.rhs_all = np.vstack([rhs_pot, rhs_cur])

    def _build_sigma_patches(self):
        """Per-node dense derivative blocks of the stiffness matrix.

        d(D1)/d(sigma_i) is supported on the nodes sharing an element
        with node i; it is stored as a dense block plus an index array,
        which is cheaper to apply than per-column sparse assembly.
        """
        tri = self.mesh.triangles
        N = self.n_sigma_nodes
        node_elems: list = [[] for _ in range(N)]
        for t, verts in enumerate(tri):
            for v in verts:
                node_elems[v].append(t)
        patches = []
        for i in range(N):
            elems = node_elems[i]
            patch = np.unique(tri[elems].ravel())
            loc = {int(v): a for a, v in enumerate(patch)}
            block = np.zeros((len(patch), len(patch)))
            for t in elems:
                idx = [loc[int(v)] for v in tri[t]]
                block[np.ix_(idx, idx)] += (self._areas[t] / 3.0) * self._gdot[t]
            patches.append((patch, block))
        self.sigma_patches = patches

    # -- sigma-dependent assembly ----------------------------------------

    def stiffness(self, sigma: np.ndarray) -> sp.csr_matrix:
        """Conductivity-weighted P1 stiffness matrix."""
        sigma = self._check_sigma(sigma)
        sbar = sigma[self.mesh.triangles].mean(axis=1)
        vals = (self._areas * sbar)[:, None, None] * self._gdot
        return sp.coo_matrix(
            (vals.ravel(), (self._stiff_rows, self._stiff_cols)),
            shape=(self.n_sigma_nodes, self.n_sigma_nodes),
        ).tocsr()

    def _check_sigma(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.n_sigma_nodes,):
            raise DomainError(
                f"sigma must have {self.n_sigma_nodes} entries, got {sigma.shape}"
            )
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise DomainError("sigma must be positive and finite")
        return sigma


@dataclass
class AssembledSystem:
    """One conductivity's assembled block system."""

    d: sp.csr_matrix          # (N+L-1, N+L-1) block matrix
    d1: sp.csr_matrix         # (N, N) stiffness + electrode contact terms
    d2: sp.csr_matrix
    d3: sp.csr_matrix
    rhs_all: np.ndarray       # (N+L-1, L), column p = excitation p
    extraction: sp.csr_matrix  # (L, N+L-1) current extraction map
    stiffness: sp.csr_matrix  # sigma-weighted stiffness alone


@dataclass
class ForwardSolution:
    """Potentials, current coefficients, and stacked currents.

    currents is the (L*L,) vector in excitation-major order:
    entry p*L + k is the current at electrode k under excitation p.
    """

    potentials: np.ndarray      # (N, L)
    current_coeffs: np.ndarray  # (L-1, L) coefficients in the zero-sum basis
    currents: np.ndarray        # (L*L,)
    sigma: np.ndarray
    system: AssembledSystem = field(repr=False)
    _lu: object = field(default=None, repr=False)

    @property
    def current_matrix(self) -> np.ndarray:
        """Currents as an (L, L) array, [k, p] = electrode k, excitation p."""
        L = self.current_coeffs.shape[1]
        return self.currents.reshape(L, L).T


def assemble_system(model: CEMModel, sigma) -> AssembledSystem:
    """Assemble the block matrix and right-hand sides for a conductivity."""
    S = model.stiffness(sigma)
    d1 = (S + model.electrode_mass).tocsr()
    d = sp.bmat([[d1, None], [model.d2, model.d3]], format="csr")
    return AssembledSystem(
        d=d,
        d1=d1,
        d2=model.d2,
        d3=model.d3,
        rhs_all=model.rhs_all,
        extraction=model.extraction,
        stiffness=S,
    )


def _factorize(d1: sp.csr_matrix):
    try:
        return splu(d1.tocsc())
    except RuntimeError as exc:  # singular factorization
        raise SolveError(f"potential system factorization failed: {exc}") from exc


def forward_solve(model: CEMModel, sigma, refine: int = 1) -> ForwardSolution:
    """Solve all excitations for one conductivity.

    One sparse LU factorization serves every excitation.  `refine`
    iterative-refinement sweeps (default one) keep the electrode
    current extraction accurate despite the stiff contact terms.

    Currents are extracted through the interior stiffness rows,
    I_k = -sum_{i in e_k} (S u)_i, which equals the contact-integral
    form exactly for the discrete solution but avoids multiplying
    rounding errors by 1/zeta.  The zero-sum basis coefficients then
    make Kirchhoff's law hold by construction.
    """
    system = assemble_system(model, sigma)
    lu = _factorize(system.d1)
    u = lu.solve(model.rhs_pot)
    for _ in range(max(0, refine)):
        resid = model.rhs_pot - system.d1 @ u
        u += lu.solve(resid)
    if not np.all(np.isfinite(u)):
        raise SolveError("potential solve produced non-finite values")

    raw = -(model.electrode_selector @ (system.stiffness @ u))  # (L, L): [k, p]
    shift = raw.sum(axis=0) / model.n_electrodes
    coeffs = shift[None, :] - raw[1:, :]
    currents_mat = model.current_basis @ coeffs
    currents = currents_mat.T.ravel()
    return ForwardSolution(
        potentials=u,
        current_coeffs=coeffs,
        currents=currents,
        sigma=np.array(sigma, dtype=float),
        system=system,
        _lu=lu,
    )


def jacobian(model: CEMModel, sigma, solution: ForwardSolution | None = None) -> np.ndarray:
    """Dense (L*L, N) derivative of the stacked currents.

    Row p*L + k holds d I_k^p / d sigma.  Uses the adjoint route: one
    multi-column solve against the extraction map, then per-node
    products with the precomputed dense stiffness-derivative blocks.
    """
    if solution is None:
        solution = forward_solve(model, sigma)
    elif not np.array_equal(solution.sigma, np.asarray(sigma, dtype=float)):
        raise DomainError("solution was computed for a different sigma")
    L = model.n_electrodes
    lu = solution._lu if solution._lu is not None else _factorize(solution.system.d1)

    nmat_t = model.current_basis.T  # (L-1, L)
    x2 = nmat_t - nmat_t.sum(axis=0)[None, :] / L  # D3^{-T} applied in closed form
    rhs = -(model.d2.T @ x2)  # (N, L)
    x1 = lu.solve(rhs)
    resid = rhs - solution.system.d1 @ x1
    x1 += lu.solve(resid)

    u = solution.potentials
    jac = np.empty((L * L, model.n_sigma_nodes))
    for i, (patch, block) in enumerate(model.sigma_patches):
        m = x1[patch, :].T @ (block @ u[patch, :])  # (L, L): [k, p]
        jac[:, i] = -m.T.ravel()
    return jac


@dataclass
class LinearizedMisfit:
    """Weighted residual plus first-order model at one conductivity.

    residual: A = weights * (I(sigma) - measured).
    k1: weighted current Jacobian; the linearized residual at x is
        k1 @ x - offset, which equals A at x = sigma.
    """

    sigma: np.ndarray
    currents: np.ndarray
    residual: np.ndarray
    k1: np.ndarray
    offset: np.ndarray


def _check_weights(model: CEMModel, weights) -> np.ndarray:
    L2 = model.n_electrodes**2
    w = np.broadcast_to(np.asarray(weights, dtype=float), (L2,))
    if np.any(w <= 0):
        raise DomainError("measurement weights must be positive")
    return np.array(w)


def _check_measured(model: CEMModel, measured) -> np.ndarray:
    measured = np.asarray(measured, dtype=float)
    if measured.shape != (model.n_electrodes**2,):
        raise DomainError(
            f"need {model.n_electrodes ** 2} measurements, got {measured.shape}"
        )
    return measured


def weighted_residual(model: CEMModel, sigma, measured, weights) -> np.ndarray:
    """A(sigma) = weights * (I(sigma) - measured), without the Jacobian."""
    measured = _check_measured(model, measured)
    w = _check_weights(model, weights)
    sol = forward_solve(model, sigma)
    return w * (sol.currents - measured)


def misfit(model: CEMModel, sigma, measured, weights) -> LinearizedMisfit:
    """Weighted residual together with its linearization.

    Exposes k1 (weighted Jacobian) and the offset b with
    k1 @ sigma - b = A(sigma), so 0.5*||k1 x - b||^2 is the linearized
    data term anchored at sigma.
    """
    measured = _check_measured(model, measured)
    w = _check_weights(model, weights)
    sol = forward_solve(model, sigma)
    residual = w * (sol.currents - measured)
    k1 = w[:, None] * jacobian(model, sigma, sol)
    offset = k1 @ sol.sigma - residual
    return LinearizedMisfit(
        sigma=sol.sigma,
        currents=sol.currents,
        residual=residual,
        k1=k1,
        offset=offset,
    )


def save_measurements(path, currents: np.ndarray, n_electrodes: int) -> None:
    """One line per excitation, L whitespace-separated currents (A)."""
    mat = np.asarray(currents, dtype=float).reshape(n_electrodes, n_electrodes)
    with open(path, "w") as fh:
        for row in mat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_measurements(path) -> np.ndarray:
    """Read a measurement file; returns the stacked (L*L,) vector."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    mat = np.array(rows, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError(f"measurement file {path} is not square")
    return mat.ravel()
