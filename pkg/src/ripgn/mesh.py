"""Structured triangular meshes of a disc with boundary electrodes.

Meshes are built from concentric rings of nodes, so runs are fully
reproducible: no external generator, no randomness.  Electrode arc
endpoints always coincide with boundary nodes, which keeps boundary
integrals over each electrode exact per edge.  Node density is kept
roughly uniform by giving each ring a node count proportional to its
circumference (rounded to a multiple of the electrode count, so evenly
spaced electrode layouts produce rotationally symmetric meshes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError

TWO_PI = 2.0 * np.pi

__all__ = [
    "Mesh2D",
    "ElementGeometry",
    "build_disc_mesh",
    "element_geometry",
    "read_mesh",
    "write_mesh",
]


@dataclass
class Mesh2D:
    """Triangulated disc with electrode boundary segments.

    nodes: (N, 2) coordinates in meters.
    triangles: (T, 3) node indices, counterclockwise after validation.
    electrode_edges: per electrode, an (E_k, 2) array of boundary node
        pairs covering that electrode's arc.
    radius: disc radius in meters.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    electrode_edges: list
    radius: float

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def n_electrodes(self) -> int:
        return len(self.electrode_edges)

    def validate(self) -> "Mesh2D":
        """Check structural invariants, raising GeometryError on failure."""
        nodes = np.asarray(self.nodes, dtype=float)
        tri = np.asarray(self.triangles, dtype=int)
        n = nodes.shape[0]
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise GeometryError("nodes must be an (N, 2) array")
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise GeometryError("triangles must be a (T, 3) array")
        if tri.min(initial=0) < 0 or tri.max(initial=-1) >= n:
            raise GeometryError("triangle node index out of range")
        areas = _signed_areas(nodes, tri)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise GeometryError(
                f"triangle {bad} has non-positive area {areas[bad]:.3e}"
            )
        boundary = _boundary_edge_set(tri)
        seen = set()
        for k, edges in enumerate(self.electrode_edges):
            edges = np.asarray(edges, dtype=int)
            if edges.ndim != 2 or edges.shape[1] != 2:
                raise GeometryError(f"electrode {k} edges must be (E, 2)")
            for a, b in edges:
                if not (0 <= a < n and 0 <= b < n):
                    raise GeometryError(f"electrode {k} node index out of range")
                key = (min(a, b), max(a, b))
                if key in seen:
                    raise GeometryError(f"electrode edge {key} used twice")
                if key not in boundary:
                    raise GeometryError(
                        f"electrode {k} edge {key} is not a boundary edge"
                    )
                seen.add(key)
                for v in (a, b):
                    r = float(np.hypot(*nodes[v]))
                    if abs(r - self.radius) > 1e-9 * max(self.radius, 1.0):
                        raise GeometryError(
                            f"electrode node {v} not on the disc boundary"
                        )
        return self


@dataclass
class ElementGeometry:
    """P1 geometric quantities: areas, basis gradients, edge lengths.

    areas: (T,) element areas in m^2.
    gradients: (T, 3, 2) constant gradients of the three nodal basis
        functions on each element, in 1/m.
    electrode_edge_lengths: per electrode, (E_k,) edge lengths in m.
    """

    areas: np.ndarray
    gradients: np.ndarray
    electrode_edge_lengths: list

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def electrode_lengths(self) -> np.ndarray:
        """Total boundary length |e_k| per electrode."""
        return np.array([float(np.sum(ls)) for ls in self.electrode_edge_lengths])


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    return 0.5 * _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def _boundary_edge_set(triangles: np.ndarray) -> set:
    """Edges that belong to exactly one triangle."""
    count: dict = {}
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            count[key] = count.get(key, 0) + 1
    return {k for k, c in count.items() if c == 1}


def normalize_orientation(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip triangles so all signed areas are positive."""
    tri = np.array(triangles, dtype=int, copy=True)
    areas = _signed_areas(nodes, tri)
    flip = areas < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _next_angle(angles: np.ndarray, i: int) -> float:
    if i + 1 < len(angles):
        return angles[i + 1]
    return angles[0] + TWO_PI


def _stitch_rings(inner_ids, inner_ang, outer_ids, outer_ang) -> list:
    """Triangulate the annulus between two node rings.

    Both rings are ordered by increasing angle starting at angle 0.
    Advances whichever ring has the smaller next angle; produces
    len(inner) + len(outer) triangles.
    """
    na, nb = len(inner_ids), len(outer_ids)
    tris = []
    i = j = 0
    while i < na or j < nb:
        advance_outer = j < nb and (
            i == na or _next_angle(outer_ang, j) <= _next_angle(inner_ang, i)
        )
        if advance_outer:
            tris.append(
                (outer_ids[j], outer_ids[(j + 1) % nb], inner_ids[i % na])
            )
            j += 1
        else:
            tris.append(
                (inner_ids[i], outer_ids[j % nb], inner_ids[(i + 1) % na])
            )
            i += 1
    return tris


def _boundary_layout(n_electrodes: int, electrode_arc: float, n_arc: int, n_gap: int):
    """Boundary angles plus, per electrode, the local edge index pairs."""
    sector = TWO_PI / n_electrodes
    gap = sector - electrode_arc
    angles = []
    spans = []
    for k in range(n_electrodes):
        start = k * sector
        base = len(angles)
        for i in range(n_arc):
            angles.append(start + electrode_arc * i / n_arc)
        spans.append([(base + i, base + i + 1) for i in range(n_arc)])
        for i in range(n_gap):
            angles.append(start + electrode_arc + gap * i / n_gap)
    n_total = len(angles)
    # close the last electrode edge onto the wrapped node list
    spans = [
        [(a % n_total, b % n_total) for a, b in sp] for sp in spans
    ]
    return np.array(angles), spans


def build_disc_mesh(
    radius: float,
    n_electrodes: int,
    electrode_arc: float,
    target_h: float,
) -> Mesh2D:
    """Build a disc mesh with evenly spaced boundary electrodes.

    Parameters
    ----------
    radius : disc radius, m.
    n_electrodes : number of electrodes (>= 2), evenly spaced.
    electrode_arc : angular width of each electrode, rad.
    target_h : target edge length, m.
    """
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    if n_electrodes < 2:
        raise ConfigurationError("need at least 2 electrodes")
    if electrode_arc <= 0:
        raise ConfigurationError("electrode arc must be positive")
    if n_electrodes * electrode_arc >= TWO_PI:
        raise ConfigurationError(
            "electrode arcs cover the whole boundary; reduce arc or count"
        )
    if target_h <= 0:
        raise ConfigurationError("target_h must be positive")

    gap = TWO_PI / n_electrodes - electrode_arc
    n_arc = max(1, int(round(electrode_arc * radius / target_h)))
    n_gap = max(1, int(round(gap * radius / target_h)))
    bangles, spans = _boundary_layout(n_electrodes, electrode_arc, n_arc, n_gap)

    n_rings = max(1, int(round(radius / target_h)))
    sector = TWO_PI / n_electrodes
    sector_starts = np.arange(n_electrodes) * sector
    ring_angles = []
    for j in range(1, n_rings):
        r = radius * j / n_rings
        per_sector = max(1, int(round(TWO_PI * r / (target_h * n_electrodes))))
        # sector-relative offsets keep evenly spaced electrode layouts
        # exactly rotation symmetric, including stitching tie-breaks
        offsets = sector * np.arange(per_sector) / per_sector
        ring_angles.append((sector_starts[:, None] + offsets[None, :]).ravel())
    ring_angles.append(bangles)

    nodes = [np.zeros(2)]
    ring_ids = []
    for j, ang in enumerate(ring_angles, start=1):
        r = radius * j / n_rings
        start = len(nodes)
        for a in ang:
            nodes.append(np.array([r * np.cos(a), r * np.sin(a)]))
        ring_ids.append(np.arange(start, start + len(ang)))
    nodes = np.array(nodes)

    tris = []
    first = ring_ids[0]
    for i in range(len(first)):
        tris.append((0, first[i], first[(i + 1) % len(first)]))
    for j in range(len(ring_ids) - 1):
        tris.extend(
            _stitch_rings(
                ring_ids[j], ring_angles[j], ring_ids[j + 1], ring_angles[j + 1]
            )
        )
    triangles = normalize_orientation(nodes, np.array(tris, dtype=int))

    boundary_start = ring_ids[-1][0]
    electrode_edges = [
        np.array([(boundary_start + a, boundary_start + b) for a, b in sp], dtype=int)
        for sp in spans
    ]
    mesh = Mesh2D(
        nodes=nodes,
        triangles=triangles,
        electrode_edges=electrode_edges,
        radius=float(radius),
    )
    return mesh.validate()


def element_geometry(mesh: Mesh2D) -> ElementGeometry:
    """Areas, P1 basis gradients, and electrode edge lengths.

    On a triangle with vertices p0, p1, p2 the basis gradient of node i
    is the inward-rotated opposite edge divided by twice the area.
    Raises GeometryError on degenerate (zero-area) triangles.
    """
    nodes = np.asarray(mesh.nodes, dtype=float)
    tri = np.asarray(mesh.triangles, dtype=int)
    p = nodes[tri]  # (T, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    twice_area = _cross2(d1, d2)
    if np.any(np.abs(twice_area) < 1e-14 * max(mesh.radius, 1.0) ** 2):
        bad = int(np.argmin(np.abs(twice_area)))
        raise GeometryError(f"degenerate triangle {bad}")
    if np.any(twice_area < 0):
        raise GeometryError("triangles must be counterclockwise; run validate()")
    areas = 0.5 * twice_area

    grads = np.empty((tri.shape[0], 3, 2))
    for i in range(3):
        opp = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        # rotate edge by +90 degrees: (x, y) -> (-y, x)
        grads[:, i, 0] = -opp[:, 1]
        grads[:, i, 1] = opp[:, 0]
    grads /= twice_area[:, None, None]

    lengths = []
    for edges in mesh.electrode_edges:
        e = np.asarray(edges, dtype=int)
        seg = nodes[e[:, 1]] - nodes[e[:, 0]]
        lengths.append(np.hypot(seg[:, 0], seg[:, 1]))
    return ElementGeometry(
        areas=areas, gradients=grads, electrode_edge_lengths=lengths
    )


def write_mesh(mesh: Mesh2D, path) -> None:
    """Write the plain-text mesh format.

    Header "nodes N triangles T electrodes L", then N lines "x y",
    T lines "i j k" (0-based), then per electrode a block
    "electrode m: e" followed by e lines "a b".
    """
    lines = [
        f"nodes {mesh.n_nodes} triangles {mesh.n_elements} "
        f"electrodes {mesh.n_electrodes}"
    ]
    for x, y in mesh.nodes:
        lines.append(f"{float(x)!r} {float(y)!r}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    for m, edges in enumerate(mesh.electrode_edges):
        lines.append(f"electrode {m}: {len(edges)}")
        for a, b in edges:
            lines.append(f"{a} {b}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, radius: float | None = None) -> Mesh2D:
    """Read the plain-text mesh format written by write_mesh.

    The radius is recovered from the outermost node unless given.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos : pos + n]
        if len(out) != n:
            raise ConfigurationError(f"truncated mesh file {path}")
        pos += n
        return out

    hdr = take(6)
    if hdr[0] != "nodes" or hdr[2] != "triangles" or hdr[4] != "electrodes":
        raise ConfigurationError(f"bad mesh header in {path}")
    n, t, l = int(hdr[1]), int(hdr[3]), int(hdr[5])
    nodes = np.array([float(v) for v in take(2 * n)]).reshape(n, 2)
    triangles = np.array([int(v) for v in take(3 * t)], dtype=int).reshape(t, 3)
    electrode_edges: list = [None] * l
    for _ in range(l):
        word, m, e = take(3)
        if word != "electrode":
            raise ConfigurationError(f"expected electrode block in {path}")
        m = int(m.rstrip(":"))
        e = int(e)
        pairs = np.array([int(v) for v in take(2 * e)], dtype=int).reshape(e, 2)
        if not 0 <= m < l or electrode_edges[m] is not None:
            raise ConfigurationError(f"bad electrode index {m} in {path}")
        electrode_edges[m] = pairs
    if radius is None:
        radius = float(np.max(np.hypot(nodes[:, 0], nodes[:, 1])))
    mesh = Mesh2D(
        nodes=nodes,
        triangles=normalize_orientation(nodes, triangles),
        electrode_edges=electrode_edges,
        radius=radius,
    )
    return mesh.validate()
