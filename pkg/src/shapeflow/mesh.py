"""Triangulation of a :class:`~shapeflow.geometry.Domain` with P2 node layout.

Meshes carry quadratic (isoparametric) geometry: the midpoint node of every
boundary edge sits on the curve, interior edge midpoints are straight.
Meshes are immutable; :func:`refine` and :func:`deform_mesh` return new ones.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import triangle as tr

from .geometry import INFLOW, LABELS, WALL, DeformationField, Domain

log = logging.getLogger(__name__)

LABEL_CODE = {INFLOW: 0, WALL: 1}


class MeshError(RuntimeError):
    pass


def mesh_cache(mesh: "TriMesh", name: str) -> dict:
    """Per-mesh cache dict stored on the instance, so it dies with the mesh."""
    return mesh.__dict__.setdefault("_cache_" + name, {})


def clear_mesh_cache(mesh: "TriMesh") -> None:
    for key in [k for k in mesh.__dict__ if k.startswith("_cache_")]:
        del mesh.__dict__[key]


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangle mesh with P2 nodes.

    ``bedges[i] = (a, b)`` is oriented with the domain on the left, so the
    arclength tag increases from ``bs0[i]`` at ``a`` to ``bs1[i]`` at ``b``
    (``bs1`` is unwrapped and may exceed the loop length).
    """

    nodes: np.ndarray  # (nv + ne, 2) P2 node coordinates
    triangles: np.ndarray  # (nt, 3) vertex ids, counterclockwise
    bedges: np.ndarray  # (nb, 2) oriented boundary vertex pairs
    bloop: np.ndarray
    bs0: np.ndarray
    bs1: np.ndarray
    blabel: np.ndarray  # 0 inflow, 1 wall
    nv: int
    level: int = 0
    domain: Domain | None = None
    reference: "TriMesh | None" = field(default=None, repr=False)

    # topology ---------------------------------------------------------------
    @cached_property
    def _edge_data(self):
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(pairs, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        tri_edges = inv.reshape(3, -1).T
        return edges, tri_edges

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """Edge ids of local edges (v0,v1), (v1,v2), (v2,v0)."""
        return self._edge_data[1]

    @cached_property
    def bedge_ids(self) -> np.ndarray:
        edges = self.edges
        lookup = {tuple(e): i for i, e in enumerate(edges)}
        return np.array([lookup[tuple(sorted(e))] for e in self.bedges.tolist()], dtype=int)

    @property
    def vertices(self) -> np.ndarray:
        return self.nodes[: self.nv]

    @property
    def ndof(self) -> int:
        return len(self.nodes)

    @property
    def cells(self) -> np.ndarray:
        """(nt, 6) P2 dofs per triangle: three vertices then three edges."""
        return np.hstack([self.triangles, self.nv + self.tri_edges])

    @cached_property
    def bdofs(self) -> np.ndarray:
        """(nb, 3) boundary dofs per boundary edge: start, end, midpoint."""
        return np.column_stack([self.bedges, self.nv + self.bedge_ids])

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        return np.unique(self.bdofs)

    @cached_property
    def boundary_dof_coords(self):
        """(loop, s) of every boundary dof, as two arrays indexed like ``boundary_dofs``."""
        loop = np.empty(self.ndof, dtype=int)
        s = np.empty(self.ndof)
        loop[self.bdofs[:, 0]], s[self.bdofs[:, 0]] = self.bloop, self.bs0
        loop[self.bdofs[:, 2]], s[self.bdofs[:, 2]] = self.bloop, 0.5 * (self.bs0 + self.bs1)
        d = self.boundary_dofs
        return loop[d], s[d]

    @property
    def root(self) -> "TriMesh":
        return self if self.reference is None else self.reference

    @property
    def is_deformed(self) -> bool:
        return self.reference is not None

    # measures ---------------------------------------------------------------
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices
        return np.hypot(*(p[self.edges[:, 0]] - p[self.edges[:, 1]]).T)

    @property
    def hmax(self) -> float:
        return float(self.edge_lengths().max())

    def check(self) -> None:
        """Raise :class:`MeshError` if the mesh is non-conforming or tangled."""
        counts = np.bincount(self.tri_edges.ravel(), minlength=len(self.edges))
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        bnd = np.flatnonzero(counts == 1)
        if not np.array_equal(np.sort(bnd), np.sort(self.bedge_ids)):
            raise MeshError("tagged boundary edges do not match topological boundary")
        bad = np.flatnonzero(element_min_jacobian(self) <= 0)
        if len(bad):
            raise MeshError(f"inverted triangle {bad[0]} (vertices {self.triangles[bad[0]].tolist()})")


_CHECK_PTS = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5], [1 / 3, 1 / 3],
                       [0.25, 0.25], [0.5, 0.25], [0.25, 0.5]])


def element_min_jacobian(mesh: TriMesh) -> np.ndarray:
    """Minimum Jacobian determinant of the quadratic element map over sample points."""
    from .fem import p2_shape

    _, dN = p2_shape(_CHECK_PTS)
    X = mesh.nodes[mesh.cells]  # (nt, 6, 2)
    J = np.einsum("tai,qaj->tqij", X, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return det.min(axis=1)


def _build(vertices, triangles, bnd, level, domain, midpoints=None) -> TriMesh:
    """Assemble a TriMesh; ``bnd`` rows are (a, b, loop, s0, s1, label)."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    p = vertices[triangles]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    bedges = np.array([[r[0], r[1]] for r in bnd], dtype=int)
    bloop = np.array([r[2] for r in bnd], dtype=int)
    bs0 = np.array([r[3] for r in bnd], dtype=float)
    bs1 = np.array([r[4] for r in bnd], dtype=float)
    blabel = np.array([r[5] for r in bnd], dtype=int)
    nv = len(vertices)
    stub = TriMesh(vertices, triangles, bedges, bloop, bs0, bs1, blabel, nv, level, domain)
    edges = stub.edges
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    be = stub.bedge_ids
    if midpoints is not None:
        mids[be] = midpoints
    elif domain is not None:
        mids[be] = domain.point(bloop, 0.5 * (bs0 + bs1))
    nodes = np.vstack([vertices, mids])
    return TriMesh(nodes, triangles, bedges, bloop, bs0, bs1, blabel, nv, level, domain)


def _sample_loop(domain: Domain, loop: int, h: float):
    """Arclength samples on one loop with every arc endpoint included."""
    out = []
    for a in domain.loop_arcs(loop):
        n = max(int(np.ceil(a.length / h - 1e-9)), 3)
        out.append((a.start + a.length * np.arange(n) / n, np.full(n, LABEL_CODE[a.label])))
    s = np.concatenate([o[0] for o in out])
    lab = np.concatenate([o[1] for o in out])
    L = domain.curves[loop].length
    s = np.mod(s, L)
    order = np.argsort(s, kind="stable")
    return s[order], lab[order]


def _point_in_polygon(pts, poly):
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return np.sum(cond & (x < xc), axis=1) % 2 == 1


def _triangulate(verts, segs, area, holes=()):
    data = {"vertices": np.asarray(verts), "segments": np.asarray(segs)}
    if len(holes):
        data["holes"] = np.asarray(holes)
    out = tr.triangulate(data, f"pq28Ya{area:.12g}")
    return out["vertices"], out["triangles"]


def generate_mesh(domain: Domain, target_h: float, sectors: int | None = None) -> TriMesh:
    """Constrained Delaunay triangulation of ``domain`` with edge length about ``target_h``.

    For concentric circular loops that each carry a single arc, ``sectors=m``
    meshes one wedge and replicates it, giving an exactly m-fold symmetric
    mesh.  ``sectors=None`` picks 8 for such domains and 0 otherwise.
    """
    if not target_h > 0:
        raise MeshError("target_h must be positive")
    symmetric = _concentric(domain)
    if sectors is None:
        sectors = 8 if symmetric else 0
    if sectors:
        if not symmetric:
            raise MeshError("sector meshing needs concentric circles with one arc per loop")
        return _sector_mesh(domain, target_h, sectors)

    verts, segs, bnd, holes = [], [], [], []
    for k, c in enumerate(domain.curves):
        s, lab = _sample_loop(domain, k, target_h)
        if len(s) < 3:
            raise MeshError(f"loop {k} is degenerate")
        base = len(verts)
        pts = c.point(s)
        verts.extend(pts.tolist())
        n = len(s)
        for i in range(n):
            j = (i + 1) % n
            s1 = s[j] if j else s[0] + c.length
            segs.append((base + i, base + j))
            bnd.append((base + i, base + j, k, s[i], s1, lab[i]))
        if k > 0:
            centroid = pts.mean(axis=0)
            if _point_in_polygon(centroid[None, :], pts)[0]:
                holes.append(centroid)
    area = np.sqrt(3) / 4 * target_h**2
    V, T = _triangulate(verts, segs, area, holes)
    if len(V) == 0 or len(T) == 0:
        raise MeshError("triangulation failed (degenerate curve?)")
    T = _drop_outside(domain, V, T, len(verts))
    V, T, bnd = _compact(V, T, bnd)
    V[: len(verts)] = np.asarray(verts)
    mesh = _build(V, T, bnd, 0, domain)
    mesh.check()
    return mesh


def _drop_outside(domain, V, T, nb):
    cen = V[T].mean(axis=1)
    keep = np.ones(len(T), dtype=bool)
    for k, c in enumerate(domain.curves):
        poly = c.polygon(max(64, 4 * nb))
        inside = _point_in_polygon(cen, poly)
        keep &= inside if k == 0 else ~inside
    return T[keep]


def _compact(V, T, bnd):
    used = np.zeros(len(V), dtype=bool)
    used[T.ravel()] = True
    used[[r[0] for r in bnd]] = True
    new = -np.ones(len(V), dtype=int)
    new[used] = np.arange(used.sum())
    bnd = [(new[a], new[b], *rest) for a, b, *rest in bnd]
    return V[used].copy(), new[T], bnd


def _concentric(domain: Domain) -> bool:
    cs = domain.curves
    if not all(hasattr(c, "radius") for c in cs):
        return False
    if len({c.center for c in cs}) != 1:
        return False
    return all(len(domain.loop_arcs(k)) == 1 for k in range(len(cs)))


def _sector_mesh(domain: Domain, h: float, m: int) -> TriMesh:
    curves = sorted(range(len(domain.curves)), key=lambda k: -domain.curves[k].radius)
    cx, cy = domain.curves[0].center
    radii = [domain.curves[k].radius for k in curves]
    wedge = 2 * np.pi / m
    r_out = radii[0]
    r_in = radii[1] if len(radii) > 1 else 0.0
    n_out = max(int(np.ceil(r_out * wedge / h)), 2)
    n_in = max(int(np.ceil(r_in * wedge / h)), 2) if r_in > 0 else 0
    n_rad = max(int(np.ceil((r_out - r_in) / h)), 2)
    # wedge polygon: side A (angle 0) inward->outward, outer arc, side B outward->inward, inner arc
    rs = r_in + (r_out - r_in) * np.arange(n_rad + 1) / n_rad
    side_a = [(r, 0.0) for r in rs]
    outer = [(r_out, wedge * i / n_out) for i in range(1, n_out)]
    side_b = [(r, wedge) for r in rs[::-1]]
    inner = [(r_in, wedge * (n_in - i) / n_in) for i in range(1, n_in)] if n_in else []
    polar = side_a + outer + side_b + inner
    if r_in == 0:
        polar = polar[:-1]  # apex appears once
    P = np.array([[r * np.cos(a), r * np.sin(a)] for r, a in polar])
    nseg = len(P)
    segs = [(i, (i + 1) % nseg) for i in range(nseg)]
    area = np.sqrt(3) / 4 * h**2
    V, T = _triangulate(P, segs, area)
    na = len(side_a)
    side_b_idx = list(range(na + len(outer), na + len(outer) + len(side_b)))
    # sector j reuses side A of sector j+1 as its side B
    nloc = len(V)
    coords = []

    def add(pt):
        coords.append(pt)
        return len(coords) - 1

    glob = np.empty((m, nloc), dtype=int)
    apex = None
    for j in range(m):
        c, s = np.cos(j * wedge), np.sin(j * wedge)
        R = np.array([[c, -s], [s, c]])
        for i in range(nloc):
            if i in side_b_idx:
                continue
            if r_in == 0 and i == 0:
                if apex is None:
                    apex = add(np.array([cx, cy]))
                glob[j, i] = apex
                continue
            glob[j, i] = add(R @ V[i] + np.array([cx, cy]))
    for j in range(m):
        for pos, i in enumerate(side_b_idx):
            glob[j, i] = glob[(j + 1) % m, na - 1 - pos]
    coords = np.array(coords)
    tris = np.vstack([glob[j][T] for j in range(m)])

    bnd = []
    for k in range(len(domain.curves)):
        c = domain.curves[k]
        lab = LABEL_CODE[domain.loop_arcs(k)[0].label]
        r = c.radius
        if r == r_out:
            loc = [na - 1] + list(range(na, na + len(outer))) + [side_b_idx[0]]
        else:
            first = na + len(outer) + len(side_b)
            loc = [side_b_idx[-1]] + list(range(first, first + len(inner))) + [0]
        ring = []
        for j in range(m):
            ids = [glob[j, i] for i in loc]
            ring.extend(ids[:-1])
        ang = np.arctan2(coords[ring, 1] - cy, coords[ring, 0] - cx) % (2 * np.pi)
        s = r * ang if not c.reverse else np.mod(r * (2 * np.pi - ang), c.length)
        # order along traversal direction
        order = np.argsort(s, kind="stable")
        ring = np.array(ring)[order]
        s = s[order]
        s[np.isclose(s, c.length)] = 0.0
        order = np.argsort(s, kind="stable")
        ring, s = ring[order], s[order]
        coords[ring] = c.point(s)
        n = len(ring)
        for i in range(n):
            j = (i + 1) % n
            bnd.append((ring[i], ring[j], k, s[i], s[j] if j else c.length, lab))
    mesh = _build(coords, tris, bnd, 0, domain)
    mesh.check()
    return mesh


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement; new boundary vertices land on the curve."""
    nv = mesh.nv
    V = mesh.nodes.copy() if not mesh.is_deformed else None
    if V is None:
        raise MeshError("refine the reference mesh, then deform")
    t, te = mesh.triangles, mesh.tri_edges + nv
    a, b, c = t.T
    m0, m1, m2 = te.T
    T = np.vstack([
        np.column_stack([a, m0, m2]),
        np.column_stack([m0, b, m1]),
        np.column_stack([m2, m1, c]),
        np.column_stack([m0, m1, m2]),
    ])
    mid = mesh.bdofs[:, 2]
    smid = 0.5 * (mesh.bs0 + mesh.bs1)
    bnd = []
    for i in range(len(mesh.bedges)):
        (p, q), k, lab = mesh.bedges[i], mesh.bloop[i], mesh.blabel[i]
        bnd.append((p, mid[i], k, mesh.bs0[i], smid[i], lab))
        bnd.append((mid[i], q, k, smid[i], mesh.bs1[i], lab))
    mids = None
    if mesh.domain is None:
        # no curve: keep the old quadratic edge, new midpoints at xi = 1/4, 3/4
        X = mesh.nodes[mesh.bdofs]
        q1 = 0.375 * X[:, 0] - 0.125 * X[:, 1] + 0.75 * X[:, 2]
        q3 = -0.125 * X[:, 0] + 0.375 * X[:, 1] + 0.75 * X[:, 2]
        mids = np.empty((2 * len(X), 2))
        mids[0::2], mids[1::2] = q1, q3
    out = _build(V, T, bnd, mesh.level + 1, mesh.domain, midpoints=mids)
    out.check()
    return out


def build_mesh(domain: Domain, h0: float, level: int = 0, sectors: int | None = None) -> TriMesh:
    mesh = generate_mesh(domain, h0, sectors)
    for _ in range(level):
        mesh = refine(mesh)
    return mesh


# ---------------------------------------------------------------------------
# deformation
# ---------------------------------------------------------------------------


def harmonic_extension(mesh: TriMesh, field: DeformationField) -> np.ndarray:
    """(ndof, 2) componentwise discrete harmonic extension of ``V = v_n n``."""
    from .fem import LagrangeSpace

    if mesh.is_deformed:
        raise MeshError("extend on the reference mesh")
    space = LagrangeSpace.of(mesh)
    loop, s = mesh.boundary_dof_coords
    V = field.displacement(loop, s)
    out = np.zeros((mesh.ndof, 2))
    if field.is_zero:
        return out
    for i in range(2):
        out[:, i] = space.dirichlet_solve(V[:, i])
    return out


@dataclass(frozen=True, eq=False)
class DomainTransform:
    """Nodal displacement ``theta = t * ext`` on the P2 nodes of a reference mesh."""

    mesh: TriMesh
    extension: np.ndarray
    t: float

    @property
    def displacement(self) -> np.ndarray:
        return self.t * self.extension

    def norm_proxy(self) -> float:
        """Sampled sup |theta| plus sup |D theta| (Frobenius) over element quadrature points."""
        from .fem import LagrangeSpace

        return abs(self.t) * LagrangeSpace.of(self.mesh).vector_c1_proxy(self.extension)

    def t_max(self) -> float:
        """Largest |t| keeping the C^{0,1} surrogate below 0.5."""
        from .fem import LagrangeSpace

        p = LagrangeSpace.of(self.mesh).vector_c1_proxy(self.extension)
        return np.inf if p == 0 else 0.5 / p

    def admissible(self) -> bool:
        return self.norm_proxy() < 0.5


def deform_mesh(mesh: TriMesh, field: DeformationField, t: float, *, check_admissible: bool = True,
                extension: np.ndarray | None = None) -> TriMesh:
    """Move the mesh by ``Id + t V`` with ``V`` harmonically extended into the interior."""
    if mesh.is_deformed:
        raise MeshError("deform the reference mesh")
    ext = harmonic_extension(mesh, field) if extension is None else extension
    T = DomainTransform(mesh, ext, float(t))
    if check_admissible and not T.admissible():
        raise MeshError(f"t={t:g} not admissible: |theta|_C01 proxy {T.norm_proxy():.3g} >= 0.5")
    nodes = mesh.nodes + T.displacement
    out = TriMesh(nodes, mesh.triangles, mesh.bedges, mesh.bloop, mesh.bs0, mesh.bs1, mesh.blabel,
                  mesh.nv, mesh.level, mesh.domain, reference=mesh)
    bad = np.flatnonzero(element_min_jacobian(out) <= 0)
    if len(bad):
        raise MeshError(f"deformation tangles the mesh: inverted triangle {bad[0]} at t={t:g}")
    return out


# ---------------------------------------------------------------------------
# boundary quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WallQuadrature:
    """Gauss points on boundary edges with curve geometry at each point."""

    mesh: TriMesh
    edge: np.ndarray  # boundary-edge index
    xi: np.ndarray  # local coordinate in [0, 1] along the edge
    loop: np.ndarray
    s: np.ndarray
    weight: np.ndarray
    xy: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    label: str | None
    gauss: np.ndarray  # Gauss weight on [0, 1] of each point

    @property
    def tangent(self) -> np.ndarray:
        return np.column_stack([-self.normal[:, 1], self.normal[:, 0]])

    def __len__(self) -> int:
        return len(self.s)

    def total(self) -> float:
        return float(self.weight.sum())

    def integrate(self, values) -> float:
        return float(np.dot(self.weight, values))

    def compatible(self, other: "WallQuadrature") -> bool:
        return self is other or (
            len(self) == len(other) and np.array_equal(self.edge, other.edge) and np.array_equal(self.xi, other.xi)
        )


def edge_shape(xi):
    """Quadratic edge shape functions (start, end, midpoint) and derivatives."""
    xi = np.asarray(xi, dtype=float)
    N = np.stack([(1 - xi) * (1 - 2 * xi), xi * (2 * xi - 1), 4 * xi * (1 - xi)], axis=-1)
    dN = np.stack([4 * xi - 3, 4 * xi - 1, 4 - 8 * xi], axis=-1)
    return N, dN


def wall_quadrature(mesh: TriMesh, order: int = 4, label: str | None = WALL) -> WallQuadrature:
    """Gauss rule with ``order`` points per boundary edge on edges tagged ``label``
    (``None`` for the whole boundary).  Geometry is taken from the reference curve."""
    if not 2 <= order <= 6:
        raise ValueError("order must be between 2 and 6")
    ref = mesh.root
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1), 0.5 * w
    sel = np.arange(len(ref.bedges)) if label is None else np.flatnonzero(ref.blabel == LABEL_CODE[label])
    edge = np.repeat(sel, order)
    xi = np.tile(x, len(sel))
    ds = (ref.bs1 - ref.bs0)[edge]
    s = ref.bs0[edge] + xi * ds
    loop = ref.bloop[edge]
    weight = np.tile(w, len(sel)) * ds
    if ref.domain is not None:
        L = np.array([c.length for c in ref.domain.curves])[loop]
        s = np.mod(s, L)
        xy = ref.domain.point(loop, s)
        nrm = ref.domain.normal(loop, s)
        kappa = ref.domain.curvature(loop, s)
    else:
        X = ref.nodes[ref.bdofs[edge]]
        N, dN = edge_shape(xi)
        xy = np.einsum("qa,qai->qi", N, X)
        d = np.einsum("qa,qai->qi", dN, X)
        sp = np.hypot(d[:, 0], d[:, 1])
        nrm = np.column_stack([d[:, 1], -d[:, 0]]) / sp[:, None]
        weight = np.tile(w, len(sel)) * sp
        dd = 4 * X[:, 0] + 4 * X[:, 1] - 8 * X[:, 2]
        kappa = (d[:, 0] * dd[:, 1] - d[:, 1] * dd[:, 0]) / sp**3
    return WallQuadrature(mesh, edge, xi, loop, s, weight, xy, nrm, kappa, label, np.tile(w, len(sel)))
