"""Lagrange finite elements on triangle meshes with quadratic geometry.

Provides the Laplace-Dirichlet solve, the Ciarlet-Raviart mixed form of the
clamped biharmonic problem, and variationally consistent recovery of boundary
normal derivatives.  The element map is always the quadratic one carried by
the mesh nodes; the solution degree ``k`` may be 2 (isoparametric) or higher
(subparametric).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import roots_jacobi

from .mesh import TriMesh, WallQuadrature, edge_shape, mesh_cache


class SolverError(RuntimeError):
    pass


def triangle_rule(n: int = 4):
    """Collapsed Gauss rule on the reference triangle, exact to degree 2n-1."""
    xu, wu = np.polynomial.legendre.leggauss(n)
    xv, wv = roots_jacobi(n, 1.0, 0.0)
    u, wu = 0.5 * (xu + 1), 0.5 * wu
    v, wv = 0.5 * (xv + 1), 0.25 * wv
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([(U * (1 - Vv)).ravel(), Vv.ravel()])
    return pts, W.ravel()


def p2_shape(pts):
    """P2 shape functions (q, 6) and reference gradients (q, 6, 2).

    Local order: vertices 0, 1, 2 then edge midpoints (0,1), (1,2), (2,0).
    """
    return lagrange_shape(2, pts)


@lru_cache(maxsize=None)
def lattice(k: int) -> np.ndarray:
    """Reference nodes of degree ``k``: vertices, edge nodes per local edge
    (0,1), (1,2), (2,0) walking from the edge start, then interior nodes."""
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = [V[0], V[1], V[2]]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for j in range(1, k):
            pts.append(V[a] + (j / k) * (V[b] - V[a]))
    for j in range(1, k):
        for i in range(1, k - j):
            pts.append(np.array([i / k, j / k]))
    return np.array(pts)


def _monomials(k, pts):
    x, y = np.asarray(pts, dtype=float).T
    P, dPx, dPy = [], [], []
    for d in range(k + 1):
        for j in range(d + 1):
            i = d - j
            P.append(x**i * y**j)
            dPx.append(i * x ** max(i - 1, 0) * y**j)
            dPy.append(j * x**i * y ** max(j - 1, 0))
    return np.array(P).T, np.stack([np.array(dPx).T, np.array(dPy).T], axis=-1)


@lru_cache(maxsize=None)
def _coefficients(k):
    P, _ = _monomials(k, lattice(k))
    return np.linalg.inv(P)


def lagrange_shape(k: int, pts):
    """Degree-``k`` nodal shape functions (q, n) and reference gradients (q, n, 2)."""
    C = _coefficients(k)
    P, dP = _monomials(k, pts)
    return P @ C, np.einsum("qmd,mn->qnd", dP, C)


def edge_lagrange(k: int, xi):
    """1D Lagrange basis on [0, 1] with nodes 0, 1, 1/k, ..., (k-1)/k."""
    xi = np.asarray(xi, dtype=float)
    nodes = np.concatenate([[0.0, 1.0], np.arange(1, k) / k])
    out = np.ones(xi.shape + (k + 1,))
    for a in range(k + 1):
        for b in range(k + 1):
            if a != b:
                out[..., a] *= (xi - nodes[b]) / (nodes[a] - nodes[b])
    return out


_EDGE_X, _EDGE_W = np.polynomial.legendre.leggauss(8)
_EDGE_X, _EDGE_W = 0.5 * (_EDGE_X + 1), 0.5 * _EDGE_W


@dataclass(frozen=True, eq=False)
class ScalarField:
    space: "LagrangeSpace"
    values: np.ndarray
    name: str = "u"

    def __post_init__(self):
        if len(self.values) != self.space.ndof:
            raise ValueError(f"{self.name}: {len(self.values)} coefficients for {self.space.ndof} dofs")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.name}: non-finite coefficients")

    @property
    def mesh(self) -> TriMesh:
        return self.space.mesh


@dataclass(frozen=True, eq=False)
class WallProfile:
    """Values of a boundary function at the points of a wall quadrature."""

    quadrature: WallQuadrature
    values: np.ndarray
    name: str = "profile"

    def __post_init__(self):
        if len(self.values) != len(self.quadrature):
            raise ValueError(f"{self.name}: {len(self.values)} values for {len(self.quadrature)} points")

    def __add__(self, other):
        _check_same(self, other)
        return WallProfile(self.quadrature, self.values + other.values, self.name)

    def __sub__(self, other):
        _check_same(self, other)
        return WallProfile(self.quadrature, self.values - other.values, self.name)

    def __mul__(self, c: float):
        return WallProfile(self.quadrature, c * self.values, self.name)

    __rmul__ = __mul__

    def __neg__(self):
        return WallProfile(self.quadrature, -self.values, self.name)

    def norm(self) -> float:
        return float(np.sqrt(wall_inner_product(self, self)))

    def renamed(self, name: str) -> "WallProfile":
        return WallProfile(self.quadrature, self.values, name)


def _check_same(a: WallProfile, b: WallProfile):
    if not a.quadrature.compatible(b.quadrature):
        raise ValueError("profiles live on different quadratures")


def wall_inner_product(a: WallProfile, b: WallProfile) -> float:
    """L2 pairing on the wall, sum of w_i a_i b_i."""
    _check_same(a, b)
    return float(np.sum(a.quadrature.weight * a.values * b.values))


class LagrangeSpace:
    """Degree-``k`` Lagrange space on a mesh with assembled operators.

    Use :meth:`of` to share one instance (and its factorizations) per mesh.
    For ``k = 2`` the dofs coincide with the mesh nodes.
    """

    def __init__(self, mesh: TriMesh, degree: int = 2):
        if degree < 2:
            raise ValueError("degree must be at least 2")
        self.mesh = mesh
        self.degree = k = degree
        self.qpts, self.qw = triangle_rule(k + 2)
        self.N, self.dN = lagrange_shape(k, self.qpts)
        self.G, self.dG = p2_shape(self.qpts)

    @classmethod
    def of(cls, mesh: TriMesh, degree: int = 2) -> "LagrangeSpace":
        per_mesh = mesh_cache(mesh, "spaces")
        if degree not in per_mesh:
            per_mesh[degree] = cls(mesh, degree)
        return per_mesh[degree]

    # numbering --------------------------------------------------------------
    @cached_property
    def _numbering(self):
        m, k = self.mesh, self.degree
        nt, ne = len(m.triangles), len(m.edges)
        ni = (k - 1) * (k - 2) // 2
        cells = np.empty((nt, len(lattice(k))), dtype=int)
        cells[:, :3] = m.triangles
        for le, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            e = m.tri_edges[:, le]
            forward = m.triangles[:, a] < m.triangles[:, b]
            for j in range(k - 1):
                jj = np.where(forward, j, k - 2 - j)
                cells[:, 3 + le * (k - 1) + j] = m.nv + e * (k - 1) + jj
        base = m.nv + ne * (k - 1)
        cells[:, 3 + 3 * (k - 1):] = base + np.arange(nt)[:, None] * ni + np.arange(ni)
        # boundary edges walk with the loop orientation
        be, bed = m.bedge_ids, m.bedges
        forward = bed[:, 0] < bed[:, 1]
        bd = np.empty((len(be), k + 1), dtype=int)
        bd[:, :2] = bed
        for j in range(k - 1):
            jj = np.where(forward, j, k - 2 - j)
            bd[:, 2 + j] = m.nv + be * (k - 1) + jj
        return cells, bd, base + nt * ni

    @property
    def cells(self) -> np.ndarray:
        return self._numbering[0]

    @property
    def bdofs(self) -> np.ndarray:
        """(nb, k+1) dofs of each boundary edge: start, end, then interior nodes in order."""
        return self._numbering[1]

    @property
    def ndof(self) -> int:
        return self._numbering[2]

    @cached_property
    def bnd(self) -> np.ndarray:
        return np.unique(self.bdofs)

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.bnd] = False
        return np.flatnonzero(mask)

    @cached_property
    def boundary_coords(self):
        """(loop, s) of every dof in ``bnd``; s follows the edge parameter linearly."""
        m, k = self.mesh, self.degree
        xi = np.concatenate([[0.0, 1.0], np.arange(1, k) / k])
        loop = np.zeros(self.ndof, dtype=int)
        s = np.zeros(self.ndof)
        loop[self.bdofs] = m.bloop[:, None]
        s[self.bdofs] = m.bs0[:, None] + xi[None, :] * (m.bs1 - m.bs0)[:, None]
        if m.root.domain is not None:
            L = np.array([c.length for c in m.root.domain.curves])
            s = np.mod(s, L[loop])
        return loop[self.bnd], s[self.bnd]

    @cached_property
    def dof_coords(self) -> np.ndarray:
        """Physical position of every dof under the element map."""
        G, _ = p2_shape(lattice(self.degree))
        X = self.mesh.nodes[self.mesh.cells]
        out = np.empty((self.ndof, 2))
        out[self.cells] = np.einsum("na,tai->tni", G, X)
        return out

    def interpolate(self, fn) -> np.ndarray:
        x = self.dof_coords
        return np.asarray(fn(x[:, 0], x[:, 1]), dtype=float)

    # element geometry -------------------------------------------------------
    @cached_property
    def _geometry(self):
        X = self.mesh.nodes[self.mesh.cells]
        J = np.einsum("tai,qaj->tqij", X, self.dG)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            t = int(np.argwhere(det <= 0)[0, 0])
            raise SolverError(f"non-positive Jacobian in triangle {t}")
        inv = np.empty_like(J)
        inv[..., 0, 0], inv[..., 1, 1] = J[..., 1, 1] / det, J[..., 0, 0] / det
        inv[..., 0, 1], inv[..., 1, 0] = -J[..., 0, 1] / det, -J[..., 1, 0] / det
        x = np.einsum("qa,tai->tqi", self.G, X)
        return det * self.qw, inv, x

    @property
    def dx(self) -> np.ndarray:
        """(nt, q) quadrature weights times Jacobian."""
        return self._geometry[0]

    @property
    def points(self) -> np.ndarray:
        return self._geometry[2]

    def _grad(self):
        return np.einsum("qaj,tqji->tqai", self.dN, self._geometry[1])

    def _assemble(self, Ke):
        c = self.cells
        rows = np.broadcast_to(c[:, :, None], Ke.shape).ravel()
        cols = np.broadcast_to(c[:, None, :], Ke.shape).ravel()
        n = self.ndof
        return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        grad = self._grad()
        return self._assemble(np.einsum("tq,tqai,tqbi->tab", self.dx, grad, grad))

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble(np.einsum("tq,qa,qb->tab", self.dx, self.N, self.N))

    def values_at_points(self, u: np.ndarray) -> np.ndarray:
        """(nt, q) values of a field at the element quadrature points."""
        return np.einsum("qa,ta->tq", self.N, u[self.cells])

    def integrate(self, fn) -> float:
        """Integral of ``fn(x, y)`` over the (possibly deformed) mesh."""
        x = self.points
        return float(np.sum(self.dx * fn(x[..., 0], x[..., 1])))

    def integrate_field(self, u: np.ndarray, fn=None) -> float:
        vals = self.values_at_points(u)
        if fn is not None:
            x = self.points
            vals = vals * fn(x[..., 0], x[..., 1])
        return float(np.sum(self.dx * vals))

    def l2_error(self, u: np.ndarray, fn) -> float:
        x = self.points
        d = self.values_at_points(u) - fn(x[..., 0], x[..., 1])
        return float(np.sqrt(np.sum(self.dx * d**2)))

    def load(self, fn) -> np.ndarray:
        """Load vector of a source ``fn(x, y)``."""
        x = self.points
        Fe = np.einsum("tq,tq,qa->ta", self.dx, fn(x[..., 0], x[..., 1]), self.N)
        return np.bincount(self.cells.ravel(), Fe.ravel(), minlength=self.ndof)

    # Dirichlet problem ------------------------------------------------------
    @cached_property
    def _lu_interior(self):
        I = self.interior
        return splu(self.stiffness[I][:, I].tocsc())

    def dirichlet_solve(self, g_b: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        """Solve -lap u = f with u = g on the boundary; ``g_b`` ordered like ``bnd``."""
        K, I, B = self.stiffness, self.interior, self.bnd
        g_b = np.asarray(g_b, dtype=float)
        u = np.zeros((self.ndof,) + g_b.shape[1:])
        u[B] = g_b
        rhs = -(K[I][:, B] @ g_b)
        if source is not None:
            rhs = rhs + source[I]
        u[I] = self._lu_interior.solve(rhs)
        return u

    def dirichlet_residual(self, u: np.ndarray, source: np.ndarray | None = None) -> float:
        I = self.interior
        r = self.stiffness[I] @ u
        if source is not None:
            r = r - source[I]
        scale = np.linalg.norm(self.stiffness[I][:, self.bnd] @ u[self.bnd]) + 1e-300
        return float(np.linalg.norm(r) / scale)

    # boundary ---------------------------------------------------------------
    def _edge_speed(self, edges, xi):
        X = self.mesh.nodes[self.mesh.bdofs[edges]]
        _, dN = edge_shape(xi)
        d = np.einsum("...a,...ai->...i", dN, X)
        return np.hypot(d[..., 0], d[..., 1])

    @cached_property
    def boundary_mass(self) -> sp.csr_matrix:
        nb = len(self.bdofs)
        speed = self._edge_speed(np.arange(nb)[:, None], np.broadcast_to(_EDGE_X, (nb, len(_EDGE_X))))
        N = edge_lagrange(self.degree, _EDGE_X)
        Me = np.einsum("eq,q,qa,qb->eab", speed, _EDGE_W, N, N)
        b = self.bdofs
        rows = np.broadcast_to(b[:, :, None], Me.shape).ravel()
        cols = np.broadcast_to(b[:, None, :], Me.shape).ravel()
        return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(self.ndof, self.ndof)).tocsr()

    @cached_property
    def _lu_boundary_mass(self):
        B = self.bnd
        return splu(self.boundary_mass[B][:, B].tocsc())

    def consistent_flux(self, u: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        """Boundary function h with int_G h q = int grad u . grad q - int f q for all q.

        Returned as a full dof vector, zero away from the boundary.
        """
        r = self.stiffness @ u
        if source is not None:
            r = r - source
        h = np.zeros(r.shape)
        h[self.bnd] = self._lu_boundary_mass.solve(r[self.bnd])
        return h

    def boundary_load(self, quad: WallQuadrature, values: np.ndarray) -> np.ndarray:
        """Vector of int_G g phi_a ds for g sampled at ``quad`` points, measured on this mesh."""
        self._check_quadrature(quad)
        w = quad.gauss * self._edge_speed(quad.edge, quad.xi) * values
        N = edge_lagrange(self.degree, quad.xi)
        return np.bincount(self.bdofs[quad.edge].ravel(), (N * w[:, None]).ravel(), minlength=self.ndof)

    def trace(self, u: np.ndarray, quad: WallQuadrature) -> np.ndarray:
        """Values of a field (or boundary function) at the quadrature points."""
        self._check_quadrature(quad)
        N = edge_lagrange(self.degree, quad.xi)
        return np.einsum("qa,qa...->q...", N, u[self.bdofs[quad.edge]])

    def weighted_boundary_mass(self, quad: WallQuadrature, values: np.ndarray) -> sp.csr_matrix:
        """Matrix of int_G c phi_a phi_b ds with c sampled on ``quad``."""
        self._check_quadrature(quad)
        N = edge_lagrange(self.degree, quad.xi)
        w = quad.weight * values
        b = self.bdofs[quad.edge]
        Me = w[:, None, None] * N[:, :, None] * N[:, None, :]
        rows = np.broadcast_to(b[:, :, None], Me.shape).ravel()
        cols = np.broadcast_to(b[:, None, :], Me.shape).ravel()
        return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(self.ndof, self.ndof)).tocsr()

    def _check_quadrature(self, quad: WallQuadrature):
        if quad.mesh.root is not self.mesh.root:
            raise ValueError("quadrature belongs to a different mesh family")

    # mixed biharmonic -------------------------------------------------------
    @cached_property
    def _lu_mixed(self):
        K, M, I = self.stiffness, self.mass, self.interior
        KI = K[:, I]
        A = sp.bmat([[M, -KI], [-KI.T, None]], format="csc")
        try:
            return splu(A)
        except RuntimeError as exc:
            d = abs(splu(M.tocsc()).U.diagonal())
            raise SolverError(
                f"mixed system factorization failed ({A.shape[0]} unknowns, mass pivot ratio "
                f"{d.max() / max(d.min(), 1e-300):.2e}): {exc}") from exc

    def mixed_solve(self, g_b: np.ndarray, neumann: np.ndarray | None = None):
        """Ciarlet-Raviart solve of lap Psi = -omega, lap omega = 0.

        ``g_b`` is the strong Dirichlet data for Psi on ``bnd``; ``neumann`` is
        the load vector of the clamped data, int_G g_n q ds.  Returns
        ``(psi, omega)`` as full dof vectors.  Both inputs may carry a
        trailing column axis for several right-hand sides.
        """
        K, I, B = self.stiffness, self.interior, self.bnd
        n = self.ndof
        g_b = np.asarray(g_b, dtype=float)
        rhs1 = K[:, B] @ g_b
        if neumann is not None:
            rhs1 = rhs1 - neumann
        sol = self._lu_mixed.solve(np.concatenate([rhs1, np.zeros((len(I),) + rhs1.shape[1:])]))
        if not np.all(np.isfinite(sol)):
            raise SolverError("mixed solve produced non-finite values")
        omega = sol[:n]
        psi = np.zeros((n,) + g_b.shape[1:])
        psi[B] = g_b
        psi[I] = sol[n:]
        return psi, omega

    def mixed_residual(self, psi, omega, neumann=None) -> float:
        """Relative residual of the assembled mixed system at a solution."""
        K, M, I = self.stiffness, self.mass, self.interior
        r1 = M @ omega - K @ psi
        if neumann is not None:
            r1 = r1 + neumann
        r2 = K[I] @ omega
        scale = np.linalg.norm(M @ omega) + np.linalg.norm(K @ psi) + 1e-300
        return float(np.hypot(np.linalg.norm(r1), np.linalg.norm(r2)) / scale)

    # misc -------------------------------------------------------------------
    def vector_c1_proxy(self, w: np.ndarray) -> float:
        """sup |w| over dofs plus sup of the Frobenius norm of grad w at quadrature points."""
        if not np.any(w):
            return 0.0
        G = np.einsum("tqai,tac->tqci", self._grad(), w[self.cells])
        return float(np.max(np.hypot(w[:, 0], w[:, 1])) + np.max(np.sqrt(np.sum(G**2, axis=(-1, -2)))))


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def boundary_values(space: LagrangeSpace, g) -> np.ndarray:
    """Boundary data on ``space.bnd`` from a callable g(loop, s), an array or a scalar."""
    if callable(g):
        loop, s = space.boundary_coords
        return np.asarray(g(loop, s), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return np.full(len(space.bnd), float(g))
    if g.shape != (len(space.bnd),):
        raise ValueError(f"boundary data has shape {g.shape}, expected ({len(space.bnd)},)")
    return g


def solve_laplace_dirichlet(mesh: TriMesh, g, *, degree: int = 2, name: str = "psi") -> ScalarField:
    """Discrete harmonic field with trace ``g``."""
    space = LagrangeSpace.of(mesh, degree)
    u = space.dirichlet_solve(boundary_values(space, g))
    return ScalarField(space, u, name)


def solve_biharmonic_mixed(mesh: TriMesh, g, g_n=None, *, degree: int = 2, name: str = "psi"):
    """Clamped biharmonic problem in (Psi, omega) form with omega = -lap Psi.

    ``g_n`` is ``None`` (homogeneous) or a :class:`WallProfile` holding the
    prescribed normal derivative at its quadrature points (zero elsewhere).
    """
    space = LagrangeSpace.of(mesh, degree)
    load = None if g_n is None else space.boundary_load(g_n.quadrature, g_n.values)
    psi, omega = space.mixed_solve(boundary_values(space, g), load)
    return ScalarField(space, psi, name), ScalarField(space, omega, "omega" if name == "psi" else f"omega[{name}]")


def boundary_flux(field: ScalarField) -> np.ndarray:
    """Consistent normal derivative of a discrete harmonic field as a boundary dof vector."""
    return field.space.consistent_flux(field.values)


def boundary_normal_derivative(field: ScalarField, quad: WallQuadrature, flux: np.ndarray | None = None) -> WallProfile:
    """Variationally consistent normal derivative sampled on ``quad``."""
    space = field.space
    h = space.consistent_flux(field.values) if flux is None else flux
    return WallProfile(quad, space.trace(h, quad), f"dn({field.name})")


def trace_profile(field: ScalarField, quad: WallQuadrature) -> WallProfile:
    return WallProfile(quad, field.space.trace(field.values, quad), field.name)
