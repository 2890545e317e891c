"""Shape operators of potential and Stokes flow and their linearizations.

``S_p`` maps a domain to the tangential wall velocity ``-dn Psi`` with ``Psi``
harmonic; ``S_s`` maps it to the wall vorticity ``omega = -lap Psi`` with
``Psi`` biharmonic and clamped.  Values on a deformed mesh are reported at
the material images of the reference quadrature points, which realizes the
pull-back to the reference wall.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import LagrangeSpace, WallProfile, boundary_values
from .geometry import WALL, DeformationField
from .mesh import MeshError, TriMesh, WallQuadrature, deform_mesh, harmonic_extension, mesh_cache, wall_quadrature

POTENTIAL = "potential"
STOKES = "stokes"
KINDS = (POTENTIAL, STOKES)
DEFAULT_DEGREE = {POTENTIAL: 3, STOKES: 3}

def shared_wall_quadrature(mesh: TriMesh, order: int = 4) -> WallQuadrature:
    """One wall quadrature per reference mesh and order, shared by all deformed copies."""
    root = mesh.root
    per = mesh_cache(root, "wall_quadrature")
    if order not in per:
        per[order] = wall_quadrature(root, order, WALL)
    return per[order]


@dataclass(frozen=True, eq=False)
class FlowCase:
    """A mesh, boundary data ``g(loop, s)`` and the flow kind.

    ``g`` defaults to the data carried by the mesh's domain.  The polynomial
    degree defaults to 3 for both flows.
    """

    mesh: TriMesh
    kind: str = POTENTIAL
    g: Callable | None = None
    degree: int | None = None
    qorder: int = 4
    _ext: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"flow kind must be one of {KINDS}, got {self.kind!r}")
        if self.g is None:
            if self.mesh.root.domain is None:
                raise ValueError("boundary data g is required for a mesh without a domain")
            object.__setattr__(self, "g", self.mesh.root.domain.boundary_data)
        if self.degree is None:
            object.__setattr__(self, "degree", DEFAULT_DEGREE[self.kind])
        check_wall_data(self.mesh, self.g)

    @property
    def space(self) -> LagrangeSpace:
        return LagrangeSpace.of(self.mesh, self.degree)

    @property
    def quadrature(self) -> WallQuadrature:
        return shared_wall_quadrature(self.mesh, self.qorder)

    @property
    def domain(self):
        return self.mesh.root.domain

    def with_mesh(self, mesh: TriMesh) -> "FlowCase":
        return FlowCase(mesh, self.kind, self.g, self.degree, self.qorder)

    def with_data(self, g) -> "FlowCase":
        return FlowCase(self.mesh, self.kind, g, self.degree, self.qorder)

    def extension(self, fld: DeformationField) -> np.ndarray:
        """Cached harmonic extension of ``fld`` on the reference mesh."""
        key = id(fld)
        hit = self._ext.get(key)
        if hit is None or hit[0] is not fld:
            hit = self._ext[key] = (fld, harmonic_extension(self.mesh.root, fld))
        return hit[1]

    def deformed(self, fld: DeformationField, t: float) -> "FlowCase":
        """The case on ``(Id + t V)(Omega_0)`` with node transport."""
        if self.mesh.is_deformed:
            raise MeshError("deform from the reference case")
        return self.with_mesh(deform_mesh(self.mesh, fld, t, extension=self.extension(fld)))


def check_wall_data(mesh: TriMesh, g) -> None:
    """Wall data must be constant on every wall arc (zero tangential derivative)."""
    dom = mesh.root.domain
    if dom is None or not callable(g):
        return
    L = np.array([c.length for c in dom.curves])
    for i, a in enumerate(dom.arcs):
        if a.label != WALL:
            continue
        span = (a.end - a.start) % L[a.loop] or L[a.loop]
        s = np.mod(a.start + span * np.linspace(0.0, 1.0, 33), L[a.loop])
        v = np.asarray(g(np.full(len(s), a.loop), s), dtype=float)
        if np.ptp(v) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise ValueError(f"boundary data varies along wall arc {i}; it must be constant on walls")


def _require(case: FlowCase, kind: str):
    if case.kind != kind:
        raise ValueError(f"operator needs a {kind} case, got {case.kind}")


def _normal_speed(fields: Sequence[DeformationField], loop, s) -> np.ndarray:
    return np.column_stack([f.normal_speed(loop, s) for f in fields]) if fields else np.zeros((len(s), 0))


# ---------------------------------------------------------------------------
# potential flow
# ---------------------------------------------------------------------------


def potential_state(case: FlowCase):
    """Discrete ``Psi(0)`` and its consistent normal flux (boundary dof vector)."""
    _require(case, POTENTIAL)
    sp_ = case.space
    psi = sp_.dirichlet_solve(boundary_values(sp_, case.g))
    return psi, sp_.consistent_flux(psi)


def eval_Sp(case: FlowCase) -> WallProfile:
    """Tangential wall velocity ``-dn Psi`` at the wall quadrature."""
    _, z = potential_state(case)
    return WallProfile(case.quadrature, -case.space.trace(z, case.quadrature), "S_p")


def eval_dSp_many(case: FlowCase, fields: Sequence[DeformationField], *, kappa_term: bool = True) -> list[WallProfile]:
    """Linearized potential operator for several directions with one factorization."""
    _require(case, POTENTIAL)
    if case.mesh.is_deformed:
        raise ValueError("linearize on the reference mesh")
    sp_, q = case.space, case.quadrature
    _, z = potential_state(case)
    loop, s = sp_.boundary_coords
    vb = _normal_speed(fields, loop, s)
    dpsi = sp_.dirichlet_solve(-vb * z[sp_.bnd][:, None])
    out = -sp_.trace(sp_.consistent_flux(dpsi), q)
    if kappa_term:
        vq = _normal_speed(fields, q.loop, q.s)
        out = out + (q.kappa * sp_.trace(z, q))[:, None] * vq
    return [WallProfile(q, out[:, i], "dS_p") for i in range(len(fields))]


def eval_dSp(case: FlowCase, fld: DeformationField, *, kappa_term: bool = True) -> WallProfile:
    """``-dn Psi'(V) + kappa z(0) v_n`` with ``Psi' = -v_n z(0)`` on the wall."""
    return eval_dSp_many(case, [fld], kappa_term=kappa_term)[0]


# ---------------------------------------------------------------------------
# Stokes flow
# ---------------------------------------------------------------------------


def stokes_state(case: FlowCase):
    """Discrete ``(Psi(0), omega(0))`` and the consistent flux of ``omega(0)``."""
    _require(case, STOKES)
    sp_ = case.space
    psi, omega = sp_.mixed_solve(boundary_values(sp_, case.g))
    return psi, omega, sp_.consistent_flux(omega)


def eval_Ss(case: FlowCase) -> WallProfile:
    """Wall vorticity at the wall quadrature."""
    _, omega, _ = stokes_state(case)
    return WallProfile(case.quadrature, case.space.trace(omega, case.quadrature), "S_s")


def eval_dSs_many(case: FlowCase, fields: Sequence[DeformationField]) -> list[WallProfile]:
    """Linearized Stokes operator for several directions with one factorization."""
    _require(case, STOKES)
    if case.mesh.is_deformed:
        raise ValueError("linearize on the reference mesh")
    sp_, q = case.space, case.quadrature
    _, omega, dn_omega = stokes_state(case)
    vq = _normal_speed(fields, q.loop, q.s)
    w0 = sp_.trace(omega, q)
    loads = np.column_stack([sp_.boundary_load(q, vq[:, i] * w0) for i in range(len(fields))]) \
        if fields else np.zeros((sp_.ndof, 0))
    _, domega = sp_.mixed_solve(np.zeros((len(sp_.bnd), len(fields))), loads)
    out = sp_.trace(domega, q) + sp_.trace(dn_omega, q)[:, None] * vq
    return [WallProfile(q, out[:, i], "dS_s") for i in range(len(fields))]


def eval_dSs(case: FlowCase, fld: DeformationField) -> WallProfile:
    """``omega'(V) + dn omega(0) v_n`` with ``dn Psi' = v_n omega(0)`` on the wall."""
    return eval_dSs_many(case, [fld])[0]


# ---------------------------------------------------------------------------
# dispatch by tag
# ---------------------------------------------------------------------------


def evaluate(case: FlowCase) -> WallProfile:
    return eval_Sp(case) if case.kind == POTENTIAL else eval_Ss(case)


def linearize(case: FlowCase, fields, *, kappa_term: bool = True) -> list[WallProfile]:
    """dS for a list of fields (or a single field, returned in a list)."""
    if isinstance(fields, DeformationField):
        fields = [fields]
    if case.kind == POTENTIAL:
        return eval_dSp_many(case, fields, kappa_term=kappa_term)
    if not kappa_term:
        raise ValueError("the curvature correction switch applies to potential flow only")
    return eval_dSs_many(case, fields)
