"""Adjoint problems, the duality identities behind controllability, and two
spectral probes (Robin uniqueness and the Stokes obstruction space).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .fem import LagrangeSpace, ScalarField, WallProfile, wall_inner_product
from .geometry import INFLOW, DeformationField
from .mesh import LABEL_CODE, TriMesh, wall_quadrature
from .operators import POTENTIAL, STOKES, FlowCase, eval_dSp, eval_dSs, potential_state, stokes_state

log = logging.getLogger(__name__)


class ProbeError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# multipliers
# ---------------------------------------------------------------------------


def as_wall_function(mu) -> Callable:
    """Turn a multiplier spec into ``f(loop, s)``.

    Accepts a callable, a :class:`DeformationField` (its normal speed) or a
    number (constant on walls, zero on inflow, requires a closed wall loop
    to be continuous).
    """
    if isinstance(mu, DeformationField):
        return mu.normal_speed
    if callable(mu):
        return mu
    raise TypeError(f"cannot use {type(mu).__name__} as a wall multiplier")


def _inflow_dofs(space: LagrangeSpace) -> np.ndarray:
    m = space.mesh.root
    return np.unique(space.bdofs[m.blabel == LABEL_CODE[INFLOW]])


def multiplier_trace(space: LagrangeSpace, mu) -> np.ndarray:
    """Nodal trace of ``mu`` on ``space.bnd``; checks that it vanishes on inflow."""
    f = as_wall_function(mu)
    loop, s = space.boundary_coords
    vals = np.asarray(f(loop, s), dtype=float)
    on_inflow = np.isin(space.bnd, _inflow_dofs(space))
    if np.any(np.abs(vals[on_inflow]) > 1e-12 * max(1.0, np.abs(vals).max())):
        raise ValueError("multiplier must vanish on inflow arcs")
    vals[on_inflow] = 0.0
    return vals


@dataclass(frozen=True, eq=False)
class AdjointCase:
    case: FlowCase
    mu: object

    def __post_init__(self):
        multiplier_trace(self.case.space, self.mu)

    @property
    def kind(self) -> str:
        return self.case.kind

    def profile(self) -> WallProfile:
        q = self.case.quadrature
        return WallProfile(q, np.asarray(as_wall_function(self.mu)(q.loop, q.s), dtype=float), "mu")


def adjoint_potential(case: FlowCase, mu) -> ScalarField:
    """Discrete harmonic ``phi`` with trace ``mu`` (zero on inflow)."""
    if case.kind != POTENTIAL:
        raise ValueError("adjoint_potential needs a potential case")
    sp_ = case.space
    return ScalarField(sp_, sp_.dirichlet_solve(multiplier_trace(sp_, mu)), "phi")


def adjoint_stokes(case: FlowCase, mu):
    """Biharmonic ``phi`` with ``phi = 0`` and ``dn phi = mu``; returns ``(phi, lap phi)``."""
    if case.kind != STOKES:
        raise ValueError("adjoint_stokes needs a Stokes case")
    sp_, q = case.space, case.quadrature
    multiplier_trace(sp_, mu)
    mq = np.asarray(as_wall_function(mu)(q.loop, q.s), dtype=float)
    phi, omega = sp_.mixed_solve(np.zeros(len(sp_.bnd)), sp_.boundary_load(q, mq))
    return ScalarField(sp_, phi, "phi"), ScalarField(sp_, -omega, "lap(phi)")


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityResult:
    residual: float
    direct: float
    adjoint: float
    scale: float


def _result(direct, adjoint, scale) -> IdentityResult:
    r = 0.0 if scale == 0 else abs(direct - adjoint) / scale
    return IdentityResult(float(r), float(direct), float(adjoint), float(scale))


def identity_check_potential(case: FlowCase, V: DeformationField, mu, *, kappa_sign: float = 1.0) -> IdentityResult:
    """Compare ``<dS_p(V), mu>`` with ``int (dn phi(mu) + kappa mu) v_n dn Psi(0) ds``.

    ``kappa_sign`` exists to inject a deliberate sign error for mutation tests.
    """
    q = case.quadrature
    d = eval_dSp(case, V)
    m = AdjointCase(case, mu).profile()
    sp_ = case.space
    _, z = potential_state(case)
    phi = adjoint_potential(case, mu)
    dn_phi = sp_.trace(sp_.consistent_flux(phi.values), q)
    vn = V.normal_speed(q.loop, q.s)
    rhs = q.integrate((dn_phi + kappa_sign * q.kappa * m.values) * vn * sp_.trace(z, q))
    return _result(wall_inner_product(d, m), rhs, d.norm() * m.norm())


def identity_check_stokes(case: FlowCase, V: DeformationField, mu) -> IdentityResult:
    """Compare ``<dS_s(V), mu>`` with ``int v_n (-omega(0) lap phi(mu) + dn omega(0) mu) ds``."""
    q = case.quadrature
    d = eval_dSs(case, V)
    m = AdjointCase(case, mu).profile()
    sp_ = case.space
    _, omega, dn_omega = stokes_state(case)
    _, lap_phi = adjoint_stokes(case, mu)
    vn = V.normal_speed(q.loop, q.s)
    rhs = q.integrate(vn * (-sp_.trace(omega, q) * sp_.trace(lap_phi.values, q) + sp_.trace(dn_omega, q) * m.values))
    return _result(wall_inner_product(d, m), rhs, d.norm() * m.norm())


def identity_check(case: FlowCase, V, mu, **kw) -> IdentityResult:
    return (identity_check_potential if case.kind == POTENTIAL else identity_check_stokes)(case, V, mu, **kw)


# ---------------------------------------------------------------------------
# Robin uniqueness probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RobinReport:
    eigenvalue: float
    level: int
    ndof: int

    def as_dict(self) -> dict:
        return {"eigenvalue": self.eigenvalue, "level": self.level, "ndof": self.ndof}


def _kappa_samples(mesh: TriMesh, kappa, q):
    if kappa is None:
        return q.kappa
    if isinstance(kappa, WallProfile):
        if not kappa.quadrature.compatible(q):
            raise ValueError("curvature profile must live on the probe's wall quadrature")
        return kappa.values
    if callable(kappa):
        return np.asarray(kappa(q.loop, q.s), dtype=float)
    return np.full(len(q), float(kappa))


def robin_uniqueness_probe(mesh: TriMesh, kappa=None, *, degree: int = 2, qorder: int = 6,
                           seed: int = 0) -> RobinReport:
    """Smallest eigenvalue of ``int |grad phi|^2 + int_wall kappa phi^2`` relative to
    the H1 product on ``{phi = 0 on inflow}``.

    ``kappa`` is ``None`` (curve curvature), a number, a callable ``(loop, s)``
    or a :class:`WallProfile` on ``wall_quadrature(mesh, qorder)``.
    """
    sp_ = LagrangeSpace.of(mesh, degree)
    q = wall_quadrature(mesh, qorder)
    Mk = sp_.weighted_boundary_mass(q, _kappa_samples(mesh, kappa, q))
    free = np.setdiff1d(np.arange(sp_.ndof), _inflow_dofs(sp_))
    K, M = sp_.stiffness, sp_.mass
    # a = (K + M) - (M - Mk): smallest a/B is 1 - largest (M - Mk)/B
    A = (M - Mk)[free][:, free].tocsc()
    B = (K + M)[free][:, free].tocsc()
    v0 = np.random.default_rng(seed).standard_normal(len(free))
    try:
        mu = eigsh(A, k=1, M=B, which="LA", v0=v0, tol=1e-12, maxiter=20 * len(free), return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise ProbeError(f"eigensolver did not converge on {len(free)} dofs") from exc
    return RobinReport(float(1.0 - mu[0]), mesh.level, len(free))


# ---------------------------------------------------------------------------
# Stokes obstruction probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObstructionReport:
    smallest: float
    dimension: int
    threshold: float
    gap: float
    level: int
    eigenvalues: np.ndarray = field(repr=False)
    kernel: list = field(repr=False)  # WallProfiles of candidate kernel vectors
    sweep: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"eigenvalue": self.smallest, "dimension": self.dimension, "threshold": self.threshold,
                "gap": self.gap, "level": self.level,
                "sweep": {f"{k:.3g}": v for k, v in sorted(self.sweep.items())}}


def stokes_c11(case: FlowCase, rel_tol: float = 1e-8) -> WallProfile:
    """``c11 = -dn omega(0) / omega(0)`` on the wall quadrature."""
    q = case.quadrature
    sp_ = case.space
    _, omega, dn_omega = stokes_state(case)
    w = sp_.trace(omega, q)
    small = np.abs(w) <= rel_tol * max(np.abs(w).max(), 1e-300)
    if np.any(small):
        i = int(np.flatnonzero(small)[0])
        raise ProbeError(f"wall vorticity vanishes at quadrature point {i} (loop {q.loop[i]}, s={q.s[i]:.6g}); "
                         "c11 is undefined")
    return WallProfile(q, -sp_.trace(dn_omega, q) / w, "c11")


def _wall_trace_dofs(sp_: LagrangeSpace) -> np.ndarray:
    return np.setdiff1d(sp_.bnd, _inflow_dofs(sp_))


def stokes_obstruction_probe(case: FlowCase, c11: WallProfile | None = None, *, threshold: float = 1e-2,
                             sweep=(), chunk: int = 64) -> ObstructionReport:
    """Generalized eigenvalues of ``a(phi, eta) = int lap phi lap eta + int_wall c11 dn phi dn eta``
    relative to the clamped-plate energy, over biharmonic ``phi`` with ``phi = 0``.

    Eigenvalues of modulus below ``threshold`` mark candidate obstruction
    directions; the report lists their count, the spectral gap and the
    corresponding wall profiles ``dn phi``.
    """
    if case.kind != STOKES:
        raise ValueError("the obstruction probe needs a Stokes case")
    sp_, q = case.space, case.quadrature
    if c11 is None:
        c11 = stokes_c11(case)
    W = _wall_trace_dofs(sp_)
    Mg = sp_.boundary_mass.tocsc()
    MW = Mg[:, W]
    A0 = np.zeros((len(W), len(W)))
    for a in range(0, len(W), chunk):
        cols = MW[:, a:a + chunk].toarray()
        _, om = sp_.mixed_solve(np.zeros((len(sp_.bnd), cols.shape[1])), cols)
        # int lap phi_i lap phi_j = omega_i' M omega_j = -(boundary mass) omega_j at dof i
        A0[:, a:a + chunk] = -(MW.T @ om)
    A0 = 0.5 * (A0 + A0.T)
    C = sp_.weighted_boundary_mass(q, c11.values)[W][:, W].toarray()
    try:
        lam, vec = sla.eigh(A0 + C, A0)
    except np.linalg.LinAlgError as exc:
        raise ProbeError(f"clamped-plate energy not positive definite on {len(W)} wall dofs") from exc
    order = np.argsort(np.abs(lam))
    lam, vec = lam[order], vec[:, order]
    mags = np.abs(lam)
    dim = int(np.sum(mags < threshold))
    gap = float(mags[dim] / max(mags[dim - 1], 1e-300)) if dim else float(mags[0] / threshold)
    full = np.zeros((sp_.ndof, dim))
    full[W] = vec[:, :dim]
    kernel = [WallProfile(q, sp_.trace(full[:, i], q), f"kernel{i}") for i in range(dim)]
    counts = {float(t): int(np.sum(mags < t)) for t in sweep}
    log.info("obstruction probe: smallest |lambda| %.3e, dimension %d at threshold %.1e", mags[0], dim, threshold)
    return ObstructionReport(float(mags[0]), dim, float(threshold), gap, case.mesh.level, lam, kernel, counts)
