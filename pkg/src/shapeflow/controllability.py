"""Regularized least-squares probe of approximate controllability.

A wall profile is fitted by linear combinations of linearized responses
``dS(V_i)`` of a finite deformation basis through the Gram system
``(G + alpha I) c = b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .fem import WallProfile, wall_inner_product
from .geometry import DeformationField
from .mesh import WallQuadrature
from .operators import FlowCase, linearize


@dataclass(frozen=True, eq=False)
class DeformationBasis:
    fields: tuple
    name: str = "basis"

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise ValueError("deformation basis is empty")
        for f in self.fields:
            if not isinstance(f, DeformationField):
                raise TypeError("basis members must be DeformationFields")

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return DeformationBasis(self.fields[i], self.name)
        return self.fields[i]

    def speed_gram(self, quad: WallQuadrature) -> np.ndarray:
        V = np.column_stack([f.normal_speed(quad.loop, quad.s) for f in self.fields])
        return V.T @ (quad.weight[:, None] * V)

    def check_independent(self, quad: WallQuadrature, tol: float = 1e-10) -> None:
        ev = np.linalg.eigvalsh(self.speed_gram(quad))
        if ev[0] <= tol * ev[-1]:
            raise ValueError(f"basis normal speeds are linearly dependent (eigenvalue ratio {ev[0] / ev[-1]:.2e})")


@dataclass(frozen=True, eq=False)
class GramSystem:
    basis: DeformationBasis
    columns: list  # WallProfiles dS(V_i)
    gram: np.ndarray
    kind: str

    @property
    def quadrature(self) -> WallQuadrature:
        return self.columns[0].quadrature

    @property
    def matrix(self) -> np.ndarray:
        """(q, N) response values at the quadrature points."""
        return np.column_stack([c.values for c in self.columns])

    def rhs(self, target: WallProfile) -> np.ndarray:
        return np.array([wall_inner_product(c, target) for c in self.columns])

    def truncated(self, n: int) -> "GramSystem":
        return GramSystem(self.basis[:n], self.columns[:n], self.gram[:n, :n], self.kind)

    def combine(self, coef) -> np.ndarray:
        return self.matrix @ np.asarray(coef, dtype=float)


def assemble_response(case: FlowCase, basis: DeformationBasis | Sequence[DeformationField], *,
                      kappa_term: bool = True) -> GramSystem:
    """Evaluate ``dS`` on every basis member and assemble the Gram matrix."""
    if not isinstance(basis, DeformationBasis):
        basis = DeformationBasis(tuple(basis))
    basis.check_independent(case.quadrature)
    cols = linearize(case, list(basis.fields), kappa_term=kappa_term)
    R = np.column_stack([c.values for c in cols])
    w = case.quadrature.weight
    G = R.T @ (w[:, None] * R)
    G = 0.5 * (G + G.T)
    return GramSystem(basis, cols, G, case.kind)


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    residual: float
    fitted: WallProfile
    alpha: float


def fit_target(system: GramSystem, target: WallProfile, alpha: float) -> FitResult:
    """Solve ``(G + alpha I) c = b``; residual is relative to ``|target|``.

    ``alpha = 0`` requires a nonsingular Gram matrix.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    G = system.gram + alpha * np.eye(len(system.gram))
    b = system.rhs(target)
    try:
        if alpha == 0:
            # singular relative to the Gram spectrum or to the target scale
            ev = np.linalg.eigvalsh(system.gram)
            if ev[0] <= 1e-14 * max(ev[-1], target.norm() ** 2):
                raise np.linalg.LinAlgError
        cf = sla.cho_factor(G)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Gram matrix is singular at alpha = 0; use alpha > 0") from exc
    c = sla.cho_solve(cf, b)
    fitted = WallProfile(target.quadrature, system.combine(c), "fit")
    tn = target.norm()
    res = (fitted - target).norm() / tn if tn > 0 else 0.0
    return FitResult(c, float(res), fitted, float(alpha))


def _orthonormal(profiles: Sequence[WallProfile]) -> np.ndarray:
    """(q, k) weighted-orthonormal basis of the span of ``profiles``."""
    if not profiles:
        return np.zeros((0, 0))
    w = np.sqrt(profiles[0].quadrature.weight)
    Q, R = np.linalg.qr(w[:, None] * np.column_stack([p.values for p in profiles]))
    keep = np.abs(np.diag(R)) > 1e-12 * max(np.abs(np.diag(R)).max(), 1e-300)
    return Q[:, keep]


def projection_residual(system: GramSystem, target: WallProfile, kernel: Sequence[WallProfile] = ()) -> float:
    """Relative distance of ``target`` to the response span (the alpha -> 0+ limit),
    measured after removing the span of ``kernel``.  Uses orthogonal
    factorization, so nested bases give nonincreasing values."""
    w = np.sqrt(target.quadrature.weight)
    A = w[:, None] * system.matrix
    y = w * target.values
    Z = _orthonormal(kernel)
    if Z.size:
        A = A - Z @ (Z.T @ A)
        y = y - Z @ (Z.T @ y)
    yn = np.linalg.norm(y)
    if yn == 0:
        return 0.0
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    U = U[:, s > 1e-12 * max(s.max(initial=0.0), 1e-300)]
    return float(np.linalg.norm(y - U @ (U.T @ y)) / yn)


def projected_fit_residual(system: GramSystem, target: WallProfile, alpha: float, kernel: Sequence[WallProfile]) -> float:
    """Tikhonov fit in the quotient by ``span(kernel)``; residual measured there."""
    w = np.sqrt(target.quadrature.weight)
    A = w[:, None] * system.matrix
    y = w * target.values
    Z = _orthonormal(kernel)
    if Z.size:
        A = A - Z @ (Z.T @ A)
        y = y - Z @ (Z.T @ y)
    yn = np.linalg.norm(y)
    if yn == 0:
        return 0.0
    G = A.T @ A + alpha * np.eye(A.shape[1])
    c = np.linalg.solve(G, A.T @ y)
    return float(np.linalg.norm(A @ c - y) / yn)


@dataclass
class ResidualTable:
    rows: list = field(default_factory=list)  # (N, alpha, raw, projected)

    def column(self, alpha: float, which: str = "raw") -> np.ndarray:
        j = 2 if which == "raw" else 3
        return np.array([r[j] for r in self.rows if r[1] == alpha])

    def to_csv(self) -> str:
        lines = ["N,alpha,residual_raw,residual_projected"]
        for n, a, r, p in self.rows:
            lines.append(f"{n},{a:.3e},{r:.12e},{'' if p is None else f'{p:.12e}'}")
        return "\n".join(lines) + "\n"


def residual_study(case: FlowCase, target: WallProfile, basis: DeformationBasis | Sequence[DeformationField],
                   N_list: Sequence[int], alpha_list: Sequence[float], *,
                   kernel: Sequence[WallProfile] | None = None, system: GramSystem | None = None) -> ResidualTable:
    """Residuals for nested truncations ``basis[:N]``.

    ``alpha = 0`` stands for the pseudo-inverse limit.  ``kernel`` holds
    candidate obstruction profiles; when given (Stokes) a second column
    reports the residual in the quotient by their span.
    """
    if system is None:
        system = assemble_response(case, basis[: max(N_list)] if isinstance(basis, DeformationBasis)
                                   else list(basis)[: max(N_list)])
    table = ResidualTable()
    for a in alpha_list:
        for n in N_list:
            sub = system.truncated(n)
            if a == 0:
                raw = projection_residual(sub, target)
                proj = None if kernel is None else projection_residual(sub, target, kernel)
            else:
                raw = fit_target(sub, target, a).residual
                proj = None if kernel is None else projected_fit_residual(sub, target, a, kernel)
            table.rows.append((int(n), float(a), raw, proj))
    return table


def gaussian_target(quad: WallQuadrature, center: float, width: float, loop: int | None = None,
                    period: float | None = None) -> WallProfile:
    """Smooth bump ``exp(-d^2 / (2 width^2))`` in wall arclength ``d`` from ``center``."""
    s = quad.s
    if period is None:
        d = s - center
    else:
        d = (s - center + 0.5 * period) % period - 0.5 * period
    vals = np.exp(-0.5 * (d / width) ** 2)
    if loop is not None:
        vals = np.where(quad.loop == loop, vals, 0.0)
    return WallProfile(quad, vals, "target")
