"""Independent oracles: closed-form annulus solutions, Taylor remainder and
finite-difference tests, Hadamard formulas and the pulled-back Laplacian.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import LagrangeSpace, WallProfile
from .geometry import DeformationField
from .mesh import MeshError, TriMesh, clear_mesh_cache, deform_mesh, edge_shape, harmonic_extension, wall_quadrature
from .operators import FlowCase, evaluate, linearize

log = logging.getLogger(__name__)

DEFAULT_T = (0.1, 0.05, 0.025, 0.0125)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x over positive entries."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# radial oracles on the annulus r1 < r < r2
# ---------------------------------------------------------------------------


def _rows(r):
    lr = np.log(r)
    val = np.array([1.0, r * r, lr, r * r * lr])
    d1 = np.array([0.0, 2 * r, 1 / r, 2 * r * lr + r])
    d2 = np.array([0.0, 2.0, -1 / r**2, 2 * lr + 3])
    return val, d1, d2


def biharmonic_radial(r1: float, r2: float, values=(0.0, 1.0), slopes=(0.0, 0.0)) -> np.ndarray:
    """Constants (A, B, C, D) of ``A + B r^2 + C ln r + D r^2 ln r`` with prescribed
    values and radial derivatives at ``r1`` and ``r2``."""
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    v1, d1, _ = _rows(r1)
    v2, d2, _ = _rows(r2)
    A = np.array([v1, v2, d1, d2])
    if abs(np.linalg.det(A)) < 1e-14:
        raise np.linalg.LinAlgError("singular radial biharmonic system")
    return np.linalg.solve(A, [values[0], values[1], slopes[0], slopes[1]])


@dataclass(frozen=True)
class RadialOracle:
    """Closed-form annulus quantities for inner inflow ``g1`` and outer wall ``g2``."""

    r1: float = 1.0
    r2: float = 2.0
    g1: float = 0.0
    g2: float = 1.0

    # potential flow: Psi = a + b ln r
    @property
    def b(self) -> float:
        return (self.g2 - self.g1) / np.log(self.r2 / self.r1)

    def psi_potential(self, r):
        return self.g1 + self.b * np.log(np.asarray(r) / self.r1)

    @property
    def z(self) -> float:
        """Outer-wall normal derivative of the potential stream function."""
        return self.b / self.r2

    @property
    def S_p(self) -> float:
        return -self.z

    @property
    def dS_p(self) -> float:
        """d/dR of -(g2 - g1) / (R ln(R / r1)) at R = r2."""
        L = np.log(self.r2 / self.r1)
        return (self.g2 - self.g1) * (L + 1) / (self.r2 * L) ** 2

    # Stokes flow
    @property
    def stokes_constants(self) -> np.ndarray:
        return biharmonic_radial(self.r1, self.r2, (self.g1, self.g2))

    def psi_stokes(self, r):
        A, B, C, D = self.stokes_constants
        r = np.asarray(r, dtype=float)
        return A + B * r * r + C * np.log(r) + D * r * r * np.log(r)

    def omega(self, r):
        _, B, _, D = self.stokes_constants
        return -4 * B - 4 * D * (np.log(np.asarray(r, dtype=float)) + 1)

    def dr_omega(self, r):
        return -4 * self.stokes_constants[3] / np.asarray(r, dtype=float)

    @property
    def S_s(self) -> float:
        return float(self.omega(self.r2))

    @property
    def dn_omega(self) -> float:
        return float(self.dr_omega(self.r2))

    @property
    def dS_s(self) -> float:
        """Total derivative in R of omega_R(R), by implicit differentiation of the 4x4 system."""
        R = self.r2
        c = self.stokes_constants
        v1, d1, _ = _rows(self.r1)
        v2, dv2, dd2 = _rows(R)
        A = np.array([v1, v2, d1, dv2])
        dA = np.zeros((4, 4))
        dA[1], dA[3] = dv2, dd2
        dc = -np.linalg.solve(A, dA @ c)
        _, B, _, D = c
        _, dB, _, dD = dc
        return float(-4 * dB - 4 * dD * (np.log(R) + 1) - 4 * D / R)


def radial_oracles(r1: float = 1.0, r2: float = 2.0, g1: float = 0.0, g2: float = 1.0) -> dict:
    """Outer-wall values of S, dS (uniform outward speed) and related quantities."""
    o = RadialOracle(r1, r2, g1, g2)
    return {"z": o.z, "S_p": o.S_p, "dS_p": o.dS_p, "omega": o.S_s, "dn_omega": o.dn_omega,
            "S_s": o.S_s, "dS_s": o.dS_s, "constants": tuple(o.stokes_constants)}


# ---------------------------------------------------------------------------
# Taylor and finite-difference tests
# ---------------------------------------------------------------------------


@dataclass
class TaylorReport:
    tag: str
    t: np.ndarray
    remainders: np.ndarray
    slope: float
    dropped: list = field(default_factory=list)
    exact: bool = False

    def __post_init__(self):
        if len(self.t) > 1 and np.any(np.diff(self.t) >= 0):
            raise ValueError("t values must be strictly decreasing")
        if not np.all(np.isfinite(self.remainders)):
            raise ValueError("non-finite remainder")

    def as_rows(self) -> list:
        return [(float(t), float(r)) for t, r in zip(self.t, self.remainders)]


def _eval_deformed(case: FlowCase, fld: DeformationField, t: float):
    # release factorizations in the creating thread; SuperLU leaks when freed from another one
    dc = case.deformed(fld, t)
    try:
        return evaluate(dc)
    finally:
        clear_mesh_cache(dc.mesh)


def _safe_eval(case: FlowCase, fld: DeformationField, t: float):
    try:
        return _eval_deformed(case, fld, t)
    except MeshError as exc:
        warnings.warn(f"dropping t={t:g}: {exc}", RuntimeWarning, stacklevel=3)
        return None


def taylor_test(case: FlowCase, fld: DeformationField, t_list: Sequence[float] = DEFAULT_T, *,
                kappa_term: bool = True, threads: int = 1) -> TaylorReport:
    """Remainders ``|S(Omega_tV) - S(Omega_0) - t dS(V)|`` on the wall and their log-log slope."""
    tag = ("dS_p" if case.kind == "potential" else "dS_s") + ("" if kappa_term else "[no kappa]")
    ts = np.sort(np.asarray(t_list, dtype=float))[::-1]
    if fld.is_zero:
        return TaylorReport(tag, ts, np.zeros(len(ts)), float("nan"), exact=True)
    case.extension(fld)
    S0 = evaluate(case)
    dS = linearize(case, fld, kappa_term=kappa_term)[0]
    St = _map(lambda t: _safe_eval(case, fld, t), list(ts), threads)
    keep = [i for i, s in enumerate(St) if s is not None]
    dropped = [float(ts[i]) for i in range(len(ts)) if St[i] is None]
    rem = np.array([(St[i] - S0 - ts[i] * dS).norm() for i in keep])
    return TaylorReport(tag, ts[keep], rem, loglog_slope(ts[keep], rem), dropped)


def fd_oracle(case: FlowCase, fld: DeformationField, t: float = 1e-2, *, threads: int = 1) -> WallProfile:
    """Central difference ``(S(Omega_tV) - S(Omega_-tV)) / 2t`` pulled back to the reference wall."""
    if fld.is_zero:
        return WallProfile(case.quadrature, np.zeros(len(case.quadrature)), "fd")
    case.extension(fld)
    plus, minus = _map(lambda s: _eval_deformed(case, fld, s), [t, -t], threads)
    return ((plus - minus) * (0.5 / t)).renamed("fd")


# ---------------------------------------------------------------------------
# Hadamard formulas
# ---------------------------------------------------------------------------


@dataclass
class HadamardReport:
    t: np.ndarray
    fd: np.ndarray
    formula: float
    residuals: np.ndarray  # relative to max(|formula|, 1)
    order: float


def _time_derivative(y, x1, x2, h=1e-3):
    return (-y(2 * h, x1, x2) + 8 * y(h, x1, x2) - 8 * y(-h, x1, x2) + y(-2 * h, x1, x2)) / (12 * h)


def _grad(f, x1, x2, h=1e-4):
    gx = (-f(x1 + 2 * h, x2) + 8 * f(x1 + h, x2) - 8 * f(x1 - h, x2) + f(x1 - 2 * h, x2)) / (12 * h)
    gy = (-f(x1, x2 + 2 * h) + 8 * f(x1, x2 + h) - 8 * f(x1, x2 - h) + f(x1, x2 - 2 * h)) / (12 * h)
    return gx, gy


def _report(ts, J, formula) -> HadamardReport:
    fd = np.array([(J(t) - J(-t)) / (2 * t) for t in ts])
    res = np.abs(fd - formula) / max(abs(formula), 1.0)
    return HadamardReport(ts, fd, float(formula), res, loglog_slope(ts, res))


def hadamard_domain_check(mesh: TriMesh, V: DeformationField, y: Callable, f: Callable,
                          t_list: Sequence[float] = DEFAULT_T, *, y_prime: Callable | None = None,
                          degree: int = 3) -> HadamardReport:
    """Central differences of ``J(t) = int_{Omega_t} y(t) f`` against
    ``int y' f dx + int_G y(0) f (V.n) ds``.

    ``y(t, x, y)`` is a family on the plane, so its shape derivative is the
    partial in ``t``.  Both sides are evaluated on the discrete domain and its
    transported copies, so the comparison isolates the formula.
    """
    ts = np.sort(np.asarray(t_list, dtype=float))[::-1]
    if V.is_zero:
        return _report(ts, lambda t: 0.0, 0.0)
    ext = harmonic_extension(mesh, V)

    def J(t):
        m = deform_mesh(mesh, V, t, extension=ext, check_admissible=False) if t else mesh
        return LagrangeSpace.of(m, degree).integrate(lambda a, b: y(t, a, b) * f(a, b))

    yp = y_prime if y_prime is not None else (lambda a, b: _time_derivative(y, a, b))
    vol = LagrangeSpace.of(mesh, degree).integrate(lambda a, b: yp(a, b) * f(a, b))
    # boundary term on the discrete boundary with the discrete normal speed
    xg, wg = np.polynomial.legendre.leggauss(8)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg
    N, dN = edge_shape(xg)
    X = mesh.nodes[mesh.bdofs]
    P = np.einsum("qa,eai->eqi", N, X)
    D = np.einsum("qa,eai->eqi", dN, X)
    th = np.einsum("qa,eai->eqi", N, ext[mesh.bdofs])
    vn_ds = th[..., 0] * D[..., 1] - th[..., 1] * D[..., 0]
    bnd = float(np.sum(wg * vn_ds * y(0.0, P[..., 0], P[..., 1]) * f(P[..., 0], P[..., 1])))
    return _report(ts, J, vol + bnd)


def hadamard_boundary_check(mesh: TriMesh, V: DeformationField, z: Callable, f: Callable,
                            t_list: Sequence[float] = DEFAULT_T, *, qorder: int = 6) -> HadamardReport:
    """Central differences of ``J(t) = int_{Gamma_t} z(t) f ds`` on the exact moved curve
    ``gamma + t v_n n`` against ``int z' f + (z dn f + kappa z f) v_n ds``.

    ``z(t, x, y)`` is a family on the plane; its boundary shape derivative is
    ``dz/dt + v_n dn z``.
    """
    ts = np.sort(np.asarray(t_list, dtype=float))[::-1]
    if V.is_zero:
        return _report(ts, lambda t: 0.0, 0.0)
    q = wall_quadrature(mesh, qorder, label=None)
    vn = V.normal_speed(q.loop, q.s)
    dvn = V.normal_speed_derivative(q.loop, q.s)
    n = q.normal
    x0, y0 = q.xy[:, 0], q.xy[:, 1]

    def J(t):
        p = q.xy + t * vn[:, None] * n
        stretch = np.sqrt((1 + t * q.kappa * vn) ** 2 + (t * dvn) ** 2)
        return float(np.sum(q.weight * stretch * z(t, p[:, 0], p[:, 1]) * f(p[:, 0], p[:, 1])))

    fx, fy = _grad(f, x0, y0)
    zx, zy = _grad(lambda a, b: z(0.0, a, b), x0, y0)
    dn_f = fx * n[:, 0] + fy * n[:, 1]
    dn_z = zx * n[:, 0] + zy * n[:, 1]
    z0, f0 = z(0.0, x0, y0), f(x0, y0)
    zprime = _time_derivative(z, x0, y0) + vn * dn_z
    formula = float(np.sum(q.weight * (zprime * f0 + (z0 * dn_f + q.kappa * z0 * f0) * vn)))
    return _report(ts, J, formula)


# ---------------------------------------------------------------------------
# pulled-back Laplacian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticField:
    """Vector field theta with first and second derivatives.

    ``fn(x, y)`` returns ``(theta (..., 2), D theta (..., 2, 2), D2 theta (..., 2, 2, 2))``
    with ``D theta[..., m, l] = d theta_m / dx_l`` and ``D2 theta[..., m, l, j] = d2 theta_m / dx_l dx_j``.
    """

    fn: Callable
    name: str = "theta"

    def __call__(self, x, y):
        return self.fn(x, y)


@dataclass(frozen=True)
class AnalyticScalar:
    """Scalar with derivatives: ``fn(x, y) -> (f, grad (..., 2), hess (..., 2, 2))``."""

    fn: Callable
    name: str = "f"

    def __call__(self, x, y):
        return self.fn(x, y)


def rotation_field(eps: float) -> AnalyticField:
    """theta = (R(eps) - I) x, a rigid rotation."""
    c, s = np.cos(eps), np.sin(eps)
    Dm = np.array([[c - 1, -s], [s, c - 1]])

    def fn(x, y):
        X = np.stack([x, y], axis=-1)
        th = X @ Dm.T
        D = np.broadcast_to(Dm, X.shape[:-1] + (2, 2))
        return th, D, np.zeros(X.shape[:-1] + (2, 2, 2))

    return AnalyticField(fn, f"rotation({eps:g})")


def radial_stretch(eps: float, center=(0.0, 0.0)) -> AnalyticField:
    """theta = eps sin(r^2) (x - c), smooth and nonlinear."""
    cx, cy = center

    def fn(x, y):
        X = np.stack([x - cx, y - cy], axis=-1)
        r2 = np.sum(X**2, axis=-1)
        a = eps * np.sin(r2)
        da = eps * np.cos(r2)[..., None] * 2 * X  # grad a
        dda = (eps * (-np.sin(r2))[..., None, None] * 4 * X[..., :, None] * X[..., None, :]
               + eps * np.cos(r2)[..., None, None] * 2 * np.eye(2))
        th = a[..., None] * X
        I2 = np.eye(2)
        D = a[..., None, None] * I2 + X[..., :, None] * da[..., None, :]
        # D2[m, l, j] = d_j (a delta_ml + X_m da_l)
        D2 = (I2[:, :, None] * da[..., None, None, :] + I2[:, None, :] * da[..., None, :, None]
              + X[..., :, None, None] * dda[..., None, :, :])
        return th, D, D2

    return AnalyticField(fn, f"radial_stretch({eps:g})")


def quadratic_scalar(a=1.0, b=1.0, c=0.0) -> AnalyticScalar:
    """f = a x^2 + b y^2 + c x y."""

    def fn(x, y):
        f = a * x * x + b * y * y + c * x * y
        g = np.stack([2 * a * x + c * y, 2 * b * y + c * x], axis=-1)
        H = np.broadcast_to(np.array([[2 * a, c], [c, 2 * b]]), np.shape(x) + (2, 2))
        return f, g, H

    return AnalyticScalar(fn, "quadratic")


def exp_cos_scalar(k: float = 1.0) -> AnalyticScalar:
    """f = exp(k x) cos(k y), harmonic."""

    def fn(x, y):
        e, c, s = np.exp(k * x), np.cos(k * y), np.sin(k * y)
        f = e * c
        g = np.stack([k * e * c, -k * e * s], axis=-1)
        H = np.stack([np.stack([k * k * e * c, -k * k * e * s], -1), np.stack([-k * k * e * s, -k * k * e * c], -1)], -2)
        return f, g, H

    return AnalyticScalar(fn, "exp_cos")


def pulled_back_laplacian(theta: AnalyticField, f: AnalyticScalar, x, y):
    """``(lap f)(x + theta)`` and ``lap_theta (f o (Id + theta))`` at the given points."""
    th, D, D2 = theta(x, y)
    DT = np.eye(2) + D
    det = DT[..., 0, 0] * DT[..., 1, 1] - DT[..., 0, 1] * DT[..., 1, 0]
    if np.any(np.abs(det) < 1e-12):
        raise ValueError("singular Jacobian of Id + theta")
    T = np.stack([x, y], axis=-1) + th
    _, g, H = f(T[..., 0], T[..., 1])
    lhs = np.trace(H, axis1=-2, axis2=-1)
    Minv = np.linalg.inv(DT)
    M = np.swapaxes(Minv, -1, -2)
    du = np.einsum("...m,...ml->...l", g, DT)
    ddu = np.einsum("...mn,...nj,...ml->...jl", H, DT, DT) + np.einsum("...m,...mlj->...jl", g, D2)
    # d_j M = -M (d_j DT)^T M with (d_j DT)_{ml} = D2[m, l, j]
    dDT = np.moveaxis(D2, -1, -3)  # [..., j, m, l]
    dM = -np.einsum("...ia,...jba,...bl->...jil", M, dDT, M)
    rhs = np.einsum("...ij,...jil,...l->...", M, dM, du) + np.einsum("...ij,...il,...jl->...", M, M, ddu)
    return lhs, rhs


def pulled_back_laplacian_check(mesh: TriMesh, theta: AnalyticField, f: AnalyticScalar) -> float:
    """Max relative mismatch of the pulled-back Laplacian identity at interior quadrature points."""
    x = LagrangeSpace.of(mesh, 2).points
    lhs, rhs = pulled_back_laplacian(theta, f, x[..., 0], x[..., 1])
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(lhs)))))
