"""Boundary curves, arc partitions and normal deformation fields.

Every curve is parameterized by arclength ``s`` in ``[0, L)``.  Loops are
traversed so that the domain lies to the left; the outward normal is then
the right-hand normal ``n = (t_y, -t_x)`` and ``tau = (-n_y, n_x)`` is the
unit tangent.  Curvature is positive where the domain is locally convex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

WALL = "wall"
INFLOW = "inflow"
LABELS = (INFLOW, WALL)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class GeometryError(ValueError):
    pass


class BoundaryCurve:
    """Closed curve re-parameterized by arclength.

    ``xy(u)``, ``dxy(u)`` and ``d2xy(u)`` describe the curve in a raw periodic
    parameter ``u`` in ``[0, period)``.  ``reverse=True`` flips the traversal
    direction, which is how holes are oriented clockwise.
    """

    def __init__(
        self,
        xy: Callable[[np.ndarray], np.ndarray],
        dxy: Callable[[np.ndarray], np.ndarray],
        d2xy: Callable[[np.ndarray], np.ndarray],
        period: float,
        reverse: bool = False,
        panels: int = 256,
        name: str = "curve",
    ):
        self._xy, self._dxy, self._d2xy = xy, dxy, d2xy
        self.period = float(period)
        self.reverse = bool(reverse)
        self.name = name
        self._knots = np.linspace(0.0, self.period, panels + 1)
        self._cum = np.concatenate([[0.0], np.cumsum(self._panel_lengths(self._knots))])
        self.length = float(self._cum[-1])

    # raw parameter helpers -------------------------------------------------
    def _speed(self, u):
        d = self._dxy(u)
        return np.hypot(d[..., 0], d[..., 1])

    def _panel_lengths(self, knots):
        a, b = knots[:-1], knots[1:]
        u = a[:, None] + (b - a)[:, None] * _GL_X[None, :]
        return (b - a) * (self._speed(u) @ _GL_W)

    def _arclength_of_u(self, u):
        u = np.asarray(u, dtype=float)
        j = np.clip(np.searchsorted(self._knots, u, side="right") - 1, 0, len(self._knots) - 2)
        a = self._knots[j]
        pts = a[..., None] + (u - a)[..., None] * _GL_X
        return self._cum[j] + (u - a) * (self._speed(pts) @ _GL_W)

    def _u_of_s(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        u = np.interp(s, self._cum, self._knots)
        for _ in range(30):
            du = (self._arclength_of_u(u) - s) / self._speed(u)
            u = u - du
            if np.max(np.abs(du), initial=0.0) < 1e-15 * self.period:
                break
        return u

    def _raw(self, s):
        s = np.asarray(s, dtype=float)
        if self.reverse:
            s = self.length - np.mod(s, self.length)
        u = self._u_of_s(s)
        sign = -1.0 if self.reverse else 1.0
        return u, sign

    # public geometry -------------------------------------------------------
    def point(self, s) -> np.ndarray:
        u, _ = self._raw(s)
        return self._xy(u)

    def tangent(self, s) -> np.ndarray:
        u, sign = self._raw(s)
        d = self._dxy(u)
        return sign * d / np.hypot(d[..., 0], d[..., 1])[..., None]

    def normal(self, s) -> np.ndarray:
        t = self.tangent(s)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def curvature(self, s) -> np.ndarray:
        u, sign = self._raw(s)
        d, dd = self._dxy(u), self._d2xy(u)
        cross = d[..., 0] * dd[..., 1] - d[..., 1] * dd[..., 0]
        # left-turning traversal (domain on the left) has positive cross product
        return sign * cross / np.hypot(d[..., 0], d[..., 1]) ** 3

    def polygon(self, n: int) -> np.ndarray:
        return self.point(np.arange(n) * self.length / n)


def circle(radius: float, center=(0.0, 0.0), hole: bool = False) -> BoundaryCurve:
    cx, cy = center
    r = float(radius)

    def xy(u):
        return np.stack([cx + r * np.cos(u), cy + r * np.sin(u)], axis=-1)

    def dxy(u):
        return np.stack([-r * np.sin(u), r * np.cos(u)], axis=-1)

    def d2xy(u):
        return np.stack([-r * np.cos(u), -r * np.sin(u)], axis=-1)

    curve = BoundaryCurve(xy, dxy, d2xy, 2 * np.pi, reverse=hole, name=f"circle(r={r:g})")
    curve.center, curve.radius = (float(cx), float(cy)), r
    return curve


def ellipse(a: float, b: float, center=(0.0, 0.0), hole: bool = False) -> BoundaryCurve:
    cx, cy = center

    def xy(u):
        return np.stack([cx + a * np.cos(u), cy + b * np.sin(u)], axis=-1)

    def dxy(u):
        return np.stack([-a * np.sin(u), b * np.cos(u)], axis=-1)

    def d2xy(u):
        return np.stack([-a * np.cos(u), -b * np.sin(u)], axis=-1)

    return BoundaryCurve(xy, dxy, d2xy, 2 * np.pi, reverse=hole, name=f"ellipse({a:g},{b:g})")


def fourier_curve(
    radius: float,
    modes: Sequence[tuple[int, float, float]],
    center=(0.0, 0.0),
    hole: bool = False,
) -> BoundaryCurve:
    """Star-shaped curve ``r(phi) = radius + sum(a cos(k phi) + b sin(k phi))``."""
    cx, cy = center
    modes = [(int(k), float(a), float(b)) for k, a, b in modes]

    def rad(u, order):
        out = np.full_like(u, radius if order == 0 else 0.0, dtype=float)
        for k, a, b in modes:
            c, s = np.cos(k * u), np.sin(k * u)
            if order == 0:
                out = out + a * c + b * s
            elif order == 1:
                out = out + k * (-a * s + b * c)
            else:
                out = out - k * k * (a * c + b * s)
        return out

    def xy(u):
        r = rad(u, 0)
        return np.stack([cx + r * np.cos(u), cy + r * np.sin(u)], axis=-1)

    def dxy(u):
        r, r1 = rad(u, 0), rad(u, 1)
        c, s = np.cos(u), np.sin(u)
        return np.stack([r1 * c - r * s, r1 * s + r * c], axis=-1)

    def d2xy(u):
        r, r1, r2 = rad(u, 0), rad(u, 1), rad(u, 2)
        c, s = np.cos(u), np.sin(u)
        return np.stack([r2 * c - 2 * r1 * s - r * c, r2 * s + 2 * r1 * c - r * s], axis=-1)

    return BoundaryCurve(xy, dxy, d2xy, 2 * np.pi, reverse=hole, name="fourier")


def spline_curve(control_points, hole: bool = False, degree: int = 5) -> BoundaryCurve:
    """Closed periodic spline through ``control_points`` (counterclockwise).

    The default degree is quintic: a cubic interpolant of a circle carries a
    curvature error of about h**2/12, far above 1e-6 at 64 points.
    """
    pts = np.asarray(control_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < degree + 2:
        raise GeometryError(f"need at least {degree + 2} control points of shape (n, 2)")
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    closed = np.vstack([pts, pts[:1]])
    chord = np.hypot(*np.diff(closed, axis=0).T)
    if np.any(chord <= 0):
        raise GeometryError("repeated control points")
    u = np.concatenate([[0.0], np.cumsum(chord)])
    spl = make_interp_spline(u, closed, k=degree, bc_type="periodic")
    d1, d2 = spl.derivative(1), spl.derivative(2)
    area = 0.5 * np.sum(closed[:-1, 0] * closed[1:, 1] - closed[1:, 0] * closed[:-1, 1])
    if area <= 0:
        raise GeometryError("control points must be ordered counterclockwise")
    period = u[-1]

    def wrap(f):
        return lambda t: f(np.mod(t, period))

    curve = BoundaryCurve(wrap(spl), wrap(d1), wrap(d2), period, reverse=hole, name="spline")
    curve.knots = u[:-1]
    curve.spline = spl
    _check_simple(curve)
    return curve


def _check_simple(curve: BoundaryCurve, n: int = 400) -> None:
    p = curve.polygon(n)
    a, b = p, np.roll(p, -1, axis=0)
    for i in range(n):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if len(j) == 0:
            continue
        if np.any(_segments_cross(a[i], b[i], a[j], b[j])):
            raise GeometryError(f"{curve.name} self-intersects near s={i * curve.length / n:.4g}")


def _segments_cross(p, q, a, b):
    def orient(x, y, z):
        return (y[..., 0] - x[..., 0]) * (z[..., 1] - x[..., 1]) - (y[..., 1] - x[..., 1]) * (z[..., 0] - x[..., 0])

    d1, d2 = orient(p, q, a), orient(p, q, b)
    d3, d4 = orient(a, b, p), orient(a, b, q)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def curvature(curve: BoundaryCurve, s) -> np.ndarray:
    return curve.curvature(s)


def normal_tangent(curve: BoundaryCurve, s) -> tuple[np.ndarray, np.ndarray]:
    n = curve.normal(s)
    return n, np.stack([-n[..., 1], n[..., 0]], axis=-1)


# ---------------------------------------------------------------------------
# partition of the boundary into labelled arcs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Arc:
    loop: int
    start: float
    end: float
    label: str
    value: float | None = None
    """Boundary data g on this arc; ``None`` on inflow arcs means a smooth ramp
    between the neighbouring arc values."""

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, s, period: float) -> np.ndarray:
        # points within round-off below the end belong to the next arc
        x = self.local(s, period)
        return x < self.length - 1e-14 * period

    def local(self, s, period: float) -> np.ndarray:
        """Arclength offset from the arc start, in ``[0, length)``; points within
        round-off before the start are snapped onto it."""
        x = np.mod(np.asarray(s, dtype=float) - self.start, period)
        return np.where(x >= period - 1e-14 * period, 0.0, x)


@dataclass(frozen=True)
class Domain:
    """Boundary loops (first one outer, counterclockwise) plus labelled arcs."""

    curves: tuple[BoundaryCurve, ...]
    arcs: tuple[Arc, ...]
    name: str = "domain"

    def __post_init__(self):
        if not self.curves:
            raise GeometryError("domain needs at least one loop")
        labels = {a.label for a in self.arcs}
        for lab in labels:
            if lab not in LABELS:
                raise GeometryError(f"unknown arc label {lab!r}")
        if WALL not in labels or INFLOW not in labels:
            raise GeometryError("partition needs at least one wall arc and one inflow arc")
        for k, c in enumerate(self.curves):
            arcs = sorted((a for a in self.arcs if a.loop == k), key=lambda a: a.start)
            if not arcs:
                raise GeometryError(f"loop {k} has no arcs")
            total = sum(a.length for a in arcs)
            if abs(total - c.length) > 1e-9 * c.length:
                raise GeometryError(f"arcs on loop {k} cover {total:.12g} of length {c.length:.12g}")
            for a, b in zip(arcs, arcs[1:] + arcs[:1]):
                gap = np.mod(b.start - a.end, c.length)
                if min(gap, c.length - gap) > 1e-9 * c.length and len(arcs) > 1:
                    raise GeometryError(f"arcs on loop {k} overlap or leave a gap at s={a.end:.6g}")
                if a.length <= 0:
                    raise GeometryError(f"empty arc on loop {k}")

    def loop_arcs(self, loop: int) -> list[Arc]:
        return sorted((a for a in self.arcs if a.loop == loop), key=lambda a: a.start)

    def arc_index(self, loop, s) -> np.ndarray:
        loop = np.broadcast_to(np.asarray(loop), np.shape(s))
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, -1, dtype=int)
        for i, a in enumerate(self.arcs):
            m = (loop == a.loop) & a.contains(s, self.curves[a.loop].length)
            out[m & (out < 0)] = i
        if np.any(out < 0):
            raise GeometryError("point not covered by any arc")
        return out

    def label_at(self, loop, s) -> np.ndarray:
        idx = self.arc_index(loop, s)
        return np.array([self.arcs[i].label for i in idx.ravel()]).reshape(idx.shape)

    def wall_length(self) -> float:
        return sum(a.length for a in self.arcs if a.label == WALL)

    def is_full_loop(self, arc: Arc) -> bool:
        return abs(arc.length - self.curves[arc.loop].length) <= 1e-9 * arc.length

    # curve data at (loop, s) pairs -----------------------------------------
    def _per_loop(self, loop, s, fn, shape=()):
        loop = np.broadcast_to(np.asarray(loop), np.shape(s))
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + shape)
        for k, c in enumerate(self.curves):
            m = loop == k
            if np.any(m):
                out[m] = fn(c, s[m])
        return out

    def point(self, loop, s):
        return self._per_loop(loop, s, lambda c, x: c.point(x), (2,))

    def normal(self, loop, s):
        return self._per_loop(loop, s, lambda c, x: c.normal(x), (2,))

    def curvature(self, loop, s):
        return self._per_loop(loop, s, lambda c, x: c.curvature(x))

    def boundary_data(self, loop, s) -> np.ndarray:
        """Dirichlet data g: constant per wall arc, smooth ramp on inflow arcs."""
        idx = self.arc_index(loop, s)
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for i, a in enumerate(self.arcs):
            m = idx == i
            if not np.any(m):
                continue
            if a.value is not None:
                out[m] = a.value
                continue
            arcs = self.loop_arcs(a.loop)
            j = arcs.index(a)
            v0 = arcs[j - 1].value
            v1 = arcs[(j + 1) % len(arcs)].value
            if v0 is None or v1 is None:
                raise GeometryError("ramp arc needs valued neighbours")
            x = a.local(s[m], self.curves[a.loop].length) / a.length
            out[m] = v0 + (v1 - v0) * smoothstep(x)
        return out


def smoothstep(x):
    """C^2 ramp from 0 to 1 on [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x * x)


def annulus(r_in: float = 1.0, r_out: float = 2.0, g_in: float = 0.0, g_out: float = 1.0,
            outer=None) -> Domain:
    """Annulus with the inner circle as inflow and the outer loop as wall."""
    outer = circle(r_out) if outer is None else outer
    inner = circle(r_in, hole=True)
    arcs = (
        Arc(0, 0.0, outer.length, WALL, g_out),
        Arc(1, 0.0, inner.length, INFLOW, g_in),
    )
    return Domain((outer, inner), arcs, name="annulus")


def channel_disk(curve: BoundaryCurve | None = None, g_low: float = 0.0, g_high: float = 1.0,
                 inflow_fraction: float = 0.15) -> Domain:
    """Single loop split into wall, inflow ramp, wall, inflow ramp (a bent channel)."""
    curve = circle(1.0) if curve is None else curve
    L = curve.length
    li = inflow_fraction * L / 2
    lw = L / 2 - li
    arcs = (
        Arc(0, 0.0, lw, WALL, g_low),
        Arc(0, lw, lw + li, INFLOW, None),
        Arc(0, lw + li, 2 * lw + li, WALL, g_high),
        Arc(0, 2 * lw + li, L, INFLOW, None),
    )
    return Domain((curve,), arcs, name="channel")


# ---------------------------------------------------------------------------
# deformation fields
# ---------------------------------------------------------------------------


class BasisFunction:
    """Normal speed supported on a single wall arc."""

    arc: Arc

    def value(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(BasisFunction):
    arc: Arc

    def value(self, x):
        return np.ones_like(x)

    def derivative(self, x):
        return np.zeros_like(x)


@dataclass(frozen=True)
class FourierMode(BasisFunction):
    """``cos`` / ``sin`` of ``2 pi k x / L`` on a closed wall loop, or a
    ``sin^2``-windowed mode ``cos(k pi x / L)`` on a partial arc."""

    arc: Arc
    k: int
    kind: str  # "cos" | "sin"
    closed: bool

    def _w(self, x):
        L = self.arc.length
        if self.closed:
            return np.ones_like(x), np.zeros_like(x)
        return np.sin(np.pi * x / L) ** 2, np.pi / L * np.sin(2 * np.pi * x / L)

    def _m(self, x):
        L = self.arc.length
        w = (2 * np.pi if self.closed else np.pi) * self.k / L
        if self.kind == "cos":
            return np.cos(w * x), -w * np.sin(w * x)
        return np.sin(w * x), w * np.cos(w * x)

    def value(self, x):
        w, _ = self._w(x)
        m, _ = self._m(x)
        return w * m

    def derivative(self, x):
        w, dw = self._w(x)
        m, dm = self._m(x)
        return dw * m + w * dm


@dataclass(frozen=True)
class Bump(BasisFunction):
    """C^2 bump ``(1 - u^2)^3`` with ``u = (x - center) / (width / 2)``."""

    arc: Arc
    center: float  # offset from arc start
    width: float
    period: float = 0.0  # nonzero on closed wall loops: wrap around

    def _u(self, x):
        d = x - self.center
        if self.period:
            d = (d + 0.5 * self.period) % self.period - 0.5 * self.period
        return 2 * d / self.width

    def value(self, x):
        u = self._u(x)
        return np.where(np.abs(u) < 1, (1 - u * u) ** 3, 0.0)

    def derivative(self, x):
        u = self._u(x)
        return np.where(np.abs(u) < 1, -6 * u * (1 - u * u) ** 2 * 2 / self.width, 0.0)


@dataclass(frozen=True)
class Sampled(BasisFunction):
    arc: Arc
    spline: CubicSpline

    def value(self, x):
        return self.spline(x)

    def derivative(self, x):
        return self.spline(x, 1)


@dataclass(frozen=True)
class DeformationField:
    """Normal speed ``v_n`` on the wall as a linear combination of basis functions.

    The induced displacement is ``V = v_n n`` on wall arcs and zero on inflow.
    """

    domain: Domain
    terms: tuple[tuple[float, BasisFunction], ...] = field(default_factory=tuple)
    name: str = "V"

    def _eval(self, loop, s, deriv: bool) -> np.ndarray:
        loop = np.broadcast_to(np.asarray(loop), np.shape(s))
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for c, b in self.terms:
            a = b.arc
            L = self.domain.curves[a.loop].length
            m = (loop == a.loop) & a.contains(s, L)
            if c == 0 or not np.any(m):
                continue
            x = a.local(s[m], L)
            out[m] += c * (b.derivative(x) if deriv else b.value(x))
        return out

    def normal_speed(self, loop, s) -> np.ndarray:
        return self._eval(loop, s, False)

    def normal_speed_derivative(self, loop, s) -> np.ndarray:
        """d v_n / ds along the traversal direction."""
        return self._eval(loop, s, True)

    def displacement(self, loop, s) -> np.ndarray:
        return self.normal_speed(loop, s)[..., None] * self.domain.normal(loop, s)

    def __add__(self, other: "DeformationField") -> "DeformationField":
        return DeformationField(self.domain, self.terms + other.terms, f"{self.name}+{other.name}")

    def __mul__(self, c: float) -> "DeformationField":
        return DeformationField(self.domain, tuple((c * a, b) for a, b in self.terms), f"{c:g}*{self.name}")

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c, _ in self.terms)


def zero_field(domain: Domain) -> DeformationField:
    return DeformationField(domain, (), "0")


def _wall_arc(domain: Domain, arc: int | None) -> Arc:
    walls = [a for a in domain.arcs if a.label == WALL]
    if arc is None:
        return walls[0]
    a = domain.arcs[arc]
    if a.label != WALL:
        raise GeometryError(f"arc {arc} is an inflow arc; deformations live on wall arcs only")
    return a


def make_deformation(domain: Domain, kind: str = "uniform", arc: int | None = None, *,
                     k: int = 0, center: float | None = None, width: float | None = None,
                     samples=None, amplitude: float = 1.0) -> DeformationField:
    """Build a single-term deformation field on one wall arc.

    ``kind`` is one of ``uniform``, ``cos``, ``sin``, ``bump`` or ``samples``.
    Offsets (``center``, sample positions) are measured from the arc start.
    """
    a = _wall_arc(domain, arc)
    closed = domain.is_full_loop(a)
    if kind == "uniform":
        if not closed:
            raise GeometryError("uniform speed is only admissible on a closed wall loop")
        b = Uniform(a)
    elif kind in ("cos", "sin"):
        if kind == "sin" and k == 0:
            raise GeometryError("sin mode needs k >= 1")
        if closed and kind == "cos" and k == 0:
            b = Uniform(a)
        else:
            b = FourierMode(a, int(k), kind, closed)
    elif kind == "bump":
        if center is None or width is None or width <= 0:
            raise GeometryError("bump needs center and positive width")
        if not closed and (center - width / 2 < 0 or center + width / 2 > a.length):
            raise GeometryError(
                f"bump support [{center - width / 2:.4g}, {center + width / 2:.4g}] leaves wall arc "
                f"of length {a.length:.4g} and would overlap an inflow arc"
            )
        if closed and width >= a.length:
            raise GeometryError("bump wider than the wall loop")
        b = Bump(a, float(center), float(width), a.length if closed else 0.0)
    elif kind == "samples":
        xs, vs = np.asarray(samples, dtype=float).T
        if closed:
            xs = np.append(xs, xs[0] + a.length)
            vs = np.append(vs, vs[0])
            spl = CubicSpline(xs, vs, bc_type="periodic")
        else:
            if np.any(xs < 0) or np.any(xs > a.length):
                raise GeometryError("samples outside the wall arc")
            if abs(vs[0]) > 0 or abs(vs[-1]) > 0 or xs[0] != 0 or abs(xs[-1] - a.length) > 1e-12:
                raise GeometryError("samples on a partial wall arc must start and end with value 0 at the arc ends")
            spl = CubicSpline(xs, vs, bc_type=((1, 0.0), (1, 0.0)))
        b = Sampled(a, spl)
    else:
        raise GeometryError(f"unknown deformation kind {kind!r}")
    return DeformationField(domain, ((float(amplitude), b),), name=f"{kind}{k if kind in ('cos', 'sin') else ''}")


def fourier_basis(domain: Domain, n: int, arc: int | None = None) -> list[DeformationField]:
    """Nested list of the first ``n`` modes: 1, cos1, sin1, cos2, sin2, ... on a closed
    wall loop; windowed cos0, cos1, ... on a partial arc."""
    a = _wall_arc(domain, arc)
    idx = domain.arcs.index(a)
    out = []
    if domain.is_full_loop(a):
        out.append(make_deformation(domain, "uniform", idx))
        k = 1
        while len(out) < n:
            out.append(make_deformation(domain, "cos", idx, k=k))
            if len(out) < n:
                out.append(make_deformation(domain, "sin", idx, k=k))
            k += 1
    else:
        for k in range(n):
            out.append(make_deformation(domain, "cos", idx, k=k))
    return out[:n]
