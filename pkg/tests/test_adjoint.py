import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapeflow import adjoint as A
from shapeflow import geometry as G
from shapeflow import operators as O
from shapeflow.fem import WallProfile, wall_inner_product
from shapeflow.validation import _rows, biharmonic_radial, loglog_slope


@pytest.fixture(scope="module")
def pcase(annulus_meshes):
    return O.FlowCase(annulus_meshes[2], O.POTENTIAL)


@pytest.fixture(scope="module")
def scase(annulus_meshes):
    return O.FlowCase(annulus_meshes[2], O.STOKES)


def _wall_one(loop, s):
    return np.where(loop == 0, 1.0, 0.0)


def test_zero_multiplier(annulus, pcase, scase):
    Z = G.zero_field(annulus)
    assert np.all(A.adjoint_potential(pcase, Z).values == 0)
    phi, lap = A.adjoint_stokes(scase, Z)
    assert np.all(phi.values == 0) and np.all(lap.values == 0)


def test_adjoint_potential_radial(pcase):
    phi = A.adjoint_potential(pcase, _wall_one)
    r = np.linalg.norm(phi.space.dof_coords, axis=1)
    assert np.max(np.abs(phi.values - np.log(r) / np.log(2))) < 1e-5


def test_adjoint_stokes_radial(scase):
    phi, lap = A.adjoint_stokes(scase, _wall_one)
    c = biharmonic_radial(1.0, 2.0, values=(0.0, 0.0), slopes=(0.0, 1.0))
    x = phi.space.dof_coords
    r = np.linalg.norm(x, axis=1)
    exact = np.array([_rows(ri)[0] @ c for ri in r])
    assert np.max(np.abs(phi.values - exact)) < 1e-4
    # lap of A + B r^2 + C ln r + D r^2 ln r is 4B + 4D (ln r + 1)
    lap_exact = 4 * c[1] + 4 * c[3] * (np.log(r) + 1)
    interior = np.setdiff1d(np.arange(len(r)), phi.space.bnd)
    assert np.max(np.abs(lap.values[interior] - lap_exact[interior])) < 1e-2


@settings(max_examples=5, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_adjoints_are_linear(annulus, annulus_meshes, a, b):
    m = annulus_meshes[1]
    U = G.make_deformation(annulus, "cos", 0, k=1)
    W = G.make_deformation(annulus, "bump", 0, center=1.0, width=2.0)
    pc, sc = O.FlowCase(m, O.POTENTIAL), O.FlowCase(m, O.STOKES)
    p = [A.adjoint_potential(pc, f).values for f in (U, W, U * a + W * b)]
    assert np.allclose(p[2], a * p[0] + b * p[1], atol=1e-10)
    s = [A.adjoint_stokes(sc, f)[1].values for f in (U, W, U * a + W * b)]
    assert np.allclose(s[2], a * s[0] + b * s[1], atol=1e-8 * (1 + np.abs(s[2]).max()))


def test_multiplier_must_vanish_on_inflow(pcase):
    with pytest.raises(ValueError, match="inflow"):
        A.adjoint_potential(pcase, lambda loop, s: np.ones(len(s)))


def test_identity_trivial_cases(annulus, pcase, scase):
    Z = G.zero_field(annulus)
    V = G.make_deformation(annulus, "bump", 0, center=2.0, width=3.0)
    for c in (pcase, scase):
        assert A.identity_check(c, Z, V).residual == 0
        assert A.identity_check(c, V, Z).residual == 0


PAIRS = [("uniform", None, "uniform", None), ("bump", (2.0, 3.0), "cos", 2),
         ("bump", (2.0, 3.0), "bump", (5.0, 4.0)), ("cos", 1, "bump", (5.0, 4.0))]


def _field(dom, kind, arg):
    if kind == "uniform":
        return G.make_deformation(dom, "uniform", 0)
    if kind == "bump":
        return G.make_deformation(dom, "bump", 0, center=arg[0], width=arg[1])
    return G.make_deformation(dom, kind, 0, k=arg)


@pytest.mark.parametrize("kind", O.KINDS)
def test_identity_converges(annulus, annulus_meshes, kind):
    for vk, va, mk, ma in PAIRS:
        V, mu = _field(annulus, vk, va), _field(annulus, mk, ma)
        res = [A.identity_check(O.FlowCase(m, kind), V, mu).residual for m in annulus_meshes[:3]]
        assert res[-1] < 1e-3
        assert loglog_slope([m.hmax for m in annulus_meshes[:3]], res) >= 1.0


def test_response_matrix_symmetry(annulus, annulus_meshes):
    """<dS(V_i), mu_j> through the direct and adjoint routes agree entrywise."""
    c = O.FlowCase(annulus_meshes[2], O.POTENTIAL)
    Vs = G.fourier_basis(annulus, 4)
    mus = [G.make_deformation(annulus, "bump", 0, center=x, width=2.0) for x in (1.0, 4.0, 8.0)]
    for V in Vs:
        for mu in mus:
            r = A.identity_check(c, V, mu)
            assert abs(r.direct - r.adjoint) <= 1e-5 * max(r.scale, 1e-30)


def test_kappa_sign_mutation_breaks_identity(annulus, pcase):
    V = G.make_deformation(annulus, "uniform", 0)
    good = A.identity_check_potential(pcase, V, V).residual
    bad = A.identity_check_potential(pcase, V, V, kappa_sign=-1.0).residual
    assert good < 1e-6 and bad > 0.1


def test_robin_probe(annulus_meshes):
    for m in annulus_meshes[:3]:
        pos = A.robin_uniqueness_probe(m, 0.5).eigenvalue
        zero = A.robin_uniqueness_probe(m, 0.0).eigenvalue
        assert pos > 0 and zero > 0
        assert A.robin_uniqueness_probe(m, 1.0).eigenvalue >= pos
    # strongly negative curvature may cross zero; reported only
    assert np.isfinite(A.robin_uniqueness_probe(annulus_meshes[0], -3.0).eigenvalue)


@settings(max_examples=6, deadline=None)
@given(k1=st.floats(-1, 3), dk=st.floats(0, 2))
def test_robin_probe_monotone(annulus_meshes, k1, dk):
    m = annulus_meshes[0]
    e1 = A.robin_uniqueness_probe(m, k1).eigenvalue
    e2 = A.robin_uniqueness_probe(m, k1 + dk).eigenvalue
    assert e2 >= e1 - 1e-9


def test_robin_probe_report_is_deterministic(annulus_meshes):
    a = A.robin_uniqueness_probe(annulus_meshes[1], seed=3).as_dict()
    b = A.robin_uniqueness_probe(annulus_meshes[1], seed=3).as_dict()
    assert a == b and set(a) == {"eigenvalue", "level", "ndof"}


def test_obstruction_probe_zero_coefficient(annulus_meshes):
    c = O.FlowCase(annulus_meshes[1], O.STOKES)
    zero = WallProfile(c.quadrature, np.zeros(len(c.quadrature)))
    rep = A.stokes_obstruction_probe(c, zero)
    assert rep.dimension == 0
    assert rep.smallest == pytest.approx(1.0, rel=1e-8)


def test_obstruction_probe_threshold_stability(annulus_meshes):
    c = O.FlowCase(annulus_meshes[1], O.STOKES)
    rep = A.stokes_obstruction_probe(c, threshold=1e-2, sweep=(1e-3, 1e-2, 1e-1))
    assert len(set(rep.sweep.values())) == 1
    d = rep.as_dict()
    assert {"eigenvalue", "dimension", "threshold", "level"} <= set(d)
    assert len(rep.kernel) == rep.dimension


def test_c11_needs_nonzero_vorticity(annulus_meshes):
    c = O.FlowCase(annulus_meshes[0], O.STOKES, g=lambda loop, s: np.zeros(len(s)))
    with pytest.raises(A.ProbeError, match="quadrature point"):
        A.stokes_c11(c)
