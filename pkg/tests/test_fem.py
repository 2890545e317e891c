import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapeflow import fem, mesh
from shapeflow.fem import LagrangeSpace, WallProfile, wall_inner_product
from shapeflow.validation import loglog_slope, radial_oracles


def _radial_g(loop, s):
    return np.where(loop == 0, 1.0, 0.0)


@pytest.mark.parametrize("degree", [2, 3])
def test_constant_data_gives_constant(annulus_meshes, degree):
    u = fem.solve_laplace_dirichlet(annulus_meshes[0], 2.5, degree=degree)
    assert np.allclose(u.values, 2.5, atol=1e-12)


@pytest.mark.parametrize("degree", [2, 3, 4])
def test_linear_data_reproduced_on_disk(disk_mesh, degree):
    sp_ = LagrangeSpace.of(disk_mesh, degree)
    x = sp_.dof_coords
    u = sp_.dirichlet_solve(x[sp_.bnd, 0])
    assert np.max(np.abs(u - x[:, 0])) < 1e-11


def test_dof_count(annulus_meshes):
    m = annulus_meshes[0]
    for k in (2, 3, 4):
        sp_ = LagrangeSpace.of(m, k)
        want = m.nv + (k - 1) * len(m.edges) + len(m.triangles) * (k - 1) * (k - 2) // 2
        assert sp_.ndof == want


def test_annulus_log_solution_converges(annulus_meshes):
    err = []
    for m in annulus_meshes[:3]:
        u = fem.solve_laplace_dirichlet(m, _radial_g)
        x = u.space.dof_coords
        err.append(np.max(np.abs(u.values - np.log(np.linalg.norm(x, axis=1)) / np.log(2))))
    h = [m.hmax for m in annulus_meshes[:3]]
    assert err[-1] < 1e-4
    assert loglog_slope(h, err) >= 2.7


def test_maximum_principle(annulus_meshes):
    u = fem.solve_laplace_dirichlet(annulus_meshes[1], _radial_g)
    assert u.values.min() >= -1e-8 and u.values.max() <= 1 + 1e-8


def test_flux_annulus(annulus_meshes):
    err = []
    # level 0 is pre-asymptotic for the flux; rate over levels 1..3
    for m in annulus_meshes[1:]:
        u = fem.solve_laplace_dirichlet(m, _radial_g)
        q = mesh.wall_quadrature(m, 4)
        dn = fem.boundary_normal_derivative(u, q)
        err.append(np.max(np.abs(dn.values - 1 / (2 * np.log(2)))))
    h = [m.hmax for m in annulus_meshes[1:]]
    assert loglog_slope(h, err) >= 1.8


@pytest.mark.parametrize("degree", [2, 3])
def test_flux_balance(annulus_meshes, degree):
    # exact in the discrete boundary pairing, O(h^p) with the curve's own weights
    totals = []
    for m in annulus_meshes[:3]:
        sp_ = LagrangeSpace.of(m, degree)
        h = fem.boundary_flux(fem.solve_laplace_dirichlet(m, _radial_g, degree=degree))
        assert abs(np.sum(sp_.boundary_mass @ h)) < 1e-10
        q = mesh.wall_quadrature(m, 4, label=None)
        totals.append(abs(q.integrate(sp_.trace(h, q))))
    assert totals[-1] < 1e-5 and totals[2] < totals[0]


def test_constant_field_has_zero_flux(annulus_meshes):
    m = annulus_meshes[0]
    u = fem.solve_laplace_dirichlet(m, 3.0)
    q = mesh.wall_quadrature(m, 4)
    assert np.max(np.abs(fem.boundary_normal_derivative(u, q).values)) < 1e-10


def test_flux_of_x_on_disk(disk, disk_mesh):
    sp_ = LagrangeSpace.of(disk_mesh, 3)
    u = fem.ScalarField(sp_, sp_.dirichlet_solve(sp_.dof_coords[sp_.bnd, 0]))
    q = mesh.wall_quadrature(disk_mesh, 4, label=None)
    dn = fem.boundary_normal_derivative(u, q)
    assert np.max(np.abs(dn.values - q.normal[:, 0])) < 1e-3


def test_biharmonic_zero_data(annulus_meshes):
    psi, omega = fem.solve_biharmonic_mixed(annulus_meshes[0], 0.0)
    assert np.all(psi.values == 0) and np.all(omega.values == 0)


def test_biharmonic_annulus_oracle(annulus_meshes):
    from shapeflow.validation import RadialOracle
    o = RadialOracle(1.0, 2.0, 0.0, 1.0)
    err = []
    for m in annulus_meshes[:3]:
        psi, omega = fem.solve_biharmonic_mixed(m, _radial_g, degree=3)
        r = np.linalg.norm(psi.space.dof_coords, axis=1)
        err.append(np.max(np.abs(psi.values - o.psi_stokes(r))))
    h = [m.hmax for m in annulus_meshes[:3]]
    assert err[-1] < 1e-3
    assert loglog_slope(h, err) >= 1.5


def test_biharmonic_manufactured_disk(disk):
    # psi = (1 - r^2)(1 + x) is biharmonic, vanishes on r = 1, omega = 4 + 8x
    err = []
    hs = []
    for lev in (0, 1, 2):
        m = mesh.build_mesh(disk, 0.3, lev)
        q = mesh.wall_quadrature(m, 4, label=None)
        gn = WallProfile(q, -2 * (1 + q.xy[:, 0]))
        psi, omega = fem.solve_biharmonic_mixed(m, 0.0, gn, degree=3)
        x = psi.space.dof_coords
        exact = (1 - np.sum(x**2, axis=1)) * (1 + x[:, 0])
        err.append(np.max(np.abs(psi.values - exact)))
        interior = np.setdiff1d(np.arange(len(x)), psi.space.bnd)
        assert np.max(np.abs(omega.values[interior] - (4 + 8 * x[interior, 0]))) < 0.5
        hs.append(m.hmax)
    assert err[-1] < 1e-3
    assert loglog_slope(hs, err) >= 1.5


def test_vorticity_flux_balance(annulus_meshes):
    m = annulus_meshes[1]
    psi, omega = fem.solve_biharmonic_mixed(m, _radial_g, degree=3)
    assert abs(np.sum(omega.space.boundary_mass @ fem.boundary_flux(omega))) < 1e-8


def test_inner_product_examples(annulus_meshes):
    q = mesh.wall_quadrature(annulus_meshes[1], 4)
    one = WallProfile(q, np.ones(len(q)))
    assert wall_inner_product(one, one) == pytest.approx(4 * np.pi, abs=1e-8)
    s_mode, c_mode = WallProfile(q, np.sin(q.s / 2)), WallProfile(q, np.cos(q.s / 2))
    assert abs(wall_inner_product(s_mode, c_mode)) < 1e-10


def test_profiles_on_different_quadratures_rejected(annulus_meshes):
    q4, q3 = mesh.wall_quadrature(annulus_meshes[0], 4), mesh.wall_quadrature(annulus_meshes[0], 3)
    a, b = WallProfile(q4, np.ones(len(q4))), WallProfile(q3, np.ones(len(q3)))
    with pytest.raises(ValueError):
        wall_inner_product(a, b)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_inner_product_positive(annulus_meshes, c):
    q = mesh.wall_quadrature(annulus_meshes[0], 4)
    v = c[0] + c[1] * np.cos(q.s) + c[2] * np.sin(2 * q.s) + c[3] * q.s
    a = WallProfile(q, v)
    ip = wall_inner_product(a, a)
    assert ip >= 0
    assert (ip == 0) == bool(np.all(v == 0))


@settings(max_examples=10, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_solvers_are_linear(annulus_meshes, a, b):
    sp_ = LagrangeSpace.of(annulus_meshes[0], 3)
    loop, s = sp_.boundary_coords
    g1, g2 = np.cos(s), np.where(loop == 0, 1.0, 0.0)
    u = sp_.dirichlet_solve(np.column_stack([g1, g2, a * g1 + b * g2]))
    assert np.allclose(u[:, 2], a * u[:, 0] + b * u[:, 1], atol=1e-10)
    p, w = sp_.mixed_solve(np.column_stack([g1, g2, a * g1 + b * g2]))
    assert np.allclose(w[:, 2], a * w[:, 0] + b * w[:, 1], atol=1e-9 * (1 + np.abs(w).max()))


def test_triangle_rule_exactness():
    for n in (2, 3, 4, 5):
        x, w = fem.triangle_rule(n)
        assert np.sum(w) == pytest.approx(0.5)
        # monomials up to degree 2n - 1
        for i in range(2 * n):
            for j in range(2 * n - i):
                from math import factorial
                exact = factorial(i) * factorial(j) / factorial(i + j + 2)
                assert np.sum(w * x[:, 0] ** i * x[:, 1] ** j) == pytest.approx(exact, rel=1e-12, abs=1e-15)
