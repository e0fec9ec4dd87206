import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from mgmpcg.fem import (
    BoundarySpec,
    DiffusionField,
    Dirichlet,
    FractureNetwork,
    Neumann,
    StructuredGrid,
    assemble,
    assemble_operator,
    boundary_flux,
    element_stiffness,
    equivalent_permeability,
    rasterize_fractures,
)


def symbolic_element_stiffness(kxx, kyy, hx, hy):
    """Exact Q1 stiffness by symbolic integration over [0, hx] x [0, hy]."""
    x, y = sympy.symbols("x y")
    X, Y = sympy.Rational(1), sympy.Rational(1)
    s, t = x / hx, y / hy
    phis = [(X - s) * (Y - t), s * (Y - t), s * t, (X - s) * t]  # counter-clockwise from (0, 0)
    K = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            integrand = kxx * sympy.diff(phis[a], x) * sympy.diff(phis[b], x) + kyy * sympy.diff(
                phis[a], y
            ) * sympy.diff(phis[b], y)
            K[a, b] = float(sympy.integrate(integrand, (x, 0, hx), (y, 0, hy)))
    return K


@pytest.mark.parametrize(
    "kxx,kyy,hx,hy",
    [(1, 1, 1, 1), (1e-6, 1, sympy.Rational(1, 160), sympy.Rational(1, 160)), (3, 0.5, 0.25, 0.125)],
)
def test_element_stiffness_matches_symbolic(kxx, kyy, hx, hy):
    got = element_stiffness(float(kxx), float(kyy), float(hx), float(hy))
    expect = symbolic_element_stiffness(sympy.nsimplify(kxx), sympy.nsimplify(kyy), hx, hy)
    np.testing.assert_allclose(got, expect, rtol=1e-14, atol=1e-14 * np.abs(expect).max())


def test_isotropic_unit_element_known_matrix():
    expect = np.array(
        [[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]
    ) / 6.0
    np.testing.assert_allclose(element_stiffness(1.0, 1.0, 0.3, 0.3), expect, atol=1e-15)


def test_interior_stencil_is_nine_point():
    grid = StructuredGrid(4, 4)
    K = assemble_operator(grid, DiffusionField.uniform(grid)).to_dense()
    row = K[grid.node_index(2, 2)].reshape(5, 5)[1:4, 1:4]
    np.testing.assert_allclose(row, np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]]) / 3.0, atol=1e-15)


def test_neumann_operator_kills_constants_and_is_psd(rng):
    grid = StructuredGrid(5, 3)
    k = rng.uniform(0.1, 10.0, grid.n_elements)
    K = assemble_operator(grid, DiffusionField(k, rng.uniform(0.1, 10.0, grid.n_elements))).to_dense()
    np.testing.assert_allclose(K @ np.ones(grid.n_nodes), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() > -1e-12


def dense_reference_solution(grid, k, f, g):
    """Reduced-system solve from element loops, Dirichlet value ``g`` on all sides."""
    n = grid.n_nodes
    K = np.zeros((n, n))
    F = np.zeros(n)
    Ke = symbolic_element_stiffness(sympy.Integer(1), sympy.Integer(1), sympy.Rational(1, grid.nx), sympy.Rational(1, grid.ny))
    for e, nodes in enumerate(grid.element_nodes()):
        K[np.ix_(nodes, nodes)] += k[e] * Ke
        F[nodes] += f * grid.hx * grid.hy / 4.0
    x, y = grid.node_coordinates()
    bnd = (np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1))
    u = np.where(bnd, g, 0.0)
    free = ~bnd
    u[free] = np.linalg.solve(K[np.ix_(free, free)], F[free] - K[np.ix_(free, bnd)] @ u[bnd])
    return u


def test_assembly_matches_dense_reference(rng):
    grid = StructuredGrid(4, 3)
    k = rng.uniform(0.5, 2.0, grid.n_elements)
    A, b = assemble(grid, DiffusionField(k, k), BoundarySpec.all_dirichlet(0.7), f=2.0)
    assert A.symmetric
    u = np.linalg.solve(A.to_dense(), b)
    np.testing.assert_allclose(u, dense_reference_solution(grid, k, 2.0, 0.7), rtol=1e-12, atol=1e-12)


def test_two_by_two_grid_single_unknown():
    grid = StructuredGrid(2, 2)
    A, b = assemble(grid, DiffusionField.uniform(grid), BoundarySpec.all_dirichlet(0.0), f=1.0)
    c = grid.node_index(1, 1)
    # Interior diagonal 8/3, load h^2 = 1/4.
    assert A.to_dense()[c, c] == pytest.approx(8.0 / 3.0, rel=1e-15)
    u = np.linalg.solve(A.to_dense(), b)
    assert u[c] == pytest.approx(0.25 * 3.0 / 8.0, rel=1e-14)
    assert np.count_nonzero(u) == 1


def test_patch_test_reproduces_linear_field():
    grid = StructuredGrid(6, 4)
    g = lambda x, y: 1.0 + 2.0 * x - 3.0 * y
    bc = BoundarySpec(Dirichlet(g), Dirichlet(g), Dirichlet(g), Dirichlet(g))
    A, b = assemble(grid, DiffusionField.uniform(grid, 1e-3, 7.0), bc)
    x, y = grid.node_coordinates()
    np.testing.assert_allclose(np.linalg.solve(A.to_dense(), b), g(x, y), atol=1e-12)


def test_patch_test_with_neumann_sides():
    # u = x with unit conductivity: flux -1 into the left, 0 through top/bottom.
    grid = StructuredGrid(5, 5)
    bc = BoundarySpec(left=Neumann(1.0), right=Dirichlet(1.0), bottom=Neumann(0.0), top=Neumann(0.0))
    coeff = DiffusionField.uniform(grid)
    A, b = assemble(grid, coeff, bc)
    u = np.linalg.solve(A.to_dense(), b)
    x, _ = grid.node_coordinates()
    np.testing.assert_allclose(u, 2.0 - x, atol=1e-12)
    assert boundary_flux(grid, coeff, bc, u) == pytest.approx(1.0, rel=1e-12)


def test_all_neumann_rejected():
    with pytest.raises(ValueError):
        BoundarySpec(Neumann(0.0), Neumann(0.0), Neumann(0.0), Neumann(0.0))


def test_nonpositive_coefficient_rejected():
    with pytest.raises(ValueError):
        DiffusionField(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


@settings(max_examples=100)
@given(
    st.integers(1, 5),
    st.integers(1, 5),
    st.floats(1e-6, 1e3),
    st.floats(1e-6, 1e3),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_assembled_system_is_spd_and_linear(nx, ny, kxx, kyy, f1, f2):
    grid = StructuredGrid(nx, ny)
    coeff = DiffusionField.uniform(grid, kxx, kyy)
    bc = BoundarySpec.all_dirichlet(0.0)
    A, b1 = assemble(grid, coeff, bc, f=f1)
    _, b2 = assemble(grid, coeff, bc, f=f2)
    _, b12 = assemble(grid, coeff, bc, f=f1 + f2)
    D = A.to_dense()
    assert np.array_equal(D, D.T)
    assert np.linalg.eigvalsh(D).min() > 0
    np.testing.assert_allclose(b12, b1 + b2, atol=1e-14 * (1 + abs(f1) + abs(f2)))


# -- fractures ------------------------------------------------------------------

def test_center_rasterization_marks_two_adjacent_rows():
    grid = StructuredGrid(8, 8)
    net = FractureNetwork([[0.0, 0.5, 1.0, 0.5]], delta=0.125, k_f=1e4, k_m=1.0)
    k = rasterize_fractures(grid, net, mode="center").kxx.reshape(8, 8)
    # Element centers at y = 0.4375 and 0.5625 are 1/16 = delta/2 away.
    expect = np.ones((8, 8))
    expect[3:5, :] = 1e4
    np.testing.assert_array_equal(k, expect)


def test_center_rasterization_matches_distance_oracle(rng):
    grid = StructuredGrid(10, 10)
    net = FractureNetwork([[0.1, 0.2, 0.9, 0.7], [0.5, 0.0, 0.5, 1.0]], delta=0.08, k_f=50.0, k_m=2.0)
    k = rasterize_fractures(grid, net, mode="center").kxx
    cx, cy = grid.element_centers()
    for e in range(grid.n_elements):
        p = np.array([cx[e], cy[e]])
        d = np.inf
        for x1, y1, x2, y2 in net.segments:
            a, v = np.array([x1, y1]), np.array([x2 - x1, y2 - y1])
            ts = np.linspace(0.0, 1.0, 20001)
            d = min(d, np.min(np.linalg.norm(a + ts[:, None] * v - p, axis=1)))
        if abs(d - 0.04) > 1e-4:
            assert k[e] == (50.0 if d < 0.04 else 2.0)


def test_thin_fracture_invisible_in_center_mode_but_seen_in_band_modes():
    grid = StructuredGrid(10, 10)
    net = FractureNetwork([[0.0, 0.33, 1.0, 0.33]], delta=1e-4, k_f=1e4, k_m=1.0)
    assert np.all(rasterize_fractures(grid, net, "center").kxx == 1.0)
    band = rasterize_fractures(grid, net, "band").kxx
    assert np.count_nonzero(band == 1e4) >= grid.nx
    up = rasterize_fractures(grid, net, "upscaled").kxx
    assert set(np.unique(up)) == {1.0, equivalent_permeability(net, 2 * np.sqrt(0.5) * 0.1)}


def test_equivalent_permeability_averages():
    cond = FractureNetwork(np.zeros((0, 4)), delta=0.1, k_f=11.0, k_m=1.0)
    assert equivalent_permeability(cond, 1.0) == pytest.approx(0.1 * 11 + 0.9)
    block = cond.with_params(k_f=0.1)
    assert equivalent_permeability(block, 1.0) == pytest.approx(1.0 / (0.1 / 0.1 + 0.9))
    assert equivalent_permeability(cond, 0.05) == 11.0


def test_network_json_round_trip(tmp_path):
    net = FractureNetwork.default()
    assert net.segments.shape[1] == 4 and len(net.segments) >= 5
    net.to_json(tmp_path / "n.json")
    back = FractureNetwork.from_json(tmp_path / "n.json")
    np.testing.assert_array_equal(back.segments, net.segments)
    assert (back.delta, back.k_f, back.k_m) == (net.delta, net.k_f, net.k_m)


def test_network_outside_domain_rejected():
    with pytest.raises(ValueError):
        FractureNetwork([[0.0, 0.0, 1.5, 0.5]])
