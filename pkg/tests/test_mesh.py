import numpy as np
import pytest
from scipy.integrate import quad

from levytransport.mesh import (
    DGFunction,
    broken_error,
    broken_inner,
    broken_norm,
    build_mesh,
    gauss_rule,
    nodal_interpolate,
    project_L2,
)


def test_build_mesh_basic():
    mesh = build_mesh(8)
    assert mesh.n_elements == 8
    assert mesh.h == pytest.approx(0.125)
    assert np.allclose(mesh.boundaries, np.arange(9) / 8.0)
    assert np.allclose(np.diff(mesh.boundaries), mesh.h)


def test_build_mesh_single_element():
    mesh = build_mesh(1)
    assert mesh.h == 1.0
    assert np.allclose(mesh.boundaries, [0.0, 1.0])


def test_build_mesh_rejects_zero():
    with pytest.raises(ValueError):
        build_mesh(0)


def test_element_of():
    mesh = build_mesh(4)
    assert mesh.element_of(0.0) == 0
    assert mesh.element_of(0.25) == 1  # half-open convention
    assert mesh.element_of(0.999) == 3
    assert mesh.element_of(1.0) == 3
    with pytest.raises(ValueError):
        mesh.element_of(1.5)


def test_dgfunction_coefficient_count():
    mesh = build_mesh(3)
    with pytest.raises(ValueError):
        DGFunction(mesh, np.zeros(5))


def test_dgfunction_affine_inside_element():
    mesh = build_mesh(2)
    u = DGFunction(mesh, np.array([1.0, 3.0, 0.0, -2.0]))
    # value halfway through element 0 is the average of its nodal values
    assert u.eval(0.25) == pytest.approx(2.0)
    assert u.eval(0.75) == pytest.approx(-1.0)


def test_dgfunction_side_traces():
    mesh = build_mesh(2)
    u = DGFunction(mesh, np.array([0.0, 1.0, 5.0, 5.0]))
    assert u.eval(0.5, side="left") == pytest.approx(1.0)
    assert u.eval(0.5, side="right") == pytest.approx(5.0)
    assert u.eval(0.5) == pytest.approx(5.0)  # auto = owning element
    with pytest.raises(ValueError):
        u.eval(0.5, side="middle")


def test_eval_many_matches_eval():
    rng = np.random.default_rng(3)
    mesh = build_mesh(7)
    u = DGFunction(mesh, rng.standard_normal(14))
    xs = rng.random(50)
    expected = np.array([u.eval(x) for x in xs])
    assert np.allclose(u.eval_many(xs), expected)


def test_interface_jumps():
    mesh = build_mesh(3)
    u = DGFunction(mesh, np.array([0.0, 1.0, 4.0, 4.0, 2.0, 0.0]))
    assert np.allclose(u.interface_jumps(), [1.0 - 4.0, 4.0 - 2.0])


def test_broken_inner_matches_quadrature():
    rng = np.random.default_rng(11)
    mesh = build_mesh(5)
    u = DGFunction(mesh, rng.standard_normal(10))
    v = DGFunction(mesh, rng.standard_normal(10))
    total = 0.0
    for e in range(mesh.n_elements):
        xl, xr = mesh.boundaries[e], mesh.boundaries[e + 1]
        val, _ = quad(lambda x: u.eval(x) * v.eval(x), xl, xr)
        total += val
    assert broken_inner(u, v) == pytest.approx(total, rel=1e-12)


def test_broken_norm_of_constant():
    mesh = build_mesh(6)
    u = DGFunction(mesh, np.full(12, 2.0))
    assert broken_norm(u) == pytest.approx(2.0)


def test_project_reproduces_piecewise_linear():
    rng = np.random.default_rng(1)
    mesh = build_mesh(4)
    u = DGFunction(mesh, rng.standard_normal(8))
    p = project_L2(u, mesh)
    assert np.allclose(p.coefficients, u.coefficients)


def test_projection_orthogonality():
    # residual of the L2 projection is orthogonal to the DG space
    mesh = build_mesh(8)
    f = lambda x: np.sin(3.0 * x) + x * x
    f = np.vectorize(f)
    p = project_L2(f, mesh, n_gauss=10)
    gx, gw = gauss_rule(12)
    for e in (0, 3, 7):
        xl = mesh.boundaries[e]
        pts = xl + mesh.h * gx
        resid = f(pts) - np.array([p.eval(x) for x in pts])
        for phi in (1.0 - gx, gx):
            assert abs(mesh.h * np.sum(gw * resid * phi)) < 1e-12


def test_nodal_interpolate_exact_for_linears():
    mesh = build_mesh(5)
    f = lambda x: 2.0 * x - 1.0
    u = nodal_interpolate(f, mesh)
    assert u.eval(0.3) == pytest.approx(f(0.3))


def test_nodal_interpolate_one_sided():
    mesh = build_mesh(2)
    f = lambda x: 0.0 if x < 0.5 else 1.0
    u = nodal_interpolate(f, mesh, one_sided=True)
    assert u.eval(0.5, side="left") == pytest.approx(0.0)
    assert u.eval(0.5, side="right") == pytest.approx(1.0)


def test_broken_error_zero_on_self():
    rng = np.random.default_rng(4)
    mesh = build_mesh(6)
    u = DGFunction(mesh, rng.standard_normal(12))
    assert broken_error(u, u.eval_many) < 1e-13


def test_broken_error_matches_norm_of_difference():
    rng = np.random.default_rng(5)
    mesh = build_mesh(6)
    u = DGFunction(mesh, rng.standard_normal(12))
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    zero.vectorized = True
    assert broken_error(u, zero) == pytest.approx(broken_norm(u), rel=1e-12)


def test_to_csv_roundtrip_values():
    mesh = build_mesh(2)
    u = DGFunction(mesh, np.array([1.0, 2.0, 3.0, 4.0]))
    lines = u.to_csv().strip().split("\n")
    assert lines[0] == "element_index,x_left,x_right,value_left,value_right"
    parts = lines[1].split(",")
    assert float(parts[3]) == 1.0 and float(parts[4]) == 2.0
