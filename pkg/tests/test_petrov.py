import numpy as np
import pytest
from scipy.integrate import quad

from levytransport.mesh import DGFunction, build_mesh
from levytransport import petrov
from levytransport.petrov import (
    SchemeMatrices,
    assemble,
    bilinear_Bh,
    compress,
    edge_sum_quadratic,
    exp_moments,
    mass_matrix,
    spectral_norm,
)

make_test_function = petrov.test_function


@pytest.mark.parametrize("c,h", [(10.0, 0.1), (1.0, 0.25), (0.5, 0.01), (200.0, 0.03)])
def test_exp_moments_against_quadrature(c, h):
    for k in range(3):
        exact, _ = quad(lambda s: s**k * np.exp(-c * s), 0.0, h)
        assert exp_moments(c, h)[k] == pytest.approx(exact, rel=1e-12, abs=1e-18)


def test_exp_moments_accurate_on_both_branch_sides():
    # the series branch engages for c*h < 0.125; both sides of the switch
    # must agree with direct quadrature
    h = 0.1
    for c in (0.1249 / h, 0.1251 / h):
        moments = exp_moments(c, h)
        for k in range(3):
            exact, _ = quad(lambda s: s**k * np.exp(-c * s), 0.0, h)
            assert moments[k] == pytest.approx(exact, rel=1e-12)


def _random_dg(rng, n_el=8):
    mesh = build_mesh(n_el)
    return DGFunction(mesh, rng.standard_normal(2 * n_el))


def test_test_function_ode_identity():
    rng = np.random.default_rng(0)
    w = _random_dg(rng)
    v = make_test_function(w, dt=0.05, a=1.0)
    for x in (0.01, 0.2, 0.33, 0.71, 0.99):
        assert abs(v.ode_residual(x)) < 1e-12


def test_test_function_outflow_and_continuity():
    rng = np.random.default_rng(1)
    w = _random_dg(rng)
    v = make_test_function(w, dt=0.05, a=1.0)
    assert v.eval(0.0) == pytest.approx(0.0, abs=1e-15)
    for f in range(1, w.mesh.n_elements):
        x = w.mesh.boundaries[f]
        assert v.eval(x, side="left") == pytest.approx(v.eval(x, side="right"), abs=1e-12)


def test_test_function_invalid_parameters():
    rng = np.random.default_rng(2)
    w = _random_dg(rng)
    with pytest.raises(ValueError):
        petrov.TestFunction(w, dt=0.0, a=1.0)
    with pytest.raises(ValueError):
        petrov.TestFunction(w, dt=0.1, a=-1.0)


def test_bilinear_form_edge_sum_identity():
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = _random_dg(rng, n_el=6)
        v = make_test_function(w, dt=0.04, a=1.0)
        b = bilinear_Bh(v, v)
        assert b == pytest.approx(edge_sum_quadratic(v), abs=1e-12)
        assert b >= -1e-12  # coercive up to round-off


def test_bilinear_form_quadrature_path_agrees():
    rng = np.random.default_rng(4)
    w = _random_dg(rng, n_el=4)
    dt, a = 0.05, 1.0
    v = make_test_function(w, dt, a)
    via_quad = bilinear_Bh(
        w, lambda x, side="auto": v.eval(x, side), vprime=v.derivative, a=a, mesh=w.mesh
    )
    assert bilinear_Bh(w, v) == pytest.approx(via_quad, rel=1e-10)


def test_mass_matrix_matches_broken_inner():
    from levytransport.mesh import broken_inner

    rng = np.random.default_rng(5)
    mesh = build_mesh(5)
    M = mass_matrix(mesh).toarray()
    u = rng.standard_normal(10)
    v = rng.standard_normal(10)
    assert u @ M @ v == pytest.approx(
        broken_inner(DGFunction(mesh, u), DGFunction(mesh, v)), rel=1e-12
    )


def test_spectral_norm_against_svd():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((30, 30))
    exact = np.linalg.svd(A, compute_uv=False)[0]
    assert spectral_norm(A, rel_tol=1e-10, max_iter=2000) == pytest.approx(exact, rel=1e-6)


def test_compress_threshold_and_losses():
    mats = assemble(build_mesh(16), dt=0.002, a=1.0)
    dense = mats.rhs_mass
    kept = mats.rhs_compressed.toarray()
    dropped = dense - kept
    assert np.all(np.abs(dropped[dropped != 0.0]) < mats.compression_threshold)
    # retained entries are untouched
    mask = kept != 0.0
    assert np.array_equal(kept[mask], dense[mask])
    assert mats.n_retained == mats.rhs_compressed.nnz


def test_compress_rejects_bad_dt():
    with pytest.raises(ValueError):
        compress(np.eye(4), dt=0.0)


def test_assemble_rhs_entries_against_quadrature():
    mesh = build_mesh(4)
    dt, a = 0.03, 1.0
    mats = assemble(mesh, dt, a)
    n = 2 * mesh.n_elements
    for j in (0, 3, 5):
        e_j = np.zeros(n)
        e_j[j] = 1.0
        v_j = make_test_function(DGFunction(mesh, e_j), dt, a)
        for l in (1, 4, 6):
            e_l = np.zeros(n)
            e_l[l] = 1.0
            w_l = DGFunction(mesh, e_l)
            val = 0.0
            for e in range(mesh.n_elements):
                xl, xr = mesh.boundaries[e], mesh.boundaries[e + 1]
                got, _ = quad(lambda x: w_l.eval(x) * v_j.eval(x), xl, xr, limit=200)
                val += got
            assert mats.rhs_mass[l, j] == pytest.approx(val, abs=1e-14)


def test_assemble_lhs_is_mass_plus_rank_one():
    mesh = build_mesh(8)
    mats = assemble(mesh, dt=0.01, a=1.0)
    gap = mats.lhs - mats.mass.toarray() - mats.rank_one_correction()
    assert np.max(np.abs(gap)) < 1e-14


def test_assemble_consistency_lhs_rhs_bh():
    mesh = build_mesh(8)
    dt = 0.01
    mats = assemble(mesh, dt, a=1.0)
    assert np.allclose(mats.lhs, mats.rhs_mass + dt * mats.bh_mat)


def test_assemble_warns_beyond_inf_sup_limit():
    with pytest.warns(UserWarning):
        assemble(build_mesh(4), dt=0.5, a=1.0)
    with pytest.raises(ValueError):
        assemble(build_mesh(4), dt=-0.1, a=1.0)


def test_step_solve_matches_dense_solve():
    rng = np.random.default_rng(7)
    mesh = build_mesh(8)
    mats = assemble(mesh, dt=0.02, a=1.0)
    b = rng.standard_normal(16)
    x = mats.step_solve(b, compressed=False)
    expected = np.linalg.solve(mats.lhs.T, mats.rhs_mass.T @ b)
    assert np.allclose(x, expected, atol=1e-12)


def test_export_coo_header():
    mats = assemble(build_mesh(2), dt=0.05, a=1.0)
    text = mats.export_coo("mass")
    assert text.startswith("row,col,value\n")
    assert len(text.strip().split("\n")) == 1 + mats.mass.nnz
