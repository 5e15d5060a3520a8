import numpy as np
import pytest
import scipy.sparse as sps

from mixedpinn import analytic, fem
from mixedpinn.domain import Geometry, MaterialField, build_geometry1, build_geometry2


def _homog(**kw):
    return Geometry(), MaterialField.homogeneous(**kw)


def _offgrid(m=97):
    # cell-centred points never coincide with nodes of the 25/50/100 meshes
    c = (np.arange(m) + 0.5) / m
    X, Y = np.meshgrid(c, c)
    return np.column_stack([X.ravel(), Y.ravel()])


def test_shape_functions_partition_unity():
    for xi, eta in [(0, 0), (0.3, -0.7), (1, 1)]:
        N, dxi, deta = fem.shape_functions(xi, eta)
        assert N.sum() == pytest.approx(1.0)
        assert dxi.sum() == pytest.approx(0.0) and deta.sum() == pytest.approx(0.0)


@pytest.mark.parametrize("n", [3, 8, 17])
def test_homogeneous_temperature_is_exact_at_nodes(n):
    mesh = fem.QuadMesh(n, n, *_homog(k=2.0))
    T, _ = fem.solve_thermal(mesh)
    assert np.max(np.abs(T - (1 - mesh.nodes[:, 0]))) < 1e-12


def test_matching_inclusion_equals_homogeneous():
    geo, _ = build_geometry1()
    mat = MaterialField(0.3, 0.3, 0.7, 0.7)
    a = fem.solve(geo, mat, 20)
    b = fem.solve(Geometry(), mat, 20)
    assert np.array_equal(a.T, b.T)
    assert np.allclose(a.u_x, b.u_x, atol=1e-15)


def test_matrices_are_symmetric_positive_definite():
    geo, mat = build_geometry2()
    mesh = fem.QuadMesh(12, 12, geo, mat)
    T, Kt = fem.solve_thermal(mesh)
    _, Km = fem.solve_mechanical(mesh, T)
    for K, fixed in ((Kt, np.concatenate([mesh.boundary_nodes("left"), mesh.boundary_nodes("right")])),
                     (Km, None)):
        assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
        if fixed is not None:
            free = np.setdiff1d(np.arange(K.shape[0]), fixed)
            Kff = K[free][:, free].toarray()
            np.linalg.cholesky(Kff)


def test_no_expansion_means_no_displacement():
    sol = fem.solve(*_homog(alpha=0.0), 10)
    assert np.all(sol.u_x == 0.0) and np.all(sol.u_y == 0.0)
    assert np.all(sol.nodal["sxx"] == 0.0)


def test_patch_with_all_dirichlet_edges_and_no_load():
    mesh = fem.QuadMesh(6, 6, *_homog(alpha=0.0))
    T, _ = fem.solve_thermal(mesh)
    u, K = fem.solve_mechanical(mesh, T)
    assert np.all(u == 0.0)
    # the stiffness annihilates rigid translations before constraints
    assert np.allclose(K @ np.tile([1.0, 0.0], mesh.n_nodes), 0.0, atol=1e-12)
    assert np.allclose(K @ np.tile([0.0, 1.0], mesh.n_nodes), 0.0, atol=1e-12)


def test_homogeneous_thermoelastic_converges_at_second_order():
    geo, mat = _homog()
    pts = _offgrid()
    ref = analytic.homogeneous_solution(pts[:, 0], pts[:, 1])
    errs = []
    for n in (25, 50, 100):
        s = fem.solve(geo, mat, n).interpolate(pts, ("u_x", "u_y"))
        errs.append(np.max(np.abs(s["u_x"] - ref["u_x"])))
        assert np.max(np.abs(s["u_y"])) < 1e-12
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.3), orders


def test_homogeneous_nodal_displacement_matches_closed_form():
    sol = fem.solve(*_homog(), 16)
    ref = analytic.homogeneous_solution(sol.mesh.nodes[:, 0], sol.mesh.nodes[:, 1])
    assert np.max(np.abs(sol.u_x - ref["u_x"])) < 1e-12


def test_heat_balance():
    geo, mat = build_geometry1()
    sol = fem.solve(geo, mat, 40)
    q_in, q_out = sol.heat_balance()
    assert q_in > 0
    assert abs(q_in - q_out) <= 1e-10 * abs(q_in)


def test_geometry1_symmetries():
    geo, mat = build_geometry1()
    sol = fem.solve(geo, mat, 40)
    n1 = 41
    T = sol.T.reshape(n1, n1)
    ux = sol.u_x.reshape(n1, n1)
    uy = sol.u_y.reshape(n1, n1)
    assert np.max(np.abs(T + T[:, ::-1] - 1.0)) < 1e-12
    assert np.max(np.abs(ux - ux[::-1, :])) < 1e-12
    assert np.max(np.abs(uy + uy[::-1, :])) < 1e-12


def test_ux_mirror_in_x_with_centred_reference_temperature():
    # the x-reflection maps T - T0 to -(T - T0) only when T0 = 1/2;
    # the thermal load then flips sign together with the reflection of u_x
    geo, mat = build_geometry1(T0=0.5)
    sol = fem.solve(geo, mat, 30)
    ux = sol.u_x.reshape(31, 31)
    assert np.max(np.abs(ux - ux[:, ::-1])) < 1e-12


def test_convergence_study_shapes_and_trivial_cases():
    geo, mat = _homog()
    assert fem.convergence_study(geo, mat, [10]) == []
    rows = fem.convergence_study(geo, mat, [5, 10, 20], fields=("T",))
    assert len(rows) == 2
    assert all(r["T"] < 1e-12 for r in rows)
    with pytest.raises(ValueError):
        fem.convergence_study(geo, mat, [20, 10])


def test_geometry2_successive_differences_shrink():
    geo, mat = build_geometry2()
    rows = fem.convergence_study(geo, mat, [20, 40, 80], fields=("T", "u_x"))
    assert rows[1]["T"] < rows[0]["T"]
    assert rows[1]["u_x"] < rows[0]["u_x"]


def test_interpolation_reproduces_nodes():
    geo, mat = build_geometry1()
    sol = fem.solve(geo, mat, 12)
    vals = sol.interpolate(sol.mesh.nodes)
    for f in fem.OUTPUT_FIELDS:
        assert np.allclose(vals[f], sol.nodal_field(f), rtol=0, atol=1e-14), f


def test_interpolation_rejects_outside():
    sol = fem.solve(*_homog(), 4)
    with pytest.raises(ValueError):
        sol.interpolate(np.array([[1.5, 0.5]]))


def test_gauss_sampling_option():
    geo, mat = build_geometry1()
    a = fem.solve(geo, mat, 16, sampling="gauss")
    b = fem.solve(geo, mat, 16)
    assert a.T.shape == b.T.shape
    assert not np.array_equal(a.T, b.T)
    with pytest.raises(ValueError):
        fem.QuadMesh(4, 4, geo, mat, sampling="nodes")


# -- metrics and export ----------------------------------------------------------

def test_error_metrics_identity_and_offset():
    f = np.linspace(-2.0, 1.0, 50)
    m = fem.error_metrics({"T": f}, {"T": f})["T"]
    assert m["avg_rel_pct"] == 0.0 and m["max_rel_pct"] == 0.0
    m = fem.error_metrics({"T": f + 0.01 * 2.0}, {"T": f})["T"]
    assert m["avg_rel_pct"] == pytest.approx(1.0) and m["max_rel_pct"] == pytest.approx(1.0)
    assert np.allclose(m["diff"], 0.02)


def test_error_metrics_zero_reference():
    with pytest.raises(ValueError):
        fem.error_metrics({"u_y": np.ones(3)}, {"u_y": np.zeros(3)})


def test_csv_round_trip_is_byte_identical(tmp_path):
    geo, mat = build_geometry1()
    sol = fem.solve(geo, mat, 8)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sol.write_csv(a)
    pts, vals = fem.read_fields_csv(a)
    fem.write_fields_csv(b, pts, vals)
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0]
    assert header.startswith("x [mm],y [mm],T [")
    assert "sxx [GPa]" in header


def test_vtk_export(tmp_path):
    sol = fem.solve(*_homog(), 3)
    p = tmp_path / "f.vtk"
    sol.write_vtk(p)
    text = p.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DIMENSIONS 4 4 1" in text
    assert "SCALARS T double 1" in text
    assert "VECTORS displacement double" in text


def test_sparse_matrices_are_csr():
    mesh = fem.QuadMesh(3, 3, *_homog())
    assert sps.isspmatrix_csr(fem.conductivity_matrix(mesh))
