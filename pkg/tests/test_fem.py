import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from oracles import monomial_integral_reference, reference_mass_exact
from thermidor.errors import InvalidArgumentError
from thermidor.fem import (DEGREE4, assemble_convection, assemble_load,
                           assemble_mass, assemble_stiffness,
                           barycentric_gradients, collapsed_gauss_rule,
                           error_norms, evaluate_at_quad, integrate,
                           interpolate, make_space, quadrature_points)
from thermidor.mesh import build_structured_mesh, mesh_from_arrays

REF = mesh_from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
PI = np.pi


def sin_sin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def sin_sin_grad(x, y):
    return PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y)


def test_degree4_weights_and_exactness():
    assert DEGREE4.weights.sum() == pytest.approx(1.0, abs=1e-15)
    pts = DEGREE4.points[:, 1:]
    for a in range(5):
        for b in range(5 - a):
            q = 0.5 * np.sum(DEGREE4.weights * pts[:, 0] ** a * pts[:, 1] ** b)
            assert q == pytest.approx(monomial_integral_reference(a, b), abs=1e-15)


def test_degree4_is_not_degree5():
    pts = DEGREE4.points[:, 1:]
    errs = [abs(0.5 * np.sum(DEGREE4.weights * pts[:, 0] ** a * pts[:, 1] ** (5 - a))
                - monomial_integral_reference(a, 5 - a)) for a in range(6)]
    assert max(errs) > 1e-6


def test_collapsed_gauss_exactness():
    rule = collapsed_gauss_rule(6)
    pts = rule.points[:, 1:]
    for a in range(11):
        for b in range(11 - a):
            q = 0.5 * np.sum(rule.weights * pts[:, 0] ** a * pts[:, 1] ** b)
            assert q == pytest.approx(monomial_integral_reference(a, b), rel=1e-13)


def test_reference_mass():
    G = assemble_mass(make_space(REF, "neumann")).toarray()
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert np.abs(G - expected).max() <= 1e-14
    assert np.abs(G - reference_mass_exact()).max() <= 1e-14


def test_reference_stiffness():
    H = assemble_stiffness(make_space(REF, "neumann"), 1.0).toarray()
    expected = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    assert np.abs(H - expected).max() <= 1e-14


@pytest.mark.parametrize("n", [1, 3, 8])
def test_mass_properties(n):
    m = build_structured_mesh(n, n)
    space = make_space(m, "neumann")
    G = assemble_mass(space)
    assert G.sum() == pytest.approx(1.0, rel=1e-13)
    assert np.abs((G - G.T).toarray()).max() == 0.0
    row_sums = np.asarray(G.sum(axis=1)).ravel()
    hats = np.eye(space.n_dofs)
    ints = [np.sum(assemble_load(space, evaluate_at_quad(space, hats[j]))) for j in range(3)]
    assert np.allclose(row_sums[:3], ints, rtol=1e-13)


def test_mass_spd_up_to_1000_vertices():
    m = build_structured_mesh(30, 30)
    for kind in ("neumann", "dirichlet0"):
        G = assemble_mass(make_space(m, kind)).toarray()
        assert scipy.linalg.eigvalsh(G)[0] > 0


def test_csr_indices_sorted():
    G = assemble_mass(make_space(build_structured_mesh(5, 4), "dirichlet0"))
    for k in range(G.shape[0]):
        cols = G.indices[G.indptr[k]:G.indptr[k + 1]]
        assert np.all(np.diff(cols) > 0)


def test_stiffness_kernel_and_scaling():
    m = build_structured_mesh(6, 5)
    s = make_space(m, "neumann")
    H = assemble_stiffness(s, 1.7)
    assert np.abs(H @ np.ones(s.n_dofs)).max() <= 1e-13
    assert np.abs((assemble_stiffness(s, 2 * 1.7) - 2 * H).toarray()).max() == 0.0
    assert np.abs((H - H.T).toarray()).max() <= 1e-15
    ev = scipy.linalg.eigvalsh(H.toarray())
    assert abs(ev[0]) < 1e-12 and ev[1] > 1e-6


def test_stiffness_dirichlet_spd_and_interior_rows():
    m = build_structured_mesh(6, 6)
    s = make_space(m, "dirichlet0")
    H = assemble_stiffness(s, 1.0)
    assert scipy.linalg.eigvalsh(H.toarray())[0] > 0
    full = assemble_stiffness(make_space(m, "neumann"), 1.0)
    interior = s.vertex_of_dof
    assert np.abs(np.asarray(full[interior].sum(axis=1))).max() <= 1e-13


@pytest.mark.parametrize("coeff", [0.0, -1.0])
def test_stiffness_rejects_nonpositive(coeff):
    with pytest.raises(InvalidArgumentError):
        assemble_stiffness(make_space(REF, "neumann"), coeff)


@given(st.integers(0, 2 ** 31))
def test_energy_matches_elementwise(seed):
    m = build_structured_mesh(4, 3)
    s = make_space(m, "neumann")
    w = np.random.default_rng(seed).standard_normal(s.n_dofs)
    H = assemble_stiffness(s, 0.8)
    grads = np.einsum("ta,tax->tx", w[m.triangles], barycentric_gradients(m))
    energy = 0.8 * np.sum(m.areas * np.sum(grads ** 2, axis=1))
    assert w @ H @ w == pytest.approx(energy, rel=1e-12, abs=1e-12)


def test_assembly_independent_of_element_order():
    m = build_structured_mesh(5, 5)
    perm = np.random.default_rng(0).permutation(m.n_triangles)
    m2 = mesh_from_arrays(m.vertices, m.triangles[perm])
    for kind in ("neumann", "dirichlet0"):
        a = assemble_stiffness(make_space(m, kind), 1.3)
        b = assemble_stiffness(make_space(m2, kind), 1.3)
        assert np.abs((a - b).toarray()).max() <= 1e-13


def test_partition_of_unity():
    m = build_structured_mesh(5, 7)
    s = make_space(m, "neumann")
    assert np.abs(evaluate_at_quad(s, np.ones(s.n_dofs)) - 1).max() <= 1e-14


def test_convection_zero_and_linear():
    m = build_structured_mesh(4, 4)
    s = make_space(m, "dirichlet0")
    shape = (m.n_triangles, DEGREE4.n_points, 2)
    assert assemble_convection(s, np.zeros(shape)).count_nonzero() == 0
    rng = np.random.default_rng(1)
    v1, v2 = rng.standard_normal(shape), rng.standard_normal(shape)
    lhs = assemble_convection(s, v1 + v2)
    rhs = assemble_convection(s, v1) + assemble_convection(s, v2)
    assert np.abs((lhs - rhs).toarray()).max() <= 1e-13


def test_convection_constant_velocity_brute_force():
    m = build_structured_mesh(3, 3)
    s = make_space(m, "dirichlet0")
    b = np.array([0.7, -1.3])
    C = assemble_convection(s, np.broadcast_to(b, (m.n_triangles, DEGREE4.n_points, 2)))
    # dense reference: (b . grad phi_j, phi_k) over all elements, high-order rule
    rule = collapsed_gauss_rule(5)
    ref = np.zeros((s.n_dofs, s.n_dofs))
    grads = barycentric_gradients(m)
    for t in range(m.n_triangles):
        for a in range(3):
            for c in range(3):
                j, k = s.dof_of_vertex[m.triangles[t, a]], s.dof_of_vertex[m.triangles[t, c]]
                if j < 0 or k < 0:
                    continue
                phi_k = rule.points[:, c]
                ref[k, j] += m.areas[t] * np.sum(rule.weights * (grads[t, a] @ b) * phi_k)
    assert np.abs(C.toarray() - ref).max() <= 1e-13


def test_convection_rejects_wrong_layout():
    m = build_structured_mesh(2, 2)
    with pytest.raises(InvalidArgumentError):
        assemble_convection(make_space(m, "neumann"), np.zeros((m.n_triangles, 3, 2)))


def test_interpolate_reproduces_linear():
    m = build_structured_mesh(5, 4)
    s = make_space(m, "neumann")

    def f(x, y):
        return 2.0 - 3.0 * x + 0.5 * y
    coeffs = interpolate(s, f)
    qp = quadrature_points(m)
    assert np.abs(evaluate_at_quad(s, coeffs) - f(qp[..., 0], qp[..., 1])).max() <= 1e-14


def test_interpolate_dirichlet_discards_boundary():
    m = build_structured_mesh(4, 4)
    s = make_space(m, "dirichlet0")
    c = interpolate(s, lambda x, y: 1.0 + x)
    assert len(c) == 9
    assert np.allclose(c, 1.0 + s.dof_points[:, 0])


def test_interpolate_names_bad_vertex():
    s = make_space(build_structured_mesh(2, 2), "neumann")
    with pytest.raises(InvalidArgumentError, match="vertex 4"):
        interpolate(s, lambda x, y: np.where((x == 0.5) & (y == 0.5), np.nan, 1.0))


def test_interpolation_rates():
    errs = []
    for n in (8, 16, 32, 64):
        s = make_space(build_structured_mesh(n, n), "dirichlet0")
        errs.append(error_norms(s, interpolate(s, sin_sin), sin_sin, sin_sin_grad))
    errs = np.array(errs)
    l2_ratio = errs[:-1, 0] / errs[1:, 0]
    h1_ratio = errs[:-1, 1] / errs[1:, 1]
    assert np.all(np.abs(l2_ratio - 4) <= 0.4)
    assert np.all(np.abs(h1_ratio - 2) <= 0.2)


def test_error_norms_trivial_cases():
    m = build_structured_mesh(4, 4)
    s = make_space(m, "neumann")
    l2, h1 = error_norms(s, np.zeros(s.n_dofs), lambda x, y: 1.0)
    assert l2 == pytest.approx(1.0, abs=1e-14) and np.isnan(h1)
    c = np.random.default_rng(0).standard_normal(s.n_dofs)
    grads = np.einsum("ta,tax->tx", c[m.triangles], barycentric_gradients(m))
    qp_vals = evaluate_at_quad(s, c)
    l2, h1 = error_norms(s, c, lambda x, y: qp_vals,
                         lambda x, y: (grads[:, None, 0] + 0 * x, grads[:, None, 1] + 0 * x))
    assert l2 <= 1e-13 and h1 <= 1e-13


def test_error_norm_of_quadratic_against_fine_rule():
    m = build_structured_mesh(3, 3)
    s = make_space(m, "neumann")

    def q(x, y):
        return x * x - 2 * x * y + 0.5 * y * y

    def q_grad(x, y):
        return 2 * x - 2 * y, -2 * x + y
    c = interpolate(s, q)
    l2, h1 = error_norms(s, c, q, q_grad)
    rule = collapsed_gauss_rule(8)
    qp = quadrature_points(m, rule)
    w = rule.weights[None, :] * m.areas[:, None]
    uh = evaluate_at_quad(s, c, rule)
    ref_l2 = np.sqrt(np.sum(w * (uh - q(qp[..., 0], qp[..., 1])) ** 2))
    grads = np.einsum("ta,tax->tx", c[m.triangles], barycentric_gradients(m))
    gx, gy = q_grad(qp[..., 0], qp[..., 1])
    ref_h1 = np.sqrt(np.sum(w * ((grads[:, None, 0] - gx) ** 2 + (grads[:, None, 1] - gy) ** 2)))
    assert l2 == pytest.approx(ref_l2, abs=1e-10)
    assert h1 == pytest.approx(ref_h1, abs=1e-10)


def test_integrate_polynomial():
    m = build_structured_mesh(3, 2)
    assert integrate(m, lambda x, y: x ** 2 * y) == pytest.approx(1 / 6, abs=1e-14)


def test_make_space_rejects_unknown_kind():
    with pytest.raises(InvalidArgumentError):
        make_space(REF, "robin")
