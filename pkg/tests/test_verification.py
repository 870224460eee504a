import numpy as np
import pytest

from thermidor.errors import SolverError
from thermidor.fem import (assemble_mass, barycentric_gradients, error_norms,
                           evaluate_at_quad, integrate, make_space)
from thermidor.mesh import build_structured_mesh
from thermidor.physics import ModelParams
from thermidor.verification import (EocTable, StudyProtocol, convergence_study,
                                    coupled_mms_case, exact_decoupled_case,
                                    field_names, mms_residuals, ritz_orthogonality_residual,
                                    ritz_project)

PI = np.pi
COUPLED = ModelParams(n_species=2, K=0.5, D=[0.4, 0.3], S=[0.1, 0.2], F=[0.3, 0.1],
                      A=[0.5, 0.2], B=[0.1, 0.3], beta_kernel=[[1.0, 0.5], [0.5, 2.0]],
                      delta=0.25)


def sin_sin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def sin_sin_grad(x, y):
    return PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y)


def fd_time(f, t, e=1e-5):
    return (f(t + e) - f(t - e)) / (2 * e)


def fd_laplacian(f, x, y, e=1e-4):
    return (f(x + e, y) + f(x - e, y) + f(x, y + e) + f(x, y - e) - 4 * f(x, y)) / e ** 2


def test_decoupled_heat_residual():
    case = exact_decoupled_case(K=0.7, D=[0.3, 1.1], n_species=2)
    rng = np.random.default_rng(0)
    x, y, t = rng.random((3, 100))
    # analytic derivatives of the eigenmode
    lap = -2 * PI ** 2 * case.theta(x, y, t)
    dt = -case.rate_theta * case.theta(x, y, t)
    assert np.abs(dt - 0.7 * lap).max() <= 1e-12
    for i, D in enumerate((0.3, 1.1)):
        u = case.u(i, x, y, t)
        assert np.abs(-case.rate_u[i] * u - D * (-2 * PI ** 2 * u)).max() <= 1e-12


def test_decoupled_residual_by_finite_differences():
    case = exact_decoupled_case(K=0.7)
    x, y, t = 0.3, 0.6, 0.05
    dt = fd_time(lambda s: case.theta(x, y, s), t)
    lap = fd_laplacian(lambda a, b: case.theta(a, b, t), x, y)
    assert dt - 0.7 * lap == pytest.approx(0.0, abs=1e-5)


def test_decoupled_boundary_conditions():
    case = exact_decoupled_case()
    s = np.random.default_rng(1).random(50)
    for t in (0.0, 0.3):
        # normal derivative of theta on the four sides
        assert np.abs(case.theta_grad(0 * s, s, t)[0]).max() <= 1e-15
        assert np.abs(case.theta_grad(1 + 0 * s, s, t)[0]).max() <= 1e-15
        assert np.abs(case.theta_grad(s, 0 * s, t)[1]).max() <= 1e-15
        assert np.abs(case.theta_grad(s, 1 + 0 * s, t)[1]).max() <= 1e-15
        for bx, by in ((0 * s, s), (s, 0 * s)):
            assert np.all(case.u(0, bx, by, t) == 0)
    # sin(pi) is 1.2e-16 in floating point
    assert np.abs(case.u(0, 1 + 0 * s, s, 0.0)).max() <= 1e-15


def test_decoupled_v_follows_deposition():
    case = exact_decoupled_case(K=1.0, D=1.0, A=0.5)
    t = 0.2
    r = case.rate_u[0]
    expected = 0.5 * (1 - np.exp(-r * t)) / r
    assert case.v(0, 0.5, 0.5, t) == pytest.approx(expected, rel=1e-9)


def test_coupled_residual_balance():
    case = coupled_mms_case(COUPLED)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        x = rng.random((1, 2))
        r = mms_residuals(case, x, rng.random())
        worst = max(worst, max(np.abs(a).max() for a in r))
    assert worst <= 1e-8


def test_coupled_forcing_vanishes_for_matched_heat_case():
    k = 1 / (2 * PI ** 2)
    p = ModelParams(n_species=3, K=k, D=k, S=0.0, F=0.0, A=0.0, B=0.0,
                    beta_kernel=0.0, delta=0.2)
    case = coupled_mms_case(p)
    pts = np.random.default_rng(3).random((20, 2))
    f_theta, f_u, _ = case.forcing(pts, 0.4)
    assert np.abs(f_theta).max() <= 1e-14 and np.abs(f_u).max() <= 1e-14


def test_coupled_initial_traces_are_nonnegative():
    init = coupled_mms_case(COUPLED).initial_data()
    g = np.linspace(0, 1, 41)
    pts = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    assert init.negative_samples(pts) == 0


def test_ritz_idempotent_on_space():
    m = build_structured_mesh(6, 6)
    rng = np.random.default_rng(4)
    for kind in ("dirichlet0", "neumann"):
        s = make_space(m, kind)
        c = rng.standard_normal(s.n_dofs)
        vals = s.to_vertices(c)
        grads = np.einsum("ta,tax->tx", vals[m.triangles], barycentric_gradients(m))
        ids = np.arange(m.n_triangles)

        def exact(x, y):
            # only sampled at the default quadrature points
            return evaluate_at_quad(s, c)

        def grad(x, y):
            return (np.broadcast_to(grads[ids, None, 0], x.shape),
                    np.broadcast_to(grads[ids, None, 1], x.shape))
        r = ritz_project(s, 1.3, exact, grad)
        assert np.abs(r - c).max() <= 1e-12 * max(1.0, np.abs(c).max())


def test_ritz_orthogonality_and_rate():
    errs = []
    for n in (8, 16, 32):
        s = make_space(build_structured_mesh(n, n), "dirichlet0")
        r = ritz_project(s, 0.8, sin_sin, sin_sin_grad)
        assert ritz_orthogonality_residual(s, 0.8, r, sin_sin_grad) <= 1e-10
        errs.append(error_norms(s, r, sin_sin)[0])
    eoc = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(eoc - 2) <= 0.2)


def test_ritz_neumann_fixes_mean():
    def cc(x, y):
        return np.cos(PI * x) * np.cos(PI * y) + 0.3

    def cc_grad(x, y):
        return -PI * np.sin(PI * x) * np.cos(PI * y), -PI * np.cos(PI * x) * np.sin(PI * y)
    s = make_space(build_structured_mesh(10, 10), "neumann")
    r = ritz_project(s, 1.0, cc, cc_grad)
    mean = np.ones(s.n_dofs) @ assemble_mass(s) @ r
    # the gauge matches the quadrature of the exact field, not its exact mean
    assert mean == pytest.approx(integrate(s.mesh, cc), abs=1e-12)
    assert mean == pytest.approx(0.3, abs=1e-8)
    assert ritz_orthogonality_residual(s, 1.0, r, cc_grad) <= 1e-10


def test_eoc_definition():
    t = EocTable(fields=["theta"])
    t.add(0.1, 0.01, {"theta": 0.04}, {"theta": 1.0})
    t.add(0.05, 0.0025, {"theta": 0.01}, {"theta": 0.5})
    assert t.eoc(0, "theta") is None
    assert t.eoc(1, "theta") == pytest.approx(2.0, abs=1e-15)
    t.add(0.025, 0.000625, {"theta": 0.0}, {"theta": 0.0})
    assert np.isnan(t.eoc(2, "theta"))
    assert "eoc theta" in t.format()


def test_eoc_recomputable_from_columns():
    case = exact_decoupled_case()
    table = convergence_study("space", case, StudyProtocol(t_end=0.02, nx0=4, levels=3))
    for f in table.fields:
        col = table.l2_column(f)
        for k, e in enumerate(table.eoc_column(f), start=1):
            if np.isnan(e):
                continue
            assert e == np.log2(col[k - 1] / col[k])
    assert [r.h for r in table.rows] == pytest.approx(np.sqrt(2) / np.array([4, 8, 16]))


def test_field_names():
    assert field_names(2) == ["theta", "u_1", "u_2", "v_1", "v_2"]


def test_study_rejects_unknown_kind():
    with pytest.raises(ValueError):
        convergence_study("both", exact_decoupled_case(), StudyProtocol())


def test_study_failure_attaches_partial_table(monkeypatch):
    import thermidor.verification as ver
    real = ver.run_simulation
    calls = []

    def flaky(disc, *args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("forced failure", residual=1.0, tag="theta")
        return real(disc, *args, **kwargs)
    monkeypatch.setattr(ver, "run_simulation", flaky)
    with pytest.raises(SolverError) as err:
        convergence_study("space", exact_decoupled_case(),
                          StudyProtocol(t_end=0.01, nx0=4, levels=3))
    assert len(err.value.partial_table.rows) == 1


def test_time_study_uses_fixed_mesh():
    table = convergence_study("time", exact_decoupled_case(K=0.1, D=0.1),
                              StudyProtocol(t_end=0.2, nx_fine=8, levels=3, tau0=0.1))
    assert len({r.h for r in table.rows}) == 1
    assert [r.tau for r in table.rows] == [0.1, 0.05, 0.025]
