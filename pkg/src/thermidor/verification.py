"""Exact and manufactured solutions, Ritz projections and convergence
studies on the unit square."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ThermidorError
from .fem import assemble_load, assemble_mass, assemble_stiffness, error_norms
from .fem import quadrature_points, DEGREE4
from .linalg import solve_linear
from .mesh import UNIT_SQUARE, build_structured_mesh, refine_uniform
from .mollifier import make_kernel, mollified_gradient_fields
from .physics import (InitialData, ModelParams, deposition_closed_form,
                      smoluchowski_rates)
from .scheme import Discretization, Sources, run_simulation

PI = np.pi


def _cc(x, y):
    return np.cos(PI * x) * np.cos(PI * y)


def _cc_grad(x, y):
    return (-PI * np.sin(PI * x) * np.cos(PI * y),
            -PI * np.cos(PI * x) * np.sin(PI * y))


def _ss(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _ss_grad(x, y):
    return (PI * np.cos(PI * x) * np.sin(PI * y),
            PI * np.sin(PI * x) * np.cos(PI * y))


def _one(x, y):
    return np.ones(np.broadcast(x, y).shape)



class ManufacturedCase:
    """Closed-form solution triplet with the forcing that makes it exact.

    Fields are evaluated as ``theta(x, y, t)``, ``u(i, x, y, t)`` and
    ``v(i, x, y, t)`` with species index ``i`` counted from zero; the
    ``*_grad`` variants return ``(gx, gy)``.
    """

    params: ModelParams
    domain = UNIT_SQUARE

    @property
    def n_species(self):
        return self.params.n_species

    def initial_data(self):
        return InitialData(
            theta0=lambda x, y: self.theta(x, y, 0.0),
            u0=[lambda x, y, i=i: self.u(i, x, y, 0.0) for i in range(self.n_species)],
            v0=[lambda x, y, i=i: self.v(i, x, y, 0.0) for i in range(self.n_species)])

    def sources(self, disc):
        """:class:`Sources` for ``disc``, or None for source-free cases."""
        return None

    def errors(self, disc, state):
        """L2 and H1-seminorm errors per field at ``state.t``."""
        t = state.t
        l2, h1 = {}, {}
        l2["theta"], h1["theta"] = error_norms(
            disc.theta_space, state.beta,
            lambda x, y: self.theta(x, y, t), lambda x, y: self.theta_grad(x, y, t))
        for i in range(self.n_species):
            for name, coeffs, f, g in (("u", state.alpha[i], self.u, self.u_grad),
                                       ("v", state.gamma[i], self.v, self.v_grad)):
                key = f"{name}_{i + 1}"
                l2[key], h1[key] = error_norms(
                    disc.u_space, coeffs,
                    lambda x, y, f=f: f(i, x, y, t),
                    lambda x, y, g=g: g(i, x, y, t))
        return l2, h1


class DecoupledCase(ManufacturedCase):
    """Source-free eigenmode solution with all cross couplings switched off.

    ``theta = exp(-2 pi^2 K t) cos(pi x) cos(pi y)`` (homogeneous Neumann)
    and ``u_i = exp(-(2 pi^2 D_i + A_i) t) sin(pi x) sin(pi y)`` (homogeneous
    Dirichlet). With release rate zero, ``v_i`` follows from the deposition
    formula driven by the exact ``u_i``.
    """

    def __init__(self, K=1.0, D=1.0, n_species=1, A=0.0):
        self.params = ModelParams(n_species=n_species, K=K, D=D, S=0.0, F=0.0,
                                  A=A, B=0.0, beta_kernel=0.0, delta=0.1)
        p = self.params
        self.rate_theta = 2 * PI ** 2 * p.K
        self.rate_u = 2 * PI ** 2 * p.D + p.A

    def theta(self, x, y, t):
        return np.exp(-self.rate_theta * t) * _cc(x, y)

    def theta_grad(self, x, y, t):
        gx, gy = _cc_grad(x, y)
        a = np.exp(-self.rate_theta * t)
        return a * gx, a * gy

    def u(self, i, x, y, t):
        return np.exp(-self.rate_u[i] * t) * _ss(x, y)

    def u_grad(self, i, x, y, t):
        gx, gy = _ss_grad(x, y)
        a = np.exp(-self.rate_u[i] * t)
        return a * gx, a * gy

    def _v_factor(self, i, t):
        p = self.params
        return deposition_closed_form(p.A[i], p.B[i],
                                      lambda s: np.exp(-self.rate_u[i] * s), 0.0, t,
                                      panels_per_unit=4096)

    def v(self, i, x, y, t):
        return self._v_factor(i, t) * _ss(x, y)

    def v_grad(self, i, x, y, t):
        gx, gy = _ss_grad(x, y)
        a = self._v_factor(i, t)
        return a * gx, a * gy



def exact_decoupled_case(K=1.0, D=1.0, n_species=1, A=0.0):
    """Eigenmode solution of the decoupled system; forcing is zero."""
    return DecoupledCase(K=K, D=D, n_species=n_species, A=A)


class CoupledCase(ManufacturedCase):
    """Manufactured solution of the full system.

    ``theta = exp(-t) cos(pi x) cos(pi y) + 1``,
    ``u_i = exp(-t) sin(pi x) sin(pi y) / i``, ``v_i = u_i / 2``
    (species numbered from one). The forcings ``f_theta``, ``f_u``, ``f_v``
    are defined so that these fields solve the forced system exactly; the
    mollified gradients they contain are computed by adaptive quadrature.
    """

    def __init__(self, params, kernel=None, tol=1e-10):
        if kernel is not None and not np.isclose(kernel.delta, params.delta):
            raise InvalidArgumentError("kernel radius differs from params.delta")
        self.params = params
        self.kernel = kernel or make_kernel(params.delta)
        self.tol = tol
        self.inv_i = 1.0 / np.arange(1, params.n_species + 1)

    def theta(self, x, y, t):
        return np.exp(-t) * _cc(x, y) + 1.0

    def theta_grad(self, x, y, t):
        gx, gy = _cc_grad(x, y)
        return np.exp(-t) * gx, np.exp(-t) * gy

    def u(self, i, x, y, t):
        return self.inv_i[i] * np.exp(-t) * _ss(x, y)

    def u_grad(self, i, x, y, t):
        gx, gy = _ss_grad(x, y)
        a = self.inv_i[i] * np.exp(-t)
        return a * gx, a * gy

    def v(self, i, x, y, t):
        return 0.5 * self.u(i, x, y, t)

    def v_grad(self, i, x, y, t):
        gx, gy = self.u_grad(i, x, y, t)
        return 0.5 * gx, 0.5 * gy

    def mollified_profiles(self, points):
        """Mollified gradients of the spatial profiles ``cos cos``, ``1`` and
        ``sin sin`` at ``points``; shape (3,) + points.shape."""
        return mollified_gradient_fields(self.kernel, [_cc, _one, _ss], self.domain,
                                         points, tol=self.tol)

    def forcing(self, points, t, profiles=None):
        """Forcing values at ``points`` (..., 2) and time ``t``.

        Returns ``(f_theta, f_u, f_v)`` with ``f_u``, ``f_v`` of shape
        (N,) + points.shape[:-1].
        """
        p = self.params
        if profiles is None:
            profiles = self.mollified_profiles(points)
        g_cc, g_one, g_ss = profiles
        x, y = points[..., 0], points[..., 1]
        e = np.exp(-t)
        grad_theta = np.stack(self.theta_grad(x, y, t), axis=-1)
        mgrad_theta = e * g_cc + g_one
        # sum_i S_i grad_delta u_i
        soret_vel = (p.S @ self.inv_i) * e * g_ss
        cc = _cc(x, y)
        f_theta = (-e * cc + p.K * 2 * PI ** 2 * e * cc
                   - np.sum(soret_vel * grad_theta, axis=-1))

        u = np.array([self.u(i, x, y, t) for i in range(p.n_species)])
        v = 0.5 * u
        R = smoluchowski_rates(p, u)
        f_u = np.empty_like(u)
        for i in range(p.n_species):
            grad_u = np.stack(self.u_grad(i, x, y, t), axis=-1)
            f_u[i] = (-u[i] + p.D[i] * 2 * PI ** 2 * u[i]
                      - p.F[i] * np.sum(mgrad_theta * grad_u, axis=-1)
                      + p.A[i] * u[i] - p.B[i] * v[i] - R[i])
        col = (-1,) + (1,) * (u.ndim - 1)
        f_v = -v - p.A.reshape(col) * u + p.B.reshape(col) * v
        return f_theta, f_u, f_v

    def sources(self, disc):
        return ManufacturedSources(self, disc)


class ManufacturedSources(Sources):
    """Loads of a :class:`CoupledCase` forcing on one discretization. The
    mollified profile gradients are computed once at the quadrature points."""

    def __init__(self, case, disc):
        self.case = case
        self.disc = disc
        self.points = disc.quad_points
        self.profiles = case.mollified_profiles(self.points)
        self.nodes = disc.u_space.dof_points
        self._cache_t = None

    def _at(self, t):
        if self._cache_t != t:
            f_theta, f_u, _ = self.case.forcing(self.points, t, self.profiles)
            self._theta = assemble_load(self.disc.theta_space, f_theta, self.disc.rule)
            self._u = [assemble_load(self.disc.u_space, f, self.disc.rule) for f in f_u]
            # f_v contains no mollified term; evaluate it at the nodes directly
            dummy = np.zeros((3,) + self.nodes.shape)
            self._v = self.case.forcing(self.nodes, t, dummy)[2]
            self._cache_t = t

    def theta_load(self, t):
        self._at(t)
        return self._theta

    def u_load(self, i, t):
        self._at(t)
        return self._u[i]

    def v_nodal(self, i, t):
        self._at(t)
        return self._v[i]


def coupled_mms_case(params, kernel=None, tol=1e-10):
    return CoupledCase(params, kernel=kernel, tol=tol)


def mollified_gradient_by_parts(kernel, f, grad_f, domain, points, n=96):
    """Mollified gradient of the zero extension of ``f`` computed as

        int_{Omega} J(x - y) grad f(y) dy - int_{boundary} J(x - y) f(y) n dS,

    i.e. after integrating by parts. Independent of the direct quadrature of
    ``grad J * f`` and used to cross-check it.
    """
    d = kernel.delta
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros_like(pts)
    for k, x in enumerate(pts):
        lo = np.maximum(x - d, [domain.x0, domain.y0])
        hi = np.minimum(x + d, [domain.x1, domain.y1])
        X = lo[0] + (hi[0] - lo[0]) * g
        Y = lo[1] + (hi[1] - lo[1]) * g
        XX, YY = np.meshgrid(X, Y, indexing="ij")
        W = np.outer(w * (hi[0] - lo[0]), w * (hi[1] - lo[1]))
        J = kernel(np.stack([x[0] - XX, x[1] - YY], axis=-1))
        gx, gy = grad_f(XX, YY)
        out[k, 0] = np.sum(W * J * gx)
        out[k, 1] = np.sum(W * J * gy)
        sides = (
            (domain.x1, None, (1.0, 0.0)), (domain.x0, None, (-1.0, 0.0)),
            (None, domain.y1, (0.0, 1.0)), (None, domain.y0, (0.0, -1.0)))
        for sx, sy, normal in sides:
            if sx is not None:
                if abs(x[0] - sx) >= d:
                    continue
                ys = lo[1] + (hi[1] - lo[1]) * g
                xs = np.full_like(ys, sx)
                ws = w * (hi[1] - lo[1])
            else:
                if abs(x[1] - sy) >= d:
                    continue
                xs = lo[0] + (hi[0] - lo[0]) * g
                ys = np.full_like(xs, sy)
                ws = w * (hi[0] - lo[0])
            Jb = kernel(np.stack([x[0] - xs, x[1] - ys], axis=-1))
            flux = np.sum(ws * Jb * np.broadcast_to(f(xs, ys), xs.shape))
            out[k, 0] -= flux * normal[0]
            out[k, 1] -= flux * normal[1]
    return out.reshape(np.shape(points))


def mms_residuals(case, points, t):
    """Residuals of the three forced equations at ``points`` and time ``t``.

    The forcing comes from ``case.forcing``; the mollified gradients on the
    equation side are recomputed with :func:`mollified_gradient_by_parts`,
    so a small residual certifies both the forcing formulas and the
    convolution quadrature.
    """
    p = case.params
    kern = case.kernel
    pts = np.asarray(points, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    f_theta, f_u, f_v = case.forcing(pts, t)
    dom = case.domain

    mg_theta = mollified_gradient_by_parts(
        kern, lambda a, b: case.theta(a, b, t), lambda a, b: case.theta_grad(a, b, t),
        dom, pts)
    mg_u = [mollified_gradient_by_parts(
        kern, lambda a, b, i=i: case.u(i, a, b, t),
        lambda a, b, i=i: case.u_grad(i, a, b, t), dom, pts)
        for i in range(p.n_species)]

    theta = case.theta(x, y, t)
    dtheta_dt = -(theta - 1.0)
    lap_theta = -2 * PI ** 2 * (theta - 1.0)
    grad_theta = np.stack(case.theta_grad(x, y, t), axis=-1)
    res_theta = (dtheta_dt - p.K * lap_theta
                 - sum(p.S[i] * np.sum(mg_u[i] * grad_theta, axis=-1)
                       for i in range(p.n_species))
                 - f_theta)

    u = np.array([case.u(i, x, y, t) for i in range(p.n_species)])
    v = np.array([case.v(i, x, y, t) for i in range(p.n_species)])
    R = smoluchowski_rates(p, u)
    res_u = np.empty_like(u)
    res_v = np.empty_like(u)
    for i in range(p.n_species):
        grad_u = np.stack(case.u_grad(i, x, y, t), axis=-1)
        du_dt, lap_u = -u[i], -2 * PI ** 2 * u[i]
        res_u[i] = (du_dt - p.D[i] * lap_u
                    - p.F[i] * np.sum(mg_theta * grad_u, axis=-1)
                    + p.A[i] * u[i] - p.B[i] * v[i] - R[i] - f_u[i])
        res_v[i] = -v[i] - (p.A[i] * u[i] - p.B[i] * v[i]) - f_v[i]
    return res_theta, res_u, res_v


def ritz_project(space, coeff, exact, exact_grad, tol=1e-12, rule=DEGREE4):
    """Discrete field whose weighted gradient error is orthogonal to ``space``.

    On the all-vertex (Neumann) space the constant kernel is fixed by one
    Lagrange multiplier enforcing ``int (R_h w - w) = 0``.
    """
    import scipy.sparse as sp

    mesh = space.mesh
    qp = quadrature_points(mesh, rule)
    gx, gy = exact_grad(qp[..., 0], qp[..., 1])
    from .fem import barycentric_gradients
    grads = barycentric_gradients(mesh)
    w = rule.weights[None, :] * mesh.areas[:, None]
    mean_grad = np.stack([np.sum(w * gx, axis=1), np.sum(w * gy, axis=1)], axis=1)
    local = coeff * np.einsum("tx,tax->ta", mean_grad, grads)
    dofs = space.element_dofs
    keep = dofs >= 0
    rhs = np.bincount(dofs[keep], weights=local[keep], minlength=space.n_dofs)
    H = assemble_stiffness(space, coeff)

    if space.kind == "neumann":
        c = assemble_mass(space) @ np.ones(space.n_dofs)
        total = float(np.sum(w * np.broadcast_to(exact(qp[..., 0], qp[..., 1]), w.shape)))
        A = sp.bmat([[H, sp.csr_matrix(c[:, None])],
                     [sp.csr_matrix(c[None, :]), None]], format="csr")
        x, _ = solve_linear(A, np.append(rhs, total), tol=tol, tag="ritz")
        return x[:-1]
    x, _ = solve_linear(H, rhs, tol=tol, tag="ritz")
    return x


def ritz_orthogonality_residual(space, coeff, coeffs, exact_grad, rule=DEGREE4):
    """max_j |(coeff grad(R_h w - w), grad phi_j)| by quadrature."""
    from .fem import barycentric_gradients, gradient_per_element
    mesh = space.mesh
    qp = quadrature_points(mesh, rule)
    gx, gy = exact_grad(qp[..., 0], qp[..., 1])
    gh = gradient_per_element(space, coeffs)
    w = rule.weights[None, :] * mesh.areas[:, None]
    err = np.stack([np.sum(w * (gh[:, None, 0] - gx), axis=1),
                    np.sum(w * (gh[:, None, 1] - gy), axis=1)], axis=1)
    local = coeff * np.einsum("tx,tax->ta", err, barycentric_gradients(mesh))
    dofs = space.element_dofs
    keep = dofs >= 0
    r = np.bincount(dofs[keep], weights=local[keep], minlength=space.n_dofs)
    return float(np.abs(r).max())


@dataclass
class EocRow:
    h: float
    tau: float
    l2: dict
    h1: dict


@dataclass
class EocTable:
    """Final-time errors per refinement level and the observed orders."""

    fields: list
    rows: list = field(default_factory=list)

    def add(self, h, tau, l2, h1):
        self.rows.append(EocRow(float(h), float(tau), dict(l2), dict(h1)))

    def eoc(self, k, name):
        """``log2(e_{k-1} / e_k)`` of the L2 error; None on the first row and
        NaN when either error is zero."""
        if k == 0:
            return None
        a, b = self.rows[k - 1].l2[name], self.rows[k].l2[name]
        if a == 0.0 or b == 0.0:
            return float("nan")
        return float(np.log2(a / b))

    def eoc_column(self, name):
        return [self.eoc(k, name) for k in range(1, len(self.rows))]

    def l2_column(self, name):
        return [r.l2[name] for r in self.rows]

    def format(self):
        head = ["h", "tau"] + [f"L2 {f}" for f in self.fields] + [f"eoc {f}" for f in self.fields]
        lines = ["  ".join(f"{c:>12s}" for c in head)]
        for k, r in enumerate(self.rows):
            cells = [f"{r.h:12.5e}", f"{r.tau:12.5e}"]
            cells += [f"{r.l2[f]:12.5e}" for f in self.fields]
            cells += [f"{'':>12s}" if k == 0 else f"{self.eoc(k, f):12.4f}" for f in self.fields]
            lines.append("  ".join(cells))
        return "\n".join(lines)


@dataclass
class StudyProtocol:
    """Refinement plan.

    ``space`` and ``coupled`` studies start from an ``nx0 x nx0`` mesh,
    refine uniformly ``levels - 1`` times and use ``tau = tau_factor *
    (cell size)^2``. A ``time`` study fixes an ``nx_fine`` mesh and halves
    ``tau`` from ``tau0`` ``levels - 1`` times.
    """

    t_end: float = 0.1
    nx0: int = 8
    levels: int = 4
    tau_factor: float = 0.25
    nx_fine: int = 64
    tau0: float = 0.1
    tol: float = 1e-10


def field_names(n_species):
    return (["theta"] + [f"u_{i + 1}" for i in range(n_species)]
            + [f"v_{i + 1}" for i in range(n_species)])


def convergence_study(kind, case, protocol, progress=None):
    """Run one simulation per refinement level and tabulate final-time errors.

    If a level fails, the exception is re-raised with the rows completed so
    far attached as ``exc.partial_table``.
    """
    if kind not in ("space", "time", "coupled"):
        raise InvalidArgumentError(f"unknown study kind {kind!r}")
    table = EocTable(fields=field_names(case.n_species))
    dom = case.domain
    width = dom.x1 - dom.x0
    if kind == "time":
        mesh = build_structured_mesh(protocol.nx_fine, protocol.nx_fine, dom)
        plan = [(mesh, protocol.tau0 / 2 ** k) for k in range(protocol.levels)]
    else:
        plan = []
        mesh = build_structured_mesh(protocol.nx0, protocol.nx0, dom)
        for k in range(protocol.levels):
            cell = width / (protocol.nx0 * 2 ** k)
            plan.append((mesh, protocol.tau_factor * cell ** 2))
            if k + 1 < protocol.levels:
                mesh = refine_uniform(mesh)
    disc = None
    try:
        for mesh, tau in plan:
            if disc is None or disc.mesh is not mesh:
                disc = Discretization(case.params, mesh)
                sources = case.sources(disc)
            state, _ = run_simulation(disc, case.initial_data(), tau, protocol.t_end,
                                      sources=sources, tol=protocol.tol)
            l2, h1 = case.errors(disc, state)
            table.add(mesh.h, tau, l2, h1)
            if progress is not None:
                progress(table)
    except ThermidorError as exc:
        exc.partial_table = table
        raise
    return table
