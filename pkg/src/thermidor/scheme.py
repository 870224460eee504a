"""Time integration of the coupled temperature / mobile colloid / deposited
colloid system.

Two integrators share one spatial discretization:

* :func:`advance_step` / :func:`run_simulation` -- the semi-implicit Euler
  scheme. Diffusion and deposition are implicit; the cross terms use the
  mollified gradient of the other unknown at the old level, and the
  coagulation rates are explicit. Each step is one linear solve for the
  temperature and one per species.
* :func:`mol_rhs` / :func:`integrate_mol_rk4` -- the semidiscrete Galerkin
  ODE system integrated with classical Runge-Kutta, used as a reference.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (DivergenceError, InvalidArgumentError, SolverError,
                     StabilityError)
from .fem import (DEGREE4, assemble_convection, assemble_mass,
                  assemble_stiffness, interpolate, make_space,
                  quadrature_points)
from .linalg import FactorizedSolver, solve_linear
from .mollifier import MollifiedGradientOperator, make_kernel
from .physics import deposition_step_eliminate, smoluchowski_rates


@dataclass
class State:
    """Coefficient vectors at one time level.

    ``beta`` holds temperature dofs (all vertices); ``alpha`` and ``gamma``
    are (N, n_interior) arrays of mobile and deposited colloid dofs.
    """

    t: float
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def copy(self):
        return State(self.t, self.beta.copy(), self.alpha.copy(), self.gamma.copy())

    def pack(self):
        return np.concatenate([self.beta, self.alpha.ravel(), self.gamma.ravel()])

    @classmethod
    def unpack(cls, t, vec, n_theta, shape_u):
        n_u = shape_u[0] * shape_u[1]
        return cls(t, vec[:n_theta].copy(),
                   vec[n_theta:n_theta + n_u].reshape(shape_u).copy(),
                   vec[n_theta + n_u:].reshape(shape_u).copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.alpha))
                    and np.all(np.isfinite(self.gamma)))


@dataclass
class StepReport:
    t: float
    iterations: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    min_values: dict = field(default_factory=dict)

    @property
    def min_undershoot(self):
        return min(0.0, min(self.min_values.values(), default=0.0))


class Discretization:
    """Spaces, constant matrices and the mollified gradient operator for one
    mesh and parameter set.

    The mollified gradient operator is built on first use only, so purely
    diffusive runs (no Soret or Dufour coupling) never pay for it.
    """

    def __init__(self, params, mesh, rule=DEGREE4, resolution=8.0):
        self.params = params
        self.mesh = mesh
        self.rule = rule
        self.resolution = resolution
        self.theta_space = make_space(mesh, "neumann")
        self.u_space = make_space(mesh, "dirichlet0")
        self.G_theta = assemble_mass(self.theta_space)
        self.H_theta = assemble_stiffness(self.theta_space, params.K)
        self.G_u = assemble_mass(self.u_space)
        H1 = assemble_stiffness(self.u_space, 1.0)
        self.H_u = [d * H1 for d in params.D]

    @property
    def n_species(self):
        return self.params.n_species

    @cached_property
    def quad_points(self):
        return quadrature_points(self.mesh, self.rule)

    @cached_property
    def kernel(self):
        return make_kernel(self.params.delta)

    @cached_property
    def mollifier(self):
        return MollifiedGradientOperator(self.kernel, self.mesh, self.quad_points,
                                         resolution=self.resolution)

    @cached_property
    def mass_theta(self):
        return FactorizedSolver(self.G_theta)

    @cached_property
    def mass_u(self):
        return FactorizedSolver(self.G_u)

    def theta_convection(self, alpha):
        """``(sum_i S_i grad_delta u_i . grad phi_j, phi_k)`` or None."""
        p = self.params
        if not p.has_soret:
            return None
        combined = self.u_space.to_vertices(p.S @ alpha)
        velocity = self.mollifier.apply(combined)
        return assemble_convection(self.theta_space, velocity, self.rule)

    def u_convection(self, beta):
        """``(grad_delta theta . grad phi_j, phi_k)`` on the interior space,
        or None."""
        if not self.params.has_dufour:
            return None
        velocity = self.mollifier.apply(self.theta_space.to_vertices(beta))
        return assemble_convection(self.u_space, velocity, self.rule)

    def initial_state(self, initial):
        """Nodal interpolants of the initial data."""
        N = self.n_species
        if len(initial.u0) != N or len(initial.v0) != N:
            raise InvalidArgumentError(
                f"initial data must provide {N} u0 and v0 fields")
        beta = interpolate(self.theta_space, initial.theta0)
        alpha = np.array([interpolate(self.u_space, f) for f in initial.u0])
        gamma = np.array([interpolate(self.u_space, f) for f in initial.v0])
        return State(0.0, beta, alpha.reshape(N, -1), gamma.reshape(N, -1))


class Sources:
    """Forcing terms. Subclasses return load vectors at time ``t``.

    ``theta_load`` and ``u_load`` are Galerkin loads ``(f, phi_k)``;
    ``v_nodal`` returns nodal values on the interior dofs because the
    deposition update is nodewise.
    """

    def theta_load(self, t):
        return None

    def u_load(self, i, t):
        return None

    def v_nodal(self, i, t):
        return None


def _add(a, b):
    return a if b is None else a + b


def advance_step(disc, state, tau, sources=None, tol=1e-10):
    """One semi-implicit step of length ``tau``.

    Returns ``(new_state, StepReport)``.
    """
    if not tau > 0:
        raise InvalidArgumentError(f"time step must be positive, got {tau}")
    p = disc.params
    sources = sources or Sources()
    t1 = state.t + tau
    report = StepReport(t=t1)

    # temperature, convected by the lagged mollified colloid gradients
    A = disc.G_theta / tau + disc.H_theta
    C = disc.theta_convection(state.alpha)
    if C is not None:
        A = A - C
    rhs = _add(disc.G_theta @ state.beta / tau, sources.theta_load(t1))
    beta, info = _solve(A, rhs, state.beta, tol, "theta")
    report.iterations["theta"] = info.iterations
    report.residuals["theta"] = info.residual

    # colloids, convected by the lagged mollified temperature gradient
    Cu = disc.u_convection(state.beta)
    R = smoluchowski_rates(p, state.alpha)
    G = disc.G_u
    alpha = np.empty_like(state.alpha)
    gamma = np.empty_like(state.gamma)
    for i in range(p.n_species):
        tag = f"u_{i + 1}"
        fv = sources.v_nodal(i, t1)
        _, eff = deposition_step_eliminate(p.A[i], p.B[i], tau, 0.0, 0.0)
        A = G / tau + disc.H_u[i] + eff.u_coeff * G
        if Cu is not None and p.F[i] != 0:
            A = A - p.F[i] * Cu
        load = state.alpha[i] / tau + eff.v_coeff * state.gamma[i] + R[i]
        if fv is not None:
            load = load + eff.source_coeff * fv
        rhs = _add(G @ load, sources.u_load(i, t1))
        alpha[i], info = _solve(A, rhs, state.alpha[i], tol, tag)
        report.iterations[tag] = info.iterations
        report.residuals[tag] = info.residual
        gamma[i], _ = deposition_step_eliminate(p.A[i], p.B[i], tau, alpha[i],
                                                state.gamma[i], fv)

    new = State(t1, beta, alpha, gamma)
    if not new.is_finite():
        raise DivergenceError(
            f"non-finite state at t = {t1:.6g}; reduce the time step (tau = {tau:.3g})",
            tag="state")
    report.min_values["theta"] = float(beta.min()) if beta.size else 0.0
    for i in range(p.n_species):
        report.min_values[f"u_{i + 1}"] = float(alpha[i].min()) if alpha[i].size else 0.0
        report.min_values[f"v_{i + 1}"] = float(gamma[i].min()) if gamma[i].size else 0.0
    return new, report


def _solve(A, rhs, x0, tol, tag):
    try:
        return solve_linear(A.tocsr(), rhs, tol=tol, x0=x0, tag=tag)
    except SolverError as exc:
        exc.tag = tag
        raise


def run_simulation(disc, initial, tau, t_end, sources=None, observers=(), tol=1e-10):
    """Integrate from the interpolated initial data to ``t_end``.

    The last step is shortened if ``t_end`` is not a multiple of ``tau``.
    Each observer is called as ``observer(state, report)`` after every step.

    Returns ``(final_state, reports)``.
    """
    if t_end < 0:
        raise InvalidArgumentError(f"t_end must be nonnegative, got {t_end}")
    if not tau > 0:
        raise InvalidArgumentError(f"time step must be positive, got {tau}")
    state = initial if isinstance(initial, State) else disc.initial_state(initial)
    reports = []
    eps = 1e-10 * tau
    while t_end - state.t > eps:
        dt = min(tau, t_end - state.t)
        state, report = advance_step(disc, state, dt, sources, tol)
        if abs(state.t - t_end) <= eps:
            state.t = t_end
        reports.append(report)
        for obs in observers:
            obs(state.copy(), report)
    return state, reports


def mol_rhs(disc, state, sources=None):
    """Time derivative of the semidiscrete Galerkin system at ``state``.

    Returns a :class:`State` holding the derivatives (``t`` is copied).
    """
    p = disc.params
    sources = sources or Sources()
    t = state.t

    r = -(disc.H_theta @ state.beta)
    C = disc.theta_convection(state.alpha)
    if C is not None:
        r += C @ state.beta
    r = _add(r, sources.theta_load(t))
    dbeta = disc.mass_theta.solve(r)

    Cu = disc.u_convection(state.beta)
    R = smoluchowski_rates(p, state.alpha)
    G = disc.G_u
    dalpha = np.empty_like(state.alpha)
    dgamma = np.empty_like(state.gamma)
    for i in range(p.n_species):
        a, g = state.alpha[i], state.gamma[i]
        r = -(disc.H_u[i] @ a) + G @ (R[i] - p.A[i] * a + p.B[i] * g)
        if Cu is not None and p.F[i] != 0:
            r += p.F[i] * (Cu @ a)
        r = _add(r, sources.u_load(i, t))
        dalpha[i] = disc.mass_u.solve(r)
        dgamma[i] = _add(p.A[i] * a - p.B[i] * g, sources.v_nodal(i, t))
    return State(t, dbeta, dalpha, dgamma)


def integrate_mol_rk4(disc, initial, tau_ode, t_end, sources=None, observers=(),
                      blowup=1e6):
    """Classical four-stage Runge-Kutta on :func:`mol_rhs`.

    Raises :class:`StabilityError` once the state norm exceeds ``blowup``
    times its initial value.
    """
    if t_end < 0:
        raise InvalidArgumentError(f"t_end must be nonnegative, got {t_end}")
    if not tau_ode > 0:
        raise InvalidArgumentError(f"time step must be positive, got {tau_ode}")
    state = initial if isinstance(initial, State) else disc.initial_state(initial)
    n_theta = len(state.beta)
    shape_u = state.alpha.shape
    y = state.pack()
    limit = blowup * max(np.linalg.norm(y), 1.0)
    t = state.t

    def f(t, y):
        return mol_rhs(disc, State.unpack(t, y, n_theta, shape_u), sources).pack()

    eps = 1e-10 * tau_ode
    while t_end - t > eps:
        h = min(tau_ode, t_end - t)
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_end if abs(t + h - t_end) <= eps else t + h
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm > limit:
            raise StabilityError(
                f"Runge-Kutta solution blew up at t = {t:.6g} (|y| = {norm:.3e}); "
                f"halve tau_ode = {tau_ode:.3g}", tag="mol")
        for obs in observers:
            obs(State.unpack(t, y, n_theta, shape_u), None)
    return State.unpack(t, y, n_theta, shape_u)
