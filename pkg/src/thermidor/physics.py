"""Model coefficients, truncated Smoluchowski coagulation rates and the
deposition exchange between mobile and deposited colloids."""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import InvalidArgumentError


def _species_array(name, value, n):
    arr = np.array(np.broadcast_to(np.asarray(value, dtype=float), (n,)))
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Coefficients of the thermo-diffusion system.

    Scalars given for per-species coefficients are broadcast to all ``N``
    species; ``beta_kernel`` may be a scalar (constant kernel) or an
    ``N x N`` symmetric matrix.

    Heat conductivity ``K`` and diffusivities ``D`` must be strictly
    positive. Soret ``S``, Dufour ``F``, deposition ``A`` and release ``B``
    rates must be nonnegative; zero values switch the corresponding coupling
    off.
    """

    n_species: int = 2
    K: float = 1.0
    D: Sequence[float] = 1.0
    S: Sequence[float] = 0.0
    F: Sequence[float] = 0.0
    A: Sequence[float] = 0.0
    B: Sequence[float] = 0.0
    beta_kernel: np.ndarray = 1.0
    delta: float = 0.1

    def __post_init__(self):
        n = self.n_species
        if int(n) != n or n < 1:
            raise InvalidArgumentError(f"n_species must be a positive integer, got {n}")
        object.__setattr__(self, "n_species", int(n))
        if not (np.isfinite(self.K) and self.K > 0):
            raise InvalidArgumentError(
                f"K = {self.K} violates (A1): 0 < m <= K <= M")
        object.__setattr__(self, "K", float(self.K))
        for name in ("D", "S", "F", "A", "B"):
            object.__setattr__(self, name, _species_array(name, getattr(self, name), n))
        if np.any(self.D <= 0):
            raise InvalidArgumentError(
                f"D = {self.D.tolist()} violates (A1): 0 < m <= D_i <= M")
        for name in ("S", "F", "A", "B"):
            if np.any(getattr(self, name) < 0):
                raise InvalidArgumentError(
                    f"{name} = {getattr(self, name).tolist()} must be nonnegative (A1)")
        beta = np.array(np.broadcast_to(np.asarray(self.beta_kernel, dtype=float), (n, n)))
        if not np.allclose(beta, beta.T, rtol=0, atol=0):
            raise InvalidArgumentError("beta_kernel must be symmetric")
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise InvalidArgumentError("beta_kernel must be finite and nonnegative")
        object.__setattr__(self, "beta_kernel", beta)
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidArgumentError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def has_soret(self):
        return bool(np.any(self.S != 0))

    @property
    def has_dufour(self):
        return bool(np.any(self.F != 0))


@dataclass
class InitialData:
    """Initial fields as callables ``f(x, y)``; one ``u0`` and ``v0`` per
    species."""

    theta0: Callable
    u0: list = field(default_factory=list)
    v0: list = field(default_factory=list)

    def negative_samples(self, points):
        """Number of sample points where some initial field is negative."""
        x, y = np.asarray(points).T
        bad = 0
        for f in [self.theta0, *self.u0, *self.v0]:
            bad += int(np.sum(np.broadcast_to(f(x, y), x.shape) < 0))
        return bad


def smoluchowski_rates(params, u):
    """Truncated coagulation rates

        R_i = 1/2 sum_{j+k=i} beta_jk u_j u_k - u_i sum_{j=1}^{N-i} beta_ij u_j

    Parameters
    ----------
    params : ModelParams or (N, N) array
        Supplies the symmetric kernel ``beta``.
    u : (N, ...) array
        Species values, nodewise along the trailing axes.
    """
    beta = params.beta_kernel if isinstance(params, ModelParams) else np.asarray(params)
    u = np.asarray(u, dtype=float)
    N = u.shape[0]
    R = np.zeros_like(u)
    for i in range(1, N + 1):
        for j in range(1, i):
            R[i - 1] += 0.5 * beta[j - 1, i - j - 1] * u[j - 1] * u[i - j - 1]
        if N - i >= 1:
            loss = np.tensordot(beta[i - 1, :N - i], u[:N - i], axes=1)
            R[i - 1] -= u[i - 1] * loss
    return R


def smoluchowski_jacobian(params, u):
    """Jacobian ``dR/du`` at ``u`` (N,), as an (N, N) array."""
    u = np.asarray(u, dtype=float)
    N = len(u)
    E = np.eye(N)
    # R is quadratic, so the central difference with unit step is exact
    plus = smoluchowski_rates(params, (u[:, None] + E))
    minus = smoluchowski_rates(params, (u[:, None] - E))
    return 0.5 * (plus - minus)


def lipschitz_bound_check(params, radius, n_samples=20000, seed=0):
    """Sampled estimate of the Lipschitz constant of ``R`` on the ball
    ``|u| <= radius``.

    For a quadratic map ``R(u) - R(w) = J((u + w) / 2) (u - w)``, so the
    supremum of the pair ratio equals the supremum of the spectral norm of
    the Jacobian over midpoints in the ball. Midpoints are drawn uniformly
    in the ball and on its sphere. A diagnostic, not a bound.
    """
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius}")
    beta = params.beta_kernel if isinstance(params, ModelParams) else np.asarray(params)
    N = beta.shape[0]
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n_samples, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    scale = rng.random(n_samples) ** (1.0 / N)
    scale[: n_samples // 2] = 1.0
    mids = radius * scale[:, None] * d
    E = np.eye(N)
    u = mids.T[:, :, None]
    jac = 0.5 * (smoluchowski_rates(beta, u + E[:, None, :])
                 - smoluchowski_rates(beta, u - E[:, None, :]))
    # jac[i, sample, k] = dR_i / du_k
    norms = np.linalg.svd(jac.transpose(1, 0, 2), compute_uv=False)[:, 0]
    return float(norms.max())


def deposition_closed_form(A, B, u_path, v0, t, panels_per_unit=64):
    """Deposited amount at time ``t`` from the variation-of-constants formula

        v(t) = exp(-B t) (v0 + int_0^t A u(s) exp(B s) ds).

    Parameters
    ----------
    u_path : callable or array
        Either ``u(s)`` (vectorized over ``s``) or samples on a uniform grid
        of ``[0, t]`` along axis 0 (any trailing node axes).
    panels_per_unit : int
        Simpson panels per unit time when ``u_path`` is callable.
    """
    if t < 0:
        raise InvalidArgumentError(f"time must be nonnegative, got {t}")
    v0 = np.asarray(v0, dtype=float)
    if t == 0:
        return v0.copy() if v0.ndim else float(v0)
    if callable(u_path):
        n = max(64, int(np.ceil(panels_per_unit * t)))
        n += n % 2
        s = np.linspace(0.0, t, n + 1)
        samples = np.asarray(u_path(s), dtype=float)
    else:
        samples = np.asarray(u_path, dtype=float)
        s = np.linspace(0.0, t, samples.shape[0])
    weight = np.exp(B * (s - t)).reshape((-1,) + (1,) * (samples.ndim - 1))
    integral = simpson(A * samples * weight, x=s, axis=0)
    return integral + v0 * np.exp(-B * t)


@dataclass(frozen=True)
class EffectiveReaction:
    """Coefficients left in the u-equation after eliminating ``v^{n+1}``:

        A u - B v^{n+1} = u_coeff u - v_coeff v^n - source_coeff f_v
    """

    u_coeff: float
    v_coeff: float
    source_coeff: float


def deposition_step_eliminate(A, B, tau, u_next, v_curr, source=None):
    """Implicit Euler step of ``v' = A u - B v (+ f)`` solved for ``v^{n+1}``.

    Returns ``(v_next, EffectiveReaction)``.
    """
    if not tau > 0:
        raise InvalidArgumentError(f"time step must be positive, got {tau}")
    denom = 1.0 + tau * B
    rhs = np.asarray(v_curr, dtype=float) + tau * A * np.asarray(u_next, dtype=float)
    if source is not None:
        rhs = rhs + tau * np.asarray(source, dtype=float)
    eff = EffectiveReaction(u_coeff=A / denom, v_coeff=B / denom,
                            source_coeff=tau * B / denom)
    return rhs / denom, eff
