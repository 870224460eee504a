"""Compactly supported mollifier and the mollified gradient

    grad_delta f (x) = grad_x  int_{B(x, delta)} J(x - y) f(y) dy,

with ``f`` extended by zero outside the domain. The derivative is moved onto
the kernel, so every evaluation is a plain quadrature of ``grad J * f``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad

from .errors import AccuracyError, InvalidArgumentError
from .fem import DEGREE4, subdivided_rule
from .mesh import build_spatial_index, triangles_near


@dataclass(frozen=True)
class MollifierKernel:
    """``J(s) = C exp(1 / (|s|^2 - delta^2))`` inside the ball, 0 outside.

    The constant is stored as ``log_norm = log C`` because ``C`` overflows
    for small ``delta`` (``C ~ exp(1 / delta^2)``).
    """

    delta: float
    log_norm: float

    @property
    def norm_const(self):
        return float(np.exp(self.log_norm))

    def _log_bump(self, r2):
        d2 = self.delta ** 2
        inside = r2 < d2
        out = np.full(np.shape(r2), -np.inf)
        out[inside] = 1.0 / (r2[inside] - d2) + self.log_norm
        return out, inside

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        r2 = np.sum(s * s, axis=-1)
        logj, _ = self._log_bump(np.atleast_1d(r2))
        return np.exp(logj).reshape(np.shape(r2))

    def gradient(self, s):
        """``grad J(s) = J(s) (-2 s) / (|s|^2 - delta^2)^2``."""
        s = np.asarray(s, dtype=float)
        r2 = np.atleast_1d(s[..., 0] ** 2 + s[..., 1] ** 2)
        logj, inside = self._log_bump(r2)
        factor = np.zeros_like(r2)
        q = r2[inside] - self.delta ** 2
        factor[inside] = -2.0 * np.exp(logj[inside]) / (q * q)
        return factor.reshape(np.shape(s)[:-1])[..., None] * s


def make_kernel(delta):
    """Build the normalized mollifier of radius ``delta``."""
    if not delta > 0:
        raise InvalidArgumentError(f"mollifier radius must be positive, got {delta}")
    d2 = delta * delta

    # integrand scaled by exp(1/delta^2) so that its maximum is 1
    def scaled(r):
        return np.exp(1.0 / (r * r - d2) + 1.0 / d2) * r

    integral, err = quad(scaled, 0.0, delta, epsabs=0.0, epsrel=1e-13, limit=200)
    if err > 1e-10 * integral:
        raise AccuracyError("normalization integral did not converge", err / integral)
    log_norm = -(np.log(2.0 * np.pi * integral) - 1.0 / d2)
    return MollifierKernel(delta=float(delta), log_norm=float(log_norm))


def subdivision_levels(h, delta, resolution=8.0):
    """Number of midpoint subdivisions that bring element diameter ``h``
    down to at most ``delta / resolution``."""
    target = delta / resolution
    if h <= target:
        return 0
    return int(np.ceil(np.log2(h / target)))


class MollifiedGradientOperator:
    """Linear map from vertex values of a P1 field to its mollified gradient
    at a fixed set of points.

    ``apply(vertex_values)`` returns an array of shape ``points.shape``.
    Rows are assembled once; each application is two sparse products.
    """

    def __init__(self, kernel, mesh, points, index=None, resolution=8.0,
                 rule=DEGREE4, chunk=128):
        self.kernel = kernel
        self.mesh = mesh
        self.points_shape = np.shape(points)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        self.index = index or build_spatial_index(mesh, delta=kernel.delta)
        levels = subdivision_levels(mesh.h, kernel.delta, resolution)
        self.rule = subdivided_rule(rule, levels)
        self.Wx, self.Wy = self._build(pts, chunk)

    def _build(self, pts, chunk):
        mesh, kernel, rule = self.mesh, self.kernel, self.rule
        delta = kernel.delta
        sub_pts = np.einsum("qa,tax->tqx", rule.points, mesh.corners)
        sub_w = mesh.areas[:, None] * rule.weights[None, :]
        reach = delta + mesh.circumradii_about_centroid
        blocks_x, blocks_y = [], []
        nv = mesh.n_vertices
        for start in range(0, len(pts), chunk):
            p = pts[start:start + chunk]
            rows, tris = [], []
            for k, x in enumerate(p):
                t = triangles_near(self.index, x, delta)
                if t.size:
                    d = np.linalg.norm(mesh.centroids[t] - x, axis=1)
                    t = t[d < reach[t]]
                rows.append(np.full(t.size, k))
                tris.append(t)
            rows = np.concatenate(rows)
            tris = np.concatenate(tris)
            s = p[rows][:, None, :] - sub_pts[tris]
            g = kernel.gradient(s) * sub_w[tris][:, :, None]
            contrib = np.matmul(g.transpose(0, 2, 1), rule.points).transpose(0, 2, 1)
            r = np.repeat(rows, 3)
            c = mesh.triangles[tris].ravel()
            shape = (len(p), nv)
            blocks_x.append(sp.csr_matrix((contrib[:, :, 0].ravel(), (r, c)), shape=shape))
            blocks_y.append(sp.csr_matrix((contrib[:, :, 1].ravel(), (r, c)), shape=shape))
        Wx = sp.vstack(blocks_x, format="csr") if blocks_x else sp.csr_matrix((0, nv))
        Wy = sp.vstack(blocks_y, format="csr") if blocks_y else sp.csr_matrix((0, nv))
        return Wx, Wy

    def apply(self, vertex_values):
        v = np.asarray(vertex_values, dtype=float)
        out = np.stack([self.Wx @ v, self.Wy @ v], axis=-1)
        return out.reshape(self.points_shape)

    def apply_space(self, space, coeffs):
        return self.apply(space.to_vertices(coeffs))


def mollified_gradient_discrete(kernel, space, coeffs, eval_points, index=None,
                                resolution=8.0):
    """Mollified gradient of the discrete function ``coeffs`` on ``space``.

    Returns an array shaped like ``eval_points`` (last axis holds the two
    components). Points whose ball misses the mesh get a zero vector.
    """
    op = MollifiedGradientOperator(kernel, space.mesh, eval_points, index=index,
                                   resolution=resolution)
    return op.apply_space(space, coeffs)


def _box_rule(lo, hi, n):
    """Tensor Gauss-Legendre nodes (P, n*n, 2) and weights (P, n*n) on the
    boxes ``[lo, hi]`` (one box per row)."""
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    ext = hi - lo
    X = lo[:, None, 0] + ext[:, None, 0] * g[None, :]
    Y = lo[:, None, 1] + ext[:, None, 1] * g[None, :]
    nodes = np.stack(np.broadcast_arrays(X[:, :, None], Y[:, None, :]), axis=-1)
    weights = (ext[:, 0, None, None] * w[None, :, None]
               * ext[:, 1, None, None] * w[None, None, :])
    P = len(lo)
    return nodes.reshape(P, n * n, 2), weights.reshape(P, n * n)


def _convolve_boxes(kernel, fields, pts, lo, hi, n):
    nodes, w = _box_rule(lo, hi, n)
    gJ = kernel.gradient(pts[:, None, :] - nodes) * w[:, :, None]
    out = np.empty((len(fields), len(pts), 2))
    for k, f in enumerate(fields):
        vals = np.broadcast_to(f(nodes[..., 0], nodes[..., 1]), w.shape)
        out[k] = np.einsum("pm,pmx->px", vals, gJ)
    return out


def mollified_gradient_fields(kernel, fields, domain, eval_points, tol=1e-10,
                              n0=32, nmax=256, chunk=128):
    """Mollified gradients of several pointwise fields at once.

    Each convolution is integrated over ``[x - delta, x + delta]^2`` clipped
    to ``domain`` with a tensor Gauss rule whose order is doubled until two
    successive results agree to ``tol`` in every component. The kernel
    gradient is smooth and vanishes outside the ball, so the rectangle is an
    exact integration region for zero-extended fields.

    Returns an array of shape ``(len(fields),) + eval_points.shape``.
    """
    pts = np.asarray(eval_points, dtype=float)
    flat = pts.reshape(-1, 2)
    if not np.all(domain.contains(flat, tol=1e-12)):
        raise InvalidArgumentError("evaluation points must lie in the domain")
    d = kernel.delta
    dlo = np.array([domain.x0, domain.y0])
    dhi = np.array([domain.x1, domain.y1])
    out = np.empty((len(fields), len(flat), 2))
    for start in range(0, len(flat), chunk):
        p = flat[start:start + chunk]
        lo = np.maximum(p - d, dlo)
        hi = np.minimum(p + d, dhi)
        todo = np.arange(len(p))
        n = n0
        prev = _convolve_boxes(kernel, fields, p, lo, hi, n)
        est = np.inf
        while todo.size:
            n *= 2
            if n > nmax:
                raise AccuracyError(
                    f"mollified gradient quadrature did not reach {tol:.1e} "
                    f"(estimate {est:.3e})", est)
            cur = _convolve_boxes(kernel, fields, p[todo], lo[todo], hi[todo], n)
            err = np.abs(cur - prev).max(axis=(0, 2))
            est = float(err.max())
            done = err <= tol
            out[:, start + todo[done]] = cur[:, done]
            todo = todo[~done]
            prev = cur[:, ~done]
    return out.reshape((len(fields),) + pts.shape)


def mollified_gradient_analytic(kernel, f, domain, eval_points, tol=1e-10):
    """Mollified gradient of a pointwise field ``f(x, y)`` (zero outside
    ``domain``), integrated adaptively to absolute accuracy ``tol``."""
    return mollified_gradient_fields(kernel, [f], domain, eval_points, tol=tol)[0]
