"""P1 finite elements on triangles.

Two kinds of spaces are used: ``"neumann"`` carries a degree of freedom on
every vertex, ``"dirichlet0"`` only on interior vertices (the boundary value
is fixed to zero and eliminated from all matrices).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference triangle.

    ``points`` are barycentric coordinates (nq, 3); ``weights`` sum to one,
    so the integral over a triangle ``T`` is ``|T| * sum(w * f(points))``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self):
        return len(self.weights)


def _symmetric_rule():
    a1, w1 = 0.445948490915964886318, 0.223381589678011465945
    a2, w2 = 0.091576213509770743460, 0.109951743655321867384
    pts = []
    for a in (a1, a2):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
    return QuadRule(np.array(pts), np.array([w1] * 3 + [w2] * 3), degree=4)


DEGREE4 = _symmetric_rule()


def collapsed_gauss_rule(n):
    """Conical product Gauss rule with ``n * n`` points, exact to degree
    ``2 n - 2``. Used as a high-order reference."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    # (s, t) in the unit square -> (l1, l2) in the triangle
    l1 = s.ravel()
    l2 = (t * (1.0 - s)).ravel()
    weights = 2.0 * (ws * wt * (1.0 - s)).ravel()
    pts = np.column_stack([1.0 - l1 - l2, l1, l2])
    return QuadRule(pts, weights, degree=2 * n - 2)


def subdivided_rule(rule, levels):
    """Apply ``rule`` on each of the ``4**levels`` midpoint children."""
    pts, wts = rule.points, rule.weights
    children = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for c in children:
            a, b, d = c
            ab, bd, da = (a + b) / 2, (b + d) / 2, (d + a) / 2
            nxt += [np.array(x) for x in
                    ((a, ab, da), (ab, b, bd), (da, bd, d), (ab, bd, da))]
        children = nxt
    n = len(children)
    points = np.concatenate([pts @ c for c in children])
    weights = np.tile(wts, n) / n
    return QuadRule(points, weights, rule.degree)


@dataclass(frozen=True, eq=False)
class FeSpace:
    """P1 space on a mesh.

    Attributes
    ----------
    mesh : Mesh
    kind : {"neumann", "dirichlet0"}
    dof_of_vertex : (nv,) int array, -1 for constrained vertices
    """

    mesh: object
    kind: str
    dof_of_vertex: np.ndarray

    @property
    def n_dofs(self):
        return int(self.dof_of_vertex.max()) + 1 if self.dof_of_vertex.size else 0

    @cached_property
    def vertex_of_dof(self):
        return np.nonzero(self.dof_of_vertex >= 0)[0]

    @cached_property
    def element_dofs(self):
        """(nt, 3) dof ids of the triangle vertices (-1 if constrained)."""
        return self.dof_of_vertex[self.mesh.triangles]

    @property
    def dof_points(self):
        return self.mesh.vertices[self.vertex_of_dof]

    def to_vertices(self, coeffs):
        """Expand a dof vector to vertex values (zero where constrained)."""
        out = np.zeros(self.mesh.n_vertices)
        out[self.vertex_of_dof] = coeffs
        return out


def make_space(mesh, kind):
    if kind == "neumann":
        dofs = np.arange(mesh.n_vertices)
    elif kind == "dirichlet0":
        dofs = np.full(mesh.n_vertices, -1, dtype=np.int64)
        interior = ~mesh.boundary_vertex
        dofs[interior] = np.arange(interior.sum())
    else:
        raise InvalidArgumentError(f"unknown space kind {kind!r}")
    return FeSpace(mesh=mesh, kind=kind, dof_of_vertex=dofs)


def barycentric_gradients(mesh):
    """(nt, 3, 2) gradients of the three barycentric coordinates."""
    c = mesh.corners
    x, y = c[:, :, 0], c[:, :, 1]
    twice_area = 2.0 * mesh.signed_areas
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([gx, gy], axis=2) / twice_area[:, None, None]


def quadrature_points(mesh, rule=DEGREE4):
    """(nt, nq, 2) physical coordinates of the quadrature points."""
    return np.einsum("qa,tax->tqx", rule.points, mesh.corners)


def _assemble(space, local, test_space=None):
    """Scatter (nt, 3, 3) local matrices, local[t, k, j] -> row k, col j."""
    test_space = test_space or space
    rows = np.broadcast_to(test_space.element_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(space.element_dofs[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((local[keep], (rows[keep], cols[keep])),
                      shape=(test_space.n_dofs, space.n_dofs)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def local_mass(mesh):
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return mesh.areas[:, None, None] * ref[None]


def local_stiffness(mesh):
    g = barycentric_gradients(mesh)
    return mesh.areas[:, None, None] * np.einsum("tkx,tjx->tkj", g, g)


def assemble_mass(space):
    """Consistent mass matrix ``(phi_j, phi_k)``."""
    return _assemble(space, local_mass(space.mesh))


def assemble_stiffness(space, coeff=1.0):
    """Stiffness matrix ``(coeff grad phi_j, grad phi_k)``."""
    if not coeff > 0:
        raise InvalidArgumentError(
            f"diffusion coefficient must be positive (0 < m <= coeff), got {coeff}")
    return _assemble(space, coeff * local_stiffness(space.mesh))


def assemble_convection(space, velocity_at_quad, rule=DEGREE4):
    """Matrix with entry (k, j) = ``(velocity . grad phi_j, phi_k)``.

    Parameters
    ----------
    velocity_at_quad : (nt, nq, 2) array
        Velocity at the points of ``rule`` on every element.
    """
    mesh = space.mesh
    v = np.asarray(velocity_at_quad, dtype=float)
    if v.shape != (mesh.n_triangles, rule.n_points, 2):
        raise InvalidArgumentError(
            f"velocity must have shape {(mesh.n_triangles, rule.n_points, 2)}, "
            f"got {v.shape}")
    g = barycentric_gradients(mesh)
    vg = np.einsum("tqx,tjx->tqj", v, g)
    local = np.einsum("q,qk,tqj->tkj", rule.weights, rule.points, vg)
    local *= mesh.areas[:, None, None]
    return _assemble(space, local)


def assemble_load(space, values_at_quad, rule=DEGREE4):
    """Load vector ``(f, phi_k)`` from values at quadrature points."""
    mesh = space.mesh
    f = np.asarray(values_at_quad, dtype=float)
    local = np.einsum("q,qk,tq->tk", rule.weights, rule.points, f)
    local *= mesh.areas[:, None]
    dofs = space.element_dofs
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local[keep], minlength=space.n_dofs)


def _eval_field(f, points):
    x = points[..., 0]
    y = points[..., 1]
    return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)


def interpolate(space, f):
    """Nodal interpolant: coefficient ``j`` is ``f`` at the vertex of dof ``j``.

    ``f`` is called as ``f(x, y)`` with arrays. Boundary values are discarded
    on a ``dirichlet0`` space.
    """
    p = space.dof_points
    values = np.array(_eval_field(f, p), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.argmax(bad))
        v = int(space.vertex_of_dof[k])
        raise InvalidArgumentError(
            f"non-finite sample {values[k]} at vertex {v} {tuple(p[k])}")
    return values


def evaluate_at_quad(space, coeffs, rule=DEGREE4):
    """(nt, nq) values of a discrete function at quadrature points."""
    vals = space.to_vertices(coeffs)[space.mesh.triangles]
    return vals @ rule.points.T


def gradient_per_element(space, coeffs):
    vals = space.to_vertices(coeffs)[space.mesh.triangles]
    return np.einsum("ta,tax->tx", vals, barycentric_gradients(space.mesh))


def error_norms(space, coeffs, exact, exact_grad=None, rule=DEGREE4):
    """L2 error and H1 seminorm error of a discrete function.

    Parameters
    ----------
    exact : callable ``f(x, y)``
    exact_grad : callable ``g(x, y) -> (gx, gy)``, optional
        Without it the seminorm error is returned as ``nan``.
    """
    mesh = space.mesh
    qp = quadrature_points(mesh, rule)
    w = rule.weights[None, :] * mesh.areas[:, None]
    uh = evaluate_at_quad(space, coeffs, rule)
    diff = uh - _eval_field(exact, qp)
    l2 = float(np.sqrt(np.sum(w * diff ** 2)))
    if exact_grad is None:
        return l2, float("nan")
    gx, gy = exact_grad(qp[..., 0], qp[..., 1])
    gh = gradient_per_element(space, coeffs)
    dx = gh[:, None, 0] - gx
    dy = gh[:, None, 1] - gy
    h1 = float(np.sqrt(np.sum(w * (dx ** 2 + dy ** 2))))
    return l2, h1


def integrate(mesh, f, rule=DEGREE4):
    qp = quadrature_points(mesh, rule)
    w = rule.weights[None, :] * mesh.areas[:, None]
    return float(np.sum(w * _eval_field(f, qp)))
