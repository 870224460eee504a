"""Structured triangulations of rectangles, uniform refinement and a bucket
grid for radius queries."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvalidArgumentError(
                f"rectangle must have positive side lengths, got {self}")

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def diameter(self):
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points)
        return ((p[:, 0] >= self.x0 - tol) & (p[:, 0] <= self.x1 + tol)
                & (p[:, 1] >= self.y0 - tol) & (p[:, 1] <= self.y1 + tol))


UNIT_SQUARE = Rectangle()


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_vertex : (nv,) bool array
    h : float
        Longest edge over all triangles.
    domain : Rectangle or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    h: float
    domain: Rectangle = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def corners(self):
        """(nt, 3, 2) array of triangle vertex coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self):
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        local.sort(axis=1)
        edges, inverse, counts = np.unique(
            local, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(3, -1).T
        return edges, inverse, counts

    @property
    def edges(self):
        """(ne, 2) sorted vertex pairs of all unique edges."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """(nt, 3) edge ids of the edges (0-1, 1-2, 2-0) of each triangle."""
        return self._edge_data[1]

    @property
    def edge_multiplicity(self):
        """Number of triangles sharing each edge (1 on the boundary)."""
        return self._edge_data[2]

    @property
    def boundary_edges(self):
        return self.edges[self.edge_multiplicity == 1]

    @cached_property
    def centroids(self):
        return self.corners.mean(axis=1)

    @cached_property
    def circumradii_about_centroid(self):
        """Distance from each centroid to its farthest vertex."""
        d = self.corners - self.centroids[:, None, :]
        return np.sqrt((d ** 2).sum(axis=2)).max(axis=1)

    def check(self):
        """Raise ``InvalidArgumentError`` if a structural invariant fails."""
        if np.any(self.signed_areas <= 0):
            raise InvalidArgumentError("mesh has non-positive triangle areas")
        if np.any(self.edge_multiplicity > 2):
            raise InvalidArgumentError("mesh is not conforming")
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.boundary_edges.ravel()] = True
        if not np.array_equal(flags, self.boundary_vertex):
            raise InvalidArgumentError("boundary flags disagree with edges")
        if not np.isclose(longest_edge(self.vertices, self.triangles), self.h,
                          rtol=1e-14, atol=0.0):
            raise InvalidArgumentError("stored h is not the longest edge")


def longest_edge(vertices, triangles):
    c = vertices[triangles]
    lengths = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
    return float(lengths.max())


def _boundary_flags(n_vertices, triangles):
    t = triangles
    local = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]),
                    axis=1)
    edges, counts = np.unique(local, axis=0, return_counts=True)
    flags = np.zeros(n_vertices, dtype=bool)
    flags[edges[counts == 1].ravel()] = True
    return flags


def mesh_from_arrays(vertices, triangles, domain=None):
    """Wrap explicit vertex and triangle arrays (counterclockwise) as a
    checked :class:`Mesh`."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(vertices=vertices, triangles=triangles,
                boundary_vertex=_boundary_flags(len(vertices), triangles),
                h=longest_edge(vertices, triangles), domain=domain)
    mesh.check()
    return mesh


def build_structured_mesh(nx, ny, domain=UNIT_SQUARE):
    """Split an ``nx`` by ``ny`` grid of cells into ``2 nx ny`` triangles.

    Every cell is cut along its diagonal from lower left to upper right.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(
            f"subdivisions must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    return Mesh(vertices=vertices,
                triangles=triangles,
                boundary_vertex=_boundary_flags(len(vertices), triangles),
                h=longest_edge(vertices, triangles),
                domain=domain)


def refine_uniform(mesh):
    """Split every triangle into four congruent children at edge midpoints."""
    edges = mesh.edges
    te = mesh.triangle_edges
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    a, b, c = mesh.triangles.T
    m_ab, m_bc, m_ca = (te + nv).T
    triangles = np.stack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ], axis=1).reshape(-1, 3)

    return Mesh(vertices=vertices,
                triangles=triangles,
                boundary_vertex=_boundary_flags(len(vertices), triangles),
                # children are similar with ratio 1/2, and halving is exact
                h=mesh.h / 2,
                domain=mesh.domain)


@dataclass(frozen=True, eq=False)
class SpatialIndex:
    """Uniform bucket grid over the mesh bounding box.

    Triangle ``t`` is listed in every bucket that its bounding box overlaps,
    stored in compressed form: the triangles of bucket ``b`` are
    ``items[offsets[b]:offsets[b + 1]]`` with ``b = ix * shape[1] + iy``.
    """

    mesh: Mesh
    origin: np.ndarray
    bucket_size: float
    shape: tuple
    offsets: np.ndarray
    items: np.ndarray

    def bucket_of(self, points):
        p = np.atleast_2d(points)
        idx = np.floor((p - self.origin) / self.bucket_size).astype(np.int64)
        return idx

    def bucket_range(self, lo, hi):
        """Clipped integer bucket bounds covering the box ``[lo, hi]``."""
        ilo = np.floor((np.asarray(lo) - self.origin) / self.bucket_size)
        ihi = np.floor((np.asarray(hi) - self.origin) / self.bucket_size)
        ilo = np.maximum(ilo.astype(np.int64), 0)
        ihi = np.minimum(ihi.astype(np.int64), np.array(self.shape) - 1)
        return ilo, ihi


def build_spatial_index(mesh, bucket_size=None, delta=None):
    """Bucket the triangles of ``mesh``.

    The default bucket size is ``max(delta, 2 h)`` (or ``2 h`` without
    ``delta``).
    """
    if bucket_size is None:
        bucket_size = max(delta or 0.0, 2.0 * mesh.h)
    if bucket_size <= 0:
        raise InvalidArgumentError("bucket size must be positive")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    shape = tuple(int(s) for s in np.floor((hi - lo) / bucket_size) + 1)

    c = mesh.corners
    blo = np.floor((c.min(axis=1) - lo) / bucket_size).astype(np.int64)
    bhi = np.floor((c.max(axis=1) - lo) / bucket_size).astype(np.int64)
    blo = np.clip(blo, 0, np.array(shape) - 1)
    bhi = np.clip(bhi, 0, np.array(shape) - 1)

    tri_ids, bucket_ids = [], []
    span = bhi - blo + 1
    for dx in range(int(span[:, 0].max())):
        for dy in range(int(span[:, 1].max())):
            ok = (dx < span[:, 0]) & (dy < span[:, 1])
            t = np.nonzero(ok)[0]
            tri_ids.append(t)
            bucket_ids.append((blo[t, 0] + dx) * shape[1] + blo[t, 1] + dy)
    tri_ids = np.concatenate(tri_ids)
    bucket_ids = np.concatenate(bucket_ids)
    order = np.lexsort((tri_ids, bucket_ids))
    counts = np.bincount(bucket_ids, minlength=shape[0] * shape[1])
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return SpatialIndex(mesh=mesh, origin=lo, bucket_size=float(bucket_size),
                        shape=shape, offsets=offsets,
                        items=tri_ids[order])


def triangles_near(index, x, r):
    """Indices of triangles that may intersect the closed disk ``B(x, r)``.

    The result is a superset of the exact intersecting set; callers filter.
    """
    if r <= 0:
        raise InvalidArgumentError(f"radius must be positive, got {r}")
    x = np.asarray(x, dtype=float)
    ilo, ihi = index.bucket_range(x - r, x + r)
    if np.any(ilo > ihi):
        return np.empty(0, dtype=np.int64)
    ny = index.shape[1]
    chunks = []
    for ix in range(ilo[0], ihi[0] + 1):
        b0 = ix * ny + ilo[1]
        b1 = ix * ny + ihi[1] + 1
        chunks.append(index.items[index.offsets[b0]:index.offsets[b1]])
    return np.unique(np.concatenate(chunks))
