"""Triangulated surface pieces clipped to a ball.

A DiskSample is what the blow-up and structure checks work on: vertices,
triangles, per-vertex |A|^2 and unit normals, the ball B_r(x) it was cut
from, and the edge graph used for intrinsic distances.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import HypothesisError, InvalidScaleError, ShapeMismatchError, UsageError
from .surface_core import GeomData, ParamPatch, fundamental_forms, grid_triangles

logger = logging.getLogger(__name__)


def unique_edges(faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted unique edges of a triangle list and how many faces use each"""
    edges = np.concatenate((faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]))
    edges = np.sort(edges, axis=1)
    edges, counts = np.unique(edges, axis=0, return_counts=True)
    return edges, counts


def edge_graph(n_vertices: int, edges: np.ndarray, weights: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    if weights is None:
        weights = np.ones(edges.shape[0])
    graph = sparse.coo_matrix((weights, (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices))
    return (graph + graph.T).tocsr()


def face_components(n_vertices: int, faces: np.ndarray) -> Tuple[int, np.ndarray]:
    """Connected components of the vertices through shared triangle edges"""
    if faces.size == 0:
        return n_vertices, np.arange(n_vertices)
    edges, _ = unique_edges(faces)
    return connected_components(edge_graph(n_vertices, edges), directed=False)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals"""
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    face_normals = np.cross(v1 - v0, v2 - v0)
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, faces[:, k], face_normals)
    norm = np.linalg.norm(normals, axis=1)
    norm[norm == 0] = 1.0
    return normals / norm[:, None]


@dataclass(frozen=True)
class DiskSample:
    vertices: np.ndarray
    faces: np.ndarray
    A2: np.ndarray
    normals: np.ndarray
    center: np.ndarray
    radius: float
    topology_override: bool = False
    snapped: int = field(default=0)

    def __post_init__(self):
        n = self.vertices.shape[0]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ShapeMismatchError("vertices must be an (n, 3) array")
        if self.A2.shape != (n,) or self.normals.shape != (n, 3):
            raise ShapeMismatchError("per-vertex |A|^2 and normals must match the vertices")
        if self.radius <= 0:
            raise InvalidScaleError(f"ball radius must be positive, got {self.radius}")
        for name in ("vertices", "faces", "A2", "normals", "center"):
            getattr(self, name).setflags(write=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_mesh(
        cls,
        vertices,
        faces,
        A2,
        center: Sequence[float],
        radius: float,
        normals=None,
        snap: bool = True,
        topology_override: bool = False,
    ) -> "DiskSample":
        """
        Clip a mesh to the closed ball and keep the piece through the centre.

        Args:
            vertices, faces: Triangle mesh (0-based faces)
            A2: Per-vertex |A|^2
            center, radius: The ball B_r(x)
            normals: Per-vertex unit normals (area-weighted if omitted)
            snap: Move boundary vertices within one edge length of the sphere onto it
            topology_override: Accept pieces that are not disks

        Returns:
            DiskSample of the component containing the vertex nearest the centre
        """
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        A2 = np.asarray(A2, dtype=float)
        center = np.array(center, dtype=float)
        if A2.shape != (vertices.shape[0],):
            raise ShapeMismatchError(f"{A2.size} curvature values for {vertices.shape[0]} vertices")
        if radius <= 0:
            raise InvalidScaleError(f"ball radius must be positive, got {radius}")
        if normals is None:
            normals = vertex_normals(vertices, faces)
        normals = np.asarray(normals, dtype=float)

        inside = np.linalg.norm(vertices - center, axis=1) <= radius
        faces = faces[np.all(inside[faces], axis=1)]
        if faces.shape[0] == 0:
            raise HypothesisError("no triangle of the surface lies inside the ball")
        used = np.zeros(vertices.shape[0], dtype=bool)
        used[faces.ravel()] = True

        _, labels = face_components(vertices.shape[0], faces)
        candidates = np.flatnonzero(used)
        nearest = candidates[np.argmin(np.linalg.norm(vertices[candidates] - center, axis=1))]
        keep = used & (labels == labels[nearest])
        faces = faces[keep[faces[:, 0]]]

        index = np.full(vertices.shape[0], -1, dtype=np.int64)
        index[keep] = np.arange(int(keep.sum()))
        vertices = vertices[keep].copy()
        faces = index[faces]
        A2 = A2[keep]
        normals = normals[keep]

        snapped = 0
        if snap:
            vertices, snapped = _snap_to_sphere(vertices, faces, center, radius)
        return cls(vertices, faces, A2, normals, center, float(radius), topology_override, snapped)

    @classmethod
    def from_patch(
        cls,
        patch: ParamPatch,
        center: Sequence[float],
        radius: float,
        geom: Optional[GeomData] = None,
        periodic_t: bool = False,
        snap: bool = True,
        topology_override: bool = False,
    ) -> "DiskSample":
        """Triangulate a ParamPatch on its grid and clip it to B_r(center).

        ``periodic_t`` welds the last t column onto the first, for patches
        that close up in t such as a full catenoid.
        """
        geom = geom or fundamental_forms(patch)
        n_s, n_t = patch.grid
        faces = grid_triangles(n_s, n_t)
        vertices = patch.positions.reshape(-1, 3)
        A2 = geom.A2.ravel()
        normals = geom.normal.reshape(-1, 3)
        if periodic_t:
            cols = n_t + 1
            node = np.arange(vertices.shape[0])
            i, j = np.divmod(node, cols)
            welded = i * n_t + np.where(j == n_t, 0, j)
            faces = welded[faces]
            keep = j < n_t
            vertices, A2, normals = vertices[keep], A2[keep], normals[keep]
        return cls.from_mesh(vertices, faces, A2, center, radius, normals, snap, topology_override)

    # -- derived data -----------------------------------------------------

    @cached_property
    def edges(self) -> np.ndarray:
        return unique_edges(self.faces)[0]

    @cached_property
    def boundary(self) -> np.ndarray:
        """Vertices on an edge used by a single triangle"""
        edges, counts = unique_edges(self.faces)
        mask = np.zeros(self.vertex_count, dtype=bool)
        mask[edges[counts == 1].ravel()] = True
        return mask

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @cached_property
    def graph(self) -> sparse.csr_matrix:
        """Edge graph weighted by Euclidean edge length"""
        return edge_graph(self.vertex_count, self.edges, self.edge_lengths)

    @cached_property
    def center_index(self) -> int:
        return int(np.argmin(np.linalg.norm(self.vertices - self.center, axis=1)))

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def euler_characteristic(self) -> int:
        return int(self.vertex_count - self.edges.shape[0] + self.faces.shape[0])

    @property
    def is_disk(self) -> bool:
        return self.euler_characteristic == 1

    @property
    def max_edge(self) -> float:
        return float(self.edge_lengths.max())

    @property
    def min_edge(self) -> float:
        return float(self.edge_lengths[self.edge_lengths > 0].min())

    def distances_from_center(self) -> np.ndarray:
        return np.linalg.norm(self.vertices - self.center, axis=1)

    def boundary_on_sphere(self, radius: Optional[float] = None, tol: Optional[float] = None) -> bool:
        radius = self.radius if radius is None else radius
        tol = self.max_edge if tol is None else tol
        r = self.distances_from_center()[self.boundary]
        return bool(np.all(np.abs(r - radius) <= tol))

    def require_disk(self) -> None:
        chi = self.euler_characteristic
        if chi != 1 and not self.topology_override:
            raise HypothesisError(f"surface piece is not a disk (Euler characteristic {chi})")
        if chi != 1:
            logger.warning("topology override: running on a piece with Euler characteristic %d", chi)

    def rescaled(self, a: float) -> "DiskSample":
        """Dilate about the origin by a > 0"""
        if not np.isfinite(a) or a <= 0:
            raise InvalidScaleError(f"scale must be positive, got {a}")
        return DiskSample(
            a * self.vertices,
            self.faces.copy(),
            self.A2 / (a * a),
            self.normals.copy(),
            a * self.center,
            a * self.radius,
            self.topology_override,
            self.snapped,
        )

    def translated(self, offset: Sequence[float]) -> "DiskSample":
        offset = np.asarray(offset, dtype=float)
        return DiskSample(
            self.vertices + offset,
            self.faces.copy(),
            self.A2.copy(),
            self.normals.copy(),
            self.center + offset,
            self.radius,
            self.topology_override,
            self.snapped,
        )

    def submesh(self, keep: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vertex indices and faces (in the original numbering) of a vertex subset"""
        faces = self.faces[np.all(keep[self.faces], axis=1)]
        used = np.zeros(self.vertex_count, dtype=bool)
        used[faces.ravel()] = True
        return np.flatnonzero(used), faces


def _snap_to_sphere(vertices: np.ndarray, faces: np.ndarray, center: np.ndarray, radius: float):
    edges, counts = unique_edges(faces)
    lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    tol = float(lengths.max())
    boundary = np.zeros(vertices.shape[0], dtype=bool)
    boundary[edges[counts == 1].ravel()] = True
    offset = vertices - center
    r = np.linalg.norm(offset, axis=1)
    move = boundary & (np.abs(r - radius) <= tol) & (r > 0)
    vertices[move] = center + radius * offset[move] / r[move, None]
    return vertices, int(move.sum())


def load_disk(vertices, faces, curvature, center, radius, snap: bool = True,
              topology_override: bool = False) -> DiskSample:
    """DiskSample from raw arrays as read from OBJ and geometry CSV files"""
    curvature = np.asarray(curvature, dtype=float)
    if curvature.shape[0] != np.asarray(vertices).shape[0]:
        raise UsageError(
            f"curvature table has {curvature.shape[0]} rows for {np.asarray(vertices).shape[0]} vertices"
        )
    return DiskSample.from_mesh(vertices, faces, curvature, center, radius, snap=snap,
                                topology_override=topology_override)
