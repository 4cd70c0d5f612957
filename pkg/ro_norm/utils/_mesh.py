import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from ro_norm.utils._errors import (
    MeshParseError,
    MeshIndexError,
    DegenerateTriangleError,
    DisconnectedMeshError,
)

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-12


def _as_3d(vertices):
    if vertices.shape[1] == 3:
        return vertices
    return np.hstack([vertices, np.zeros((len(vertices), 3 - vertices.shape[1]))])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh of a 2D domain or of a surface embedded in 3D.

    Parameters
    ----------
    vertices : array, shape=(n_vertices, dim)
        Vertex coordinates, ``dim`` is 2 or 3.
    triangles : array, shape=(n_triangles, 3)
        Zero-based vertex indices of each triangle.

    Raises
    ------
    MeshIndexError
        If a triangle references a vertex outside ``[0, n_vertices)``.
    DegenerateTriangleError
        If a triangle has an area below 1e-12.
    DisconnectedMeshError
        If the mesh has more than one connected component.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshParseError(
                f"vertices must have shape (n, 2) or (n, 3), got {vertices.shape}"
            )
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        self._check()

    def _check(self):
        n = self.n_vertices
        bad = (self.triangles < 0) | (self.triangles >= n)
        if bad.any():
            t = int(np.nonzero(bad.any(axis=1))[0][0])
            raise MeshIndexError(
                f"Triangle {t} {self.triangles[t].tolist()} references a vertex "
                f"outside [0, {n})"
            )
        areas = self.triangle_areas()
        if len(areas) and areas.min() < MIN_TRIANGLE_AREA:
            t = int(np.argmin(areas))
            raise DegenerateTriangleError(
                f"Triangle {t} has area {areas[t]:.3e} < {MIN_TRIANGLE_AREA}"
            )
        n_components, _ = connected_components(self.adjacency(), directed=False)
        if n_components != 1:
            raise DisconnectedMeshError(
                f"Mesh has {n_components} connected components, expected 1"
            )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def adjacency(self):
        """Symmetric vertex adjacency matrix (csr)."""
        t = self.triangles
        i = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
        j = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
        n = self.n_vertices
        adj = sparse.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        return adj + adj.T

    def triangle_areas(self):
        v = _as_3d(self.vertices)
        v0 = v[self.triangles[:, 0]]
        v1 = v[self.triangles[:, 1]]
        v2 = v[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    def area(self):
        return float(self.triangle_areas().sum())

    def centroid_vertex(self):
        """Index of the vertex closest to the mean vertex position."""
        centroid = self.vertices.mean(axis=0)
        return int(np.argmin(np.linalg.norm(self.vertices - centroid, axis=1)))

    def checksum(self):
        h = hashlib.sha256()
        h.update(self.vertices.astype("<f8").tobytes())
        h.update(self.triangles.astype("<i8").tobytes())
        return h.hexdigest()[:16]


def _strip(line):
    return line.split("#", 1)[0].strip()


def load_mesh(path):
    """Read a mesh in the plain text format.

    The first non-comment line is ``n_vertices n_triangles dim``, followed
    by ``n_vertices`` lines of ``dim`` floats and ``n_triangles`` lines of
    three zero-based vertex indices. ``#`` starts a comment.

    Parameters
    ----------
    path : str | Path
        Mesh file.

    Returns
    -------
    mesh : TriMesh
    """
    path = Path(path)
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            content = _strip(line)
            if content:
                rows.append((lineno, content.split()))
    if not rows:
        raise MeshParseError(f"{path}: empty mesh file")

    lineno, fields = rows[0]
    try:
        n_vertices, n_triangles, dim = (int(x) for x in fields)
    except ValueError:
        raise MeshParseError(
            f"{path}:{lineno}: expected 'n_vertices n_triangles dim', got {fields}"
        )
    if dim not in (2, 3):
        raise MeshParseError(f"{path}:{lineno}: dim must be 2 or 3, got {dim}")
    if len(rows) - 1 != n_vertices + n_triangles:
        raise MeshParseError(
            f"{path}: expected {n_vertices + n_triangles} data lines, "
            f"found {len(rows) - 1}"
        )

    vertices = np.empty((n_vertices, dim))
    for k, (lineno, fields) in enumerate(rows[1:n_vertices + 1]):
        if len(fields) != dim:
            raise MeshParseError(f"{path}:{lineno}: expected {dim} coordinates")
        try:
            vertices[k] = [float(x) for x in fields]
        except ValueError:
            raise MeshParseError(f"{path}:{lineno}: malformed coordinate {fields}")

    triangles = np.empty((n_triangles, 3), dtype=np.int64)
    for k, (lineno, fields) in enumerate(rows[n_vertices + 1:]):
        if len(fields) != 3:
            raise MeshParseError(f"{path}:{lineno}: expected 3 vertex indices")
        try:
            triangles[k] = [int(x) for x in fields]
        except ValueError:
            raise MeshParseError(f"{path}:{lineno}: malformed index {fields}")

    mesh = TriMesh(vertices, triangles)
    logger.info(
        "Loaded mesh %s: %d vertices, %d triangles",
        path.name, mesh.n_vertices, mesh.n_triangles,
    )
    return mesh


def save_mesh(mesh, path):
    path = Path(path)
    with open(path, "w") as f:
        f.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.dim}\n")
        for v in mesh.vertices:
            f.write(" ".join(repr(float(x)) for x in v) + "\n")
        for t in mesh.triangles:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")
    return path


def assemble_operators(mesh):
    """Cotangent stiffness matrix and lumped mass of a triangle mesh.

    Off-diagonal entries are ``L_ij = -(cot a_ij + cot b_ij) / 2`` summed
    over the triangles sharing edge ``(i, j)``; the diagonal is the negative
    row sum (zero-Neumann Laplacian). Obtuse triangles give negative
    cotangents, which are kept as is.

    Parameters
    ----------
    mesh : TriMesh

    Returns
    -------
    stiffness : scipy.sparse.csr_matrix, shape=(n, n)
        Symmetric positive semidefinite stiffness matrix.
    lumped_mass : array, shape=(n,)
        One third of the area of the triangles incident to each vertex.
    """
    n = mesh.n_vertices
    tris = mesh.triangles
    R = _as_3d(mesh.vertices)[tris]  # (n_tri, 3 corners, 3)
    areas = mesh.triangle_areas()

    ii, jj, weights = [], [], []
    for k in range(3):
        k1 = (k + 1) % 3
        k2 = (k + 2) % 3
        e1 = R[:, k1] - R[:, k]
        e2 = R[:, k2] - R[:, k]
        # cot of the angle at corner k, opposite to edge (k1, k2)
        cot = (e1 * e2).sum(axis=-1) / (2.0 * areas)
        ii.append(tris[:, k1])
        jj.append(tris[:, k2])
        weights.append(-0.5 * cot)

    W = sparse.csr_matrix(
        (np.concatenate(weights), (np.concatenate(ii), np.concatenate(jj))),
        shape=(n, n),
    )
    W = W + W.T
    diag = -np.asarray(W.sum(axis=1)).ravel()
    stiffness = (W + sparse.diags(diag)).tocsr()

    lumped_mass = np.bincount(
        tris.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n
    )
    return stiffness, lumped_mass
