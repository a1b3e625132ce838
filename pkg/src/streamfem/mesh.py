"""Conforming triangulations of axis-aligned rectangles.

Meshes are immutable after construction and carry the full edge data
needed by interior-penalty assembly: unique edge list, edge/triangle
adjacency, boundary flags and per-edge unit normals.
"""

import numpy as np

__all__ = ["Mesh", "build_structured_mesh", "uniform_refine", "edge_geometry",
           "dump_text"]

# local edges of a triangle (a, b, c), traversed counterclockwise
_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class Mesh:
    """Triangulation with edge connectivity.

    Attributes
    ----------
    vertices : ndarray, shape (V, 2)
    triangles : ndarray, shape (F, 3)
        Vertex indices, counterclockwise.
    edges : ndarray, shape (E, 2)
        Sorted vertex index pairs, each edge listed once.
    tri_edges : ndarray, shape (F, 3)
        Global edge index of the local edges (0,1), (1,2), (2,0).
    edge_tris : ndarray, shape (E, 2)
        Adjacent triangle indices; the lower index (T-) first, -1 when
        the edge lies on the boundary.
    edge_local : ndarray, shape (E, 2)
        Local edge index within each adjacent triangle (-1 when absent).
    boundary_edge : ndarray of bool, shape (E,)
    normals : ndarray, shape (E, 2)
        Unit normal per edge: for interior edges pointing from T- into
        T+, for boundary edges pointing out of the domain.
    mesh_size_h : float
        Maximum triangle diameter.
    """

    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (V, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (F, 3)")
        self.vertices = vertices
        self.triangles = triangles
        self._build_edges()
        self._check_invariants()
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def _build_edges(self):
        tris = self.triangles
        nf = tris.shape[0]
        # all local edges as sorted pairs, deduplicated into the edge list
        pairs = np.empty((3 * nf, 2), dtype=np.int64)
        for le, (i, j) in enumerate(_LOCAL_EDGES):
            pairs[le::3, 0] = tris[:, i]
            pairs[le::3, 1] = tris[:, j]
        pairs_sorted = np.sort(pairs, axis=1)
        edges, inverse = np.unique(pairs_sorted, axis=0, return_inverse=True)
        ne = edges.shape[0]

        tri_edges = inverse.reshape(nf, 3)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_local = np.full((ne, 2), -1, dtype=np.int64)
        # triangles are visited in ascending index order, so slot 0 is T-
        for f in range(nf):
            for le in range(3):
                e = tri_edges[f, le]
                slot = 0 if edge_tris[e, 0] < 0 else 1
                if slot == 1 and edge_tris[e, 1] >= 0:
                    raise ValueError(f"edge {e} shared by more than 2 triangles")
                edge_tris[e, slot] = f
                edge_local[e, slot] = le

        boundary = edge_tris[:, 1] < 0

        # normal = outward normal of T- across its local edge; for a CCW
        # triangle that is the directed edge rotated clockwise
        tminus = edge_tris[:, 0]
        lminus = edge_local[:, 0]
        i_loc = np.array([le[0] for le in _LOCAL_EDGES])[lminus]
        j_loc = np.array([le[1] for le in _LOCAL_EDGES])[lminus]
        p = self.vertices[tris[tminus, i_loc]]
        q = self.vertices[tris[tminus, j_loc]]
        d = q - p
        lengths = np.hypot(d[:, 0], d[:, 1])
        normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / lengths[:, None]

        self.edges = edges
        self.tri_edges = tri_edges
        self.edge_tris = edge_tris
        self.edge_local = edge_local
        self.boundary_edge = boundary
        self.edge_lengths = lengths
        self.normals = normals
        for arr in (self.edges, self.tri_edges, self.edge_tris,
                    self.edge_local, self.boundary_edge, self.edge_lengths,
                    self.normals):
            arr.setflags(write=False)

    def _check_invariants(self):
        v = self.num_vertices
        e = self.num_edges
        f = self.num_triangles
        if v - e + f != 1:
            raise ValueError(f"Euler relation violated: V-E+F = {v - e + f}")
        if np.any(self.signed_areas() <= 0.0):
            raise ValueError("all triangles must be counterclockwise with "
                             "positive area")

    def signed_areas(self):
        """Signed area per triangle (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def mesh_size_h(self):
        p = self.vertices[self.triangles]
        diam = 0.0
        for i, j in _LOCAL_EDGES:
            d = p[:, j] - p[:, i]
            diam = max(diam, float(np.hypot(d[:, 0], d[:, 1]).max()))
        return diam

    def boundary_vertices(self):
        """Indices of vertices lying on the boundary."""
        return np.unique(self.edges[self.boundary_edge])


def build_structured_mesh(n, domain=((0.0, 1.0), (0.0, 1.0))):
    """Uniform n-by-n triangulation of an axis-aligned rectangle.

    Every grid cell is split along the same lower-left to upper-right
    diagonal, which keeps vertex, edge and DOF orderings reproducible.

    Parameters
    ----------
    n : int
        Number of cells per direction, n >= 1.
    domain : pair of pairs
        ((xmin, xmax), (ymin, ymax)).
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must have positive side lengths")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for j in range(n):
        for i in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            triangles[t] = (a, b, c)
            triangles[t + 1] = (a, c, d)
            t += 2
    return Mesh(vertices, triangles)


def uniform_refine(mesh):
    """Split every triangle into 4 using edge midpoints; h halves."""
    v = mesh.num_vertices
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])

    tris = mesh.triangles
    m01 = v + mesh.tri_edges[:, 0]
    m12 = v + mesh.tri_edges[:, 1]
    m20 = v + mesh.tri_edges[:, 2]
    children = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    children[0::4] = np.column_stack([tris[:, 0], m01, m20])
    children[1::4] = np.column_stack([m01, tris[:, 1], m12])
    children[2::4] = np.column_stack([m20, m12, tris[:, 2]])
    children[3::4] = np.column_stack([m01, m12, m20])
    return Mesh(vertices, children)


def edge_geometry(mesh, edge_index):
    """Length, unit normal and endpoint coordinates of one edge."""
    e = int(edge_index)
    if not (0 <= e < mesh.num_edges):
        raise IndexError(f"edge index {e} out of range")
    pts = mesh.vertices[mesh.edges[e]]
    return float(mesh.edge_lengths[e]), mesh.normals[e].copy(), pts.copy()


def dump_text(mesh):
    """Plain-text dump (vertex list then triangle list) for debugging."""
    lines = [f"vertices {mesh.num_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.num_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"
