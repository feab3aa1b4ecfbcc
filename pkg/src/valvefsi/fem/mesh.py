"""Structured quadrilateral/hexahedral meshes with tagged boundary facets.

Meshes are axis-aligned tensor grids generated in-code; a simple ASCII
import/export is provided for interoperability. Cell and vertex numbering is
lexicographic with the x axis varying fastest.
"""

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_FACES_2D = ("x_min", "x_max", "y_min", "y_max")
BOUNDARY_FACES_3D = BOUNDARY_FACES_2D + ("z_min", "z_max")
VALID_TAGS = ("inflow", "outflow", "wall")


@dataclass
class Mesh:
    dim: int
    origin: np.ndarray
    extent: np.ndarray
    subdivisions: np.ndarray
    h: np.ndarray
    vertices: np.ndarray
    cells: np.ndarray
    facet_cell: np.ndarray
    facet_axis: np.ndarray
    facet_side: np.ndarray
    facet_tag: np.ndarray  # index into tag_names
    tag_names: tuple = VALID_TAGS
    _cell_multi: np.ndarray = field(default=None, repr=False)

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def h_max(self) -> float:
        return float(np.max(self.h))

    def cell_multi_index(self):
        if self._cell_multi is None:
            n = self.subdivisions
            idx = np.arange(self.n_cells)
            multi = np.empty((self.n_cells, self.dim), dtype=np.int64)
            for a in range(self.dim):
                multi[:, a] = (idx // int(np.prod(n[:a]))) % n[a]
            self._cell_multi = multi
        return self._cell_multi

    def cell_origins(self, cell_ids=None):
        multi = self.cell_multi_index()
        if cell_ids is not None:
            multi = multi[cell_ids]
        return self.origin + multi * self.h

    def facet_ids(self, tag: str):
        return np.nonzero(self.facet_tag == self.tag_names.index(tag))[0]

    def locate_points(self, points):
        """Map physical points to (cell_ids, reference coords in [-1,1]^d).

        Points outside the box are clamped to the nearest cell.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (points - self.origin) / self.h
        ij = np.clip(np.floor(rel).astype(np.int64), 0, self.subdivisions - 1)
        cell_ids = ij[:, 0]
        for a in range(1, self.dim):
            cell_ids = cell_ids + ij[:, a] * int(np.prod(self.subdivisions[:a]))
        ref = 2.0 * (rel - ij) - 1.0
        return cell_ids, ref

    def map_to_physical(self, cell_ids, ref_points):
        """Physical coordinates of reference points inside the given cells."""
        ref_points = np.atleast_2d(ref_points)
        orig = self.cell_origins(cell_ids)
        return orig + 0.5 * (ref_points + 1.0) * self.h


def _vertex_lattice(origin, h, npts):
    axes = [origin[a] + h[a] * np.arange(npts[a]) for a in range(len(npts))]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=-1)


def lattice_connectivity(subdivisions, degree: int):
    """Cell-to-node connectivity for a degree-k tensor lattice over the grid.

    Returns (n_cells, (degree+1)^dim) array of node indices into the
    lexicographic lattice with degree*n_a + 1 nodes per axis.
    """
    n = np.asarray(subdivisions, dtype=np.int64)
    dim = len(n)
    nnodes = degree * n + 1
    stride = np.ones(dim, dtype=np.int64)
    for a in range(1, dim):
        stride[a] = stride[a - 1] * nnodes[a - 1]

    idx = np.arange(int(np.prod(n)))
    cell_multi = np.stack(
        [(idx // int(np.prod(n[:a]))) % n[a] for a in range(dim)], axis=-1
    )
    base = (cell_multi * degree) @ stride

    k1 = degree + 1
    local = np.arange(k1**dim)
    local_multi = np.stack([(local // k1**a) % k1 for a in range(dim)], axis=-1)
    offsets = local_multi @ stride
    return base[:, None] + offsets[None, :]


def build_structured_mesh(extent, subdivisions, tags=None, origin=None) -> Mesh:
    """Axis-aligned structured mesh of a box.

    extent: box side lengths [m]; subdivisions: cell counts per axis;
    tags: map from box face ("x_min", "x_max", ...) to one of
    {"inflow", "outflow", "wall"}. Unlisted faces default to "wall".
    """
    extent = np.asarray(extent, dtype=float)
    subdivisions = np.asarray(subdivisions, dtype=np.int64)
    dim = len(extent)
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    if len(subdivisions) != dim:
        raise ValueError("extent and subdivisions must have equal length")
    if np.any(subdivisions < 1):
        raise ValueError(f"subdivision counts must be >= 1, got {subdivisions.tolist()}")
    if np.any(extent <= 0):
        raise ValueError(f"extents must be positive, got {extent.tolist()}")
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)

    face_names = BOUNDARY_FACES_2D if dim == 2 else BOUNDARY_FACES_3D
    tags = dict(tags or {})
    for key, val in tags.items():
        if key not in face_names:
            raise ValueError(f"unknown boundary face {key!r}; valid: {face_names}")
        if val not in VALID_TAGS:
            raise ValueError(f"unknown tag {val!r}; valid: {VALID_TAGS}")

    h = extent / subdivisions
    vertices = _vertex_lattice(origin, h, subdivisions + 1)
    cells = lattice_connectivity(subdivisions, 1)

    # boundary facets: for each axis and side, the layer of adjacent cells
    idx = np.arange(int(np.prod(subdivisions)))
    cell_multi = np.stack(
        [(idx // int(np.prod(subdivisions[:a]))) % subdivisions[a] for a in range(dim)],
        axis=-1,
    )
    f_cell, f_axis, f_side, f_tag = [], [], [], []
    for a in range(dim):
        for side in (0, 1):
            face = face_names[2 * a + side]
            tag = tags.get(face, "wall")
            layer = cell_multi[:, a] == (0 if side == 0 else subdivisions[a] - 1)
            ids = np.nonzero(layer)[0]
            f_cell.append(ids)
            f_axis.append(np.full(len(ids), a, dtype=np.int64))
            f_side.append(np.full(len(ids), side, dtype=np.int64))
            f_tag.append(np.full(len(ids), VALID_TAGS.index(tag), dtype=np.int64))

    return Mesh(
        dim=dim,
        origin=origin,
        extent=extent,
        subdivisions=subdivisions,
        h=h,
        vertices=vertices,
        cells=cells,
        facet_cell=np.concatenate(f_cell),
        facet_axis=np.concatenate(f_axis),
        facet_side=np.concatenate(f_side),
        facet_tag=np.concatenate(f_tag),
    )


def write_ascii_mesh(mesh: Mesh, path):
    """Write the documented ASCII format: header, vertices, cells, facets."""
    with open(path, "w") as f:
        f.write("valvefsi-mesh 1\n")
        f.write(f"{mesh.dim} {mesh.n_cells} {mesh.n_vertices}\n")
        for v in mesh.vertices:
            f.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        for c in mesh.cells:
            f.write(" ".join(str(i) for i in c) + "\n")
        f.write(f"{len(mesh.facet_cell)}\n")
        for cell, axis, side, tag in zip(
            mesh.facet_cell, mesh.facet_axis, mesh.facet_side, mesh.facet_tag
        ):
            f.write(f"{mesh.tag_names[tag]} {cell} {axis} {side}\n")


def read_ascii_mesh(path) -> Mesh:
    """Read the ASCII format written by write_ascii_mesh.

    The mesh must be a structured axis-aligned grid (verified); general
    unstructured meshes are not supported.
    """
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("valvefsi-mesh"):
        raise ValueError(f"{path}: not a valvefsi ASCII mesh")
    dim, ncells, nverts = (int(x) for x in lines[1].split())
    verts = np.array([[float(x) for x in lines[2 + i].split()] for i in range(nverts)])
    row = 2 + nverts
    cells = np.array(
        [[int(x) for x in lines[row + i].split()] for i in range(ncells)], dtype=np.int64
    )
    row += ncells
    nfacets = int(lines[row])
    row += 1
    facets = [lines[row + i].split() for i in range(nfacets)]

    # reconstruct the lattice and verify structure
    axes = [np.unique(np.round(verts[:, a], 12)) for a in range(dim)]
    subdivisions = np.array([len(ax) - 1 for ax in axes], dtype=np.int64)
    h = np.array([np.diff(ax).mean() for ax in axes])
    for a in range(dim):
        if subdivisions[a] < 1 or not np.allclose(np.diff(axes[a]), h[a], rtol=1e-9):
            raise ValueError(f"{path}: mesh is not a uniform structured grid on axis {a}")
    origin = np.array([ax[0] for ax in axes])
    rebuilt = build_structured_mesh(
        extent=h * subdivisions, subdivisions=subdivisions, origin=origin
    )
    if rebuilt.n_vertices != nverts or rebuilt.n_cells != ncells:
        raise ValueError(f"{path}: vertex/cell counts do not match a structured grid")
    if not np.allclose(rebuilt.vertices, verts, atol=1e-12 * max(1.0, np.abs(verts).max())):
        raise ValueError(f"{path}: vertex ordering is not lexicographic")
    if not np.array_equal(rebuilt.cells, cells):
        raise ValueError(f"{path}: cell connectivity is not lexicographic")

    f_cell = np.array([int(f[1]) for f in facets], dtype=np.int64)
    f_axis = np.array([int(f[2]) for f in facets], dtype=np.int64)
    f_side = np.array([int(f[3]) for f in facets], dtype=np.int64)
    f_tag = np.array([VALID_TAGS.index(f[0]) for f in facets], dtype=np.int64)
    rebuilt.facet_cell = f_cell
    rebuilt.facet_axis = f_axis
    rebuilt.facet_side = f_side
    rebuilt.facet_tag = f_tag
    return rebuilt
