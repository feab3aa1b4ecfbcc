"""Triangulated (3D) or polyline (2D) immersed leaflet surfaces.

The surface carries its reference configuration, a per-vertex opening
displacement field g (the current configuration is x̂ + c·g), a per-vertex
reference curvature, and consistently oriented normals with angle-weighted
pseudo-normals for robust signed-distance attribution at edges and vertices.
"""

from dataclasses import dataclass, field

import numpy as np

from .bvh import AabbTree

_FEATURE_TOL = 1e-10


class GeometryError(ValueError):
    pass


@dataclass
class ImmersedSurface:
    ref_vertices: np.ndarray           # (n, d)
    simplices: np.ndarray              # (m, d): segments (2D) or triangles (3D)
    opening_field: np.ndarray          # (n, d) displacement g, c in [0,1] closed->open
    ref_curvature: np.ndarray = None   # (n,) total curvature of the reference surface
    c: float = 0.0
    vertices: np.ndarray = field(default=None, repr=False)
    simplex_normals: np.ndarray = field(default=None, repr=False)
    vertex_normals: np.ndarray = field(default=None, repr=False)
    tree: AabbTree = field(default=None, repr=False)
    _edge_keys: np.ndarray = field(default=None, repr=False)
    _edge_normals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.ref_vertices = np.asarray(self.ref_vertices, dtype=float)
        self.simplices = np.asarray(self.simplices, dtype=np.int64)
        self.opening_field = np.asarray(self.opening_field, dtype=float)
        d = self.ref_vertices.shape[1]
        if d not in (2, 3):
            raise GeometryError(f"surface dimension must be 2 or 3, got {d}")
        if self.simplices.shape[1] != d:
            raise GeometryError(
                f"simplices must have {d} vertices in {d}D, got {self.simplices.shape[1]}"
            )
        if self.opening_field.shape != self.ref_vertices.shape:
            raise GeometryError("opening field shape must match reference vertices")
        if self.ref_curvature is not None:
            self.ref_curvature = np.asarray(self.ref_curvature, dtype=float)
            if self.ref_curvature.shape != (len(self.ref_vertices),):
                raise GeometryError("reference curvature must be one value per vertex")
        if self.vertices is None:
            self.vertices = self.ref_vertices + self.c * self.opening_field
        self._check_orientation()
        self._update_derived()

    @property
    def dim(self) -> int:
        return self.ref_vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.ref_vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    def _check_orientation(self):
        """Directed facet (edge) multiplicity check for an oriented manifold."""
        if self.dim == 3:
            edges = np.concatenate(
                [self.simplices[:, [0, 1]], self.simplices[:, [1, 2]],
                 self.simplices[:, [2, 0]]]
            )
            key = edges[:, 0] * (self.n_vertices + 1) + edges[:, 1]
            uniq, counts = np.unique(key, return_counts=True)
            if np.any(counts > 1):
                raise GeometryError(
                    "inconsistent triangle orientation: a directed edge is repeated"
                )
        else:
            key = self.simplices[:, 0] * (self.n_vertices + 1) + self.simplices[:, 1]
            if len(np.unique(key)) != len(key):
                raise GeometryError("duplicate segment in polyline surface")

    def measures(self) -> np.ndarray:
        """Segment lengths (2D) or triangle areas (3D) of the current configuration."""
        v = self.vertices[self.simplices]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def total_measure(self) -> float:
        return float(self.measures().sum())

    def _update_derived(self):
        v = self.vertices[self.simplices]
        if self.dim == 2:
            t = v[:, 1] - v[:, 0]
            lengths = np.linalg.norm(t, axis=1)
            if np.any(lengths <= 0):
                raise GeometryError("degenerate (zero-length) segment in surface")
            t = t / lengths[:, None]
            self.simplex_normals = np.stack([t[:, 1], -t[:, 0]], axis=-1)
            # vertex pseudo-normals: sum of incident segment normals
            vn = np.zeros_like(self.vertices)
            np.add.at(vn, self.simplices[:, 0], self.simplex_normals)
            np.add.at(vn, self.simplices[:, 1], self.simplex_normals)
        else:
            cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
            areas2 = np.linalg.norm(cr, axis=1)
            if np.any(areas2 <= 0):
                raise GeometryError("degenerate (zero-area) triangle in surface")
            self.simplex_normals = cr / areas2[:, None]
            # angle-weighted vertex pseudo-normals
            vn = np.zeros_like(self.vertices)
            for k in range(3):
                p0 = v[:, k]
                e1 = v[:, (k + 1) % 3] - p0
                e2 = v[:, (k + 2) % 3] - p0
                cosang = np.einsum("nd,nd->n", e1, e2) / (
                    np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
                )
                ang = np.arccos(np.clip(cosang, -1.0, 1.0))
                np.add.at(vn, self.simplices[:, k], ang[:, None] * self.simplex_normals)
            # edge pseudo-normals: sum of the (<=2) adjacent face normals
            edges = np.concatenate(
                [self.simplices[:, [0, 1]], self.simplices[:, [1, 2]],
                 self.simplices[:, [2, 0]]]
            )
            edges = np.sort(edges, axis=1)
            keys = edges[:, 0] * (self.n_vertices + 1) + edges[:, 1]
            face_of_edge = np.tile(np.arange(self.n_simplices), 3)
            order = np.argsort(keys, kind="stable")
            keys_s = keys[order]
            uniq, start = np.unique(keys_s, return_index=True)
            en = np.zeros((len(uniq), 3))
            np.add.at(
                en,
                np.searchsorted(uniq, keys_s),
                self.simplex_normals[face_of_edge[order]],
            )
            norms = np.linalg.norm(en, axis=1)
            en = en / np.where(norms > 0, norms, 1.0)[:, None]
            self._edge_keys = uniq
            self._edge_normals = en

        norms = np.linalg.norm(vn, axis=1)
        self.vertex_normals = vn / np.where(norms > 0, norms, 1.0)[:, None]

        lo = self.vertices[self.simplices].min(axis=1)
        hi = self.vertices[self.simplices].max(axis=1)
        self.tree = AabbTree(lo, hi)

    def feature_pseudo_normals(self, simplex_ids, bary):
        """Pseudo-normal of the closest feature identified by barycentric weights."""
        simplex_ids = np.asarray(simplex_ids, dtype=np.int64)
        bary = np.asarray(bary, dtype=float)
        n = len(simplex_ids)
        out = np.empty((n, self.dim))
        zero = bary <= _FEATURE_TOL
        nz = zero.sum(axis=1)
        simp = self.simplices[simplex_ids]

        interior = nz == 0
        out[interior] = self.simplex_normals[simplex_ids[interior]]

        at_vertex = nz == self.dim - 1
        if np.any(at_vertex):
            vid = simp[at_vertex, np.argmax(bary[at_vertex], axis=1)]
            out[at_vertex] = self.vertex_normals[vid]

        if self.dim == 3:
            on_edge = nz == 1
            if np.any(on_edge):
                rows = np.nonzero(on_edge)[0]
                missing = np.argmax(zero[rows], axis=1)
                ids = simp[rows]
                va = ids[np.arange(len(rows)), (missing + 1) % 3]
                vb = ids[np.arange(len(rows)), (missing + 2) % 3]
                lo = np.minimum(va, vb)
                hi = np.maximum(va, vb)
                keys = lo * (self.n_vertices + 1) + hi
                idx = np.searchsorted(self._edge_keys, keys)
                out[rows] = self._edge_normals[idx]
        return out


def move_surface(surface: ImmersedSurface, c_new: float) -> ImmersedSurface:
    """Surface at opening coefficient c_new: vertices = x̂ + c_new·g.

    Positions are always rebuilt from the reference configuration, so two
    successive moves equal one combined move exactly. Normals and the AABB
    tree are recomputed; degenerate simplices raise GeometryError.
    """
    if not np.isfinite(c_new):
        raise GeometryError(f"opening coefficient must be finite, got {c_new}")
    return ImmersedSurface(
        ref_vertices=surface.ref_vertices,
        simplices=surface.simplices,
        opening_field=surface.opening_field,
        ref_curvature=surface.ref_curvature,
        c=float(c_new),
    )
