"""Nodal Lagrange FE spaces on structured meshes and coefficient fields."""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .basis import TensorBasis
from .mesh import Mesh, lattice_connectivity, _vertex_lattice


@dataclass
class FeSpace:
    """Degree-r tensor-product Lagrange space, scalar or d-vector valued.

    Vector DoFs are blocked by component: dof(comp, node) = comp * n_nodes + node.
    All cell maps are axis-aligned affine, so physical derivatives follow from
    per-axis scalings 2/h_a of the reference derivatives.
    """

    mesh: Mesh
    degree: int
    n_components: int = 1
    basis: TensorBasis = dc_field(default=None, repr=False)
    cell_dofs: np.ndarray = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if self.n_components not in (1, self.mesh.dim):
            raise ValueError("n_components must be 1 or the mesh dimension")
        self.basis = TensorBasis(self.mesh.dim, self.degree)
        self.cell_dofs = lattice_connectivity(self.mesh.subdivisions, self.degree)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.degree * self.mesh.subdivisions + 1))

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.n_components

    def node_coords(self) -> np.ndarray:
        m = self.mesh
        return _vertex_lattice(m.origin, m.h / self.degree, self.degree * m.subdivisions + 1)

    def boundary_nodes(self, tags) -> np.ndarray:
        """Scalar node ids lying on facets carrying any of the given tags."""
        if isinstance(tags, str):
            tags = (tags,)
        m = self.mesh
        k = self.degree
        sel = np.isin(m.facet_tag, [m.tag_names.index(t) for t in tags])
        nodes = []
        multi = self.basis.node_multi_index
        for cell, axis, side in zip(
            m.facet_cell[sel], m.facet_axis[sel], m.facet_side[sel]
        ):
            on_face = multi[:, axis] == (0 if side == 0 else k)
            nodes.append(self.cell_dofs[cell][on_face])
        if not nodes:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(nodes))

    def grad_scale(self) -> np.ndarray:
        """Per-axis factor mapping reference to physical first derivatives."""
        return 2.0 / self.mesh.h


@dataclass
class Field:
    """Coefficient vector over an FE space."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space dof count ({self.space.n_dofs},)"
            )

    @classmethod
    def zeros(cls, space: FeSpace) -> "Field":
        return cls(space, np.zeros(space.n_dofs))

    @classmethod
    def interpolate(cls, space: FeSpace, fn) -> "Field":
        """Nodal interpolation of fn(points) (vectorized over points)."""
        pts = space.node_coords()
        vals = np.asarray(fn(pts), dtype=float)
        if space.n_components == 1:
            return cls(space, vals.reshape(-1))
        return cls(space, vals.T.reshape(-1, order="C").ravel())

    def component(self, c: int) -> np.ndarray:
        n = self.space.n_nodes
        return self.coeffs[c * n : (c + 1) * n]

    def cell_coeffs(self, cell_ids=None) -> np.ndarray:
        """Per-cell local coefficients -> (ncells, n_local) or (ncells, ncomp, n_local)."""
        dofs = self.space.cell_dofs if cell_ids is None else self.space.cell_dofs[cell_ids]
        if self.space.n_components == 1:
            return self.coeffs[dofs]
        n = self.space.n_nodes
        return np.stack(
            [self.coeffs[c * n + dofs] for c in range(self.space.n_components)], axis=1
        )

    def eval(self, cell_ids, ref_points, grad=False, hess=False):
        """Evaluate at per-point (cell, reference-point) pairs.

        Returns a dict with keys "value" and optionally "grad", "hess".
        Scalar space: value (n,), grad (n,d), hess (n,d,d).
        Vector space: value (n,c), grad (n,c,d), hess (n,c,d,d).
        """
        cell_ids = np.atleast_1d(np.asarray(cell_ids, dtype=np.int64))
        ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
        sp = self.space
        loc = self.cell_coeffs(cell_ids)  # (n, nl) or (n, c, nl)
        psi = sp.basis.values(ref_points)  # (n, nl)
        out = {}
        if sp.n_components == 1:
            out["value"] = np.einsum("pl,pl->p", loc, psi)
        else:
            out["value"] = np.einsum("pcl,pl->pc", loc, psi)
        scale = sp.grad_scale()
        if grad or hess:
            dpsi = sp.basis.grads(ref_points) * scale  # (n, nl, d)
            if sp.n_components == 1:
                out["grad"] = np.einsum("pl,pla->pa", loc, dpsi)
            else:
                out["grad"] = np.einsum("pcl,pla->pca", loc, dpsi)
        if hess:
            ddpsi = sp.basis.hessians(ref_points) * scale[:, None] * scale[None, :]
            if sp.n_components == 1:
                out["hess"] = np.einsum("pl,plab->pab", loc, ddpsi)
            else:
                out["hess"] = np.einsum("pcl,plab->pcab", loc, ddpsi)
        return out

    def eval_at_physical(self, points, grad=False, hess=False):
        """Evaluate at physical points (located in the structured mesh)."""
        cell_ids, ref = self.space.mesh.locate_points(points)
        return self.eval(cell_ids, ref, grad=grad, hess=hess)


def evaluate_field(field: Field, cell: int, ref_point):
    """Value, physical gradient and Hessian at one reference point of one cell.

    Second derivatives are exact here because every cell map is axis-aligned
    affine; meaningful curvature evaluation still requires degree >= 2 (a
    degree-1 field has identically zero Hessian).
    """
    res = field.eval([cell], [ref_point], grad=True, hess=True)
    return res["value"][0], res["grad"][0], res["hess"][0]
