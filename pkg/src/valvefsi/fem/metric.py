"""Element-map metric tensors used by the stabilization coefficients."""

from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis


class InvalidMeshError(ValueError):
    pass


@dataclass
class MetricTensors:
    """Per-point metric data of a cell map: G = (dxi/dx)^T (dxi/dx), g_i = sum_k dxi_k/dx_i."""

    G: np.ndarray      # (npts, d, d), units 1/m^2
    g_vec: np.ndarray  # (npts, d), units 1/m


def compute_metric_tensors(cell_vertices, ref_points) -> MetricTensors:
    """Metric tensors of the multilinear map of one cell at reference points.

    cell_vertices: ((degree1 lattice) 2^d, d) corner coordinates in the local
    lexicographic order (x fastest). Degenerate Jacobians raise InvalidMeshError.
    """
    verts = np.asarray(cell_vertices, dtype=float)
    dim = verts.shape[1]
    if verts.shape[0] != 2**dim:
        raise ValueError(f"expected {2**dim} corner vertices, got {verts.shape[0]}")
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    basis = TensorBasis(dim, 1)
    dN = basis.grads(ref_points)  # (npts, 2^d, d)
    # J[p, i, j] = d x_i / d xi_j
    J = np.einsum("vi,pvj->pij", verts, dN)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise InvalidMeshError(
            f"cell map has non-positive Jacobian determinant (min {det.min():.3e})"
        )
    Jinv = np.linalg.inv(J)  # Jinv[p, k, i] = d xi_k / d x_i
    G = np.einsum("pki,pkj->pij", Jinv, Jinv)
    g_vec = Jinv.sum(axis=1)
    return MetricTensors(G=G, g_vec=g_vec)


def uniform_cell_metric(h) -> MetricTensors:
    """Metric of an axis-aligned cell with edge lengths h (constant in the cell)."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise InvalidMeshError(f"cell edge lengths must be positive, got {h.tolist()}")
    G = np.diag(4.0 / h**2)[None, :, :]
    g_vec = (2.0 / h)[None, :]
    return MetricTensors(G=G, g_vec=g_vec)
