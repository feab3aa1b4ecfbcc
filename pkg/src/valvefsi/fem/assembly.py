"""Sparse system container and deterministic cell-loop assembly."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class SparseSystem:
    """CSR system with a Dirichlet constraint list applied as identity rows."""

    n_dofs: int
    matrix: sp.csr_matrix = None
    rhs: np.ndarray = None
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    constraints_applied: bool = False

    def __post_init__(self):
        if self.rhs is None:
            self.rhs = np.zeros(self.n_dofs)

    def set_dirichlet(self, dofs, values):
        dofs = np.asarray(dofs, dtype=np.int64)
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).copy()
        order = np.argsort(dofs, kind="stable")
        self.dirichlet_dofs = dofs[order]
        self.dirichlet_values = values[order]
        self.constraints_applied = False

    def apply_constraints(self):
        """Replace constrained rows by identity rows; rhs gets the values."""
        if self.matrix is None:
            raise RuntimeError("system has no assembled matrix")
        if self.constraints_applied or len(self.dirichlet_dofs) == 0:
            return
        A = self.matrix.tocsr()
        mask = constrained_entry_mask(A, self.dirichlet_dofs)
        A.data[mask] = 0.0
        diag = diagonal_entry_indices(A, self.dirichlet_dofs)
        A.data[diag] = 1.0
        self.matrix = A
        self.rhs[self.dirichlet_dofs] = self.dirichlet_values
        self.constraints_applied = True


def constrained_entry_mask(A: sp.csr_matrix, rows) -> np.ndarray:
    """Data indices of all stored entries in the given rows."""
    spans = [np.arange(A.indptr[r], A.indptr[r + 1]) for r in rows]
    return np.concatenate(spans) if spans else np.empty(0, dtype=np.int64)


def diagonal_entry_indices(A: sp.csr_matrix, rows) -> np.ndarray:
    """Data index of the (r, r) entry for each row (must exist in the pattern)."""
    out = np.empty(len(rows), dtype=np.int64)
    for k, r in enumerate(rows):
        cols = A.indices[A.indptr[r]: A.indptr[r + 1]]
        pos = np.searchsorted(cols, r)
        if pos >= len(cols) or cols[pos] != r:
            raise RuntimeError(f"constrained row {r} has no diagonal entry")
        out[k] = A.indptr[r] + pos
    return out


def scatter_coo(n_dofs, rows, cols, values, rhs_rows=None, rhs_values=None, seq=None):
    """Sum COO triplets into a CSR matrix with an ordered reduction.

    Duplicates are accumulated in ascending (row, col) position; within one
    position the summation order follows `seq` (default: input order). Passing
    a canonical sequence id makes the result independent of how contributions
    were generated or permuted.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    key = rows * n_dofs + cols
    if seq is None:
        seq = np.arange(len(values))
    else:
        seq = np.asarray(seq, dtype=np.int64).ravel()
    order = np.lexsort((seq, key))
    key_s = key[order]
    vals_s = values[order]
    uniq, inverse = np.unique(key_s, return_inverse=True)
    summed = np.bincount(inverse, weights=vals_s, minlength=len(uniq))
    A = sp.csr_matrix(
        (summed, (uniq // n_dofs, uniq % n_dofs)), shape=(n_dofs, n_dofs)
    )
    rhs = np.zeros(n_dofs)
    if rhs_rows is not None:
        rr = np.asarray(rhs_rows, dtype=np.int64).ravel()
        rv = np.asarray(rhs_values, dtype=float).ravel()
        ro = np.argsort(rr, kind="stable")
        rhs = np.bincount(rr[ro], weights=rv[ro], minlength=n_dofs)
    return A, rhs


def assemble(system: SparseSystem, mesh, dof_map, cell_kernel) -> SparseSystem:
    """Assemble local contributions over all cells into the system.

    dof_map: (n_cells, n_local) global dof indices.
    cell_kernel(cell_ids) -> (local_mats (n,nl,nl) or None, local_vecs (n,nl) or None).
    The reduction order is canonical (ascending cell id, then local indices),
    independent of any internal ordering of the kernel.
    """
    dof_map = np.asarray(dof_map, dtype=np.int64)
    n_cells, n_local = dof_map.shape
    cell_ids = np.arange(n_cells)
    local_mats, local_vecs = cell_kernel(cell_ids)

    rows = cols = vals = None
    if local_mats is not None:
        local_mats = np.asarray(local_mats, dtype=float)
        if local_mats.shape != (n_cells, n_local, n_local):
            raise ValueError(
                f"kernel matrix block has shape {local_mats.shape}, "
                f"expected {(n_cells, n_local, n_local)}"
            )
        rows = np.repeat(dof_map, n_local, axis=1)
        cols = np.tile(dof_map, (1, n_local)).reshape(n_cells, n_local, n_local)
        rows = rows.reshape(n_cells, n_local, n_local)
        vals = local_mats
    rhs_rows = rhs_vals = None
    if local_vecs is not None:
        local_vecs = np.asarray(local_vecs, dtype=float)
        if local_vecs.shape != (n_cells, n_local):
            raise ValueError(
                f"kernel vector block has shape {local_vecs.shape}, "
                f"expected {(n_cells, n_local)}"
            )
        rhs_rows = dof_map
        rhs_vals = local_vecs

    if vals is not None:
        A, rhs = scatter_coo(system.n_dofs, rows, cols, vals, rhs_rows, rhs_vals)
        system.matrix = A if system.matrix is None else system.matrix + A
    else:
        _, rhs = scatter_coo(
            system.n_dofs, np.empty(0), np.empty(0), np.empty(0), rhs_rows, rhs_vals
        )
    system.rhs = system.rhs + rhs
    return system
