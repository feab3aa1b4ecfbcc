"""Tensor-product Lagrange basis functions on the reference cell [-1, 1]^d."""

import numpy as np


class _Lagrange1D:
    """Degree-k Lagrange basis on equispaced nodes spanning [-1, 1]."""

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {degree}")
        self.degree = degree
        self.nodes = np.linspace(-1.0, 1.0, degree + 1)
        polys = []
        for i in range(degree + 1):
            p = np.polynomial.Polynomial([1.0])
            for j in range(degree + 1):
                if j != i:
                    p = p * np.polynomial.Polynomial(
                        [-self.nodes[j], 1.0]
                    ) / (self.nodes[i] - self.nodes[j])
            polys.append(p)
        self._polys = polys
        self._dpolys = [p.deriv(1) for p in polys]
        self._ddpolys = [p.deriv(2) for p in polys]

    def eval(self, x, order: int = 0):
        """Evaluate all basis functions (or a derivative) at points x -> (len(x), k+1)."""
        src = (self._polys, self._dpolys, self._ddpolys)[order]
        x = np.asarray(x, dtype=float)
        return np.stack([p(x) for p in src], axis=-1)


class TensorBasis:
    """Q^k basis on [-1, 1]^dim: products of 1D Lagrange functions.

    Local node ordering is lexicographic with the first reference axis
    varying fastest, matching the structured-mesh DoF lattice.
    """

    def __init__(self, dim: int, degree: int):
        self.dim = dim
        self.degree = degree
        self._b1 = _Lagrange1D(degree)
        self.n_local = (degree + 1) ** dim
        # multi-index of every local node, first axis fastest
        idx = np.arange(self.n_local)
        self.node_multi_index = np.stack(
            [(idx // (degree + 1) ** a) % (degree + 1) for a in range(dim)], axis=-1
        )
        self.node_coords = self._b1.nodes[self.node_multi_index]

    def values(self, points):
        """Basis values at reference points -> (npts, n_local)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        per_axis = [self._b1.eval(points[:, a]) for a in range(self.dim)]
        out = np.ones((points.shape[0], self.n_local))
        for a in range(self.dim):
            out = out * per_axis[a][:, self.node_multi_index[:, a]]
        return out

    def grads(self, points):
        """Reference gradients -> (npts, n_local, dim)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = [self._b1.eval(points[:, a]) for a in range(self.dim)]
        ders = [self._b1.eval(points[:, a], order=1) for a in range(self.dim)]
        out = np.empty((points.shape[0], self.n_local, self.dim))
        for comp in range(self.dim):
            acc = np.ones((points.shape[0], self.n_local))
            for a in range(self.dim):
                src = ders[a] if a == comp else vals[a]
                acc = acc * src[:, self.node_multi_index[:, a]]
            out[:, :, comp] = acc
        return out

    def hessians(self, points):
        """Reference second derivatives -> (npts, n_local, dim, dim)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = [self._b1.eval(points[:, a]) for a in range(self.dim)]
        ders = [self._b1.eval(points[:, a], order=1) for a in range(self.dim)]
        dders = [self._b1.eval(points[:, a], order=2) for a in range(self.dim)]
        out = np.empty((points.shape[0], self.n_local, self.dim, self.dim))
        for ci in range(self.dim):
            for cj in range(ci, self.dim):
                acc = np.ones((points.shape[0], self.n_local))
                for a in range(self.dim):
                    if a == ci and a == cj:
                        src = dders[a]
                    elif a == ci or a == cj:
                        src = ders[a]
                    else:
                        src = vals[a]
                    acc = acc * src[:, self.node_multi_index[:, a]]
                out[:, :, ci, cj] = acc
                out[:, :, cj, ci] = acc
        return out
