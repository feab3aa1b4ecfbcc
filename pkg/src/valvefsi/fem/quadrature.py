"""Gauss-Legendre quadrature on the reference cell [-1, 1]^d."""

import numpy as np


def gauss_legendre_1d(n: int):
    """Return (points, weights) of the n-point Gauss-Legendre rule on [-1, 1].

    Exact for polynomials of degree 2n - 1.
    """
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    return np.polynomial.legendre.leggauss(n)


def tensor_rule(n: int, dim: int):
    """Tensor-product Gauss rule on [-1, 1]^dim.

    Returns points of shape (n**dim, dim) and weights of shape (n**dim,).
    Point ordering is lexicographic with the first axis varying fastest,
    matching the node ordering of TensorBasis.
    """
    pts1, wts1 = gauss_legendre_1d(n)
    grids = np.meshgrid(*([pts1] * dim), indexing="ij")
    # first axis fastest: reverse the meshgrid stack order before raveling
    pts = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    wgrids = np.meshgrid(*([wts1] * dim), indexing="ij")
    wts = np.ones(n**dim)
    for g in wgrids:
        wts = wts * g.ravel(order="F")
    return pts, wts
