"""Structured meshes, tensor-product Lagrange elements, assembly and Krylov solves."""

from .quadrature import gauss_legendre_1d, tensor_rule
from .basis import TensorBasis
from .mesh import Mesh, build_structured_mesh, read_ascii_mesh, write_ascii_mesh
from .space import FeSpace, Field, evaluate_field
from .metric import MetricTensors, compute_metric_tensors
from .assembly import SparseSystem, assemble
from .solver import NonConvergenceError, solve_krylov

__all__ = [
    "gauss_legendre_1d",
    "tensor_rule",
    "TensorBasis",
    "Mesh",
    "build_structured_mesh",
    "read_ascii_mesh",
    "write_ascii_mesh",
    "FeSpace",
    "Field",
    "evaluate_field",
    "MetricTensors",
    "compute_metric_tensors",
    "SparseSystem",
    "assemble",
    "NonConvergenceError",
    "solve_krylov",
]
