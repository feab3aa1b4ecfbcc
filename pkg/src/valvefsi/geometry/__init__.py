"""Immersed leaflet surfaces, signed distance fields and level-set machinery."""

from .surface import ImmersedSurface, move_surface, GeometryError
from .bvh import AabbTree
from .distance import signed_distance, closest_point_query
from .levelset import (
    LevelSetState,
    build_level_set,
    smeared_delta,
    extended_normal_curvature,
    side_sign,
    pullback,
    compute_reference_curvature,
    ConfigurationError,
    OutOfBandError,
    DegenerateGradientError,
)
from .idealized import channel_leaflet_2d, aortic_root_3d
from .io import write_stl, read_stl, write_surface, read_surface

__all__ = [
    "ImmersedSurface",
    "move_surface",
    "GeometryError",
    "AabbTree",
    "signed_distance",
    "closest_point_query",
    "LevelSetState",
    "build_level_set",
    "smeared_delta",
    "extended_normal_curvature",
    "side_sign",
    "pullback",
    "compute_reference_curvature",
    "ConfigurationError",
    "OutOfBandError",
    "DegenerateGradientError",
    "channel_leaflet_2d",
    "aortic_root_3d",
    "write_stl",
    "read_stl",
    "write_surface",
    "read_surface",
]
