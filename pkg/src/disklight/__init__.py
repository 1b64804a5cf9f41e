"""Uniform solid-angle sampling of disk lights.

The package builds an oriented-disk geometry into a spherical-ellipse frame,
evaluates the subtended solid angle through Carlson symmetric elliptic
integrals, and maps unit-square samples onto the subtended region with
area-preserving parallel and radial maps, plus a tabulated variant that
trades exactness of the map for cheap per-sample evaluation.
"""

from disklight.geometry import (
    DegenerateGeometry,
    DiskFrame,
    DiskLight,
    ShadingPoint,
    SphericalEllipseFrame,
    build_frames,
)
from disklight.maps import (
    MapSample,
    NoConvergence,
    sample_ld_radial,
    sample_parallel,
    sample_radial,
)
from disklight.solid_angle import total_solid_angle
from disklight.tabulation import (
    RadialTable,
    build_table,
    read_table,
    sample_tabulated,
    write_table,
)

__all__ = [
    "DegenerateGeometry",
    "DiskFrame",
    "DiskLight",
    "MapSample",
    "NoConvergence",
    "RadialTable",
    "ShadingPoint",
    "SphericalEllipseFrame",
    "build_frames",
    "build_table",
    "read_table",
    "sample_ld_radial",
    "sample_parallel",
    "sample_radial",
    "sample_tabulated",
    "total_solid_angle",
    "write_table",
]

__version__ = "0.1.0"
