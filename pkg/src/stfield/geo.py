"""Coordinate projection and distances shared by all spatial modules.

Geographic coordinates are projected onto a flat plane with a spherical
Lambert conformal conic projection; all downstream distances are plain
Euclidean distances in km on that plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from stfield.errors import DataError

#: Default standard parallels bracket the study latitudes.
DEFAULT_STD_PARALLEL_1 = 45.0
DEFAULT_STD_PARALLEL_2 = 49.0
DEFAULT_EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    """Longitude/latitude pair in decimal degrees (east positive)."""

    lon_deg: float
    lat_deg: float

    def __post_init__(self) -> None:
        if not (-180.0 <= self.lon_deg <= 180.0):
            raise DataError(f"longitude out of range: {self.lon_deg}")
        if not (-90.0 <= self.lat_deg <= 90.0):
            raise DataError(f"latitude out of range: {self.lat_deg}")


@dataclass(frozen=True)
class ProjPoint:
    """Projected plane coordinates in km (s1 easting, s2 northing)."""

    s1: float
    s2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.s1) and math.isfinite(self.s2)):
            raise DataError(f"non-finite projected coordinates: ({self.s1}, {self.s2})")


@dataclass(frozen=True)
class LccParams:
    """Parameters of the spherical Lambert conformal conic projection.

    The reference point (ref_lon, ref_lat) maps to the plane origin.
    """

    ref_lon: float
    ref_lat: float
    std_parallel_1: float = DEFAULT_STD_PARALLEL_1
    std_parallel_2: float = DEFAULT_STD_PARALLEL_2
    earth_radius: float = DEFAULT_EARTH_RADIUS_KM

    def __post_init__(self) -> None:
        for name in ("std_parallel_1", "std_parallel_2"):
            v = getattr(self, name)
            if not (-90.0 < v < 90.0):
                raise DataError(f"{name} must lie strictly inside (-90, 90): {v}")
        if self.std_parallel_1 == self.std_parallel_2:
            raise DataError("standard parallels must be distinct")
        if not self.earth_radius > 0:
            raise DataError(f"earth_radius must be positive: {self.earth_radius}")


def _cone_constant(params: LccParams) -> tuple[float, float]:
    """Return (n, F) of the projection for the given parameters."""
    p1 = math.radians(params.std_parallel_1)
    p2 = math.radians(params.std_parallel_2)
    n = math.log(math.cos(p1) / math.cos(p2)) / math.log(
        math.tan(math.pi / 4 + p2 / 2) / math.tan(math.pi / 4 + p1 / 2)
    )
    f = math.cos(p1) * math.tan(math.pi / 4 + p1 / 2) ** n / n
    return n, f


def project_lcc(p: GeoPoint, params: LccParams) -> ProjPoint:
    """Project a lon/lat point to plane coordinates in km.

    Parameters
    ----------
    p : GeoPoint
        Point to project.
    params : LccParams
        Projection parameters; the reference point maps to (0, 0).

    Returns
    -------
    ProjPoint
        Easting/northing in km relative to the reference point.

    Raises
    ------
    DataError
        If the latitude of ``p`` (or the reference latitude) sits at a
        pole, where the conic projection is singular.
    """
    if abs(p.lat_deg) >= 90.0 or abs(params.ref_lat) >= 90.0:
        raise DataError("projection singularity: latitude at a pole")
    n, f = _cone_constant(params)
    lat = math.radians(p.lat_deg)
    lat0 = math.radians(params.ref_lat)
    rho = params.earth_radius * f / math.tan(math.pi / 4 + lat / 2) ** n
    rho0 = params.earth_radius * f / math.tan(math.pi / 4 + lat0 / 2) ** n
    dlon = p.lon_deg - params.ref_lon
    # wrap to (-180, 180] so windows straddling the antimeridian behave
    dlon = (dlon + 180.0) % 360.0 - 180.0
    theta = n * math.radians(dlon)
    s1 = rho * math.sin(theta)
    s2 = rho0 - rho * math.cos(theta)
    return ProjPoint(s1, s2)


def euclidean_distance(a: ProjPoint, b: ProjPoint) -> float:
    """Euclidean distance in km between two projected points."""
    return math.hypot(a.s1 - b.s1, a.s2 - b.s2)
