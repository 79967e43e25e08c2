"""Geodesic helpers: distance, bearing, and heading arithmetic.

All angles are in degrees. Headings are plain floats kept in ``[0, 360)``
by :func:`normalize_heading`; positions are :class:`GeoPoint` instances.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

FORWARD_LIMIT = 45.0
SIDE_LIMIT = 135.0


class CoincidentPointsError(ValueError):
    """Raised when a bearing is requested between two identical points."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lng: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lng)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lng})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lng <= 180.0:
            raise ValueError(f"longitude {self.lng} outside (-180, 180]")


class RelativeDirection(str, enum.Enum):
    FORWARD = "Forward"
    LEFT = "Left"
    RIGHT = "Right"
    BACK = "Back"

    def __str__(self) -> str:
        return self.value


def normalize_heading(x: float) -> float:
    """Wrap an angle into ``[0, 360)``."""
    h = ((x % 360.0) + 360.0) % 360.0
    # tiny negative inputs round up to exactly 360.0
    return 0.0 if h >= 360.0 else h


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres on a sphere of mean Earth radius."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_phi = phi2 - phi1
    d_lam = math.radians(b.lng - a.lng)
    h = math.sin(d_phi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def bearing(origin: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle bearing from ``origin`` to ``target``.

    Raises:
        CoincidentPointsError: if both points are the same location.
    """
    if origin == target:
        raise CoincidentPointsError(f"bearing undefined for coincident points {origin}")
    phi1 = math.radians(origin.lat)
    phi2 = math.radians(target.lat)
    d_lam = math.radians(target.lng - origin.lng)
    y = math.sin(d_lam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(d_lam)
    return normalize_heading(math.degrees(math.atan2(y, x)))


def angular_diff(h1: float, h2: float) -> float:
    """Unsigned smallest difference between two headings, in ``[0, 180]``."""
    d = abs(normalize_heading(h1) - normalize_heading(h2))
    return min(d, 360.0 - d)


def signed_delta(target_bearing: float, current_heading: float) -> float:
    """Signed turn from ``current_heading`` to ``target_bearing`` in ``(-180, 180]``.

    Positive values are clockwise (to the right).
    """
    delta = (target_bearing - current_heading + 180.0) % 360.0 - 180.0
    return 180.0 if delta <= -180.0 else delta


def classify_delta(delta: float) -> RelativeDirection:
    if -FORWARD_LIMIT <= delta <= FORWARD_LIMIT:
        return RelativeDirection.FORWARD
    if -SIDE_LIMIT <= delta < -FORWARD_LIMIT:
        return RelativeDirection.LEFT
    if FORWARD_LIMIT < delta <= SIDE_LIMIT:
        return RelativeDirection.RIGHT
    return RelativeDirection.BACK


def relative_direction(target_bearing: float, current_heading: float) -> tuple[float, RelativeDirection]:
    """Return ``(delta, direction)`` of a target relative to the current heading."""
    delta = signed_delta(target_bearing, current_heading)
    return delta, classify_delta(delta)


_GRID_OFFSETS = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W


def heading_to_grid_offset(h: float) -> tuple[int, int]:
    """Map a heading to a ``(row, col)`` unit step on a north-up grid.

    Sectors are 90 degrees wide and half-open, centred on the cardinals:
    ``[315, 45)`` north, ``[45, 135)`` east, ``[135, 225)`` south,
    ``[225, 315)`` west.
    """
    h = normalize_heading(h)
    return _GRID_OFFSETS[int(((h + 45.0) % 360.0) // 90.0)]


_DIAGONAL_OFFSETS = ((-1, 1), (1, 1), (1, -1), (-1, -1))  # NE, SE, SW, NW


def heading_to_diagonal_offset(h: float) -> tuple[int, int]:
    """Quadrant corner cell for a heading: NE for ``[0, 90)``, SE, SW, NW."""
    return _DIAGONAL_OFFSETS[int(normalize_heading(h) // 90.0)]


_COMPASS = (
    "North", "Northeast", "East", "Southeast",
    "South", "Southwest", "West", "Northwest",
)


def compass_word(h: float) -> str:
    """Eight-point compass name; 45-degree sectors centred on north at 0."""
    return _COMPASS[int(((normalize_heading(h) + 22.5) % 360.0) // 45.0)]
