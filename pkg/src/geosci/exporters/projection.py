"""Equirectangular mapping of (lat, lon) onto the unit square of a Pajek drawing."""

from __future__ import annotations


def transform_to_unit(lat: float, lon: float) -> tuple[float, float]:
    # y grows downward in the drawing window, hence 90 - lat
    return (lon + 180.0) / 360.0, (90.0 - lat) / 180.0


def transform_from_unit(x: float, y: float) -> tuple[float, float]:
    """Inverse of :func:`transform_to_unit`, returns (lat, lon)."""
    return 90.0 - 180.0 * y, 360.0 * x - 180.0
