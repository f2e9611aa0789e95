"""Input file for the GPS Visualizer map form (``inp_gps.txt``)."""

from __future__ import annotations

import csv
import io
import math

from geosci._util import atomic_write
from geosci.network import GeoNetwork

HEADER = ("name", "desc", "latitude", "longitude", "color", "scale")


def gps_visualizer_text(net: GeoNetwork, connected: str = "red", isolated: str = "orange") -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for n in net.nodes:
        writer.writerow((
            n.key,
            f"occurrences {n.occurrences}; degree {n.degree}",
            f"{n.point.lat:.6f}",
            f"{n.point.lon:.6f}",
            connected if n.degree > 0 else isolated,
            f"{math.log(n.occurrences + 1):.6f}",
        ))
    return out.getvalue()


def export_gps_visualizer(net: GeoNetwork, path, **kwargs):
    return atomic_write(path, gps_visualizer_text(net, **kwargs))
