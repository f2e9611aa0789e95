"""KML for Google Earth (scaled icons) and Google Maps (one transparent icon), plus KMZ."""

from __future__ import annotations

import io
import math
import xml.etree.ElementTree as ET
import zipfile
from pathlib import Path

from geosci._util import atomic_write
from geosci.network import GeoNetwork

KML_NS = "http://www.opengis.net/kml/2.2"
EARTH_ICON = "http://maps.google.com/mapfiles/kml/shapes/placemark_circle.png"
# relative href; the CLI copies the bundled PNG next to the KML
TRANSPARENT_ICON = "transparent.png"
YELLOW = "ff00ffff"  # aabbggrr
MIN_SCALE, MAX_SCALE = 0.4, 3.0


def icon_scales(net: GeoNetwork) -> list[float]:
    """ln(n + 1) mapped linearly onto [MIN_SCALE, MAX_SCALE].

    The floor is ln 2, the value for a single publication, so the mapping does not
    depend on which occurrences happen to be present at the low end.
    """
    if not net.nodes:
        return []
    lo = math.log(2)
    hi = max(math.log(n.occurrences + 1) for n in net.nodes)
    if hi <= lo:
        return [1.0] * len(net.nodes)
    span = MAX_SCALE - MIN_SCALE
    return [MIN_SCALE + span * (math.log(n.occurrences + 1) - lo) / (hi - lo) for n in net.nodes]


def link_width(weight: int, max_weight: int) -> int:
    return int(math.floor(1 + 2 * weight / max_weight + 0.5))


def _sub(parent, tag, text=None):
    el = ET.SubElement(parent, tag)
    if text is not None:
        el.text = text
    return el


def _coord(point) -> str:
    return f"{point.lon:.6f},{point.lat:.6f},0"


def kml_document(
    net: GeoNetwork,
    variant: str = "earth",
    name: str = "cities",
    link_color: str = YELLOW,
    icon_href: str | None = None,
) -> bytes:
    """Serialize ``net`` as KML; ``variant`` is ``"earth"`` or ``"maps"``."""
    if variant not in ("earth", "maps"):
        raise ValueError(f"unknown KML variant {variant!r}")
    if not net.nodes:
        raise ValueError("cannot write KML for an empty network")
    if icon_href is None:
        icon_href = EARTH_ICON if variant == "earth" else TRANSPARENT_ICON

    root = ET.Element("kml", xmlns=KML_NS)
    doc = _sub(root, "Document")
    _sub(doc, "name", name)

    max_w = max((l.weight for l in net.links), default=1)
    widths = sorted({link_width(l.weight, max_w) for l in net.links})
    for w in widths:
        style = _sub(doc, "Style")
        style.set("id", f"link-w{w}")
        ls = _sub(style, "LineStyle")
        _sub(ls, "color", link_color)
        _sub(ls, "width", str(w))
    if variant == "maps":
        style = _sub(doc, "Style")
        style.set("id", "node")
        icon = _sub(_sub(style, "IconStyle"), "Icon")
        _sub(icon, "href", icon_href)

    nodes = _sub(doc, "Folder")
    _sub(nodes, "name", "Nodes")
    scales = icon_scales(net)
    for node, scale in zip(net.nodes, scales):
        pm = _sub(nodes, "Placemark")
        _sub(pm, "name", node.key)
        _sub(pm, "description", f"{node.key}; occurrences {node.occurrences}; degree {node.degree}")
        if variant == "earth":
            istyle = _sub(_sub(pm, "Style"), "IconStyle")
            _sub(istyle, "scale", f"{scale:.6f}")
            _sub(_sub(istyle, "Icon"), "href", icon_href)
        else:
            _sub(pm, "styleUrl", "#node")
        _sub(_sub(pm, "Point"), "coordinates", _coord(node.point))

    links = _sub(doc, "Folder")
    _sub(links, "name", "Links")
    for link in net.links:
        a, b = net.nodes[link.i], net.nodes[link.j]
        pm = _sub(links, "Placemark")
        _sub(pm, "name", f"{a.key} - {b.key}")
        _sub(pm, "description", f"{a.key}; {b.key}; co-occurrences {link.weight}")
        _sub(pm, "styleUrl", f"#link-w{link_width(link.weight, max_w)}")
        ls = _sub(pm, "LineString")
        _sub(ls, "tessellate", "1")
        _sub(ls, "coordinates", f"{_coord(a.point)} {_coord(b.point)}")

    ET.indent(root, space=" ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True) + b"\n"


def export_kml_earth(net: GeoNetwork, path, **kwargs) -> Path:
    return atomic_write(path, kml_document(net, "earth", **kwargs))


def export_kml_maps(net: GeoNetwork, path, **kwargs) -> Path:
    return atomic_write(path, kml_document(net, "maps", **kwargs))


def kmz_archive(kml: bytes) -> bytes:
    """Zip KML bytes as ``doc.kml``; the archive depends only on its content."""
    if not kml.strip():
        raise ValueError("refusing to package empty KML")
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("doc.kml", date_time=(1980, 1, 1, 0, 0, 0))
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, kml)
    return buf.getvalue()


def package_kmz(kml_path, kmz_path=None) -> Path:
    kml_path = Path(kml_path)
    kmz_path = Path(kmz_path) if kmz_path else kml_path.with_suffix(".kmz")
    return atomic_write(kmz_path, kmz_archive(kml_path.read_bytes()))
