"""Pajek project export with an optional coastline overlay, and a reader for both.

Data links are written as ``*Arcs`` and coastline segments as ``*Edges`` so the
two layers can be styled separately inside Pajek.
"""

from __future__ import annotations

import math
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from geosci._util import atomic_write
from geosci.exporters.projection import transform_from_unit, transform_to_unit
from geosci.network import GeoNetwork

PRECISION = 6
COORD_FLAG = re.compile(r"^%\s*coordinates\s*:\s*(\w+)", re.I)


class MalformedNet(ValueError):
    pass


@dataclass(frozen=True)
class Coastline:
    points: tuple[tuple[float, float], ...]  # (lat, lon)
    segments: tuple[tuple[int, int], ...]  # 0-based point indices

    def __post_init__(self):
        n = len(self.points)
        for a, b in self.segments:
            if not (0 <= a < n and 0 <= b < n):
                raise MalformedNet(f"segment ({a}, {b}) outside 0..{n - 1}")


@dataclass
class PajekProject:
    """Vertices are ``(id, label, x, y, size)``; ``size`` is None for overlay points."""

    name: str = "cities"
    vertices: list[tuple[int, str, float, float, float | None]] = field(default_factory=list)
    arcs: list[tuple[int, int, float]] = field(default_factory=list)
    edges: list[tuple[int, int, float]] = field(default_factory=list)


def _r(v: float) -> float:
    return round(v, PRECISION)


def pajek_project(net: GeoNetwork, coastline: Coastline | None = None, name: str = "cities") -> PajekProject:
    """Merged project: data vertices first, coastline points after them."""
    proj = PajekProject(name=name)
    for i, n in enumerate(net.nodes, 1):
        x, y = transform_to_unit(n.point.lat, n.point.lon)
        proj.vertices.append((i, n.key, _r(x), _r(y), _r(math.log(n.occurrences + 1))))
    proj.arcs = [(l.i + 1, l.j + 1, l.weight) for l in net.links]
    if coastline is not None:
        offset = len(net.nodes)
        for i, (lat, lon) in enumerate(coastline.points, offset + 1):
            x, y = transform_to_unit(lat, lon)
            proj.vertices.append((i, "", _r(x), _r(y), None))
        proj.edges = [(a + offset + 1, b + offset + 1, 1) for a, b in coastline.segments]
    return proj


def _num(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.{PRECISION}f}"


def format_pajek(proj: PajekProject) -> str:
    lines = [f"*Network {proj.name}", f"*Vertices {len(proj.vertices)}"]
    for vid, label, x, y, size in proj.vertices:
        label = label.replace('"', "'")
        line = f'{vid} "{label}" {x:.{PRECISION}f} {y:.{PRECISION}f} 0.5'
        if size is not None:
            line += f" x_fact {size:.{PRECISION}f} y_fact {size:.{PRECISION}f}"
        lines.append(line)
    lines.append("*Arcs")
    lines.extend(f"{a} {b} {_num(w)}" for a, b, w in proj.arcs)
    if proj.edges:
        lines.append("*Edges")
        lines.extend(f"{a} {b} {_num(w)}" for a, b, w in proj.edges)
    return "\r\n".join(lines) + "\r\n"


def export_pajek(net: GeoNetwork, path, coastline: Coastline | None = None, name: str = "cities") -> Path:
    return atomic_write(path, format_pajek(pajek_project(net, coastline, name)))


def _vertex(line: str, lineno: int):
    try:
        parts = shlex.split(line, posix=True)
    except ValueError as exc:
        raise MalformedNet(f"line {lineno}: {exc}") from None
    try:
        vid = int(parts[0])
    except (IndexError, ValueError):
        raise MalformedNet(f"line {lineno}: bad vertex line {line!r}") from None
    rest = parts[1:]
    label = ""
    if rest and not _is_number(rest[0]):
        label, rest = rest[0], rest[1:]
    elif '"' in line:
        label, rest = rest[0], rest[1:]
    coords = []
    while rest and _is_number(rest[0]) and len(coords) < 3:
        coords.append(float(rest.pop(0)))
    if len(coords) < 2:
        raise MalformedNet(f"line {lineno}: vertex {vid} has no coordinates")
    size = None
    attrs = dict(zip(rest[::2], rest[1::2]))
    if "x_fact" in attrs:
        size = float(attrs["x_fact"])
    return vid, label, coords[0], coords[1], size


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_pajek(path) -> PajekProject:
    return parse_pajek(Path(path).read_text("utf-8", errors="replace"))


def parse_pajek(text: str) -> PajekProject:
    """Parse a single-network Pajek file (``*Vertices``, ``*Arcs``, ``*Edges``)."""
    proj = PajekProject(name="")
    n_vertices = None
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("*"):
            head, _, arg = line.partition(" ")
            head = head.lower()
            if head == "*network":
                proj.name = arg.strip()
                section = None
            elif head == "*vertices":
                try:
                    n_vertices = int(arg.split()[0])
                except (IndexError, ValueError):
                    raise MalformedNet(f"line {lineno}: bad *Vertices header") from None
                section = "vertices"
            elif head in ("*arcs", "*edges"):
                section = head[1:]
            else:
                raise MalformedNet(f"line {lineno}: unsupported section {head}")
            continue
        if section == "vertices":
            proj.vertices.append(_vertex(line, lineno))
        elif section in ("arcs", "edges"):
            parts = line.split()
            try:
                a, b = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) > 2 else 1.0
            except (IndexError, ValueError):
                raise MalformedNet(f"line {lineno}: bad {section} line {line!r}") from None
            if w.is_integer():
                w = int(w)
            if n_vertices is None or not (1 <= a <= n_vertices and 1 <= b <= n_vertices):
                raise MalformedNet(f"line {lineno}: vertex index out of range in {line!r}")
            getattr(proj, section).append((a, b, w))
        else:
            raise MalformedNet(f"line {lineno}: data outside a section")
    if n_vertices is None:
        raise MalformedNet("no *Vertices section")
    if len(proj.vertices) != n_vertices:
        raise MalformedNet(f"*Vertices {n_vertices} but {len(proj.vertices)} vertex lines")
    if [v[0] for v in proj.vertices] != list(range(1, n_vertices + 1)):
        raise MalformedNet("vertex ids must run 1..n in order")
    return proj


def load_coastline(path) -> Coastline:
    """Read a Pajek coastline.

    Coordinates are unit-square drawing coordinates unless the file has a
    ``% coordinates: latlon`` line, in which case x is longitude and y latitude.
    """
    text = Path(path).read_text("utf-8", errors="replace")
    mode = "unit"
    for line in text.splitlines():
        if m := COORD_FLAG.match(line.strip()):
            mode = m.group(1).lower()
            break
    if mode not in ("unit", "latlon"):
        raise MalformedNet(f"unknown coordinates flag {mode!r}")
    proj = parse_pajek(text)
    points = []
    for _, _, x, y, _ in proj.vertices:
        lat, lon = transform_from_unit(x, y) if mode == "unit" else (y, x)
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise MalformedNet(f"coastline point out of range: ({lat}, {lon})")
        points.append((lat, lon))
    segments = tuple((a - 1, b - 1) for a, b, _ in proj.edges + proj.arcs)
    return Coastline(tuple(points), segments)


def bundled_coastline_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("geosci").joinpath("data/eurcoast.net")))
