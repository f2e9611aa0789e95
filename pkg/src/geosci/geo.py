"""Resolving keys to coordinates.

Lookup order is bundled/user gazetteer, then the persistent ``geocache.tsv``,
then an optional HTTP geocoder.  The manual route (write ``cities.txt``, run it
through an external batch geocoder, read the CSV back) feeds the same cache.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from collections.abc import Callable, Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from geosci.addresses import Location, normalize, normalize_country

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
SOURCES = ("gazetteer", "cache", "remote")
GEOCODER_URL_ENV = "GEOSCI_GEOCODER_URL"

NOT_FOUND = "not found by geocoder"
OUT_OF_RANGE = "out of range"


class MalformedCsv(ValueError):
    pass


class RemoteUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    source: str = "gazetteer"
    resolved_country: str | None = None

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"{OUT_OF_RANGE}: ({self.lat}, {self.lon})")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")


@dataclass
class ResolutionReport:
    resolved: dict[str, GeoPoint] = field(default_factory=dict)
    failures: list[tuple[str, str]] = field(default_factory=list)
    country_mismatches: list[tuple[str, str, str]] = field(default_factory=list)

    def to_tsv(self) -> str:
        out = io.StringIO()
        out.write("key\tstatus\tlat\tlon\tsource\tcountry\tnote\n")
        mismatched = {k: (p, r) for k, p, r in self.country_mismatches}
        rows = []
        for k, p in self.resolved.items():
            note = ""
            if k in mismatched:
                note = "country mismatch: parsed {} resolved {}".format(*mismatched[k])
            rows.append((k, f"{k}\tok\t{p.lat!r}\t{p.lon!r}\t{p.source}\t{p.resolved_country or ''}\t{note}\n"))
        for k, reason in self.failures:
            rows.append((k, f"{k}\tfailed\t\t\t\t\t{reason}\n"))
        for _, line in sorted(rows):
            out.write(line)
        return out.getvalue()


def _read_point_table(text: str, where: str) -> dict[str, tuple[float, float, str] | None]:
    """Parse key<TAB>lat<TAB>lon<TAB>country lines; empty lat/lon means not found."""
    entries = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise ValueError(f"{where} line {n}: expected key<TAB>lat<TAB>lon[<TAB>country]")
        key = normalize(parts[0])
        country = parts[3].strip() if len(parts) > 3 else ""
        if not parts[1].strip() and not parts[2].strip():
            entries[key] = None
            continue
        entries[key] = (float(parts[1]), float(parts[2]), country)
    return entries


class Gazetteer:
    """Read-only key -> coordinates table.

    Lookups try the full key first, then the plain city key of the location so
    an institution key falls back to its city.
    """

    def __init__(self, entries: Mapping[str, tuple[float, float]] | None = None):
        self._entries = {normalize(k): (v[0], v[1]) for k, v in (entries or {}).items()}

    @classmethod
    def from_file(cls, path) -> Gazetteer:
        text = Path(path).read_text("utf-8")
        return cls({k: v[:2] for k, v in _read_point_table(text, str(path)).items() if v})

    @classmethod
    def bundled(cls) -> Gazetteer:
        text = resources.files("geosci").joinpath("data/gazetteer.tsv").read_text("utf-8")
        return cls({k: v[:2] for k, v in _read_point_table(text, "gazetteer.tsv").items() if v})

    def update(self, other: Gazetteer) -> None:
        self._entries.update(other._entries)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return normalize(key) in self._entries

    def lookup(self, key: str, location: Location | None = None) -> GeoPoint | None:
        candidates = [normalize(key)]
        if location is not None:
            candidates.append(location.city_key)
        for c in candidates:
            if c in self._entries:
                lat, lon = self._entries[c]
                return GeoPoint(lat, lon, "gazetteer")
        return None


class GeoCache:
    """Append-only ``geocache.tsv``; the last line for a key wins.

    Keys the geocoder could not find are stored with empty coordinates so a
    rerun does not ask again.
    """

    MISSING = object()

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[float, float, str] | None] = {}
        if self.path.exists():
            self._entries = _read_point_table(self.path.read_text("utf-8"), str(self.path))

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return normalize(key) in self._entries

    def get(self, key: str):
        """GeoPoint, ``None`` for a cached miss, or ``GeoCache.MISSING``."""
        entry = self._entries.get(normalize(key), self.MISSING)
        if entry is self.MISSING or entry is None:
            return entry
        lat, lon, country = entry
        return GeoPoint(lat, lon, "cache", country or None)

    def put(self, key: str, lat: float | None, lon: float | None, country: str | None = None):
        key = normalize(key)
        with self._lock:
            if lat is None:
                line = f"{key}\t\t\t\n"
                self._entries[key] = None
            else:
                line = f"{key}\t{lat!r}\t{lon!r}\t{country or ''}\n"
                self._entries[key] = (lat, lon, country or "")
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)


def parse_json_response(body: bytes) -> tuple[float, float, str | None] | None:
    """Default response parser.

    Accepts a Nominatim-style list (first hit wins) or a single object with
    ``lat``/``lon`` (or ``latitude``/``longitude``) and an optional
    ``country`` either at top level or under ``address``.
    """
    data = json.loads(body.decode("utf-8") or "null")
    if isinstance(data, list):
        data = data[0] if data else None
    if isinstance(data, dict) and isinstance(data.get("results"), list):
        data = data["results"][0] if data["results"] else None
    if not data:
        return None
    lat = data.get("lat", data.get("latitude"))
    lon = data.get("lon", data.get("lng", data.get("longitude")))
    if lat is None or lon is None:
        return None
    country = data.get("country")
    if country is None and isinstance(data.get("address"), dict):
        country = data["address"].get("country")
    return float(lat), float(lon), country


class HttpGeocoder:
    """GET ``url_template`` with ``{query}`` substituted (URL-encoded).

    ``min_interval`` seconds are kept between requests across all threads.
    """

    def __init__(
        self,
        url_template: str,
        parse: Callable[[bytes], tuple[float, float, str | None] | None] = parse_json_response,
        min_interval: float = 0.2,
        timeout: float = 10.0,
        headers: Mapping[str, str] | None = None,
    ):
        if "{query}" not in url_template:
            raise ValueError("geocoder URL template needs a {query} placeholder")
        self.url_template = url_template
        self.parse = parse
        self.min_interval = min_interval
        self.timeout = timeout
        self.headers = {"User-Agent": "geosci/0.1", **(headers or {})}
        self.requests = 0
        self._lock = threading.Lock()
        self._last = 0.0

    @classmethod
    def from_env(cls, **kwargs) -> HttpGeocoder | None:
        url = os.environ.get(GEOCODER_URL_ENV)
        return cls(url, **kwargs) if url else None

    def _wait_turn(self):
        with self._lock:
            now = time.monotonic()
            delay = self._last + self.min_interval - now
            if delay > 0:
                time.sleep(delay)
            self._last = time.monotonic()
            self.requests += 1

    def lookup(self, query: str):
        self._wait_turn()
        url = self.url_template.replace("{query}", urllib.parse.quote(query))
        req = urllib.request.Request(url, headers=self.headers)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                return None
            raise RemoteUnavailable(f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise RemoteUnavailable(str(getattr(exc, "reason", exc))) from exc
        try:
            return self.parse(body)
        except (ValueError, TypeError, KeyError) as exc:
            raise RemoteUnavailable(f"unreadable response: {exc}") from exc


def emit_geocode_request(locations: Mapping[str, Location] | Iterable[Location]) -> str:
    """Text of ``cities.txt``: one sorted line per distinct location."""
    locs = locations.values() if isinstance(locations, Mapping) else locations
    lines = sorted({loc.request_line() for loc in locs})
    return "".join(line + "\n" for line in lines)


def _find_column(header: list[str], *names: str) -> int | None:
    lowered = [h.strip().lower() for h in header]
    for n in names:
        if n in lowered:
            return lowered.index(n)
    return None


def ingest_geocoder_output(
    stream,
    locations: Mapping[str, Location],
    cache: GeoCache | None = None,
) -> ResolutionReport:
    """Match a batch-geocoder CSV back to keys through the ``name`` column.

    Matched rows are written to ``cache``. Keys without a usable row end up in
    ``failures``; rows that match no request line are logged and skipped.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, encoding="utf-8", errors="replace", newline="") as fh:
            return ingest_geocoder_output(fh, locations, cache)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv("empty geocoder output") from None
    if header and header[0].startswith("\ufeff"):
        header[0] = header[0][1:]
    name_col = _find_column(header, "name")
    lat_col = _find_column(header, "latitude", "lat")
    lon_col = _find_column(header, "longitude", "lon", "long", "lng")
    country_col = _find_column(header, "country")
    if None in (name_col, lat_col, lon_col):
        raise MalformedCsv(f"need name/latitude/longitude columns, got {header}")

    by_line: dict[str, list[str]] = {}
    for key, loc in locations.items():
        by_line.setdefault(normalize(loc.request_line()), []).append(key)

    report = ResolutionReport()
    failed: dict[str, str] = {}
    source = "cache" if cache is not None else "remote"
    for rowno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) <= max(name_col, lat_col, lon_col):
            raise MalformedCsv(f"row {rowno}: too few cells")
        keys = by_line.get(normalize(row[name_col]))
        if not keys:
            log.warning("geocoder output row %d (%r) matches no request line", rowno, row[name_col])
            continue
        country = row[country_col].strip() if country_col is not None and len(row) > country_col else ""
        try:
            lat, lon = float(row[lat_col]), float(row[lon_col])
        except ValueError:
            for k in keys:
                failed[k] = "unparsable coordinates"
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            for k in keys:
                failed[k] = OUT_OF_RANGE
            continue
        for k in keys:
            if cache is not None:
                cache.put(k, lat, lon, country)
            report.resolved[k] = GeoPoint(lat, lon, source, country or None)
            failed.pop(k, None)
    for k in sorted(locations):
        if k not in report.resolved:
            report.failures.append((k, failed.get(k, "no geocoder result")))
    report.resolved = dict(sorted(report.resolved.items()))
    return report


def resolve(
    locations: Mapping[str, Location],
    gazetteer: Gazetteer | None = None,
    cache: GeoCache | None = None,
    remote: HttpGeocoder | None = None,
    workers: int = 4,
    countries: dict[str, str] | None = None,
) -> ResolutionReport:
    """Resolve every key: gazetteer, then cache, then the remote geocoder.

    Remote answers are persisted to ``cache`` and reported with source
    ``cache`` so a warm rerun yields the same report without any request.
    """
    resolved: dict[str, GeoPoint] = {}
    failures: dict[str, str] = {}
    pending: dict[str, list[str]] = {}
    for key in sorted(locations):
        loc = locations[key]
        if gazetteer is not None and (p := gazetteer.lookup(key, loc)) is not None:
            resolved[key] = p
            continue
        if cache is not None:
            hit = cache.get(key)
            if hit is None:
                failures[key] = NOT_FOUND
                continue
            if hit is not GeoCache.MISSING:
                resolved[key] = hit
                continue
        if remote is None:
            failures[key] = "no coordinates (offline)"
        else:
            pending.setdefault(loc.request_line(), []).append(key)

    if pending:
        queries = sorted(pending)

        def ask(q):
            try:
                return remote.lookup(q), None
            except RemoteUnavailable as exc:
                return None, exc

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            answers = list(pool.map(ask, queries))
        source = "cache" if cache is not None else "remote"
        for q, (hit, err) in zip(queries, answers):
            for key in pending[q]:
                if err is not None:
                    log.warning("%s: remote geocoder unavailable (%s)", key, err)
                    failures[key] = f"remote unavailable: {err}"
                elif hit is None:
                    if cache is not None:
                        cache.put(key, None, None)
                    failures[key] = NOT_FOUND
                else:
                    lat, lon, country = hit
                    try:
                        resolved[key] = GeoPoint(lat, lon, source, country or None)
                    except ValueError:
                        failures[key] = OUT_OF_RANGE
                        continue
                    if cache is not None:
                        cache.put(key, lat, lon, country)

    report = ResolutionReport(
        resolved=dict(sorted(resolved.items())),
        failures=sorted(failures.items()),
    )
    report.country_mismatches = check_country_consistency(
        report, {k: loc.country for k, loc in locations.items()}, countries
    )
    for key, reason in report.failures:
        log.warning("no coordinates for %s: %s", key, reason)
    return report


def check_country_consistency(
    report: ResolutionReport,
    parsed_countries: Mapping[str, str],
    countries: dict[str, str] | None = None,
) -> list[tuple[str, str, str]]:
    """(key, parsed, resolved) wherever the geocoder places a key in another country.

    Points without a resolved country are not checked.
    """
    out = []
    for key, p in report.resolved.items():
        if not p.resolved_country or key not in parsed_countries:
            continue
        parsed = normalize_country(parsed_countries[key], countries)
        got = normalize_country(p.resolved_country, countries)
        if parsed != got:
            out.append((key, parsed, got))
    return out


def great_circle_km(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance on a sphere of radius 6371 km."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))
