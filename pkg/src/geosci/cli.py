"""``geosci`` command line: ingest, geocode, net, analyze, build.

Each step reads and writes plain files so intermediate results can be
inspected or edited by hand between runs.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import os
import sys
import warnings
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from geosci import __version__
from geosci._util import EmptyResultWarning, atomic_write
from geosci.addresses import key_function, key_locations, load_country_table
from geosci.cooc import apply_threshold, build_cooc, cosine_normalize, write_matrix
from geosci.exporters import (
    export_gps_visualizer,
    export_kml_earth,
    export_kml_maps,
    export_pajek,
    kml_document,
    kmz_archive,
    load_coastline,
)
from geosci.geo import (
    GEOCODER_URL_ENV,
    GeoCache,
    Gazetteer,
    HttpGeocoder,
    emit_geocode_request,
    ingest_geocoder_output,
    resolve,
)
from geosci.network import build_network, classify_isolates, core_numbers, k_core, region_filter
from geosci.records import MissingColumn, load_corpus, parse_scopus, parse_wos, save_corpus, corpus_stats

log = logging.getLogger("geosci")

EXIT_OK = 0
EXIT_FATAL = 2

EXPORTS = ("kml-earth", "kml-maps", "kmz", "gps", "pajek", "matrix")
OUTPUT_NAMES = {
    "kml-earth": "cities.kml",
    "kml-maps": "cities2.kml",
    "kmz": "cities.kmz",
    "gps": "inp_gps.txt",
    "pajek": "cities.paj",
    "matrix": "matrix.txt",
}
REQUEST_FILE = "cities.txt"
REPORT_FILE = "geocode-report.tsv"
CACHE_FILE = "geocache.tsv"
MANIFEST_FILE = "run-manifest.txt"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    level: str = "city"
    aggregate: bool = False
    counting: str = "record"
    threshold_abs: float | None = None
    threshold_pct: float | None = None
    cosine: bool = False
    gazetteer: str | None = None
    bundled_gazetteer: bool = True
    cache: str | None = None
    countries: str | None = None
    min_interval: float = 0.2
    workers: int = 4
    region: tuple[float, float, float, float] | None = None
    k_core: int | None = None
    export: tuple[str, ...] = ("kml-earth", "kml-maps", "kmz", "gps", "pajek", "matrix")
    coastline: str | None = None

    def validate(self) -> PipelineConfig:
        if self.level not in ("city", "inst"):
            raise ConfigError(f"level must be city or inst, got {self.level!r}")
        if self.level == "city" and self.aggregate:
            raise ConfigError("aggregate applies to the institution level only")
        if self.counting not in ("record", "address"):
            raise ConfigError(f"counting must be record or address, got {self.counting!r}")
        if self.threshold_abs is not None and self.threshold_pct is not None:
            raise ConfigError("choose one of threshold_abs and threshold_pct")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.k_core is not None and self.k_core < 0:
            raise ConfigError("k_core must be >= 0")
        bad = [e for e in self.export if e not in EXPORTS]
        if bad:
            raise ConfigError(f"unknown export(s) {', '.join(bad)}; choose from {', '.join(EXPORTS)}")
        for name in ("gazetteer", "countries", "coastline"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        return self


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _region(text: str) -> tuple[float, float, float, float]:
    try:
        box = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"region must be lat_min,lat_max,lon_min,lon_max: {text!r}") from None
    if len(box) != 4:
        raise ConfigError(f"region must have 4 numbers: {text!r}")
    return box


def _exports(text: str) -> tuple[str, ...]:
    return tuple(e.strip() for e in text.split(",") if e.strip())


_CONVERTERS = {
    "level": str,
    "aggregate": _bool,
    "counting": str,
    "threshold_abs": float,
    "threshold_pct": float,
    "cosine": _bool,
    "gazetteer": str,
    "bundled_gazetteer": _bool,
    "cache": str,
    "countries": str,
    "min_interval": float,
    "workers": int,
    "region": _region,
    "k_core": int,
    "export": _exports,
    "coastline": str,
}


def read_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment. Relative paths are
    taken relative to the config file."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[geosci]\n" + path.read_text("utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, raw in parser["geosci"].items():
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            value = _CONVERTERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: {key}: {exc}") from None
        if key in ("gazetteer", "cache", "countries", "coastline"):
            value = str((path.parent / value))
        out[key] = value
    return out


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then the config file, then command line flags."""
    values = read_config(args.config) if getattr(args, "config", None) else {}
    names = {f.name for f in fields(PipelineConfig)}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return replace(PipelineConfig(), **values).validate()


def _open_corpus(path):
    try:
        return load_corpus(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from None


def _countries(cfg: PipelineConfig):
    return load_country_table(cfg.countries) if cfg.countries else None


def _gazetteer(cfg: PipelineConfig) -> Gazetteer:
    gaz = Gazetteer.bundled() if cfg.bundled_gazetteer else Gazetteer()
    if cfg.gazetteer:
        gaz.update(Gazetteer.from_file(cfg.gazetteer))
    return gaz


def _remote(args, cfg: PipelineConfig) -> HttpGeocoder | None:
    if not getattr(args, "remote", False):
        return None
    url = args.geocoder_url or os.environ.get(GEOCODER_URL_ENV)
    if not url:
        raise ConfigError(f"--remote needs --geocoder-url or ${GEOCODER_URL_ENV}")
    return HttpGeocoder(url, min_interval=cfg.min_interval)


def _resolve(args, cfg, records, cache_default: Path):
    countries = _countries(cfg)
    locations = key_locations(records, cfg.level, cfg.aggregate, countries)
    cache = GeoCache(cfg.cache or cache_default)
    report = resolve(
        locations, _gazetteer(cfg), cache, _remote(args, cfg), workers=cfg.workers, countries=countries
    )
    return locations, report


def cmd_ingest(args) -> int:
    records, problems = [], []
    for path in args.files:
        fmt = args.format
        if fmt == "auto":
            fmt = "scopus" if Path(path).suffix.lower() == ".csv" else "wos"
        try:
            if fmt == "wos":
                result = parse_wos(path)
            else:
                result = parse_scopus(path, start=sum(r.record_id.startswith("SCP-") for r in records) + 1)
        except (OSError, MissingColumn) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_FATAL
        records.extend(result.records)
        problems.extend((path, p) for p in result.problems)
    for path, p in problems:
        print(f"warning: {path}: {p}", file=sys.stderr)
    seen = set()
    unique = []
    for r in records:
        if r.record_id in seen:
            print(f"warning: duplicate record {r.record_id} dropped", file=sys.stderr)
            continue
        seen.add(r.record_id)
        unique.append(r)
    save_corpus(unique, args.out)
    print(corpus_stats(unique).summary())
    return EXIT_OK


def cmd_geocode(args) -> int:
    cfg = load_config(args)
    records = _open_corpus(args.corpus)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    countries = _countries(cfg)
    locations = key_locations(records, cfg.level, cfg.aggregate, countries)
    if not locations:
        print("error: no parsable addresses in corpus", file=sys.stderr)
        return EXIT_FATAL
    atomic_write(out_dir / REQUEST_FILE, emit_geocode_request(locations))
    if args.emit_request:
        print(f"wrote {len(set(l.request_line() for l in locations.values()))} request lines to {out_dir / REQUEST_FILE}")
        return EXIT_OK
    cache_path = cfg.cache or out_dir / CACHE_FILE
    if args.ingest:
        partial = ingest_geocoder_output(args.ingest, locations, GeoCache(cache_path))
        print(f"ingested {len(partial.resolved)} coordinates from {args.ingest}")
    _, report = _resolve(args, cfg, records, out_dir / CACHE_FILE)
    atomic_write(out_dir / REPORT_FILE, report.to_tsv())
    print(
        f"resolved {len(report.resolved)} of {len(locations)} keys; "
        f"{len(report.failures)} failed; {len(report.country_mismatches)} country mismatches"
    )
    for key, reason in report.failures:
        print(f"warning: no coordinates for {key}: {reason}", file=sys.stderr)
    for key, parsed, resolved_country in report.country_mismatches:
        print(f"warning: {key}: parsed {parsed}, geocoder says {resolved_country}", file=sys.stderr)
    return EXIT_OK


def _matrix(cfg: PipelineConfig, records):
    m = build_cooc(records, key_function(cfg.level, cfg.aggregate), cfg.counting, _countries(cfg))
    if cfg.threshold_abs is not None:
        m = apply_threshold(m, "absolute", cfg.threshold_abs)
    elif cfg.threshold_pct is not None:
        m = apply_threshold(m, "percent", cfg.threshold_pct)
    return m


def cmd_net(args) -> int:
    cfg = load_config(args)
    m = _matrix(cfg, _open_corpus(args.corpus))
    write_matrix(cosine_normalize(m) if cfg.cosine else m, args.out)
    print(f"{len(m)} keys written to {args.out}")
    return EXIT_OK


def _network(args, cfg, records, cache_default):
    m = _matrix(cfg, records)
    _, report = _resolve(args, cfg, records, cache_default)
    net = build_network(m, report)
    if cfg.region is not None:
        net = region_filter(net, cfg.region)
    if cfg.k_core is not None:
        net = k_core(net, cfg.k_core)
    return m, report, net


def cmd_analyze(args) -> int:
    cfg = load_config(args)
    records = _open_corpus(args.corpus)
    _, _, net = _network(args, cfg, records, Path(args.cache_dir) / CACHE_FILE)
    connected, isolates = classify_isolates(net)
    print(f"nodes={len(net)} links={len(net.links)} connected={len(connected)} isolates={len(isolates)}")
    if "isolates" in args.report:
        for n in isolates:
            print(f"isolate\t{n.key}\t{n.occurrences}")
    if "cores" in args.report:
        for key, k in sorted(core_numbers(net).items()):
            print(f"core\t{key}\t{k}")
    return EXIT_OK


def write_manifest(out_dir: Path, paths) -> Path:
    lines = []
    for p in sorted(paths, key=lambda p: p.relative_to(out_dir).as_posix()):
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        lines.append(f"{p.relative_to(out_dir).as_posix()}\t{digest}\n")
    return atomic_write(out_dir / MANIFEST_FILE, "".join(lines))


def cmd_build(args) -> int:
    cfg = load_config(args)
    records = _open_corpus(args.corpus)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m, report, net = _network(args, cfg, records, Path(args.cache_dir or out_dir) / CACHE_FILE)
    if not len(net):
        print("error: network is empty, nothing to export", file=sys.stderr)
        return EXIT_FATAL
    coastline = load_coastline(cfg.coastline) if cfg.coastline else None

    written = []
    for name in EXPORTS:
        if name not in cfg.export:
            continue
        path = out_dir / OUTPUT_NAMES[name]
        if name == "kml-earth":
            export_kml_earth(net, path)
        elif name == "kml-maps":
            export_kml_maps(net, path)
            icon = out_dir / "transparent.png"
            atomic_write(icon, resources.files("geosci").joinpath("data/transparent.png").read_bytes())
            written.append(icon)
        elif name == "kmz":
            atomic_write(path, kmz_archive(kml_document(net, "earth")))
        elif name == "gps":
            export_gps_visualizer(net, path)
        elif name == "pajek":
            export_pajek(net, path, coastline)
        elif name == "matrix":
            sub = m.restrict(net.keys)
            write_matrix(cosine_normalize(sub) if cfg.cosine else sub, path)
        written.append(path)
    write_manifest(out_dir, written)
    connected, isolates = classify_isolates(net)
    print(
        f"network: {len(net)} nodes ({len(isolates)} isolates), {len(net.links)} links; "
        f"{len(report.failures)} keys without coordinates"
    )
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _add_config_options(p: argparse.ArgumentParser, matrix: bool = True) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--level", choices=("city", "inst"))
    p.add_argument("--aggregate", action="store_true", default=None,
                   help="institution level: merge postcodes of one organization")
    p.add_argument("--countries", help="FROM<TAB>TO country normalization table")
    if matrix:
        p.add_argument("--address-counting", dest="counting", action="store_const", const="address",
                       help="count every address instead of once per record")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--threshold-abs", type=float, metavar="N")
        g.add_argument("--threshold-pct", type=float, metavar="P")


def _add_geo_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gazetteer", help="extra key<TAB>lat<TAB>lon[<TAB>country] table")
    p.add_argument("--no-bundled-gazetteer", dest="bundled_gazetteer", action="store_false", default=None)
    p.add_argument("--cache", help=f"geocoder cache (default {CACHE_FILE} in the output directory)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--offline", dest="remote", action="store_false", default=False)
    mode.add_argument("--remote", dest="remote", action="store_true")
    p.add_argument("--geocoder-url", help=f"GET template with {{query}}; default ${GEOCODER_URL_ENV}")
    p.add_argument("--min-interval", type=float, help="seconds between remote requests")
    p.add_argument("--workers", type=int, help="parallel remote lookups")


def _add_network_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-core", type=int, metavar="K")
    p.add_argument("--region", type=_region, metavar="LAT1,LAT2,LON1,LON2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geosci", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse WoS / Scopus exports into a corpus file")
    p.add_argument("--format", choices=("wos", "scopus", "auto"), default="auto")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True, help="corpus file (JSON lines)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("geocode", help="write cities.txt and resolve coordinates")
    p.add_argument("corpus")
    _add_config_options(p, matrix=False)
    _add_geo_options(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--emit-request", action="store_true", help="only write the request file")
    p.add_argument("--ingest", metavar="CSV", help="geocoder output to load into the cache")
    p.set_defaults(func=cmd_geocode)

    p = sub.add_parser("net", help="write the co-occurrence matrix")
    p.add_argument("corpus")
    _add_config_options(p)
    p.add_argument("--cosine", action="store_true", default=None)
    p.add_argument("--out", default="matrix.txt")
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("analyze", help="isolates and k-cores of the geocoded network")
    p.add_argument("corpus")
    _add_config_options(p)
    _add_geo_options(p)
    _add_network_options(p)
    p.add_argument("--cache-dir", default=".")
    p.add_argument("--report", type=_exports, default=("isolates",), help="isolates,cores")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("build", help="build the network and write the exports")
    p.add_argument("corpus")
    _add_config_options(p)
    _add_geo_options(p)
    _add_network_options(p)
    p.add_argument("--cosine", action="store_true", default=None)
    p.add_argument("--export", type=_exports, help=",".join(EXPORTS))
    p.add_argument("--coastline", help="Pajek coastline to merge into cities.paj")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--cache-dir", help="where geocache.tsv lives (default: --out-dir)")
    p.set_defaults(func=cmd_build)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", EmptyResultWarning)
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
