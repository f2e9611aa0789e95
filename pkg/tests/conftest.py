from __future__ import annotations

import http.server
import json
import threading
import urllib.parse
from pathlib import Path

import pytest

from geosci.addresses import city_key, key_locations
from geosci.cooc import build_cooc
from geosci.geo import Gazetteer, resolve
from geosci.network import build_network
from geosci.records import BibRecord, RawAddress, parse_wos

DATA = Path(__file__).parent / "data"
WOS = DATA / "sample_wos.txt"
SCOPUS = DATA / "sample_scopus.csv"
GOLDEN = DATA / "golden"

# City keys of each fixture record, read off the file by hand.
EXPECTED_CITY_KEYS = [
    ["AMSTERDAM, NETHERLANDS", "UMEA, SWEDEN"],
    ["LOUVAIN, BELGIUM", "BUDAPEST, HUNGARY"],
    ["LOUVAIN, BELGIUM", "DALIAN, PEOPLES R CHINA"],
    ["ANTWERP, BELGIUM", "HEVERLEE, BELGIUM", "OOSTENDE, BELGIUM", "DIEPENBEEK, BELGIUM"],
    ["PHILADELPHIA, PA, USA", "BLOOMINGTON, IN, USA"],
    ["SAO PAULO, BRAZIL"],
    ["WOLVERHAMPTON, UK", "SHEFFIELD, UK"],
    ["VALENCIA, SPAIN", "SEVILLA, SPAIN"],
    ["GRANADA, SPAIN", "GRANADA, SPAIN"],
    ["UMEA, SWEDEN"],
    ["TOKYO, JAPAN", "PALO ALTO, CA, USA"],
    ["SEOUL, SOUTH KOREA", "SEOUL, SOUTH KOREA"],
    ["BEIJING, PEOPLES R CHINA", "WUHAN, PEOPLES R CHINA"],
    ["TORONTO, ON, CANADA", "MONTREAL, PQ, CANADA"],
    ["LEIDEN, NETHERLANDS", "AMSTERDAM, NETHERLANDS"],
    ["LONDON, UK", "EDINBURGH, UK"],
    ["ZURICH, SWITZERLAND", "HAMBURG, GERMANY", "GENEVA, SWITZERLAND"],
    ["BRUSSELS, BELGIUM", "PARIS, FRANCE", "NANTES, FRANCE"],
    ["CHAPEL HILL, NC, USA", "PITTSBURGH, PA, USA", "PHILADELPHIA, PA, USA"],
    ["XINXIANG, PEOPLES R CHINA", "LOUVAIN, BELGIUM", "ANTWERP, BELGIUM",
     "HEVERLEE, BELGIUM", "OOSTENDE, BELGIUM"],
]

# Isle of Man byline: no gazetteer entry and no answer from the stub geocoder.
UNRESOLVABLE = "Isle Man Int Business Sch, Douglas 1M2 1QB, UK"

CITY_NAMES = [
    "ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO", "FOXTROT", "GOLF", "HOTEL",
    "INDIA", "JULIETT", "KILO", "LIMA", "MIKE", "NOVEMBER", "OSCAR", "PAPA",
    "QUEBEC", "ROMEO", "SIERRA", "TANGO",
]


def synthetic_record(n: int, cities: list[str], country: str = "FRANCE") -> BibRecord:
    """Record whose byline addresses are in ``cities`` (duplicates allowed)."""
    return BibRecord(
        record_id=f"SYN-{n}",
        authors=("Doe, J",),
        title=f"synthetic {n}",
        addresses=tuple(RawAddress(f"Univ {c.title()}, Dept {i}, {c}, {country}") for i, c in enumerate(cities)),
    )


@pytest.fixture(scope="session")
def wos_records():
    result = parse_wos(WOS)
    assert not result.problems
    return result.records


@pytest.fixture(scope="session")
def fixture_report(wos_records):
    return resolve(key_locations(wos_records), Gazetteer.bundled())


@pytest.fixture(scope="session")
def fixture_network(wos_records, fixture_report):
    return build_network(build_cooc(wos_records, city_key), fixture_report)


def _gazetteer_answers() -> dict[str, dict]:
    """Stub geocoder database: request line -> JSON hit, from the bundled table."""
    from geosci.addresses import Location

    answers = {}
    for line in (Path(__file__).parents[1] / "src/geosci/data/gazetteer.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        key, lat, lon, country = line.split("\t")
        parts = key.split(", ")
        loc = Location(parts[0], parts[-1], parts[1] if len(parts) == 3 else None)
        answers[loc.request_line()] = {"lat": lat, "lon": lon, "address": {"country": country.title()}}
    return answers


class StubGeocoder:
    """Threaded local HTTP geocoder that counts requests."""

    def __init__(self, answers: dict[str, dict]):
        self.answers = answers
        self.requests: list[str] = []
        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_GET(self):
                query = urllib.parse.parse_qs(urllib.parse.urlparse(self.path).query).get("q", [""])[0]
                stub.requests.append(query)
                hit = stub.answers.get(query)
                body = json.dumps([hit] if hit else []).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/search?q={{query}}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_geocoder():
    with StubGeocoder(_gazetteer_answers()) as stub:
        yield stub


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda l: int(l.split("AC-")[1].split()[0])):
        terminalreporter.write_line(line)
