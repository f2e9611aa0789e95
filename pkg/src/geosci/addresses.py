"""Byline address parsing and the city / institution keys built from it."""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from geosci.records import BibRecord, RawAddress

log = logging.getLogger(__name__)

_HAS_DIGIT = re.compile(r"\d")
_US_TAIL = re.compile(r"(?:([A-Z]{2})\s+)?(?:(\d{5}(?:-\d{4})?)\s+)?USA")
_US_STATE = re.compile(r"([A-Z]{2})(?:\s+(\d{5}(?:-\d{4})?))?")
_CA_TAIL = re.compile(r"(?:([A-Z]{2})\s+)?(?:([A-Z]\d[A-Z]\s?\d[A-Z]\d)\s+)?CANADA")
_CA_STATE = re.compile(r"([A-Z]{2})(?:\s+([A-Z]\d[A-Z]\s?\d[A-Z]\d))?")
_UK_CITY = re.compile(r"\D+\s[A-Z]{1,2}\d[A-Z\d]?\s+\d[A-Z]{2}")


class UnparsableAddress(ValueError):
    pass


def normalize(text: str) -> str:
    """Uppercase and collapse whitespace; idempotent."""
    return " ".join(text.upper().split())


def load_country_table(path: str | Path | None = None) -> dict[str, str]:
    """Read a FROM<TAB>TO country table; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("geosci").joinpath("data/countries.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"country table line {n}: expected FROM<TAB>TO")
        table[normalize(parts[0])] = normalize(parts[1])
    return table


@lru_cache(maxsize=1)
def default_country_table() -> dict[str, str]:
    return load_country_table()


def normalize_country(name: str, table: dict[str, str] | None = None) -> str:
    name = normalize(name).rstrip(".")
    if table is None:
        table = default_country_table()
    return table.get(name, name)


@dataclass(frozen=True)
class ParsedAddress:
    organization: str
    city: str
    country: str
    sub_org: str | None = None
    postcode: str | None = None
    state: str | None = None

    def __post_init__(self):
        if not self.city or not self.country:
            raise UnparsableAddress("city and country are required")


@dataclass(frozen=True)
class Location:
    """The geographic part of a key, as sent to a geocoder."""

    city: str
    country: str
    state: str | None = None
    postcode: str | None = None

    @property
    def city_key(self) -> str:
        return ", ".join(p for p in (self.city, self.state, self.country) if p)

    def request_line(self) -> str:
        parts = [_display(self.city)]
        if self.state:
            parts.append(self.state)
        if self.postcode:
            parts.append(self.postcode)
        parts.append(_display(self.country, keep_short=True))
        return ", ".join(parts)


def _display(name: str, keep_short: bool = False) -> str:
    words = []
    for w in name.split(" "):
        if keep_short and len(w) <= 3 and w.isalpha():
            words.append(w)
        else:
            words.append(w.capitalize() if w.isalpha() else w.title())
    return " ".join(words)


def _split_city(field: str) -> tuple[str, str | None]:
    tokens = field.split()
    n = len(tokens)
    i = 0
    # "SE 901 87 UMEA": bare country prefix ahead of a numeric postcode
    if n > 2 and re.fullmatch(r"[A-Z]{1,3}-?", tokens[0]) and _HAS_DIGIT.search(tokens[1]):
        i = 1
    while i < n and _HAS_DIGIT.search(tokens[i]):
        i += 1
    # Dutch "1012 CX": the letter pair belongs to the postcode
    if 0 < i < n - 1 and re.fullmatch(r"[A-Z]{2}", tokens[i]) and re.search(r"\d{4}$", tokens[i - 1]):
        i += 1
    j = n
    while j > i and _HAS_DIGIT.search(tokens[j - 1]):
        j -= 1
    city = " ".join(tokens[i:j])
    postcode = " ".join(tokens[:i] + tokens[j:]) or None
    return city, postcode


def parse_address(raw: RawAddress | str, countries: dict[str, str] | None = None) -> ParsedAddress:
    """Split a byline into organization, city, postcode, state and country.

    The last comma-delimited subfield is the country and the one before it
    holds city and postcode; US and Canadian bylines carry a state code.
    Raises UnparsableAddress when no city can be found.
    """
    text = raw.text if isinstance(raw, RawAddress) else raw
    subs = [normalize(s) for s in normalize(text).rstrip(".").split(",")]
    subs = [s for s in subs if s]
    if len(subs) < 2:
        raise UnparsableAddress(f"fewer than 2 subfields: {text!r}")

    last = subs[-1]
    state = postcode = None
    city_idx = len(subs) - 2
    if m := _US_TAIL.fullmatch(last):
        country = "USA"
        state, postcode = m.group(1), m.group(2)
    elif m := _CA_TAIL.fullmatch(last):
        country = "CANADA"
        state, postcode = m.group(1), m.group(2)
    else:
        country = normalize_country(last, countries)

    if state is None and country in ("USA", "CANADA") and len(subs) >= 3:
        pat = _US_STATE if country == "USA" else _CA_STATE
        if m := pat.fullmatch(subs[-2]):
            state, postcode = m.group(1), m.group(2)
            city_idx -= 1

    # "Sheffield S10 2TN, S Yorkshire, England": county after the postcode
    if (
        country == "UK"
        and city_idx >= 2
        and not _HAS_DIGIT.search(subs[city_idx])
        and _UK_CITY.fullmatch(subs[city_idx - 1])
    ):
        city_idx -= 1

    city, local_code = _split_city(subs[city_idx])
    if not city:
        raise UnparsableAddress(f"no city name in {subs[city_idx]!r}: {text!r}")
    return ParsedAddress(
        organization=subs[0],
        sub_org=subs[1] if len(subs) >= 4 else None,
        city=city,
        postcode=postcode or local_code,
        state=state,
        country=country,
    )


def city_key(a: ParsedAddress) -> str:
    return ", ".join(p for p in (a.city, a.state, a.country) if p)


def inst_key(a: ParsedAddress, aggregate: bool = True) -> str:
    """Organization plus location; without aggregation the postcode is kept too."""
    postcode = None if aggregate else a.postcode
    return ", ".join(p for p in (a.organization, a.city, a.state, postcode, a.country) if p)


def key_location(a: ParsedAddress, level: str = "city", aggregate: bool = True) -> Location:
    keep_postcode = level != "city" and not aggregate
    return Location(a.city, a.country, a.state, a.postcode if keep_postcode else None)


def key_function(level: str = "city", aggregate: bool = True):
    if level == "city":
        return city_key
    if level in ("inst", "institution"):
        return lambda a: inst_key(a, aggregate)
    raise ValueError(f"unknown level {level!r}")


def effective_addresses(
    r: BibRecord,
    countries: dict[str, str] | None = None,
    warnings: list | None = None,
) -> list[ParsedAddress]:
    """Parsed byline addresses, falling back to the reprint address.

    Unparsable entries are dropped; they are logged and, when ``warnings`` is
    given, appended to it as ``(record_id, message)``.
    """
    raws = list(r.addresses)
    if not raws and r.reprint_address is not None:
        raws = [r.reprint_address]
    parsed = []
    for raw in raws:
        try:
            parsed.append(parse_address(raw, countries))
        except UnparsableAddress as exc:
            log.warning("%s: %s", r.record_id, exc)
            if warnings is not None:
                warnings.append((r.record_id, str(exc)))
    return parsed


def name_variants(addresses: Iterable[ParsedAddress]) -> list[tuple[str, ...]]:
    """Organization spellings in one city that differ only in spacing/punctuation.

    Only reported, never merged ("KU LEUVEN" / "KULEUVEN").
    """
    groups = defaultdict(set)
    for a in addresses:
        squashed = re.sub(r"[^A-Z0-9]", "", a.organization)
        groups[(squashed, a.city, a.state, a.country)].add(a.organization)
    return sorted(tuple(sorted(v)) for v in groups.values() if len(v) > 1)


def key_locations(
    records: Iterable[BibRecord],
    level: str = "city",
    aggregate: bool = True,
    countries: dict[str, str] | None = None,
) -> dict[str, Location]:
    """Every key in the corpus with the location a geocoder should look up."""
    key_fn = key_function(level, aggregate)
    out = {}
    for r in records:
        for a in effective_addresses(r, countries):
            out.setdefault(key_fn(a), key_location(a, level, aggregate))
    return dict(sorted(out.items()))
