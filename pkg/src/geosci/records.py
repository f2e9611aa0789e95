"""Bibliographic record model and readers for WoS tagged and Scopus CSV exports.

Both readers produce the same :class:`BibRecord` shape so everything downstream
is indifferent to where a record came from.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

WOS_HEADER_TAGS = {"FN", "VR"}
_TAG_RE = re.compile(r"^([A-Z][A-Z0-9])(?: (.*))?$")
_GROUP_RE = re.compile(r"^\[([^\]]*)\]\s*(.*)$")
_REPRINT_RE = re.compile(r"^(.*?)\s*\((?:reprint|corresponding) author\),\s*(.*)$", re.I)

SCOPUS_REQUIRED = (
    "Authors",
    "Title",
    "Year",
    "Source title",
    "Affiliations",
    "Correspondence Address",
)


class MissingColumn(ValueError):
    pass


@dataclass(frozen=True)
class RawAddress:
    text: str
    author_group: tuple[str, ...] | None = None

    def __post_init__(self):
        text = self.text.strip()
        if not text:
            raise ValueError("address text must be non-empty")
        object.__setattr__(self, "text", text)
        if self.author_group is not None:
            object.__setattr__(self, "author_group", tuple(self.author_group))


@dataclass(frozen=True)
class BibRecord:
    record_id: str
    authors: tuple[str, ...] = ()
    title: str = ""
    source: str = ""
    year: int | None = None
    doc_type: str = ""
    addresses: tuple[RawAddress, ...] = ()
    reprint_address: RawAddress | None = None

    def __post_init__(self):
        if self.year is not None and self.year <= 0:
            raise ValueError(f"year must be positive, got {self.year}")
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "addresses", tuple(self.addresses))

    def to_dict(self) -> dict:
        def addr(a: RawAddress | None):
            if a is None:
                return None
            group = list(a.author_group) if a.author_group is not None else None
            return {"text": a.text, "author_group": group}

        return {
            "record_id": self.record_id,
            "authors": list(self.authors),
            "title": self.title,
            "source": self.source,
            "year": self.year,
            "doc_type": self.doc_type,
            "addresses": [addr(a) for a in self.addresses],
            "reprint_address": addr(self.reprint_address),
        }

    @classmethod
    def from_dict(cls, d: dict) -> BibRecord:
        def addr(x):
            if x is None:
                return None
            group = x.get("author_group")
            return RawAddress(x["text"], tuple(group) if group is not None else None)

        return cls(
            record_id=d["record_id"],
            authors=tuple(d.get("authors", ())),
            title=d.get("title", ""),
            source=d.get("source", ""),
            year=d.get("year"),
            doc_type=d.get("doc_type", ""),
            addresses=tuple(addr(a) for a in d.get("addresses", ())),
            reprint_address=addr(d.get("reprint_address")),
        )


@dataclass(frozen=True)
class ParseProblem:
    """A skipped record or row; ``line`` is 1-based (row number for CSV)."""

    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class ParseResult:
    records: list[BibRecord] = field(default_factory=list)
    problems: list[ParseProblem] = field(default_factory=list)


def _lines(stream) -> Iterator[str]:
    """Yield text lines from a path, a binary/text stream or a list of strings.

    Bytes are decoded as UTF-8 with replacement so mixed-encoding exports
    still load.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, "rb") as fh:
            yield from _lines(fh)
        return
    first = True
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if first:
            line = line.lstrip("\ufeff")
            first = False
        yield line.rstrip("\r\n")


def _split_group(value: str) -> RawAddress | None:
    value = value.strip()
    group = None
    m = _GROUP_RE.match(value)
    if m:
        group = tuple(a.strip() for a in m.group(1).split(";") if a.strip())
        value = m.group(2)
    value = value.strip().rstrip(".").strip()
    if not value:
        return None
    return RawAddress(value, group)


def _split_reprint(value: str) -> RawAddress | None:
    # newer exports chain several "(corresponding author)" entries with ".; "
    value = re.split(r"\.;\s*", value.strip())[0]
    m = _REPRINT_RE.match(value)
    name, text = (m.group(1).strip(), m.group(2)) if m else ("", value)
    text = text.strip().rstrip(".").strip()
    if not text:
        return None
    return RawAddress(text, (name,) if name else None)


def _build_wos(fields: dict[str, list[str]], index: int) -> BibRecord:
    def joined(tag):
        return " ".join(fields.get(tag, [])).strip()

    year = None
    py = joined("PY")
    if py:
        year = int(py[:4])
    addresses = tuple(a for a in (_split_group(v) for v in fields.get("C1", [])) if a)
    reprint = _split_reprint(joined("RP")) if "RP" in fields else None
    return BibRecord(
        record_id=joined("UT") or f"WOS-{index}",
        authors=tuple(a.strip() for a in fields.get("AU", []) if a.strip()),
        title=joined("TI"),
        source=joined("SO"),
        year=year,
        doc_type=joined("DT"),
        addresses=addresses,
        reprint_address=reprint,
    )


# tags whose continuation lines are separate items rather than wrapped text
_LIST_TAGS = {"AU", "AF", "C1", "CR"}


def parse_wos(stream: Iterable) -> ParseResult:
    """Parse a Web-of-Science tagged-format export.

    Each ``PT ... ER`` block becomes one record.  Broken blocks (``ER`` with
    no ``PT``, a new ``PT`` before ``ER``, end of file inside a record, bad
    ``PY``) are skipped and reported in ``problems``.
    """
    result = ParseResult()
    seen_ids: set[str] = set()
    fields: dict[str, list[str]] | None = None
    start = 0
    tag = None

    def close():
        nonlocal fields
        try:
            rec = _build_wos(fields, len(result.records) + 1)
        except ValueError as exc:
            result.problems.append(ParseProblem(start, f"bad record: {exc}"))
        else:
            if rec.record_id in seen_ids:
                result.problems.append(
                    ParseProblem(start, f"duplicate record id {rec.record_id}")
                )
            else:
                seen_ids.add(rec.record_id)
                result.records.append(rec)
        fields = None

    for lineno, line in enumerate(_lines(stream), 1):
        if not line.strip():
            continue
        if line.startswith("   "):
            if fields is None or tag is None:
                continue
            value = line.strip()
            if tag in _LIST_TAGS or not fields[tag]:
                fields[tag].append(value)
            else:
                fields[tag][-1] = f"{fields[tag][-1]} {value}"
            continue
        m = _TAG_RE.match(line.rstrip())
        if not m:
            if fields is not None:
                result.problems.append(ParseProblem(lineno, "unrecognized line"))
            continue
        tag, value = m.group(1), (m.group(2) or "").strip()
        if tag == "PT":
            if fields is not None:
                result.problems.append(
                    ParseProblem(start, "record truncated (PT before ER)")
                )
            fields = {"PT": [value]}
            start = lineno
        elif tag == "ER":
            if fields is None:
                result.problems.append(ParseProblem(lineno, "ER without PT"))
            else:
                close()
            tag = None
        elif tag == "EF" or (fields is None and tag in WOS_HEADER_TAGS):
            tag = None
        elif fields is not None:
            fields.setdefault(tag, []).append(value)
        else:
            tag = None
    if fields is not None:
        result.problems.append(ParseProblem(start, "truncated file (no ER)"))
    for p in result.problems:
        log.warning("WoS: %s", p)
    return result


def write_wos(records: Iterable[BibRecord]) -> str:
    """Serialize records back to tagged format (parses back to equal records)."""
    out = ["FN Clarivate Analytics Web of Science", "VR 1.0"]

    def emit(tag, values):
        values = list(values)
        if not values:
            return
        out.append(f"{tag} {values[0]}")
        out.extend(f"   {v}" for v in values[1:])

    for r in records:
        out.append("PT J")
        emit("AU", r.authors)
        if r.title:
            emit("TI", [r.title])
        if r.source:
            emit("SO", [r.source])
        if r.doc_type:
            emit("DT", [r.doc_type])
        c1 = []
        for a in r.addresses:
            prefix = f"[{'; '.join(a.author_group)}] " if a.author_group else ""
            c1.append(f"{prefix}{a.text}.")
        emit("C1", c1)
        if r.reprint_address is not None:
            name = r.reprint_address.author_group[0] if r.reprint_address.author_group else ""
            lead = f"{name} " if name else ""
            emit("RP", [f"{lead}(reprint author), {r.reprint_address.text}."])
        if r.year is not None:
            emit("PY", [str(r.year)])
        if not r.record_id.startswith("WOS-"):
            emit("UT", [r.record_id])
        out.append("ER")
        out.append("")
    out.append("EF")
    return "\n".join(out) + "\n"


def _split_scopus_authors(cell: str) -> tuple[str, ...]:
    cell = cell.strip()
    if not cell or cell.lower() == "[no author name available]":
        return ()
    if ";" in cell:
        parts = cell.split(";")
    else:
        # older exports: "Vermeer J., Lindqvist A."
        parts = re.split(r"(?<=\.),\s*", cell)
    return tuple(p.strip() for p in parts if p.strip())


def _scopus_reprint(cell: str) -> RawAddress | None:
    # "Surname, I.; Address...; email: x@y"
    parts = [p.strip() for p in cell.split(";")]
    parts = [p for p in parts if p and not p.lower().startswith("email:")]
    if not parts:
        return None
    if len(parts) == 1:
        return RawAddress(parts[0].rstrip("."))
    text = "; ".join(parts[1:]).rstrip(".").strip()
    if not text:
        return None
    return RawAddress(text, (parts[0],))


def parse_scopus(stream, start: int = 1) -> ParseResult:
    """Parse a Scopus CSV export.

    Record ids are ``SCP-<n>`` numbered from ``start`` in file order so that
    several files can be ingested into one corpus without collisions.

    Raises MissingColumn when a required header is absent.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, "rb") as fh:
            return parse_scopus(fh, start)
    text = stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    text = text.lstrip("\ufeff")
    reader = csv.reader(io.StringIO(text, newline=""))
    result = ParseResult()
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("empty file, no header row") from None
    lookup = {h.lower(): i for i, h in enumerate(header)}
    missing = [c for c in SCOPUS_REQUIRED if c.lower() not in lookup]
    if missing:
        raise MissingColumn(f"missing required column(s): {', '.join(missing)}")
    col = {c: lookup[c.lower()] for c in SCOPUS_REQUIRED}
    doc_col = lookup.get("document type")

    n = start
    for rowno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            result.problems.append(
                ParseProblem(rowno, f"ragged row: {len(row)} cells, expected {len(header)}")
            )
            continue
        year_cell = row[col["Year"]].strip()
        try:
            year = int(year_cell) if year_cell else None
            addresses = tuple(
                RawAddress(a.strip().rstrip("."))
                for a in row[col["Affiliations"]].split(";")
                if a.strip().rstrip(".")
            )
            rec = BibRecord(
                record_id=f"SCP-{n}",
                authors=_split_scopus_authors(row[col["Authors"]]),
                title=row[col["Title"]].strip(),
                source=row[col["Source title"]].strip(),
                year=year,
                doc_type=row[doc_col].strip() if doc_col is not None else "",
                addresses=addresses,
                reprint_address=_scopus_reprint(row[col["Correspondence Address"]]),
            )
        except ValueError as exc:
            result.problems.append(ParseProblem(rowno, f"bad row: {exc}"))
            continue
        result.records.append(rec)
        n += 1
    for p in result.problems:
        log.warning("Scopus: %s", p)
    return result


def save_corpus(records: Iterable[BibRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_corpus(path) -> list[BibRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(BibRecord.from_dict(json.loads(line)))
    return records


@dataclass(frozen=True)
class CorpusStats:
    n_records: int = 0
    n_authors: int = 0
    n_addresses: int = 0
    n_unique_city_keys: int = 0
    n_unique_inst_keys: int = 0
    # postcode-split variants of the two key counts
    n_unique_city_postcode_keys: int = 0
    n_unique_inst_keys_unaggregated: int = 0

    def summary(self) -> str:
        return (
            f"records={self.n_records} authors={self.n_authors} "
            f"addresses={self.n_addresses} cities={self.n_unique_city_keys} "
            f"institutions={self.n_unique_inst_keys} "
            f"city+postcode={self.n_unique_city_postcode_keys} "
            f"institutions(unaggregated)={self.n_unique_inst_keys_unaggregated}"
        )


def corpus_stats(records: Iterable[BibRecord], countries: dict[str, str] | None = None) -> CorpusStats:
    """Count records, author slots, effective addresses and unique keys.

    Addresses are the ones actually used for counting: byline addresses, or
    the reprint address for records without any.
    """
    from geosci.addresses import city_key, effective_addresses, inst_key

    n_records = n_authors = n_addresses = 0
    cities, city_codes, insts, insts_all = set(), set(), set(), set()
    for r in records:
        n_records += 1
        n_authors += len(r.authors)
        n_addresses += len(r.addresses) or (1 if r.reprint_address else 0)
        for a in effective_addresses(r, countries):
            cities.add(city_key(a))
            city_codes.add((city_key(a), a.postcode))
            insts.add(inst_key(a, aggregate=True))
            insts_all.add(inst_key(a, aggregate=False))
    return CorpusStats(
        n_records, n_authors, n_addresses,
        len(cities), len(insts), len(city_codes), len(insts_all),
    )
