"""Occurrence and co-occurrence counting over city or institution keys."""

from __future__ import annotations

import io
import warnings
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from geosci._util import EmptyResultWarning, atomic_write
from geosci.addresses import ParsedAddress, effective_addresses
from geosci.records import BibRecord

COUNTING_MODES = ("record", "address")


@dataclass(frozen=True, eq=False)
class CoocMatrix:
    """Symmetric counts; ``counts[i, j]`` is the number of records holding both
    keys, the diagonal holds occurrences. Keys are sorted."""

    keys: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        if list(self.keys) != sorted(self.keys):
            raise ValueError("keys must be in lexicographic order")
        if self.counts.shape != (len(self.keys), len(self.keys)):
            raise ValueError("counts shape does not match keys")

    @property
    def occurrences(self) -> dict[str, int]:
        return {k: int(n) for k, n in zip(self.keys, np.diag(self.counts))}

    def __len__(self):
        return len(self.keys)

    def __eq__(self, other):
        if not isinstance(other, CoocMatrix):
            return NotImplemented
        return self.keys == other.keys and np.array_equal(self.counts, other.counts)

    def count(self, a: str, b: str) -> int:
        return int(self.counts[self.keys.index(a), self.keys.index(b)])

    def restrict(self, keep: Iterable[str]) -> CoocMatrix:
        keep = set(keep)
        idx = [i for i, k in enumerate(self.keys) if k in keep]
        return CoocMatrix(tuple(self.keys[i] for i in idx), self.counts[np.ix_(idx, idx)].copy())


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    keys: tuple[str, ...]
    values: np.ndarray


def record_keys(
    records: Iterable[BibRecord],
    key_fn: Callable[[ParsedAddress], str],
    countries: dict[str, str] | None = None,
) -> list[list[str]]:
    """One key list per record, one entry per effective address (duplicates kept)."""
    return [[key_fn(a) for a in effective_addresses(r, countries)] for r in records]


def occurrences_from_keys(keysets: Iterable[Sequence[str]], counting: str = "record") -> Counter:
    _check_counting(counting)
    table = Counter()
    for keys in keysets:
        table.update(set(keys) if counting == "record" else keys)
    return table


def cooc_from_keys(keysets: Iterable[Sequence[str]], counting: str = "record") -> CoocMatrix:
    """Co-occurrence matrix from per-record key lists.

    Off-diagonal cells always count records. With ``counting="address"`` the
    diagonal counts every address instead of every record.
    """
    _check_counting(counting)
    keysets = [list(k) for k in keysets]
    keys = tuple(sorted({k for ks in keysets for k in ks}))
    index = {k: i for i, k in enumerate(keys)}
    counts = np.zeros((len(keys), len(keys)), dtype=np.int64)
    for ks in keysets:
        idx = sorted({index[k] for k in ks})
        if idx:
            counts[np.ix_(idx, idx)] += 1
    if counting == "address":
        occ = occurrences_from_keys(keysets, "address")
        for k, i in index.items():
            counts[i, i] = occ[k]
    return CoocMatrix(keys, counts)


def build_occurrences(records, key_fn, counting: str = "record", countries=None) -> Counter:
    return occurrences_from_keys(record_keys(records, key_fn, countries), counting)


def build_cooc(records, key_fn, counting: str = "record", countries=None) -> CoocMatrix:
    return cooc_from_keys(record_keys(records, key_fn, countries), counting)


def _check_counting(counting):
    if counting not in COUNTING_MODES:
        raise ValueError(f"counting must be one of {COUNTING_MODES}, got {counting!r}")


def apply_threshold(m: CoocMatrix, mode: str = "absolute", value: float = 1) -> CoocMatrix:
    """Keep keys whose occurrence reaches ``value`` (absolute) or
    ``value`` percent of the largest occurrence (percent)."""
    if value < 0:
        raise ValueError("threshold must be >= 0")
    occ = np.diag(m.counts)
    if mode == "absolute":
        cut = value
    elif mode == "percent":
        cut = value / 100.0 * (occ.max() if len(occ) else 0)
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    out = m.restrict(k for k, n in zip(m.keys, occ) if n >= cut)
    if len(m) and not len(out):
        warnings.warn(f"threshold {mode} {value} removed every key", EmptyResultWarning, stacklevel=2)
    return out


def cosine_normalize(m: CoocMatrix) -> SimilarityMatrix:
    """s_ij = c_ij / sqrt(n_i n_j); diagonal set to 1."""
    occ = np.diag(m.counts).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = m.counts / np.sqrt(np.outer(occ, occ))
    values[~np.isfinite(values)] = 0.0
    np.fill_diagonal(values, np.where(occ > 0, 1.0, 0.0))
    return SimilarityMatrix(m.keys, values)


def format_matrix(keys: Sequence[str], values: np.ndarray, fmt: str = "{:d}") -> str:
    out = io.StringIO()
    out.write("\t" + "\t".join(keys) + "\n")
    for k, row in zip(keys, values):
        out.write(k + "\t" + "\t".join(fmt.format(v) for v in row.tolist()) + "\n")
    return out.getvalue()


def write_matrix(m: CoocMatrix | SimilarityMatrix, path) -> None:
    if isinstance(m, CoocMatrix):
        text = format_matrix(m.keys, m.counts)
    else:
        text = format_matrix(m.keys, m.values, "{:.6f}")
    atomic_write(path, text)


def read_matrix(path) -> CoocMatrix:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    keys = tuple(lines[0].split("\t")[1:])
    rows = []
    for line in lines[1:]:
        cells = line.split("\t")
        rows.append([int(c) for c in cells[1:]])
    return CoocMatrix(keys, np.array(rows, dtype=np.int64).reshape(len(keys), len(keys)))
