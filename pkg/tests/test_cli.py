import csv
import hashlib
import shutil
import subprocess
import sys

import pytest

from conftest import GOLDEN, SCOPUS, UNRESOLVABLE, WOS
from geosci.cli import PipelineConfig, ConfigError, main, read_config
from geosci.network import k_core
from geosci.records import BibRecord, RawAddress, load_corpus, save_corpus

STATS_LINE = (
    "records=20 authors=42 addresses=46 cities=36 institutions=37 "
    "city+postcode=38 institutions(unaggregated)=38"
)


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "corpus.jsonl"
    assert main(["ingest", str(WOS), "--out", str(path)]) == 0
    return path


def test_ingest_prints_stats(tmp_path, capsys):
    assert main(["ingest", "--format", "wos", str(WOS), "--out", str(tmp_path / "c.jsonl")]) == 0
    assert capsys.readouterr().out.strip() == STATS_LINE


def test_ingest_unknown_format(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["ingest", "--format", "bibtex", str(WOS), "--out", str(tmp_path / "c.jsonl")])
    assert exc.value.code == 2


def test_ingest_merges_wos_and_scopus(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert main(["ingest", str(WOS), str(SCOPUS), "--out", str(out)]) == 0
    records = load_corpus(out)
    assert len(records) == 24
    assert records[-1].record_id == "SCP-4"
    assert "ragged" in capsys.readouterr().err


def test_ingest_missing_file_is_fatal(tmp_path):
    assert main(["ingest", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "c.jsonl")]) == 2


def test_ingest_missing_scopus_column_is_fatal(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("Authors,Title\nx,y\n")
    assert main(["ingest", str(bad), "--out", str(tmp_path / "c.jsonl")]) == 2


def test_geocode_offline(corpus, tmp_path, capsys):
    out = tmp_path / "geo"
    assert main(["geocode", str(corpus), "--offline", "--out-dir", str(out)]) == 0
    assert "resolved 36 of 36 keys; 0 failed" in capsys.readouterr().out
    assert len((out / "cities.txt").read_text().splitlines()) == 36
    report = (out / "geocode-report.tsv").read_text().splitlines()
    assert len(report) == 37 and all("\tok\t" in line for line in report[1:])


def test_geocode_emit_request_only(corpus, tmp_path):
    out = tmp_path / "geo"
    assert main(["geocode", str(corpus), "--emit-request", "--out-dir", str(out)]) == 0
    assert (out / "cities.txt").exists()
    assert not (out / "geocode-report.tsv").exists()
    assert not (out / "geocache.tsv").exists()


def test_geocode_ingest_loop(tmp_path):
    corpus = tmp_path / "c.jsonl"
    save_corpus(
        [BibRecord("A", addresses=(RawAddress("Univ Iceland, Reykjavik, Iceland"), RawAddress(UNRESOLVABLE)))],
        corpus,
    )
    out = tmp_path / "geo"
    assert main(["geocode", str(corpus), "--emit-request", "--out-dir", str(out)]) == 0
    assert (out / "cities.txt").read_text() == "Douglas, UK\nReykjavik, Iceland\n"
    response = tmp_path / "geocoder.csv"
    response.write_text('name,latitude,longitude\n"Reykjavik, Iceland",64.1466,-21.9426\n')
    assert main(["geocode", str(corpus), "--ingest", str(response), "--out-dir", str(out)]) == 0
    report = (out / "geocode-report.tsv").read_text()
    assert "REYKJAVIK, ICELAND\tok\t64.1466\t-21.9426\tcache" in report
    assert "DOUGLAS, UK\tfailed" in report


def test_geocode_remote_stub(corpus, tmp_path, stub_geocoder, monkeypatch, capsys):
    monkeypatch.setenv("GEOSCI_GEOCODER_URL", stub_geocoder.url)
    out = tmp_path / "geo"
    args = ["geocode", str(corpus), "--remote", "--no-bundled-gazetteer", "--min-interval", "0", "--out-dir", str(out)]
    assert main(args) == 0
    assert len(stub_geocoder.requests) == 36
    assert "resolved 36 of 36 keys" in capsys.readouterr().out
    assert main(args) == 0
    assert len(stub_geocoder.requests) == 36


def test_remote_without_url(corpus, tmp_path, monkeypatch):
    monkeypatch.delenv("GEOSCI_GEOCODER_URL", raising=False)
    assert main(["geocode", str(corpus), "--remote", "--out-dir", str(tmp_path)]) == 2


def test_build_selected_exports(corpus, tmp_path):
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--export", "kml-earth,kml-maps,gps,pajek", "--out-dir", str(out)]) == 0
    manifest = (out / "run-manifest.txt").read_text().splitlines()
    names = [line.split("\t")[0] for line in manifest]
    assert {"cities.kml", "cities2.kml", "inp_gps.txt", "cities.paj"} <= set(names)
    assert set(names) - {"cities.kml", "cities2.kml", "inp_gps.txt", "cities.paj"} == {"transparent.png"}
    for line in manifest:
        name, digest = line.split("\t")
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert not (out / "cities.kmz").exists() and not (out / "matrix.txt").exists()


def test_build_kmz_without_kml(corpus, tmp_path):
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--export", "kmz", "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["cities.kmz", "run-manifest.txt"]


def test_build_k_core(corpus, tmp_path, fixture_network):
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--k-core", "4", "--export", "gps,matrix", "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader((out / "inp_gps.txt").open()))
    assert [r["name"] for r in rows] == k_core(fixture_network, 4).keys
    assert len(rows) == 5
    header = (out / "matrix.txt").read_text().splitlines()[0].split("\t")[1:]
    assert header == k_core(fixture_network, 4).keys


def test_build_empty_network_is_fatal(corpus, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--region=-10,-5,-30,-25", "--out-dir", str(out)]) == 2
    assert "empty" in capsys.readouterr().err
    assert main(["build", str(corpus), "--no-bundled-gazetteer", "--out-dir", str(out)]) == 2


def test_level_city_with_aggregate_is_rejected(corpus, tmp_path):
    assert main(["build", str(corpus), "--aggregate", "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        PipelineConfig(level="city", aggregate=True).validate()


def test_institution_level(corpus, tmp_path):
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--level", "inst", "--export", "matrix", "--out-dir", str(out)]) == 0
    keys = (out / "matrix.txt").read_text().splitlines()[0].split("\t")[1:]
    assert "CSIC, VALENCIA, E-46100, SPAIN" in keys and "CSIC, SEVILLA, E-41092, SPAIN" in keys
    args = ["build", str(corpus), "--level", "inst", "--aggregate", "--export", "matrix", "--out-dir", str(out)]
    assert main(args) == 0
    keys = (out / "matrix.txt").read_text().splitlines()[0].split("\t")[1:]
    assert "CSIC, VALENCIA, SPAIN" in keys and "CSIC, SEVILLA, SPAIN" in keys
    assert len(keys) == 37


def test_config_file_and_override(corpus, tmp_path):
    cfg = tmp_path / "geosci.conf"
    cfg.write_text("# pipeline settings\nlevel = inst\ncounting = address\nexport = matrix  # only the matrix\n")
    assert read_config(cfg) == {"level": "inst", "counting": "address", "export": ("matrix",)}
    out = tmp_path / "out"
    assert main(["build", str(corpus), "--config", str(cfg), "--level", "city", "--out-dir", str(out)]) == 0
    keys = (out / "matrix.txt").read_text().splitlines()[0].split("\t")[1:]
    assert "GRANADA, SPAIN" in keys
    granada = next(l for l in (out / "matrix.txt").read_text().splitlines() if l.startswith("GRANADA"))
    assert granada.split("\t")[1 + keys.index("GRANADA, SPAIN")] == "2"


def test_config_errors(tmp_path):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config(cfg)
    cfg.write_text("cosine = maybe\n")
    with pytest.raises(ConfigError):
        read_config(cfg)
    with pytest.raises(ConfigError):
        PipelineConfig(export=("pdf",)).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(coastline=str(tmp_path / "missing.net")).validate()


def test_net_and_analyze(corpus, tmp_path, capsys):
    out = tmp_path / "m.txt"
    assert main(["net", str(corpus), "--cosine", "--threshold-abs", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split("\t")[1:] == [
        "AMSTERDAM, NETHERLANDS", "ANTWERP, BELGIUM", "HEVERLEE, BELGIUM", "LOUVAIN, BELGIUM",
        "OOSTENDE, BELGIUM", "PHILADELPHIA, PA, USA", "UMEA, SWEDEN",
    ]
    assert lines[1].split("\t")[1] == "1.000000"
    capsys.readouterr()
    assert main(["analyze", str(corpus), "--cache-dir", str(tmp_path), "--report", "isolates,cores"]) == 0
    text = capsys.readouterr().out
    assert "isolates=3" in text
    assert "isolate\tSAO PAULO, BRAZIL\t1" in text
    assert "core\tXINXIANG, PEOPLES R CHINA\t4" in text


def test_golden_outputs(corpus, tmp_path):
    out = tmp_path / "out"
    coast = GOLDEN.parent.parent.parent / "src/geosci/data/eurcoast.net"
    assert main(["build", str(corpus), "--coastline", str(coast), "--out-dir", str(out)]) == 0
    for golden in sorted(GOLDEN.iterdir()):
        assert (out / golden.name).read_bytes() == golden.read_bytes(), golden.name


def test_deterministic_manifest(corpus, tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["build", str(corpus), "--out-dir", str(out)]) == 0
        runs.append((out / "run-manifest.txt").read_bytes())
    assert runs[0] == runs[1]


def test_console_script(tmp_path):
    exe = shutil.which("geosci")
    cmd = [exe] if exe else [sys.executable, "-m", "geosci.cli"]
    proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
