import csv
import json
import subprocess
import sys

import pytest

from hiddentime.cli import main
from hiddentime.lattice import build_chain


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_epr_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "epr.csv"
    summary = tmp_path / "summary.csv"
    code = main(["epr", "--qa", "0", "--qb", "0", "--pairs", "20000", "--seed", "42", "--out", str(out),
                 "--summary", str(summary), "--workers", "1"])
    assert code == 0
    data = rows(out)
    assert len(data) == 20000
    assert set(data[0]) == {"trial", "qa_rad", "qb_rad", "outcome_a", "outcome_b", "furry_angle"}
    stats = {r["statistic"]: r for r in rows(summary)}
    assert float(stats["yield_normalized"]["value"]) == pytest.approx(1.0, abs=0.03)
    text = capsys.readouterr().out
    assert "seed = 42" in text and "yield_normalized" in text


def test_printed_config_reproduces_output(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert main(["furry", "--qa", "pi/8", "--qb", "0", "--pairs", "3000", "--seed", "5", "--out", str(out),
                 "--workers", "1"]) == 0
    printed = capsys.readouterr().out
    ini = printed.split("# resolved configuration\n", 1)[1].split("statistic", 1)[0]
    cfg = tmp_path / "again.ini"
    cfg.write_text(ini.replace(str(out), str(tmp_path / "b.csv")))
    assert main(["furry", "--config", str(cfg), "--workers", "1"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_clock_readings(tmp_path, capsys):
    out = tmp_path / "clock.csv"
    assert main(["clock", "--lengths", "10,20,40", "--laser-period", "1", "--seed", "1", "--out", str(out)]) == 0
    data = rows(out)
    assert list(data[0]) == ["distance_ticks", "laser_period", "reading", "seed"]
    assert [int(r["reading"]) for r in data] == [10, 20, 40]


def test_clock_relay_flag(tmp_path):
    out = tmp_path / "clock.csv"
    assert main(["clock", "--lengths", "8", "--relay-detector", "4", "--seed", "1", "--out", str(out)]) == 0
    assert rows(out)[0]["reading"] == "8"


def test_trace_flag(tmp_path):
    trace = tmp_path / "trace.jsonl"
    assert main(["chsh", "--pairs", "200", "--seed", "3", "--switching", "random", "--trace", str(trace),
                 "--workers", "1"]) == 0
    first = json.loads(trace.read_text().splitlines()[0])
    assert {"tick", "kind", "transaction", "edge_from", "edge_to", "amp_re", "amp_im"} <= set(first)


def test_lhv_and_doubleslit(tmp_path, capsys):
    assert main(["lhv", "--pairs", "20000", "--seed", "2"]) == 0
    assert "S " in capsys.readouterr().out
    out = tmp_path / "slit.csv"
    assert main(["doubleslit", "--trials", "5000", "--seed", "2", "--out", str(out)]) == 0
    data = rows(out)
    assert len(data) == 25
    assert sum(int(r["hits"]) for r in data) == 5000


def test_validation_exit_codes(tmp_path, capsys):
    assert main(["epr", "--qa", "0"]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["chsh", "--a", "0,1,2", "--seed", "1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["epr", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["teleport"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("no header\n")
    assert main(["epr", "--config", str(bad)]) == 2


def test_lattice_file_without_annotation(tmp_path):
    path = tmp_path / "chain.lat"
    build_chain(4).save(path)
    assert main(["epr", "--lattice", str(path), "--seed", "1", "--pairs", "10"]) == 2
    assert main(["doubleslit", "--lattice", str(path), "--seed", "1"]) == 2


def test_runtime_error_exit_code(tmp_path):
    out = tmp_path / "missing_dir" / "x.csv"
    assert main(["epr", "--seed", "1", "--pairs", "10", "--out", str(out), "--workers", "1"]) == 3


def test_verify_subset(capsys):
    assert main(["verify", "--seed", "7", "--only", "5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion 5" in out


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hiddentime.cli", "clock", "--lengths", "5", "--seed", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "reading[5]" in proc.stdout
