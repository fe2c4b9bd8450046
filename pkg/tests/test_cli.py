"""Command-line driver behavior and end-to-end determinism."""

import json
import subprocess
import sys
import zipfile

import pytest

from heapfacts import synth
from heapfacts.cli import main


def run_cli(*argv) -> tuple[int, str, str]:
    proc = subprocess.run(
        [sys.executable, "-m", "heapfacts", *argv],
        capture_output=True, text=True,
    )
    return proc.returncode, proc.stdout, proc.stderr


@pytest.fixture
def fixture_dump(tmp_path):
    path = tmp_path / "d.hprof"
    path.write_bytes(synth.emit(synth.random_program(12, 20)))
    return path


def test_stats_on_empty_dump(tmp_path):
    path = tmp_path / "empty.hprof"
    path.write_bytes(synth.emit(synth.SynthProgram()))
    code, out, err = run_cli("stats", str(path))
    assert code == 0
    assert "HeapDump: 0" in out
    assert "objects: 0" in out
    assert err == ""


def test_stats_counts(fixture_dump):
    code, out, _err = run_cli("stats", str(fixture_dump))
    assert code == 0
    assert "HeapDump: 1" in out


def test_unknown_flag_exits_2(fixture_dump):
    code, _out, err = run_cli("stats", "--frobnicate", str(fixture_dump))
    assert code == 2
    assert "frobnicate" in err


def test_unknown_command_exits_2():
    assert run_cli("dance")[0] == 2


def test_missing_dump_exits_1(tmp_path):
    code, _out, err = run_cli("stats", str(tmp_path / "nope.hprof"))
    assert code == 1
    assert "error:" in err


def test_facts_end_to_end_deterministic(tmp_path, fixture_dump):
    sites = tmp_path / "sites.tsv"
    program = synth.random_program(12, 20)
    sites.write_text("".join(
        f"{sig}\t{typ}\t{line}\t{idx}\n"
        for sig, typ, line, idx in program.intent_sites))
    args = ("facts", str(fixture_dump), "--site-map", str(sites),
            "--sensitivity", "object:2:1")
    code_a, out_a, _ = run_cli(*args, "--out", str(tmp_path / "a"))
    code_b, out_b, _ = run_cli(*args, "--out", str(tmp_path / "b"))
    assert code_a == code_b == 0
    assert out_a.replace(str(tmp_path / "a"), "X") == \
        out_b.replace(str(tmp_path / "b"), "X")
    for name in ("ObjectFieldValue.csv", "StaticFieldValue.csv",
                 "ArrayContentsValue.csv", "CallGraphEdge.csv",
                 "Reachable.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("generated_at"), mb.pop("generated_at")
    assert ma == mb


def test_facts_bad_sensitivity_exits_2(fixture_dump, tmp_path):
    code, _out, err = run_cli(
        "facts", str(fixture_dump), "--sensitivity", "object:0:0",
        "--out", str(tmp_path / "o"))
    assert code == 2
    assert "sensitivity" in err


def test_classes_subcommand(tmp_path):
    p = synth.SynthProgram()
    p.add_class_data("gen.Dyn", None, b"\xca\xfe\xba\xbe" + bytes(8))
    dump = tmp_path / "d.hprof"
    dump.write_bytes(synth.emit(p))
    archive = tmp_path / "classes.zip"
    code, out, _err = run_cli("classes", str(dump), "--out", str(archive))
    assert code == 0
    assert "gen.Dyn" in out
    with zipfile.ZipFile(archive) as zf:
        assert zf.namelist() == ["loader_boot/gen/Dyn.class"]


def test_classes_malformed_capture_exits_1(tmp_path):
    p = synth.SynthProgram()
    p.add_class("instr.ClassData", fields=[("name", "object")])
    p.add_instance("instr.ClassData", {"name": None})
    dump = tmp_path / "bad.hprof"
    dump.write_bytes(synth.emit(p))
    code, _out, err = run_cli("classes", str(dump),
                              "--out", str(tmp_path / "a.zip"))
    assert code == 1
    assert "lacks field" in err


def test_recall_subcommand(tmp_path):
    ref = tmp_path / "ref.csv"
    obs = tmp_path / "obs.csv"
    ref.write_text("invocation,method\n<a.A: void m()>/1,<b.B: void n()>\n")
    obs.write_text(
        "invocation,method\n"
        "<a.A: void m()>/1,<b.B: void n()>\n"
        "<a.A: void m()>/2,<c.C: void o()>\n")
    code, out, _err = run_cli("recall", "--reference", str(ref),
                              "--observed", str(obs))
    assert code == 0
    assert "recall: 1/2 = 0.500000 (1/2)" in out
    assert "missing: <a.A: void m()>/- -> <c.C: void o()>" in out


def test_recall_exact_mode(tmp_path):
    ref = tmp_path / "ref.csv"
    obs = tmp_path / "obs.csv"
    ref.write_text("invocation,method\n<a.A: void m()>/9,<b.B: void n()>\n")
    obs.write_text("invocation,method\n<a.A: void m()>/1,<b.B: void n()>\n")
    code, out, _err = run_cli("recall", "--reference", str(ref),
                              "--observed", str(obs), "--exact")
    assert code == 0
    assert "recall: 0 = 0.000000 (0/2)" not in out  # sanity: one observed row
    assert "(0/1)" in out


def test_synth_subcommand_deterministic(tmp_path):
    a, b = tmp_path / "a.hprof", tmp_path / "b.hprof"
    assert run_cli("synth", "--seed", "3", "--out", str(a))[0] == 0
    assert run_cli("synth", "--seed", "3", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_provides_defaults(tmp_path, fixture_dump):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sensitivity": "type:1:1",
                               "out": str(tmp_path / "cfgout")}))
    code, _out, _err = run_cli("--config", str(cfg), "facts", str(fixture_dump))
    assert code == 0
    manifest = json.loads((tmp_path / "cfgout" / "manifest.json").read_text())
    assert manifest["config"]["sensitivity"] == "type:1:1"


def test_explicit_flag_overrides_config(tmp_path, fixture_dump):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sensitivity": "type:1:1"}))
    out_dir = tmp_path / "o"
    code, _out, _err = run_cli("--config", str(cfg), "facts", str(fixture_dump),
                               "--sensitivity", "insensitive",
                               "--out", str(out_dir))
    assert code == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["config"]["sensitivity"] == "insensitive"


def test_main_callable_in_process(tmp_path):
    path = tmp_path / "d.hprof"
    path.write_bytes(synth.emit(synth.SynthProgram()))
    assert main(["stats", str(path)]) == 0
