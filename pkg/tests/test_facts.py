"""Relation export, coherence, archives, and recovered-code merging."""

import csv
import json
import zipfile

import pytest

from heapfacts import facts, synth
from heapfacts.abstraction import AbstractionConfig, abstraction_table
from heapfacts.codemodel import CodeModel
from heapfacts.context import SensitivityConfig, recognize_enrichers
from heapfacts.errors import EnricherShapeMismatch

from classfile_builder import Code, ConstantPool, assemble_class
from fact_walker import expected_insensitive_rows
from pipeline import NAMES, graph_of, intent_model, run_facts, site_model

INSENS = SensitivityConfig()


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestRows:
    def test_object_field_direct_transcription(self, tmp_path):
        p = synth.SynthProgram()
        p.add_class("c.D")
        p.add_class("c.C", fields=[("f", "object")])
        t1 = p.add_trace([synth.frame("m.M", "mk", "()V", "M.java", 5)])
        t2 = p.add_trace([synth.frame("m.M", "mk", "()V", "M.java", 6)])
        o2 = p.add_instance("c.D", trace=t2)
        o1 = p.add_instance("c.C", {"f": o2}, trace=t1)
        code = site_model(tmp_path, [
            ("<m.M: void mk()>", "c.C", 5, 0), ("<m.M: void mk()>", "c.D", 6, 0)])
        fact_set, _g, _t = run_facts(p, code, INSENS)
        assert fact_set.rows["ObjectFieldValue"] == {
            ("<m.M: void mk()>/new c.C/0", "f", "<m.M: void mk()>/new c.D/0")}

    def test_array_contents_merged(self):
        p = synth.SynthProgram()
        p.add_class("c.C")
        p.add_class("c.C[]")
        o2 = p.add_instance("c.C")
        o3 = p.add_instance("c.C")
        p.add_object_array("c.C[]", [o2, o3, o2])
        fact_set, _g, table = run_facts(p, CodeModel(), INSENS)
        arr_key = "<dynamic c.C[] (unknown site)>"
        obj_key = "<dynamic c.C (unknown site)>"
        # both objects share one dummy abstraction: rows merge to a single pair
        assert fact_set.rows["ArrayContentsValue"] == {(arr_key, obj_key)}

    def test_null_fields_omitted(self):
        p = synth.SynthProgram()
        p.add_class("c.C", fields=[("f", "object")])
        p.add_instance("c.C", {"f": None})
        fact_set, _g, _t = run_facts(p, CodeModel(), INSENS)
        assert fact_set.rows["ObjectFieldValue"] == set()

    def test_static_field_rows(self):
        p = synth.SynthProgram()
        p.add_class("c.D")
        target = p.add_instance("c.D")
        p.add_class("c.C", statics=[("S", "object", target)])
        fact_set, _g, _t = run_facts(p, CodeModel(), INSENS)
        assert fact_set.rows["StaticFieldValue"] == {
            ("c.C", "S", "<dynamic c.D (unknown site)>")}

    def test_dangling_values_skipped(self):
        # a field whose target id never resolves produces no row
        import struct

        p = synth.SynthProgram()
        p.add_class("c.C", fields=[("f", "object")])
        o2 = p.add_instance("c.C")
        p.add_instance("c.C", {"f": o2})
        data = synth.emit(p)
        patched = data.replace(
            struct.pack(">I", 8) + struct.pack(">Q", o2),
            struct.pack(">I", 8) + struct.pack(">Q", 0xFEED))
        from heapfacts import heapgraph, hprof

        graph = heapgraph.build_heap(hprof.parse_dump(patched))
        table = abstraction_table(graph, CodeModel(), AbstractionConfig())
        fact_set = facts.build_fact_set(
            graph, table, recognize_enrichers(graph, NAMES), INSENS)
        assert fact_set.rows["ObjectFieldValue"] == set()

    @pytest.mark.parametrize("seed", [1, 23, 456])
    def test_randomized_export_matches_straight_line_walker(self, tmp_path, seed):
        p = synth.random_program(seed, 25, with_enrichers=False)
        code = intent_model(tmp_path, p)
        fact_set, _g, _t = run_facts(p, code, INSENS)
        assert fact_set.rows == expected_insensitive_rows(p)


class TestExport:
    def test_empty_graph_writes_headers_only(self, tmp_path):
        fact_set, _g, _t = run_facts(synth.SynthProgram(), CodeModel(), INSENS)
        facts.export_facts(fact_set, tmp_path)
        for name, filename in facts.RELATION_FILES.items():
            header, rows = read_csv(tmp_path / filename)
            assert rows == []
            assert header == list(fact_set.headers(name))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["row_counts"]["CallGraphEdge"] == 0

    def test_export_deterministic_except_timestamp(self, tmp_path):
        p = synth.random_program(9, 20)
        code = intent_model(tmp_path, p)
        fact_set, _g, _t = run_facts(p, code, SensitivityConfig("object", 2, 1))
        facts.export_facts(fact_set, tmp_path / "a", dump_digest="d")
        facts.export_facts(fact_set, tmp_path / "b", dump_digest="d")
        for filename in facts.RELATION_FILES.values():
            assert (tmp_path / "a" / filename).read_bytes() == \
                (tmp_path / "b" / filename).read_bytes()
        ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
        ma.pop("generated_at"), mb.pop("generated_at")
        assert ma == mb

    def test_rfc4180_quoting(self, tmp_path):
        p = synth.SynthProgram()
        p.add_class("c.C", fields=[("f", "object")])
        sid = p.add_string('tricky, "quoted"')
        p.add_instance("c.C", {"f": sid})
        acfg = AbstractionConfig(distinguish_strings_by_content=True)
        fact_set, _g, _t = run_facts(p, CodeModel(), INSENS, acfg)
        facts.export_facts(fact_set, tmp_path)
        raw = (tmp_path / "ObjectFieldValue.csv").read_text()
        assert '"<string tricky, ""quoted"">"' in raw
        _header, rows = read_csv(tmp_path / "ObjectFieldValue.csv")
        assert rows[0][2] == '<string tricky, "quoted">'

    def test_rows_sorted(self, tmp_path):
        p = synth.random_program(77, 30)
        fact_set, _g, _t = run_facts(p, CodeModel(), INSENS)
        facts.export_facts(fact_set, tmp_path)
        for filename in facts.RELATION_FILES.values():
            _header, rows = read_csv(tmp_path / filename)
            assert rows == sorted(rows)

    def test_abstraction_closure(self, tmp_path):
        p = synth.random_program(5, 30)
        code = intent_model(tmp_path, p)
        fact_set, _g, table = run_facts(p, code, INSENS)
        keys = {a.key for a in table.values()}
        for row in fact_set.rows["ObjectFieldValue"]:
            assert row[0] in keys and row[2] in keys
        for row in fact_set.rows["ArrayContentsValue"]:
            assert set(row) <= keys


class TestCoherence:
    @pytest.mark.parametrize("spec", ["object:2:1", "type:1:1", "call-site:2:2"])
    @pytest.mark.parametrize("seed", [4, 42])
    def test_dropping_context_columns_gives_insensitive_export(
            self, tmp_path, spec, seed):
        p = synth.random_program(seed, 25)
        code = intent_model(tmp_path, p)
        sens_set, _g, _t = run_facts(p, code, SensitivityConfig.parse(spec))
        flat_set, _g2, _t2 = run_facts(p, code, INSENS)
        for relation in facts.RELATION_FILES:
            sens_headers = sens_set.headers(relation)
            keep = [i for i, h in enumerate(sens_headers)
                    if h not in facts.CONTEXT_COLUMNS]
            projected = {
                tuple(row[i] for i in keep) for row in sens_set.rows[relation]
            }
            assert projected == flat_set.rows[relation], relation


class TestClassArchive:
    def test_unenriched_dump_empty_archive(self, tmp_path):
        graph = graph_of(synth.SynthProgram())
        out = tmp_path / "classes.zip"
        entries = facts.extract_class_archive(graph, NAMES, out)
        assert entries == []
        with zipfile.ZipFile(out) as zf:
            assert zf.namelist() == []

    def test_bytecode_round_trips_byte_identical(self, tmp_path):
        payload = b"\xca\xfe\xba\xbe" + bytes(range(12))
        p = synth.SynthProgram()
        p.add_class_data("gen.Dyn", None, payload)
        graph = graph_of(p)
        out = tmp_path / "classes.zip"
        (entry,) = facts.extract_class_archive(graph, NAMES, out)
        assert entry.bytecode == payload
        with zipfile.ZipFile(out) as zf:
            assert zf.read("loader_boot/gen/Dyn.class") == payload

    def test_two_loaders_two_entries(self, tmp_path):
        payload_a = b"\xca\xfe\xba\xbe" + b"A" * 8
        payload_b = b"\xca\xfe\xba\xbe" + b"B" * 8
        p = synth.SynthProgram()
        p.add_class("l.Loader")
        l1, l2 = p.add_instance("l.Loader"), p.add_instance("l.Loader")
        p.add_class_data("gen.Dyn", l1, payload_a)
        p.add_class_data("gen.Dyn", l2, payload_b)
        graph = graph_of(p)
        out = tmp_path / "classes.zip"
        entries = facts.extract_class_archive(graph, NAMES, out)
        assert len(entries) == 2
        assert {e.loader_key for e in entries} == {"l.Loader@0", "l.Loader@1"}
        with zipfile.ZipFile(out) as zf:
            assert sorted(zf.namelist()) == [
                "loader_l.Loader@0/gen/Dyn.class",
                "loader_l.Loader@1/gen/Dyn.class",
            ]

    def test_archive_bytes_deterministic(self, tmp_path):
        p = synth.SynthProgram()
        p.add_class_data("gen.A", None, b"\xca\xfe\xba\xbe0000")
        p.add_class_data("gen.B", None, b"\xca\xfe\xba\xbe1111")
        graph = graph_of(p)
        facts.extract_class_archive(graph, NAMES, tmp_path / "a.zip")
        facts.extract_class_archive(graph, NAMES, tmp_path / "b.zip")
        assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()

    def test_malformed_class_data_raises(self):
        p = synth.SynthProgram()
        p.add_class("instr.ClassData", fields=[("name", "object")])
        p.add_instance("instr.ClassData", {"name": None})
        with pytest.raises(EnricherShapeMismatch):
            facts.collect_class_data(graph_of(p), NAMES)


def real_classfile() -> bytes:
    cp = ConstantPool()
    code = Code(cp)
    code.new("dyn/Made")
    code.pop()
    code.vreturn()
    return assemble_class(cp, "dyn/Gen", [("go", "()V", code, [(0, 21)])])


class TestMergedCodeInputs:
    def test_empty_class_list_unchanged(self):
        model = CodeModel()
        assert facts.merged_code_inputs(model, []) is model

    def test_recovered_class_adds_sites(self):
        entry = facts.ClassData("dyn.Gen", "boot", real_classfile())
        merged = facts.merged_code_inputs(CodeModel(), [entry])
        meta = merged.lookup("dyn.Gen", "go", "()V")
        assert meta is not None
        assert meta.alloc_instructions[0].allocated_type == "dyn.Made"

    def test_collision_keeps_static_input(self, tmp_path):
        static = site_model(
            tmp_path, [("<dyn.Gen: void go()>", "static.T", 3, 0)])
        entry = facts.ClassData("dyn.Gen", "boot", real_classfile())
        merged = facts.merged_code_inputs(static, [entry])
        meta = merged.lookup("dyn.Gen", "go", "()V")
        assert meta.alloc_instructions[0].allocated_type == "static.T"
        assert any("duplicate" in w for w in merged.warnings)

    def test_unparseable_bytecode_warns(self):
        entry = facts.ClassData("bad.C", "boot", b"\xca\xfe\xba\xbejunk")
        merged = facts.merged_code_inputs(CodeModel(), [entry])
        assert any("bad.C" in w for w in merged.warnings)
