"""Materialize the output relations and the recovered-class archive.

Five relations are exported as sorted, RFC-4180-quoted CSV files with a
header row: ObjectFieldValue, StaticFieldValue, ArrayContentsValue,
CallGraphEdge, and Reachable.  In sensitive mode each relation carries
its context columns; dropping those columns and deduplicating yields
exactly the insensitive export for the same dump.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .abstraction import AbsKind, ObjAbstraction
from .codemodel import CodeModel
from .context import (
    ContextTuple, EnricherBindings, EnricherNames, SensitivityConfig,
    callsite_context, calling_context, class_name_matches, edges_from_edgectx,
    edges_from_traces, heap_context,
)
from .classfile import MalformedClassFile, parse_classfile
from .errors import EnricherShapeMismatch
from .heapgraph import HeapGraph, ObjKind, ObjRef, decode_string

RELATION_FILES = {
    "ObjectFieldValue": "ObjectFieldValue.csv",
    "StaticFieldValue": "StaticFieldValue.csv",
    "ArrayContentsValue": "ArrayContentsValue.csv",
    "CallGraphEdge": "CallGraphEdge.csv",
    "Reachable": "Reachable.csv",
}

_HEADERS_PLAIN = {
    "ObjectFieldValue": ("obj", "field", "value"),
    "StaticFieldValue": ("class", "field", "value"),
    "ArrayContentsValue": ("obj", "value"),
    "CallGraphEdge": ("invocation", "method"),
    "Reachable": ("method",),
}
_HEADERS_SENSITIVE = {
    "ObjectFieldValue": ("ctx", "obj", "field", "hctx", "value"),
    "StaticFieldValue": ("class", "field", "hctx", "value"),
    "ArrayContentsValue": ("hctx_obj", "obj", "hctx_val", "value"),
    "CallGraphEdge": ("callerCtx", "invocation", "calleeCtx", "method"),
    "Reachable": ("ctx", "method"),
}

CONTEXT_COLUMNS = frozenset(
    {"ctx", "hctx", "hctx_obj", "hctx_val", "callerCtx", "calleeCtx"}
)


@dataclass
class FactSet:
    sensitivity: SensitivityConfig
    rows: dict[str, set] = field(default_factory=dict)

    def headers(self, relation: str) -> tuple[str, ...]:
        table = _HEADERS_SENSITIVE if self.sensitivity.sensitive else _HEADERS_PLAIN
        return table[relation]


class _Contexts:
    """Context cells for heap objects, per the configured flavor."""

    def __init__(self, graph, table, bindings, cfg) -> None:
        self.graph = graph
        self.table = table
        self.bindings = bindings
        self.cfg = cfg
        self._cache: dict[tuple[int, int], str] = {}

    def padded(self, order: int) -> str:
        return ContextTuple.of((), order).render()

    def of_object(self, obj_id: int, order: int) -> str:
        key = (obj_id, order)
        cell = self._cache.get(key)
        if cell is not None:
            return cell
        cfg = self.cfg
        if cfg.flavor in ("object", "type"):
            cell = heap_context(obj_id, order, self.bindings, self.table, cfg).render()
        else:  # call-site: the allocating method's caller chain
            abstraction = self.table.get(obj_id)
            trace = self.graph.objects[obj_id].alloc_trace
            if trace is None or (
                abstraction is not None
                and abstraction.kind in (AbsKind.MERGED, AbsKind.STRING_IDENTITY)
            ):
                cell = self.padded(order)
            else:
                cell = callsite_context(trace.frames[1:], order).render()
        self._cache[key] = cell
        return cell


def build_fact_set(
    graph: HeapGraph,
    table: dict[int, ObjAbstraction],
    bindings: EnricherBindings,
    cfg: SensitivityConfig,
) -> FactSet:
    """Generate all relation rows from a resolved heap."""
    sens = cfg.sensitive
    ctxs = _Contexts(graph, table, bindings, cfg)
    rows: dict[str, set] = {name: set() for name in RELATION_FILES}

    def key_of(ref) -> "str | None":
        if isinstance(ref, ObjRef) and ref.target in table:
            return table[ref.target].key
        return None

    for obj in graph.objects.values():
        if obj.kind is ObjKind.INSTANCE:
            base = table[obj.obj_id].key
            for fname, value in obj.field_values:
                vkey = key_of(value)
                if vkey is None:
                    continue
                if sens:
                    rows["ObjectFieldValue"].add((
                        ctxs.of_object(obj.obj_id, cfg.n), base, fname,
                        ctxs.of_object(value.target, cfg.m), vkey,
                    ))
                else:
                    rows["ObjectFieldValue"].add((base, fname, vkey))
        elif obj.kind is ObjKind.OBJECT_ARRAY:
            base = table[obj.obj_id].key
            for value in obj.elements:
                vkey = key_of(value)
                if vkey is None:
                    continue
                if sens:
                    rows["ArrayContentsValue"].add((
                        ctxs.of_object(obj.obj_id, cfg.m), base,
                        ctxs.of_object(value.target, cfg.m), vkey,
                    ))
                else:
                    rows["ArrayContentsValue"].add((base, vkey))

    for info in graph.classes.values():
        for fname, value in info.static_fields:
            vkey = key_of(value)
            if vkey is None:
                continue
            if sens:
                rows["StaticFieldValue"].add((
                    info.fq_name, fname, ctxs.of_object(value.target, cfg.m), vkey,
                ))
            else:
                rows["StaticFieldValue"].add((info.fq_name, fname, vkey))

    # call-graph edges and reachable methods
    observations = edges_from_edgectx(bindings, graph)
    if not sens:
        for edge in edges_from_traces(graph):
            rows["CallGraphEdge"].add((edge.invocation, edge.callee_method))
            rows["Reachable"].add((edge.callee_method,))
        for obs in observations:
            line = "-" if obs.caller_line is None else str(obs.caller_line)
            rows["CallGraphEdge"].add((
                f"{obs.caller_method}/{line}", obs.callee_method))
            rows["Reachable"].add((obs.callee_method,))
        for obj in graph.objects.values():
            if obj.alloc_trace:
                for frame in obj.alloc_trace.frames:
                    rows["Reachable"].add((frame.signature,))
        return FactSet(cfg, rows)

    call_site = cfg.flavor == "call-site"
    padded_n = ctxs.padded(cfg.n)

    def frames_ctx(frames) -> str:
        return callsite_context(frames, cfg.n).render() if call_site else padded_n

    seen_traces: set[tuple] = set()
    for obj in graph.objects.values():
        trace = obj.alloc_trace
        if trace is None or trace.frames in seen_traces:
            continue
        seen_traces.add(trace.frames)
        frames = trace.frames
        for i, frame in enumerate(frames):
            rows["Reachable"].add((frames_ctx(frames[i + 1 :]), frame.signature))
            if i + 1 < len(frames):
                caller = frames[i + 1]
                line = "-" if caller.line is None else str(caller.line)
                rows["CallGraphEdge"].add((
                    frames_ctx(frames[i + 2 :]),
                    f"{caller.signature}/{line}",
                    frames_ctx(frames[i + 1 :]),
                    frame.signature,
                ))
    for obs in observations:
        if call_site:
            caller_ctx = callsite_context(obs.frames[3:], cfg.n).render()
            callee_ctx = callsite_context(obs.frames[2:], cfg.n).render()
        else:
            caller_ctx = calling_context(
                obs.caller_ctx_id, cfg.n, bindings, table, cfg).render()
            callee_ctx = calling_context(
                obs.callee_ctx_id, cfg.n, bindings, table, cfg).render()
        line = "-" if obs.caller_line is None else str(obs.caller_line)
        rows["CallGraphEdge"].add((
            caller_ctx, f"{obs.caller_method}/{line}", callee_ctx, obs.callee_method))
        rows["Reachable"].add((callee_ctx, obs.callee_method))
    return FactSet(cfg, rows)


def export_facts(fact_set: FactSet, out_dir, *, dump_digest: str = "",
                 config_desc: "dict | None" = None,
                 warning_count: int = 0) -> dict:
    """Write one sorted CSV per relation plus ``manifest.json``.

    Returns the manifest dictionary.  Output is byte-stable for equal
    inputs, except for the manifest's ``generated_at`` field.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    row_counts = {}
    for relation, filename in RELATION_FILES.items():
        rows = sorted(fact_set.rows.get(relation, ()))
        row_counts[relation] = len(rows)
        with open(out / filename, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fact_set.headers(relation))
            writer.writerows(rows)
    manifest = {
        "tool": "heapfacts",
        "version": __version__,
        "config": config_desc or {},
        "dump_sha256": dump_digest,
        "warning_count": warning_count,
        "files": dict(RELATION_FILES),
        "row_counts": row_counts,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def digest_of(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# -- recovered dynamically-loaded classes ------------------------------


@dataclass(frozen=True)
class ClassData:
    fq_name: str
    loader_key: str
    bytecode: bytes


def _sanitize(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.@-]", "_", text)


def collect_class_data(graph: HeapGraph, names: EnricherNames,
                       warnings: "list | None" = None) -> list[ClassData]:
    """Decode class-capture instances into (name, loader, bytecode) triples."""
    candidates = sorted(
        (o for o in graph.objects.values()
         if o.kind is ObjKind.INSTANCE
         and class_name_matches(o.class_name, names.class_data)),
        key=lambda o: o.obj_id,
    )
    if not candidates:
        return []
    loader_rank: dict[int, int] = {}
    for obj in candidates:
        loader = dict(obj.field_values).get("loader")
        if isinstance(loader, ObjRef) and loader.target not in loader_rank:
            loader_rank[loader.target] = len(loader_rank)

    out: list[ClassData] = []
    seen: set[tuple[str, str]] = set()
    for obj in candidates:
        values = dict(obj.field_values)
        for fname in ("name", "loader", "bytecode"):
            if fname not in values:
                raise EnricherShapeMismatch(
                    f"{obj.class_name} 0x{obj.obj_id:x} lacks field {fname!r}")
        name_ref = values["name"]
        if not isinstance(name_ref, ObjRef):
            raise EnricherShapeMismatch(
                f"class-capture 0x{obj.obj_id:x} has no name string")
        name = decode_string(graph.objects.get(name_ref.target), graph) \
            if name_ref.target in graph.objects else None
        if name is None:
            raise EnricherShapeMismatch(
                f"class-capture 0x{obj.obj_id:x} name does not decode")
        code_ref = values["bytecode"]
        code_obj = graph.objects.get(code_ref.target) \
            if isinstance(code_ref, ObjRef) else None
        if code_obj is None or code_obj.prim_type != "byte":
            raise EnricherShapeMismatch(
                f"class-capture 0x{obj.obj_id:x} bytecode is not a byte array")
        loader = values["loader"]
        if isinstance(loader, ObjRef):
            loader_obj = graph.objects[loader.target]
            loader_key = f"{loader_obj.class_name}@{loader_rank[loader.target]}"
        else:
            loader_key = "boot"
        bytecode = code_obj.prim_data
        if warnings is not None and not bytecode.startswith(b"\xca\xfe\xba\xbe"):
            warnings.append(
                f"recovered class {name} does not start with class-file magic")
        entry = ClassData(name.replace("/", "."), loader_key, bytecode)
        dedup_key = (entry.fq_name, entry.loader_key)
        if dedup_key in seen:
            if warnings is not None:
                warnings.append(f"duplicate recovered class {dedup_key}; first kept")
            continue
        seen.add(dedup_key)
        out.append(entry)
    return sorted(out, key=lambda c: (c.fq_name, c.loader_key))


def extract_class_archive(graph: HeapGraph, names: EnricherNames,
                          out_path, warnings: "list | None" = None) -> list[ClassData]:
    """Write recovered classes to a deterministic zip archive.

    Entries are stored uncompressed under ``loader_<key>/<fq/name>.class``
    with fixed timestamps, sorted by path.
    """
    entries = collect_class_data(graph, names, warnings)
    out_path = Path(out_path)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(out_path, "w", zipfile.ZIP_STORED) as zf:
        for entry in entries:
            arcname = (
                f"loader_{_sanitize(entry.loader_key)}/"
                f"{entry.fq_name.replace('.', '/')}.class"
            )
            info = zipfile.ZipInfo(arcname, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, entry.bytecode)
    return entries


def merged_code_inputs(code: CodeModel, classes: list[ClassData]) -> CodeModel:
    """Fold recovered bytecode into the code model; static inputs win."""
    if not classes:
        return code
    extra = CodeModel(source="recovered-classes")
    for entry in classes:
        try:
            for meta in parse_classfile(entry.bytecode):
                if not extra.add_method(meta):
                    extra.warnings.append(
                        f"{entry.fq_name}: duplicate method {meta.signature_id}")
        except MalformedClassFile as exc:
            extra.warnings.append(f"recovered class {entry.fq_name}: {exc}")
    return code.merged_with(extra)
