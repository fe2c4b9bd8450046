"""Resolve raw dump records into a navigable concrete heap graph.

Second pass over the decoded records (forward references between
LoadClass and class-dump sub-records are legal, so this cannot happen
during the byte scan).  The result is immutable in spirit: nothing here
mutates it after :func:`build_heap` returns, and queries are read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import _kernel, hprof
from ._kernel import TYPE_SIZES
from .names import method_signature, normalize_class_name

_TYPE_NAMES = {
    2: "object", 4: "boolean", 5: "char", 6: "float",
    7: "double", 8: "byte", 9: "short", 10: "int", 11: "long",
}
_TYPE_CODES = {name: code for code, name in _TYPE_NAMES.items()}

UNKNOWN_CLASS = "<unknown-class>"


class ObjKind(enum.Enum):
    INSTANCE = "instance"
    OBJECT_ARRAY = "object-array"
    PRIMITIVE_ARRAY = "primitive-array"
    CLASS = "class-object"


@dataclass(frozen=True)
class ObjRef:
    """A resolved reference edge to another heap object."""

    target: int


@dataclass(frozen=True)
class Dangling:
    """A reference whose target id is absent from the dump."""

    target: int


@dataclass(frozen=True)
class FrameView:
    class_name: str
    method_name: str
    method_descriptor: str
    source_file: "str | None"
    line: "int | None"

    @property
    def signature(self) -> str:
        return method_signature(self.class_name, self.method_name,
                                self.method_descriptor)


@dataclass(frozen=True)
class StackTraceView:
    """Allocation stack, innermost (allocating) frame first."""

    frames: tuple[FrameView, ...]


@dataclass
class ClassInfo:
    class_obj_id: int
    fq_name: str
    loader_id: int
    super_ref: "int | None"
    static_fields: tuple  # ((name, value), ...)
    instance_field_layout: tuple  # ((name, type_name), ...)


@dataclass
class ConcreteObject:
    obj_id: int
    kind: ObjKind
    class_ref: int
    class_name: str
    field_values: tuple = ()      # instances: ((name, value), ...)
    elements: tuple = ()          # object arrays
    prim_type: "str | None" = None
    prim_data: "bytes | None" = None
    alloc_trace: "StackTraceView | None" = None


@dataclass
class HeapGraph:
    id_size: int
    objects: dict[int, ConcreteObject] = field(default_factory=dict)
    classes: dict[int, ClassInfo] = field(default_factory=dict)
    strings_by_content: dict[str, list[int]] = field(default_factory=dict)
    gc_roots: list[int] = field(default_factory=list)
    warnings: list[hprof.ParseWarning] = field(default_factory=list)

    def class_named(self, fq_name: str) -> "ClassInfo | None":
        for info in self.classes.values():
            if info.fq_name == fq_name:
                return info
        return None


def _normalize_line(raw: int) -> "int | None":
    # 0 = unavailable; negative = unknown / compiled / native
    return raw if raw > 0 else None


def build_heap(dump: hprof.RawDump) -> HeapGraph:
    graph = HeapGraph(dump.header.id_size, warnings=list(dump.warnings))
    warn = graph.warnings.append
    strings = dump.strings

    load_by_class_id: dict[int, hprof.LoadClassRecord] = {}
    load_by_serial: dict[int, hprof.LoadClassRecord] = {}
    frames: dict[int, hprof.StackFrameRecord] = {}
    traces: dict[int, hprof.StackTraceRecord] = {}
    subrecords = []
    for rec in dump.records:
        if isinstance(rec, hprof.LoadClassRecord):
            load_by_class_id[rec.class_obj_id] = rec
            load_by_serial[rec.serial] = rec
        elif isinstance(rec, hprof.StackFrameRecord):
            frames[rec.frame_id] = rec
        elif isinstance(rec, hprof.StackTraceRecord):
            traces[rec.trace_serial] = rec
        elif isinstance(rec, hprof.HeapRecord):
            subrecords.extend(rec.subrecords)

    def class_name_of(class_obj_id: int) -> str:
        load = load_by_class_id.get(class_obj_id)
        if load is None or load.name_id not in strings:
            return UNKNOWN_CLASS
        return normalize_class_name(strings[load.name_id])

    def field_name(name_id: int) -> str:
        return strings.get(name_id, f"field_0x{name_id:x}")

    # classes first: instance decoding needs the full layout table
    for sub in subrecords:
        if sub[0] != "class":
            continue
        _, class_id, _trace, super_id, loader_id, statics, layout = sub
        fq = class_name_of(class_id)
        if fq == UNKNOWN_CLASS:
            fq = f"<unknown-class-0x{class_id:x}>"
            warn(hprof.ParseWarning(0, f"class 0x{class_id:x} has no load-class record"))
        static_fields = tuple(
            (field_name(nid), ObjRef(v) if t == 2 and v else (None if t == 2 else v))
            for nid, t, v in statics
        )
        graph.classes[class_id] = ClassInfo(
            class_id, fq, loader_id, super_id or None, static_fields,
            tuple((field_name(nid), _TYPE_NAMES.get(t, f"type{t}")) for nid, t in layout),
        )
        graph.objects[class_id] = ConcreteObject(
            class_id, ObjKind.CLASS, class_id, fq,
        )

    # super chains must be walkable: cut cycles and flag dangling refs
    for info in graph.classes.values():
        seen = {info.class_obj_id}
        cur = info
        while cur.super_ref is not None:
            nxt = graph.classes.get(cur.super_ref)
            if nxt is None:
                warn(hprof.ParseWarning(
                    0, f"class {cur.fq_name} has dangling super 0x{cur.super_ref:x}"))
                cur.super_ref = None
                break
            if nxt.class_obj_id in seen:
                warn(hprof.ParseWarning(0, f"superclass cycle at {nxt.fq_name}"))
                cur.super_ref = None
                break
            seen.add(nxt.class_obj_id)
            cur = nxt

    # per-class decode plan: field names, packed type codes, total size
    layout_cache: dict[int, tuple[tuple, bytes, int]] = {}

    def full_layout(class_id: int) -> tuple[tuple, bytes, int]:
        """Own fields first, then the super chain, per the dump format."""
        cached = layout_cache.get(class_id)
        if cached is not None:
            return cached
        fields_ = []
        cur = graph.classes.get(class_id)
        while cur is not None:
            fields_.extend(cur.instance_field_layout)
            cur = graph.classes.get(cur.super_ref) if cur.super_ref else None
        codes = bytes(_TYPE_CODES.get(t, 2) for _n, t in fields_)
        total = sum(
            dump.header.id_size if c == 2 else TYPE_SIZES[c] for c in codes
        )
        plan = (tuple(fields_), codes, total)
        layout_cache[class_id] = plan
        return plan

    trace_cache: dict[int, "StackTraceView | None"] = {0: None}

    def trace_view(serial: int) -> "StackTraceView | None":
        if serial in trace_cache:
            return trace_cache[serial]
        rec = traces.get(serial)
        view = None
        if rec is None:
            warn(hprof.ParseWarning(0, f"unresolved stack trace serial {serial}"))
        else:
            out = []
            for fid in rec.frame_ids:
                fr = frames.get(fid)
                if fr is None:
                    warn(hprof.ParseWarning(0, f"unresolved stack frame 0x{fid:x}"))
                    continue
                load = load_by_serial.get(fr.class_serial)
                cls = (
                    normalize_class_name(strings.get(load.name_id, UNKNOWN_CLASS))
                    if load else UNKNOWN_CLASS
                )
                out.append(FrameView(
                    cls,
                    strings.get(fr.method_name_id, f"method_0x{fr.method_name_id:x}"),
                    strings.get(fr.method_sig_id, "()V"),
                    strings.get(fr.source_file_id) if fr.source_file_id else None,
                    _normalize_line(fr.line),
                ))
            if out:
                view = StackTraceView(tuple(out))
        trace_cache[serial] = view
        return view

    id_size = dump.header.id_size
    for sub in subrecords:
        kind = sub[0]
        if kind == "instance":
            _, obj_id, trace, class_id, raw = sub
            fields_, codes, total = full_layout(class_id)
            if class_id not in graph.classes:
                warn(hprof.ParseWarning(
                    0, f"object 0x{obj_id:x} has unknown class 0x{class_id:x}"))
                cname = UNKNOWN_CLASS
            else:
                cname = graph.classes[class_id].fq_name
            if len(raw) != total and class_id in graph.classes:
                warn(hprof.ParseWarning(
                    0,
                    f"object 0x{obj_id:x}: field bytes ({len(raw)}) do not match "
                    f"declared layout ({total})"))
            if len(raw) < total:
                # decode only the complete prefix, never mis-align
                cut = 0
                size_at = []
                for c in codes:
                    step = id_size if c == 2 else TYPE_SIZES[c]
                    if cut + step > len(raw):
                        break
                    size_at.append(c)
                    cut += step
                codes = bytes(size_at)
                fields_ = fields_[: len(codes)]
                raw = raw[:cut]
            decoded = _kernel.decode_values(raw, codes, id_size)
            values = tuple(
                (fname, (ObjRef(val) if val else None) if code == 2 else val)
                for ((fname, _t), code, val) in zip(fields_, codes, decoded)
            )
            graph.objects[obj_id] = ConcreteObject(
                obj_id, ObjKind.INSTANCE, class_id, cname,
                field_values=values, alloc_trace=trace_view(trace),
            )
        elif kind == "objarray":
            _, obj_id, trace, array_class, elems = sub
            cname = class_name_of(array_class)
            if cname == UNKNOWN_CLASS:
                warn(hprof.ParseWarning(
                    0, f"array 0x{obj_id:x} has unknown class 0x{array_class:x}"))
            graph.objects[obj_id] = ConcreteObject(
                obj_id, ObjKind.OBJECT_ARRAY, array_class, cname,
                elements=tuple(ObjRef(e) if e else None for e in elems),
                alloc_trace=trace_view(trace),
            )
        elif kind == "primarray":
            _, obj_id, trace, elem_type, _count, data = sub
            tname = _TYPE_NAMES.get(elem_type, f"type{elem_type}")
            graph.objects[obj_id] = ConcreteObject(
                obj_id, ObjKind.PRIMITIVE_ARRAY, 0, tname + "[]",
                prim_type=tname, prim_data=data, alloc_trace=trace_view(trace),
            )
        elif kind == "root":
            graph.gc_roots.append(sub[2])

    # dangling pass: a reference is valid, null, primitive, or Dangling
    missing: set[int] = set()

    def seal(value):
        if isinstance(value, ObjRef) and value.target not in graph.objects:
            missing.add(value.target)
            return Dangling(value.target)
        return value

    for obj in graph.objects.values():
        if obj.field_values:
            obj.field_values = tuple((n, seal(v)) for n, v in obj.field_values)
        if obj.elements:
            obj.elements = tuple(seal(v) for v in obj.elements)
    for info in graph.classes.values():
        info.static_fields = tuple((n, seal(v)) for n, v in info.static_fields)
    for target in sorted(missing):
        warn(hprof.ParseWarning(0, f"dangling reference to 0x{target:x}"))

    for obj in graph.objects.values():
        if obj.kind is ObjKind.INSTANCE and obj.class_name == "java.lang.String":
            content = _decode_string(obj, graph, warn)
            if content is not None:
                graph.strings_by_content.setdefault(content, []).append(obj.obj_id)
    for ids in graph.strings_by_content.values():
        ids.sort()
    return graph


def _decode_string(obj: ConcreteObject, graph: HeapGraph, warn=None) -> "str | None":
    values = dict(obj.field_values)
    backing = values.get("value")
    if isinstance(backing, Dangling):
        if warn:
            warn(hprof.ParseWarning(
                0, f"string 0x{obj.obj_id:x} backing array is dangling"))
        return None
    if not isinstance(backing, ObjRef):
        return None
    arr = graph.objects.get(backing.target)
    if arr is None or arr.kind is not ObjKind.PRIMITIVE_ARRAY:
        return None
    if arr.prim_type == "char":
        text = arr.prim_data.decode("utf-16-be", "replace")
        offset, count = values.get("offset"), values.get("count")
        if isinstance(offset, int) and isinstance(count, int):
            text = text[offset : offset + count]
        return text
    if arr.prim_type == "byte":
        if values.get("coder", 0) == 0:
            return arr.prim_data.decode("latin-1")
        return arr.prim_data.decode("utf-16-be", "replace")
    return None


def decode_string(obj: ConcreteObject, graph: HeapGraph) -> "str | None":
    """Content of a java.lang.String instance, if it decodes.

    Handles both the char-array layout and the byte-array-plus-coder
    layout; anything else (non-strings, dangling backing arrays) is None.
    """
    if obj.kind is not ObjKind.INSTANCE or obj.class_name != "java.lang.String":
        return None
    return _decode_string(obj, graph)


def objects_of_class(graph: HeapGraph, fq_name: str,
                     include_subclasses: bool = False) -> list[ConcreteObject]:
    """Non-class objects whose type matches, ordered by object id."""
    wanted_ids: set[int] = set()
    if include_subclasses:
        for info in graph.classes.values():
            cur = info
            while cur is not None:
                if cur.fq_name == fq_name:
                    wanted_ids.add(info.class_obj_id)
                    break
                cur = graph.classes.get(cur.super_ref) if cur.super_ref else None
    out = [
        obj for obj in graph.objects.values()
        if obj.kind is not ObjKind.CLASS
        and (obj.class_name == fq_name or obj.class_ref in wanted_ids)
    ]
    return sorted(out, key=lambda o: o.obj_id)
