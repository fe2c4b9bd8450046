"""Map concrete heap objects to the static abstraction domain.

An object becomes an allocation site when its allocation trace can be
matched against the code model, a class or string identity when it is a
class object or a tracked string, a per-type merged abstraction when it
is a commonplace object, and a type-only dummy site otherwise (native,
foreign, or generated code).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .classfile import AllocationInstr
from .codemodel import CodeModel
from .heapgraph import (
    ConcreteObject, FrameView, HeapGraph, ObjKind, StackTraceView, decode_string,
)
from .names import PRIMITIVE_ARRAY_TYPES

IMMUTABLE_CONTEXT = "<<immutable-context>>"

DEFAULT_COMMONPLACE = frozenset(
    {"java.lang.String", "java.lang.StringBuilder", "java.lang.StringBuffer"}
    | PRIMITIVE_ARRAY_TYPES
)
DEFAULT_EXCLUDED_PREFIXES = (
    "java.lang.reflect", "jdk.internal.reflect", "sun.reflect",
)


class AbsKind(enum.Enum):
    ALLOC_SITE = "alloc-site"
    CLASS_IDENTITY = "class-identity"
    STRING_IDENTITY = "string-identity"
    MERGED = "merged-string"
    DUMMY = "dummy"


@dataclass(frozen=True)
class ObjAbstraction:
    kind: AbsKind
    key: str
    type_name: str
    # declaring class of the matched site; drives type-sensitive contexts
    allocated_in: "str | None" = None


@dataclass(frozen=True)
class AbstractionConfig:
    distinguish_strings_by_content: bool = False
    distinguish_loaders: bool = False
    excluded_frame_prefixes: tuple = DEFAULT_EXCLUDED_PREFIXES
    commonplace_types: frozenset = DEFAULT_COMMONPLACE


def dummy_key(type_name: str) -> str:
    return f"<dynamic {type_name} (unknown site)>"


def site_key(signature_id: str, allocated_type: str, site_index: int) -> str:
    return f"{signature_id}/new {allocated_type}/{site_index}"


def match_allocation_frame(
    trace: StackTraceView,
    obj_type: str,
    code: CodeModel,
    cfg: AbstractionConfig,
    super_names=(),
) -> "tuple[FrameView, AllocationInstr] | None":
    """Find the most probable allocation site for a trace, innermost out.

    Constructor frames of the object's own class hierarchy and frames
    from excluded packages are skipped.  At each surviving frame present
    in the code model, a same-typed allocation at the frame's exact line
    wins over one anywhere in the method; remaining ties go to the
    smallest bytecode index, then the smallest site ordinal.
    """
    skip_ctor_classes = {obj_type, *super_names}
    for frame in trace.frames:
        if frame.method_name == "<init>" and frame.class_name in skip_ctor_classes:
            continue
        if any(frame.class_name.startswith(p) for p in cfg.excluded_frame_prefixes):
            continue
        meta = code.lookup(frame.class_name, frame.method_name,
                           frame.method_descriptor)
        if meta is None:
            continue
        typed = [i for i in meta.alloc_instructions if i.allocated_type == obj_type]
        if not typed:
            continue
        if frame.line is not None:
            at_line = [i for i in typed if i.line == frame.line]
            if at_line:
                return frame, min(at_line, key=lambda i: (i.bytecode_index, i.site_index))
        return frame, min(typed, key=lambda i: (i.bytecode_index, i.site_index))
    return None


def abstract_object(
    obj: ConcreteObject,
    graph: HeapGraph,
    code: CodeModel,
    cfg: AbstractionConfig,
) -> ObjAbstraction:
    if obj.kind is ObjKind.CLASS:
        info = graph.classes.get(obj.class_ref)
        fq = info.fq_name if info else obj.class_name
        if cfg.distinguish_loaders and info and info.loader_id:
            key = f"<class {fq} loader#{info.loader_id}>"
        else:
            key = f"<class {fq}>"
        return ObjAbstraction(AbsKind.CLASS_IDENTITY, key, "java.lang.Class")

    type_name = obj.class_name
    if type_name == "java.lang.String" and cfg.distinguish_strings_by_content:
        content = decode_string(obj, graph)
        if content is not None:
            return ObjAbstraction(
                AbsKind.STRING_IDENTITY, f"<string {content}>", type_name
            )
    if type_name in cfg.commonplace_types or obj.kind is ObjKind.PRIMITIVE_ARRAY:
        return ObjAbstraction(AbsKind.MERGED, f"<{type_name}>", type_name)

    if obj.alloc_trace is not None:
        supers = []
        info = graph.classes.get(obj.class_ref)
        while info is not None and info.super_ref:
            info = graph.classes.get(info.super_ref)
            if info is not None:
                supers.append(info.fq_name)
        match = match_allocation_frame(obj.alloc_trace, type_name, code, cfg, supers)
        if match is not None:
            frame, instr = match
            return ObjAbstraction(
                AbsKind.ALLOC_SITE,
                site_key(frame.signature, instr.allocated_type, instr.site_index),
                type_name,
                allocated_in=frame.class_name,
            )
    return ObjAbstraction(AbsKind.DUMMY, dummy_key(type_name), type_name)


def abstraction_table(
    graph: HeapGraph, code: CodeModel, cfg: AbstractionConfig
) -> dict[int, ObjAbstraction]:
    """Abstraction for every object in the graph (total, deterministic)."""
    return {
        obj_id: abstract_object(graph.objects[obj_id], graph, code, cfg)
        for obj_id in sorted(graph.objects)
    }
