"""Dynamic call-graph edges and abstract calling/heap contexts.

Call-site sensitivity needs nothing beyond allocation traces.  Object
and type sensitivity follow the receiver chains recorded by the
instrumentation objects: each tracked object points at the receiver of
its allocating method, so a context of any depth unfolds by chasing
those links and abstracting each hop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .abstraction import IMMUTABLE_CONTEXT, AbsKind, ObjAbstraction
from .errors import CycleDetected, EnricherShapeMismatch
from .heapgraph import (
    ConcreteObject, Dangling, FrameView, HeapGraph, ObjKind, ObjRef,
    StackTraceView,
)

FLAVORS = ("insensitive", "call-site", "object", "type")


@dataclass(frozen=True)
class ContextTuple:
    """Fixed-arity context; short chains are padded with the start marker."""

    components: tuple[str, ...] = ()

    @staticmethod
    def of(components, order: int) -> "ContextTuple":
        comps = tuple(components)[:order]
        if len(comps) < order:
            comps += (IMMUTABLE_CONTEXT,) * (order - len(comps))
        return ContextTuple(comps)

    def render(self) -> str:
        return "[" + ", ".join(self.components) + "]"


EMPTY_CONTEXT = ContextTuple(())


@dataclass(frozen=True)
class SensitivityConfig:
    flavor: str = "insensitive"
    n: int = 0  # calling-context order
    m: int = 0  # heap-context order

    def __post_init__(self) -> None:
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown sensitivity flavor {self.flavor!r}")
        if self.flavor == "insensitive":
            if self.n or self.m:
                raise ValueError("insensitive sensitivity requires n = m = 0")
        elif self.n < 1 or self.m < 1:
            raise ValueError("context orders must be positive")

    @property
    def sensitive(self) -> bool:
        return self.flavor != "insensitive"

    @staticmethod
    def parse(spec: str) -> "SensitivityConfig":
        """Parse the ``flavor[:n[:m]]`` command-line grammar."""
        parts = spec.split(":")
        flavor = parts[0]
        if flavor == "insensitive":
            if len(parts) > 1:
                raise ValueError("insensitive takes no context orders")
            return SensitivityConfig()
        if len(parts) > 3:
            raise ValueError(f"bad sensitivity spec {spec!r}")
        n = int(parts[1]) if len(parts) > 1 else 1
        m = int(parts[2]) if len(parts) > 2 else n
        return SensitivityConfig(flavor, n, m)


@dataclass(frozen=True)
class DynCallEdge:
    caller_method: str
    caller_line: "int | None"
    callee_method: str
    caller_ctx: ContextTuple = EMPTY_CONTEXT
    callee_ctx: ContextTuple = EMPTY_CONTEXT

    @property
    def invocation(self) -> str:
        line = "-" if self.caller_line is None else str(self.caller_line)
        return f"{self.caller_method}/{line}"


@dataclass(frozen=True)
class EnricherNames:
    obj_ctx: str = "ObjAndCtx"
    edge_ctx: str = "EdgeCtx"
    class_data: str = "ClassData"


def class_name_matches(class_name: str, configured: str) -> bool:
    """Exact or dot-suffix match, tolerating relocated/shaded packages."""
    return class_name == configured or class_name.endswith("." + configured)


@dataclass(frozen=True)
class EdgeCtxEntry:
    edge_obj_id: int
    caller_ctx_id: "int | None"
    callee_ctx_id: "int | None"
    trace: "StackTraceView | None"
    degenerate: bool


@dataclass
class EnricherBindings:
    obj_ctx: dict[int, int] = field(default_factory=dict)
    edge_objs: list[EdgeCtxEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def edges_from_traces(graph: HeapGraph) -> set[DynCallEdge]:
    """Context-free edges: every successive frame pair of every trace."""
    edges: set[DynCallEdge] = set()
    seen_traces: set[tuple] = set()
    for obj in graph.objects.values():
        trace = obj.alloc_trace
        if trace is None or trace.frames in seen_traces:
            continue
        seen_traces.add(trace.frames)
        for callee, caller in zip(trace.frames, trace.frames[1:]):
            edges.add(DynCallEdge(caller.signature, caller.line, callee.signature))
    return edges


def _ref_field(obj: ConcreteObject, name: str) -> "int | None":
    values = dict(obj.field_values)
    if name not in values:
        raise EnricherShapeMismatch(
            f"{obj.class_name} 0x{obj.obj_id:x} lacks reference field {name!r}")
    value = values[name]
    if value is None:
        return None
    if isinstance(value, ObjRef):
        return value.target
    if isinstance(value, Dangling):
        return None
    raise EnricherShapeMismatch(
        f"{obj.class_name} 0x{obj.obj_id:x} field {name!r} is not a reference")


def recognize_enrichers(graph: HeapGraph, names: EnricherNames) -> EnricherBindings:
    """Collect receiver-chain and edge-context bindings from the dump.

    Dumps without instrumentation objects yield empty bindings.
    """
    bindings = EnricherBindings()
    for obj in sorted(graph.objects.values(), key=lambda o: o.obj_id):
        if obj.kind is not ObjKind.INSTANCE:
            continue
        if class_name_matches(obj.class_name, names.obj_ctx):
            tracked = _ref_field(obj, "obj")
            ctx = _ref_field(obj, "ctx")
            if tracked is None:
                bindings.warnings.append(
                    f"obj-context 0x{obj.obj_id:x} tracks nothing; ignored")
                continue
            if ctx is None:
                continue  # no receiver recorded: chain simply ends
            if tracked in bindings.obj_ctx and bindings.obj_ctx[tracked] != ctx:
                bindings.warnings.append(
                    f"conflicting context for 0x{tracked:x}; first one kept")
                continue
            bindings.obj_ctx[tracked] = ctx
        elif class_name_matches(obj.class_name, names.edge_ctx):
            caller = _ref_field(obj, "callerCtx")
            callee = _ref_field(obj, "calleeCtx")
            trace = obj.alloc_trace
            degenerate = trace is None or len(trace.frames) < 3
            if degenerate:
                bindings.warnings.append(
                    f"edge-context 0x{obj.obj_id:x} has a degenerate trace")
            bindings.edge_objs.append(
                EdgeCtxEntry(obj.obj_id, caller, callee, trace, degenerate))
    return bindings


@dataclass(frozen=True)
class EdgeObservation:
    """One edge-context record: the edge plus its concrete context ids."""

    caller_method: str
    caller_line: "int | None"
    callee_method: str
    caller_ctx_id: "int | None"
    callee_ctx_id: "int | None"
    frames: tuple[FrameView, ...]


def edges_from_edgectx(bindings: EnricherBindings,
                       graph: HeapGraph) -> list[EdgeObservation]:
    """Edges recorded by edge-context objects.

    The first trace frame is the context object's constructor, so the
    callee is the 2nd element and the caller the 3rd.  Degenerate
    entries are skipped (already flagged during recognition).
    """
    out = []
    for entry in bindings.edge_objs:
        if entry.degenerate:
            continue
        callee, caller = entry.trace.frames[1], entry.trace.frames[2]
        out.append(EdgeObservation(
            caller.signature, caller.line, callee.signature,
            entry.caller_ctx_id, entry.callee_ctx_id, entry.trace.frames,
        ))
    return out


def _alpha(abstraction: ObjAbstraction, flavor: str) -> str:
    if flavor == "object":
        return abstraction.key
    # type sensitivity: the class in whose code the object was allocated
    return abstraction.allocated_in or abstraction.key


def _chase(start: "int | None", count: int, bindings: EnricherBindings,
           table: dict[int, ObjAbstraction], flavor: str,
           include_start: bool) -> list[str]:
    comps: list[str] = []
    seen: set[int] = set()
    cur = start
    if cur is not None:
        seen.add(cur)
        if include_start:
            abstraction = table.get(cur)
            if abstraction is not None and abstraction.kind in (
                AbsKind.MERGED, AbsKind.STRING_IDENTITY,
            ):
                return []  # commonplace objects never receive contexts
            comps.append(_alpha(abstraction, flavor) if abstraction else IMMUTABLE_CONTEXT)
    while cur is not None and len(comps) < count:
        cur = bindings.obj_ctx.get(cur)
        if cur is None:
            break
        if cur in seen:
            raise CycleDetected(f"receiver chain revisits 0x{cur:x}")
        seen.add(cur)
        abstraction = table.get(cur)
        comps.append(_alpha(abstraction, flavor) if abstraction else IMMUTABLE_CONTEXT)
    return comps


def heap_context(obj_id: int, order: int, bindings: EnricherBindings,
                 table: dict[int, ObjAbstraction],
                 cfg: SensitivityConfig) -> ContextTuple:
    """Heap context of an object: abstractions of its receiver chain.

    Component i is the abstraction of the i-th receiver up the chain;
    chains shorter than the order are padded.  Commonplace objects get
    the fully padded tuple.
    """
    if cfg.flavor not in ("object", "type"):
        raise ValueError("heap_context applies to object or type sensitivity")
    if order < 1:
        raise ValueError("order must be at least 1")
    abstraction = table.get(obj_id)
    if abstraction is not None and abstraction.kind in (
        AbsKind.MERGED, AbsKind.STRING_IDENTITY,
    ):
        return ContextTuple.of((), order)
    return ContextTuple.of(
        _chase(obj_id, order, bindings, table, cfg.flavor, include_start=False),
        order,
    )


def calling_context(ctx_id: "int | None", order: int,
                    bindings: EnricherBindings,
                    table: dict[int, ObjAbstraction],
                    cfg: SensitivityConfig) -> ContextTuple:
    """Calling context seeded from an edge's concrete context object.

    The receiver itself is the first component; deeper components chase
    its allocation-receiver chain.
    """
    if cfg.flavor not in ("object", "type"):
        raise ValueError("calling_context applies to object or type sensitivity")
    if order < 1:
        raise ValueError("order must be at least 1")
    return ContextTuple.of(
        _chase(ctx_id, order, bindings, table, cfg.flavor, include_start=True),
        order,
    )


def callsite_context(frames, order: int) -> ContextTuple:
    """Call-site context from a caller chain (nearest caller first)."""
    comps = []
    for frame in tuple(frames)[:order]:
        line = "-" if frame.line is None else str(frame.line)
        comps.append(f"{frame.signature}@{line}")
    return ContextTuple.of(comps, order)
