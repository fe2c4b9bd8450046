"""Programmatic builder for valid heap-dump byte streams.

Lets every test construct dumps (including instrumentation-shaped
objects) without a JVM.  The builder assigns all identifiers
deterministically, so emitted bytes are bit-stable for a fixed program
and identifier size.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass

from .errors import InconsistentProgram
from .names import method_signature

_TYPE_CODES = {
    "object": 2, "boolean": 4, "char": 5, "float": 6,
    "double": 7, "byte": 8, "short": 9, "int": 10, "long": 11,
}
_PRIM_SIZES = {4: 1, 5: 2, 6: 4, 7: 8, 8: 1, 9: 2, 10: 4, 11: 8}

DEFAULT_OBJ_CTX_CLASS = "instr.ObjAndCtx"
DEFAULT_EDGE_CTX_CLASS = "instr.EdgeCtx"
DEFAULT_CLASS_DATA_CLASS = "instr.ClassData"

Frame = tuple[str, str, str, "str | None", int]


def frame(class_name: str, method: str, descriptor: str,
          source: "str | None" = None, line: int = 0) -> Frame:
    return (class_name, method, descriptor, source, line)


def _internal_name(dotted: str) -> str:
    """Dotted/source name -> JVM internal form for the class registry."""
    if dotted.endswith("[]"):
        dims = 0
        base = dotted
        while base.endswith("[]"):
            base = base[:-2]
            dims += 1
        prim = {
            "byte": "B", "char": "C", "double": "D", "float": "F",
            "int": "I", "long": "J", "short": "S", "boolean": "Z",
        }.get(base)
        core = prim if prim else "L" + base.replace(".", "/") + ";"
        return "[" * dims + core
    return dotted.replace(".", "/")


@dataclass
class _ClassDecl:
    name: str
    super_name: "str | None"
    fields: tuple  # ((name, type_str), ...)
    statics: tuple  # ((name, type_str, value), ...)
    loader: int = 0
    class_obj_id: int = 0
    heap: bool = True  # False: LoadClass record only (frame classes)


@dataclass
class _Instance:
    obj_id: int
    class_name: str
    values: dict
    trace: int


@dataclass
class _ObjArray:
    obj_id: int
    class_name: str  # array class, source form ("com.ex.C[]")
    elements: tuple
    trace: int


@dataclass
class _PrimArray:
    obj_id: int
    elem_type: str
    values: tuple
    trace: int


class SynthProgram:
    """Declarative description of a heap snapshot.

    Objects are declared through the ``add_*`` methods, which hand out
    final object ids immediately; forward references are fine as long
    as everything is declared before :func:`emit`.
    """

    def __init__(self, string_layout: str = "char",
                 obj_ctx_class: str = DEFAULT_OBJ_CTX_CLASS,
                 edge_ctx_class: str = DEFAULT_EDGE_CTX_CLASS,
                 class_data_class: str = DEFAULT_CLASS_DATA_CLASS) -> None:
        if string_layout not in ("char", "byte"):
            raise ValueError("string_layout must be 'char' or 'byte'")
        self.string_layout = string_layout
        self.obj_ctx_class = obj_ctx_class
        self.edge_ctx_class = edge_ctx_class
        self.class_data_class = class_data_class
        self._classes: dict[str, _ClassDecl] = {}
        self._entities: list = []  # declaration-ordered heap entities
        self._by_id: dict[int, object] = {}
        self._traces: list[tuple[Frame, ...]] = []
        self._roots: list[tuple[int, int]] = []
        self._next_id = 0x100
        # filled by random_program: per-object true allocation sites
        self.intent: dict[int, tuple] = {}
        self.intent_sites: list[tuple] = []

    # -- declarations -------------------------------------------------

    def declared_entities(self) -> tuple:
        """Heap entities in declaration order (for test oracles)."""
        return tuple(self._entities)

    def declared_classes(self) -> dict:
        return dict(self._classes)

    def declared_traces(self) -> tuple:
        return tuple(self._traces)

    def _alloc_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def add_class(self, name: str, super_name: "str | None" = "java.lang.Object",
                  fields=(), statics=(), loader: int = 0) -> int:
        if name in self._classes:
            return self._classes[name].class_obj_id
        if name != "java.lang.Object" and super_name == name:
            raise InconsistentProgram(f"class {name} is its own superclass")
        decl = _ClassDecl(name, super_name if name != "java.lang.Object" else None,
                          tuple((f, t) for f, t in fields),
                          tuple((f, t, v) for f, t, v in statics),
                          loader, self._alloc_id())
        self._classes[name] = decl
        if decl.super_name and decl.super_name not in self._classes:
            self.add_class(decl.super_name, fields=(), super_name="java.lang.Object")
        return decl.class_obj_id

    def add_trace(self, frames) -> int:
        """Register an allocation stack trace (innermost frame first)."""
        frames = tuple(tuple(f) for f in frames)
        self._traces.append(frames)
        return len(self._traces)

    def add_instance(self, class_name: str, fields: "dict | None" = None,
                     trace: int = 0) -> int:
        obj = _Instance(self._alloc_id(), class_name, dict(fields or {}), trace)
        self._entities.append(obj)
        self._by_id[obj.obj_id] = obj
        return obj.obj_id

    def set_field(self, obj_id: int, name: str, value) -> None:
        self._by_id[obj_id].values[name] = value

    def add_object_array(self, array_class: str, elements, trace: int = 0) -> int:
        arr = _ObjArray(self._alloc_id(), array_class, tuple(elements), trace)
        self._entities.append(arr)
        self._by_id[arr.obj_id] = arr
        return arr.obj_id

    def add_primitive_array(self, elem_type: str, values, trace: int = 0) -> int:
        if elem_type == "object" or elem_type not in _TYPE_CODES:
            raise ValueError(f"not a primitive element type: {elem_type}")
        arr = _PrimArray(self._alloc_id(), elem_type, tuple(values), trace)
        self._entities.append(arr)
        self._by_id[arr.obj_id] = arr
        return arr.obj_id

    def add_string(self, content: str, trace: int = 0) -> int:
        """Declare a java.lang.String with its backing array."""
        if self.string_layout == "char":
            self.add_class("java.lang.String", fields=[("value", "object")])
            # UTF-16 code units, so astral characters become surrogate pairs
            raw = content.encode("utf-16-be")
            units = [int.from_bytes(raw[i : i + 2], "big")
                     for i in range(0, len(raw), 2)]
            backing = self.add_primitive_array("char", units)
            return self.add_instance(
                "java.lang.String", {"value": backing}, trace=trace
            )
        self.add_class(
            "java.lang.String", fields=[("value", "object"), ("coder", "byte")]
        )
        if all(ord(c) < 256 for c in content):
            coder, raw = 0, content.encode("latin-1")
        else:
            coder, raw = 1, content.encode("utf-16-be")
        backing = self.add_primitive_array(
            "byte", [b - 256 if b > 127 else b for b in raw])
        return self.add_instance(
            "java.lang.String", {"value": backing, "coder": coder}, trace=trace
        )

    def add_gc_root(self, obj_id: int, kind: int = 0xFF) -> None:
        self._roots.append((kind, obj_id))

    # -- instrumentation-shaped objects --------------------------------

    def add_obj_ctx(self, obj: int, ctx: "int | None", trace: int = 0) -> int:
        self.add_class(self.obj_ctx_class,
                       fields=[("obj", "object"), ("ctx", "object")])
        return self.add_instance(self.obj_ctx_class,
                                 {"obj": obj, "ctx": ctx}, trace=trace)

    def add_edge_ctx(self, caller_ctx: "int | None", callee_ctx: "int | None",
                     trace: int) -> int:
        self.add_class(self.edge_ctx_class,
                       fields=[("callerCtx", "object"), ("calleeCtx", "object")])
        return self.add_instance(
            self.edge_ctx_class,
            {"callerCtx": caller_ctx, "calleeCtx": callee_ctx}, trace=trace,
        )

    def add_class_data(self, name: str, loader: "int | None",
                       bytecode: bytes) -> int:
        self.add_class(self.class_data_class, fields=[
            ("name", "object"), ("loader", "object"), ("bytecode", "object"),
        ])
        name_obj = self.add_string(name)
        code_arr = self.add_primitive_array(
            "byte", [b - 256 if b > 127 else b for b in bytecode]
        )
        return self.add_instance(self.class_data_class, {
            "name": name_obj, "loader": loader, "bytecode": code_arr,
        })

    # -- validation and emission ---------------------------------------

    def _layout_of(self, class_name: str) -> list[tuple[str, str]]:
        out = []
        name = class_name
        while name:
            decl = self._classes[name]
            out.extend(decl.fields)
            name = decl.super_name
        return out

    def _check(self) -> None:
        def check_ref(value, what):
            if value is not None and value != 0 and value not in self._by_id:
                raise InconsistentProgram(
                    f"{what} references undeclared id 0x{value:x}")

        for name, decl in self._classes.items():
            if decl.super_name and decl.super_name not in self._classes:
                raise InconsistentProgram(f"class {name} has undeclared super")
            if decl.loader:
                check_ref(decl.loader, f"class {name} loader")
            for fname, ftype, value in decl.statics:
                if ftype == "object":
                    check_ref(value, f"static {name}.{fname}")
        for ent in self._entities:
            if isinstance(ent, _Instance):
                if ent.class_name not in self._classes:
                    raise InconsistentProgram(
                        f"object {ent.obj_id} has undeclared class {ent.class_name}"
                    )
                layout = dict(self._layout_of(ent.class_name))
                for fname, value in ent.values.items():
                    if fname not in layout:
                        raise InconsistentProgram(
                            f"object {ent.obj_id} sets unknown field {fname}"
                        )
                    if layout[fname] == "object":
                        check_ref(value, f"field {ent.class_name}.{fname}")
            elif isinstance(ent, _ObjArray):
                for v in ent.elements:
                    check_ref(v, f"array {ent.obj_id} element")
            if ent.trace and not 1 <= ent.trace <= len(self._traces):
                raise InconsistentProgram(
                    f"object {ent.obj_id} references undeclared trace {ent.trace}"
                )
        for _, oid in self._roots:
            check_ref(oid, "gc root")


def _encode_value(buf: bytearray, type_str: str, value, id_size: int) -> None:
    code = _TYPE_CODES[type_str]
    if code == 2:
        buf += struct.pack(">Q" if id_size == 8 else ">I", value or 0)
    elif code == 4:
        buf += struct.pack(">B", 1 if value else 0)
    elif code == 5:
        buf += struct.pack(">H", value)
    elif code == 6:
        buf += struct.pack(">f", value)
    elif code == 7:
        buf += struct.pack(">d", value)
    elif code == 8:
        buf += struct.pack(">b", value)
    elif code == 9:
        buf += struct.pack(">h", value)
    elif code == 10:
        buf += struct.pack(">i", value)
    else:
        buf += struct.pack(">q", value)


def emit(program: SynthProgram, id_size: int = 8) -> bytes:
    """Serialize the program to dump bytes (fixed header timestamp 0)."""
    if id_size not in (4, 8):
        raise ValueError("id_size must be 4 or 8")
    program._check()
    pid = ">Q" if id_size == 8 else ">I"

    strings: dict[str, int] = {}

    def sid(text: str) -> int:
        if text not in strings:
            strings[text] = len(strings) + 1
        return strings[text]

    # class registry: heap classes plus classes referenced only by frames
    registry: dict[str, _ClassDecl] = dict(program._classes)
    for frames in program._traces:
        for cls, _m, _d, _s, _line in frames:
            if cls not in registry:
                registry[cls] = _ClassDecl(cls, None, (), (), 0,
                                           heap=False,
                                           class_obj_id=0)
    serials: dict[str, int] = {}
    for i, name in enumerate(registry):
        serials[name] = i + 1
        decl = registry[name]
        if not decl.class_obj_id:
            decl.class_obj_id = 0x10_0000 + i  # ids for frame-only classes
        sid(_internal_name(name))

    frame_ids: dict[Frame, int] = {}
    for frames in program._traces:
        for fr in frames:
            if fr not in frame_ids:
                frame_ids[fr] = len(frame_ids) + 1
                _cls, method, desc, source, _line = fr
                sid(method)
                sid(desc)
                if source:
                    sid(source)
    for decl in registry.values():
        for fname, _t in decl.fields:
            sid(fname)
        for fname, _t, _v in decl.statics:
            sid(fname)

    out = bytearray()
    out += b"JAVA PROFILE 1.0.2\x00"
    out += struct.pack(">I", id_size)
    out += struct.pack(">Q", 0)

    def record(tag: int, body: bytes) -> None:
        out.extend(struct.pack(">BII", tag, 0, len(body)))
        out.extend(body)

    for text, i in strings.items():
        record(0x01, struct.pack(pid, i) + text.encode("utf-8"))
    for name, decl in registry.items():
        record(0x02, struct.pack(">I", serials[name])
               + struct.pack(pid, decl.class_obj_id)
               + struct.pack(">I", 0)
               + struct.pack(pid, sid(_internal_name(name))))
    for fr, fid in frame_ids.items():
        cls, method, desc, source, line = fr
        record(0x04, struct.pack(pid, fid)
               + struct.pack(pid, sid(method))
               + struct.pack(pid, sid(desc))
               + struct.pack(pid, sid(source) if source else 0)
               + struct.pack(">Ii", serials[cls], line))
    for i, frames in enumerate(program._traces):
        body = struct.pack(">III", i + 1, 1, len(frames))
        for fr in frames:
            body += struct.pack(pid, frame_ids[fr])
        record(0x05, body)

    heap = bytearray()
    for decl in registry.values():
        if not decl.heap:
            continue
        heap += b"\x20"
        heap += struct.pack(pid, decl.class_obj_id)
        heap += struct.pack(">I", 0)
        super_id = registry[decl.super_name].class_obj_id if decl.super_name else 0
        heap += struct.pack(pid, super_id)
        heap += struct.pack(pid, decl.loader)
        heap += struct.pack(pid, 0) * 4  # signers, domain, reserved x2
        own = sum(
            id_size if t == "object" else _PRIM_SIZES[_TYPE_CODES[t]]
            for _f, t in decl.fields
        )
        heap += struct.pack(">I", own)
        heap += struct.pack(">H", 0)  # constant pool
        heap += struct.pack(">H", len(decl.statics))
        for fname, ftype, value in decl.statics:
            heap += struct.pack(pid, sid(fname))
            heap += struct.pack(">B", _TYPE_CODES[ftype])
            _encode_value(heap, ftype, value, id_size)
        heap += struct.pack(">H", len(decl.fields))
        for fname, ftype in decl.fields:
            heap += struct.pack(pid, sid(fname))
            heap += struct.pack(">B", _TYPE_CODES[ftype])

    for ent in program._entities:
        if isinstance(ent, _Instance):
            body = bytearray()
            for fname, ftype in program._layout_of(ent.class_name):
                default = None if ftype == "object" else (
                    False if ftype == "boolean" else
                    0.0 if ftype in ("float", "double") else 0
                )
                _encode_value(body, ftype, ent.values.get(fname, default), id_size)
            heap += b"\x21"
            heap += struct.pack(pid, ent.obj_id)
            heap += struct.pack(">I", ent.trace)
            heap += struct.pack(pid, program._classes[ent.class_name].class_obj_id)
            heap += struct.pack(">I", len(body))
            heap += body
        elif isinstance(ent, _ObjArray):
            array_cls = program._classes.get(ent.class_name)
            if array_cls is None:
                # auto-register the array class lazily would break emitted
                # prefix determinism; require declaration instead
                raise InconsistentProgram(
                    f"array class {ent.class_name} not declared"
                )
            heap += b"\x22"
            heap += struct.pack(pid, ent.obj_id)
            heap += struct.pack(">I", ent.trace)
            heap += struct.pack(">I", len(ent.elements))
            heap += struct.pack(pid, array_cls.class_obj_id)
            for v in ent.elements:
                heap += struct.pack(pid, v or 0)
        else:
            heap += b"\x23"
            heap += struct.pack(pid, ent.obj_id)
            heap += struct.pack(">I", ent.trace)
            heap += struct.pack(">I", len(ent.values))
            heap += struct.pack(">B", _TYPE_CODES[ent.elem_type])
            for v in ent.values:
                _encode_value(heap, ent.elem_type, v, id_size)

    for kind, oid in program._roots:
        heap += struct.pack(">B", kind)
        heap += struct.pack(pid, oid)
        if kind == 0x01:
            heap += struct.pack(pid, 0)
        elif kind in (0x02, 0x03, 0x08):
            heap += struct.pack(">II", 1, 0)
        elif kind in (0x04, 0x06):
            heap += struct.pack(">I", 1)

    if heap:
        record(0x1C, bytes(heap))
    record(0x2C, b"")
    return bytes(out)


def random_program(seed: int, n_objects: int = 20,
                   with_enrichers: bool = True) -> SynthProgram:
    """Deterministic random program generator for property tests.

    Every object of an application class gets an accurate allocation
    trace whose innermost surviving frame is its true site; the intent
    is recorded in ``program.intent`` (obj id -> (signature, type, line,
    site_index)) so tests can verify site matching independently.
    """
    rng = random.Random(seed)
    p = SynthProgram()
    if n_objects <= 0:
        return p

    class_names = [f"app.data.C{i}" for i in range(rng.randint(1, 4))]
    for i, name in enumerate(class_names):
        super_name = (
            rng.choice(class_names[:i]) if i and rng.random() < 0.4
            else "java.lang.Object"
        )
        fields = [(f"f{j}", "object") for j in range(rng.randint(1, 3))]
        if rng.random() < 0.5:
            fields.append(("count", "int"))
        p.add_class(name, super_name=super_name, fields=fields)

    # the code world: methods holding allocation sites per class
    methods = [(f"app.work.M{i}", f"run{i}", "()V") for i in range(rng.randint(1, 3))]
    sites: dict[str, list] = {name: [] for name in class_names}
    site_rows = {}

    def site_for(type_name: str):
        pool = sites[type_name]
        if not pool or rng.random() < 0.4:
            cls, meth, desc = rng.choice(methods)
            per_method_type = [
                s for s in pool if s[0] == (cls, meth, desc)
            ]
            line = 10 + 10 * len(pool) + rng.randint(0, 5)
            entry = ((cls, meth, desc), line, len(per_method_type))
            pool.append(entry)
            sig = method_signature(cls, meth, desc)
            site_rows[(sig, type_name, entry[2])] = (sig, type_name, line, entry[2])
        return rng.choice(pool)

    objs = []
    for _ in range(n_objects):
        cname = rng.choice(class_names)
        (mcls, mname, mdesc), line, ordinal = site_for(cname)
        frames = []
        if rng.random() < 0.3:
            frames.append(frame(cname, "<init>", "()V", "C.java", 1))
        frames.append(frame(mcls, mname, mdesc, mcls.split(".")[-1] + ".java", line))
        for depth in range(rng.randint(0, 3)):
            ccls, cmeth, cdesc = rng.choice(methods)
            frames.append(
                frame(ccls, cmeth, cdesc, ccls.split(".")[-1] + ".java",
                      50 + depth + rng.randint(0, 9))
            )
        t = p.add_trace(frames)
        oid = p.add_instance(cname, trace=t)
        objs.append((oid, cname))
        p.intent[oid] = (method_signature(mcls, mname, mdesc), cname, line, ordinal)

    # random object-field wiring
    for oid, cname in objs:
        layout = p._layout_of(cname)
        for fname, ftype in layout:
            if ftype == "object" and rng.random() < 0.6:
                p.set_field(oid, fname, rng.choice(objs)[0])
            elif ftype == "int":
                p.set_field(oid, fname, rng.randint(-5, 100))

    if rng.random() < 0.5:
        p.add_string("s" + str(rng.randint(0, 99)))
    if rng.random() < 0.4 and objs:
        p.add_class(class_names[0] + "[]", super_name="java.lang.Object")
        p.add_object_array(
            class_names[0] + "[]",
            [rng.choice(objs)[0] for _ in range(rng.randint(1, 4))],
        )
    for oid, _ in rng.sample(objs, min(len(objs), 2)):
        p.add_gc_root(oid)

    if with_enrichers and len(objs) >= 2:
        # receiver chains: link later objects to strictly earlier ones
        for i in range(1, len(objs)):
            if rng.random() < 0.5:
                p.add_obj_ctx(objs[i][0], objs[rng.randrange(i)][0])
        if rng.random() < 0.5:
            callee_cls, callee_m, callee_d = rng.choice(methods)
            caller_cls, caller_m, caller_d = rng.choice(methods)
            t = p.add_trace([
                frame(p.edge_ctx_class, "<init>", "(Ljava/lang/Object;)V"),
                frame(callee_cls, callee_m, callee_d, None, 0),
                frame(caller_cls, caller_m, caller_d, "M.java", rng.randint(1, 60)),
            ])
            p.add_edge_ctx(objs[0][0], objs[-1][0], t)
        if rng.random() < 0.3:
            p.add_class_data(
                f"gen.Dyn{rng.randint(0, 9)}", None,
                bytes([0xCA, 0xFE, 0xBA, 0xBE]) + bytes(rng.randrange(256) for _ in range(12)),
            )
    p.intent_sites = sorted(site_rows.values())
    return p
