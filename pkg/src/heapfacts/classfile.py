"""JVM class-file reader: method descriptors, line tables, allocation sites.

Reads only what abstraction matching needs: the constant pool (names and
descriptors), each method's Code attribute, its LineNumberTable, and the
positions of the four allocation opcodes.  Everything else is skipped by
declared length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedClassFile
from .names import NEWARRAY_TYPES, method_signature, normalize_class_name

MAGIC = 0xCAFEBABE

OP_NEW = 0xBB
OP_NEWARRAY = 0xBC
OP_ANEWARRAY = 0xBD
OP_MULTIANEWARRAY = 0xC5
_OP_WIDE = 0xC4
_OP_TABLESWITCH = 0xAA
_OP_LOOKUPSWITCH = 0xAB
_OP_IINC = 0x84

# operand byte counts for fixed-length opcodes
_OPERANDS = {}
_OPERANDS.update({op: 0 for op in range(0x00, 0x10)})        # consts
_OPERANDS.update({0x10: 1, 0x11: 2, 0x12: 1, 0x13: 2, 0x14: 2})
_OPERANDS.update({op: 1 for op in range(0x15, 0x1A)})        # loads
_OPERANDS.update({op: 0 for op in range(0x1A, 0x36)})
_OPERANDS.update({op: 1 for op in range(0x36, 0x3B)})        # stores
_OPERANDS.update({op: 0 for op in range(0x3B, 0x84)})
_OPERANDS[_OP_IINC] = 2
_OPERANDS.update({op: 0 for op in range(0x85, 0x99)})
_OPERANDS.update({op: 2 for op in range(0x99, 0xA9)})        # branches
_OPERANDS[0xA9] = 1                                          # ret
_OPERANDS.update({op: 0 for op in range(0xAC, 0xB2)})        # returns
_OPERANDS.update({op: 2 for op in range(0xB2, 0xB9)})        # field/invoke
_OPERANDS.update({0xB9: 4, 0xBA: 4})
_OPERANDS.update({OP_NEW: 2, OP_NEWARRAY: 1, OP_ANEWARRAY: 2})
_OPERANDS.update({0xBE: 0, 0xBF: 0, 0xC0: 2, 0xC1: 2, 0xC2: 0, 0xC3: 0})
_OPERANDS.update({OP_MULTIANEWARRAY: 3, 0xC6: 2, 0xC7: 2, 0xC8: 4, 0xC9: 4})


@dataclass(frozen=True)
class AllocationInstr:
    bytecode_index: int
    allocated_type: str
    line: "int | None"
    site_index: int  # ordinal among same-typed allocations in the method


@dataclass
class MethodMeta:
    declaring_class: str
    name: str
    descriptor: str
    signature_id: str
    line_table: tuple = ()          # ((bytecode_index, line), ...) sorted
    alloc_instructions: tuple = ()  # sorted by bytecode index

    def line_at(self, bci: int) -> "int | None":
        line = None
        for start, ln in self.line_table:
            if start > bci:
                break
            line = ln
        return line


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def need(self, count: int) -> None:
        if self.pos + count > len(self.data):
            raise MalformedClassFile(f"truncated at offset {self.pos}")

    def u1(self) -> int:
        self.need(1)
        v = self.data[self.pos]
        self.pos += 1
        return v

    def u2(self) -> int:
        self.need(2)
        v = struct.unpack_from(">H", self.data, self.pos)[0]
        self.pos += 2
        return v

    def u4(self) -> int:
        self.need(4)
        v = struct.unpack_from(">I", self.data, self.pos)[0]
        self.pos += 4
        return v

    def take(self, count: int) -> bytes:
        self.need(count)
        v = self.data[self.pos : self.pos + count]
        self.pos += count
        return v


def _read_constant_pool(r: _Reader) -> tuple[dict[int, str], dict[int, int]]:
    """Returns (utf8 strings, class entry -> utf8 index)."""
    count = r.u2()
    utf8: dict[int, str] = {}
    classes: dict[int, int] = {}
    index = 1
    while index < count:
        tag = r.u1()
        if tag == 1:
            utf8[index] = r.take(r.u2()).decode("utf-8", "replace")
        elif tag == 7:
            classes[index] = r.u2()
        elif tag in (8, 16, 19, 20):
            r.take(2)
        elif tag in (3, 4, 9, 10, 11, 12, 17, 18):
            r.take(4)
        elif tag in (5, 6):
            r.take(8)
            index += 1  # longs and doubles occupy two pool slots
        elif tag == 15:
            r.take(3)
        else:
            raise MalformedClassFile(f"unknown constant pool tag {tag}")
        index += 1
    return utf8, classes


def scan_code(code: bytes) -> list[tuple[int, int, "int | None"]]:
    """Walk an instruction stream; yields (bci, opcode, operand-or-None)
    for the four allocation opcodes.

    The operand is the constant-pool index (new/anewarray/multianewarray)
    or the primitive element-type code (newarray).  Raises
    MalformedClassFile when the walk desyncs from the stream length.
    """
    out = []
    pos = 0
    n = len(code)
    while pos < n:
        op = code[pos]
        bci = pos
        if op == _OP_TABLESWITCH:
            pos += 1
            pos += (4 - pos % 4) % 4
            if pos + 12 > n:
                raise MalformedClassFile("tableswitch truncated")
            low, high = struct.unpack_from(">ii", code, pos + 4)
            pos += 12 + (high - low + 1) * 4
        elif op == _OP_LOOKUPSWITCH:
            pos += 1
            pos += (4 - pos % 4) % 4
            if pos + 8 > n:
                raise MalformedClassFile("lookupswitch truncated")
            npairs = struct.unpack_from(">i", code, pos + 4)[0]
            pos += 8 + npairs * 8
        elif op == _OP_WIDE:
            if pos + 1 >= n:
                raise MalformedClassFile("wide opcode truncated")
            pos += 6 if code[pos + 1] == _OP_IINC else 4
        else:
            extra = _OPERANDS.get(op)
            if extra is None:
                raise MalformedClassFile(f"unknown opcode 0x{op:02x} at {bci}")
            if pos + 1 + extra > n:
                raise MalformedClassFile(f"operands truncated at {bci}")
            if op in (OP_NEW, OP_ANEWARRAY, OP_MULTIANEWARRAY):
                out.append((bci, op, struct.unpack_from(">H", code, pos + 1)[0]))
            elif op == OP_NEWARRAY:
                out.append((bci, op, code[pos + 1]))
            pos += 1 + extra
    if pos != n:
        raise MalformedClassFile(f"instruction walk desynced ({pos} != {n})")
    return out


def parse_classfile(data: bytes) -> list[MethodMeta]:
    """Extract per-method metadata from one class file."""
    r = _Reader(data)
    if r.u4() != MAGIC:
        raise MalformedClassFile("bad magic")
    r.u4()  # minor, major
    utf8, cp_classes = _read_constant_pool(r)

    def class_name(cp_index: int) -> str:
        name_idx = cp_classes.get(cp_index)
        if name_idx is None or name_idx not in utf8:
            raise MalformedClassFile(f"bad class constant {cp_index}")
        return normalize_class_name(utf8[name_idx])

    r.u2()  # access flags
    this_class = class_name(r.u2())
    r.u2()  # super
    for _ in range(r.u2()):
        r.u2()  # interfaces

    def skip_attributes() -> None:
        for _ in range(r.u2()):
            r.u2()
            r.take(r.u4())

    for _ in range(r.u2()):  # fields
        r.take(6)
        skip_attributes()

    methods = []
    for _ in range(r.u2()):
        r.u2()  # access
        name = utf8.get(r.u2(), "?")
        descriptor = utf8.get(r.u2(), "()V")
        line_table: list[tuple[int, int]] = []
        allocs: list[tuple[int, int, int]] = []
        has_code = False
        for _ in range(r.u2()):
            attr_name = utf8.get(r.u2(), "")
            attr_len = r.u4()
            if attr_name != "Code":
                r.take(attr_len)
                continue
            has_code = True
            r.take(4)  # max stack/locals
            code = r.take(r.u4())
            allocs = scan_code(code)
            for _ in range(r.u2()):  # exception table
                r.take(8)
            for _ in range(r.u2()):  # code attributes
                sub_name = utf8.get(r.u2(), "")
                sub_len = r.u4()
                if sub_name == "LineNumberTable":
                    for _ in range(r.u2()):
                        line_table.append((r.u2(), r.u2()))
                else:
                    r.take(sub_len)
        meta = MethodMeta(
            this_class, name, descriptor,
            method_signature(this_class, name, descriptor),
            tuple(sorted(line_table)),
        )
        if has_code:
            instrs = []
            per_type: dict[str, int] = {}
            for bci, op, operand in allocs:
                if op == OP_NEW:
                    allocated = class_name(operand)
                elif op == OP_NEWARRAY:
                    elem = NEWARRAY_TYPES.get(operand)
                    if elem is None:
                        raise MalformedClassFile(f"bad newarray type {operand}")
                    allocated = elem + "[]"
                elif op == OP_ANEWARRAY:
                    allocated = class_name(operand) + "[]"
                else:
                    allocated = class_name(operand)
                ordinal = per_type.get(allocated, 0)
                per_type[allocated] = ordinal + 1
                instrs.append(
                    AllocationInstr(bci, allocated, meta.line_at(bci), ordinal)
                )
            meta.alloc_instructions = tuple(instrs)
        methods.append(meta)

    skip_attributes()
    return methods
