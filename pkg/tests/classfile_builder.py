"""Assembles real JVM class files for scanner fixtures.

No JDK is available in the test environment, so fixtures are built
directly: a constant pool, methods with hand-assembled instruction
streams, and LineNumberTable attributes.  The streams only need to be
structurally valid (correct encodings and lengths); they are never run.
"""

from __future__ import annotations

import struct


class ConstantPool:
    def __init__(self) -> None:
        self.entries: list[bytes] = []
        self._utf8: dict[str, int] = {}
        self._classes: dict[str, int] = {}

    def _add(self, raw: bytes) -> int:
        self.entries.append(raw)
        return len(self.entries)

    def utf8(self, text: str) -> int:
        if text not in self._utf8:
            raw = text.encode("utf-8")
            self._utf8[text] = self._add(b"\x01" + struct.pack(">H", len(raw)) + raw)
        return self._utf8[text]

    def class_(self, internal_name: str) -> int:
        if internal_name not in self._classes:
            name_idx = self.utf8(internal_name)
            self._classes[internal_name] = self._add(
                b"\x07" + struct.pack(">H", name_idx))
        return self._classes[internal_name]

    def methodref(self, cls: str, name: str, desc: str) -> int:
        cls_idx = self.class_(cls)
        nat = self._add(b"\x0c" + struct.pack(">HH", self.utf8(name), self.utf8(desc)))
        return self._add(b"\x0a" + struct.pack(">HH", cls_idx, nat))

    def render(self) -> bytes:
        return struct.pack(">H", len(self.entries) + 1) + b"".join(self.entries)


class Code:
    """Instruction-stream assembler tracking bytecode indexes."""

    def __init__(self, cp: ConstantPool) -> None:
        self.cp = cp
        self.buf = bytearray()

    @property
    def bci(self) -> int:
        return len(self.buf)

    def raw(self, *octets: int) -> "Code":
        self.buf.extend(octets)
        return self

    def nop(self):
        return self.raw(0x00)

    def iconst(self, value: int):
        return self.raw(0x03 + value)  # iconst_0 .. iconst_5

    def bipush(self, value: int):
        return self.raw(0x10, value & 0xFF)

    def sipush(self, value: int):
        self.raw(0x11)
        self.buf += struct.pack(">h", value)
        return self

    def iload(self, slot: int):
        return self.raw(0x15, slot)

    def istore(self, slot: int):
        return self.raw(0x36, slot)

    def astore(self, slot: int):
        return self.raw(0x3A, slot)

    def dup(self):
        return self.raw(0x59)

    def pop(self):
        return self.raw(0x57)

    def new(self, internal_name: str) -> int:
        bci = self.bci
        self.raw(0xBB)
        self.buf += struct.pack(">H", self.cp.class_(internal_name))
        return bci

    def newarray(self, atype: int) -> int:
        bci = self.bci
        self.raw(0xBC, atype)
        return bci

    def anewarray(self, internal_name: str) -> int:
        bci = self.bci
        self.raw(0xBD)
        self.buf += struct.pack(">H", self.cp.class_(internal_name))
        return bci

    def multianewarray(self, descriptor: str, dims: int) -> int:
        bci = self.bci
        self.raw(0xC5)
        self.buf += struct.pack(">H", self.cp.class_(descriptor))
        self.buf.append(dims)
        return bci

    def invokespecial(self, cls: str, name: str, desc: str):
        self.raw(0xB7)
        self.buf += struct.pack(">H", self.cp.methodref(cls, name, desc))
        return self

    def wide_iinc(self, slot: int, const: int):
        self.raw(0xC4, 0x84)
        self.buf += struct.pack(">Hh", slot, const)
        return self

    def wide_iload(self, slot: int):
        self.raw(0xC4, 0x15)
        self.buf += struct.pack(">H", slot)
        return self

    def goto(self, rel: int):
        self.raw(0xA7)
        self.buf += struct.pack(">h", rel)
        return self

    def tableswitch(self, low: int, high: int):
        """Jump table with all offsets pointing just past the instruction."""
        start = self.bci
        self.raw(0xAA)
        while self.bci % 4:
            self.raw(0x00)
        count = high - low + 1
        end_rel = (self.bci + 12 + 4 * count) - start
        self.buf += struct.pack(">iii", end_rel, low, high)
        self.buf += struct.pack(">i", end_rel) * count
        return self

    def lookupswitch(self, keys: list[int]):
        start = self.bci
        self.raw(0xAB)
        while self.bci % 4:
            self.raw(0x00)
        end_rel = (self.bci + 8 + 8 * len(keys)) - start
        self.buf += struct.pack(">ii", end_rel, len(keys))
        for key in sorted(keys):
            self.buf += struct.pack(">ii", key, end_rel)
        return self

    def vreturn(self):
        return self.raw(0xB1)


def assemble_class(cp: ConstantPool, class_internal_name: str, methods,
                   super_name: str = "java/lang/Object") -> bytes:
    """methods: (name, descriptor, Code-or-None, line_table) tuples.

    ``cp`` must be the pool the Code objects were assembled against.
    """
    this_idx = cp.class_(class_internal_name)
    super_idx = cp.class_(super_name)
    code_attr_idx = cp.utf8("Code")
    lnt_attr_idx = cp.utf8("LineNumberTable")

    method_blobs = []
    for name, desc, code, line_table in methods:
        name_idx, desc_idx = cp.utf8(name), cp.utf8(desc)
        blob = struct.pack(">HHH", 0x0001, name_idx, desc_idx)
        if code is None:
            blob += struct.pack(">H", 0)
        else:
            body = struct.pack(">HHI", 8, 8, len(code.buf)) + bytes(code.buf)
            body += struct.pack(">H", 0)  # exception table
            if line_table:
                lnt = struct.pack(">H", len(line_table))
                for bci, line in line_table:
                    lnt += struct.pack(">HH", bci, line)
                body += struct.pack(">H", 1)
                body += struct.pack(">HI", lnt_attr_idx, len(lnt)) + lnt
            else:
                body += struct.pack(">H", 0)
            blob += struct.pack(">H", 1)
            blob += struct.pack(">HI", code_attr_idx, len(body)) + body
        method_blobs.append(blob)

    out = bytearray()
    out += struct.pack(">IHH", 0xCAFEBABE, 0, 52)
    out += cp.render()
    out += struct.pack(">HHH", 0x0021, this_idx, super_idx)
    out += struct.pack(">H", 0)  # interfaces
    out += struct.pack(">H", 0)  # fields
    out += struct.pack(">H", len(method_blobs))
    out += b"".join(method_blobs)
    out += struct.pack(">H", 0)  # class attributes
    return bytes(out)
