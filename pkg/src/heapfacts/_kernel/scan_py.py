"""Pure-Python scan kernel.

Decodes the body of a heap-dump record (the hot path on real dumps:
millions of sub-records) and packed instance field values.  The compiled
kernel in ``_scan_cy`` implements the same contract; both must produce
identical structures, including warning texts, for identical inputs.

Sub-record tuples produced by :func:`scan_heap_segment`, in file order:

    ("class", class_obj_id, trace_serial, super_id, loader_id,
              statics, layout)        statics: ((name_id, type, value), ...)
                                      layout:  ((name_id, type), ...)
    ("instance", obj_id, trace_serial, class_obj_id, raw_field_bytes)
    ("objarray", obj_id, trace_serial, array_class_id, element_ids)
    ("primarray", obj_id, trace_serial, elem_type, count, data)
    ("root", root_kind, obj_id)

Warnings are (offset_within_body, message) pairs; an undecodable or
truncated sub-record stops the scan of that body (sub-records are not
length-prefixed, so there is no way to resync).
"""

from __future__ import annotations

import struct

BACKEND = "pure"

# HPROF basic-type codes -> value size in bytes (2 = object, sized by id)
TYPE_SIZES = {2: 0, 4: 1, 5: 2, 6: 4, 7: 8, 8: 1, 9: 2, 10: 4, 11: 8}

TRUNCATED = "sub-record truncated"

_U2 = struct.Struct(">H")
_U4 = struct.Struct(">I")
_U8 = struct.Struct(">Q")
_I1 = struct.Struct(">b")
_I2 = struct.Struct(">h")
_I4 = struct.Struct(">i")
_I8 = struct.Struct(">q")
_F4 = struct.Struct(">f")
_F8 = struct.Struct(">d")

# GC-root sub-tag -> number of trailing u4 words after the object id
# (JNI GLOBAL instead carries a second identifier)
_ROOT_EXTRA_U4 = {
    0xFF: 0,
    0x02: 2,
    0x03: 2,
    0x04: 1,
    0x05: 0,
    0x06: 1,
    0x07: 0,
    0x08: 2,
}

SUB_CLASS = 0x20
SUB_INSTANCE = 0x21
SUB_OBJECT_ARRAY = 0x22
SUB_PRIMITIVE_ARRAY = 0x23
SUB_JNI_GLOBAL = 0x01


def _value_size(type_code: int, id_size: int) -> int:
    size = TYPE_SIZES.get(type_code)
    if size is None:
        raise ValueError(f"unknown basic type {type_code}")
    return id_size if type_code == 2 else size


def _decode_one(data: bytes, pos: int, type_code: int, id_size: int):
    if type_code == 2:
        return (_U8 if id_size == 8 else _U4).unpack_from(data, pos)[0]
    if type_code == 4:
        return data[pos] != 0
    if type_code == 5:
        return _U2.unpack_from(data, pos)[0]
    if type_code == 6:
        return _F4.unpack_from(data, pos)[0]
    if type_code == 7:
        return _F8.unpack_from(data, pos)[0]
    if type_code == 8:
        return _I1.unpack_from(data, pos)[0]
    if type_code == 9:
        return _I2.unpack_from(data, pos)[0]
    if type_code == 10:
        return _I4.unpack_from(data, pos)[0]
    if type_code == 11:
        return _I8.unpack_from(data, pos)[0]
    raise ValueError(f"unknown basic type {type_code}")


def decode_values(data: bytes, types: bytes, id_size: int) -> tuple:
    """Decode a packed value sequence (e.g. instance field bytes).

    ``types`` is a byte string of basic-type codes.  Raises ValueError
    if ``data`` is shorter than the declared layout.
    """
    out = []
    pos = 0
    n = len(data)
    for code in types:
        size = _value_size(code, id_size)
        if pos + size > n:
            raise ValueError(f"value data underrun at offset {pos}")
        out.append(_decode_one(data, pos, code, id_size))
        pos += size
    return tuple(out)


def scan_heap_segment(data: bytes, id_size: int):
    """Scan one heap-dump record body into sub-record tuples."""
    read_id = (_U8 if id_size == 8 else _U4).unpack_from
    subrecords = []
    warnings = []
    pos = 0
    n = len(data)

    def need(count: int) -> None:
        if pos + count > n:
            raise ValueError(TRUNCATED)

    try:
        while pos < n:
            tag = data[pos]
            start = pos
            pos += 1
            if tag == SUB_INSTANCE:
                need(2 * id_size + 8)
                obj_id = read_id(data, pos)[0]
                trace = _U4.unpack_from(data, pos + id_size)[0]
                class_id = read_id(data, pos + id_size + 4)[0]
                nbytes = _U4.unpack_from(data, pos + 2 * id_size + 4)[0]
                pos += 2 * id_size + 8
                need(nbytes)
                subrecords.append(
                    ("instance", obj_id, trace, class_id, data[pos : pos + nbytes])
                )
                pos += nbytes
            elif tag == SUB_OBJECT_ARRAY:
                need(2 * id_size + 8)
                obj_id = read_id(data, pos)[0]
                trace = _U4.unpack_from(data, pos + id_size)[0]
                count = _U4.unpack_from(data, pos + id_size + 4)[0]
                array_class = read_id(data, pos + id_size + 8)[0]
                pos += 2 * id_size + 8
                need(count * id_size)
                elems = tuple(
                    read_id(data, pos + i * id_size)[0] for i in range(count)
                )
                pos += count * id_size
                subrecords.append(("objarray", obj_id, trace, array_class, elems))
            elif tag == SUB_PRIMITIVE_ARRAY:
                need(id_size + 9)
                obj_id = read_id(data, pos)[0]
                trace = _U4.unpack_from(data, pos + id_size)[0]
                count = _U4.unpack_from(data, pos + id_size + 4)[0]
                elem_type = data[pos + id_size + 8]
                pos += id_size + 9
                nbytes = count * _value_size(elem_type, id_size)
                need(nbytes)
                subrecords.append(
                    ("primarray", obj_id, trace, elem_type, count, data[pos : pos + nbytes])
                )
                pos += nbytes
            elif tag == SUB_CLASS:
                # class id, super, loader, signers, protection domain, and
                # two reserved ids precede the instance size
                need(7 * id_size + 10)
                obj_id = read_id(data, pos)[0]
                trace = _U4.unpack_from(data, pos + id_size)[0]
                super_id = read_id(data, pos + id_size + 4)[0]
                loader_id = read_id(data, pos + 2 * id_size + 4)[0]
                pos += 7 * id_size + 8
                const_count = _U2.unpack_from(data, pos)[0]
                pos += 2
                for _ in range(const_count):
                    need(3)
                    ctype = data[pos + 2]
                    pos += 3
                    need(_value_size(ctype, id_size))
                    pos += _value_size(ctype, id_size)
                need(2)
                n_static = _U2.unpack_from(data, pos)[0]
                pos += 2
                statics = []
                for _ in range(n_static):
                    need(id_size + 1)
                    name_id = read_id(data, pos)[0]
                    ftype = data[pos + id_size]
                    pos += id_size + 1
                    need(_value_size(ftype, id_size))
                    statics.append(
                        (name_id, ftype, _decode_one(data, pos, ftype, id_size))
                    )
                    pos += _value_size(ftype, id_size)
                need(2)
                n_fields = _U2.unpack_from(data, pos)[0]
                pos += 2
                layout = []
                for _ in range(n_fields):
                    need(id_size + 1)
                    name_id = read_id(data, pos)[0]
                    layout.append((name_id, data[pos + id_size]))
                    pos += id_size + 1
                subrecords.append(
                    ("class", obj_id, trace, super_id, loader_id,
                     tuple(statics), tuple(layout))
                )
            elif tag == SUB_JNI_GLOBAL:
                need(2 * id_size)
                obj_id = read_id(data, pos)[0]
                pos += 2 * id_size  # id + global ref id
                subrecords.append(("root", tag, obj_id))
            elif tag in _ROOT_EXTRA_U4:
                need(id_size + 4 * _ROOT_EXTRA_U4[tag])
                obj_id = read_id(data, pos)[0]
                pos += id_size + 4 * _ROOT_EXTRA_U4[tag]
                subrecords.append(("root", tag, obj_id))
            else:
                warnings.append(
                    (start, f"unknown heap sub-record tag 0x{tag:02x}; rest of segment skipped")
                )
                break
    except ValueError as exc:
        warnings.append((start, f"heap sub-record undecodable: {exc}"))
    return subrecords, warnings
