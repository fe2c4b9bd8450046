"""Reader for the binary heap-dump format (JAVA PROFILE 1.0.2).

Layout: a null-terminated format-name string, a 4-byte identifier size,
an 8-byte millisecond timestamp, then length-prefixed records of
``{u1 tag, u4 relative timestamp, u4 body length, body}``.  All values
are big-endian.  Heap-dump bodies are decoded by the scan kernel.

Corruption handling: only a malformed header is fatal.  A record whose
body does not decode is skipped using its declared length; a truncated
record ends the parse.  Both append a warning carrying the byte offset,
and everything decoded up to that point is returned.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Union

from . import _kernel
from .errors import HeaderMalformed

TAG_UTF8 = 0x01
TAG_LOAD_CLASS = 0x02
TAG_STACK_FRAME = 0x04
TAG_STACK_TRACE = 0x05
TAG_HEAP_DUMP = 0x0C
TAG_HEAP_DUMP_SEGMENT = 0x1C
TAG_HEAP_DUMP_END = 0x2C

_FORMAT_PREFIX = b"JAVA PROFILE"
_U4 = struct.Struct(">I")
_U8 = struct.Struct(">Q")
_RECORD_HEADER = struct.Struct(">BII")


@dataclass(frozen=True)
class DumpHeader:
    format_name: str
    id_size: int
    timestamp_ms: int


@dataclass(frozen=True)
class ParseWarning:
    byte_offset: int
    message: str


@dataclass(frozen=True)
class Utf8Record:
    sid: int
    text: str
    tag: int = TAG_UTF8


@dataclass(frozen=True)
class LoadClassRecord:
    serial: int
    class_obj_id: int
    trace_serial: int
    name_id: int
    tag: int = TAG_LOAD_CLASS


@dataclass(frozen=True)
class StackFrameRecord:
    frame_id: int
    method_name_id: int
    method_sig_id: int
    source_file_id: int
    class_serial: int
    line: int  # raw sentinel values preserved; normalized downstream
    tag: int = TAG_STACK_FRAME


@dataclass(frozen=True)
class StackTraceRecord:
    trace_serial: int
    thread_serial: int
    frame_ids: tuple[int, ...]
    tag: int = TAG_STACK_TRACE


@dataclass(frozen=True)
class HeapRecord:
    """One logical heap record (split segments are concatenated)."""

    subrecords: tuple
    tag: int = TAG_HEAP_DUMP


@dataclass(frozen=True)
class OpaqueRecord:
    """A record with an unhandled tag, preserved as raw bytes."""

    tag: int
    body: bytes


Record = Union[
    Utf8Record, LoadClassRecord, StackFrameRecord, StackTraceRecord,
    HeapRecord, OpaqueRecord,
]

_KIND_NAMES = {
    Utf8Record: "Utf8String",
    LoadClassRecord: "LoadClass",
    StackFrameRecord: "StackFrame",
    StackTraceRecord: "StackTrace",
    HeapRecord: "HeapDump",
}


@dataclass
class RawDump:
    header: DumpHeader
    strings: dict[int, str]
    records: list[Record]
    warnings: list[ParseWarning] = field(default_factory=list)


def parse_file(path) -> RawDump:
    with open(path, "rb") as fh:
        return parse_dump(fh.read())


def parse_dump(source: Union[bytes, bytearray, BinaryIO]) -> RawDump:
    """Parse a dump byte stream into raw records.

    Raises HeaderMalformed when the format-name prefix or identifier
    size is unusable; all other corruption surfaces as warnings.
    """
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    data = bytes(data)

    nul = data.find(b"\x00")
    if nul < 0 or not data.startswith(_FORMAT_PREFIX):
        raise HeaderMalformed("missing format-name prefix")
    if len(data) < nul + 13:
        raise HeaderMalformed("header truncated")
    id_size = _U4.unpack_from(data, nul + 1)[0]
    if id_size not in (4, 8):
        raise HeaderMalformed(f"identifier size {id_size} not supported")
    timestamp = _U8.unpack_from(data, nul + 5)[0]
    header = DumpHeader(data[:nul].decode("ascii", "replace"), id_size, timestamp)

    read_id = (_U8 if id_size == 8 else _U4).unpack_from
    records: list[Record] = []
    warnings: list[ParseWarning] = []
    strings: dict[int, str] = {}

    pos = nul + 13
    n = len(data)
    truncated = False
    # open heap-segment group: records index of the HeapRecord under construction
    open_heap: int | None = None
    open_subrecords: list = []
    ended_clean = False  # last element was a heap record or end marker

    def close_heap_group() -> None:
        nonlocal open_heap
        if open_heap is not None:
            records[open_heap] = HeapRecord(tuple(open_subrecords))
            open_heap = None
            open_subrecords.clear()

    while pos < n:
        if pos + 9 > n:
            warnings.append(ParseWarning(pos, "record header truncated"))
            truncated = True
            break
        tag, _time, length = _RECORD_HEADER.unpack_from(data, pos)
        body_start = pos + 9
        if body_start + length > n:
            warnings.append(ParseWarning(pos, "record body truncated"))
            truncated = True
            break
        body = data[body_start : body_start + length]
        pos = body_start + length
        ended_clean = False
        try:
            if tag == TAG_UTF8:
                sid = read_id(body, 0)[0]
                text = body[id_size:].decode("utf-8", "replace")
                strings[sid] = text
                records.append(Utf8Record(sid, text))
            elif tag == TAG_LOAD_CLASS:
                serial = _U4.unpack_from(body, 0)[0]
                class_obj_id = read_id(body, 4)[0]
                trace_serial = _U4.unpack_from(body, 4 + id_size)[0]
                name_id = read_id(body, 8 + id_size)[0]
                records.append(
                    LoadClassRecord(serial, class_obj_id, trace_serial, name_id)
                )
            elif tag == TAG_STACK_FRAME:
                frame_id = read_id(body, 0)[0]
                method_name_id = read_id(body, id_size)[0]
                method_sig_id = read_id(body, 2 * id_size)[0]
                source_file_id = read_id(body, 3 * id_size)[0]
                class_serial, line = struct.unpack_from(">Ii", body, 4 * id_size)
                records.append(
                    StackFrameRecord(
                        frame_id, method_name_id, method_sig_id,
                        source_file_id, class_serial, line,
                    )
                )
            elif tag == TAG_STACK_TRACE:
                trace_serial, thread_serial, nframes = struct.unpack_from(">III", body, 0)
                if 12 + nframes * id_size > len(body):
                    raise struct.error("frame ids exceed record body")
                frame_ids = tuple(
                    read_id(body, 12 + i * id_size)[0] for i in range(nframes)
                )
                records.append(
                    StackTraceRecord(trace_serial, thread_serial, frame_ids)
                )
            elif tag in (TAG_HEAP_DUMP, TAG_HEAP_DUMP_SEGMENT):
                subrecords, sub_warnings = _kernel.scan_heap_segment(body, id_size)
                for off, msg in sub_warnings:
                    warnings.append(ParseWarning(body_start + off, msg))
                if tag == TAG_HEAP_DUMP:
                    close_heap_group()
                    records.append(HeapRecord(tuple(subrecords)))
                    ended_clean = True
                else:
                    if open_heap is None:
                        open_heap = len(records)
                        records.append(HeapRecord(()))
                    open_subrecords.extend(subrecords)
            elif tag == TAG_HEAP_DUMP_END:
                close_heap_group()
                ended_clean = True
            else:
                records.append(OpaqueRecord(tag, body))
        except (struct.error, IndexError) as exc:
            warnings.append(
                ParseWarning(body_start, f"record 0x{tag:02x} undecodable, skipped: {exc}")
            )

    close_heap_group()
    if records and not ended_clean and not truncated:
        warnings.append(
            ParseWarning(pos, "dump ends without heap-dump terminator (possible truncation)")
        )
    return RawDump(header, strings, records, warnings)


def record_stats(dump: RawDump) -> dict[str, int]:
    """Count records per kind; unhandled tags count under ``Unknown_0xNN``."""
    counts = {name: 0 for name in _KIND_NAMES.values()}
    for rec in dump.records:
        name = _KIND_NAMES.get(type(rec))
        if name is None:
            name = f"Unknown_0x{rec.tag:02X}"
        counts[name] = counts.get(name, 0) + 1
    return counts
