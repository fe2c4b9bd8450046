"""Reader tests against hand-encoded byte streams and builder round trips."""

import struct

import pytest

from heapfacts import hprof, synth
from heapfacts.errors import HeaderMalformed

ID8 = ">Q"


def raw_header(id_size: int = 8) -> bytes:
    return b"JAVA PROFILE 1.0.2\x00" + struct.pack(">IQ", id_size, 12345)


def raw_record(tag: int, body: bytes) -> bytes:
    return struct.pack(">BII", tag, 0, len(body)) + body


def five_record_fixture() -> tuple[bytes, list[bytes]]:
    """The canonical small dump, one hand-encoded record per kind."""
    records = [
        raw_record(0x01, struct.pack(ID8, 1) + b"com/ex/C"),
        raw_record(0x02, struct.pack(">I", 1) + struct.pack(ID8, 0x10)
                   + struct.pack(">I", 0) + struct.pack(ID8, 1)),
        raw_record(0x04, struct.pack(ID8, 0x20) + struct.pack(ID8, 1)
                   + struct.pack(ID8, 1) + struct.pack(ID8, 0)
                   + struct.pack(">Ii", 1, 7)),
        raw_record(0x05, struct.pack(">III", 1, 1, 1) + struct.pack(ID8, 0x20)),
        raw_record(0x0C, _class_dump(0x10) + _instance_dump(0x30, 0x10, 1)),
    ]
    return raw_header() + b"".join(records), records


def _class_dump(class_id: int) -> bytes:
    body = b"\x20" + struct.pack(ID8, class_id) + struct.pack(">I", 0)
    body += struct.pack(ID8, 0) * 6  # super, loader, signers, domain, reserved
    body += struct.pack(">IHHH", 0, 0, 0, 0)  # size, cpool, statics, fields
    return body


def _instance_dump(obj_id: int, class_id: int, trace: int) -> bytes:
    return (b"\x21" + struct.pack(ID8, obj_id) + struct.pack(">I", trace)
            + struct.pack(ID8, class_id) + struct.pack(">I", 0))


class TestHeader:
    def test_missing_prefix_is_fatal(self):
        with pytest.raises(HeaderMalformed):
            hprof.parse_dump(b"NOT A PROFILE\x00" + struct.pack(">IQ", 8, 0))

    def test_bad_id_size_is_fatal(self):
        with pytest.raises(HeaderMalformed):
            hprof.parse_dump(b"JAVA PROFILE 1.0.2\x00" + struct.pack(">IQ", 5, 0))

    def test_truncated_header_is_fatal(self):
        with pytest.raises(HeaderMalformed):
            hprof.parse_dump(b"JAVA PROFILE 1.0.2\x00\x00\x00")

    def test_header_fields(self):
        dump = hprof.parse_dump(raw_header(4))
        assert dump.header.format_name == "JAVA PROFILE 1.0.2"
        assert dump.header.id_size == 4
        assert dump.header.timestamp_ms == 12345


class TestParse:
    def test_empty_dump(self):
        dump = hprof.parse_dump(raw_header())
        assert dump.records == []
        assert dump.warnings == []

    def test_five_record_fixture_field_for_field(self):
        data, _ = five_record_fixture()
        dump = hprof.parse_dump(data)
        assert dump.warnings == []
        utf8, load, frame, trace, heap = dump.records
        assert utf8 == hprof.Utf8Record(1, "com/ex/C")
        assert load == hprof.LoadClassRecord(1, 0x10, 0, 1)
        assert frame == hprof.StackFrameRecord(0x20, 1, 1, 0, 1, 7)
        assert trace == hprof.StackTraceRecord(1, 1, (0x20,))
        assert heap.subrecords == (
            ("class", 0x10, 0, 0, 0, (), ()),
            ("instance", 0x30, 1, 0x10, b""),
        )

    def test_truncated_after_fourth_record(self):
        data, records = five_record_fixture()
        cut = len(raw_header()) + sum(len(r) for r in records[:4])
        dump = hprof.parse_dump(data[:cut])
        assert len(dump.records) == 4
        assert len(dump.warnings) == 1
        assert dump.warnings[0].byte_offset == cut

    def test_truncated_mid_record(self):
        data, records = five_record_fixture()
        cut = len(raw_header()) + sum(len(r) for r in records[:4]) + 11
        dump = hprof.parse_dump(data[:cut])
        assert len(dump.records) == 4
        assert len(dump.warnings) == 1
        assert "truncated" in dump.warnings[0].message

    def test_unknown_tag_preserved_and_skipped(self):
        data = raw_header() + raw_record(0x0B, b"\x01\x02") \
            + raw_record(0x01, struct.pack(ID8, 9) + b"x") + raw_record(0x2C, b"")
        dump = hprof.parse_dump(data)
        assert dump.records[0] == hprof.OpaqueRecord(0x0B, b"\x01\x02")
        assert dump.records[1].text == "x"
        assert dump.warnings == []

    def test_unknown_heap_subtag_warns_but_stream_continues(self):
        data = raw_header() \
            + raw_record(0x1C, b"\x77whatever") \
            + raw_record(0x01, struct.pack(ID8, 9) + b"x") + raw_record(0x2C, b"")
        dump = hprof.parse_dump(data)
        assert any("0x77" in w.message for w in dump.warnings)
        assert any(isinstance(r, hprof.Utf8Record) for r in dump.records)

    def test_segments_merge_into_one_logical_record(self):
        data = raw_header() \
            + raw_record(0x1C, _class_dump(0x10)) \
            + raw_record(0x1C, _instance_dump(0x30, 0x10, 0)) \
            + raw_record(0x2C, b"")
        dump = hprof.parse_dump(data)
        heaps = [r for r in dump.records if isinstance(r, hprof.HeapRecord)]
        assert len(heaps) == 1
        assert [s[0] for s in heaps[0].subrecords] == ["class", "instance"]
        assert dump.warnings == []

    def test_standalone_heap_dumps_stay_separate(self):
        data = raw_header() \
            + raw_record(0x0C, _class_dump(0x10)) \
            + raw_record(0x0C, _instance_dump(0x30, 0x10, 0))
        dump = hprof.parse_dump(data)
        assert hprof.record_stats(dump)["HeapDump"] == 2
        assert dump.warnings == []

    def test_parse_is_pure(self):
        data = synth.emit(synth.random_program(11, 25))
        assert hprof.parse_dump(data) == hprof.parse_dump(data)

    @pytest.mark.parametrize("id_size", [4, 8])
    def test_both_id_sizes(self, id_size):
        data = synth.emit(synth.random_program(5, 15), id_size)
        dump = hprof.parse_dump(data)
        assert dump.warnings == []
        assert dump.header.id_size == id_size


class TestRecordStats:
    def test_empty_dump_all_zero(self):
        stats = hprof.record_stats(hprof.parse_dump(raw_header()))
        assert stats == {"Utf8String": 0, "LoadClass": 0, "StackFrame": 0,
                         "StackTrace": 0, "HeapDump": 0}

    def test_fixture_counts(self):
        data, _ = five_record_fixture()
        stats = hprof.record_stats(hprof.parse_dump(data))
        assert stats == {"Utf8String": 1, "LoadClass": 1, "StackFrame": 1,
                         "StackTrace": 1, "HeapDump": 1}

    def test_concatenated_record_streams_double_counts(self):
        _, records = five_record_fixture()
        body = b"".join(records)
        dump = hprof.parse_dump(raw_header() + body + body)
        stats = hprof.record_stats(dump)
        assert stats == {"Utf8String": 2, "LoadClass": 2, "StackFrame": 2,
                         "StackTrace": 2, "HeapDump": 2}

    def test_counts_sum_to_record_count(self):
        dump = hprof.parse_dump(synth.emit(synth.random_program(2, 30)))
        assert sum(hprof.record_stats(dump).values()) == len(dump.records)


def record_boundaries(data: bytes) -> list[int]:
    """Byte offsets of record starts, from the framing alone."""
    nul = data.index(b"\x00")
    offsets = []
    pos = nul + 13
    while pos < len(data):
        offsets.append(pos)
        _tag, _t, length = struct.unpack_from(">BII", data, pos)
        pos += 9 + length
    offsets.append(len(data))
    return offsets


class TestPrefixMonotonicity:
    @pytest.mark.parametrize("seed", range(5))
    def test_boundary_truncations_parse_as_prefixes(self, seed):
        data = synth.emit(synth.random_program(seed, 12))
        full = hprof.parse_dump(data).records
        bounds = record_boundaries(data)
        for cut in bounds[1:-1]:
            partial = hprof.parse_dump(data[:cut])
            assert partial.records == full[: len(partial.records)]
