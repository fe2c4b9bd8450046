# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scan kernel.

Same contract as scan_py (tuple shapes, warning texts, error messages);
the parity suite asserts equality on randomized and adversarial inputs.
"""

from libc.string cimport memcpy

BACKEND = "compiled"

TRUNCATED = "sub-record truncated"


cdef inline unsigned int _ru2(const unsigned char* b):
    return (<unsigned int>b[0] << 8) | b[1]


cdef inline unsigned int _ru4(const unsigned char* b):
    return ((<unsigned int>b[0] << 24) | (<unsigned int>b[1] << 16)
            | (<unsigned int>b[2] << 8) | b[3])


cdef inline unsigned long long _ru8(const unsigned char* b):
    return (<unsigned long long>_ru4(b) << 32) | _ru4(b + 4)


cdef inline double _rf4(const unsigned char* b):
    cdef unsigned int u = _ru4(b)
    cdef float f
    memcpy(&f, &u, 4)
    return <double>f


cdef inline double _rf8(const unsigned char* b):
    cdef unsigned long long u = _ru8(b)
    cdef double d
    memcpy(&d, &u, 8)
    return d


cdef inline unsigned long long _rid(const unsigned char* b, int id_size):
    return _ru8(b) if id_size == 8 else <unsigned long long>_ru4(b)


cdef int _value_size(int code, int id_size) except -1:
    if code == 2:
        return id_size
    if code == 4 or code == 8:
        return 1
    if code == 5 or code == 9:
        return 2
    if code == 6 or code == 10:
        return 4
    if code == 7 or code == 11:
        return 8
    raise ValueError(f"unknown basic type {code}")


cdef object _decode_one(const unsigned char* b, int code, int id_size):
    if code == 2:
        return _rid(b, id_size)
    if code == 4:
        return b[0] != 0
    if code == 5:
        return _ru2(b)
    if code == 6:
        return _rf4(b)
    if code == 7:
        return _rf8(b)
    if code == 8:
        return <long>(<signed char>b[0])
    if code == 9:
        return <long>(<short>_ru2(b))
    if code == 10:
        return <long>(<int>_ru4(b))
    if code == 11:
        return <long long>_ru8(b)
    raise ValueError(f"unknown basic type {code}")


def decode_values(data: bytes, types: bytes, id_size: int):
    cdef const unsigned char* buf = data
    cdef const unsigned char* tbuf = types
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t ntypes = len(types)
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t i
    cdef int code, size
    cdef int isize = id_size
    out = []
    for i in range(ntypes):
        code = tbuf[i]
        size = _value_size(code, isize)
        if pos + size > n:
            raise ValueError(f"value data underrun at offset {pos}")
        out.append(_decode_one(buf + pos, code, isize))
        pos += size
    return tuple(out)


cdef int _root_extra_u4(int tag):
    # trailing u4 words after the object id; -1 means not a plain root tag
    if tag == 0xFF or tag == 0x05 or tag == 0x07:
        return 0
    if tag == 0x04 or tag == 0x06:
        return 1
    if tag == 0x02 or tag == 0x03 or tag == 0x08:
        return 2
    return -1


def scan_heap_segment(data: bytes, id_size: int):
    cdef const unsigned char* buf = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t start = 0
    cdef int isize = id_size
    cdef int tag, extra, ctype, ftype
    cdef unsigned long long obj_id, class_id, super_id, loader_id, name_id
    cdef unsigned int trace, count, nbytes
    cdef unsigned long long total
    cdef Py_ssize_t i
    subrecords = []
    warnings = []
    try:
        while pos < n:
            tag = buf[pos]
            start = pos
            pos += 1
            if tag == 0x21:  # instance dump
                if pos + 2 * isize + 8 > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                trace = _ru4(buf + pos + isize)
                class_id = _rid(buf + pos + isize + 4, isize)
                nbytes = _ru4(buf + pos + 2 * isize + 4)
                pos += 2 * isize + 8
                if pos + <Py_ssize_t>nbytes > n:
                    raise ValueError(TRUNCATED)
                subrecords.append(
                    ("instance", obj_id, trace, class_id, data[pos:pos + nbytes]))
                pos += nbytes
            elif tag == 0x22:  # object array dump
                if pos + 2 * isize + 8 > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                trace = _ru4(buf + pos + isize)
                count = _ru4(buf + pos + isize + 4)
                class_id = _rid(buf + pos + isize + 8, isize)
                pos += 2 * isize + 8
                total = <unsigned long long>count * isize
                if pos + <Py_ssize_t>total > n:
                    raise ValueError(TRUNCATED)
                elems = []
                for i in range(count):
                    elems.append(_rid(buf + pos + i * isize, isize))
                pos += <Py_ssize_t>total
                subrecords.append(
                    ("objarray", obj_id, trace, class_id, tuple(elems)))
            elif tag == 0x23:  # primitive array dump
                if pos + isize + 9 > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                trace = _ru4(buf + pos + isize)
                count = _ru4(buf + pos + isize + 4)
                ctype = buf[pos + isize + 8]
                pos += isize + 9
                total = <unsigned long long>count * _value_size(ctype, isize)
                if pos + <Py_ssize_t>total > n:
                    raise ValueError(TRUNCATED)
                subrecords.append(
                    ("primarray", obj_id, trace, ctype, count,
                     data[pos:pos + <Py_ssize_t>total]))
                pos += <Py_ssize_t>total
            elif tag == 0x20:  # class dump
                if pos + 7 * isize + 10 > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                trace = _ru4(buf + pos + isize)
                super_id = _rid(buf + pos + isize + 4, isize)
                loader_id = _rid(buf + pos + 2 * isize + 4, isize)
                pos += 7 * isize + 8
                count = _ru2(buf + pos)
                pos += 2
                for i in range(count):
                    if pos + 3 > n:
                        raise ValueError(TRUNCATED)
                    ctype = buf[pos + 2]
                    pos += 3
                    if pos + _value_size(ctype, isize) > n:
                        raise ValueError(TRUNCATED)
                    pos += _value_size(ctype, isize)
                if pos + 2 > n:
                    raise ValueError(TRUNCATED)
                count = _ru2(buf + pos)
                pos += 2
                statics = []
                for i in range(count):
                    if pos + isize + 1 > n:
                        raise ValueError(TRUNCATED)
                    name_id = _rid(buf + pos, isize)
                    ftype = buf[pos + isize]
                    pos += isize + 1
                    if pos + _value_size(ftype, isize) > n:
                        raise ValueError(TRUNCATED)
                    statics.append(
                        (name_id, ftype, _decode_one(buf + pos, ftype, isize)))
                    pos += _value_size(ftype, isize)
                if pos + 2 > n:
                    raise ValueError(TRUNCATED)
                count = _ru2(buf + pos)
                pos += 2
                layout = []
                for i in range(count):
                    if pos + isize + 1 > n:
                        raise ValueError(TRUNCATED)
                    name_id = _rid(buf + pos, isize)
                    layout.append((name_id, buf[pos + isize]))
                    pos += isize + 1
                subrecords.append(
                    ("class", obj_id, trace, super_id, loader_id,
                     tuple(statics), tuple(layout)))
            elif tag == 0x01:  # JNI global root: id + global ref id
                if pos + 2 * isize > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                pos += 2 * isize
                subrecords.append(("root", tag, obj_id))
            else:
                extra = _root_extra_u4(tag)
                if extra < 0:
                    warnings.append(
                        (start,
                         f"unknown heap sub-record tag 0x{tag:02x}; "
                         f"rest of segment skipped"))
                    break
                if pos + isize + 4 * extra > n:
                    raise ValueError(TRUNCATED)
                obj_id = _rid(buf + pos, isize)
                pos += isize + 4 * extra
                subrecords.append(("root", tag, obj_id))
    except ValueError as exc:
        warnings.append((start, f"heap sub-record undecodable: {exc}"))
    return subrecords, warnings
