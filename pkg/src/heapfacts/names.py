"""Canonical spellings for class names, type descriptors, and method ids.

Everything downstream joins on one spelling: dotted class names
(``com.example.C``), source-style type names (``int``, ``java.lang.String[]``),
and the method id ``<com.example.C: void m(int,java.lang.String)>``.
"""

from __future__ import annotations

_PRIMITIVE_BY_DESC = {
    "B": "byte",
    "C": "char",
    "D": "double",
    "F": "float",
    "I": "int",
    "J": "long",
    "S": "short",
    "Z": "boolean",
    "V": "void",
}

PRIMITIVE_ARRAY_TYPES = frozenset(
    p + "[]" for p in _PRIMITIVE_BY_DESC.values() if p != "void"
)

# newarray operand -> element type (JVM atype codes)
NEWARRAY_TYPES = {
    4: "boolean",
    5: "char",
    6: "float",
    7: "double",
    8: "byte",
    9: "short",
    10: "int",
    11: "long",
}


def normalize_class_name(name: str) -> str:
    """Map a JVM internal or descriptor-style class name to dotted form.

    ``com/ex/C`` -> ``com.ex.C``; ``[Lcom/ex/C;`` -> ``com.ex.C[]``;
    ``[[I`` -> ``int[][]``. Names already in dotted form pass through.
    """
    if name.startswith("["):
        dims = 0
        while dims < len(name) and name[dims] == "[":
            dims += 1
        elem = name[dims:]
        if elem.startswith("L") and elem.endswith(";"):
            base = elem[1:-1].replace("/", ".")
        else:
            base = _PRIMITIVE_BY_DESC.get(elem, elem)
        return base + "[]" * dims
    return name.replace("/", ".")


def descriptor_to_source(desc: str) -> str:
    """Convert one JVM field/type descriptor to a source-style type name."""
    dims = 0
    while dims < len(desc) and desc[dims] == "[":
        dims += 1
    core = desc[dims:]
    if core.startswith("L") and core.endswith(";"):
        base = core[1:-1].replace("/", ".")
    else:
        base = _PRIMITIVE_BY_DESC.get(core, core)
    return base + "[]" * dims


def split_method_descriptor(desc: str) -> tuple[list[str], str]:
    """Split ``(II)V`` into (["int", "int"], "void").

    Raises ValueError on a string that is not a method descriptor.
    """
    if not desc.startswith("("):
        raise ValueError(f"not a method descriptor: {desc!r}")
    close = desc.index(")")
    args = []
    i = 1
    while i < close:
        start = i
        while desc[i] == "[":
            i += 1
        if desc[i] == "L":
            i = desc.index(";", i) + 1
        else:
            i += 1
        args.append(descriptor_to_source(desc[start:i]))
    ret = descriptor_to_source(desc[close + 1 :])
    return args, ret


_DESC_BY_PRIMITIVE = {v: k for k, v in _PRIMITIVE_BY_DESC.items()}


def source_type_to_descriptor(name: str) -> str:
    """Source-style type name back to a JVM descriptor."""
    dims = 0
    while name.endswith("[]"):
        name = name[:-2]
        dims += 1
    core = _DESC_BY_PRIMITIVE.get(name) or "L" + name.replace(".", "/") + ";"
    return "[" * dims + core


def parse_signature(signature_id: str) -> "tuple[str, str, str] | None":
    """Split ``<a.b.C: ret name(arg1,arg2)>`` into (class, name, descriptor).

    Returns None when the text does not follow the canonical format.
    """
    if not (signature_id.startswith("<") and signature_id.endswith(">")):
        return None
    body = signature_id[1:-1]
    cls, sep, rest = body.partition(": ")
    if not sep or "(" not in rest or not rest.endswith(")"):
        return None
    head, _, args_text = rest[:-1].partition("(")
    parts = head.rsplit(" ", 1)
    if len(parts) != 2:
        return None
    ret, name = parts
    try:
        args = [a for a in args_text.split(",") if a] if args_text else []
        desc = "(" + "".join(source_type_to_descriptor(a) for a in args) + ")"
        desc += source_type_to_descriptor(ret)
    except Exception:
        return None
    return cls, name, desc


def method_signature(class_name: str, method_name: str, descriptor: str) -> str:
    """Canonical method id: ``<a.b.C: ret name(arg1,arg2)>``.

    Falls back to embedding the raw descriptor when it does not parse,
    so frames from damaged debug info still get a stable, joinable key.
    """
    cls = normalize_class_name(class_name)
    try:
        args, ret = split_method_descriptor(descriptor)
    except (ValueError, IndexError):
        return f"<{cls}: {method_name}{descriptor}>"
    return f"<{cls}: {ret} {method_name}({','.join(args)})>"
