"""Aggregated view of the program's code: method and allocation-site lookup.

Sources are class files (scanned from files, directories, and zip
archives) or a pre-digested site-map file for pipelines that have no
bytecode at hand.  The site-map format is line-oriented UTF-8 text:

    signature_id <TAB> allocated_type <TAB> line-or-dash <TAB> site_index
"""

from __future__ import annotations

import zipfile
from dataclasses import dataclass, field
from pathlib import Path

from .classfile import AllocationInstr, MethodMeta, parse_classfile
from .errors import MalformedClassFile, SiteMapSyntax
from .names import parse_signature


@dataclass
class CodeModel:
    methods: dict[str, MethodMeta] = field(default_factory=dict)
    classes_seen: set[str] = field(default_factory=set)
    source: str = "empty"
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_key = {
            (m.declaring_class, m.name, m.descriptor): m
            for m in self.methods.values()
        }

    def add_method(self, meta: MethodMeta) -> bool:
        """Register a method; returns False on a duplicate signature."""
        if meta.signature_id in self.methods:
            return False
        self.methods[meta.signature_id] = meta
        self._by_key[(meta.declaring_class, meta.name, meta.descriptor)] = meta
        self.classes_seen.add(meta.declaring_class)
        return True

    def lookup(self, class_name: str, method_name: str,
               descriptor: str) -> "MethodMeta | None":
        return self._by_key.get((class_name, method_name, descriptor))

    def merged_with(self, other: "CodeModel") -> "CodeModel":
        """New model with ``other``'s methods added; this model wins collisions."""
        out = CodeModel(dict(self.methods), set(self.classes_seen), "merged",
                        list(self.warnings) + list(other.warnings))
        for meta in other.methods.values():
            if not out.add_method(meta):
                out.warnings.append(
                    f"duplicate method {meta.signature_id} ignored in merge")
        return out


def scan_inputs(paths) -> CodeModel:
    """Load .class files from files, directories, and zip archives."""
    model = CodeModel(source="classfile-scan")

    def add_classfile(label: str, data: bytes) -> None:
        try:
            for meta in parse_classfile(data):
                if not model.add_method(meta):
                    model.warnings.append(
                        f"{label}: duplicate method {meta.signature_id} kept first")
        except MalformedClassFile as exc:
            model.warnings.append(f"{label}: {exc}")

    for path in paths:
        path = Path(path)
        if path.is_dir():
            for entry in sorted(path.rglob("*.class")):
                try:
                    add_classfile(str(entry), entry.read_bytes())
                except OSError as exc:
                    model.warnings.append(f"{entry}: {exc}")
        elif zipfile.is_zipfile(path):
            with zipfile.ZipFile(path) as zf:
                for name in sorted(zf.namelist()):
                    if name.endswith(".class"):
                        add_classfile(f"{path}!{name}", zf.read(name))
        elif path.suffix == ".class":
            try:
                add_classfile(str(path), path.read_bytes())
            except OSError as exc:
                model.warnings.append(f"{path}: {exc}")
        else:
            model.warnings.append(f"{path}: not a class file, directory, or archive")
    return model


def load_site_map(path) -> CodeModel:
    """Build a code model from a site-map file.

    The resulting model is equivalent to a class-file scan of methods
    containing exactly the described allocation sites; bytecode indexes
    are synthesized in a deterministic order.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows_by_sig: dict[str, list[tuple[str, "int | None", int]]] = {}
    seen: set[tuple[str, str, int]] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise SiteMapSyntax(line_no, f"expected 4 tab-separated fields, got {len(parts)}")
        sig, allocated_type, line_text, index_text = (p.strip() for p in parts)
        if parse_signature(sig) is None:
            raise SiteMapSyntax(line_no, f"bad method signature {sig!r}")
        if not allocated_type:
            raise SiteMapSyntax(line_no, "empty allocated type")
        if line_text == "-":
            src_line = None
        else:
            try:
                src_line = int(line_text)
            except ValueError:
                raise SiteMapSyntax(line_no, f"bad line number {line_text!r}") from None
            if src_line < 1:
                raise SiteMapSyntax(line_no, f"line number must be positive: {src_line}")
        try:
            site_index = int(index_text)
        except ValueError:
            raise SiteMapSyntax(line_no, f"bad site index {index_text!r}") from None
        if site_index < 0:
            raise SiteMapSyntax(line_no, f"site index must be non-negative: {site_index}")
        key = (sig, allocated_type, site_index)
        if key in seen:
            raise SiteMapSyntax(line_no, f"duplicate site {key}")
        seen.add(key)
        rows_by_sig.setdefault(sig, []).append((allocated_type, src_line, site_index))

    model = CodeModel(source="site-map-file")
    for sig, rows in rows_by_sig.items():
        cls, name, desc = parse_signature(sig)
        rows.sort(key=lambda r: (r[0], r[2]))  # keeps site ordinals in bci order
        instrs = tuple(
            AllocationInstr(bci, allocated_type, src_line, site_index)
            for bci, (allocated_type, src_line, site_index) in enumerate(rows)
        )
        line_table = tuple(
            (i.bytecode_index, i.line) for i in instrs if i.line is not None
        )
        model.add_method(MethodMeta(cls, name, desc, sig, line_table, instrs))
    return model
