"""Command-line driver for the whole pipeline.

Subcommands: ``facts`` (full export), ``classes`` (recover dynamically
loaded bytecode), ``stats`` (record counts), ``recall`` (edge-set
coverage), and ``synth`` (deterministic fixture dumps).  Exit codes:
0 success, 1 fatal error, 2 usage error.  Warnings go to stderr; every
file output is byte-deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, facts, hprof, recall as recall_mod, synth
from .abstraction import AbstractionConfig, abstraction_table
from .codemodel import CodeModel, load_site_map, scan_inputs
from .context import EnricherNames, SensitivityConfig, recognize_enrichers
from .errors import HeapFactsError
from .heapgraph import ObjKind, build_heap


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heapfacts",
        description="Convert heap snapshots into static-analysis fact relations.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--config", metavar="FILE",
        help="JSON file providing defaults for long option names",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_facts = sub.add_parser("facts", help="export fact relations from a dump")
    p_facts.add_argument("dump", help="heap dump file")
    p_facts.add_argument("--code", action="append", default=[], metavar="PATH",
                         help="class file, directory, or archive (repeatable)")
    p_facts.add_argument("--site-map", metavar="FILE",
                         help="pre-digested allocation-site map")
    p_facts.add_argument("--sensitivity", default="insensitive",
                         metavar="FLAVOR[:N[:M]]",
                         help="insensitive | call-site | object | type, with "
                              "calling/heap context orders (e.g. object:2:1)")
    p_facts.add_argument("--strings-by-content", action="store_true",
                         help="distinguish strings by their content")
    p_facts.add_argument("--distinguish-loaders", action="store_true",
                         help="qualify class identities with their loader")
    p_facts.add_argument("--out", default="heapfacts-out", metavar="DIR")
    _enricher_flags(p_facts)

    p_classes = sub.add_parser(
        "classes", help="recover dynamically loaded classes into an archive")
    p_classes.add_argument("dump")
    p_classes.add_argument("--out", required=True, metavar="ARCHIVE")
    _enricher_flags(p_classes)

    p_stats = sub.add_parser("stats", help="print record counts for a dump")
    p_stats.add_argument("dump")

    p_recall = sub.add_parser(
        "recall", help="fraction of observed edges present in a reference set")
    p_recall.add_argument("--reference", required=True, metavar="CSV")
    p_recall.add_argument("--observed", required=True, metavar="CSV")
    p_recall.add_argument("--method-pair", dest="match_mode",
                          action="store_const", const="method-pair",
                          default="method-pair",
                          help="ignore invocation lines (default)")
    p_recall.add_argument("--exact", dest="match_mode",
                          action="store_const", const="exact",
                          help="require identical invocation sites")

    p_synth = sub.add_parser("synth", help="emit a deterministic fixture dump")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True, metavar="FILE")
    p_synth.add_argument("--objects", type=int, default=20)
    p_synth.add_argument("--id-size", type=int, choices=(4, 8), default=8)
    p_synth.add_argument("--site-map-out", metavar="FILE",
                         help="also write the generator's true-site map")
    return parser


def _enricher_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--obj-ctx-class", default="ObjAndCtx", metavar="NAME",
                        help="object-context class name (suffix match)")
    parser.add_argument("--edge-ctx-class", default="EdgeCtx", metavar="NAME")
    parser.add_argument("--class-data-class", default="ClassData", metavar="NAME")


def _apply_config(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Inject defaults from --config FILE (same keys as long flags)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        parser.error("--config requires a file argument")
    try:
        settings = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"--config {path}: {exc}")
    if not isinstance(settings, dict):
        parser.error(f"--config {path}: expected a JSON object")
    injected: list[str] = []
    for key, value in sorted(settings.items()):
        flag = "--" + key.replace("_", "-")
        if value is True:
            injected.append(flag)
        elif value is False or value is None:
            continue
        elif isinstance(value, list):
            for item in value:
                injected.extend([flag, str(item)])
        else:
            injected.extend([flag, str(value)])
    # defaults go right after the subcommand so explicit flags override them
    rest = [a for i, a in enumerate(argv) if i not in (idx, idx + 1)]
    for i, arg in enumerate(rest):
        if not arg.startswith("-"):
            return rest[: i + 1] + injected + rest[i + 1 :]
    return rest + injected


def _warn(messages) -> None:
    for msg in messages:
        print(f"warning: {msg}", file=sys.stderr)


def _load_code_model(args) -> CodeModel:
    model = CodeModel(source="empty")
    if args.code:
        model = scan_inputs(args.code)
    if args.site_map:
        model = model.merged_with(load_site_map(args.site_map))
    return model


def _cmd_facts(args) -> int:
    try:
        sens = SensitivityConfig.parse(args.sensitivity)
    except ValueError as exc:
        print(f"error: --sensitivity: {exc}", file=sys.stderr)
        return 2
    data = Path(args.dump).read_bytes()
    dump = hprof.parse_dump(data)
    graph = build_heap(dump)
    code = _load_code_model(args)
    names = EnricherNames(args.obj_ctx_class, args.edge_ctx_class,
                          args.class_data_class)
    warnings: list[str] = [w.message for w in graph.warnings]
    warnings.extend(code.warnings)
    recovered = facts.collect_class_data(graph, names, warnings)
    code = facts.merged_code_inputs(code, recovered)
    warnings.extend(w for w in code.warnings if w not in warnings)
    acfg = AbstractionConfig(
        distinguish_strings_by_content=args.strings_by_content,
        distinguish_loaders=args.distinguish_loaders,
    )
    table = abstraction_table(graph, code, acfg)
    bindings = recognize_enrichers(graph, names)
    warnings.extend(bindings.warnings)
    fact_set = facts.build_fact_set(graph, table, bindings, sens)
    manifest = facts.export_facts(
        fact_set, args.out,
        dump_digest=facts.digest_of(data),
        config_desc={
            "sensitivity": args.sensitivity,
            "strings_by_content": args.strings_by_content,
            "distinguish_loaders": args.distinguish_loaders,
            "code_inputs": len(args.code) + (1 if args.site_map else 0),
        },
        warning_count=len(warnings),
    )
    _warn(warnings)
    for relation in sorted(manifest["row_counts"]):
        print(f"{relation}: {manifest['row_counts'][relation]} rows")
    print(f"facts written to {args.out}")
    return 0


def _cmd_classes(args) -> int:
    graph = build_heap(hprof.parse_file(args.dump))
    names = EnricherNames(args.obj_ctx_class, args.edge_ctx_class,
                          args.class_data_class)
    warnings: list[str] = [w.message for w in graph.warnings]
    entries = facts.extract_class_archive(graph, names, args.out, warnings)
    _warn(warnings)
    for entry in entries:
        print(f"{entry.fq_name} (loader {entry.loader_key}, "
              f"{len(entry.bytecode)} bytes)")
    print(f"{len(entries)} classes -> {args.out}")
    return 0


def _cmd_stats(args) -> int:
    dump = hprof.parse_file(args.dump)
    _warn(w.message for w in dump.warnings)
    for kind, count in sorted(hprof.record_stats(dump).items()):
        print(f"{kind}: {count}")
    graph = build_heap(dump)
    non_class = sum(1 for o in graph.objects.values() if o.kind is not ObjKind.CLASS)
    print(f"objects: {non_class}")
    print(f"classes: {len(graph.classes)}")
    return 0


def _cmd_recall(args) -> int:
    reference = recall_mod.read_edges_csv(args.reference)
    observed = recall_mod.read_edges_csv(args.observed)
    result = recall_mod.recall(reference, observed, args.match_mode)
    print(f"recall: {result.fraction} = {float(result.fraction):.6f} "
          f"({result.matched}/{result.observed})")
    for edge in result.missing:
        line = "-" if edge.caller_line is None else str(edge.caller_line)
        print(f"missing: {edge.caller_method}/{line} -> {edge.callee_method}")
    return 0


def _cmd_synth(args) -> int:
    program = synth.random_program(args.seed, n_objects=args.objects)
    Path(args.out).write_bytes(synth.emit(program, args.id_size))
    print(f"dump written to {args.out}")
    if args.site_map_out:
        lines = [
            f"{sig}\t{typ}\t{line if line is not None else '-'}\t{idx}"
            for sig, typ, line, idx in program.intent_sites
        ]
        Path(args.site_map_out).write_text(
            "".join(f"{line}\n" for line in lines), encoding="utf-8")
        print(f"site map written to {args.site_map_out}")
    return 0


_COMMANDS = {
    "facts": _cmd_facts,
    "classes": _cmd_classes,
    "stats": _cmd_stats,
    "recall": _cmd_recall,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    argv = _apply_config(argv, parser)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (HeapFactsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
