#!/usr/bin/env python3
"""Compare the pure-Python and compiled scan kernels on a bulk dump.

Builds one large synthetic dump (heap-record scanning dominates, as in
real dumps), then times full parses under each backend.

    python benchmarks/bench_scan.py [--objects 200000] [--repeat 3]
"""

import argparse
import statistics
import time

from heapfacts import _kernel, hprof, synth


def bulk_program(n_objects: int) -> synth.SynthProgram:
    p = synth.SynthProgram()
    p.add_class("bulk.Node", fields=[
        ("next", "object"), ("payload", "object"), ("weight", "long"),
        ("depth", "int"), ("live", "boolean"),
    ])
    traces = [
        p.add_trace([
            synth.frame("bulk.Factory", f"make{i}", "()V", "Factory.java", 10 + i),
            synth.frame("bulk.Main", "run", "()V", "Main.java", 99),
        ])
        for i in range(16)
    ]
    prev = None
    for i in range(n_objects):
        obj = p.add_instance(
            "bulk.Node",
            {"next": prev, "weight": i, "depth": i % 7, "live": i % 2 == 0},
            trace=traces[i % len(traces)],
        )
        if i % 50 == 0:
            p.add_primitive_array("byte", [i % 100] * 64)
        prev = obj
    p.add_gc_root(prev)
    return p


def time_parses(data: bytes, backend: str, repeat: int) -> list[float]:
    _kernel.set_backend(backend)
    timings = []
    for _ in range(repeat):
        started = time.perf_counter()
        dump = hprof.parse_dump(data)
        timings.append(time.perf_counter() - started)
        assert not dump.warnings
    return timings


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--objects", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    print(f"building dump with {args.objects} objects ...")
    data = synth.emit(bulk_program(args.objects))
    mib = len(data) / (1 << 20)
    print(f"dump size: {mib:.1f} MiB")

    backends = ["pure"]
    try:
        _kernel.set_backend("compiled")
        backends.append("compiled")
    except ImportError:
        print("compiled kernel not built; benchmarking pure only")

    results = {}
    for backend in backends:
        timings = time_parses(data, backend, args.repeat)
        best = min(timings)
        results[backend] = best
        print(f"{backend:>9}: best {best * 1000:8.1f} ms "
              f"(median {statistics.median(timings) * 1000:8.1f} ms, "
              f"{mib / best:6.1f} MiB/s)")
    if len(results) == 2:
        print(f"speedup (compiled over pure): "
              f"{results['pure'] / results['compiled']:.2f}x")


if __name__ == "__main__":
    main()
