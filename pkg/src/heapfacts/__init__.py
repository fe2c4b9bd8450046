"""heapfacts: turn JVM heap snapshots into static-analysis-ready facts.

Pipeline: parse a binary heap dump, resolve it into a concrete heap
graph, map objects onto allocation-site abstractions by consulting the
program's class files, derive dynamic call-graph edges and (optionally)
calling/heap contexts from instrumentation objects, and export the
result as sorted CSV relations plus an archive of dynamically loaded
classes recovered from the heap.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CycleDetected,
    EmptyObserved,
    EnricherShapeMismatch,
    HeaderMalformed,
    HeapFactsError,
    InconsistentProgram,
    MalformedClassFile,
    SiteMapSyntax,
)
