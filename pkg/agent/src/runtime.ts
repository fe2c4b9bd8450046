/**
 * Instrumented runtime: the capture side of the pipeline.
 *
 * A toy application runs against explicit hooks (method calls,
 * allocations, class definitions) exactly the way a load-time weaver
 * would rewrite it. The runtime maintains the enrichment state the
 * analysis pipeline consumes:
 *
 *  - every allocation records the full stack snapshot (allocation
 *    tracking), so a dump carries the dynamic call graph;
 *  - with context tracking on, each tracked allocation in application
 *    code appends an ObjAndCtx linking the new object to the current
 *    receiver (for static methods, the receiver inherited from the
 *    caller), and every call into application code appends an EdgeCtx
 *    whose own allocation trace pins callee (2nd frame) and caller
 *    (3rd frame);
 *  - commonplace objects (strings, string builders, primitive arrays)
 *    are never context-tracked;
 *  - defineClass captures (loader, name, bytecode) after loading, so
 *    dynamically created classes survive into the dump.
 *
 * `snapshot()` serializes everything as a standard heap dump; the
 * shutdown path writes it to the configured file.
 */

import { writeFileSync } from "node:fs";
import { Frame, HprofWriter, Value as WireValue } from "./hprof.js";

export interface MethodSig {
  className: string;
  method: string;
  descriptor: string;
  sourceFile?: string;
}

export class HeapObject {
  constructor(readonly ref: number, readonly className: string) {}
}

export type Value = HeapObject | number | bigint | boolean | null;

export interface AgentOptions {
  /** Dump path used by shutdown(); snapshot() works without it. */
  out?: string;
  /** Application package prefixes; undefined tracks all non-bootstrap code. */
  pkgs?: string[];
  /** Context tracking (ObjAndCtx / EdgeCtx) on or off. */
  ctx?: boolean;
  /** Capture dynamically defined classes. */
  captureClasses?: boolean;
  idSize?: 4 | 8;
}

export const OBJ_CTX_CLASS = "agent.rt.ObjAndCtx";
export const EDGE_CTX_CLASS = "agent.rt.EdgeCtx";
export const CLASS_DATA_CLASS = "agent.rt.ClassData";

const BOOTSTRAP_PREFIXES = ["java.", "javax.", "jdk.", "sun."];
const COMMONPLACE = new Set([
  "java.lang.String", "java.lang.StringBuilder", "java.lang.StringBuffer",
]);

interface FieldDecl {
  name: string;
  type: "object" | "int" | "long" | "boolean";
}

interface ClassDecl {
  name: string;
  superName: string;
  fields: FieldDecl[];
}

interface ObjRecord {
  obj: HeapObject;
  kind: "instance" | "objarray" | "primarray" | "string";
  className: string;
  fields: Map<string, Value>;
  elements?: (HeapObject | null)[];
  primValues?: number[];
  primType?: "char" | "byte" | "int";
  content?: string;
  frames: Frame[] | null;
}

interface Activation {
  sig: MethodSig;
  line: number;
  receiver: HeapObject | null;
  /** Receiver used for heap contexts; statics inherit the caller's. */
  ctxReceiver: HeapObject | null;
}

interface ObjCtxCapture {
  obj: HeapObject;
  ctx: HeapObject | null;
}

interface EdgeCtxCapture {
  callerCtx: HeapObject | null;
  calleeCtx: HeapObject | null;
  frames: Frame[];
}

interface ClassDataCapture {
  name: string;
  loader: HeapObject | null;
  bytecode: Uint8Array;
}

function isCommonplace(className: string): boolean {
  return COMMONPLACE.has(className);
}

export class InstrumentedRuntime {
  private readonly options: Required<Omit<AgentOptions, "out" | "pkgs">> &
    Pick<AgentOptions, "out" | "pkgs">;
  private classes = new Map<string, ClassDecl>();
  private objects: ObjRecord[] = [];
  private stack: Activation[] = [];
  private nextRef = 1;
  readonly objCtxCaptures: ObjCtxCapture[] = [];
  readonly edgeCtxCaptures: EdgeCtxCapture[] = [];
  readonly classDataCaptures: ClassDataCapture[] = [];

  constructor(options: AgentOptions = {}) {
    this.options = {
      out: options.out,
      pkgs: options.pkgs,
      ctx: options.ctx ?? true,
      captureClasses: options.captureClasses ?? true,
      idSize: options.idSize ?? 8,
    };
  }

  private isApplicationCode(className: string): boolean {
    if (this.options.pkgs !== undefined) {
      return this.options.pkgs.some((p) => className.startsWith(p));
    }
    return !BOOTSTRAP_PREFIXES.some((p) => className.startsWith(p));
  }

  registerClass(
    name: string,
    fields: FieldDecl[] = [],
    superName = "java.lang.Object",
  ): void {
    if (!this.classes.has(name)) {
      this.classes.set(name, { name, superName, fields });
    }
  }

  private layoutOf(name: string): FieldDecl[] {
    const out: FieldDecl[] = [];
    let cur: string | undefined = name;
    while (cur && cur !== "java.lang.Object") {
      const decl = this.classes.get(cur);
      if (!decl) throw new Error(`class not registered: ${cur}`);
      out.push(...decl.fields);
      cur = decl.superName;
    }
    return out;
  }

  private snapshotFrames(): Frame[] {
    return [...this.stack].reverse().map((a) => ({
      className: a.sig.className,
      method: a.sig.method,
      descriptor: a.sig.descriptor,
      sourceFile: a.sig.sourceFile,
      line: a.line,
    }));
  }

  /**
   * Enter a method. `callerLine` is the invocation's source line in
   * the caller (ignored for entry points). A null receiver models a
   * static method; its context receiver is inherited from the caller.
   */
  call<T>(
    sig: MethodSig,
    receiver: HeapObject | null,
    callerLine: number,
    body: () => T,
  ): T {
    const caller = this.stack[this.stack.length - 1];
    if (caller) caller.line = callerLine;
    const activation: Activation = {
      sig,
      line: 0,
      receiver,
      ctxReceiver: receiver ?? caller?.ctxReceiver ?? null,
    };
    this.stack.push(activation);
    if (this.options.ctx && caller && this.isApplicationCode(sig.className)) {
      const frames: Frame[] = [
        {
          className: EDGE_CTX_CLASS,
          method: "<init>",
          descriptor: "(Ljava/lang/Object;)V",
          line: 0,
        },
        ...this.snapshotFrames(),
      ];
      this.edgeCtxCaptures.push({
        callerCtx: caller.ctxReceiver,
        calleeCtx: activation.ctxReceiver,
        frames,
      });
    }
    try {
      return body();
    } finally {
      this.stack.pop();
    }
  }

  /** Move the current activation to a source line. */
  atLine(line: number): void {
    const top = this.stack[this.stack.length - 1];
    if (!top) throw new Error("atLine outside any method");
    top.line = line;
  }

  private currentActivation(): Activation {
    const top = this.stack[this.stack.length - 1];
    if (!top) throw new Error("allocation outside any method");
    return top;
  }

  private track(obj: HeapObject): void {
    const top = this.stack[this.stack.length - 1];
    if (
      this.options.ctx &&
      top &&
      this.isApplicationCode(top.sig.className) &&
      !isCommonplace(obj.className) &&
      !obj.className.endsWith("[]")
    ) {
      this.objCtxCaptures.push({ obj, ctx: top.ctxReceiver });
    }
  }

  allocate(
    className: string,
    options: { line?: number; fields?: Record<string, Value> } = {},
  ): HeapObject {
    const top = this.currentActivation();
    if (options.line !== undefined) top.line = options.line;
    if (!this.classes.has(className)) {
      throw new Error(`class not registered: ${className}`);
    }
    const obj = new HeapObject(this.nextRef++, className);
    this.objects.push({
      obj,
      kind: "instance",
      className,
      fields: new Map(Object.entries(options.fields ?? {})),
      frames: this.snapshotFrames(),
    });
    this.track(obj);
    return obj;
  }

  allocateString(content: string, options: { line?: number } = {}): HeapObject {
    const top = this.currentActivation();
    if (options.line !== undefined) top.line = options.line;
    const obj = new HeapObject(this.nextRef++, "java.lang.String");
    this.objects.push({
      obj,
      kind: "string",
      className: "java.lang.String",
      fields: new Map(),
      content,
      frames: this.snapshotFrames(),
    });
    this.track(obj); // no-op: strings are commonplace
    return obj;
  }

  allocateObjectArray(
    elementClass: string,
    elements: (HeapObject | null)[],
    options: { line?: number } = {},
  ): HeapObject {
    const top = this.currentActivation();
    if (options.line !== undefined) top.line = options.line;
    const className = `${elementClass}[]`;
    const obj = new HeapObject(this.nextRef++, className);
    this.objects.push({
      obj,
      kind: "objarray",
      className,
      fields: new Map(),
      elements: [...elements],
      frames: this.snapshotFrames(),
    });
    return obj;
  }

  setField(obj: HeapObject, name: string, value: Value): void {
    const record = this.objects.find((o) => o.obj === obj);
    if (!record || record.kind !== "instance") {
      throw new Error(`not an instance: ${obj.className}#${obj.ref}`);
    }
    const declared = this.layoutOf(record.className).some((f) => f.name === name);
    if (!declared) throw new Error(`unknown field ${record.className}.${name}`);
    record.fields.set(name, value);
  }

  /**
   * Class-definition hook: records the defined bytecode keyed by name
   * and defining loader. Bootstrap classes are filtered out unless the
   * runtime was configured with explicit package prefixes.
   */
  defineClass(
    loader: HeapObject | null,
    name: string,
    bytecode: Uint8Array,
  ): void {
    if (!this.options.captureClasses) return;
    if (BOOTSTRAP_PREFIXES.some((p) => name.startsWith(p))) return;
    this.classDataCaptures.push({ name, loader, bytecode: bytecode.slice() });
  }

  snapshot(): Uint8Array {
    const writer = new HprofWriter(this.options.idSize);
    for (const decl of this.classes.values()) {
      writer.registerClass(
        decl.name,
        decl.fields.map((f) => ({ name: f.name, type: f.type })),
        decl.superName,
      );
    }

    const traceIds = new Map<string, number>();
    const traceOf = (frames: Frame[] | null): number => {
      if (!frames || frames.length === 0) return 0;
      const key = JSON.stringify(frames);
      let got = traceIds.get(key);
      if (got === undefined) {
        got = writer.addTrace(frames);
        traceIds.set(key, got);
      }
      return got;
    };

    // first pass: raw ids for every object, then wire the references
    const wireIds = new Map<HeapObject, number>();
    for (const record of this.objects) {
      if (record.kind === "string") {
        wireIds.set(record.obj, writer.addString(
          record.content ?? "", traceOf(record.frames)));
      } else if (record.kind === "instance") {
        wireIds.set(record.obj, writer.addInstance(
          record.className, {}, traceOf(record.frames)));
      } else if (record.kind === "objarray") {
        wireIds.set(record.obj, writer.addObjectArray(
          record.className, [], traceOf(record.frames)));
      }
    }
    const wire = (value: Value): WireValue => {
      if (value instanceof HeapObject) {
        const id = wireIds.get(value);
        if (id === undefined) throw new Error("reference to unknown object");
        return id;
      }
      return value;
    };
    for (const record of this.objects) {
      if (record.kind === "instance") {
        for (const [name, value] of record.fields) {
          writer.setField(wireIds.get(record.obj)!, name, wire(value));
        }
      }
    }
    // object arrays need their elements rewritten; rebuild in place
    for (const record of this.objects) {
      if (record.kind === "objarray" && record.elements) {
        // the writer stored an empty array; emit elements via a fresh add
        // is not possible without duplicating the object, so resolve now
        const elements = record.elements.map((e) =>
          e === null ? null : wireIds.get(e)!);
        writer.replaceObjectArrayElements(wireIds.get(record.obj)!, elements);
      }
    }

    if (this.objCtxCaptures.length > 0) {
      writer.registerClass(OBJ_CTX_CLASS, [
        { name: "obj", type: "object" },
        { name: "ctx", type: "object" },
      ]);
      for (const capture of this.objCtxCaptures) {
        const id = writer.addInstance(OBJ_CTX_CLASS, {
          obj: wire(capture.obj),
          ctx: capture.ctx === null ? null : wire(capture.ctx),
        });
        writer.addGcRoot(id);
      }
    }
    if (this.edgeCtxCaptures.length > 0) {
      writer.registerClass(EDGE_CTX_CLASS, [
        { name: "callerCtx", type: "object" },
        { name: "calleeCtx", type: "object" },
      ]);
      for (const capture of this.edgeCtxCaptures) {
        const id = writer.addInstance(
          EDGE_CTX_CLASS,
          {
            callerCtx: capture.callerCtx === null ? null : wire(capture.callerCtx),
            calleeCtx: capture.calleeCtx === null ? null : wire(capture.calleeCtx),
          },
          traceOf(capture.frames),
        );
        writer.addGcRoot(id);
      }
    }
    if (this.classDataCaptures.length > 0) {
      writer.registerClass(CLASS_DATA_CLASS, [
        { name: "name", type: "object" },
        { name: "loader", type: "object" },
        { name: "bytecode", type: "object" },
      ]);
      for (const capture of this.classDataCaptures) {
        const nameId = writer.addString(capture.name);
        const bytes = writer.addPrimitiveArray(
          "byte", [...capture.bytecode].map((b) => (b > 127 ? b - 256 : b)));
        const id = writer.addInstance(CLASS_DATA_CLASS, {
          name: nameId,
          loader: capture.loader === null ? null : wire(capture.loader),
          bytecode: bytes,
        });
        writer.addGcRoot(id);
      }
    }
    return writer.build();
  }

  /** The shutdown hook: write the dump to the configured path. */
  shutdown(): string {
    if (!this.options.out) throw new Error("no dump path configured");
    writeFileSync(this.options.out, this.snapshot());
    return this.options.out;
  }
}
