/**
 * Binary heap-dump writer (JAVA PROFILE 1.0.2 subset).
 *
 * Emits: the null-terminated format name, identifier size, timestamp,
 * then UTF8 / LOAD CLASS / STACK FRAME / STACK TRACE records, one
 * HEAP DUMP SEGMENT holding class dumps, instances, arrays, and GC
 * roots, and the HEAP DUMP END marker. All values big-endian.
 */

export type FieldType =
  | "object" | "boolean" | "char" | "float" | "double"
  | "byte" | "short" | "int" | "long";

export type Value = number | bigint | boolean | null;

export interface FieldDecl {
  name: string;
  type: FieldType;
}

export interface StaticDecl extends FieldDecl {
  value: Value;
}

export interface Frame {
  className: string;
  method: string;
  descriptor: string;
  sourceFile?: string;
  /** Source line; 0 or negative means unavailable. */
  line: number;
}

const TYPE_CODES: Record<FieldType, number> = {
  object: 2, boolean: 4, char: 5, float: 6,
  double: 7, byte: 8, short: 9, int: 10, long: 11,
};

const PRIM_SIZES: Record<number, number> = {
  4: 1, 5: 2, 6: 4, 7: 8, 8: 1, 9: 2, 10: 4, 11: 8,
};

const PRIM_DESCRIPTORS: Record<string, string> = {
  byte: "B", char: "C", double: "D", float: "F",
  int: "I", long: "J", short: "S", boolean: "Z",
};

/** Dotted or array source name to the JVM internal registry form. */
export function internalName(dotted: string): string {
  let dims = 0;
  let base = dotted;
  while (base.endsWith("[]")) {
    base = base.slice(0, -2);
    dims += 1;
  }
  if (dims === 0) return base.replaceAll(".", "/");
  const core = PRIM_DESCRIPTORS[base] ?? `L${base.replaceAll(".", "/")};`;
  return "[".repeat(dims) + core;
}

class ByteSink {
  private buf = new Uint8Array(1 << 12);
  private len = 0;

  private grow(extra: number): void {
    if (this.len + extra <= this.buf.length) return;
    let size = this.buf.length * 2;
    while (size < this.len + extra) size *= 2;
    const next = new Uint8Array(size);
    next.set(this.buf.subarray(0, this.len));
    this.buf = next;
  }

  u1(v: number): void {
    this.grow(1);
    this.buf[this.len++] = v & 0xff;
  }

  u2(v: number): void {
    this.grow(2);
    this.buf[this.len++] = (v >>> 8) & 0xff;
    this.buf[this.len++] = v & 0xff;
  }

  u4(v: number): void {
    this.grow(4);
    this.buf[this.len++] = (v >>> 24) & 0xff;
    this.buf[this.len++] = (v >>> 16) & 0xff;
    this.buf[this.len++] = (v >>> 8) & 0xff;
    this.buf[this.len++] = v & 0xff;
  }

  u8(v: bigint): void {
    this.u4(Number((v >> 32n) & 0xffffffffn));
    this.u4(Number(v & 0xffffffffn));
  }

  bytes(data: Uint8Array): void {
    this.grow(data.length);
    this.buf.set(data, this.len);
    this.len += data.length;
  }

  get length(): number {
    return this.len;
  }

  take(): Uint8Array {
    return this.buf.slice(0, this.len);
  }
}

interface ClassReg {
  name: string;
  superName: string | null;
  fields: FieldDecl[];
  statics: StaticDecl[];
  loaderId: number;
  classObjId: number;
  heap: boolean; // false: mentioned by frames only, no class dump
}

interface Instance {
  kind: "instance";
  id: number;
  className: string;
  values: Map<string, Value>;
  trace: number;
}

interface ObjArray {
  kind: "objarray";
  id: number;
  className: string;
  elements: (number | null)[];
  trace: number;
}

interface PrimArray {
  kind: "primarray";
  id: number;
  elemType: FieldType;
  values: (number | bigint)[];
  trace: number;
}

type Entity = Instance | ObjArray | PrimArray;

export class HprofWriter {
  readonly idSize: 4 | 8;
  private classes = new Map<string, ClassReg>();
  private entities: Entity[] = [];
  private traces: Frame[][] = [];
  private roots: { kind: number; id: number }[] = [];
  private nextId = 0x1000;
  private stringLayoutRegistered = false;

  constructor(idSize: 4 | 8 = 8) {
    this.idSize = idSize;
  }

  private allocId(): number {
    this.nextId += 1;
    return this.nextId;
  }

  registerClass(
    name: string,
    fields: FieldDecl[] = [],
    superName: string | null = "java.lang.Object",
    statics: StaticDecl[] = [],
    loaderId = 0,
  ): void {
    if (this.classes.has(name)) return;
    const actualSuper = name === "java.lang.Object" ? null : superName;
    this.classes.set(name, {
      name,
      superName: actualSuper,
      fields,
      statics,
      loaderId,
      classObjId: this.allocId(),
      heap: true,
    });
    if (actualSuper && !this.classes.has(actualSuper)) {
      this.registerClass(actualSuper);
    }
  }

  private layoutOf(name: string): FieldDecl[] {
    const out: FieldDecl[] = [];
    let cur: string | null = name;
    while (cur) {
      const reg = this.classes.get(cur);
      if (!reg) throw new Error(`class not registered: ${cur}`);
      out.push(...reg.fields);
      cur = reg.superName;
    }
    return out;
  }

  addTrace(frames: Frame[]): number {
    this.traces.push(frames.map((f) => ({ ...f })));
    return this.traces.length;
  }

  addInstance(
    className: string,
    values: Record<string, Value> = {},
    trace = 0,
  ): number {
    if (!this.classes.has(className)) {
      throw new Error(`class not registered: ${className}`);
    }
    const declared = new Set(this.layoutOf(className).map((f) => f.name));
    for (const key of Object.keys(values)) {
      if (!declared.has(key)) {
        throw new Error(`unknown field ${className}.${key}`);
      }
    }
    const entity: Instance = {
      kind: "instance",
      id: this.allocId(),
      className,
      values: new Map(Object.entries(values)),
      trace,
    };
    this.entities.push(entity);
    return entity.id;
  }

  setField(objId: number, name: string, value: Value): void {
    const entity = this.entities.find((e) => e.id === objId);
    if (!entity || entity.kind !== "instance") {
      throw new Error(`not an instance: ${objId}`);
    }
    entity.values.set(name, value);
  }

  addObjectArray(
    arrayClassName: string,
    elements: (number | null)[],
    trace = 0,
  ): number {
    this.registerClass(arrayClassName, [], "java.lang.Object");
    const entity: ObjArray = {
      kind: "objarray",
      id: this.allocId(),
      className: arrayClassName,
      elements: [...elements],
      trace,
    };
    this.entities.push(entity);
    return entity.id;
  }

  /** Rewire an object array declared earlier (two-pass construction). */
  replaceObjectArrayElements(objId: number, elements: (number | null)[]): void {
    const entity = this.entities.find((e) => e.id === objId);
    if (!entity || entity.kind !== "objarray") {
      throw new Error(`not an object array: ${objId}`);
    }
    entity.elements = [...elements];
  }

  addPrimitiveArray(
    elemType: FieldType,
    values: (number | bigint)[],
    trace = 0,
  ): number {
    if (elemType === "object") throw new Error("not a primitive type");
    const entity: PrimArray = {
      kind: "primarray",
      id: this.allocId(),
      elemType,
      values: [...values],
      trace,
    };
    this.entities.push(entity);
    return entity.id;
  }

  /** java.lang.String over a char[] backing array. */
  addString(content: string, trace = 0): number {
    if (!this.stringLayoutRegistered) {
      this.registerClass("java.lang.String", [{ name: "value", type: "object" }]);
      this.stringLayoutRegistered = true;
    }
    const units: number[] = [];
    for (let i = 0; i < content.length; i++) units.push(content.charCodeAt(i));
    const backing = this.addPrimitiveArray("char", units);
    return this.addInstance("java.lang.String", { value: backing }, trace);
  }

  addGcRoot(id: number, kind = 0xff): void {
    this.roots.push({ kind, id });
  }

  build(): Uint8Array {
    const out = new ByteSink();
    const encoder = new TextEncoder();
    const idSize = this.idSize;

    const writeId = (sink: ByteSink, v: number | bigint) => {
      if (idSize === 8) sink.u8(BigInt(v));
      else sink.u4(Number(v));
    };

    const strings = new Map<string, number>();
    const sid = (text: string): number => {
      let got = strings.get(text);
      if (got === undefined) {
        got = strings.size + 1;
        strings.set(text, got);
      }
      return got;
    };

    // classes referenced only by stack frames still need load records
    const registry = new Map(this.classes);
    for (const frames of this.traces) {
      for (const frame of frames) {
        if (!registry.has(frame.className)) {
          registry.set(frame.className, {
            name: frame.className,
            superName: null,
            fields: [],
            statics: [],
            loaderId: 0,
            classObjId: 0x40_0000 + registry.size,
            heap: false,
          });
        }
      }
    }
    const serials = new Map<string, number>();
    for (const name of registry.keys()) {
      serials.set(name, serials.size + 1);
      sid(internalName(name));
    }
    const frameIds = new Map<string, number>();
    const frameKey = (f: Frame) =>
      JSON.stringify([f.className, f.method, f.descriptor, f.sourceFile ?? null, f.line]);
    for (const frames of this.traces) {
      for (const frame of frames) {
        if (!frameIds.has(frameKey(frame))) {
          frameIds.set(frameKey(frame), frameIds.size + 1);
          sid(frame.method);
          sid(frame.descriptor);
          if (frame.sourceFile) sid(frame.sourceFile);
        }
      }
    }
    for (const reg of registry.values()) {
      for (const f of reg.fields) sid(f.name);
      for (const s of reg.statics) sid(s.name);
    }

    // header
    out.bytes(encoder.encode("JAVA PROFILE 1.0.2\0"));
    out.u4(idSize);
    out.u8(0n);

    const record = (tag: number, body: ByteSink) => {
      out.u1(tag);
      out.u4(0);
      out.u4(body.length);
      out.bytes(body.take());
    };

    for (const [text, id] of strings) {
      const body = new ByteSink();
      writeId(body, id);
      body.bytes(encoder.encode(text));
      record(0x01, body);
    }
    for (const [name, reg] of registry) {
      const body = new ByteSink();
      body.u4(serials.get(name)!);
      writeId(body, reg.classObjId);
      body.u4(0);
      writeId(body, sid(internalName(name)));
      record(0x02, body);
    }
    const frameList = [...frameIds.entries()];
    const frameByKey = new Map<string, Frame>();
    for (const frames of this.traces) {
      for (const frame of frames) frameByKey.set(frameKey(frame), frame);
    }
    for (const [key, fid] of frameList) {
      const frame = frameByKey.get(key)!;
      const body = new ByteSink();
      writeId(body, fid);
      writeId(body, sid(frame.method));
      writeId(body, sid(frame.descriptor));
      writeId(body, frame.sourceFile ? sid(frame.sourceFile) : 0);
      body.u4(serials.get(frame.className)!);
      body.u4(frame.line >>> 0);
      record(0x04, body);
    }
    this.traces.forEach((frames, index) => {
      const body = new ByteSink();
      body.u4(index + 1);
      body.u4(1);
      body.u4(frames.length);
      for (const frame of frames) writeId(body, frameIds.get(frameKey(frame))!);
      record(0x05, body);
    });

    const writeValue = (sink: ByteSink, type: FieldType, value: Value) => {
      switch (type) {
        case "object":
          writeId(sink, value == null ? 0 : value as number | bigint);
          break;
        case "boolean":
          sink.u1(value ? 1 : 0);
          break;
        case "char":
          sink.u2(Number(value ?? 0));
          break;
        case "byte":
          sink.u1(Number(value ?? 0) & 0xff);
          break;
        case "short":
          sink.u2(Number(value ?? 0) & 0xffff);
          break;
        case "int":
          sink.u4(Number(value ?? 0) >>> 0);
          break;
        case "long":
          sink.u8(BigInt.asUintN(64, BigInt((value ?? 0) as number | bigint)));
          break;
        case "float": {
          const view = new DataView(new ArrayBuffer(4));
          view.setFloat32(0, Number(value ?? 0));
          sink.bytes(new Uint8Array(view.buffer));
          break;
        }
        case "double": {
          const view = new DataView(new ArrayBuffer(8));
          view.setFloat64(0, Number(value ?? 0));
          sink.bytes(new Uint8Array(view.buffer));
          break;
        }
      }
    };

    const heap = new ByteSink();
    for (const reg of registry.values()) {
      if (!reg.heap) continue;
      heap.u1(0x20);
      writeId(heap, reg.classObjId);
      heap.u4(0);
      writeId(heap, reg.superName ? registry.get(reg.superName)!.classObjId : 0);
      writeId(heap, reg.loaderId);
      writeId(heap, 0);
      writeId(heap, 0);
      writeId(heap, 0);
      writeId(heap, 0);
      let ownSize = 0;
      for (const f of reg.fields) {
        ownSize += f.type === "object" ? idSize : PRIM_SIZES[TYPE_CODES[f.type]];
      }
      heap.u4(ownSize);
      heap.u2(0);
      heap.u2(reg.statics.length);
      for (const s of reg.statics) {
        writeId(heap, sid(s.name));
        heap.u1(TYPE_CODES[s.type]);
        writeValue(heap, s.type, s.value);
      }
      heap.u2(reg.fields.length);
      for (const f of reg.fields) {
        writeId(heap, sid(f.name));
        heap.u1(TYPE_CODES[f.type]);
      }
    }
    for (const entity of this.entities) {
      if (entity.kind === "instance") {
        const body = new ByteSink();
        for (const f of this.layoutOf(entity.className)) {
          writeValue(body, f.type, entity.values.get(f.name) ?? null);
        }
        heap.u1(0x21);
        writeId(heap, entity.id);
        heap.u4(entity.trace);
        writeId(heap, this.classes.get(entity.className)!.classObjId);
        heap.u4(body.length);
        heap.bytes(body.take());
      } else if (entity.kind === "objarray") {
        heap.u1(0x22);
        writeId(heap, entity.id);
        heap.u4(entity.trace);
        heap.u4(entity.elements.length);
        writeId(heap, this.classes.get(entity.className)!.classObjId);
        for (const element of entity.elements) writeId(heap, element ?? 0);
      } else {
        heap.u1(0x23);
        writeId(heap, entity.id);
        heap.u4(entity.trace);
        heap.u4(entity.values.length);
        heap.u1(TYPE_CODES[entity.elemType]);
        for (const v of entity.values) writeValue(heap, entity.elemType, v);
      }
    }
    for (const root of this.roots) {
      heap.u1(root.kind);
      writeId(heap, root.id);
      if (root.kind === 0x01) writeId(heap, 0);
      else if ([0x02, 0x03, 0x08].includes(root.kind)) {
        heap.u4(1);
        heap.u4(0);
      } else if ([0x04, 0x06].includes(root.kind)) heap.u4(1);
    }
    if (heap.length > 0) record(0x1c, heap);
    record(0x2c, new ByteSink());
    return out.take();
  }
}
