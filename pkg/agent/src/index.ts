export {
  FieldDecl, FieldType, Frame, HprofWriter, StaticDecl, internalName,
} from "./hprof.js";
export {
  AgentOptions, CLASS_DATA_CLASS, EDGE_CTX_CLASS, HeapObject,
  InstrumentedRuntime, MethodSig, OBJ_CTX_CLASS, Value,
} from "./runtime.js";
