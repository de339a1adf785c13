import * as path from "node:path";

/** One corpus program: where its C lives and how the engines run it. */
export interface CorpusProgram {
  name: string;
  /** Exported symbol, `<name>_entry` by the shared contract. */
  entry: string;
  /** Scalar arguments handed to the entry after (mem, mem_len). */
  args: [number, number];
  /** Bytes of host-staged memory; 0 means the entry gets a null mem. */
  staticMemSize: number;
  /** Staging pattern for that memory: zeros ("") or the u64 ramp. */
  stage: "" | "u64-sequence";
  /** Oracle value for exactly these arguments. */
  expected: bigint;
}

export const PACKAGE_ROOT = path.join(__dirname, "..");
export const PROGRAMS_DIR = path.join(PACKAGE_ROOT, "programs");
export const PROBES_DIR = path.join(PACKAGE_ROOT, "probes");

export const WASM_SUPPORT_SOURCE = path.join(PROGRAMS_DIR, "wasm_support.c");
export const SIGNED_DIV_PROBE = path.join(PROBES_DIR, "signed_div.c");

export function sourceFor(program: CorpusProgram): string {
  return path.join(PROGRAMS_DIR, `${program.name}.c`);
}

// Parameters mirror the runtime's corpus manifests; the expected values
// are the oracle outputs embedded there.
export const PROGRAMS: readonly CorpusProgram[] = [
  {
    name: "dummy",
    entry: "dummy_entry",
    args: [0, 0],
    staticMemSize: 0,
    stage: "",
    expected: 1n,
  },
  {
    name: "fib",
    entry: "fib_entry",
    args: [50, 0],
    staticMemSize: 0,
    stage: "",
    expected: 12586269025n,
  },
  {
    name: "sum",
    entry: "sum_entry",
    args: [0, 0],
    staticMemSize: 800,
    stage: "u64-sequence",
    expected: 5050n,
  },
  {
    name: "prime_count",
    entry: "prime_count_entry",
    args: [100000, 0],
    staticMemSize: 100001,
    stage: "",
    expected: 9592n,
  },
  {
    name: "multifact",
    entry: "multifact_entry",
    args: [25, 3],
    staticMemSize: 0,
    stage: "",
    expected: 608608000n,
  },
];
