import { spawnSync } from "node:child_process";

/** Commands the build recipes invoke, after discovery. */
export interface Toolchain {
  clang: string;
  wasmLd: string;
  /** Optional size post-pass; null when not installed. */
  wasmOpt: string | null;
  /** The offload CLI from the runtime package. */
  offload: string;
}

/** A required tool is absent; callers skip the build with an NA note. */
export class MissingToolchain extends Error {
  constructor(readonly tool: string, hint: string) {
    super(`${tool} not found (${hint})`);
    this.name = "MissingToolchain";
  }
}

function responds(cmd: string, args: string[]): boolean {
  const r = spawnSync(cmd, args, { stdio: "ignore" });
  return r.error === undefined && r.status === 0;
}

function capture(cmd: string, args: string[]): string {
  const r = spawnSync(cmd, args, { encoding: "utf8" });
  if (r.error !== undefined || r.status !== 0) {
    return "";
  }
  return r.stdout;
}

function hasBackend(listing: string, name: string): boolean {
  // `clang -print-targets` rows look like "    bpf        - BPF ..."
  return new RegExp(`^\\s+${name}\\s+-`, "m").test(listing);
}

/**
 * Locate the tools the recipes need, honoring environment overrides:
 * CCORPUS_CLANG, CCORPUS_WASM_LD, CCORPUS_WASM_OPT, OFFLOAD_BIN.
 *
 * Throws MissingToolchain when a required tool is absent or the clang
 * found lacks the BPF or wasm32 backend.  wasm-opt stays optional
 * unless named explicitly.
 */
export function detectToolchain(
  env: NodeJS.ProcessEnv = process.env,
): Toolchain {
  const clang = env.CCORPUS_CLANG ?? "clang";
  if (!responds(clang, ["--version"])) {
    throw new MissingToolchain(clang, "set CCORPUS_CLANG or install clang");
  }
  const targets = capture(clang, ["-print-targets"]);
  for (const backend of ["bpf", "wasm32"]) {
    if (!hasBackend(targets, backend)) {
      throw new MissingToolchain(
        clang,
        `this clang has no ${backend} backend; point CCORPUS_CLANG at one ` +
          "built with it",
      );
    }
  }

  const wasmLd = env.CCORPUS_WASM_LD ?? "wasm-ld";
  if (!responds(wasmLd, ["--version"])) {
    throw new MissingToolchain(
      wasmLd,
      "set CCORPUS_WASM_LD or install lld's WebAssembly linker",
    );
  }

  let wasmOpt: string | null = env.CCORPUS_WASM_OPT ?? null;
  if (wasmOpt !== null && !responds(wasmOpt, ["--version"])) {
    throw new MissingToolchain(wasmOpt, "CCORPUS_WASM_OPT names a missing tool");
  }
  if (wasmOpt === null && responds("wasm-opt", ["--version"])) {
    wasmOpt = "wasm-opt";
  }

  const offload = env.OFFLOAD_BIN ?? "offload";
  if (!responds(offload, ["--help"])) {
    throw new MissingToolchain(
      offload,
      "set OFFLOAD_BIN or install the offload runtime package",
    );
  }

  return { clang, wasmLd, wasmOpt, offload };
}
