import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";

import { offloadRun } from "./offload";
import {
  CorpusProgram,
  PROGRAMS,
  SIGNED_DIV_PROBE,
  WASM_SUPPORT_SOURCE,
  sourceFor,
} from "./programs";
import { Toolchain } from "./toolchain";

export type TargetKind = "native-shared" | "ebpf-object" | "wasm-module";

export interface BuildTarget {
  program: string;
  target: TargetKind;
  artifact: string;
}

/** A recipe step failed; diagnostics carry the tool's stderr. */
export class CompileError extends Error {
  constructor(message: string, readonly diagnostics: string) {
    super(message);
    this.name = "CompileError";
  }
}

// One size flag for every backend, matching how the fixtures upstream
// were produced.
const OPT = "-Oz";

export interface ArtifactLayout {
  dir: string;
  native: string;
  ebpf: string;
  wasm: string;
  /** Derived from the eBPF object by the offload patcher. */
  patched: string;
}

export function artifactLayout(
  outDir: string,
  program: CorpusProgram,
): ArtifactLayout {
  const dir = path.join(outDir, program.name);
  return {
    dir,
    native: path.join(dir, `${program.name}.so`),
    ebpf: path.join(dir, `${program.name}.o`),
    wasm: path.join(dir, `${program.name}.wasm`),
    patched: path.join(dir, `${program.name}.pbpf`),
  };
}

interface ToolResult {
  status: number;
  stderr: string;
}

function runTool(cmd: string, args: string[]): ToolResult {
  const r = spawnSync(cmd, args, { encoding: "utf8" });
  if (r.error !== undefined) {
    throw new Error(`cannot spawn ${cmd}: ${r.error.message}`);
  }
  return { status: r.status ?? -1, stderr: r.stderr };
}

function mustSucceed(label: string, cmd: string, args: string[]): void {
  const r = runTool(cmd, args);
  if (r.status !== 0) {
    throw new CompileError(`${label}: ${cmd} exited ${r.status}`, r.stderr);
  }
}

export function compileNative(
  tc: Toolchain,
  program: CorpusProgram,
  outDir: string,
): BuildTarget {
  const layout = artifactLayout(outDir, program);
  fs.mkdirSync(layout.dir, { recursive: true });
  mustSucceed(`${program.name} native-shared`, tc.clang, [
    OPT, "-shared", "-fPIC", "-o", layout.native, sourceFor(program),
  ]);
  return { program: program.name, target: "native-shared",
           artifact: layout.native };
}

export function compileEbpf(
  tc: Toolchain,
  program: CorpusProgram,
  outDir: string,
): BuildTarget {
  const layout = artifactLayout(outDir, program);
  fs.mkdirSync(layout.dir, { recursive: true });
  // -c only: the patcher consumes the relocatable object, symbols and
  // call relocations included.
  mustSucceed(`${program.name} ebpf-object`, tc.clang, [
    OPT, "-target", "bpf", "-c", "-o", layout.ebpf, sourceFor(program),
  ]);
  return { program: program.name, target: "ebpf-object",
           artifact: layout.ebpf };
}

export function compileWasm(
  tc: Toolchain,
  program: CorpusProgram,
  outDir: string,
): BuildTarget {
  const layout = artifactLayout(outDir, program);
  fs.mkdirSync(layout.dir, { recursive: true });
  const programObj = path.join(layout.dir, `${program.name}.wasm.o`);
  const supportObj = path.join(layout.dir, "wasm_support.o");
  // Freestanding: the programs use no libc, so no sysroot is needed.
  const compileFlags = [OPT, "-target", "wasm32", "-nostdlib", "-c"];
  mustSucceed(`${program.name} wasm-module`, tc.clang, [
    ...compileFlags, "-o", programObj, sourceFor(program),
  ]);
  mustSucceed(`${program.name} wasm-module (support)`, tc.clang, [
    ...compileFlags, "-o", supportObj, WASM_SUPPORT_SOURCE,
  ]);
  mustSucceed(`${program.name} wasm-module (link)`, tc.wasmLd, [
    "--no-entry",
    `--export=${program.entry}`,
    "--export=malloc",
    "-o", layout.wasm,
    programObj, supportObj,
  ]);
  if (tc.wasmOpt !== null) {
    const shrunk = `${layout.wasm}.opt`;
    mustSucceed(`${program.name} wasm-module (wasm-opt)`, tc.wasmOpt, [
      OPT, layout.wasm, "-o", shrunk,
    ]);
    fs.renameSync(shrunk, layout.wasm);
  }
  return { program: program.name, target: "wasm-module",
           artifact: layout.wasm };
}

/** Cross-compile every program for every target: 15 artifacts. */
export function buildAll(tc: Toolchain, outDir: string): BuildTarget[] {
  const built: BuildTarget[] = [];
  for (const program of PROGRAMS) {
    built.push(compileNative(tc, program, outDir));
    built.push(compileEbpf(tc, program, outDir));
    built.push(compileWasm(tc, program, outDir));
  }
  return built;
}

/**
 * Inline each eBPF object into a runnable patched program, embedding
 * the oracle value and staged-memory size in the header.
 */
export function patchPrograms(tc: Toolchain, outDir: string): string[] {
  const patched: string[] = [];
  for (const program of PROGRAMS) {
    const layout = artifactLayout(outDir, program);
    const r = offloadRun(tc.offload, [
      "patch", layout.ebpf,
      "--entry", program.entry,
      "--expected", program.expected.toString(),
      "--static-mem-size", String(program.staticMemSize),
      "--out", layout.patched,
    ]);
    if (r.status !== 0) {
      throw new CompileError(`${program.name} patch: offload exited `
        + `${r.status}`, r.stderr);
    }
    patched.push(layout.patched);
  }
  return patched;
}

export interface ProbeOutcome {
  rejected: boolean;
  diagnostics: string;
}

/**
 * Compile the signed-division probe for the eBPF target.  The backend
 * has no signed divide, so a healthy toolchain refuses it; a probe
 * that builds means the runtime would get bytecode it cannot honor.
 */
export function probeSignedDivision(
  tc: Toolchain,
  scratchDir: string,
): ProbeOutcome {
  fs.mkdirSync(scratchDir, { recursive: true });
  const obj = path.join(scratchDir, "signed_div.o");
  const r = runTool(tc.clang, [
    OPT, "-target", "bpf", "-c", "-o", obj, SIGNED_DIV_PROBE,
  ]);
  return { rejected: r.status !== 0, diagnostics: r.stderr };
}

function tomlString(value: string): string {
  // JSON string escaping is valid TOML basic-string escaping.
  return JSON.stringify(value);
}

/**
 * A bench configuration running all five programs on all three
 * engines against the artifacts in outDir.
 */
export function benchConfigToml(outDir: string): string {
  const lines: string[] = [
    `engines = ["native", "ebpf-vm", "wasm-v8"]`,
    `programs = [${PROGRAMS.map((p) => tomlString(p.name)).join(", ")}]`,
    "iterations = 10",
    `out_dir = ${tomlString(path.join(outDir, "bench-out"))}`,
    "",
  ];
  for (const program of PROGRAMS) {
    const layout = artifactLayout(outDir, program);
    lines.push(`[fixtures.${program.name}]`);
    lines.push(`native = ${tomlString(layout.native)}`);
    lines.push(`ebpf = ${tomlString(layout.patched)}`);
    lines.push(`wasm = ${tomlString(layout.wasm)}`);
    lines.push("");
  }
  return lines.join("\n");
}
