import * as fs from "node:fs";
import * as path from "node:path";

import {
  BuildTarget,
  CompileError,
  benchConfigToml,
  buildAll,
  patchPrograms,
  probeSignedDivision,
} from "./recipes";
import { PACKAGE_ROOT } from "./programs";
import { MissingToolchain, Toolchain, detectToolchain } from "./toolchain";

const DIAGNOSTIC_MARKER = "Please convert to unsigned div/mod";

function describe(target: BuildTarget): string {
  const size = fs.statSync(target.artifact).size;
  return `${target.target.padEnd(13)} ${target.artifact} (${size} bytes)`;
}

/** Build everything; returns the process exit code. */
export function main(
  argv: string[],
  env: NodeJS.ProcessEnv,
  log: (line: string) => void,
): number {
  const outDir = path.resolve(argv[0] ?? path.join(PACKAGE_ROOT, "build"));

  let tc: Toolchain;
  try {
    tc = detectToolchain(env);
  } catch (err) {
    if (err instanceof MissingToolchain) {
      // Missing tools are an environment condition, not a failure.
      log(`NA: ${err.message}`);
      return 0;
    }
    throw err;
  }

  try {
    for (const target of buildAll(tc, outDir)) {
      log(`built ${describe(target)}`);
    }
    for (const patched of patchPrograms(tc, outDir)) {
      log(`patched ${patched}`);
    }
  } catch (err) {
    if (err instanceof CompileError) {
      log(`FAIL: ${err.message}`);
      log(err.diagnostics.trimEnd());
      return 1;
    }
    throw err;
  }

  const probe = probeSignedDivision(tc, path.join(outDir, "probe"));
  if (!probe.rejected) {
    log("FAIL: the signed-division probe compiled for the eBPF target; "
      + "this toolchain accepts bytecode the runtime cannot honor");
    return 1;
  }
  if (!probe.diagnostics.includes(DIAGNOSTIC_MARKER)) {
    log("note: probe rejected with an unfamiliar diagnostic:");
    log(probe.diagnostics.trimEnd());
  } else {
    log(`probe: signed division rejected ("${DIAGNOSTIC_MARKER}")`);
  }

  const configPath = path.join(outDir, "bench.toml");
  fs.writeFileSync(configPath, benchConfigToml(outDir));
  log(`bench config ${configPath}`);
  log(`run: offload bench --config ${configPath}`);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2), process.env, console.log));
}
