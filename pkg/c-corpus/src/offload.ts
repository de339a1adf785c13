import { spawnSync } from "node:child_process";

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

/** Invoke the offload CLI once, synchronously. */
export function offloadRun(
  offload: string,
  args: string[],
  env: NodeJS.ProcessEnv = process.env,
): CliResult {
  const r = spawnSync(offload, args, {
    encoding: "utf8",
    env,
    maxBuffer: 64 * 1024 * 1024,
  });
  if (r.error !== undefined) {
    throw new Error(`cannot spawn ${offload}: ${r.error.message}`);
  }
  return { status: r.status ?? -1, stdout: r.stdout, stderr: r.stderr };
}

/** Pull the u64 result out of a runner's "return_value N" line. */
export function parseReturnValue(stdout: string): bigint {
  const m = /^return_value (\d+)$/m.exec(stdout);
  if (m === null) {
    throw new Error(`no return_value line in output:\n${stdout}`);
  }
  return BigInt(m[1]);
}
