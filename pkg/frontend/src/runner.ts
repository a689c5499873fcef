/**
 * Spawns the native CLI. Override the interpreter with SCENEFUSE_CLI
 * (whitespace-separated command prefix, default "python3 -m scenefuse").
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { Buffer } from "node:buffer";

import { NdArray } from "./types.js";
import { decodeTensor, encodeTensor } from "./tensorfile.js";

function cliPrefix(): string[] {
  const env = process.env.SCENEFUSE_CLI;
  return env ? env.split(/\s+/) : ["python3", "-m", "scenefuse"];
}

export function runCli(args: string[]): string {
  const [cmd, ...prefix] = cliPrefix();
  const result = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (result.error) {
    throw result.error;
  }
  if (result.status !== 0) {
    throw new Error(
      `scenefuse ${args[0]} failed (exit ${result.status}): ${result.stderr}`,
    );
  }
  return result.stdout;
}

export interface KernelResult {
  response: Record<string, unknown>;
  tensor(name: string): NdArray;
}

/**
 * Run one array-level kernel op: writes the input tensors and request JSON
 * into a scratch directory, invokes `scenefuse kernel <op>`, and exposes
 * the response plus lazily decoded output tensors.
 */
export function runKernel(
  op: string,
  request: Record<string, unknown>,
  tensors: Record<string, { array: NdArray; order: string }>,
  consume: (result: KernelResult) => void,
): void {
  const work = mkdtempSync(join(tmpdir(), "scenefuse-"));
  try {
    for (const [name, t] of Object.entries(tensors)) {
      writeFileSync(join(work, name), encodeTensor(t.array, t.order));
    }
    const requestPath = join(work, "request.json");
    writeFileSync(requestPath, JSON.stringify(request));
    const outDir = join(work, "out");
    runCli(["kernel", op, "--request", requestPath, "--out-dir", outDir]);
    const response = JSON.parse(
      readFileSync(join(outDir, "response.json"), "utf-8"),
    ) as Record<string, unknown>;
    consume({
      response,
      tensor(name: string): NdArray {
        return decodeTensor(Buffer.from(readFileSync(join(outDir, name)))).array;
      },
    });
  } finally {
    rmSync(work, { recursive: true, force: true });
  }
}
