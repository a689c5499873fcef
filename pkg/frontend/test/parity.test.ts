/**
 * Binding/native parity on the synthetic out-of-view scenario: arrays
 * returned through the client must match the deterministic native
 * pipeline's output files byte for byte, and no caller buffer may change.
 */

import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { Buffer } from "node:buffer";

import { afterAll, describe, expect, it } from "vitest";

import {
  FrameInput,
  NdArray,
  decodeTensor,
  fuse,
  hcbWeights,
  ndarray,
  runCli,
  voxelize,
} from "../src/index.js";

const work = mkdtempSync(join(tmpdir(), "scenefuse-parity-"));
const scene = join(work, "scene");
const cloudCam = join(work, "cloud_cam");
const cloudEgo = join(work, "cloud_ego");
const gridDir = join(work, "grid");

afterAll(() => rmSync(work, { recursive: true, force: true }));

function loadTensor(path: string): NdArray {
  return decodeTensor(Buffer.from(readFileSync(path))).array;
}

function bytesOf(arr: NdArray): Buffer {
  return Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength);
}

function parseCalib(path: string): { fx: number; fy: number; cx: number; cy: number } {
  const line = readFileSync(path, "utf-8")
    .split("\n")
    .find((l) => l.startsWith("P2:"));
  if (!line) throw new Error("calib.txt has no P2 row");
  const v = line.slice(3).trim().split(/\s+/).map(Number);
  return { fx: v[0], fy: v[5], cx: v[2], cy: v[6] };
}

function parsePoses(path: string): { rotation: number[][]; translation: number[] }[] {
  return readFileSync(path, "utf-8")
    .trim()
    .split("\n")
    .map((line) => {
      const v = line.trim().split(/\s+/).map(Number);
      return {
        rotation: [
          [v[0], v[1], v[2]],
          [v[4], v[5], v[6]],
          [v[8], v[9], v[10]],
        ],
        translation: [v[3], v[7], v[11]],
      };
    });
}

function sceneFrames(): FrameInput[] {
  const k = parseCalib(join(scene, "calib.txt"));
  const poses = parsePoses(join(scene, "poses.txt"));
  const frames: FrameInput[] = [];
  for (let offset = 0; offset < 4; offset++) {
    const scan = 3 - offset;
    const id = String(scan).padStart(6, "0");
    const depth = loadTensor(join(scene, "depth", `${id}.tensor`));
    const features = loadTensor(join(scene, "features", `${id}.tensor`));
    frames.push({
      features,
      depth,
      intrinsics: { ...k, width: depth.shape[1], height: depth.shape[0] },
      pose: poses[scan],
      timestampIndex: offset,
    });
  }
  return frames;
}

describe("binding parity with the native pipeline", () => {
  it("reproduces deterministic fuse and voxelize outputs bit-for-bit", () => {
    runCli(["synth", "--template", "oov-car", "--out", scene, "--depth-tensors"]);
    runCli(["fuse", "--scene", scene, "--out", cloudCam, "--deterministic",
            "--coords", "camera"]);
    runCli(["fuse", "--scene", scene, "--out", cloudEgo, "--deterministic"]);
    runCli(["voxelize", "--cloud", cloudEgo, "--out", gridDir, "--deterministic"]);

    const frames = sceneFrames();
    const snapshots = frames.map((f) => ({
      depth: Buffer.from(bytesOf(f.depth)),
      features: Buffer.from(bytesOf(f.features)),
    }));

    const fused = fuse(frames, { nFrames: 4 });
    for (const [name, got] of [
      ["positions", fused.positions],
      ["features", fused.features],
      ["origins", fused.origins],
      ["source_pixels", fused.sourcePixels],
    ] as const) {
      const native = loadTensor(join(cloudCam, `${name}.tensor`));
      expect(got.shape, name).toEqual(native.shape);
      expect(bytesOf(got).equals(bytesOf(native)), `${name} bytes`).toBe(true);
    }

    // caller arrays untouched
    frames.forEach((f, i) => {
      expect(bytesOf(f.depth).equals(snapshots[i].depth)).toBe(true);
      expect(bytesOf(f.features).equals(snapshots[i].features)).toBe(true);
    });

    // ego-frame cloud through the binding voxelizer vs the native grid
    const positions = loadTensor(join(cloudEgo, "positions.tensor"));
    const features = loadTensor(join(cloudEgo, "features.tensor"));
    const meta = JSON.parse(readFileSync(join(scene, "scene.json"), "utf-8"));
    const b = meta.bounds;
    const posCopy = Buffer.from(bytesOf(positions));
    const result = voxelize(
      positions,
      features,
      { minCorner: b.min_corner, maxCorner: b.max_corner, resolution: b.resolution },
      b.resolution,
      4,
    );
    const nativeGrid = loadTensor(join(gridDir, "grid_features.tensor"));
    const nativeCounts = loadTensor(join(gridDir, "grid_counts.tensor"));
    expect(result.grid.shape).toEqual(nativeGrid.shape);
    expect(bytesOf(result.grid).equals(bytesOf(nativeGrid))).toBe(true);
    expect(bytesOf(result.counts).equals(bytesOf(nativeCounts))).toBe(true);
    expect(bytesOf(positions).equals(posCopy)).toBe(true);

    // sanity: fused cloud is non-trivial and tagged current-first
    expect(fused.positions.shape[0]).toBeGreaterThan(10_000);
    expect((fused.origins.data as Int32Array)[0]).toBe(0);
  }, 20_000);

  it("keeps numeric equality on a direct hand check of hcb weights", () => {
    const depth = ndarray([1, 3], new Float64Array([2, 4, 6]));
    const before = Buffer.from(bytesOf(depth));
    const { data } = hcbWeights(depth);
    expect(Array.from(data as Float64Array)).toEqual([1, 0.5, 0]);
    expect(bytesOf(depth).equals(before)).toBe(true);
  });
});
