/**
 * Typed-array client for the scenefuse kernels.
 *
 * Every operation marshals its inputs into tensor files, invokes the
 * native CLI's array-level `kernel` surface, and decodes the outputs into
 * fresh typed arrays. Caller buffers are copied on the way in and never
 * retained or mutated; in deterministic mode the results are bit-identical
 * to the native pipeline's own output files.
 */

import {
  CameraIntrinsics,
  FrameInput,
  FuseOptions,
  NdArray,
  Pose,
  ShapeError,
  VoxelBounds,
  expectRank,
  ndarray,
  validate,
} from "./types.js";
import { runKernel, runCli } from "./runner.js";
import { decodeTensor, encodeTensor } from "./tensorfile.js";

export {
  CameraIntrinsics,
  FrameInput,
  FuseOptions,
  NdArray,
  Pose,
  ShapeError,
  VoxelBounds,
  ndarray,
  validate,
  encodeTensor,
  decodeTensor,
  runCli,
};

export interface FuseResult {
  /** (N, 3) float64 positions in the current frame */
  positions: NdArray;
  /** (N, C) float32 features */
  features: NdArray;
  /** (N,) int32 frame-offset tags */
  origins: NdArray;
  /** (N, 2) float64 sub-pixel provenance */
  sourcePixels: NdArray;
}

export interface VoxelizeResult {
  /** (X, Y, Z, C) float32 aggregated features */
  grid: NdArray;
  /** (X, Y, Z) int64 point counts */
  counts: NdArray;
}

export interface DensifyResult {
  grid: NdArray;
  depth: NdArray;
  features: NdArray;
}

export interface EvalResult {
  iou: number;
  miou: number;
  empty: boolean;
  scoredVoxels: number;
  perClassIou: Record<string, number>;
}

function asF64(arr: NdArray, name: string, rank: number): NdArray {
  expectRank(arr, rank, name);
  if (arr.dtype === "f64") return arr;
  if (arr.dtype !== "f32") {
    throw new ShapeError(`${name} must be float data, got ${arr.dtype}`);
  }
  const out = new Float64Array(arr.data.length);
  const src = arr.data as Float32Array;
  for (let i = 0; i < src.length; i++) out[i] = src[i];
  return { shape: [...arr.shape], dtype: "f64", data: out };
}

function asF32(arr: NdArray, name: string, rank: number): NdArray {
  expectRank(arr, rank, name);
  if (arr.dtype === "f32") return arr;
  if (arr.dtype !== "f64") {
    throw new ShapeError(`${name} must be float data, got ${arr.dtype}`);
  }
  const out = new Float32Array(arr.data.length);
  const src = arr.data as Float64Array;
  for (let i = 0; i < src.length; i++) out[i] = src[i];
  return { shape: [...arr.shape], dtype: "f32", data: out };
}

function boundsDict(bounds: VoxelBounds, resolution?: [number, number, number]) {
  return {
    min_corner: bounds.minCorner,
    max_corner: bounds.maxCorner,
    resolution: resolution ?? bounds.resolution,
  };
}

function poseDict(pose: Pose) {
  if (pose.rotation.length !== 3 || pose.rotation.some((r) => r.length !== 3)) {
    throw new ShapeError("pose rotation must be 3x3");
  }
  if (pose.translation.length !== 3) {
    throw new ShapeError("pose translation must have 3 entries");
  }
  return { rotation: pose.rotation, translation: pose.translation };
}

/** Blur weights for a historical depth map: 1 - minmax(depth), invalid -> 0. */
export function hcbWeights(depth: NdArray): NdArray {
  const d = asF64(depth, "depth", 2);
  let result: NdArray | undefined;
  runKernel(
    "hcb-weights",
    { depth: "depth.tensor" },
    { "depth.tensor": { array: d, order: "HW" } },
    (r) => {
      result = r.tensor("weights.tensor");
    },
  );
  return result!;
}

/** Upsample the current frame's pixel grid, depth, and features. */
export function densifyCurrent(
  features: NdArray,
  depth: NdArray,
  factor: number,
): DensifyResult {
  const f = asF32(features, "features", 3);
  const d = asF64(depth, "depth", 2);
  if (!Number.isInteger(factor) || factor < 1) {
    throw new ShapeError(`densify factor must be a positive integer, got ${factor}`);
  }
  let result: DensifyResult | undefined;
  runKernel(
    "densify",
    { features: "features.tensor", depth: "depth.tensor", factor },
    {
      "features.tensor": { array: f, order: "HWC" },
      "depth.tensor": { array: d, order: "HW" },
    },
    (r) => {
      result = {
        grid: r.tensor("up_grid.tensor"),
        depth: r.tensor("up_depth.tensor"),
        features: r.tensor("up_features.tensor"),
      };
    },
  );
  return result!;
}

/** Fuse a frame sequence into one current-frame point cloud. */
export function fuse(frames: FrameInput[], options: FuseOptions = {}): FuseResult {
  if (frames.length === 0) {
    throw new ShapeError("fuse needs at least one frame");
  }
  const tensors: Record<string, { array: NdArray; order: string }> = {};
  const frameDicts = frames.map((frame, i) => {
    const feats = asF32(frame.features, `frame ${i} features`, 3);
    const depth = asF64(frame.depth, `frame ${i} depth`, 2);
    tensors[`f${i}_features.tensor`] = { array: feats, order: "HWC" };
    tensors[`f${i}_depth.tensor`] = { array: depth, order: "HW" };
    return {
      features: `f${i}_features.tensor`,
      depth: `f${i}_depth.tensor`,
      intrinsics: frame.intrinsics,
      pose: poseDict(frame.pose),
      timestamp_index: frame.timestampIndex,
    };
  });
  const config = {
    n_frames: options.nFrames ?? frames.length,
    densify_factor: options.densifyFactor ?? 2,
    enable_hcb: options.enableHcb ?? true,
    enable_ccfd: options.enableCcfd ?? true,
  };
  let result: FuseResult | undefined;
  runKernel("fuse", { frames: frameDicts, config }, tensors, (r) => {
    result = {
      positions: r.tensor("positions.tensor"),
      features: r.tensor("features.tensor"),
      origins: r.tensor("origins.tensor"),
      sourcePixels: r.tensor("source_pixels.tensor"),
    };
  });
  return result!;
}

/** Aggregate point features onto a voxel grid (sum / nFrames per cell). */
export function voxelize(
  positions: NdArray,
  features: NdArray,
  bounds: VoxelBounds,
  resolution: [number, number, number],
  nFrames: number,
): VoxelizeResult {
  const p = asF64(positions, "positions", 2);
  const f = asF32(features, "features", 2);
  if (p.shape[1] !== 3) {
    throw new ShapeError(`positions must be (N, 3), got [${p.shape}]`);
  }
  if (f.shape[0] !== p.shape[0]) {
    throw new ShapeError(
      `features rows ${f.shape[0]} do not match ${p.shape[0]} positions`,
    );
  }
  let result: VoxelizeResult | undefined;
  runKernel(
    "voxelize",
    {
      positions: "positions.tensor",
      features: "features.tensor",
      bounds: boundsDict(bounds, resolution),
      n_frames: nFrames,
      deterministic: true,
    },
    {
      "positions.tensor": { array: p, order: "NC" },
      "features.tensor": { array: f, order: "NC" },
    },
    (r) => {
      result = {
        grid: r.tensor("grid_features.tensor"),
        counts: r.tensor("grid_counts.tensor"),
      };
    },
  );
  return result!;
}

/** In-view mask over voxel centers for the current camera frustum. */
export function oovMask(
  bounds: VoxelBounds,
  intrinsics: CameraIntrinsics,
  camFromEgo: Pose,
): NdArray {
  let result: NdArray | undefined;
  runKernel(
    "oov-mask",
    {
      bounds: boundsDict(bounds),
      intrinsics,
      cam_from_ego: poseDict(camFromEgo),
    },
    {},
    (r) => {
      result = r.tensor("in_view.tensor");
    },
  );
  return result!;
}

/** Occupancy IoU and per-class mIoU of a predicted label grid. */
export function evalLabels(
  pred: NdArray,
  gt: NdArray,
  options: { gtInvalid?: NdArray; regionMask?: NdArray; numClasses?: number } = {},
): EvalResult {
  expectRank(pred, 3, "pred");
  expectRank(gt, 3, "gt");
  if (pred.shape.join() !== gt.shape.join()) {
    throw new ShapeError(
      `pred shape [${pred.shape}] does not match gt [${gt.shape}]`,
    );
  }
  const request: Record<string, unknown> = {
    pred: "pred.tensor",
    gt: "gt.tensor",
  };
  const tensors: Record<string, { array: NdArray; order: string }> = {
    "pred.tensor": { array: pred, order: "XYZ" },
    "gt.tensor": { array: gt, order: "XYZ" },
  };
  if (options.gtInvalid) {
    expectRank(options.gtInvalid, 3, "gtInvalid");
    request.gt_invalid = "gt_invalid.tensor";
    tensors["gt_invalid.tensor"] = { array: options.gtInvalid, order: "XYZ" };
  }
  if (options.regionMask) {
    expectRank(options.regionMask, 3, "regionMask");
    request.region_mask = "region_mask.tensor";
    tensors["region_mask.tensor"] = { array: options.regionMask, order: "XYZ" };
  }
  if (options.numClasses !== undefined) {
    request.num_classes = options.numClasses;
  }
  let result: EvalResult | undefined;
  runKernel("eval", request, tensors, (r) => {
    result = {
      iou: r.response.iou as number,
      miou: r.response.miou as number,
      empty: r.response.empty as boolean,
      scoredVoxels: r.response.scored_voxels as number,
      perClassIou: r.response.per_class_iou as Record<string, number>,
    };
  });
  return result!;
}
