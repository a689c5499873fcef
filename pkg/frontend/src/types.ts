export type DType = "f32" | "f64" | "u8" | "u16" | "i32" | "i64";

export type TypedArray =
  | Float32Array
  | Float64Array
  | Uint8Array
  | Uint16Array
  | Int32Array
  | BigInt64Array;

/** Dense row-major array handle; data length must equal the shape product. */
export interface NdArray {
  shape: number[];
  dtype: DType;
  data: TypedArray;
}

export interface CameraIntrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

/** Rigid transform: p' = rotation * p + translation (row-major 3x3). */
export interface Pose {
  rotation: number[][];
  translation: number[];
}

export interface VoxelBounds {
  minCorner: [number, number, number];
  maxCorner: [number, number, number];
  resolution: [number, number, number];
}

export interface FrameInput {
  /** (H', W', C) float-convertible feature map */
  features: NdArray;
  /** (H, W) depth map in meters; NaN marks invalid pixels */
  depth: NdArray;
  intrinsics: CameraIntrinsics;
  /** world <- frame */
  pose: Pose;
  /** 0 = current frame, 1 = one step back, ... */
  timestampIndex: number;
}

export interface FuseOptions {
  nFrames?: number;
  densifyFactor?: number;
  enableHcb?: boolean;
  enableCcfd?: boolean;
}

export class ShapeError extends Error {}

const CONSTRUCTORS: Record<DType, new (n: number) => TypedArray> = {
  f32: Float32Array,
  f64: Float64Array,
  u8: Uint8Array,
  u16: Uint16Array,
  i32: Int32Array,
  i64: BigInt64Array,
};

export function dtypeOf(data: TypedArray): DType {
  if (data instanceof Float32Array) return "f32";
  if (data instanceof Float64Array) return "f64";
  if (data instanceof Uint8Array) return "u8";
  if (data instanceof Uint16Array) return "u16";
  if (data instanceof Int32Array) return "i32";
  if (data instanceof BigInt64Array) return "i64";
  throw new ShapeError("unsupported typed array");
}

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function ndarray(shape: number[], data: TypedArray): NdArray {
  const arr = { shape: [...shape], dtype: dtypeOf(data), data };
  validate(arr);
  return arr;
}

export function alloc(shape: number[], dtype: DType): NdArray {
  return { shape: [...shape], dtype, data: new CONSTRUCTORS[dtype](elementCount(shape)) };
}

export function validate(arr: NdArray): void {
  if (arr.shape.some((d) => d < 0 || !Number.isInteger(d))) {
    throw new ShapeError(`bad shape [${arr.shape}]`);
  }
  if (arr.data.length !== elementCount(arr.shape)) {
    throw new ShapeError(
      `data length ${arr.data.length} does not match shape [${arr.shape}]`,
    );
  }
  if (dtypeOf(arr.data) !== arr.dtype) {
    throw new ShapeError(`dtype tag ${arr.dtype} does not match the buffer`);
  }
}

export function expectRank(arr: NdArray, rank: number, name: string): void {
  validate(arr);
  if (arr.shape.length !== rank) {
    throw new ShapeError(
      `${name} must have rank ${rank}, got shape [${arr.shape}]`,
    );
  }
}
