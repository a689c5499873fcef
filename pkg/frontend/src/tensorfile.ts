/**
 * Tensor-file codec: an 8-byte little-endian header length, a JSON header
 * {dims, dtype, order}, then the raw little-endian payload.
 */

import { Buffer } from "node:buffer";
import { DType, NdArray, TypedArray, elementCount, validate } from "./types.js";

const BYTES_PER: Record<DType, number> = {
  f32: 4,
  f64: 8,
  u8: 1,
  u16: 2,
  i32: 4,
  i64: 8,
};

function viewFor(dtype: DType, buf: Buffer, count: number): TypedArray {
  // copy into a fresh aligned buffer; Buffer slices may be mis-aligned
  const bytes = new Uint8Array(count * BYTES_PER[dtype]);
  bytes.set(buf.subarray(0, bytes.length));
  switch (dtype) {
    case "f32":
      return new Float32Array(bytes.buffer);
    case "f64":
      return new Float64Array(bytes.buffer);
    case "u8":
      return new Uint8Array(bytes.buffer);
    case "u16":
      return new Uint16Array(bytes.buffer);
    case "i32":
      return new Int32Array(bytes.buffer);
    case "i64":
      return new BigInt64Array(bytes.buffer);
  }
}

export function encodeTensor(arr: NdArray, order: string): Buffer {
  validate(arr);
  const header = Buffer.from(
    JSON.stringify({ dims: arr.shape, dtype: arr.dtype, order }),
    "utf-8",
  );
  const prefix = Buffer.alloc(8);
  prefix.writeBigUInt64LE(BigInt(header.length));
  const payload = Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength);
  return Buffer.concat([prefix, header, Buffer.from(payload)]);
}

export function decodeTensor(data: Buffer): { array: NdArray; order: string } {
  if (data.length < 8) {
    throw new Error("tensor file shorter than its length prefix");
  }
  const headerLen = Number(data.readBigUInt64LE(0));
  const header = JSON.parse(data.subarray(8, 8 + headerLen).toString("utf-8"));
  const dims: number[] = header.dims.map((d: number) => Number(d));
  const dtype: DType = header.dtype;
  if (!(dtype in BYTES_PER)) {
    throw new Error(`unknown tensor dtype tag '${header.dtype}'`);
  }
  const expected = elementCount(dims) * BYTES_PER[dtype];
  const payload = data.subarray(8 + headerLen);
  if (payload.length !== expected) {
    throw new Error(
      `tensor payload is ${payload.length} bytes, dims [${dims}] imply ${expected}`,
    );
  }
  return {
    array: { shape: dims, dtype, data: viewFor(dtype, payload, elementCount(dims)) },
    order: header.order,
  };
}
