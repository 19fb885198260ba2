/**
 * Version-tagged flat-array file boundary.
 *
 * Request ("TXRK0001", little-endian):
 *   u32 N, u32 M, u32 W, u32 H,
 *   f64 scale, f64[9] rotation (row-major), f64 tx, f64 ty, f64 offset,
 *   u32 backfaceCulling,
 *   f64[3N] vertices, f64[3N] normals, f64[2N] uvs, i32[3M] faces
 *
 * Response ("TXRR0001"):
 *   i32 status, u32 W, u32 H; on status 0 followed by
 *   i32[HW] faceId, f64[3HW] barycentric, f64[2HW] uv, f64[3HW] normal,
 *   f64[HW] depth, u8[HW] coverage
 */

import {
  CameraParams,
  FlatMeshBuffers,
  RasterConfig,
  RasterResult,
} from "./rasterize.js";

export const REQUEST_MAGIC = "TXRK0001";
export const RESPONSE_MAGIC = "TXRR0001";
export const STATUS_BAD_MAGIC = 1;

export interface Request {
  buffers: FlatMeshBuffers;
  camera: CameraParams;
  config: RasterConfig;
}

class Cursor {
  constructor(public buf: ArrayBuffer, public pos = 0) {}
  view(): DataView {
    return new DataView(this.buf);
  }
  u32(): number {
    const v = this.view().getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }
  i32(): number {
    const v = this.view().getInt32(this.pos, true);
    this.pos += 4;
    return v;
  }
  f64(): number {
    const v = this.view().getFloat64(this.pos, true);
    this.pos += 8;
    return v;
  }
  // slice-copy so alignment of the source offset never matters
  f64Array(count: number): Float64Array {
    const out = new Float64Array(this.buf.slice(this.pos, this.pos + 8 * count));
    this.pos += 8 * count;
    return out;
  }
  i32Array(count: number): Int32Array {
    const out = new Int32Array(this.buf.slice(this.pos, this.pos + 4 * count));
    this.pos += 4 * count;
    return out;
  }
  u8Array(count: number): Uint8Array {
    const out = new Uint8Array(this.buf.slice(this.pos, this.pos + count));
    this.pos += count;
    return out;
  }
}

function magicOf(buf: ArrayBuffer): string {
  return new TextDecoder().decode(new Uint8Array(buf, 0, 8));
}

export function decodeRequest(buf: ArrayBuffer): Request | null {
  if (buf.byteLength < 8 || magicOf(buf) !== REQUEST_MAGIC) return null;
  const c = new Cursor(buf, 8);
  try {
    const n = c.u32(), m = c.u32(), w = c.u32(), h = c.u32();
    const scale = c.f64();
    const rotation = c.f64Array(9);
    const tx = c.f64(), ty = c.f64(), offset = c.f64();
    const backface = c.u32() !== 0;
    const vertices = c.f64Array(3 * n);
    const normals = c.f64Array(3 * n);
    const uvs = c.f64Array(2 * n);
    const faces = c.i32Array(3 * m);
    if (c.pos > buf.byteLength) return null;
    return {
      buffers: { vertices, normals, uvs, faces, vertexCount: n, faceCount: m },
      camera: { scale, rotation, tx, ty },
      config: {
        width: w,
        height: h,
        pixelCenterOffset: offset,
        backfaceCulling: backface,
      },
    };
  } catch {
    return null;
  }
}

export function encodeResponse(
  status: number,
  width: number,
  height: number,
  result: RasterResult | null,
): Uint8Array {
  const hw = width * height;
  const bodyBytes = result ? 4 * hw + 8 * (3 + 2 + 3 + 1) * hw + hw : 0;
  const out = new Uint8Array(8 + 12 + bodyBytes);
  out.set(new TextEncoder().encode(RESPONSE_MAGIC), 0);
  const dv = new DataView(out.buffer);
  dv.setInt32(8, status, true);
  dv.setUint32(12, width, true);
  dv.setUint32(16, height, true);
  if (!result) return out;
  let pos = 20;
  const put = (arr: Int32Array | Float64Array | Uint8Array) => {
    out.set(new Uint8Array(arr.buffer, arr.byteOffset, arr.byteLength), pos);
    pos += arr.byteLength;
  };
  put(result.faceId);
  put(result.barycentric);
  put(result.uv);
  put(result.normal);
  put(result.depth);
  put(result.coverage);
  return out;
}

export function decodeResponse(
  buf: ArrayBuffer,
): { status: number; width: number; height: number; result: RasterResult | null } | null {
  if (buf.byteLength < 20 || magicOf(buf) !== RESPONSE_MAGIC) return null;
  const c = new Cursor(buf, 8);
  const status = c.i32();
  const width = c.u32(), height = c.u32();
  if (status !== 0) return { status, width, height, result: null };
  const hw = width * height;
  const result: RasterResult = {
    faceId: c.i32Array(hw),
    barycentric: c.f64Array(3 * hw),
    uv: c.f64Array(2 * hw),
    normal: c.f64Array(3 * hw),
    depth: c.f64Array(hw),
    coverage: c.u8Array(hw),
  };
  return { status, width, height, result };
}
