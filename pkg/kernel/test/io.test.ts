import { describe, expect, it } from "vitest";

import {
  decodeRequest,
  decodeResponse,
  encodeResponse,
  REQUEST_MAGIC,
} from "../src/io.js";
import { rasterize } from "../src/rasterize.js";

function buildRequest(
  n: number,
  m: number,
  size: number,
  fill: (v: Float64Array, nr: Float64Array, uv: Float64Array, f: Int32Array) => void,
): Uint8Array {
  const bytes = 8 + 16 + 8 * 13 + 4 + 8 * (3 * n + 3 * n + 2 * n) + 4 * 3 * m;
  const out = new Uint8Array(bytes);
  out.set(new TextEncoder().encode(REQUEST_MAGIC), 0);
  const dv = new DataView(out.buffer);
  let p = 8;
  for (const v of [n, m, size, size]) {
    dv.setUint32(p, v, true);
    p += 4;
  }
  const cam = [1, /* rotation */ 1, 0, 0, 0, 1, 0, 0, 0, 1, /* t */ 0, 0, /* off */ 0.5];
  for (const v of cam) {
    dv.setFloat64(p, v, true);
    p += 8;
  }
  dv.setUint32(p, 0, true); // no culling
  p += 4;
  const verts = new Float64Array(3 * n);
  const normals = new Float64Array(3 * n);
  const uvs = new Float64Array(2 * n);
  const faces = new Int32Array(3 * m);
  fill(verts, normals, uvs, faces);
  for (const arr of [verts, normals, uvs]) {
    for (let i = 0; i < arr.length; i++) {
      dv.setFloat64(p, arr[i], true);
      p += 8;
    }
  }
  for (let i = 0; i < faces.length; i++) {
    dv.setInt32(p, faces[i], true);
    p += 4;
  }
  return out;
}

describe("file boundary", () => {
  it("round-trips a request and response", () => {
    const req = buildRequest(3, 1, 8, (v, nr, uv, f) => {
      v.set([0, 0, 1, 4, 0, 1, 0, 4, 1]);
      nr.set([0, 0, 1, 0, 0, 1, 0, 0, 1]);
      uv.set([0, 0, 1, 0, 0, 1]);
      f.set([0, 1, 2]);
    });
    const decoded = decodeRequest(req.buffer as ArrayBuffer);
    expect(decoded).not.toBeNull();
    const result = rasterize(decoded!.buffers, decoded!.camera, decoded!.config);
    const resp = encodeResponse(0, 8, 8, result);
    const back = decodeResponse(resp.buffer as ArrayBuffer);
    expect(back!.status).toBe(0);
    expect(back!.result!.faceId).toEqual(result.faceId);
    expect(back!.result!.barycentric).toEqual(result.barycentric);
    expect(back!.result!.coverage).toEqual(result.coverage);
  });

  it("rejects a wrong magic", () => {
    const junk = new TextEncoder().encode("NOTMAGIC plus trailing bytes");
    expect(decodeRequest(junk.buffer as ArrayBuffer)).toBeNull();
  });

  it("rejects truncated requests", () => {
    const req = buildRequest(3, 1, 8, () => {});
    const cut = req.slice(0, req.length - 5);
    expect(decodeRequest(cut.buffer.slice(0, cut.byteLength) as ArrayBuffer)).toBeNull();
  });

  it("encodes error responses without a body", () => {
    const resp = encodeResponse(2, 8, 8, null);
    const back = decodeResponse(resp.buffer as ArrayBuffer);
    expect(back!.status).toBe(2);
    expect(back!.result).toBeNull();
  });
});
