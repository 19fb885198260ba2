/** Throughput report: 4k random faces at 512x512 (reported, not asserted). */

import { FlatMeshBuffers, rasterize } from "./rasterize.js";

// xorshift so the benchmark mesh is stable across runs
let s = 88172645463325252n;
function rand(): number {
  s ^= s << 13n; s &= 0xffffffffffffffffn;
  s ^= s >> 7n;
  s ^= s << 17n; s &= 0xffffffffffffffffn;
  return Number(s % 1000000n) / 1000000;
}

const SIZE = 512;
const FACES = 4000;
const nVerts = 3000;

const vertices = new Float64Array(3 * nVerts);
const normals = new Float64Array(3 * nVerts);
const uvs = new Float64Array(2 * nVerts);
for (let i = 0; i < nVerts; i++) {
  vertices[3 * i] = rand() * (SIZE + 10) - 5;
  vertices[3 * i + 1] = rand() * (SIZE + 10) - 5;
  vertices[3 * i + 2] = 0.5 + 3.5 * rand();
  normals[3 * i] = 1;
  uvs[2 * i] = rand();
  uvs[2 * i + 1] = rand();
}
const faces = new Int32Array(3 * FACES);
for (let i = 0; i < 3 * FACES; i++) faces[i] = Math.floor(rand() * nVerts);

const buffers: FlatMeshBuffers = {
  vertices, normals, uvs, faces, vertexCount: nVerts, faceCount: FACES,
};
const camera = { scale: 1, rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1], tx: 0, ty: 0 };
const config = {
  width: SIZE, height: SIZE, pixelCenterOffset: 0.5, backfaceCulling: false,
};

rasterize(buffers, camera, config); // warm up
const reps = 5;
const t0 = performance.now();
for (let i = 0; i < reps; i++) rasterize(buffers, camera, config);
const ms = (performance.now() - t0) / reps;
console.log(`rasterize ${SIZE}x${SIZE}, ${FACES} faces: ${ms.toFixed(1)} ms/frame`);
