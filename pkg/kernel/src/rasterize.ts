/**
 * Depth-buffered triangle rasterizer over flat numeric arrays.
 *
 * This follows the reference conventions exactly so outputs can be compared
 * bit-for-bit on face ids:
 *   - pixel centers at (x + offset, y + offset), offset normally 0.5
 *   - inclusive edge functions (>= 0), winding-sign corrected
 *   - screen-space barycentrics, smallest interpolated depth wins,
 *     exact depth ties resolved to the lowest face index
 *   - degenerate (zero screen area) triangles skipped
 * The arithmetic mirrors the reference expression-for-expression; since both
 * sides run IEEE-754 doubles, identical inputs give identical face ids.
 */

export interface CameraParams {
  scale: number;
  /** row-major 3x3 view rotation */
  rotation: Float64Array | number[];
  tx: number;
  ty: number;
}

export interface RasterConfig {
  width: number;
  height: number;
  pixelCenterOffset: number;
  backfaceCulling: boolean;
}

export interface FlatMeshBuffers {
  /** N*3 */ vertices: Float64Array;
  /** N*3 */ normals: Float64Array;
  /** M*3 */ faces: Int32Array;
  /** N*2 */ uvs: Float64Array;
  vertexCount: number;
  faceCount: number;
}

export interface RasterResult {
  faceId: Int32Array;      // H*W, -1 = background
  barycentric: Float64Array; // H*W*3
  uv: Float64Array;        // H*W*2
  normal: Float64Array;    // H*W*3
  depth: Float64Array;     // H*W, +Infinity at background
  coverage: Uint8Array;    // H*W
}

export const STATUS_OK = 0;
export const STATUS_BAD_LENGTHS = 2;
export const STATUS_FACE_OUT_OF_RANGE = 3;

export function validateBuffers(b: FlatMeshBuffers): number {
  const n = b.vertexCount, m = b.faceCount;
  if (n < 0 || m < 0) return STATUS_BAD_LENGTHS;
  if (b.vertices.length !== n * 3 || b.normals.length !== n * 3 ||
      b.uvs.length !== n * 2 || b.faces.length !== m * 3) {
    return STATUS_BAD_LENGTHS;
  }
  for (let i = 0; i < m * 3; i++) {
    const f = b.faces[i];
    if (f < 0 || f >= n) return STATUS_FACE_OUT_OF_RANGE;
  }
  return STATUS_OK;
}

export function rasterize(
  buffers: FlatMeshBuffers,
  camera: CameraParams,
  config: RasterConfig,
): RasterResult {
  const { width: W, height: H } = config;
  const n = buffers.vertexCount;
  const m = buffers.faceCount;
  const verts = buffers.vertices;
  const vn = buffers.normals;
  const faces = buffers.faces;
  const uvs = buffers.uvs;
  const R = camera.rotation;

  const faceId = new Int32Array(H * W).fill(-1);
  const bary = new Float64Array(H * W * 3);
  const uvImg = new Float64Array(H * W * 2);
  const nrmImg = new Float64Array(H * W * 3);
  const depthBuf = new Float64Array(H * W).fill(Infinity);
  const coverage = new Uint8Array(H * W);

  // project once: p = R v, screen = scale * p.xy + t, depth = p.z
  const px2d = new Float64Array(n);
  const py2d = new Float64Array(n);
  const vdepth = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const x = verts[3 * i], y = verts[3 * i + 1], z = verts[3 * i + 2];
    const rx = R[0] * x + R[1] * y + R[2] * z;
    const ry = R[3] * x + R[4] * y + R[5] * z;
    const rz = R[6] * x + R[7] * y + R[8] * z;
    px2d[i] = camera.scale * rx + camera.tx;
    py2d[i] = camera.scale * ry + camera.ty;
    vdepth[i] = rz;
  }

  const off = config.pixelCenterOffset;
  for (let fi = 0; fi < m; fi++) {
    const i0 = faces[3 * fi], i1 = faces[3 * fi + 1], i2 = faces[3 * fi + 2];
    const ax = px2d[i0], ay = py2d[i0];
    const bx = px2d[i1], by = py2d[i1];
    const cx = px2d[i2], cy = py2d[i2];
    const area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (area2 === 0) continue;
    if (config.backfaceCulling && area2 < 0) continue;
    const sgn = area2 > 0 ? 1.0 : -1.0;
    const denom = Math.abs(area2);

    const xmin = Math.max(Math.floor(Math.min(ax, bx, cx) - off), 0);
    const xmax = Math.min(Math.ceil(Math.max(ax, bx, cx) - off), W - 1);
    const ymin = Math.max(Math.floor(Math.min(ay, by, cy) - off), 0);
    const ymax = Math.min(Math.ceil(Math.max(ay, by, cy) - off), H - 1);
    if (xmin > xmax || ymin > ymax) continue;

    const d0 = vdepth[i0], d1 = vdepth[i1], d2 = vdepth[i2];
    for (let y = ymin; y <= ymax; y++) {
      const py = y + off;
      const row = y * W;
      for (let x = xmin; x <= xmax; x++) {
        const px = x + off;
        const w0 = ((cx - bx) * (py - by) - (cy - by) * (px - bx)) * sgn;
        if (w0 < 0) continue;
        const w1 = ((ax - cx) * (py - cy) - (ay - cy) * (px - cx)) * sgn;
        if (w1 < 0) continue;
        const w2 = ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) * sgn;
        if (w2 < 0) continue;
        const b0 = w0 / denom, b1 = w1 / denom, b2 = w2 / denom;
        const z = b0 * d0 + b1 * d1 + b2 * d2;
        const p = row + x;
        if (!(z < depthBuf[p])) continue; // strict: ties keep lowest index
        depthBuf[p] = z;
        faceId[p] = fi;
        bary[3 * p] = b0;
        bary[3 * p + 1] = b1;
        bary[3 * p + 2] = b2;
        uvImg[2 * p] = b0 * uvs[2 * i0] + b1 * uvs[2 * i1] + b2 * uvs[2 * i2];
        uvImg[2 * p + 1] =
          b0 * uvs[2 * i0 + 1] + b1 * uvs[2 * i1 + 1] + b2 * uvs[2 * i2 + 1];
        nrmImg[3 * p] = b0 * vn[3 * i0] + b1 * vn[3 * i1] + b2 * vn[3 * i2];
        nrmImg[3 * p + 1] =
          b0 * vn[3 * i0 + 1] + b1 * vn[3 * i1 + 1] + b2 * vn[3 * i2 + 1];
        nrmImg[3 * p + 2] =
          b0 * vn[3 * i0 + 2] + b1 * vn[3 * i1 + 2] + b2 * vn[3 * i2 + 2];
      }
    }
  }

  // post-pass over covered pixels: unit normals, uv clipped to [0,1]
  for (let p = 0; p < H * W; p++) {
    if (faceId[p] < 0) continue;
    coverage[p] = 1;
    const nx = nrmImg[3 * p], ny = nrmImg[3 * p + 1], nz = nrmImg[3 * p + 2];
    let len = Math.sqrt(nx * nx + ny * ny + nz * nz);
    if (len < 1e-12) len = 1.0;
    nrmImg[3 * p] = nx / len;
    nrmImg[3 * p + 1] = ny / len;
    nrmImg[3 * p + 2] = nz / len;
    uvImg[2 * p] = Math.min(Math.max(uvImg[2 * p], 0), 1);
    uvImg[2 * p + 1] = Math.min(Math.max(uvImg[2 * p + 1], 0), 1);
  }

  return { faceId, barycentric: bary, uv: uvImg, normal: nrmImg, depth: depthBuf, coverage };
}
