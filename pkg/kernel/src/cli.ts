/** File-boundary driver: node cli.js <request.bin> <response.bin> */

import { readFileSync, writeFileSync } from "node:fs";

import { decodeRequest, encodeResponse, STATUS_BAD_MAGIC } from "./io.js";
import { rasterize, validateBuffers, STATUS_OK } from "./rasterize.js";

function main(argv: string[]): number {
  if (argv.length !== 2) {
    console.error("usage: cli.js <request.bin> <response.bin>");
    return 64;
  }
  const [reqPath, respPath] = argv;
  const raw = readFileSync(reqPath);
  const buf = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  const req = decodeRequest(buf);
  if (req === null) {
    writeFileSync(respPath, encodeResponse(STATUS_BAD_MAGIC, 0, 0, null));
    return 0;
  }
  const status = validateBuffers(req.buffers);
  if (status !== STATUS_OK) {
    writeFileSync(
      respPath,
      encodeResponse(status, req.config.width, req.config.height, null),
    );
    return 0;
  }
  const result = rasterize(req.buffers, req.camera, req.config);
  writeFileSync(
    respPath,
    encodeResponse(STATUS_OK, req.config.width, req.config.height, result),
  );
  return 0;
}

process.exit(main(process.argv.slice(2)));
