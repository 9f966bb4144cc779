import * as fs from 'fs';
import * as path from 'path';

/** Float32 depth raster with its stored-units-to-meters scale. */
export interface DepthRaster {
  width: number;
  height: number;
  dScale: number;
  data: Float32Array;
}

const MAGIC = 'DFD1';
const HEADER_BYTES = 16;

/** Read a `.dfd` raster: 16-byte LE header (magic, u32 w, u32 h, f32 d_scale)
 *  followed by row-major float32 values, NaN = invalid pixel. */
export function readDfd(filePath: string): DepthRaster {
  const buf = fs.readFileSync(filePath);
  if (buf.length < HEADER_BYTES || buf.toString('latin1', 0, 4) !== MAGIC) {
    throw new Error(`not a DFD raster: ${filePath}`);
  }
  const width = buf.readUInt32LE(4);
  const height = buf.readUInt32LE(8);
  const dScale = buf.readFloatLE(12);
  const expected = HEADER_BYTES + width * height * 4;
  if (buf.length !== expected) {
    throw new Error(`corrupt DFD raster (${buf.length} bytes, expected ${expected}): ${filePath}`);
  }
  const aligned = new ArrayBuffer(width * height * 4);
  new Uint8Array(aligned).set(buf.subarray(HEADER_BYTES, expected));
  return { width, height, dScale, data: new Float32Array(aligned) };
}

export function writeDfd(filePath: string, raster: DepthRaster): void {
  const header = Buffer.alloc(HEADER_BYTES);
  header.write(MAGIC, 0, 'latin1');
  header.writeUInt32LE(raster.width, 4);
  header.writeUInt32LE(raster.height, 8);
  header.writeFloatLE(raster.dScale, 12);
  const body = Buffer.from(raster.data.buffer, raster.data.byteOffset, raster.data.byteLength);
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, Buffer.concat([header, body]));
}
