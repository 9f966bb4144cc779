import * as fs from 'fs';
import * as path from 'path';
import { PNG } from 'pngjs';
import { DepthRaster, readDfd } from './dfd';

/** One tuple entry of the dataset export listing. */
export interface ListingEntry {
  id: string;
  state: string;
  source_id: string;
  aug_index: number;
  files: Record<string, string>;
}

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  d_scale: number;
  width: number;
  height: number;
  camera: string;
}

export interface Listing {
  root: string;
  intrinsics: Record<string, Intrinsics>;
  splits: Record<string, ListingEntry[]>;
}

/** All frames of one tuple, flat row-major arrays on the LQ grid. */
export interface LoadedTuple {
  id: string;
  width: number;
  height: number;
  colorLq: Uint8Array; // RGB, 3 * w * h
  depthLq: Float32Array;
  depthHq: Float32Array;
  mask: Uint8Array; // 0/1
  dScale: number;
}

/** Read the dataset export listing; file paths resolve against its directory. */
export function readListing(listingPath: string): Listing {
  const parsed = JSON.parse(fs.readFileSync(listingPath, 'utf-8'));
  if (parsed.format_version !== 1) {
    throw new Error(`unsupported listing format_version: ${parsed.format_version}`);
  }
  return {
    root: path.dirname(path.resolve(listingPath)),
    intrinsics: parsed.intrinsics,
    splits: parsed.splits,
  };
}

export function readPngRgb(filePath: string): { width: number; height: number; rgb: Uint8Array } {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const rgb = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[i * 3] = png.data[i * 4];
    rgb[i * 3 + 1] = png.data[i * 4 + 1];
    rgb[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, rgb };
}

export function readPngMask(filePath: string): Uint8Array {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const mask = new Uint8Array(png.width * png.height);
  for (let i = 0; i < mask.length; i++) {
    mask[i] = png.data[i * 4] >= 128 ? 1 : 0;
  }
  return mask;
}

export function writePngRgb(filePath: string, width: number, height: number, rgb: Uint8Array): void {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = rgb[i * 3];
    png.data[i * 4 + 1] = rgb[i * 3 + 1];
    png.data[i * 4 + 2] = rgb[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

export function writePngMask(filePath: string, width: number, height: number, mask: Uint8Array): void {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    const v = mask[i] ? 255 : 0;
    png.data[i * 4] = v;
    png.data[i * 4 + 1] = v;
    png.data[i * 4 + 2] = v;
    png.data[i * 4 + 3] = 255;
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

export function loadTuple(listing: Listing, entry: ListingEntry): LoadedTuple {
  const file = (key: string) => {
    const rel = entry.files[key];
    if (!rel) throw new Error(`tuple ${entry.id} is missing the '${key}' file (state: ${entry.state})`);
    return path.join(listing.root, rel);
  };
  const color = readPngRgb(file('color_lq'));
  const depthLq: DepthRaster = readDfd(file('depth_lq'));
  const depthHq: DepthRaster = readDfd(file('depth_hq'));
  if (depthLq.width !== color.width || depthLq.height !== color.height) {
    throw new Error(`tuple ${entry.id}: color and depth dimensions disagree`);
  }
  const mask = entry.files.mask
    ? readPngMask(file('mask'))
    : new Uint8Array(depthLq.data.length).fill(1);
  return {
    id: entry.id,
    width: depthLq.width,
    height: depthLq.height,
    colorLq: color.rgb,
    depthLq: depthLq.data,
    depthHq: depthHq.data,
    mask,
    dScale: depthLq.dScale,
  };
}
