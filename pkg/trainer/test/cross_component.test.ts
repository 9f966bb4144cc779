import { spawnSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { describe, expect, it } from 'vitest';
import { writeDfd } from '../src/dfd';
import { loadTuple, readListing, writePngMask, writePngRgb } from '../src/listing';
import { buildNetwork } from '../src/model';
import { predictSplit } from '../src/predict';

/** Write a masked dataset directory in the depthset on-disk schema. */
function writeDataset(root: string, ids: string[], split = 'test') {
  const h = 6;
  const w = 8;
  const intrinsics = { fx: 10.0, fy: 10.0, cx: 4.0, cy: 3.0, d_scale: 0.001, width: w, height: h, camera: 'lq' };
  fs.mkdirSync(path.join(root, 'intrinsics'), { recursive: true });
  fs.writeFileSync(path.join(root, 'intrinsics', 'lq.json'), JSON.stringify(intrinsics));
  fs.writeFileSync(path.join(root, 'intrinsics', 'hq.json'), JSON.stringify({ ...intrinsics, camera: 'hq' }));

  const entries = [];
  const tuples: Record<string, { depthLq: Float32Array; depthHq: Float32Array; mask: Uint8Array }> = {};
  for (const [index, id] of ids.entries()) {
    const depthLq = new Float32Array(h * w);
    const depthHq = new Float32Array(h * w);
    const mask = new Uint8Array(h * w);
    for (let i = 0; i < h * w; i++) {
      depthLq[i] = 700 + ((i * 7 + index * 13) % 30);
      depthHq[i] = 700 + ((i * 3 + index * 5) % 20);
      mask[i] = i % w < w - 2 ? 1 : 0;
    }
    depthLq[3] = NaN; // invalid pixels must drop out of the metrics
    const dir = path.join(root, 'tuples', id);
    const rgb = new Uint8Array(h * w * 3).fill(128);
    writePngRgb(path.join(dir, 'color_lq.png'), w, h, rgb);
    writePngRgb(path.join(dir, 'color_hq.png'), w, h, rgb);
    writeDfd(path.join(dir, 'depth_lq.dfd'), { width: w, height: h, dScale: 0.001, data: depthLq });
    writeDfd(path.join(dir, 'depth_hq.dfd'), { width: w, height: h, dScale: 0.001, data: depthHq });
    writePngMask(path.join(dir, 'mask.png'), w, h, mask);
    const meta = { id, state: 'masked', source_id: id, aug_index: 0, t_rand: null };
    fs.writeFileSync(path.join(dir, 'meta.json'), JSON.stringify(meta));
    const files = {
      color_lq: `tuples/${id}/color_lq.png`,
      depth_lq: `tuples/${id}/depth_lq.dfd`,
      color_hq: `tuples/${id}/color_hq.png`,
      depth_hq: `tuples/${id}/depth_hq.dfd`,
      mask: `tuples/${id}/mask.png`,
      meta: `tuples/${id}/meta.json`,
    };
    entries.push({ id, state: 'masked', files, split, source_id: id, aug_index: 0 });
    tuples[id] = { depthLq, depthHq, mask };
  }
  const manifest = {
    format_version: 1,
    count: ids.length,
    intrinsics: { lq: 'intrinsics/lq.json', hq: 'intrinsics/hq.json' },
    calibration: null,
    config_hash: null,
    tuples: entries,
  };
  fs.writeFileSync(path.join(root, 'manifest.json'), JSON.stringify(manifest));
  const listing = {
    format_version: 1,
    intrinsics: { lq: intrinsics, hq: { ...intrinsics, camera: 'hq' } },
    splits: { [split]: entries.map(({ id, state, source_id, aug_index, files }) => ({ id, state, source_id, aug_index, files })) },
  };
  const listingPath = path.join(root, 'export.json');
  fs.writeFileSync(listingPath, JSON.stringify(listing));
  return { listingPath, tuples, width: w, height: h };
}

function runEvaluate(root: string, predictions: string, report: string) {
  const result = spawnSync(
    'depthset',
    ['evaluate', '--in', root, '--predictions', predictions, '--out', report],
    { encoding: 'utf-8' },
  );
  return result;
}

describe('cross-component file contract', () => {
  it('identity predictions reproduce the input metrics exactly through depthset evaluate', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'xc-'));
    const root = path.join(dir, 'ds');
    const { listingPath, tuples, width, height } = writeDataset(root, ['e00', 'e01', 'e02']);

    const listing = readListing(listingPath);
    const predsDir = path.join(dir, 'preds');
    for (const entry of listing.splits.test) {
      const tuple = loadTuple(listing, entry);
      expect(tuple.width).toBe(width);
      expect(tuple.height).toBe(height);
      // identity predictor: emit the input depth unchanged
      writeDfd(path.join(predsDir, `${entry.id}.dfd`), {
        width: tuple.width,
        height: tuple.height,
        dScale: tuple.dScale,
        data: tuple.depthLq,
      });
      expect(Buffer.from(tuple.depthHq.buffer)).toEqual(Buffer.from(tuples[entry.id].depthHq.buffer));
    }

    const report = path.join(dir, 'report.json');
    const result = runEvaluate(root, predsDir, report);
    expect(result.status, result.stderr).toBe(0);
    const parsed = JSON.parse(fs.readFileSync(report, 'utf-8'));
    expect(parsed.tuples).toHaveLength(3);
    for (const rec of parsed.tuples) {
      expect(rec.prediction).toEqual(rec.input);
      expect(rec.it_ot_percent).toBe(100.0);
    }
    expect(parsed.aggregate.pooled.it_ot_percent).toBe(100.0);
    expect(parsed.missing_predictions).toEqual([]);
  });

  it('model predictions written by predictSplit are scoreable by depthset evaluate', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'xc-model-'));
    const root = path.join(dir, 'ds');
    const { listingPath } = writeDataset(root, ['m00', 'm01']);
    const listing = readListing(listingPath);
    const spec = { initialChannels: 8 as const, useDownSkips: true, inputScale: 1, levels: 1 };
    const model = buildNetwork(spec, 6, 8, 1);
    const predsDir = path.join(dir, 'preds');
    const written = predictSplit(model, listing, listing.splits.test, spec, predsDir);
    expect(written).toHaveLength(2);

    const report = path.join(dir, 'report.json');
    const result = runEvaluate(root, predsDir, report);
    expect(result.status, result.stderr).toBe(0);
    const parsed = JSON.parse(fs.readFileSync(report, 'utf-8'));
    expect(parsed.tuples).toHaveLength(2);
    for (const rec of parsed.tuples) {
      expect(rec.prediction.n_pixels).toBeGreaterThan(0);
      expect(Number.isFinite(rec.prediction.l1)).toBe(true);
    }
  });
});
