import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { describe, expect, it } from 'vitest';
import { readDfd, writeDfd } from '../src/dfd';

describe('dfd rasters', () => {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'dfd-'));

  it('round-trips bits including NaN sentinels', () => {
    const data = new Float32Array([1.5, NaN, 700.25, 0, 1e-3, 4095.75]);
    const file = path.join(dir, 'a.dfd');
    writeDfd(file, { width: 3, height: 2, dScale: 0.001, data });
    const back = readDfd(file);
    expect(back.width).toBe(3);
    expect(back.height).toBe(2);
    expect(back.dScale).toBeCloseTo(0.001, 9);
    expect(Buffer.from(back.data.buffer)).toEqual(Buffer.from(data.buffer));
  });

  it('rejects bad magic and truncation', () => {
    const bad = path.join(dir, 'bad.dfd');
    fs.writeFileSync(bad, Buffer.from('NOPE............'));
    expect(() => readDfd(bad)).toThrow(/not a DFD/);
    const short = path.join(dir, 'short.dfd');
    writeDfd(short, { width: 2, height: 2, dScale: 0.001, data: new Float32Array(4) });
    fs.writeFileSync(short, fs.readFileSync(short).subarray(0, 20));
    expect(() => readDfd(short)).toThrow(/corrupt/);
  });
});
