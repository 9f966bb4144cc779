import * as tf from '@tensorflow/tfjs';
import { describe, expect, it } from 'vitest';
import { buildNetwork, convKernelParams, NetworkSpec } from '../src/model';

const SPEC: NetworkSpec = { initialChannels: 16, useDownSkips: true, inputScale: 1 };

describe('buildNetwork', () => {
  it('maps a 5-channel batch to a 1-channel batch of the same spatial size', () => {
    const model = buildNetwork(SPEC, 48, 64);
    const out = model.predict(tf.zeros([2, 48, 64, 5])) as tf.Tensor;
    expect(out.shape).toEqual([2, 48, 64, 1]);
  });

  it('clamps all-negative pre-activations to zero (rectifier contract)', () => {
    const model = buildNetwork(SPEC, 16, 16);
    const head = model.layers.find((l) => l.name === 'head')!;
    const [kernel, bias] = head.getWeights();
    head.setWeights([tf.zerosLike(kernel), tf.onesLike(bias).mul(-5)]);
    const out = model.predict(tf.randomNormal([1, 16, 16, 5])) as tf.Tensor;
    expect(out.min().dataSync()[0]).toBe(0);
    expect(out.max().dataSync()[0]).toBe(0);
  });

  it('predictions are never negative for arbitrary inputs', () => {
    const model = buildNetwork(SPEC, 16, 16, 3);
    const out = model.predict(tf.randomNormal([2, 16, 16, 5]).mul(1000)) as tf.Tensor;
    expect(out.min().dataSync()[0]).toBeGreaterThanOrEqual(0);
  });

  it('conv kernel parameters scale roughly 4x from 16 to 32 channels', () => {
    const small = buildNetwork({ ...SPEC, initialChannels: 16 }, 32, 32);
    const large = buildNetwork({ ...SPEC, initialChannels: 32 }, 32, 32);
    const ratio = convKernelParams(large) / convKernelParams(small);
    expect(ratio).toBeGreaterThan(3.5);
    expect(ratio).toBeLessThan(4.1);
  });

  it('seeded construction is reproducible', () => {
    const a = buildNetwork(SPEC, 16, 16, 7);
    const b = buildNetwork(SPEC, 16, 16, 7);
    const wa = a.getWeights().map((w) => Array.from(w.dataSync()));
    const wb = b.getWeights().map((w) => Array.from(w.dataSync()));
    expect(wa).toEqual(wb);
  });

  it('rejects invalid specs and indivisible input sizes', () => {
    expect(() => buildNetwork({ ...SPEC, initialChannels: 12 as 16 }, 16, 16)).toThrow(/initialChannels/);
    expect(() => buildNetwork({ ...SPEC, inputScale: 0 }, 16, 16)).toThrow(/inputScale/);
    expect(() => buildNetwork(SPEC, 18, 16)).toThrow(/divisible/);
  });

  it('down-skip shortcuts add projection layers only when enabled', () => {
    const withSkips = buildNetwork({ ...SPEC, useDownSkips: true }, 16, 16);
    const without = buildNetwork({ ...SPEC, useDownSkips: false }, 16, 16);
    const skipLayers = withSkips.layers.filter((l) => l.name.endsWith('_skip')).length;
    expect(skipLayers).toBeGreaterThan(0);
    expect(without.layers.filter((l) => l.name.endsWith('_skip')).length).toBe(0);
  });
});
