import * as tf from '@tensorflow/tfjs';
import { Sample } from '../src/preprocess';

/** Flat synthetic frames whose target equals the input depth channel. */
export function toySample(k: number, h: number, w: number, base = 45, amp = 12): Sample {
  const depth = new Float32Array(h * w);
  const mask = new Float32Array(h * w);
  for (let v = 0; v < h; v++) {
    for (let u = 0; u < w; u++) {
      const i = v * w + u;
      depth[i] = base + amp * Math.sin((u + 3 * k) / 5) + 0.7 * amp * Math.cos((v - 2 * k) / 7);
      mask[i] = u >= 2 && u < w - 2 && v >= 2 && v < h - 2 ? 1 : 0;
    }
  }
  const rgb = new Float32Array(h * w * 3).fill(0.5);
  return {
    id: `t${k}`,
    input: tf.concat(
      [tf.tensor3d(rgb, [h, w, 3]), tf.tensor3d(depth, [h, w, 1]), tf.tensor3d(mask, [h, w, 1])],
      -1,
    ) as tf.Tensor3D,
    target: tf.tensor3d(depth, [h, w, 1]),
    mask: tf.tensor3d(mask, [h, w, 1]),
    fullWidth: w,
    fullHeight: h,
  };
}

export function toySet(n: number, h = 12, w = 12): Sample[] {
  return Array.from({ length: n }, (_, k) => toySample(k, h, w));
}

/** Grid tensors for the hand loss fixtures. */
export function fixtureTensors(residuals: number[], maskedCount?: number) {
  const n = residuals.length;
  const target = tf.tensor3d(new Float32Array(n).fill(700), [1, n, 1]);
  const pred = tf.tensor3d(new Float32Array(residuals.map((r) => 700 + r)), [1, n, 1]);
  const maskData = new Float32Array(n).fill(1);
  if (maskedCount !== undefined) {
    for (let i = maskedCount; i < n; i++) maskData[i] = 0;
  }
  const mask = tf.tensor3d(maskData, [1, n, 1]);
  return { pred, target, mask };
}
