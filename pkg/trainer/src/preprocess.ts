import * as tf from '@tensorflow/tfjs';
import { LoadedTuple } from './listing';
import { NetworkSpec } from './model';

/** One network-ready sample: channels-last tensors at scaled resolution. */
export interface Sample {
  id: string;
  input: tf.Tensor3D; // [h, w, 5]: RGB in [0,1], depth (native units), mask
  target: tf.Tensor3D; // [h, w, 1], 0 outside the mask
  mask: tf.Tensor3D; // [h, w, 1], 0/1 after nearest-style rescale
  fullWidth: number;
  fullHeight: number;
}

/**
 * Turn a loaded tuple into network tensors.
 *
 * RGB scales to [0, 1]; depth stays in native units (zero-mean/unit-variance
 * normalization measurably hurt, so it is not applied). The object mask is
 * multiplied with joint validity of both depth frames; input and target
 * depth outside that mask become 0 while the mask travels as the fifth
 * channel. A fully masked-out tuple returns null and is rejected before
 * batching. With inputScale < 1 everything is rescaled (bilinear for
 * frames, hard-thresholded for the mask).
 */
export function preprocessTuple(tuple: LoadedTuple, spec: NetworkSpec): Sample | null {
  const { width, height } = tuple;
  const n = width * height;
  const maskData = new Float32Array(n);
  const depthIn = new Float32Array(n);
  const targetData = new Float32Array(n);
  let covered = 0;
  for (let i = 0; i < n; i++) {
    const lq = tuple.depthLq[i];
    const hq = tuple.depthHq[i];
    const m = tuple.mask[i] && Number.isFinite(lq) && Number.isFinite(hq) ? 1 : 0;
    maskData[i] = m;
    depthIn[i] = m ? lq : 0;
    targetData[i] = m ? hq : 0;
    covered += m;
  }
  if (covered === 0) {
    return null;
  }

  const rgbData = new Float32Array(n * 3);
  for (let i = 0; i < n * 3; i++) {
    rgbData[i] = tuple.colorLq[i] / 255.0;
  }

  return tf.tidy(() => {
    const rgb = tf.tensor3d(rgbData, [height, width, 3]);
    const depth = tf.tensor3d(depthIn, [height, width, 1]);
    const mask = tf.tensor3d(maskData, [height, width, 1]);
    const target = tf.tensor3d(targetData, [height, width, 1]);

    let input = tf.concat([rgb, depth, mask], -1) as tf.Tensor3D;
    let outMask = mask as tf.Tensor3D;
    let outTarget = target as tf.Tensor3D;
    if (spec.inputScale !== 1) {
      const sh = Math.round(height * spec.inputScale);
      const sw = Math.round(width * spec.inputScale);
      input = tf.image.resizeBilinear(input, [sh, sw]) as tf.Tensor3D;
      outTarget = tf.image.resizeBilinear(target, [sh, sw]) as tf.Tensor3D;
      outMask = tf.image
        .resizeBilinear(mask, [sh, sw])
        .greaterEqual(0.999)
        .cast('float32') as tf.Tensor3D;
      // zero out depth channels wherever rescaling blended masked pixels
      const channels = tf.split(input, [3, 1, 1], -1);
      input = tf.concat([channels[0], channels[1].mul(outMask), outMask], -1) as tf.Tensor3D;
      outTarget = outTarget.mul(outMask) as tf.Tensor3D;
    }
    return {
      id: tuple.id,
      input: tf.keep(input),
      target: tf.keep(outTarget),
      mask: tf.keep(outMask),
      fullWidth: width,
      fullHeight: height,
    };
  });
}

export function disposeSample(sample: Sample): void {
  sample.input.dispose();
  sample.target.dispose();
  sample.mask.dispose();
}
