import * as tf from '@tensorflow/tfjs';

export type LossKind = 'l1' | 'l2' | 'huber';

// |x| whose subgradient at 0 is 0 (tfjs's own abs picks -1 there, which
// would keep pushing a perfectly converged model around)
const absZeroAtKink = tf.customGrad((x, save) => {
  const t = x as tf.Tensor;
  (save as tf.GradSaveFunc)([t]);
  return {
    value: t.abs(),
    gradFunc: (dy: tf.Tensor, saved: tf.Tensor[]) => [dy.mul(saved[0].sign())],
  };
});

/**
 * Masked training loss over depth residuals.
 *
 * The mask is the product of validity and object masks; residuals are
 * zeroed outside it and the sum normalizes by the masked pixel count, so
 * gradients flow only through masked pixels. Targets must already carry 0
 * at invalid pixels (see preprocess), keeping the arithmetic NaN-free.
 *
 * Huber uses the 0.5*d^2 quadratic core, so with delta above every
 * residual it coincides with half the L2 loss.
 */
export function maskedLoss(
  pred: tf.Tensor,
  target: tf.Tensor,
  mask: tf.Tensor,
  kind: LossKind,
  huberDelta = 10.0,
): tf.Scalar {
  return tf.tidy(() => {
    const m = mask.cast('float32');
    const count = m.sum();
    const d = pred.sub(target).mul(m);
    let perPixel: tf.Tensor;
    if (kind === 'l1') {
      perPixel = absZeroAtKink(d);
    } else if (kind === 'l2') {
      perPixel = d.square();
    } else if (kind === 'huber') {
      // 0.5*min(|d|,delta)^2 + delta*max(|d|-delta,0): the usual two branches
      // without a boolean select, which has no gradient kernel here
      const absd = d.abs();
      const clipped = tf.minimum(absd, huberDelta);
      const excess = tf.maximum(absd.sub(huberDelta), 0);
      perPixel = clipped.square().mul(0.5).add(excess.mul(huberDelta));
    } else {
      throw new Error(`unknown loss kind: ${kind}`);
    }
    return perPixel.mul(m).sum().div(count) as tf.Scalar;
  });
}

/** Masked mean absolute error, the validation metric (matches the dataset
 *  toolkit's masked L1 definition). */
export function maskedL1Value(pred: tf.Tensor, target: tf.Tensor, mask: tf.Tensor): number {
  const scalar = tf.tidy(() => {
    const m = mask.cast('float32');
    const d = pred.sub(target).mul(m).abs();
    return d.sum().div(m.sum()) as tf.Scalar;
  });
  const value = scalar.dataSync()[0];
  scalar.dispose();
  return value;
}
