import * as tf from '@tensorflow/tfjs';

/** Architecture knobs of the denoising UNet. */
export interface NetworkSpec {
  /** feature maps of the first stage; doubles per encoder level */
  initialChannels: 8 | 16 | 32 | 64;
  /** additive residual shortcuts inside the downward path */
  useDownSkips: boolean;
  /** linear rescale applied to the input frames before the network */
  inputScale: number;
  /** encoder levels below the input stage */
  levels?: number;
}

export const DEFAULT_SPEC: NetworkSpec = {
  initialChannels: 32,
  useDownSkips: true,
  inputScale: 0.5,
  levels: 2,
};

export function validateSpec(spec: NetworkSpec): void {
  if (![8, 16, 32, 64].includes(spec.initialChannels)) {
    throw new Error(`initialChannels must be one of 8/16/32/64, got ${spec.initialChannels}`);
  }
  if (!(spec.inputScale > 0 && spec.inputScale <= 1)) {
    throw new Error(`inputScale must be in (0, 1], got ${spec.inputScale}`);
  }
}

function conv(channels: number, kernel: number, seed: number, name: string) {
  return tf.layers.conv2d({
    filters: channels,
    kernelSize: kernel,
    padding: 'same',
    kernelInitializer: tf.initializers.heNormal({ seed }),
    name,
  });
}

/**
 * Two 3x3 convolutions; with down-skips enabled the stage output adds a
 * (1x1-projected) shortcut of its input before the final rectification.
 */
function stage(
  x: tf.SymbolicTensor,
  channels: number,
  useSkip: boolean,
  seedBase: number,
  name: string,
): tf.SymbolicTensor {
  let y = conv(channels, 3, seedBase, `${name}_conv1`).apply(x) as tf.SymbolicTensor;
  y = tf.layers.reLU({ name: `${name}_relu1` }).apply(y) as tf.SymbolicTensor;
  y = conv(channels, 3, seedBase + 1, `${name}_conv2`).apply(y) as tf.SymbolicTensor;
  if (useSkip) {
    let shortcut = x;
    if ((x.shape[x.shape.length - 1] as number) !== channels) {
      shortcut = conv(channels, 1, seedBase + 2, `${name}_proj`).apply(x) as tf.SymbolicTensor;
    }
    y = tf.layers.add({ name: `${name}_skip` }).apply([y, shortcut]) as tf.SymbolicTensor;
  }
  return tf.layers.reLU({ name: `${name}_relu2` }).apply(y) as tf.SymbolicTensor;
}

/**
 * Encoder-decoder with lateral concatenation skips and optional additive
 * shortcuts in the downward path. Input is channels-last
 * [batch, height, width, 5] (RGB + depth + mask) at the already-scaled
 * resolution; output is [batch, height, width, 1] through a final ReLU, so
 * predicted depth is never negative. Height and width must be divisible by
 * 2^levels.
 */
export function buildNetwork(spec: NetworkSpec, height: number, width: number, seed = 0): tf.LayersModel {
  validateSpec(spec);
  const levels = spec.levels ?? 2;
  const divisor = 2 ** levels;
  if (height % divisor !== 0 || width % divisor !== 0) {
    throw new Error(`input ${height}x${width} must be divisible by ${divisor}`);
  }
  const c = spec.initialChannels;
  const input = tf.input({ shape: [height, width, 5], name: 'frames' });

  const encoder: tf.SymbolicTensor[] = [];
  let x = input;
  for (let level = 0; level < levels; level++) {
    x = stage(x, c * 2 ** level, spec.useDownSkips, seed + level * 10, `down${level}`);
    encoder.push(x);
    x = tf.layers.maxPooling2d({ poolSize: 2, name: `pool${level}` }).apply(x) as tf.SymbolicTensor;
  }
  x = stage(x, c * 2 ** levels, spec.useDownSkips, seed + levels * 10, 'bottleneck');

  for (let level = levels - 1; level >= 0; level--) {
    x = tf.layers.upSampling2d({ size: [2, 2], name: `up${level}` }).apply(x) as tf.SymbolicTensor;
    x = tf.layers
      .concatenate({ name: `cat${level}` })
      .apply([x, encoder[level]]) as tf.SymbolicTensor;
    x = stage(x, c * 2 ** level, false, seed + 100 + level * 10, `up${level}_stage`);
  }

  x = conv(1, 1, seed + 999, 'head').apply(x) as tf.SymbolicTensor;
  const out = tf.layers.reLU({ name: 'nonnegative_depth' }).apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: out, name: `unet_c${c}` });
}

/** Total kernel parameters of the conv layers (bias excluded). */
export function convKernelParams(model: tf.LayersModel): number {
  let total = 0;
  for (const layer of model.layers) {
    for (const weight of layer.weights) {
      if (weight.originalName.includes('kernel')) {
        total += weight.shape.reduce((a: number, b) => a * (b ?? 1), 1);
      }
    }
  }
  return total;
}
