import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { LossKind, maskedL1Value, maskedLoss } from './loss';
import { NetworkSpec, buildNetwork } from './model';
import { Sample } from './preprocess';

export interface TrainConfig {
  loss: LossKind;
  huberDeltaMm: number;
  learningRate: number;
  epochs: number;
  batchSize: number;
  seed: number;
  /** reduce-on-plateau: halve the rate after this many stale epochs */
  schedulerPatience: number;
  schedulerFactor: number;
}

export const DEFAULT_TRAIN_CONFIG: TrainConfig = {
  loss: 'l1',
  huberDeltaMm: 10.0,
  learningRate: 1e-3,
  epochs: 25,
  batchSize: 4,
  seed: 0,
  schedulerPatience: 3,
  schedulerFactor: 0.5,
};

export interface EpochStats {
  epoch: number;
  trainLoss: number;
  valL1: number | null;
  learningRate: number;
}

export interface TrainResult {
  model: tf.LayersModel;
  history: EpochStats[];
  bestValL1: number | null;
  skippedBatches: number;
}

/** Deterministic shuffling (mulberry32). */
export function rng32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(count: number, rand: () => number): number[] {
  const order = Array.from({ length: count }, (_, i) => i);
  for (let i = count - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

function stackBatch(samples: Sample[], indices: number[]) {
  return tf.tidy(() => ({
    input: tf.stack(indices.map((i) => samples[i].input)) as tf.Tensor4D,
    target: tf.stack(indices.map((i) => samples[i].target)) as tf.Tensor4D,
    mask: tf.stack(indices.map((i) => samples[i].mask)) as tf.Tensor4D,
  }));
}

export function validationL1(model: tf.LayersModel, samples: Sample[]): number | null {
  if (samples.length === 0) return null;
  let weighted = 0;
  let total = 0;
  for (const sample of samples) {
    const value = tf.tidy(() => {
      const pred = model.predict(sample.input.expandDims(0)) as tf.Tensor;
      const l1 = maskedL1Value(pred, sample.target.expandDims(0), sample.mask.expandDims(0));
      return l1;
    });
    const count = tf.tidy(() => sample.mask.sum().dataSync()[0]);
    weighted += value * count;
    total += count;
  }
  return total > 0 ? weighted / total : null;
}

/**
 * RMSProp training with a reduce-on-plateau schedule and best-validation
 * checkpointing. Batches whose mask is empty are skipped with a warning;
 * a non-finite loss aborts with a diagnostic. The optimizer restarts when
 * the rate drops (its accumulators reset with it).
 */
export async function trainModel(
  spec: NetworkSpec,
  config: TrainConfig,
  train: Sample[],
  val: Sample[],
  options: {
    model?: tf.LayersModel;
    checkpointPath?: string;
    log?: (stats: EpochStats) => void;
    stepsPerEpoch?: number;
    /** return true to stop training after this epoch (budget or target hit) */
    earlyStop?: (stats: EpochStats) => boolean;
  } = {},
): Promise<TrainResult> {
  if (train.length === 0) {
    throw new Error('training split is empty');
  }
  const [height, width, _channels] = train[0].input.shape;
  const model = options.model ?? buildNetwork(spec, height, width, config.seed);
  let learningRate = config.learningRate;
  let optimizer = tf.train.rmsprop(learningRate);

  const history: EpochStats[] = [];
  let bestValL1: number | null = null;
  let bestWeights: tf.Tensor[] | null = null;
  let stale = 0;
  let skippedBatches = 0;
  const rand = rng32(config.seed ^ 0x5eed);

  for (let epoch = 0; epoch < config.epochs; epoch++) {
    const order = shuffled(train.length, rand);
    let lossSum = 0;
    let lossCount = 0;
    let steps = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      if (options.stepsPerEpoch !== undefined && steps >= options.stepsPerEpoch) break;
      const indices = order.slice(start, start + config.batchSize);
      const batch = stackBatch(train, indices);
      const maskCount = tf.tidy(() => batch.mask.sum().dataSync()[0]);
      if (maskCount === 0) {
        skippedBatches++;
        console.warn(`skipping batch with empty mask (epoch ${epoch})`);
        batch.input.dispose();
        batch.target.dispose();
        batch.mask.dispose();
        continue;
      }
      const lossScalar = optimizer.minimize(
        () => maskedLoss(model.apply(batch.input) as tf.Tensor, batch.target, batch.mask, config.loss, config.huberDeltaMm),
        true,
      ) as tf.Scalar;
      const lossValue = lossScalar.dataSync()[0];
      lossScalar.dispose();
      batch.input.dispose();
      batch.target.dispose();
      batch.mask.dispose();
      if (!Number.isFinite(lossValue)) {
        throw new Error(
          `training diverged: loss=${lossValue} at epoch ${epoch}, lr=${learningRate}, loss kind=${config.loss}`,
        );
      }
      lossSum += lossValue;
      lossCount++;
      steps++;
    }

    const valL1 = validationL1(model, val);
    const stats: EpochStats = {
      epoch,
      trainLoss: lossCount ? lossSum / lossCount : NaN,
      valL1,
      learningRate,
    };
    history.push(stats);
    options.log?.(stats);

    const monitored = valL1 ?? stats.trainLoss;
    if (bestValL1 === null || monitored < bestValL1) {
      bestValL1 = monitored;
      stale = 0;
      if (bestWeights) bestWeights.forEach((w) => w.dispose());
      bestWeights = model.getWeights().map((w) => w.clone());
      if (options.checkpointPath) {
        saveWeights(model, options.checkpointPath);
      }
    } else {
      stale++;
      if (stale > config.schedulerPatience) {
        learningRate *= config.schedulerFactor;
        optimizer.dispose();
        optimizer = tf.train.rmsprop(learningRate);
        stale = 0;
      }
    }
    if (options.earlyStop?.(stats)) {
      break;
    }
    await tf.nextFrame();
  }

  if (bestWeights) {
    model.setWeights(bestWeights);
    bestWeights.forEach((w) => w.dispose());
  }
  optimizer.dispose();
  return { model, history, bestValL1, skippedBatches };
}

/** Serialize weights as a JSON manifest + raw float32 blob, atomically. */
export function saveWeights(model: tf.LayersModel, filePath: string): void {
  const weights = model.getWeights();
  const specs = weights.map((w) => ({ shape: w.shape, size: w.size }));
  const blob = new Float32Array(specs.reduce((a, s) => a + s.size, 0));
  let offset = 0;
  for (const w of weights) {
    blob.set(w.dataSync() as Float32Array, offset);
    offset += w.size;
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const payload = {
    format: 'depth-denoise-weights-v1',
    specs,
    data: Buffer.from(blob.buffer).toString('base64'),
  };
  const tmp = `${filePath}.tmp`;
  fs.writeFileSync(tmp, JSON.stringify(payload));
  fs.renameSync(tmp, filePath);
}

export function loadWeights(model: tf.LayersModel, filePath: string): void {
  const payload = JSON.parse(fs.readFileSync(filePath, 'utf-8'));
  if (payload.format !== 'depth-denoise-weights-v1') {
    throw new Error(`unsupported checkpoint format in ${filePath}`);
  }
  const raw = Buffer.from(payload.data, 'base64');
  const aligned = new ArrayBuffer(raw.byteLength);
  new Uint8Array(aligned).set(raw);
  const blob = new Float32Array(aligned);
  const tensors: tf.Tensor[] = [];
  let offset = 0;
  for (const spec of payload.specs) {
    tensors.push(tf.tensor(blob.slice(offset, offset + spec.size), spec.shape));
    offset += spec.size;
  }
  model.setWeights(tensors);
  tensors.forEach((t) => t.dispose());
}
