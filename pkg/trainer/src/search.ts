import * as tf from '@tensorflow/tfjs';
import { LossKind } from './loss';
import { NetworkSpec } from './model';
import { Sample } from './preprocess';
import { TrainConfig, rng32, trainModel } from './train';

/** Uniform sampling ranges for random hyperparameter search. */
export interface SearchSpace {
  learningRate: [number, number]; // log-uniform bounds
  batchSize: number[];
  loss: LossKind[];
  initialChannels: (8 | 16 | 32 | 64)[];
  inputScale: number[];
  useDownSkips: boolean[];
}

export const DEFAULT_SPACE: SearchSpace = {
  learningRate: [1e-5, 1e-2],
  batchSize: [2, 4, 8],
  loss: ['l1', 'l2', 'huber'],
  initialChannels: [8, 16, 32, 64],
  inputScale: [0.5, 1.0],
  useDownSkips: [true, false],
};

export interface Trial {
  rank: number;
  trial: number;
  spec: NetworkSpec;
  config: TrainConfig;
  valL1: number | null;
}

function pick<T>(values: T[], rand: () => number): T {
  return values[Math.floor(rand() * values.length)];
}

export function sampleTrial(space: SearchSpace, rand: () => number, base: TrainConfig): { spec: NetworkSpec; config: TrainConfig } {
  const [lo, hi] = space.learningRate;
  const learningRate = Math.exp(Math.log(lo) + rand() * (Math.log(hi) - Math.log(lo)));
  const spec: NetworkSpec = {
    initialChannels: pick(space.initialChannels, rand),
    useDownSkips: pick(space.useDownSkips, rand),
    inputScale: pick(space.inputScale, rand),
  };
  const config: TrainConfig = {
    ...base,
    learningRate,
    batchSize: pick(space.batchSize, rand),
    loss: pick(space.loss, rand),
  };
  return { spec, config };
}

/**
 * Train `budget` uniformly sampled configurations for a short fixed epoch
 * budget each and rank them by validation masked L1 (nulls sink to the
 * bottom). Models are disposed; only the trial table survives.
 */
export async function randomSearch(
  space: SearchSpace,
  budget: number,
  train: Sample[],
  val: Sample[],
  base: TrainConfig,
  seed = 0,
): Promise<Trial[]> {
  if (budget < 1) {
    throw new Error(`search budget must be >= 1, got ${budget}`);
  }
  const rand = rng32(seed ^ 0x7ea5c);
  const trials: Trial[] = [];
  for (let index = 0; index < budget; index++) {
    const { spec, config } = sampleTrial(space, rand, { ...base, seed: base.seed + index });
    const result = await trainModel(spec, config, train, val, {});
    trials.push({ rank: 0, trial: index, spec, config, valL1: result.bestValL1 });
    result.model.dispose();
    await tf.nextFrame();
  }
  const ranked = [...trials].sort((a, b) => {
    if (a.valL1 === null) return 1;
    if (b.valL1 === null) return -1;
    return a.valL1 - b.valL1;
  });
  ranked.forEach((t, i) => (t.rank = i));
  return ranked;
}
