import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { Listing, ListingEntry, readListing, loadTuple } from './listing';
import { DEFAULT_SPEC, NetworkSpec, buildNetwork } from './model';
import { Sample, preprocessTuple } from './preprocess';
import { DEFAULT_TRAIN_CONFIG, TrainConfig, loadWeights, trainModel } from './train';
import { DEFAULT_SPACE, randomSearch } from './search';
import { predictSplit } from './predict';

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got: ${argv.slice(i).join(' ')}`);
    }
    flags[key.slice(2)] = argv[i + 1];
  }
  return flags;
}

function loadSplit(listing: Listing, split: string, spec: NetworkSpec): Sample[] {
  const entries = listing.splits[split] ?? [];
  const samples: Sample[] = [];
  for (const entry of entries) {
    const sample = preprocessTuple(loadTuple(listing, entry), spec);
    if (sample) samples.push(sample);
  }
  return samples;
}

function specFromFlags(flags: Flags): NetworkSpec {
  return {
    initialChannels: Number(flags.channels ?? DEFAULT_SPEC.initialChannels) as NetworkSpec['initialChannels'],
    useDownSkips: (flags['down-skips'] ?? 'true') === 'true',
    inputScale: Number(flags.scale ?? DEFAULT_SPEC.inputScale),
  };
}

function configFromFlags(flags: Flags): TrainConfig {
  return {
    ...DEFAULT_TRAIN_CONFIG,
    loss: (flags.loss as TrainConfig['loss']) ?? DEFAULT_TRAIN_CONFIG.loss,
    huberDeltaMm: Number(flags['huber-delta'] ?? DEFAULT_TRAIN_CONFIG.huberDeltaMm),
    learningRate: Number(flags.lr ?? DEFAULT_TRAIN_CONFIG.learningRate),
    epochs: Number(flags.epochs ?? DEFAULT_TRAIN_CONFIG.epochs),
    batchSize: Number(flags.batch ?? DEFAULT_TRAIN_CONFIG.batchSize),
    seed: Number(flags.seed ?? DEFAULT_TRAIN_CONFIG.seed),
  };
}

async function cmdTrain(flags: Flags): Promise<number> {
  const listing = readListing(flags.listing);
  const spec = specFromFlags(flags);
  const config = configFromFlags(flags);
  const train = loadSplit(listing, flags['train-split'] ?? 'train', spec);
  const val = loadSplit(listing, flags['val-split'] ?? 'val', spec);
  const checkpoint = flags.checkpoint ?? 'checkpoint.json';
  console.error(`training on ${train.length} tuples, validating on ${val.length}`);
  const result = await trainModel(spec, config, train, val, {
    checkpointPath: checkpoint,
    log: (s) =>
      console.error(
        `epoch ${s.epoch}: train ${s.trainLoss.toFixed(4)} val_l1 ${s.valL1?.toFixed(4) ?? '-'} lr ${s.learningRate}`,
      ),
  });
  const metricsPath = flags.metrics ?? 'training_metrics.json';
  fs.writeFileSync(metricsPath, JSON.stringify({ history: result.history, bestValL1: result.bestValL1 }, null, 2));
  console.error(`best validation L1: ${result.bestValL1}; checkpoint: ${checkpoint}`);
  return 0;
}

async function cmdPredict(flags: Flags): Promise<number> {
  const listing = readListing(flags.listing);
  const spec = specFromFlags(flags);
  const split = flags.split ?? 'test';
  const entries: ListingEntry[] = listing.splits[split] ?? [];
  if (entries.length === 0) {
    console.error(`split '${split}' is empty`);
    return 1;
  }
  const first = loadTuple(listing, entries[0]);
  const height = Math.round(first.height * spec.inputScale);
  const width = Math.round(first.width * spec.inputScale);
  const model = buildNetwork(spec, height, width);
  loadWeights(model, flags.checkpoint ?? 'checkpoint.json');
  const written = predictSplit(model, listing, entries, spec, flags.out ?? 'predictions');
  console.error(`wrote ${written.length} predictions to ${flags.out ?? 'predictions'}`);
  return 0;
}

async function cmdSearch(flags: Flags): Promise<number> {
  const listing = readListing(flags.listing);
  const budget = Number(flags.budget ?? 8);
  const spec = specFromFlags(flags);
  const base = { ...configFromFlags(flags), epochs: Number(flags['trial-epochs'] ?? 4) };
  const train = loadSplit(listing, flags['train-split'] ?? 'train', spec);
  const val = loadSplit(listing, flags['val-split'] ?? 'val', spec);
  const trials = await randomSearch(DEFAULT_SPACE, budget, train, val, base, base.seed);
  const out = flags.out ?? 'trials.json';
  fs.writeFileSync(out, JSON.stringify(trials, null, 2));
  for (const t of trials) {
    console.error(
      `#${t.rank} trial ${t.trial}: val_l1 ${t.valL1?.toFixed(4) ?? '-'} lr ${t.config.learningRate.toExponential(2)} ` +
        `loss ${t.config.loss} c${t.spec.initialChannels} scale ${t.spec.inputScale}`,
    );
  }
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    if (command === 'train') return await cmdTrain(flags);
    if (command === 'predict') return await cmdPredict(flags);
    if (command === 'search') return await cmdSearch(flags);
    console.error(`usage: trainer <train|predict|search> --listing export.json [flags]`);
    return 64;
  } catch (err) {
    console.error(`trainer ${command}: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
