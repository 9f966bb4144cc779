import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { writeDfd } from './dfd';
import { Listing, ListingEntry, loadTuple } from './listing';
import { NetworkSpec } from './model';
import { Sample, disposeSample, preprocessTuple } from './preprocess';

/**
 * Run the model over a split and drop one `<id>.dfd` per tuple into the
 * predictions directory. Scaled models are resized back to the native grid
 * bilinearly, so the dataset toolkit's evaluate subcommand can score the
 * directory directly against the HQ targets.
 */
export function predictSplit(
  model: tf.LayersModel,
  listing: Listing,
  entries: ListingEntry[],
  spec: NetworkSpec,
  outputDir: string,
): string[] {
  const written: string[] = [];
  for (const entry of entries) {
    const tuple = loadTuple(listing, entry);
    const sample: Sample | null = preprocessTuple(tuple, spec);
    if (sample === null) {
      continue; // empty mask: nothing to predict
    }
    const prediction = tf.tidy(() => {
      let pred = model.predict(sample.input.expandDims(0)) as tf.Tensor4D;
      if (spec.inputScale !== 1) {
        pred = tf.image.resizeBilinear(pred, [tuple.height, tuple.width]);
      }
      return pred.squeeze([0, 3]) as tf.Tensor2D;
    });
    const data = prediction.dataSync() as Float32Array;
    prediction.dispose();
    disposeSample(sample);
    const file = path.join(outputDir, `${entry.id}.dfd`);
    writeDfd(file, {
      width: tuple.width,
      height: tuple.height,
      dScale: tuple.dScale,
      data: new Float32Array(data),
    });
    written.push(file);
  }
  return written;
}
