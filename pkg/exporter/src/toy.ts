/** Deterministic sample assets: a 3-conv + batch-norm + dense checkpoint,
 * its architecture recipe, and PPM probe images. */

import { mkdirSync } from 'node:fs';
import { join } from 'node:path';
import { encodeTensor } from './checkpoint.js';
import { writePpm } from './ppm.js';
import { gridArray, mulberry32, randomBytes, Rng } from './prng.js';
import { Checkpoint, Recipe, TensorEntry } from './types.js';

export const INPUT_HW = 14;
export const CLASSES = 7;

function tensor(rng: Rng, shape: number[], grid = 64, span = 512): TensorEntry {
  const n = shape.reduce((a, b) => a * b, 1);
  return encodeTensor(shape, gridArray(rng, n, grid, span));
}

function positiveTensor(rng: Rng, n: number, lo: number, hi: number): TensorEntry {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround(lo + rng() * (hi - lo));
  return encodeTensor([n], out);
}

export function buildToyCheckpoint(seed = 41): Checkpoint {
  const rng = mulberry32(seed);
  return {
    format: 'toyckpt-v1',
    name: `toy3conv-seed${seed}`,
    tensors: {
      'conv1.weight': tensor(rng, [4, 3, 3, 3], 64, 48),
      'conv1.bias': tensor(rng, [4], 64, 16),
      'bn1.gamma': positiveTensor(rng, 4, 0.5, 1.5),
      'bn1.beta': tensor(rng, [4], 64, 16),
      'bn1.mean': tensor(rng, [4], 64, 16),
      'bn1.var': positiveTensor(rng, 4, 0.5, 2.0),
      'conv2.weight': tensor(rng, [6, 4, 3, 3], 64, 32),
      'conv2.bias': tensor(rng, [6], 64, 16),
      'conv3.weight': tensor(rng, [8, 6, 1, 1], 64, 32),
      'conv3.bias': tensor(rng, [8], 64, 16),
      'fc.weight': tensor(rng, [CLASSES, 5 * 5 * 8], 256, 64),
      'fc.bias': tensor(rng, [CLASSES], 64, 16),
    },
  };
}

export function toyRecipe(): Recipe {
  return {
    name: 'toy3conv',
    input_shape: [INPUT_HW, INPUT_HW, 3],
    class_count: CLASSES,
    probe_ids: ['conv1', 'conv2', 'conv3'],
    preprocess: { resize: 0, crop: 'center', mean: [0, 0, 0], scale: [1, 1, 1] },
    nodes: [
      { id: 'conv1', kind: 'Conv', inputs: [], source: 'conv1', stride: 1, padding: 0 },
      { id: 'bn1', kind: 'BatchNorm', inputs: ['conv1'], source: 'bn1', epsilon: 1e-5 },
      { id: 'relu1', kind: 'ReLU', inputs: ['bn1'] },
      { id: 'conv2', kind: 'Conv', inputs: ['relu1'], source: 'conv2', stride: 1, padding: 0 },
      { id: 'relu2', kind: 'ReLU', inputs: ['conv2'] },
      { id: 'pool', kind: 'MaxPool', inputs: ['relu2'], window: 2, stride: 2 },
      { id: 'conv3', kind: 'Conv', inputs: ['pool'], source: 'conv3', stride: 1, padding: 0 },
      { id: 'relu3', kind: 'ReLU', inputs: ['conv3'] },
      { id: 'flat', kind: 'Flatten', inputs: ['relu3'] },
      { id: 'fc', kind: 'Dense', inputs: ['flat'], source: 'fc' },
      { id: 'prob', kind: 'Softmax', inputs: ['fc'] },
    ],
  };
}

export function writeProbeImages(dir: string, n: number, seed = 5, hw = INPUT_HW): string[] {
  mkdirSync(dir, { recursive: true });
  const rng = mulberry32(seed);
  const paths: string[] = [];
  for (let i = 0; i < n; i++) {
    const path = join(dir, `probe${String(i).padStart(2, '0')}.ppm`);
    writePpm(path, { height: hw, width: hw, pixels: randomBytes(rng, hw * hw * 3) });
    paths.push(path);
  }
  return paths;
}

export function writeBlackImage(dir: string, hw = INPUT_HW): string {
  mkdirSync(dir, { recursive: true });
  const path = join(dir, 'black.ppm');
  writePpm(path, { height: hw, width: hw, pixels: new Uint8Array(hw * hw * 3) });
  return path;
}
