/** Convert a source checkpoint plus an architecture recipe into CPM bytes.
 *
 * Batch norm folds into per-channel affine; conv weights permute from the
 * source (cout, cin, kh, kw) layout to (ky, kx, cin, cout) once, here, so the
 * inference engine never permutes.
 */

import { createHash } from 'node:crypto';
import { getTensor } from './checkpoint.js';
import { CpmModel, CpmNode, writeCpm } from './cpm.js';
import { foldBatchNorm } from './fold.js';
import {
  Checkpoint,
  ExportManifest,
  Preprocess,
  Recipe,
  RecipeNode,
  ShapeMismatch,
  SUPPORTED_KINDS,
  UnsupportedLayer,
} from './types.js';

const TOOL = 'cpm-export 0.1.0';

const DEFAULT_PREPROCESS: Preprocess = { resize: 0, crop: 'center', mean: [0, 0, 0], scale: [1, 1, 1] };

function permuteConvWeights(values: Float32Array, cout: number, cin: number, kh: number, kw: number): Float32Array {
  const out = new Float32Array(values.length);
  for (let co = 0; co < cout; co++) {
    for (let ci = 0; ci < cin; ci++) {
      for (let ky = 0; ky < kh; ky++) {
        for (let kx = 0; kx < kw; kx++) {
          out[((ky * kw + kx) * cin + ci) * cout + co] =
            values[((co * cin + ci) * kh + ky) * kw + kx];
        }
      }
    }
  }
  return out;
}

function requireSource(node: RecipeNode): string {
  if (!node.source) throw new ShapeMismatch(`${node.id}: recipe node needs a source layer name`);
  return node.source;
}

function convertNode(node: RecipeNode, ckpt: Checkpoint, layers: Record<string, string>): CpmNode {
  if (!SUPPORTED_KINDS.has(node.kind)) {
    throw new UnsupportedLayer(`${node.id}: layer kind ${JSON.stringify(node.kind)} is not supported`);
  }
  if ((node.dilation ?? 1) !== 1) {
    throw new UnsupportedLayer(`${node.id}: dilated convolution is not supported`);
  }
  if ((node.groups ?? 1) !== 1) {
    throw new UnsupportedLayer(`${node.id}: grouped convolution is not supported`);
  }
  switch (node.kind) {
    case 'Conv': {
      const source = requireSource(node);
      const { shape, values } = getTensor(ckpt, `${source}.weight`);
      if (shape.length !== 4) {
        throw new ShapeMismatch(`${node.id}: conv weight must be (cout, cin, kh, kw), got ${shape}`);
      }
      const [cout, cin, kh, kw] = shape;
      const bias = getTensor(ckpt, `${source}.bias`);
      if (bias.values.length !== cout) {
        throw new ShapeMismatch(`${node.id}: bias length ${bias.values.length} != cout ${cout}`);
      }
      layers[node.id] = source;
      return {
        id: node.id,
        kind: 'Conv',
        inputs: node.inputs,
        params: { kh, kw, cin, cout, stride: node.stride ?? 1, padding: node.padding ?? 0 },
        blobs: [
          { name: 'weights', values: permuteConvWeights(values, cout, cin, kh, kw) },
          { name: 'bias', values: bias.values },
        ],
      };
    }
    case 'BatchNorm': {
      const source = requireSource(node);
      const gamma = getTensor(ckpt, `${source}.gamma`).values;
      const beta = getTensor(ckpt, `${source}.beta`).values;
      const mean = getTensor(ckpt, `${source}.mean`).values;
      const variance = getTensor(ckpt, `${source}.var`).values;
      if (new Set([gamma.length, beta.length, mean.length, variance.length]).size !== 1) {
        throw new ShapeMismatch(`${node.id}: batch norm parameter lengths disagree`);
      }
      const folded = foldBatchNorm(gamma, beta, mean, variance, node.epsilon ?? 1e-5);
      layers[node.id] = source;
      return {
        id: node.id,
        kind: 'AffineChannel',
        inputs: node.inputs,
        params: { channels: gamma.length },
        blobs: [
          { name: 'scale', values: folded.scale },
          { name: 'shift', values: folded.shift },
        ],
      };
    }
    case 'Dense': {
      const source = requireSource(node);
      const { shape, values } = getTensor(ckpt, `${source}.weight`);
      if (shape.length !== 2) {
        throw new ShapeMismatch(`${node.id}: dense weight must be (out, in), got ${shape}`);
      }
      const bias = getTensor(ckpt, `${source}.bias`);
      layers[node.id] = source;
      return {
        id: node.id,
        kind: 'Dense',
        inputs: node.inputs,
        params: { out_dim: shape[0], in_dim: shape[1] },
        blobs: [
          { name: 'weights', values },
          { name: 'bias', values: bias.values },
        ],
      };
    }
    case 'MaxPool':
      return {
        id: node.id,
        kind: 'MaxPool',
        inputs: node.inputs,
        params: { window: node.window ?? 2, stride: node.stride ?? node.window ?? 2 },
      };
    default:
      // ReLU / Softmax / Concat / Add / Flatten carry no parameters.
      return { id: node.id, kind: node.kind, inputs: node.inputs };
  }
}

export interface ExportResult {
  bytes: Buffer;
  manifest: ExportManifest;
}

export function exportModel(ckpt: Checkpoint, recipe: Recipe, cpmFileName = 'model.cpm'): ExportResult {
  const layers: Record<string, string> = {};
  const nodes = recipe.nodes.map((n) => convertNode(n, ckpt, layers));
  const preprocess = recipe.preprocess ?? DEFAULT_PREPROCESS;
  const probeIds = recipe.probe_ids
    ?? recipe.nodes.filter((n) => n.kind === 'Conv').slice(0, 5).map((n) => n.id);
  const model: CpmModel = {
    class_count: recipe.class_count,
    input_shape: recipe.input_shape,
    nodes,
    preprocess,
    probe_ids: probeIds,
  };
  const bytes = writeCpm(model);
  const manifest: ExportManifest = {
    source: ckpt.name,
    tool: TOOL,
    cpm_file: cpmFileName,
    layers,
    preprocess,
    checksum: 'sha256:' + createHash('sha256').update(bytes).digest('hex'),
  };
  return { bytes, manifest };
}
