/** Source-framework forward pass.
 *
 * Executes a checkpoint + recipe directly (batch norm unfolded, conv weights
 * in their native (cout, cin, kh, kw) layout) as the independent reference
 * the exported CPM file is checked against. Float64 math throughout.
 */

import { getTensor } from './checkpoint.js';
import { Checkpoint, Recipe, RecipeNode, ShapeMismatch, UnsupportedLayer } from './types.js';

export interface Activation {
  height: number;
  width: number;
  channels: number;
  /** Channels-last row-major float64. */
  data: Float64Array;
}

function at(a: Activation, y: number, x: number, c: number): number {
  return a.data[(y * a.width + x) * a.channels + c];
}

function convForward(input: Activation, node: RecipeNode, ckpt: Checkpoint): Activation {
  const { shape, values } = getTensor(ckpt, `${node.source}.weight`);
  const bias = getTensor(ckpt, `${node.source}.bias`).values;
  const [cout, cin, kh, kw] = shape;
  if (shape.length !== 4) throw new ShapeMismatch(`${node.id}: conv weight must be 4-d`);
  if (cin !== input.channels) {
    throw new ShapeMismatch(`${node.id}: expects ${cin} input channels, got ${input.channels}`);
  }
  const stride = node.stride ?? 1;
  const padding = node.padding ?? 0;
  const spanH = input.height + 2 * padding - kh;
  const spanW = input.width + 2 * padding - kw;
  if (spanH < 0 || spanW < 0 || spanH % stride || spanW % stride) {
    throw new ShapeMismatch(`${node.id}: kernel does not tile the input`);
  }
  const oh = spanH / stride + 1;
  const ow = spanW / stride + 1;
  const out = new Float64Array(oh * ow * cout);
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      for (let co = 0; co < cout; co++) {
        let acc = bias[co];
        for (let ky = 0; ky < kh; ky++) {
          const iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= input.height) continue;
          for (let kx = 0; kx < kw; kx++) {
            const ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= input.width) continue;
            for (let ci = 0; ci < cin; ci++) {
              acc += at(input, iy, ix, ci) * values[((co * cin + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(oy * ow + ox) * cout + co] = acc;
      }
    }
  }
  return { height: oh, width: ow, channels: cout, data: out };
}

function batchNormForward(input: Activation, node: RecipeNode, ckpt: Checkpoint): Activation {
  const gamma = getTensor(ckpt, `${node.source}.gamma`).values;
  const beta = getTensor(ckpt, `${node.source}.beta`).values;
  const mean = getTensor(ckpt, `${node.source}.mean`).values;
  const variance = getTensor(ckpt, `${node.source}.var`).values;
  if (gamma.length !== input.channels) {
    throw new ShapeMismatch(`${node.id}: batch norm is over ${gamma.length} channels, input has ${input.channels}`);
  }
  const eps = node.epsilon ?? 1e-5;
  const out = new Float64Array(input.data.length);
  for (let i = 0; i < input.data.length; i++) {
    const c = i % input.channels;
    out[i] = gamma[c] * ((input.data[i] - mean[c]) / Math.sqrt(variance[c] + eps)) + beta[c];
  }
  return { ...input, data: out };
}

function maxPoolForward(input: Activation, node: RecipeNode): Activation {
  const window = node.window ?? 2;
  const stride = node.stride ?? window;
  const spanH = input.height - window;
  const spanW = input.width - window;
  if (spanH < 0 || spanW < 0 || spanH % stride || spanW % stride) {
    throw new ShapeMismatch(`${node.id}: window does not tile the input`);
  }
  const oh = spanH / stride + 1;
  const ow = spanW / stride + 1;
  const out = new Float64Array(oh * ow * input.channels);
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      for (let c = 0; c < input.channels; c++) {
        let best = -Infinity;
        for (let wy = 0; wy < window; wy++) {
          for (let wx = 0; wx < window; wx++) {
            const v = at(input, oy * stride + wy, ox * stride + wx, c);
            if (v > best) best = v;
          }
        }
        out[(oy * ow + ox) * input.channels + c] = best;
      }
    }
  }
  return { height: oh, width: ow, channels: input.channels, data: out };
}

function denseForward(input: Activation, node: RecipeNode, ckpt: Checkpoint): Activation {
  const { shape, values } = getTensor(ckpt, `${node.source}.weight`);
  const bias = getTensor(ckpt, `${node.source}.bias`).values;
  const [outDim, inDim] = shape;
  if (input.data.length !== inDim) {
    throw new ShapeMismatch(`${node.id}: flattened input has ${input.data.length} values, weight expects ${inDim}`);
  }
  const out = new Float64Array(outDim);
  for (let o = 0; o < outDim; o++) {
    let acc = bias[o];
    for (let i = 0; i < inDim; i++) acc += values[o * inDim + i] * input.data[i];
    out[o] = acc;
  }
  return { height: 1, width: 1, channels: outDim, data: out };
}

function softmaxForward(input: Activation): Activation {
  let max = -Infinity;
  for (const v of input.data) if (v > max) max = v;
  const out = new Float64Array(input.data.length);
  let sum = 0;
  for (let i = 0; i < input.data.length; i++) {
    out[i] = Math.exp(input.data[i] - max);
    sum += out[i];
  }
  for (let i = 0; i < out.length; i++) out[i] /= sum;
  return { height: 1, width: 1, channels: out.length, data: out };
}

export interface ForwardResult {
  /** Raw output of every node, by id. */
  activations: Map<string, Activation>;
  /** Input of the final Softmax. */
  logits: Float64Array;
  probabilities: Float64Array;
}

export function forward(ckpt: Checkpoint, recipe: Recipe, image: Activation): ForwardResult {
  const values = new Map<string, Activation>();
  let logits: Float64Array | null = null;
  for (const node of recipe.nodes) {
    const ins = node.inputs.length
      ? node.inputs.map((i) => {
          const v = values.get(i);
          if (!v) throw new ShapeMismatch(`${node.id}: input ${i} not computed yet`);
          return v;
        })
      : [image];
    let out: Activation;
    switch (node.kind) {
      case 'Conv':
        out = convForward(ins[0], node, ckpt);
        break;
      case 'BatchNorm':
        out = batchNormForward(ins[0], node, ckpt);
        break;
      case 'ReLU':
        out = { ...ins[0], data: ins[0].data.map((v) => (v > 0 ? v : 0)) };
        break;
      case 'MaxPool':
        out = maxPoolForward(ins[0], node);
        break;
      case 'Dense':
        out = denseForward(ins[0], node, ckpt);
        break;
      case 'Softmax':
        logits = ins[0].data;
        out = softmaxForward(ins[0]);
        break;
      case 'Flatten':
        out = { height: 1, width: 1, channels: ins[0].data.length, data: ins[0].data.slice() };
        break;
      case 'Concat': {
        const [h, w] = [ins[0].height, ins[0].width];
        const channels = ins.reduce((a, t) => a + t.channels, 0);
        const data = new Float64Array(h * w * channels);
        for (let y = 0; y < h; y++) {
          for (let x = 0; x < w; x++) {
            let c0 = 0;
            for (const t of ins) {
              if (t.height !== h || t.width !== w) {
                throw new ShapeMismatch(`${node.id}: concat inputs disagree on dims`);
              }
              for (let c = 0; c < t.channels; c++) {
                data[(y * w + x) * channels + c0 + c] = at(t, y, x, c);
              }
              c0 += t.channels;
            }
          }
        }
        out = { height: h, width: w, channels, data };
        break;
      }
      case 'Add': {
        const data = ins[0].data.slice();
        for (const t of ins.slice(1)) {
          if (t.data.length !== data.length) {
            throw new ShapeMismatch(`${node.id}: add inputs disagree on dims`);
          }
          for (let i = 0; i < data.length; i++) data[i] += t.data[i];
        }
        out = { ...ins[0], data };
        break;
      }
      default:
        throw new UnsupportedLayer(`${node.id}: kind ${JSON.stringify(node.kind)}`);
    }
    values.set(node.id, out);
  }
  if (!logits) throw new ShapeMismatch('recipe has no Softmax sink');
  const last = recipe.nodes[recipe.nodes.length - 1];
  return { activations: values, logits, probabilities: values.get(last.id)!.data };
}

export function imageFromUnitFloats(height: number, width: number, unit: Float64Array): Activation {
  return { height, width, channels: 3, data: unit };
}

/** Per-position channel argmax, ties to the lowest index (winner map). */
export function argmaxMap(a: Activation): Uint16Array {
  const out = new Uint16Array(a.height * a.width);
  for (let p = 0; p < out.length; p++) {
    let best = 0;
    for (let c = 1; c < a.channels; c++) {
      if (a.data[p * a.channels + c] > a.data[p * a.channels + best]) best = c;
    }
    out[p] = best;
  }
  return out;
}
