/** Cross-implementation verification: source-framework class scores vs the
 * inference engine's, via its CLI, on a set of probe images. */

import { execFileSync } from 'node:child_process';
import { argmaxMap, forward, imageFromUnitFloats } from './reference.js';
import { readPpm, toUnitFloats } from './ppm.js';
import { Checkpoint, Recipe, ToleranceExceeded } from './types.js';

export interface EngineDebugOutput {
  layer: string;
  level: number;
  height: number;
  width: number;
  winners: number[][];
  logits: number[];
  probabilities: number[];
  prediction: { class_id: number; confidence: number };
}

export interface VerifyOptions {
  /** Inference engine CLI; override with CONTRASTPROBE_BIN for odd installs. */
  bin?: string;
  tolerance?: number;
}

export interface ImageParity {
  image: string;
  maxDiff: number;
}

export interface VerifyReport {
  pass: boolean;
  tolerance: number;
  perImage: ImageParity[];
  worst: ImageParity;
}

export function engineWinners(
  bin: string,
  cpmPath: string,
  imagePath: string,
  layer: string,
  level = 100,
): EngineDebugOutput {
  const stdout = execFileSync(bin, [
    'winners', '--model', cpmPath, '--image', imagePath,
    '--level', String(level), '--layer', layer,
  ], { encoding: 'utf-8' });
  return JSON.parse(stdout) as EngineDebugOutput;
}

function defaultBin(): string {
  return process.env.CONTRASTPROBE_BIN ?? 'contrastprobe';
}

/** Name the probed conv layer whose winner maps agree least between the two
 * engines; this localizes a layout or weight transposition bug. */
function worstLayer(
  bin: string,
  ckpt: Checkpoint,
  recipe: Recipe,
  cpmPath: string,
  imagePath: string,
): { layer: string; agreement: number } {
  const img = readPpm(imagePath);
  const ref = forward(ckpt, recipe, imageFromUnitFloats(img.height, img.width, toUnitFloats(img)));
  const convIds = (recipe.probe_ids
    ?? recipe.nodes.filter((n) => n.kind === 'Conv').slice(0, 5).map((n) => n.id));
  let worst = { layer: convIds[0] ?? '?', agreement: 1.0 };
  for (const layer of convIds) {
    const sourceMap = argmaxMap(ref.activations.get(layer)!);
    const engine = engineWinners(bin, cpmPath, imagePath, layer);
    const engineMap = engine.winners.flat();
    let same = 0;
    for (let i = 0; i < sourceMap.length; i++) if (sourceMap[i] === engineMap[i]) same++;
    const agreement = sourceMap.length ? same / sourceMap.length : 1.0;
    if (agreement < worst.agreement) worst = { layer, agreement };
  }
  return worst;
}

export function verifyRoundtrip(
  ckpt: Checkpoint,
  recipe: Recipe,
  cpmPath: string,
  imagePaths: string[],
  options: VerifyOptions = {},
): VerifyReport {
  const bin = options.bin ?? defaultBin();
  const tolerance = options.tolerance ?? 1e-4;
  const firstConv = recipe.nodes.find((n) => n.kind === 'Conv');
  if (!firstConv) throw new Error('recipe has no Conv layer to probe');

  const perImage: ImageParity[] = [];
  for (const imagePath of imagePaths) {
    const img = readPpm(imagePath);
    const ref = forward(ckpt, recipe, imageFromUnitFloats(img.height, img.width, toUnitFloats(img)));
    const engine = engineWinners(bin, cpmPath, imagePath, firstConv.id);
    if (engine.logits.length !== ref.logits.length) {
      throw new ToleranceExceeded(
        `${imagePath}: engine returned ${engine.logits.length} class scores, source has ${ref.logits.length}`,
        firstConv.id, Infinity);
    }
    let maxDiff = 0;
    for (let i = 0; i < ref.logits.length; i++) {
      maxDiff = Math.max(maxDiff, Math.abs(ref.logits[i] - engine.logits[i]));
    }
    perImage.push({ image: imagePath, maxDiff });
  }
  const worst = perImage.reduce((a, b) => (b.maxDiff > a.maxDiff ? b : a));
  if (worst.maxDiff > tolerance) {
    const blame = worstLayer(bin, ckpt, recipe, cpmPath, worst.image);
    throw new ToleranceExceeded(
      `class scores differ by ${worst.maxDiff.toExponential(3)} on ${worst.image} `
      + `(tolerance ${tolerance}); worst layer ${blame.layer} `
      + `(winner agreement ${(blame.agreement * 100).toFixed(1)}%)`,
      blame.layer, worst.maxDiff);
  }
  return { pass: true, tolerance, perImage, worst };
}
