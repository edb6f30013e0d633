import { createHash } from 'node:crypto';
import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { encodeTensor } from '../src/checkpoint.js';
import { peekHeader } from '../src/cpm.js';
import { exportModel } from '../src/export.js';
import { ShapeMismatch, UnsupportedLayer } from '../src/types.js';
import { engineWinners } from '../src/verify.js';
import { buildToyCheckpoint, toyRecipe, writeProbeImages } from './fixtures.js';

describe('export', () => {
  it('is deterministic and checksummed', () => {
    const ckpt = buildToyCheckpoint();
    const a = exportModel(ckpt, toyRecipe());
    const b = exportModel(ckpt, toyRecipe());
    expect(a.bytes.equals(b.bytes)).toBe(true);
    expect(a.manifest.checksum).toBe(
      'sha256:' + createHash('sha256').update(a.bytes).digest('hex'));
  });

  it('maps every conv (and folded bn) node to exactly one source layer', () => {
    const { manifest } = exportModel(buildToyCheckpoint(), toyRecipe());
    expect(manifest.layers).toEqual({
      conv1: 'conv1', bn1: 'bn1', conv2: 'conv2', conv3: 'conv3', fc: 'fc',
    });
  });

  it('emits a CPM header the container format prescribes', () => {
    const { bytes } = exportModel(buildToyCheckpoint(), toyRecipe());
    expect(bytes.subarray(0, 4).toString('ascii')).toBe('CPMF');
    expect(bytes.readUInt32LE(4)).toBe(1);
    const { header, blobStart } = peekHeader(bytes);
    expect(header.class_count).toBe(7);
    expect(header.probe_ids).toEqual(['conv1', 'conv2', 'conv3']);
    const kinds = header.nodes.map((n: any) => n.kind);
    expect(kinds).toContain('AffineChannel');
    expect(kinds).not.toContain('BatchNorm');
    const declared = header.nodes.flatMap((n: any) => n.blobs ?? [])
      .reduce((a: number, b: any) => a + b[2], 0);
    expect(blobStart + declared).toBe(bytes.length);
  });

  it('loads in the inference engine and classifies', () => {
    const dir = mkdtempSync(join(tmpdir(), 'cpmx-'));
    const ckpt = buildToyCheckpoint();
    const { bytes } = exportModel(ckpt, toyRecipe());
    const cpmPath = join(dir, 'toy.cpm');
    writeFileSync(cpmPath, bytes);
    const [image] = writeProbeImages(join(dir, 'img'), 1);
    const out = engineWinners(process.env.CONTRASTPROBE_BIN ?? 'contrastprobe',
                              cpmPath, image, 'conv1');
    expect(out.height).toBe(12);
    expect(out.width).toBe(12);
    expect(out.logits).toHaveLength(7);
    expect(out.prediction.class_id).toBeGreaterThanOrEqual(0);
  });

  it('folds the identity batch norm to scale 1 / shift 0 bitwise', () => {
    const ckpt = buildToyCheckpoint();
    const c = 4;
    ckpt.tensors['bn1.gamma'] = encodeTensor([c], new Float32Array(c).fill(1));
    ckpt.tensors['bn1.beta'] = encodeTensor([c], new Float32Array(c));
    ckpt.tensors['bn1.mean'] = encodeTensor([c], new Float32Array(c));
    ckpt.tensors['bn1.var'] = encodeTensor([c], new Float32Array(c).fill(1));
    const recipe = toyRecipe();
    recipe.nodes.find((n) => n.id === 'bn1')!.epsilon = 0;
    const { bytes } = exportModel(ckpt, recipe);
    const { header, blobStart } = peekHeader(bytes);
    const bn = header.nodes.find((n: any) => n.id === 'bn1');
    const [scaleRef, shiftRef] = bn.blobs;
    for (let i = 0; i < c; i++) {
      expect(bytes.readFloatLE(blobStart + scaleRef[1] + 4 * i)).toBe(1);
      expect(bytes.readFloatLE(blobStart + shiftRef[1] + 4 * i)).toBe(0);
    }
  });

  it('rejects dilated and unknown layers by name', () => {
    const ckpt = buildToyCheckpoint();
    const dilated = toyRecipe();
    dilated.nodes.find((n) => n.id === 'conv2')!.dilation = 2;
    expect(() => exportModel(ckpt, dilated)).toThrowError(UnsupportedLayer);
    expect(() => exportModel(ckpt, dilated)).toThrowError(/conv2/);

    const exotic = toyRecipe();
    exotic.nodes.splice(2, 0, { id: 'drop', kind: 'Dropout', inputs: ['bn1'] });
    expect(() => exportModel(ckpt, exotic)).toThrowError(UnsupportedLayer);
  });

  it('rejects checkpoints whose shapes disagree with the recipe', () => {
    const ckpt = buildToyCheckpoint();
    ckpt.tensors['conv1.bias'] = encodeTensor([3], new Float32Array(3));
    expect(() => exportModel(ckpt, toyRecipe())).toThrowError(ShapeMismatch);
  });
});
