import { describe, expect, it } from 'vitest';
import { foldBatchNorm } from '../src/fold.js';
import { gridArray, mulberry32 } from '../src/prng.js';

describe('batch-norm folding', () => {
  it('identity case is exact: gamma=1, beta=0, mean=0, var=1, eps=0', () => {
    const one = new Float32Array([1, 1, 1]);
    const zero = new Float32Array([0, 0, 0]);
    const { scale, shift } = foldBatchNorm(one, zero, zero, one, 0);
    expect([...scale]).toEqual([1, 1, 1]);
    expect([...shift]).toEqual([0, 0, 0]);
  });

  it('folded affine equals the unfolded normalization within 1e-5', () => {
    const rng = mulberry32(17);
    for (let trial = 0; trial < 50; trial++) {
      const c = 1 + Math.floor(rng() * 8);
      const gamma = gridArray(rng, c, 64, 128);
      const beta = gridArray(rng, c, 64, 128);
      const mean = gridArray(rng, c, 64, 128);
      const variance = new Float32Array(c);
      for (let i = 0; i < c; i++) variance[i] = Math.fround(0.3 + rng() * 2);
      const eps = 1e-5;
      const { scale, shift } = foldBatchNorm(gamma, beta, mean, variance, eps);
      for (let i = 0; i < 200; i++) {
        const ch = i % c;
        const x = (rng() - 0.5) * 8;
        const direct = gamma[ch] * ((x - mean[ch]) / Math.sqrt(variance[ch] + eps)) + beta[ch];
        const folded = x * scale[ch] + shift[ch];
        expect(Math.abs(folded - direct)).toBeLessThanOrEqual(1e-5);
      }
    }
  });
});
