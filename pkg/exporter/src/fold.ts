/** Inference-time batch-norm folding into a per-channel affine. */

export interface Folded {
  scale: Float32Array;
  shift: Float32Array;
}

/** scale = gamma / sqrt(var + eps); shift = beta - gamma * mean / sqrt(var + eps). */
export function foldBatchNorm(
  gamma: Float32Array,
  beta: Float32Array,
  mean: Float32Array,
  variance: Float32Array,
  epsilon: number,
): Folded {
  const n = gamma.length;
  const scale = new Float32Array(n);
  const shift = new Float32Array(n);
  for (let c = 0; c < n; c++) {
    const inv = 1 / Math.sqrt(variance[c] + epsilon);
    scale[c] = Math.fround(gamma[c] * inv);
    shift[c] = Math.fround(beta[c] - gamma[c] * mean[c] * inv);
  }
  return { scale, shift };
}
