/** Deterministic PRNG (mulberry32) for reproducible toy checkpoints. */

export type Rng = () => number; // uniform in [0, 1)

export function mulberry32(seed: number): Rng {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Random dyadic floats k/grid with |k| <= span (exact in float32). */
export function gridArray(rng: Rng, n: number, grid = 64, span = 512): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const k = Math.floor(rng() * (2 * span + 1)) - span;
    out[i] = k / grid;
  }
  return out;
}

export function randomBytes(rng: Rng, n: number): Uint8Array {
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.floor(rng() * 256);
  return out;
}
