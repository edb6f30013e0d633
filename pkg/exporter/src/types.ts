/** Shared shapes and error types for the checkpoint-to-CPM exporter. */

export interface TensorEntry {
  /** Row-major dims; conv weights are (cout, cin, kh, kw) in the source. */
  shape: number[];
  /** Base64 of little-endian float32 values. */
  data: string;
}

export interface Checkpoint {
  format: string;
  name: string;
  tensors: Record<string, TensorEntry>;
}

export interface RecipeNode {
  id: string;
  kind: string;
  inputs: string[];
  /** Checkpoint layer name for Conv / BatchNorm / Dense nodes. */
  source?: string;
  stride?: number;
  padding?: number;
  window?: number;
  epsilon?: number;
  /** Anything but 1 is out of scope and must be rejected, not ignored. */
  dilation?: number;
  groups?: number;
}

export interface Preprocess {
  resize: number;
  crop: string;
  mean: number[];
  scale: number[];
}

export interface Recipe {
  name: string;
  input_shape: [number, number, number];
  class_count: number;
  probe_ids?: string[];
  preprocess?: Preprocess;
  nodes: RecipeNode[];
}

export interface ExportManifest {
  source: string;
  tool: string;
  cpm_file: string;
  /** CPM node id -> source layer name (every Conv maps to exactly one). */
  layers: Record<string, string>;
  preprocess: Preprocess;
  checksum: string;
}

export class UnsupportedLayer extends Error {}
export class ShapeMismatch extends Error {}
export class ToleranceExceeded extends Error {
  constructor(message: string, readonly worstLayer: string, readonly maxDiff: number) {
    super(message);
  }
}

export const SUPPORTED_KINDS = new Set([
  'Conv', 'BatchNorm', 'ReLU', 'MaxPool', 'Dense', 'Softmax', 'Concat', 'Add', 'Flatten',
]);
