/** Source checkpoint container: JSON with base64-encoded float32 tensors. */

import { readFileSync, writeFileSync } from 'node:fs';
import { Checkpoint, ShapeMismatch, TensorEntry } from './types.js';

export function encodeTensor(shape: number[], values: Float32Array): TensorEntry {
  const expected = shape.reduce((a, b) => a * b, 1);
  if (values.length !== expected) {
    throw new ShapeMismatch(`tensor holds ${values.length} values, shape declares ${expected}`);
  }
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], i * 4);
  return { shape: [...shape], data: buf.toString('base64') };
}

export function decodeTensor(entry: TensorEntry): Float32Array {
  const buf = Buffer.from(entry.data, 'base64');
  const expected = entry.shape.reduce((a, b) => a * b, 1);
  if (buf.length !== expected * 4) {
    throw new ShapeMismatch(`tensor data is ${buf.length} bytes, shape declares ${expected * 4}`);
  }
  const out = new Float32Array(expected);
  for (let i = 0; i < expected; i++) out[i] = buf.readFloatLE(i * 4);
  return out;
}

export function getTensor(ckpt: Checkpoint, name: string): { shape: number[]; values: Float32Array } {
  const entry = ckpt.tensors[name];
  if (!entry) throw new ShapeMismatch(`checkpoint has no tensor ${JSON.stringify(name)}`);
  return { shape: entry.shape, values: decodeTensor(entry) };
}

export function loadCheckpoint(path: string): Checkpoint {
  const ckpt = JSON.parse(readFileSync(path, 'utf-8')) as Checkpoint;
  if (ckpt.format !== 'toyckpt-v1' || typeof ckpt.tensors !== 'object') {
    throw new ShapeMismatch(`${path}: not a toyckpt-v1 checkpoint`);
  }
  return ckpt;
}

export function saveCheckpoint(path: string, ckpt: Checkpoint): void {
  writeFileSync(path, JSON.stringify(ckpt));
}
