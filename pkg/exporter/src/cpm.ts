/** CPM container writer.
 *
 * Layout (little-endian): magic "CPMF", u32 version 1, u64 header length,
 * UTF-8 JSON header, then raw float32 blobs concatenated in header order.
 * Blob offsets are relative to the start of the blob section and must be
 * contiguous; conv weights are laid out (ky, kx, cin, cout).
 */

import { Preprocess } from './types.js';

export const CPM_MAGIC = 'CPMF';
export const CPM_VERSION = 1;

export interface CpmBlobRef {
  name: string;
  values: Float32Array;
}

export interface CpmNode {
  id: string;
  kind: string;
  inputs: string[];
  params?: Record<string, number | string>;
  blobs?: CpmBlobRef[];
}

export interface CpmModel {
  class_count: number;
  input_shape: [number, number, number];
  nodes: CpmNode[];
  preprocess: Preprocess;
  probe_ids: string[];
}

function f32Bytes(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], i * 4);
  return buf;
}

export function writeCpm(model: CpmModel): Buffer {
  const blobBuffers: Buffer[] = [];
  let offset = 0;
  const nodeEntries = model.nodes.map((n) => {
    const entry: Record<string, unknown> = { id: n.id, kind: n.kind, inputs: n.inputs };
    if (n.params) entry.params = n.params;
    if (n.blobs && n.blobs.length) {
      entry.blobs = n.blobs.map((b) => {
        const raw = f32Bytes(b.values);
        blobBuffers.push(raw);
        const ref = [b.name, offset, raw.length];
        offset += raw.length;
        return ref;
      });
    }
    return entry;
  });
  const header = {
    class_count: model.class_count,
    input_shape: model.input_shape,
    nodes: nodeEntries,
    preprocess: model.preprocess,
    probe_ids: model.probe_ids,
  };
  const headerBytes = Buffer.from(JSON.stringify(header), 'utf-8');
  const prefix = Buffer.alloc(16);
  prefix.write(CPM_MAGIC, 0, 'ascii');
  prefix.writeUInt32LE(CPM_VERSION, 4);
  prefix.writeBigUInt64LE(BigInt(headerBytes.length), 8);
  return Buffer.concat([prefix, headerBytes, ...blobBuffers]);
}

/** Parse just the header (for tests and targeted corruption). */
export function peekHeader(data: Buffer): { header: any; blobStart: number } {
  if (data.subarray(0, 4).toString('ascii') !== CPM_MAGIC) {
    throw new Error('bad CPM magic');
  }
  const headerLen = Number(data.readBigUInt64LE(8));
  const header = JSON.parse(data.subarray(16, 16 + headerLen).toString('utf-8'));
  return { header, blobStart: 16 + headerLen };
}
