/** Binary PPM (P6, maxval 255) writer/reader for probe images. */

import { readFileSync, writeFileSync } from 'node:fs';
import { ShapeMismatch } from './types.js';

export interface Image {
  height: number;
  width: number;
  /** Row-major RGB bytes. */
  pixels: Uint8Array;
}

export function writePpm(path: string, img: Image): void {
  if (img.pixels.length !== img.height * img.width * 3) {
    throw new ShapeMismatch('pixel buffer does not match dims');
  }
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  writeFileSync(path, Buffer.concat([header, Buffer.from(img.pixels)]));
}

export function readPpm(path: string): Image {
  const data = readFileSync(path);
  if (data.subarray(0, 2).toString('ascii') !== 'P6') {
    throw new ShapeMismatch(`${path}: not a P6 PPM`);
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < data.length && /\s/.test(String.fromCharCode(data[pos]))) pos++;
    if (data[pos] === 0x23) { // '#' comment
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < data.length && !/\s/.test(String.fromCharCode(data[pos]))) pos++;
    fields.push(parseInt(data.subarray(start, pos).toString('ascii'), 10));
  }
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new ShapeMismatch(`${path}: only maxval 255 supported`);
  pos += 1; // single whitespace
  const need = width * height * 3;
  const pixels = data.subarray(pos, pos + need);
  if (pixels.length !== need) throw new ShapeMismatch(`${path}: truncated raster`);
  return { height, width, pixels: new Uint8Array(pixels) };
}

/** Decode to [0,1] channels-last floats, byte/255 like the inference engine. */
export function toUnitFloats(img: Image): Float64Array {
  const out = new Float64Array(img.pixels.length);
  for (let i = 0; i < img.pixels.length; i++) out[i] = Math.fround(img.pixels[i] / 255);
  return out;
}
