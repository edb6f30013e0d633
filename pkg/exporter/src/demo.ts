#!/usr/bin/env node
/** Write the sample checkpoint + recipe + probe images into a directory, then
 * export and verify in one go.
 *
 * Usage: node dist/demo.js OUT_DIR
 */

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';
import { saveCheckpoint } from './checkpoint.js';
import { main as cpmExport } from './cli.js';
import { buildToyCheckpoint, toyRecipe, writeProbeImages } from './toy.js';

const out = process.argv[2];
if (!out) {
  console.error('usage: node dist/demo.js OUT_DIR');
  process.exit(2);
}
mkdirSync(out, { recursive: true });
const ckptPath = join(out, 'toy.ckpt.json');
const recipePath = join(out, 'toy.recipe.json');
saveCheckpoint(ckptPath, buildToyCheckpoint());
writeFileSync(recipePath, JSON.stringify(toyRecipe(), null, 2));
writeProbeImages(join(out, 'probe'), 10);
process.exit(cpmExport([
  '--source', ckptPath,
  '--recipe', recipePath,
  '--out', join(out, 'toy.cpm'),
  '--verify', join(out, 'probe'),
]));
