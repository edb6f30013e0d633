#!/usr/bin/env node
/** cpm-export: convert a checkpoint to CPM and optionally verify it.
 *
 * Usage:
 *   cpm-export --source ckpt.json --recipe arch.json --out model.cpm
 *              [--verify IMAGES_DIR] [--tolerance 1e-4]
 *
 * The manifest (layer mapping, preprocess, sha256 of the CPM bytes) is
 * written as JSON beside the CPM file. Exit codes: 0 ok, 1 failed, 2 usage.
 */

import { readdirSync, writeFileSync } from 'node:fs';
import { basename, join } from 'node:path';
import { loadCheckpoint } from './checkpoint.js';
import { exportModel } from './export.js';
import { Recipe, ShapeMismatch, ToleranceExceeded, UnsupportedLayer } from './types.js';
import { verifyRoundtrip } from './verify.js';
import { readFileSync } from 'node:fs';

interface Args {
  source?: string;
  recipe?: string;
  out?: string;
  verify?: string;
  tolerance: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { tolerance: 1e-4 };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--source': args.source = argv[++i]; break;
      case '--recipe': args.recipe = argv[++i]; break;
      case '--out': args.out = argv[++i]; break;
      case '--verify': args.verify = argv[++i]; break;
      case '--tolerance': args.tolerance = Number(argv[++i]); break;
      case '--help':
      case '-h':
        console.log('cpm-export --source CKPT --recipe R.json --out M.cpm [--verify IMAGES_DIR] [--tolerance 1e-4]');
        process.exit(0);
        break;
      default:
        console.error(`unknown argument: ${argv[i]}`);
        process.exit(2);
    }
  }
  if (!args.source || !args.recipe || !args.out) {
    console.error('cpm-export: --source, --recipe and --out are required');
    process.exit(2);
  }
  if (!Number.isFinite(args.tolerance) || args.tolerance <= 0) {
    console.error('cpm-export: --tolerance must be a positive number');
    process.exit(2);
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  try {
    const ckpt = loadCheckpoint(args.source!);
    const recipe = JSON.parse(readFileSync(args.recipe!, 'utf-8')) as Recipe;
    const { bytes, manifest } = exportModel(ckpt, recipe, basename(args.out!));
    writeFileSync(args.out!, bytes);
    const manifestPath = args.out!.replace(/\.cpm$/, '') + '.manifest.json';
    writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n');
    console.log(`wrote ${args.out} (${bytes.length} bytes) and ${manifestPath}`);

    if (args.verify) {
      const images = readdirSync(args.verify)
        .filter((f) => f.endsWith('.ppm'))
        .sort()
        .map((f) => join(args.verify!, f));
      if (!images.length) {
        console.error(`cpm-export: no .ppm probe images in ${args.verify}`);
        return 1;
      }
      const report = verifyRoundtrip(ckpt, recipe, args.out!, images, { tolerance: args.tolerance });
      console.log(
        `verified ${report.perImage.length} images: max class-score diff `
        + `${report.worst.maxDiff.toExponential(3)} <= ${report.tolerance}`);
    }
    return 0;
  } catch (e) {
    if (e instanceof ToleranceExceeded || e instanceof UnsupportedLayer || e instanceof ShapeMismatch) {
      console.error(`cpm-export: ${e.constructor.name}: ${e.message}`);
      return 1;
    }
    console.error(`cpm-export: ${(e as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] && (
  process.argv[1].endsWith('cli.js') || process.argv[1].endsWith('cpm-export'));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
