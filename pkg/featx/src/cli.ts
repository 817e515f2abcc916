#!/usr/bin/env node
/**
 * featx: feature-extractor sidecar for specseg runs.
 *
 *   featx extract dense --manifest PATH --out DIR [--model NAME] [--patch-size K]
 *   featx extract crops --manifest PATH --out DIR [--model NAME] [--patch-size K] [--run DIR]
 *
 * `dense` writes one (n_patches, dim) DST per manifest image; `crops`
 * reads a pipeline run directory and writes per-segment crop and mask
 * embeddings the core's cluster stage can consume.
 */

import { parseArgs } from 'util';

import { extractCrops, resolveRunDir } from './crops';
import { extractDense } from './dense';
import { loadManifest } from './manifest';
import { DEFAULT_MODEL, Extractor, MODELS } from './model';

const USAGE =
  'usage: featx extract dense|crops --manifest PATH --out DIR ' +
  `[--model NAME] [--patch-size K] [--run DIR]\n` +
  `models: ${Object.keys(MODELS).join(', ')}`;

class UsageError extends Error {}

export function run(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      manifest: { type: 'string' },
      out: { type: 'string' },
      model: { type: 'string', default: DEFAULT_MODEL },
      'patch-size': { type: 'string' },
      run: { type: 'string' },
    },
  });
  if (positionals.length !== 2 || positionals[0] !== 'extract') {
    throw new UsageError(USAGE);
  }
  const mode = positionals[1];
  if (mode !== 'dense' && mode !== 'crops') {
    throw new UsageError(`unknown extraction mode "${mode}"\n${USAGE}`);
  }
  if (!values.manifest || !values.out) {
    throw new UsageError(`--manifest and --out are required\n${USAGE}`);
  }
  let patchSize: number | undefined;
  if (values['patch-size'] !== undefined) {
    patchSize = Number(values['patch-size']);
    if (!Number.isInteger(patchSize) || patchSize < 1) {
      throw new UsageError(`--patch-size must be a positive integer, got "${values['patch-size']}"`);
    }
  }

  const extractor = new Extractor(values.model, patchSize);
  const entries = loadManifest(values.manifest);
  if (mode === 'dense') {
    const results = extractDense(entries, extractor, values.out);
    for (const r of results) {
      console.log(`${r.imageId}: ${r.nH * r.nW} x ${r.dim} -> ${r.outPath}`);
    }
  } else {
    const runDir = resolveRunDir(values.out, values.run);
    const results = extractCrops(entries, extractor, runDir, values.out);
    for (const r of results) {
      console.log(`${r.imageId}: ${r.nSegments} segments -> ${r.outPath}`);
    }
  }
  return 0;
}

export function main(argv: string[]): number {
  try {
    return run(argv);
  } catch (err) {
    console.error(err instanceof UsageError ? err.message : `featx: ${(err as Error).message}`);
    return err instanceof UsageError ? 2 : 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
