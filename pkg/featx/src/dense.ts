/** Dense per-patch feature dumps, one DST file per manifest image. */

import { mkdirSync } from 'fs';
import * as path from 'path';

import { writeTensor } from './dst';
import { ManifestEntry } from './manifest';
import { Extractor } from './model';
import { readGray } from './png';

export interface DenseResult {
  imageId: string;
  outPath: string;
  nH: number;
  nW: number;
  dim: number;
}

export function extractDense(
  entries: ManifestEntry[],
  extractor: Extractor,
  outDir: string,
  warn: (msg: string) => void = (msg) => console.warn(msg),
): DenseResult[] {
  mkdirSync(outDir, { recursive: true });
  const results: DenseResult[] = [];
  for (const entry of entries) {
    const img = readGray(entry.imagePath);
    const k = extractor.patchSize;
    if (img.height % k !== 0 || img.width % k !== 0) {
      warn(
        `${entry.imageId}: ${img.height}x${img.width} is not divisible by ` +
          `patch size ${k}; center-cropping to the largest covered grid`,
      );
    }
    const grid = extractor.embedGrid(img);
    const outPath = path.join(outDir, `${entry.imageId}.dst`);
    writeTensor([grid.nH * grid.nW, grid.dim], grid.rows, outPath);
    results.push({ imageId: entry.imageId, outPath, nH: grid.nH, nW: grid.nW, dim: grid.dim });
  }
  return results;
}
