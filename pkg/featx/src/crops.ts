/**
 * Per-segment crop and mask-render embeddings for a pipeline run.
 *
 * Reads the run's step-I masks and preprocessed images, derives one
 * record per mask label in ascending order (the same order the core
 * builds its segment records in), and writes two DST files per image:
 * `<id>.dst` with one pooled crop embedding per segment and
 * `<id>_mask.dst` with the matching binary-silhouette embeddings.
 */

import { existsSync, mkdirSync } from 'fs';
import * as path from 'path';

import { readTensor, writeTensor } from './dst';
import { ManifestEntry } from './manifest';
import { Extractor, Plane } from './model';
import { readLabels } from './png';

const MIN_CROP_SIDE = 2;

export interface CropsResult {
  imageId: string;
  outPath: string;
  maskOutPath: string;
  nSegments: number;
}

interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

function bboxOf(labels: Int32Array, width: number, height: number, label: number): Box {
  let x0 = width;
  let x1 = -1;
  let y0 = height;
  let y1 = -1;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (labels[y * width + x] !== label) continue;
      if (x < x0) x0 = x;
      if (x > x1) x1 = x;
      if (y < y0) y0 = y;
      if (y > y1) y1 = y;
    }
  }
  return { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 };
}

function cropPlane(
  source: (y: number, x: number) => number,
  box: Box,
): Plane {
  const data = new Float64Array(box.h * box.w);
  for (let y = 0; y < box.h; y++) {
    for (let x = 0; x < box.w; x++) {
      data[y * box.w + x] = source(box.y + y, box.x + x);
    }
  }
  return { height: box.h, width: box.w, data };
}

/** Edge-replicate a plane up to the minimum side length. */
function padToMinimum(p: Plane, minSide: number): Plane {
  const h = Math.max(p.height, minSide);
  const w = Math.max(p.width, minSide);
  if (h === p.height && w === p.width) return p;
  const data = new Float64Array(h * w);
  for (let y = 0; y < h; y++) {
    const sy = Math.min(y, p.height - 1);
    for (let x = 0; x < w; x++) {
      data[y * w + x] = p.data[sy * p.width + Math.min(x, p.width - 1)];
    }
  }
  return { height: h, width: w, data };
}

export function extractCrops(
  entries: ManifestEntry[],
  extractor: Extractor,
  runDir: string,
  outDir: string,
  warn: (msg: string) => void = (msg) => console.warn(msg),
): CropsResult[] {
  mkdirSync(outDir, { recursive: true });
  const results: CropsResult[] = [];
  for (const entry of entries) {
    const maskPath = path.join(runDir, 'masks_step1', `${entry.imageId}.png`);
    const prePath = path.join(runDir, 'preproc', `${entry.imageId}.dst`);
    for (const [p, what] of [
      [maskPath, 'step-I mask'],
      [prePath, 'preprocessed image'],
    ] as const) {
      if (!existsSync(p)) {
        throw new Error(
          `${what} for ${entry.imageId} not found at ${p}; ` +
            `run the core pipeline's segment stage on ${runDir} first`,
        );
      }
    }
    const mask = readLabels(maskPath);
    const pre = readTensor(prePath);
    if (pre.dims.length !== 2 || pre.dims[0] !== mask.height || pre.dims[1] !== mask.width) {
      throw new Error(
        `${entry.imageId}: preprocessed image dims [${pre.dims.join(', ')}] ` +
          `do not match the ${mask.height}x${mask.width} step-I mask`,
      );
    }

    const present: number[] = [];
    const found = new Set<number>();
    for (const v of mask.labels) {
      if (!found.has(v)) {
        found.add(v);
        present.push(v);
      }
    }
    present.sort((a, b) => a - b);

    const cropRows: Float64Array[] = [];
    const maskRows: Float64Array[] = [];
    for (const label of present) {
      const box = bboxOf(mask.labels, mask.width, mask.height, label);
      let crop = cropPlane((y, x) => pre.data[y * mask.width + x], box);
      let silhouette = cropPlane(
        (y, x) => (mask.labels[y * mask.width + x] === label ? 1 : 0),
        box,
      );
      if (box.h < MIN_CROP_SIDE || box.w < MIN_CROP_SIDE) {
        warn(
          `${entry.imageId}: segment ${label} crop is ${box.h}x${box.w}; ` +
            `padding to the ${MIN_CROP_SIDE}x${MIN_CROP_SIDE} minimum input size`,
        );
        crop = padToMinimum(crop, MIN_CROP_SIDE);
        silhouette = padToMinimum(silhouette, MIN_CROP_SIDE);
      }
      cropRows.push(extractor.embedCrop(crop));
      maskRows.push(extractor.embedCrop(silhouette));
    }

    const dim = extractor.dim;
    const stack = (rows: Float64Array[]): Float64Array => {
      const out = new Float64Array(rows.length * dim);
      rows.forEach((row, i) => out.set(row, i * dim));
      return out;
    };
    const outPath = path.join(outDir, `${entry.imageId}.dst`);
    const maskOutPath = path.join(outDir, `${entry.imageId}_mask.dst`);
    writeTensor([present.length, dim], stack(cropRows), outPath);
    writeTensor([present.length, dim], stack(maskRows), maskOutPath);
    results.push({ imageId: entry.imageId, outPath, maskOutPath, nSegments: present.length });
  }
  return results;
}

/**
 * Locate the run directory for a crops extraction.  When `--out` points
 * at `<run>/crop_features` the run directory is implied; otherwise the
 * caller must pass `--run`.
 */
export function resolveRunDir(outDir: string, runFlag: string | undefined): string {
  if (runFlag !== undefined) return runFlag;
  const resolved = path.resolve(outDir);
  if (path.basename(resolved) === 'crop_features') {
    return path.dirname(resolved);
  }
  throw new Error(
    `cannot infer the run directory from --out ${outDir}; ` +
      `pass --run DIR or point --out at <run>/crop_features`,
  );
}
