/** Raster input: PNG files decoded to grayscale intensities or label maps. */

import { readFileSync } from 'fs';
import { PNG } from 'pngjs';

export interface GrayImage {
  height: number;
  width: number;
  /** Row-major intensities in [0, 1]. */
  data: Float64Array;
}

export interface LabelMap {
  height: number;
  width: number;
  /** Row-major label ids taken from the red channel. */
  labels: Int32Array;
}

function decode(path: string): PNG {
  try {
    return PNG.sync.read(readFileSync(path));
  } catch (err) {
    throw new Error(`cannot read PNG ${path}: ${(err as Error).message}`);
  }
}

/** Load a PNG as gray intensities: channels are averaged like the core does. */
export function readGray(path: string): GrayImage {
  const png = decode(path);
  const { width, height, data } = png;
  const out = new Float64Array(width * height);
  for (let i = 0; i < width * height; i++) {
    const r = data[4 * i];
    const g = data[4 * i + 1];
    const b = data[4 * i + 2];
    out[i] = (r + g + b) / 3 / 255;
  }
  return { height, width, data: out };
}

/** Load an 8-bit label mask PNG (single-channel, label ids as pixel values). */
export function readLabels(path: string): LabelMap {
  const png = decode(path);
  const { width, height, data } = png;
  const labels = new Int32Array(width * height);
  for (let i = 0; i < width * height; i++) {
    labels[i] = data[4 * i];
  }
  return { height, width, labels };
}
