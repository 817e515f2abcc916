/**
 * Deterministic patch-feature extractor.
 *
 * Stands in for a pretrained vision backbone: weights are synthesized
 * from the model name by a fixed PRNG, so the same name always yields
 * the same features and no network or weight files are needed.  Each
 * k x k patch is projected through a tanh layer and tokens exchange
 * information with their 3 x 3 grid neighborhood; crops are
 * area-resampled to a fixed token grid and mean-pooled.  Outputs are
 * not L2-normalized; the consumer owns normalization.
 */

import { GrayImage } from './png';
import { hashString, mulberry32, uniformFill } from './rng';

export interface ModelSpec {
  patchSize: number;
  dim: number;
}

export const MODELS: Record<string, ModelSpec> = {
  'vit-s-8': { patchSize: 8, dim: 384 },
  'vit-s-16': { patchSize: 16, dim: 384 },
};

export const DEFAULT_MODEL = 'vit-s-8';

const ACTIVATION_GAIN = 3.0;
const MIX_WEIGHT = 0.5;
const CROP_TOKENS = 4; // crops resample to a CROP_TOKENS^2 token grid

export interface Plane {
  height: number;
  width: number;
  data: Float64Array;
}

export interface GridFeatures {
  nH: number;
  nW: number;
  offY: number;
  offX: number;
  dim: number;
  /** Row-major token features, token t at [t * dim, (t + 1) * dim). */
  rows: Float64Array;
}

/** Averaging resample of a plane onto an outH x outW grid (exact overlaps). */
export function areaResample(src: Plane, outH: number, outW: number): Plane {
  const mid = resampleAxis(src.data, src.height, src.width, outH, true);
  const out = resampleAxis(mid, outH, src.width, outW, false);
  return { height: outH, width: outW, data: out };
}

function resampleAxis(
  data: Float64Array,
  h: number,
  w: number,
  outN: number,
  alongRows: boolean,
): Float64Array {
  const nSrc = alongRows ? h : w;
  const step = nSrc / outN;
  const outH = alongRows ? outN : h;
  const outW = alongRows ? w : outN;
  const out = new Float64Array(outH * outW);
  for (let i = 0; i < outN; i++) {
    const lo = i * step;
    const hi = (i + 1) * step;
    const j0 = Math.floor(lo);
    const j1 = Math.min(Math.ceil(hi), nSrc);
    for (let j = j0; j < j1; j++) {
      const overlap = Math.min(hi, j + 1) - Math.max(lo, j);
      if (overlap <= 0) continue;
      const weight = overlap / step;
      if (alongRows) {
        for (let x = 0; x < w; x++) out[i * w + x] += weight * data[j * w + x];
      } else {
        for (let y = 0; y < h; y++) out[y * outN + i] += weight * data[y * w + j];
      }
    }
  }
  return out;
}

function mixTokens(rows: Float64Array, nH: number, nW: number, dim: number): Float64Array {
  const out = new Float64Array(rows.length);
  const sum = new Float64Array(dim);
  for (let y = 0; y < nH; y++) {
    for (let x = 0; x < nW; x++) {
      sum.fill(0);
      let count = 0;
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          const ny = y + dy;
          const nx = x + dx;
          if (ny < 0 || ny >= nH || nx < 0 || nx >= nW) continue;
          const base = (ny * nW + nx) * dim;
          for (let c = 0; c < dim; c++) sum[c] += rows[base + c];
          count++;
        }
      }
      const base = (y * nW + x) * dim;
      for (let c = 0; c < dim; c++) {
        out[base + c] = rows[base + c] + (MIX_WEIGHT * sum[c]) / count;
      }
    }
  }
  return out;
}

export class Extractor {
  readonly name: string;
  readonly patchSize: number;
  readonly dim: number;
  private readonly weights: Float64Array; // dim x k^2
  private readonly bias: Float64Array;

  constructor(name: string = DEFAULT_MODEL, patchSize?: number) {
    const spec = MODELS[name];
    if (spec === undefined) {
      const known = Object.keys(MODELS).join(', ');
      throw new Error(`unknown model "${name}" (no weights available); known models: ${known}`);
    }
    if (patchSize !== undefined && patchSize !== spec.patchSize) {
      throw new Error(
        `model "${name}" has patch size ${spec.patchSize}, but --patch-size ${patchSize} was requested`,
      );
    }
    this.name = name;
    this.patchSize = spec.patchSize;
    this.dim = spec.dim;
    const k2 = spec.patchSize * spec.patchSize;
    const rng = mulberry32(hashString(`featx/${name}`));
    const bound = Math.sqrt(6 / (k2 + spec.dim));
    this.weights = uniformFill(rng, spec.dim * k2, bound);
    this.bias = uniformFill(rng, spec.dim, 0.1);
  }

  private projectPatch(pixels: Float64Array, out: Float64Array, outBase: number): void {
    const k2 = this.patchSize * this.patchSize;
    for (let c = 0; c < this.dim; c++) {
      let acc = this.bias[c];
      const wBase = c * k2;
      for (let i = 0; i < k2; i++) {
        acc += this.weights[wBase + i] * pixels[i];
      }
      out[outBase + c] = Math.tanh(ACTIVATION_GAIN * acc);
    }
  }

  /**
   * Dense features for every patch of the centered k-grid of an image.
   * Feature row r corresponds to patch (r // nW, r % nW).
   */
  embedGrid(img: GrayImage): GridFeatures {
    const k = this.patchSize;
    const nH = Math.floor(img.height / k);
    const nW = Math.floor(img.width / k);
    if (nH === 0 || nW === 0) {
      throw new Error(`image ${img.height}x${img.width} is smaller than one ${k}x${k} patch`);
    }
    const offY = Math.floor((img.height - nH * k) / 2);
    const offX = Math.floor((img.width - nW * k) / 2);
    const rows = new Float64Array(nH * nW * this.dim);
    const pixels = new Float64Array(k * k);
    for (let gy = 0; gy < nH; gy++) {
      for (let gx = 0; gx < nW; gx++) {
        for (let py = 0; py < k; py++) {
          const srcRow = (offY + gy * k + py) * img.width + offX + gx * k;
          for (let px = 0; px < k; px++) {
            pixels[py * k + px] = img.data[srcRow + px];
          }
        }
        this.projectPatch(pixels, rows, (gy * nW + gx) * this.dim);
      }
    }
    return { nH, nW, offY, offX, dim: this.dim, rows: mixTokens(rows, nH, nW, this.dim) };
  }

  /** One pooled embedding for an arbitrary-size crop (or mask render). */
  embedCrop(crop: Plane): Float64Array {
    if (crop.height < 1 || crop.width < 1) {
      throw new Error(`empty crop ${crop.height}x${crop.width}`);
    }
    const k = this.patchSize;
    const side = CROP_TOKENS * k;
    const resized = areaResample(crop, side, side);
    const rows = new Float64Array(CROP_TOKENS * CROP_TOKENS * this.dim);
    const pixels = new Float64Array(k * k);
    for (let gy = 0; gy < CROP_TOKENS; gy++) {
      for (let gx = 0; gx < CROP_TOKENS; gx++) {
        for (let py = 0; py < k; py++) {
          const srcRow = (gy * k + py) * side + gx * k;
          for (let px = 0; px < k; px++) {
            pixels[py * k + px] = resized.data[srcRow + px];
          }
        }
        this.projectPatch(pixels, rows, (gy * CROP_TOKENS + gx) * this.dim);
      }
    }
    const mixed = mixTokens(rows, CROP_TOKENS, CROP_TOKENS, this.dim);
    const pooled = new Float64Array(this.dim);
    const nTokens = CROP_TOKENS * CROP_TOKENS;
    for (let t = 0; t < nTokens; t++) {
      for (let c = 0; c < this.dim; c++) {
        pooled[c] += mixed[t * this.dim + c];
      }
    }
    for (let c = 0; c < this.dim; c++) pooled[c] /= nTokens;
    return pooled;
  }
}
