/**
 * DST tensor files: the interchange format the core pipeline reads.
 *
 * Layout, all little-endian:
 *   4 magic bytes "DST1"
 *   1 byte unsigned tensor rank
 *   rank x u32 dimension sizes
 *   float32 payload in row-major order
 *
 * Payloads must be finite; zero-sized dimensions are rejected.
 */

import { readFileSync, renameSync, writeFileSync } from 'fs';

export const DST_MAGIC = 'DST1';

const MAX_RANK = 8;
const MAX_ELEMENTS = 2 ** 32;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export class DstFormatError extends Error {}

function checkDims(dims: number[], where: string): number {
  if (dims.length < 1 || dims.length > MAX_RANK) {
    throw new DstFormatError(`${where}: unsupported tensor rank ${dims.length}`);
  }
  let elements = 1;
  for (const d of dims) {
    if (!Number.isInteger(d) || d <= 0) {
      throw new DstFormatError(`${where}: bad dimension size ${d}`);
    }
    elements *= d;
  }
  if (elements > MAX_ELEMENTS) {
    throw new DstFormatError(`${where}: ${elements} elements exceed the supported capacity`);
  }
  return elements;
}

export function encodeTensor(dims: number[], values: ArrayLike<number>): Buffer {
  const elements = checkDims(dims, '<encode>');
  if (values.length !== elements) {
    throw new DstFormatError(
      `<encode>: ${values.length} values do not fill dims [${dims.join(', ')}]`,
    );
  }
  const buf = Buffer.alloc(5 + 4 * dims.length + 4 * elements);
  buf.write(DST_MAGIC, 0, 'ascii');
  buf.writeUInt8(dims.length, 4);
  dims.forEach((d, i) => buf.writeUInt32LE(d, 5 + 4 * i));
  const payloadStart = 5 + 4 * dims.length;
  for (let i = 0; i < elements; i++) {
    const v = values[i];
    if (!Number.isFinite(v)) {
      throw new DstFormatError(`<encode>: non-finite value at index ${i}`);
    }
    buf.writeFloatLE(v, payloadStart + 4 * i);
  }
  return buf;
}

/** Write a tensor atomically: a temp file in the same directory, then rename. */
export function writeTensor(dims: number[], values: ArrayLike<number>, path: string): void {
  const buf = encodeTensor(dims, values);
  const tmp = `${path}.tmp-${process.pid}`;
  writeFileSync(tmp, buf);
  renameSync(tmp, path);
}

export function decodeTensor(data: Buffer, where = '<buffer>'): Tensor {
  if (data.length < 5) {
    throw new DstFormatError(`${where}: file too short for a DST header`);
  }
  if (data.toString('ascii', 0, 4) !== DST_MAGIC) {
    throw new DstFormatError(
      `${where}: bad magic ${JSON.stringify(data.toString('latin1', 0, 4))}, expected "${DST_MAGIC}"`,
    );
  }
  const rank = data.readUInt8(4);
  if (rank < 1 || rank > MAX_RANK) {
    throw new DstFormatError(`${where}: unsupported tensor rank ${rank}`);
  }
  const headerLen = 5 + 4 * rank;
  if (data.length < headerLen) {
    throw new DstFormatError(`${where}: truncated dimension header`);
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(data.readUInt32LE(5 + 4 * i));
  }
  if (dims.some((d) => d === 0)) {
    throw new DstFormatError(`${where}: zero-sized dimension in header`);
  }
  const elements = checkDims(dims, where);
  if (data.length !== headerLen + 4 * elements) {
    throw new DstFormatError(
      `${where}: payload is ${data.length - headerLen} bytes, expected ${4 * elements}`,
    );
  }
  const out = new Float32Array(elements);
  for (let i = 0; i < elements; i++) {
    const v = data.readFloatLE(headerLen + 4 * i);
    if (!Number.isFinite(v)) {
      throw new DstFormatError(`${where}: payload contains non-finite values`);
    }
    out[i] = v;
  }
  return { dims, data: out };
}

export function readTensor(path: string): Tensor {
  return decodeTensor(readFileSync(path), path);
}
