/**
 * Embedding-bundle writer. Byte layout (integers little-endian):
 *
 *   offset  size  content
 *   0       8     magic "DPROBE01"
 *   8       4     u32 manifest length m
 *   12      m     manifest JSON (UTF-8)
 *   12+m    ...   payload: per-sentence float32 tensors of shape
 *                 (num_layers+1, token_count, hidden_dim), C-order,
 *                 concatenated in manifest index order
 *
 * Manifest offsets are relative to the payload start.
 */

import { promises as fs } from 'node:fs';
import { rename } from 'node:fs/promises';

export const MAGIC = 'DPROBE01';

export interface SentenceRecord {
  id: string;
  token_count: number;
  offset: number;
}

export interface BundleMeta {
  model_name: string;
  num_layers: number; // L; stored layer slices = L+1
  hidden_dim: number;
  pooling: 'mean' | 'first';
}

export interface BundleManifest extends BundleMeta {
  dtype: 'float32';
  byte_order: 'little';
  sentences: SentenceRecord[];
}

export interface SentenceTensor {
  id: string;
  tokenCount: number;
  /** flattened (L+1, T, d) values, C-order */
  data: Float32Array;
}

export class BundleFormatError extends Error {}

function float32ToLEBytes(values: Float32Array): Buffer {
  const buf = Buffer.allocUnsafe(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], i * 4);
  }
  return buf;
}

export function buildBundleBytes(meta: BundleMeta, sentences: SentenceTensor[]): Buffer {
  if (meta.num_layers < 1 || meta.hidden_dim < 1) {
    throw new BundleFormatError(
      `num_layers (${meta.num_layers}) and hidden_dim (${meta.hidden_dim}) must be >= 1`,
    );
  }
  const slices = meta.num_layers + 1;
  const records: SentenceRecord[] = [];
  const chunks: Buffer[] = [];
  let offset = 0;
  for (const sent of sentences) {
    const expected = slices * sent.tokenCount * meta.hidden_dim;
    if (sent.data.length !== expected) {
      throw new BundleFormatError(
        `${sent.id}: tensor has ${sent.data.length} values, expected ` +
          `(L+1=${slices}) * (T=${sent.tokenCount}) * (d=${meta.hidden_dim}) = ${expected}`,
      );
    }
    for (let i = 0; i < sent.data.length; i++) {
      if (!Number.isFinite(sent.data[i])) {
        throw new BundleFormatError(`${sent.id}: non-finite value at index ${i}`);
      }
    }
    records.push({ id: sent.id, token_count: sent.tokenCount, offset });
    const bytes = float32ToLEBytes(sent.data);
    chunks.push(bytes);
    offset += bytes.length;
  }
  const manifest: BundleManifest = {
    model_name: meta.model_name,
    num_layers: meta.num_layers,
    hidden_dim: meta.hidden_dim,
    dtype: 'float32',
    byte_order: 'little',
    pooling: meta.pooling,
    sentences: records,
  };
  const manifestBytes = Buffer.from(JSON.stringify(manifest), 'utf-8');
  const header = Buffer.allocUnsafe(12);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(manifestBytes.length, 8);
  return Buffer.concat([header, manifestBytes, ...chunks]);
}

export async function writeBundle(
  path: string,
  meta: BundleMeta,
  sentences: SentenceTensor[],
): Promise<BundleManifest> {
  const bytes = buildBundleBytes(meta, sentences);
  const tmp = `${path}.tmp`;
  await fs.writeFile(tmp, bytes);
  await rename(tmp, path);
  const manifestLen = bytes.readUInt32LE(8);
  return JSON.parse(bytes.subarray(12, 12 + manifestLen).toString('utf-8'));
}

/** Header-only read, used by tests and `info`-style tooling. */
export async function readManifest(path: string): Promise<BundleManifest> {
  const raw = await fs.readFile(path);
  const magic = raw.subarray(0, 8).toString('ascii');
  if (magic !== MAGIC) {
    throw new BundleFormatError(`bad magic ${JSON.stringify(magic)}; expected ${MAGIC}`);
  }
  const manifestLen = raw.readUInt32LE(8);
  return JSON.parse(raw.subarray(12, 12 + manifestLen).toString('utf-8'));
}
