/**
 * Deterministic stand-in backend for tests and pipeline dry runs: hashes
 * drive both "hidden states" and "logits", so outputs are stable across
 * runs and machines with no model download.
 */

import type { MaskedLM } from './backend.js';

const CLS = 101;
const SEP = 102;
const MASK = 103;

function hash32(...parts: number[]): number {
  let h = 2166136261 >>> 0;
  for (const p of parts) {
    h ^= p >>> 0;
    h = Math.imul(h, 16777619) >>> 0;
  }
  return h >>> 0;
}

function unit(h: number): number {
  return (h % 100000) / 100000; // [0, 1)
}

export interface MockOptions {
  numLayers?: number;
  hiddenDim?: number;
  /** words tokenizing to nothing, to exercise the skip path */
  unalignable?: string[];
}

export function mockBackend(options: MockOptions = {}): MaskedLM {
  const numLayers = options.numLayers ?? 2;
  const hiddenDim = options.hiddenDim ?? 8;
  const unalignable = new Set(options.unalignable ?? []);

  const pieceId = (word: string, index: number): number => {
    let code = 0;
    for (let i = 0; i < word.length; i++) code = (code * 31 + word.charCodeAt(i)) >>> 0;
    return 1000 + (hash32(code, index) % 20000);
  };

  return {
    modelName: 'mock-mlm',
    numLayers,
    hiddenDim,
    clsId: CLS,
    sepId: SEP,
    maskId: MASK,
    async tokenizeWord(word: string): Promise<number[]> {
      if (unalignable.has(word)) return [];
      // chunks of up to 4 characters, so longer words get several pieces
      const ids: number[] = [];
      for (let start = 0, k = 0; start < word.length; start += 4, k++) {
        ids.push(pieceId(word.slice(start, start + 4), k));
      }
      return ids.length ? ids : [pieceId(word, 0)];
    },
    async hiddenStates(ids: number[]): Promise<Float32Array[][]> {
      return Array.from({ length: numLayers + 1 }, (_, layer) =>
        ids.map((id, pos) => {
          const row = new Float32Array(hiddenDim);
          for (let d = 0; d < hiddenDim; d++) {
            row[d] = unit(hash32(layer, id, pos, d)) * 2 - 1;
          }
          return row;
        }),
      );
    },
    async logProbAt(ids: number[], position: number, targetId: number): Promise<number> {
      // depends on the masked context and the target only; deterministic
      const context = hash32(...ids, position);
      return -0.5 - 6 * unit(hash32(context, targetId));
    },
  };
}
