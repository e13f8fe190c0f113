/**
 * Pseudo-log-likelihood scoring: mask each token position in turn and sum
 * the log-probabilities of the true tokens. Multi-subword words are masked
 * per subword by default; `wholeWord` masks all of a word's subwords at
 * once while still summing per position.
 */

import type { MaskedLM } from './backend.js';
import { buildAlignedSequence } from './align.js';

export interface PLLOptions {
  wholeWord?: boolean;
}

export async function sentencePLL(
  backend: MaskedLM,
  words: string[],
  options: PLLOptions = {},
): Promise<number> {
  const wordPieces: number[][] = [];
  for (const word of words) {
    const pieces = await backend.tokenizeWord(word);
    if (pieces.length === 0) {
      throw new Error(`word ${JSON.stringify(word)} not alignable to subwords`);
    }
    wordPieces.push(pieces);
  }
  const { ids, spans } = buildAlignedSequence(wordPieces, backend.clsId, backend.sepId);

  let total = 0;
  for (const span of spans) {
    if (options.wholeWord) {
      const masked = ids.slice();
      for (let p = span.start; p < span.end; p++) masked[p] = backend.maskId;
      for (let p = span.start; p < span.end; p++) {
        total += await backend.logProbAt(masked, p, ids[p]);
      }
    } else {
      for (let p = span.start; p < span.end; p++) {
        const masked = ids.slice();
        masked[p] = backend.maskId;
        total += await backend.logProbAt(masked, p, ids[p]);
      }
    }
  }
  return total;
}

export interface AgreementItem {
  id: string;
  grammatical: string;
  ungrammatical: string;
  pll_grammatical: number | null;
  pll_ungrammatical: number | null;
  [extra: string]: unknown;
}

export interface ItemsManifest {
  schema_version: number;
  items: AgreementItem[];
  [extra: string]: unknown;
}

/** Fill both PLL fields of every item with one tokenization policy. */
export async function scoreItems(
  backend: MaskedLM,
  manifest: ItemsManifest,
  options: PLLOptions = {},
): Promise<ItemsManifest> {
  for (const item of manifest.items) {
    item.pll_grammatical = await sentencePLL(backend, item.grammatical.split(' '), options);
    item.pll_ungrammatical = await sentencePLL(backend, item.ungrammatical.split(' '), options);
  }
  return manifest;
}
