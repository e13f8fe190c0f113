/** Hidden-state extraction: CoNLL-U sentences to a word-level bundle. */

import type { MaskedLM } from './backend.js';
import { buildAlignedSequence, poolToWords } from './align.js';
import { writeBundle, type BundleManifest, type SentenceTensor } from './bundle.js';
import type { ConlluSentence } from './conllu.js';

export interface ExtractOptions {
  pooling?: 'mean' | 'first';
  log?: (message: string) => void;
}

export interface ExtractResult {
  manifest: BundleManifest;
  written: number;
  skipped: { id: string; reason: string }[];
}

export async function extractEmbeddings(
  backend: MaskedLM,
  sentences: ConlluSentence[],
  outPath: string,
  options: ExtractOptions = {},
): Promise<ExtractResult> {
  const pooling = options.pooling ?? 'mean';
  const log = options.log ?? (() => {});
  const tensors: SentenceTensor[] = [];
  const skipped: { id: string; reason: string }[] = [];

  for (const sent of sentences) {
    const wordPieces: number[][] = [];
    let unalignable: string | null = null;
    for (const form of sent.forms) {
      const pieces = await backend.tokenizeWord(form);
      if (pieces.length === 0) {
        unalignable = form;
        break;
      }
      wordPieces.push(pieces);
    }
    if (unalignable !== null) {
      skipped.push({ id: sent.id, reason: `word ${JSON.stringify(unalignable)} not alignable to subwords` });
      log(`skipping ${sent.id}: ${JSON.stringify(unalignable)} has no subwords`);
      continue;
    }
    const { ids, spans } = buildAlignedSequence(wordPieces, backend.clsId, backend.sepId);
    const hidden = await backend.hiddenStates(ids);
    if (hidden.length !== backend.numLayers + 1) {
      throw new Error(
        `${sent.id}: backend returned ${hidden.length} layer slices, expected ${backend.numLayers + 1}`,
      );
    }
    tensors.push({
      id: sent.id,
      tokenCount: sent.forms.length,
      data: poolToWords(hidden, spans, pooling),
    });
  }

  const manifest = await writeBundle(
    outPath,
    {
      model_name: backend.modelName,
      num_layers: backend.numLayers,
      hidden_dim: backend.hiddenDim,
      pooling,
    },
    tensors,
  );
  return { manifest, written: tensors.length, skipped };
}
