/** Word-to-subword alignment and pooling to word-level embeddings. */

export interface WordSpan {
  /** half-open subword range within the full id sequence */
  start: number;
  end: number;
}

export interface AlignedSentence {
  /** full id sequence: [cls, ...word pieces..., sep] */
  ids: number[];
  /** one span per word, indices into `ids`; specials are covered by none */
  spans: WordSpan[];
}

export class AlignmentError extends Error {}

export function buildAlignedSequence(
  wordPieces: number[][],
  clsId: number,
  sepId: number,
): AlignedSentence {
  const ids: number[] = [clsId];
  const spans: WordSpan[] = [];
  wordPieces.forEach((pieces, w) => {
    if (pieces.length === 0) {
      throw new AlignmentError(`word ${w} produced no subwords`);
    }
    spans.push({ start: ids.length, end: ids.length + pieces.length });
    ids.push(...pieces);
  });
  ids.push(sepId);
  return { ids, spans };
}

/**
 * Pool [L+1][S][d] subword states to a flattened (L+1, T, d) tensor.
 * Positions outside every span (the sentence delimiters) are dropped.
 */
export function poolToWords(
  hidden: Float32Array[][],
  spans: WordSpan[],
  rule: 'mean' | 'first',
): Float32Array {
  const slices = hidden.length;
  const seqLen = hidden[0].length;
  const dim = hidden[0][0].length;
  let prevEnd = 0;
  for (const [w, span] of spans.entries()) {
    if (span.start >= span.end) throw new AlignmentError(`word ${w}: empty span`);
    if (span.start < prevEnd || span.end > seqLen) {
      throw new AlignmentError(`word ${w}: span [${span.start}, ${span.end}) out of order or out of range`);
    }
    prevEnd = span.end;
  }
  const out = new Float32Array(slices * spans.length * dim);
  for (let layer = 0; layer < slices; layer++) {
    for (let w = 0; w < spans.length; w++) {
      const { start, end } = spans[w];
      const base = (layer * spans.length + w) * dim;
      if (rule === 'first') {
        out.set(hidden[layer][start], base);
        continue;
      }
      const count = end - start;
      for (let d = 0; d < dim; d++) {
        let acc = 0;
        for (let s = start; s < end; s++) acc += hidden[layer][s][d];
        out[base + d] = acc / count;
      }
    }
  }
  return out;
}
