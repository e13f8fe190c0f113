/**
 * Masked-LM backend contract.
 *
 * A backend exposes word-level subword tokenization (no special tokens),
 * per-layer hidden states for a full id sequence, and the log-probability
 * of a target id at one masked position. The bundled implementation rides
 * on @xenova/transformers when it is installed; tests and dry runs use the
 * deterministic mock backend instead.
 */

export interface MaskedLM {
  readonly modelName: string;
  /** transformer layer count L; hidden-state sets = L+1 including layer 0 */
  readonly numLayers: number;
  readonly hiddenDim: number;
  readonly clsId: number;
  readonly sepId: number;
  readonly maskId: number;
  /** subword ids for one word, without special tokens; [] = unalignable */
  tokenizeWord(word: string): Promise<number[]>;
  /** hidden states, shape [L+1][sequence][hiddenDim] */
  hiddenStates(ids: number[]): Promise<Float32Array[][]>;
  /** log P(target at `position`) when ids[position] is already masked */
  logProbAt(ids: number[], position: number, targetId: number): Promise<number>;
}

/** Forward pass in evaluation mode via transformers.js (models are fetched
 * from the local cache or hub; precision of the dump is float32). Hidden
 * states require an ONNX export that emits them; the loader fails with an
 * actionable message otherwise, while PLL scoring only needs logits. */
export async function loadTransformersBackend(modelName: string): Promise<MaskedLM> {
  let lib: any;
  try {
    lib = await import('@xenova/transformers');
  } catch {
    throw new Error(
      '@xenova/transformers is not installed; install it or run with --mock',
    );
  }
  const tokenizer = await lib.AutoTokenizer.from_pretrained(modelName);
  const model = await lib.AutoModelForMaskedLM.from_pretrained(modelName);
  const config = model.config as any;
  const numLayers = config.num_hidden_layers ?? config.n_layer;
  const hiddenDim = config.hidden_size ?? config.n_embd;
  const clsId = tokenizer.cls_token_id ?? tokenizer.bos_token_id;
  const sepId = tokenizer.sep_token_id ?? tokenizer.eos_token_id;
  const maskId = tokenizer.mask_token_id;
  if (maskId == null) {
    throw new Error(`${modelName} has no mask token; PLL scoring needs a masked LM`);
  }

  const logSoftmaxAt = (logits: Float32Array, targetId: number): number => {
    let max = -Infinity;
    for (let i = 0; i < logits.length; i++) if (logits[i] > max) max = logits[i];
    let sum = 0;
    for (let i = 0; i < logits.length; i++) sum += Math.exp(logits[i] - max);
    return logits[targetId] - max - Math.log(sum);
  };

  const run = async (ids: number[]) => {
    const input_ids = new lib.Tensor('int64', BigInt64Array.from(ids.map(BigInt)), [1, ids.length]);
    const attention_mask = new lib.Tensor('int64', BigInt64Array.from(ids.map(() => 1n)), [1, ids.length]);
    return model({ input_ids, attention_mask });
  };

  return {
    modelName,
    numLayers,
    hiddenDim,
    clsId,
    sepId,
    maskId,
    async tokenizeWord(word: string): Promise<number[]> {
      const encoded = tokenizer(word, { add_special_tokens: false });
      const ids = Array.from(encoded.input_ids.data as BigInt64Array, Number);
      return ids;
    },
    async hiddenStates(ids: number[]): Promise<Float32Array[][]> {
      const output: any = await run(ids);
      const states = output.hidden_states;
      if (!states) {
        throw new Error(
          `${modelName}: the ONNX export does not emit hidden_states; ` +
            're-export the model with output_hidden_states=true to extract embeddings',
        );
      }
      const layers: Float32Array[][] = [];
      for (const tensor of states) {
        const [, seq, dim] = tensor.dims;
        const layer: Float32Array[] = [];
        for (let s = 0; s < seq; s++) {
          layer.push(Float32Array.from(tensor.data.slice(s * dim, (s + 1) * dim)));
        }
        layers.push(layer);
      }
      return layers;
    },
    async logProbAt(ids: number[], position: number, targetId: number): Promise<number> {
      const output: any = await run(ids);
      const [, , vocab] = output.logits.dims;
      const row = Float32Array.from(output.logits.data.slice(position * vocab, (position + 1) * vocab));
      return logSoftmaxAt(row, targetId);
    },
  };
}
