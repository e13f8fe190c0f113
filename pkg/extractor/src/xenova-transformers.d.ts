/**
 * Type declarations for @xenova/transformers (optional dependency).
 * Minimal surface for the masked-LM backend; the package is loaded
 * dynamically and may be absent at runtime.
 */
declare module '@xenova/transformers' {
  export const AutoTokenizer: {
    from_pretrained(model: string): Promise<any>;
  };
  export const AutoModelForMaskedLM: {
    from_pretrained(model: string): Promise<any>;
  };
  export class Tensor {
    constructor(type: string, data: unknown, dims: number[]);
    dims: number[];
    data: any;
  }
}
