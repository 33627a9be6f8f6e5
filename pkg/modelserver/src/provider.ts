export interface ModelMeta {
  vocab_size: number;
  mask_token_id: number;
  special_token_ids: number[];
  model_name: string;
}

export interface ModelProvider {
  meta(): ModelMeta;
  tokenize(text: string): number[];
  detokenize(tokenIds: number[]): string;
  /**
   * Log-softmax over the full vocabulary at every position, one pass.
   * The sequence is scored exactly as given: the caller decides what
   * occupies the queried slot (mask, pivot, or content).
   */
  forward(tokenIds: number[]): Promise<number[][]>;
}

/** Provider-raised error carrying the HTTP status the route should emit. */
export class ProviderError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}
