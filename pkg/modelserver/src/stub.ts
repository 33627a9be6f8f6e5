import { logNormalize } from "./logmath";
import { ModelMeta, ModelProvider, ProviderError } from "./provider";

// FNV-1a over a number stream; cheap, stable, good enough to fake logits.
function fnv(parts: Iterable<number>): number {
  let h = 0x811c9dc5;
  for (const x of parts) {
    h ^= (x + 0x9e3779b9) >>> 0;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function* chars(text: string): Iterable<number> {
  for (let i = 0; i < text.length; i++) yield text.charCodeAt(i);
}

/**
 * Weightless stand-in for a masked LM: logits are a keyed hash of the
 * whole input sequence, so outputs are deterministic and, like a real
 * MLM, sensitive to whatever occupies the queried slot.
 */
export class StubModel implements ModelProvider {
  constructor(private vocabSize = 16) {
    if (vocabSize < 2) throw new Error("stub needs at least two tokens");
  }

  meta(): ModelMeta {
    return {
      vocab_size: this.vocabSize,
      mask_token_id: this.vocabSize - 1,
      special_token_ids: [this.vocabSize - 1],
      model_name: `stub-${this.vocabSize}`,
    };
  }

  tokenize(text: string): number[] {
    const words = text.trim().split(/\s+/);
    return words.map((w) => {
      const canonical = /^w(\d+)$/.exec(w);
      if (canonical) {
        const id = Number(canonical[1]);
        if (id < this.vocabSize) return id;
      }
      return fnv(chars(w)) % (this.vocabSize - 1);
    });
  }

  detokenize(tokenIds: number[]): string {
    return tokenIds.map((i) => `w${i}`).join(" ");
  }

  async forward(tokenIds: number[]): Promise<number[][]> {
    if (tokenIds.length === 0) throw new ProviderError(400, "empty sequence");
    const rows: number[][] = [];
    for (let p = 0; p < tokenIds.length; p++) {
      const logits: number[] = [];
      for (let v = 0; v < this.vocabSize; v++) {
        const h = fnv([...tokenIds, p, v]);
        logits.push((h % 1000) / 250 - 2); // [-2, 2)
      }
      rows.push(logNormalize(logits));
    }
    return rows;
  }
}
