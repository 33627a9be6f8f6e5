import { readFile } from "fs/promises";
import { z } from "zod";
import { logNormalize, logsumexp } from "./logmath";
import { ModelMeta, ModelProvider, ProviderError } from "./provider";

const MASK_TOKEN = "[MASK]";

const tableSchema = z.object({
  model_name: z.string().min(1),
  tokens: z
    .array(z.string().min(1).regex(/^\S+$/))
    .min(1)
    .refine((t) => new Set(t).size === t.length, "duplicate tokens")
    .refine((t) => !t.includes(MASK_TOKEN), "mask token is implicit"),
  length: z.number().int().min(1),
  logp: z.array(z.number().finite()),
  mask_mass: z.number().gt(0).lt(0.5).default(1e-4),
});

export type TableConfig = z.infer<typeof tableSchema>;

/**
 * Ideal masked LM for a dense log-joint over fixed-length sequences.
 *
 * Conditionals marginalize every masked position and never condition on
 * the queried slot's occupant; the mask token carries a constant mass so
 * the emitted distribution covers the full vocabulary.  An engine
 * pointed at this provider reproduces its local exact backend.
 */
export class TableModel implements ModelProvider {
  private alphabet: number;
  private strides: number[];
  private index: Map<string, number>;

  constructor(private cfg: TableConfig) {
    this.alphabet = cfg.tokens.length;
    if (cfg.logp.length !== this.alphabet ** cfg.length) {
      throw new Error(
        `table needs ${this.alphabet ** cfg.length} entries, got ${cfg.logp.length}`
      );
    }
    const drift = logsumexp(cfg.logp);
    if (Math.abs(drift) > 1e-3) {
      throw new Error(`table mass off by ${drift.toExponential(2)}`);
    }
    this.cfg = { ...cfg, logp: cfg.logp.map((v) => v - drift) };
    this.strides = [];
    for (let p = 0; p < cfg.length; p++) {
      this.strides.push(this.alphabet ** (cfg.length - 1 - p));
    }
    this.index = new Map(cfg.tokens.map((t, i) => [t, i]));
  }

  private maskId(): number {
    return this.alphabet;
  }

  meta(): ModelMeta {
    return {
      vocab_size: this.alphabet + 1,
      mask_token_id: this.maskId(),
      special_token_ids: [this.maskId()],
      model_name: this.cfg.model_name,
    };
  }

  tokenize(text: string): number[] {
    return text
      .trim()
      .split(/\s+/)
      .map((word) => {
        if (word === MASK_TOKEN) return this.maskId();
        const id = this.index.get(word);
        if (id === undefined) throw new ProviderError(400, `unknown token ${JSON.stringify(word)}`);
        return id;
      });
  }

  detokenize(tokenIds: number[]): string {
    return tokenIds
      .map((i) => {
        if (i === this.maskId()) return MASK_TOKEN;
        if (i < 0 || i >= this.alphabet) throw new ProviderError(400, `token id ${i} out of range`);
        return this.cfg.tokens[i];
      })
      .join(" ");
  }

  async forward(tokenIds: number[]): Promise<number[][]> {
    if (tokenIds.length !== this.cfg.length) {
      throw new ProviderError(400, `sequence length must be ${this.cfg.length}`);
    }
    const rows: number[][] = [];
    for (let p = 0; p < this.cfg.length; p++) rows.push(this.conditional(tokenIds, p));
    return rows;
  }

  private conditional(seq: number[], position: number): number[] {
    const free: number[] = [];
    let base = 0;
    for (let q = 0; q < this.cfg.length; q++) {
      if (q === position || seq[q] === this.maskId()) free.push(q);
      else base += seq[q] * this.strides[q];
    }
    // bucket every consistent joint cell by the candidate at `position`
    const buckets: number[][] = Array.from({ length: this.alphabet }, () => []);
    const digits = new Array(free.length).fill(0);
    const slot = free.indexOf(position);
    for (;;) {
      let idx = base;
      for (let d = 0; d < free.length; d++) idx += digits[d] * this.strides[free[d]];
      buckets[digits[slot]].push(this.cfg.logp[idx]);
      let d = free.length - 1;
      while (d >= 0 && digits[d] === this.alphabet - 1) digits[d--] = 0;
      if (d < 0) break;
      digits[d]++;
    }
    const content = logNormalize(buckets.map(logsumexp));
    const lam = this.cfg.mask_mass;
    const row = content.map((v) => v + Math.log1p(-lam));
    row.push(Math.log(lam));
    return row;
  }
}

export async function loadTable(path: string): Promise<TableModel> {
  const raw = JSON.parse(await readFile(path, "utf-8"));
  return new TableModel(tableSchema.parse(raw));
}
