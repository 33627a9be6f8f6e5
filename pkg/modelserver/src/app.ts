import express, { Express, NextFunction, Request, Response } from "express";
import { z } from "zod";
import { ModelProvider, ProviderError } from "./provider";

const tokenizeSchema = z.object({ text: z.string() });

const detokenizeSchema = z.object({
  token_ids: z.array(z.number().int().min(0)),
});

const conditionalsSchema = z.object({
  queries: z
    .array(
      z.object({
        token_ids: z.array(z.number().int().min(0)).min(1),
        position: z.number().int(),
      })
    )
    .min(1),
});

export interface AppOptions {
  maxBatch: number;
}

/**
 * The four-endpoint conditionals protocol over a provider.
 *
 * The provider arrives as a promise; every route answers 503 until it
 * resolves, then behavior is stable for the server's lifetime.
 */
export function createApp(loading: Promise<ModelProvider>, opts: AppOptions): Express {
  let provider: ModelProvider | null = null;
  loading.then((p) => {
    provider = p;
  });

  const app = express();
  app.use(express.json({ limit: "16mb" }));

  const ready = (res: Response): ModelProvider | null => {
    if (provider === null) {
      res.status(503).json({ error: "model is still loading" });
      return null;
    }
    return provider;
  };

  app.get("/v1/meta", (req, res) => {
    const model = ready(res);
    if (!model) return;
    res.json(model.meta());
  });

  app.post("/v1/tokenize", (req, res) => {
    const model = ready(res);
    if (!model) return;
    const parsed = tokenizeSchema.safeParse(req.body);
    if (!parsed.success) return void res.status(400).json({ error: "expected { text }" });
    if (parsed.data.text.trim() === "") {
      return void res.status(400).json({ error: "text must be nonempty" });
    }
    res.json({ token_ids: model.tokenize(parsed.data.text) });
  });

  app.post("/v1/detokenize", (req, res) => {
    const model = ready(res);
    if (!model) return;
    const parsed = detokenizeSchema.safeParse(req.body);
    if (!parsed.success) return void res.status(400).json({ error: "expected { token_ids }" });
    const limit = model.meta().vocab_size;
    if (parsed.data.token_ids.some((i) => i >= limit)) {
      return void res.status(400).json({ error: "token id out of range" });
    }
    res.json({ text: model.detokenize(parsed.data.token_ids) });
  });

  app.post("/v1/conditionals", async (req, res, next) => {
    const model = ready(res);
    if (!model) return;
    const parsed = conditionalsSchema.safeParse(req.body);
    if (!parsed.success) {
      return void res.status(400).json({ error: "expected { queries: [{ token_ids, position }] }" });
    }
    const queries = parsed.data.queries;
    if (queries.length > opts.maxBatch) {
      return void res.status(413).json({ error: `batch exceeds limit ${opts.maxBatch}` });
    }
    const limit = model.meta().vocab_size;
    for (const q of queries) {
      if (q.token_ids.some((i) => i >= limit)) {
        return void res.status(400).json({ error: "token id out of range" });
      }
      if (q.position < 0 || q.position >= q.token_ids.length) {
        return void res.status(422).json({ error: `position ${q.position} out of range` });
      }
    }
    try {
      // one pass per unique sequence; queries sharing a sequence share it
      const passes = new Map<string, number[][]>();
      for (const q of queries) {
        const key = q.token_ids.join(",");
        if (!passes.has(key)) passes.set(key, await model.forward(q.token_ids));
      }
      const results = queries.map((q) => ({
        logp: passes.get(q.token_ids.join(","))![q.position],
      }));
      res.json({ results });
    } catch (err) {
      next(err);
    }
  });

  app.use((err: Error, req: Request, res: Response, next: NextFunction) => {
    if (err instanceof ProviderError) {
      return void res.status(err.status).json({ error: err.message });
    }
    if (err && (err as { type?: string }).type === "entity.parse.failed") {
      return void res.status(400).json({ error: "body is not valid JSON" });
    }
    res.status(500).json({ error: err?.message ?? "internal error" });
  });

  return app;
}
