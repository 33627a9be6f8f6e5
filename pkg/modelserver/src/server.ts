import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { createApp } from "./app";
import { ModelProvider } from "./provider";
import { StubModel } from "./stub";
import { loadTable } from "./table";

// --model accepts: stub, stub:<vocabSize>, table:<path/to/config.json>
async function buildProvider(spec: string): Promise<ModelProvider> {
  if (spec === "stub") return new StubModel();
  const stubSized = /^stub:(\d+)$/.exec(spec);
  if (stubSized) return new StubModel(Number(stubSized[1]));
  const table = /^table:(.+)$/.exec(spec);
  if (table) return loadTable(table[1]);
  throw new Error(`unknown model spec ${JSON.stringify(spec)}`);
}

async function main() {
  const argv = await yargs(hideBin(process.argv))
    .option("model", { type: "string", default: "stub", describe: "stub | stub:<vocab> | table:<path>" })
    .option("port", { type: "number", default: 8732 })
    .option("max-batch", { type: "number", default: 64 })
    .strict()
    .parse();

  if (argv["max-batch"] < 1) throw new Error("--max-batch must be at least 1");

  const loading = buildProvider(argv.model);
  loading.catch((err) => {
    console.error(`model load failed: ${err.message}`);
    process.exit(1);
  });

  const app = createApp(loading, { maxBatch: argv["max-batch"] });
  const server = app.listen(argv.port, () => {
    console.log(`listening on :${argv.port} (model ${argv.model}, max batch ${argv["max-batch"]})`);
  });
  const provider = await loading;
  console.log(`ready: ${provider.meta().model_name}`);

  for (const signal of ["SIGINT", "SIGTERM"] as const) {
    process.on(signal, () => server.close(() => process.exit(0)));
  }
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
