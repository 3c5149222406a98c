#!/usr/bin/env node
/**
 * pdf-adapter --input <pdf> --out <dir> [--no-images]
 *
 * Writes <dir>/<doc_id>.json plus <dir>/images/*. Exit 0 on success,
 * 1 on parse error.
 */

import { parsePdf } from "./adapter.js";
import { ParseError, type AdapterConfig } from "./types.js";

function usage(): never {
  console.error("usage: pdf-adapter --input <pdf> --out <dir> [--no-images]");
  process.exit(1);
}

function parseArgs(argv: string[]): AdapterConfig {
  let inputPath: string | undefined;
  let outputDir: string | undefined;
  let extractImages = true;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--input") inputPath = argv[++i];
    else if (arg === "--out") outputDir = argv[++i];
    else if (arg === "--no-images") extractImages = false;
    else usage();
  }
  if (!inputPath || !outputDir) usage();
  return { inputPath, outputDir, extractImages };
}

async function main(): Promise<void> {
  const config = parseArgs(process.argv.slice(2));
  try {
    const result = await parsePdf(config);
    console.log(result.documentPath);
  } catch (err) {
    if (err instanceof ParseError) {
      console.error(`error: ${err.message}`);
      process.exit(1);
    }
    throw err;
  }
}

main();
