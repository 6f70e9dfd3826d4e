#!/usr/bin/env node
// CLI: `feat-export export --images <glob> --layer <name> --out <dir>` plus
// `feat-export verify <path>`. Exit codes: 0 ok, 2 errors.

import fg from "fast-glob";

import { loadBackbone } from "./backbones.js";
import { verifyCoft } from "./coft.js";
import { exportGroup } from "./export.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new Error(`flag ${arg} needs a value`);
    }
    flags.set(arg.slice(2), value);
    i++;
  }
  return flags;
}

function usage(): void {
  console.error(
    [
      "usage:",
      "  feat-export export --images <glob> --layer <name> --out <dir>",
      "      [--backbone identity|tfjs] [--model <model.json>] [--size <n>]",
      "  feat-export verify <path.coft>",
    ].join("\n"),
  );
}

async function runExport(argv: string[]): Promise<number> {
  const flags = parseFlags(argv);
  const pattern = flags.get("images");
  const layer = flags.get("layer");
  const out = flags.get("out");
  if (!pattern || !layer || !out) {
    usage();
    return 2;
  }
  const images = await fg(pattern, { onlyFiles: true });
  if (images.length === 0) {
    console.error(`no images match ${pattern}`);
    return 2;
  }
  const backbone = await loadBackbone(flags.get("backbone") ?? "identity", flags.get("model"));
  const size = flags.has("size") ? Number(flags.get("size")) : undefined;
  if (size !== undefined && (!Number.isInteger(size) || size < 1)) {
    console.error("--size must be a positive integer");
    return 2;
  }
  const manifest = await exportGroup(images, layer, out, backbone, { size });
  console.log(
    `exported ${manifest.images.length} tensors (${manifest.images[0].channels} channels) to ${out}`,
  );
  return 0;
}

function runVerify(argv: string[]): number {
  if (argv.length !== 1) {
    usage();
    return 2;
  }
  const dims = verifyCoft(argv[0]);
  console.log(`${argv[0]}: ${dims.height}x${dims.width}x${dims.channels}`);
  return 0;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "export") {
      return await runExport(rest);
    }
    if (command === "verify") {
      return runVerify(rest);
    }
    usage();
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

main().then((code) => {
  process.exitCode = code;
});
