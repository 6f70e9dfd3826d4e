// Group export: run the backbone on every image, write one COFT file each,
// then a manifest with checksums so downstream runs can audit their inputs.

import { createHash } from "node:crypto";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { basename, extname, join } from "node:path";

import type { Backbone } from "./backbones.js";
import { encodeCoft } from "./coft.js";
import { loadImage, preprocess, PreprocessOptions } from "./image.js";

export interface ManifestEntry {
  source: string;
  output: string;
  height: number;
  width: number;
  channels: number;
  checksum: string;
}

export interface ExportManifest {
  backbone: { name: string; version: string };
  layer: string;
  preprocessing: {
    normalization: "rgb/255";
    resize: { height: number; width: number; method: "bilinear-corner-aligned" } | null;
  };
  images: ManifestEntry[];
}

export function sha256File(path: string): string {
  return "sha256:" + createHash("sha256").update(readFileSync(path)).digest("hex");
}

export async function exportGroup(
  images: string[],
  layer: string,
  outDir: string,
  backbone: Backbone,
  options: PreprocessOptions = {},
): Promise<ExportManifest> {
  if (images.length === 0) {
    throw new Error("no images to export");
  }
  mkdirSync(outDir, { recursive: true });
  const entries: ManifestEntry[] = [];
  let channels: number | null = null;
  for (const source of [...images].sort()) {
    const prepped = preprocess(loadImage(source), options);
    const tensor = await backbone.run(prepped, layer);
    if (channels === null) {
      channels = tensor.channels;
    } else if (tensor.channels !== channels) {
      throw new Error(
        `channel count mismatch within group: ${tensor.channels} vs ${channels} (${source})`,
      );
    }
    const output = join(outDir, basename(source, extname(source)) + ".coft");
    writeFileSync(output, encodeCoft(tensor));
    entries.push({
      source,
      output,
      height: tensor.height,
      width: tensor.width,
      channels: tensor.channels,
      checksum: sha256File(output),
    });
  }
  const manifest: ExportManifest = {
    backbone: { name: backbone.name, version: backbone.version },
    layer,
    preprocessing: {
      normalization: "rgb/255",
      resize:
        options.size === undefined
          ? null
          : { height: options.size, width: options.size, method: "bilinear-corner-aligned" },
    },
    images: entries,
  };
  writeFileSync(join(outDir, "manifest.json"), JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
