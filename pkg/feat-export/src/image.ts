// Image decoding and preprocessing. Preprocessing is deliberately small and
// fully recorded in the manifest: scale RGB bytes to [0, 1] and optionally
// resize with corner-aligned bilinear sampling.

import { readFileSync } from "node:fs";
import { PNG } from "pngjs";

export interface RgbImage {
  height: number;
  width: number;
  /** row-major (i, j, c) with c fastest, values in [0, 1] */
  data: Float32Array;
}

export interface PreprocessOptions {
  /** resize to size x size before the backbone; omit to keep native size */
  size?: number;
}

export function loadImage(path: string): RgbImage {
  let png: PNG;
  try {
    png = PNG.sync.read(readFileSync(path));
  } catch (err) {
    throw new Error(`unreadable image ${path}: ${(err as Error).message}`);
  }
  const { height, width } = png;
  const data = new Float32Array(height * width * 3);
  for (let i = 0; i < height * width; i++) {
    data[i * 3] = png.data[i * 4] / 255;
    data[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    data[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { height, width, data };
}

export function preprocess(image: RgbImage, options: PreprocessOptions = {}): RgbImage {
  if (options.size === undefined) {
    return image;
  }
  if (options.size < 1) {
    throw new Error("resize target must be >= 1");
  }
  return resizeBilinear(image, options.size, options.size);
}

export function resizeBilinear(image: RgbImage, outH: number, outW: number): RgbImage {
  const { height: h, width: w, data } = image;
  if (outH === h && outW === w) {
    return { height: h, width: w, data: data.slice() };
  }
  const out = new Float32Array(outH * outW * 3);
  const stepY = outH === 1 ? 0 : (h - 1) / (outH - 1);
  const stepX = outW === 1 ? 0 : (w - 1) / (outW - 1);
  for (let r = 0; r < outH; r++) {
    const y = outH === 1 ? (h - 1) / 2 : r * stepY;
    const i0 = Math.min(Math.floor(y), h - 1);
    const i1 = Math.min(i0 + 1, h - 1);
    const fy = y - i0;
    for (let c = 0; c < outW; c++) {
      const x = outW === 1 ? (w - 1) / 2 : c * stepX;
      const j0 = Math.min(Math.floor(x), w - 1);
      const j1 = Math.min(j0 + 1, w - 1);
      const fx = x - j0;
      for (let ch = 0; ch < 3; ch++) {
        const v00 = data[(i0 * w + j0) * 3 + ch];
        const v01 = data[(i0 * w + j1) * 3 + ch];
        const v10 = data[(i1 * w + j0) * 3 + ch];
        const v11 = data[(i1 * w + j1) * 3 + ch];
        const top = v00 + fx * (v01 - v00);
        const bottom = v10 + fx * (v11 - v10);
        out[(r * outW + c) * 3 + ch] = top + fy * (bottom - top);
      }
    }
  }
  return { height: outH, width: outW, data: out };
}
