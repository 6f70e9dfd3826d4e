// COFT tensor files: magic "COFT", u32 version=1, u32 height, u32 width,
// u32 channels (all little-endian), then height*width*channels float32
// little-endian values, channel index fastest. Endianness is part of the
// contract: a big-endian writer is a conformance failure.

import { readFileSync, writeFileSync } from "node:fs";
import { endianness } from "node:os";

export const COFT_MAGIC = "COFT";
export const COFT_VERSION = 1;
const HEADER_BYTES = 20;

export interface FeatureTensor {
  height: number;
  width: number;
  channels: number;
  /** row-major (i, j, k) with k fastest */
  data: Float32Array;
}

export class CoftFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CoftFormatError";
  }
}

export function encodeCoft(tensor: FeatureTensor): Buffer {
  const { height, width, channels, data } = tensor;
  if (height < 1 || width < 1 || channels < 1) {
    throw new CoftFormatError(`zero dimension (${height}x${width}x${channels})`);
  }
  if (data.length !== height * width * channels) {
    throw new CoftFormatError(
      `payload length mismatch (${data.length} values for ${height}x${width}x${channels})`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new CoftFormatError("non-finite values in payload");
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + data.length * 4);
  buf.write(COFT_MAGIC, 0, "ascii");
  buf.writeUInt32LE(COFT_VERSION, 4);
  buf.writeUInt32LE(height, 8);
  buf.writeUInt32LE(width, 12);
  buf.writeUInt32LE(channels, 16);
  if (endianness() === "LE") {
    Buffer.from(data.buffer, data.byteOffset, data.byteLength).copy(buf, HEADER_BYTES);
  } else {
    for (let i = 0; i < data.length; i++) {
      buf.writeFloatLE(data[i], HEADER_BYTES + i * 4);
    }
  }
  return buf;
}

export function decodeCoft(buf: Buffer, context = "buffer"): FeatureTensor {
  if (buf.length < HEADER_BYTES) {
    throw new CoftFormatError(`${context}: truncated header`);
  }
  if (buf.toString("ascii", 0, 4) !== COFT_MAGIC) {
    throw new CoftFormatError(`${context}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== COFT_VERSION) {
    throw new CoftFormatError(`${context}: unsupported version ${version}`);
  }
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const channels = buf.readUInt32LE(16);
  if (height < 1 || width < 1 || channels < 1) {
    throw new CoftFormatError(`${context}: zero dimension in header`);
  }
  const expected = height * width * channels * 4;
  if (buf.length - HEADER_BYTES !== expected) {
    throw new CoftFormatError(
      `${context}: payload length mismatch (expected ${expected} bytes, got ${buf.length - HEADER_BYTES})`,
    );
  }
  const data = new Float32Array(height * width * channels);
  if (endianness() === "LE") {
    data.set(new Float32Array(buf.buffer.slice(buf.byteOffset + HEADER_BYTES, buf.byteOffset + buf.length)));
  } else {
    for (let i = 0; i < data.length; i++) {
      data[i] = buf.readFloatLE(HEADER_BYTES + i * 4);
    }
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new CoftFormatError(`${context}: non-finite values in payload`);
    }
  }
  return { height, width, channels, data };
}

export function writeCoft(tensor: FeatureTensor, path: string): void {
  writeFileSync(path, encodeCoft(tensor));
}

export function readCoft(path: string): FeatureTensor {
  return decodeCoft(readFileSync(path), path);
}

/** Validate a COFT file; returns its dimensions or throws CoftFormatError. */
export function verifyCoft(path: string): { height: number; width: number; channels: number } {
  const t = readCoft(path);
  return { height: t.height, width: t.width, channels: t.channels };
}
