// Backbones turn a preprocessed image into an activation tensor. The engine
// downstream treats features as opaque, so any network plugs in here; the
// identity backbone passes pixels through and anchors the conformance tests.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";

import type { FeatureTensor } from "./coft.js";
import type { RgbImage } from "./image.js";

export interface Backbone {
  readonly name: string;
  readonly version: string;
  layers(): string[];
  run(image: RgbImage, layer: string): Promise<FeatureTensor>;
}

export class UnknownLayerError extends Error {
  constructor(layer: string, available: string[]) {
    super(`unknown layer "${layer}"; available: ${available.join(", ")}`);
    this.name = "UnknownLayerError";
  }
}

/** Features are the preprocessed pixels themselves (channels = 3). */
export class IdentityBackbone implements Backbone {
  readonly name = "identity";
  readonly version = "1";

  layers(): string[] {
    return ["input"];
  }

  async run(image: RgbImage, layer: string): Promise<FeatureTensor> {
    if (layer !== "input") {
      throw new UnknownLayerError(layer, this.layers());
    }
    return {
      height: image.height,
      width: image.width,
      channels: 3,
      data: image.data.slice(),
    };
  }
}

/** Any tfjs layers model saved as model.json + weight shard(s). */
export class TfjsBackbone implements Backbone {
  readonly name: string;
  readonly version: string;

  private constructor(
    private readonly tf: typeof import("@tensorflow/tfjs"),
    private readonly model: import("@tensorflow/tfjs").LayersModel,
    name: string,
  ) {
    this.name = name;
    this.version = this.tf.version.tfjs;
  }

  static async load(modelJsonPath: string): Promise<TfjsBackbone> {
    const tf = await import("@tensorflow/tfjs");
    const raw = JSON.parse(readFileSync(modelJsonPath, "utf-8"));
    const dir = dirname(modelJsonPath);
    const specs: object[] = [];
    const shards: Buffer[] = [];
    for (const group of raw.weightsManifest ?? []) {
      specs.push(...group.weights);
      for (const path of group.paths) {
        shards.push(readFileSync(join(dir, path)));
      }
    }
    const weightData = Buffer.concat(shards);
    const model = await tf.loadLayersModel(
      tf.io.fromMemory({
        modelTopology: raw.modelTopology,
        weightSpecs: specs as never,
        weightData: weightData.buffer.slice(
          weightData.byteOffset,
          weightData.byteOffset + weightData.byteLength,
        ),
      }),
    );
    return new TfjsBackbone(tf, model, `tfjs:${modelJsonPath}`);
  }

  layers(): string[] {
    return this.model.layers.map((l) => l.name);
  }

  async run(image: RgbImage, layer: string): Promise<FeatureTensor> {
    if (!this.layers().includes(layer)) {
      throw new UnknownLayerError(layer, this.layers());
    }
    const tf = this.tf;
    const tapped = tf.model({
      inputs: this.model.inputs,
      outputs: this.model.getLayer(layer).output,
    });
    const result = tf.tidy(() => {
      const input = tf.tensor4d(image.data, [1, image.height, image.width, 3]);
      return tapped.predict(input) as import("@tensorflow/tfjs").Tensor;
    });
    const shape = result.shape;
    if (shape.length !== 4 || shape[0] !== 1) {
      result.dispose();
      throw new Error(`layer "${layer}" is not spatial (shape ${JSON.stringify(shape)})`);
    }
    const data = (await result.data()) as Float32Array;
    result.dispose();
    return {
      height: shape[1],
      width: shape[2],
      channels: shape[3],
      data: Float32Array.from(data),
    };
  }
}

export async function loadBackbone(kind: string, modelPath?: string): Promise<Backbone> {
  if (kind === "identity") {
    return new IdentityBackbone();
  }
  if (kind === "tfjs") {
    if (!modelPath) {
      throw new Error("the tfjs backbone needs --model pointing at a model.json");
    }
    return TfjsBackbone.load(modelPath);
  }
  throw new Error(`unknown backbone "${kind}" (use identity or tfjs)`);
}
