/** Test doubles: a JSON pixel codec and a deterministic fake fill service
 *  that honors the wire contract (schema validation, seeded generation,
 *  visible-pixel fidelity) without any HTTP.
 */

import {
  CompleteRequestSchema,
  type CompleteRequest,
  type CompleteResponse,
  type Health,
  type ModelInfo,
} from "../src/api.js";
import type { ImageCodec, RawImage } from "../src/pixels.js";
import { rasterizeHidden } from "../src/strokes.js";
import { ServiceError, type FillTransport } from "../src/transport.js";

export const fakeCodec: ImageCodec = {
  async decode(b64: string): Promise<RawImage> {
    const o = JSON.parse(atob(b64)) as { w: number; h: number; d: number[] };
    return { width: o.w, height: o.h, data: Uint8ClampedArray.from(o.d) };
  },
  async encode(img: RawImage): Promise<string> {
    return btoa(
      JSON.stringify({ w: img.width, h: img.height, d: Array.from(img.data) }),
    );
  },
};

export function makeTestImage(w: number, h: number, tint = 0): RawImage {
  const data = new Uint8ClampedArray(4 * w * h);
  for (let p = 0; p < w * h; p++) {
    data[4 * p] = (p * 7 + tint) % 256;
    data[4 * p + 1] = (p * 13 + 2 * tint) % 256;
    data[4 * p + 2] = (p * 29 + 3 * tint) % 256;
    data[4 * p + 3] = 255;
  }
  return { width: w, height: h, data };
}

export function encodeSync(img: RawImage): string {
  return btoa(
    JSON.stringify({ w: img.width, h: img.height, d: Array.from(img.data) }),
  );
}

function decodeSync(b64: string): RawImage {
  const o = JSON.parse(atob(b64)) as { w: number; h: number; d: number[] };
  return { width: o.w, height: o.h, data: Uint8ClampedArray.from(o.d) };
}

function mulberry32(a: number): () => number {
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface FakeOptions {
  /** hold requests until the test releases them */
  gated?: boolean;
  /** fail every request with this error */
  failWith?: Error;
  /** deliberately corrupt one visible pixel (fidelity-violation tests) */
  corruptVisible?: boolean;
  /** return a wrong sample count */
  shortChange?: boolean;
}

export class FakeTransport implements FillTransport {
  calls: CompleteRequest[] = [];
  private releaseQueue: (() => void)[] = [];

  constructor(private readonly opts: FakeOptions = {}) {}

  /** release one gated request */
  release(): void {
    const r = this.releaseQueue.shift();
    if (r) r();
  }

  async complete(
    req: CompleteRequest,
    callOpts: { signal?: AbortSignal } = {},
  ): Promise<CompleteResponse> {
    const valid = CompleteRequestSchema.parse(req);
    this.calls.push(valid);
    if (this.opts.gated) {
      await new Promise<void>((resolve, reject) => {
        this.releaseQueue.push(resolve);
        callOpts.signal?.addEventListener("abort", () =>
          reject(new DOMException("The operation was aborted.", "AbortError")),
        );
      });
    }
    if (this.opts.failWith) throw this.opts.failWith;

    const base = decodeSync(valid.image);
    const hidden = rasterizeHidden(
      base.width,
      base.height,
      (valid.strokes ?? []).map((s) => ({
        points: s.points as [number, number][],
        radius: s.radius,
      })),
    );
    const seed = valid.seed ?? 12345;
    const n = this.opts.shortChange
      ? Math.max(0, valid.num_samples - 1)
      : valid.num_samples;
    const samples = [];
    for (let i = 0; i < n; i++) {
      const out = {
        width: base.width,
        height: base.height,
        data: base.data.slice(),
      };
      // top_k=1 is deterministic argmax: every sample identical
      const key =
        valid.top_k === 1 ? 0xa11ce : (seed ^ Math.imul(i + 1, 0x9e3779b9)) | 0;
      const rng = mulberry32(key);
      for (let p = 0; p < base.width * base.height; p++) {
        if (!hidden[p]) continue;
        out.data[4 * p] = Math.floor(rng() * 256);
        out.data[4 * p + 1] = Math.floor(rng() * 256);
        out.data[4 * p + 2] = Math.floor(rng() * 256);
      }
      if (this.opts.corruptVisible) {
        const p = hidden.findIndex((v) => v === 0);
        if (p >= 0) out.data[4 * p] = (out.data[4 * p]! + 1) % 256;
      }
      samples.push({
        image: encodeSync(out),
        sample_seed: seed,
        sample_index: i,
      });
    }
    return { samples, timing_ms: 1.0, model_id: "fake-model" };
  }

  async models(): Promise<ModelInfo[]> {
    return [
      {
        model_id: "fake-model",
        dataset: "synthetic_textures",
        K: 128,
        chunks: 4,
        resolutions: { coarse: 32, full: 64 },
      },
    ];
  }

  async health(): Promise<Health> {
    return { status: "ready", uptime_s: 1 };
  }
}

export function serviceError(status: number, detail: string): ServiceError {
  return new ServiceError(status, detail);
}
