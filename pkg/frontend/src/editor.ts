/** Editor session: base image, painted strokes, fill gallery, history.
 *
 *  All pixel generation happens server-side; the session only composes
 *  state.  Every fill is issued with an explicit seed (the seed lock when
 *  set, otherwise one drawn from an injectable source), which is what makes
 *  a recorded session exactly replayable.  One fill request is in flight at
 *  a time; further requests either reject, queue, or cancel the current one.
 */

import type { CompleteRequest } from "./api.js";
import {
  cloneImage,
  countVisibleMismatches,
  type ImageCodec,
  type RawImage,
} from "./pixels.js";
import { rasterizeVisible, toWire, strokeHit, type Stroke } from "./strokes.js";
import { ServiceError, type FillTransport } from "./transport.js";

export const GALLERY_CAP = 16;

export interface Settings {
  numSamples: number; // 1..16, matches the server cap
  topK: number;
  refine: boolean;
  seedLock: number | null;
  modelId: string | null;
}

export interface Tile {
  image: string; // base64 PNG exactly as returned
  pixels: RawImage;
  seed: number;
  index: number;
}

export interface FillIdle {
  kind: "idle";
}
export interface FillInFlight {
  kind: "inflight";
}
export interface FillFailed {
  kind: "error";
  message: string;
  status: number | null; // HTTP status, null for network failures
  retryable: boolean;
}
export type FillStatus = FillIdle | FillInFlight | FillFailed;

interface HistoryEntry {
  imageB64: string;
  pixels: RawImage;
  strokes: Stroke[];
}

export type SessionEvent =
  | { kind: "load"; image: string }
  | { kind: "settings"; patch: Partial<Settings> }
  | { kind: "paint"; stroke: Stroke }
  | { kind: "erase"; x: number; y: number; radius: number }
  | { kind: "clear_mask" }
  | { kind: "fill"; seed: number }
  | { kind: "accept"; index: number }
  | { kind: "undo" };

export class EditorBusyError extends Error {
  constructor() {
    super("a fill request is already in flight");
    this.name = "EditorBusyError";
  }
}

export interface EditorDeps {
  transport: FillTransport;
  codec: ImageCodec;
  randomSeed?: () => number;
}

function defaultRandomSeed(): number {
  return Math.floor(Math.random() * 0x80000000);
}

export class EditorSession {
  readonly log: SessionEvent[] = [];

  private base: { b64: string; pixels: RawImage } | null = null;
  private strokes: Stroke[] = [];
  private galleryTiles: Tile[] | null = null;
  private history: HistoryEntry[] = [];
  private status: FillStatus = { kind: "idle" };
  private lastRequest: CompleteRequest | null = null;
  private queued: (() => void)[] = [];
  private abort: AbortController | null = null;
  /** Visible-pixel mismatches of the last accepted tile vs the prior base
   *  (advisory mirror of the server-side fidelity contract). */
  lastAcceptMismatches: number | null = null;

  settings: Settings = {
    numSamples: 4,
    topK: 20,
    refine: true,
    seedLock: null,
    modelId: null,
  };

  private readonly transport: FillTransport;
  private readonly codec: ImageCodec;
  private readonly randomSeed: () => number;

  constructor(deps: EditorDeps) {
    this.transport = deps.transport;
    this.codec = deps.codec;
    this.randomSeed = deps.randomSeed ?? defaultRandomSeed;
  }

  // ----- queries ---------------------------------------------------------

  get baseImage(): string | null {
    return this.base?.b64 ?? null;
  }
  get basePixels(): RawImage | null {
    return this.base ? cloneImage(this.base.pixels) : null;
  }
  get maskStrokes(): readonly Stroke[] {
    return this.strokes;
  }
  get gallery(): readonly Tile[] | null {
    return this.galleryTiles;
  }
  get fillStatus(): FillStatus {
    return this.status;
  }
  get historyDepth(): number {
    return this.history.length;
  }

  /** Fill is possible once an image is loaded and a mask has been painted. */
  canFill(): boolean {
    return (
      this.base !== null &&
      this.strokes.length > 0 &&
      this.status.kind !== "inflight"
    );
  }

  /** Hidden-region overlay for rendering (1 = visible). */
  visibleBitmap(): Uint8Array | null {
    if (!this.base) return null;
    const { width, height } = this.base.pixels;
    return rasterizeVisible(width, height, this.strokes);
  }

  // ----- mutations -------------------------------------------------------

  async loadImage(b64: string): Promise<void> {
    const pixels = await this.codec.decode(b64);
    this.base = { b64, pixels };
    this.strokes = [];
    this.galleryTiles = null;
    this.history = [];
    this.status = { kind: "idle" };
    this.lastAcceptMismatches = null;
    this.log.push({ kind: "load", image: b64 });
  }

  updateSettings(patch: Partial<Settings>): void {
    const next = { ...this.settings, ...patch };
    next.numSamples = Math.max(1, Math.min(GALLERY_CAP, next.numSamples));
    next.topK = Math.max(1, next.topK);
    this.settings = next;
    this.log.push({ kind: "settings", patch });
  }

  paint(stroke: Stroke): void {
    if (!this.base) throw new Error("load an image before painting");
    if (stroke.points.length === 0 || stroke.radius <= 0) {
      throw new Error("stroke needs at least one point and a positive radius");
    }
    this.strokes.push({ points: [...stroke.points], radius: stroke.radius });
    this.log.push({ kind: "paint", stroke });
  }

  /** Vector eraser: drops every stroke the eraser disk touches. */
  eraseAt(x: number, y: number, radius: number): void {
    this.strokes = this.strokes.filter((s) => !strokeHit(s, x, y, radius));
    this.log.push({ kind: "erase", x, y, radius });
  }

  clearMask(): void {
    this.strokes = [];
    this.log.push({ kind: "clear_mask" });
  }

  // ----- fill ------------------------------------------------------------

  async requestFill(
    opts: { ifBusy?: "reject" | "queue" } = {},
  ): Promise<readonly Tile[]> {
    if (this.status.kind === "inflight") {
      if (opts.ifBusy !== "queue") throw new EditorBusyError();
      await new Promise<void>((resolve) => this.queued.push(resolve));
    }
    if (!this.base) throw new Error("no image loaded");
    if (this.strokes.length === 0) throw new Error("paint a mask first");

    const seed = this.settings.seedLock ?? this.randomSeed();
    const req: CompleteRequest = {
      image: this.base.b64,
      strokes: toWire(this.strokes),
      num_samples: this.settings.numSamples,
      top_k: this.settings.topK,
      seed,
      refine: this.settings.refine,
    };
    return this.issue(req, seed);
  }

  /** Re-issue the last failed request unchanged (same seed). */
  async retryFill(): Promise<readonly Tile[]> {
    if (this.status.kind === "inflight") throw new EditorBusyError();
    const req = this.lastRequest;
    if (!req || this.status.kind !== "error") {
      throw new Error("nothing to retry");
    }
    return this.issue(req, req.seed!);
  }

  /** Abort the in-flight request (if any) and drop queued ones. */
  cancelFill(): void {
    this.abort?.abort();
    for (const wake of this.queued.splice(0)) wake();
  }

  private async issue(
    req: CompleteRequest,
    seed: number,
  ): Promise<readonly Tile[]> {
    this.status = { kind: "inflight" };
    this.lastRequest = req;
    this.abort = new AbortController();
    try {
      const res = await this.transport.complete(req, {
        signal: this.abort.signal,
      });
      if (res.samples.length !== req.num_samples) {
        throw new Error(
          `server returned ${res.samples.length} samples, ` +
            `expected ${req.num_samples}`,
        );
      }
      const tiles: Tile[] = [];
      for (const s of res.samples) {
        tiles.push({
          image: s.image,
          pixels: await this.codec.decode(s.image),
          seed: s.sample_seed,
          index: s.sample_index,
        });
      }
      this.galleryTiles = tiles;
      this.status = { kind: "idle" };
      this.log.push({ kind: "fill", seed });
      return tiles;
    } catch (err) {
      if (err instanceof Error && err.name === "AbortError") {
        // user cancellation is not a failure state
        this.status = { kind: "idle" };
        throw err;
      }
      if (err instanceof ServiceError) {
        // 4xx: the request itself is bad; retry only helps for 5xx
        this.status = {
          kind: "error",
          message: err.message,
          status: err.status,
          retryable: err.status >= 500,
        };
      } else {
        this.status = {
          kind: "error",
          message: err instanceof Error ? err.message : String(err),
          status: null,
          retryable: true,
        };
      }
      throw err;
    } finally {
      this.abort = null;
      const wake = this.queued.shift();
      if (wake) wake();
    }
  }

  // ----- accept / undo ---------------------------------------------------

  /** Make a gallery tile the new base; the prior state goes on the history
   *  stack and the mask is cleared for the next iteration. */
  accept(index: number): void {
    if (!this.base) throw new Error("no image loaded");
    const tile = this.galleryTiles?.[index];
    if (!tile) throw new Error(`no gallery tile at index ${index}`);

    const visible = rasterizeVisible(
      this.base.pixels.width,
      this.base.pixels.height,
      this.strokes,
    );
    this.lastAcceptMismatches =
      tile.pixels.width === this.base.pixels.width &&
      tile.pixels.height === this.base.pixels.height
        ? countVisibleMismatches(this.base.pixels, tile.pixels, visible)
        : null;

    this.history.push({
      imageB64: this.base.b64,
      pixels: this.base.pixels,
      strokes: this.strokes,
    });
    this.base = { b64: tile.image, pixels: tile.pixels };
    this.strokes = [];
    this.galleryTiles = null;
    this.log.push({ kind: "accept", index });
  }

  /** Step back to the previous accepted state. Returns false at the root. */
  undo(): boolean {
    const prev = this.history.pop();
    if (!prev) return false;
    this.base = { b64: prev.imageB64, pixels: prev.pixels };
    this.strokes = prev.strokes;
    this.galleryTiles = null;
    this.log.push({ kind: "undo" });
    return true;
  }
}

/** Pairwise-distinct image count in a gallery (byte-level comparison). */
export function distinctTileCount(tiles: readonly Tile[]): number {
  return new Set(tiles.map((t) => t.image)).size;
}
