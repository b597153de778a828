/** Record/replay for editor sessions.
 *
 *  A session log is plain JSON: strokes as vectors plus the seed each fill
 *  ran with.  Replaying applies the events to a fresh session against the
 *  same service; because generation is seeded server-side and strokes
 *  re-rasterize deterministically, the galleries come back identical.
 */

import { z } from "zod";

import { StrokeSchema } from "./api.js";
import { EditorSession, type EditorDeps, type SessionEvent } from "./editor.js";

const SettingsPatchSchema = z
  .object({
    numSamples: z.number().int(),
    topK: z.number().int(),
    refine: z.boolean(),
    seedLock: z.number().int().nullable(),
    modelId: z.string().nullable(),
  })
  .partial();

export const SessionEventSchema = z.discriminatedUnion("kind", [
  z.object({ kind: z.literal("load"), image: z.string() }),
  z.object({ kind: z.literal("settings"), patch: SettingsPatchSchema }),
  z.object({ kind: z.literal("paint"), stroke: StrokeSchema }),
  z.object({
    kind: z.literal("erase"),
    x: z.number(),
    y: z.number(),
    radius: z.number(),
  }),
  z.object({ kind: z.literal("clear_mask") }),
  z.object({ kind: z.literal("fill"), seed: z.number().int() }),
  z.object({ kind: z.literal("accept"), index: z.number().int() }),
  z.object({ kind: z.literal("undo") }),
]);

export function serializeLog(log: readonly SessionEvent[]): string {
  return JSON.stringify(log);
}

export function deserializeLog(text: string): SessionEvent[] {
  const raw = JSON.parse(text) as unknown[];
  return raw.map((e) => SessionEventSchema.parse(e)) as SessionEvent[];
}

export interface ReplayResult {
  session: EditorSession;
  /** Tile images (base64) of each fill, in order. */
  galleries: string[][];
}

export async function replaySession(
  log: readonly SessionEvent[],
  deps: EditorDeps,
): Promise<ReplayResult> {
  const session = new EditorSession(deps);
  const galleries: string[][] = [];
  for (const ev of log) {
    switch (ev.kind) {
      case "load":
        await session.loadImage(ev.image);
        break;
      case "settings":
        session.updateSettings(ev.patch);
        break;
      case "paint":
        session.paint(ev.stroke);
        break;
      case "erase":
        session.eraseAt(ev.x, ev.y, ev.radius);
        break;
      case "clear_mask":
        session.clearMask();
        break;
      case "fill": {
        // force the recorded seed regardless of how it was chosen
        const prevLock = session.settings.seedLock;
        session.settings = { ...session.settings, seedLock: ev.seed };
        const tiles = await session.requestFill();
        session.settings = { ...session.settings, seedLock: prevLock };
        galleries.push(tiles.map((t) => t.image));
        break;
      }
      case "accept":
        session.accept(ev.index);
        break;
      case "undo":
        session.undo();
        break;
    }
  }
  return { session, galleries };
}
