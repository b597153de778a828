/** Wire schema for the completion service, mirrored with zod so malformed
 *  payloads fail loudly at the boundary instead of deep in the UI. */

import { z } from "zod";

export const StrokeSchema = z.object({
  // (x, y) pixel coordinates; the stroked region becomes hidden
  points: z.array(z.tuple([z.number(), z.number()])).min(1),
  radius: z.number().positive(),
});
export type StrokeWire = z.infer<typeof StrokeSchema>;

export const CompleteRequestSchema = z
  .object({
    image: z.string(), // base64 PNG
    mask: z.string().optional(),
    strokes: z.array(StrokeSchema).optional(),
    num_samples: z.number().int().min(1).max(16),
    top_k: z.number().int().min(1),
    seed: z.number().int().optional(),
    refine: z.boolean(),
  })
  .refine((r) => (r.mask === undefined) !== (r.strokes === undefined), {
    message: "provide exactly one of 'mask' or 'strokes'",
  });
export type CompleteRequest = z.infer<typeof CompleteRequestSchema>;

export const SampleOutSchema = z.object({
  image: z.string(),
  sample_seed: z.number().int(),
  sample_index: z.number().int(),
});
export type SampleOut = z.infer<typeof SampleOutSchema>;

export const CompleteResponseSchema = z.object({
  samples: z.array(SampleOutSchema),
  timing_ms: z.number(),
  model_id: z.string(),
});
export type CompleteResponse = z.infer<typeof CompleteResponseSchema>;

export const ModelInfoSchema = z.object({
  model_id: z.string(),
  dataset: z.string(),
  K: z.number().int(),
  chunks: z.number().int(),
  resolutions: z.object({ coarse: z.number().int(), full: z.number().int() }),
});
export type ModelInfo = z.infer<typeof ModelInfoSchema>;

export const HealthSchema = z.object({
  status: z.enum(["ready", "loading"]),
  uptime_s: z.number(),
});
export type Health = z.infer<typeof HealthSchema>;
