/** HTTP client for the completion service.
 *
 *  The editor depends only on the FillTransport interface; tests substitute a
 *  deterministic fake.  Server errors are surfaced with the server's own
 *  detail string so the UI can show something actionable.
 */

import {
  CompleteRequestSchema,
  CompleteResponseSchema,
  HealthSchema,
  ModelInfoSchema,
  type CompleteRequest,
  type CompleteResponse,
  type Health,
  type ModelInfo,
} from "./api.js";

export interface FillTransport {
  complete(
    req: CompleteRequest,
    opts?: { signal?: AbortSignal },
  ): Promise<CompleteResponse>;
  models(): Promise<ModelInfo[]>;
  health(): Promise<Health>;
}

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ServiceError";
  }
}

async function readDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return res.statusText || `HTTP ${res.status}`;
  }
}

export class HttpTransport implements FillTransport {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async complete(
    req: CompleteRequest,
    opts: { signal?: AbortSignal } = {},
  ): Promise<CompleteResponse> {
    const body = CompleteRequestSchema.parse(req);
    const res = await fetch(this.url("/v1/complete"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal: opts.signal ?? null,
    });
    if (!res.ok) throw new ServiceError(res.status, await readDetail(res));
    return CompleteResponseSchema.parse(await res.json());
  }

  async models(): Promise<ModelInfo[]> {
    const res = await fetch(this.url("/v1/models"));
    if (!res.ok) throw new ServiceError(res.status, await readDetail(res));
    const body = (await res.json()) as unknown[];
    return body.map((m) => ModelInfoSchema.parse(m));
  }

  async health(): Promise<Health> {
    const res = await fetch(this.url("/v1/health"));
    if (!res.ok) throw new ServiceError(res.status, await readDetail(res));
    return HealthSchema.parse(await res.json());
  }
}
