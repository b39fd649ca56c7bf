/**
 * Thin client over the six public session routes. No other paths are ever
 * requested. Mutations (create/peel/autostep) are serialized client-side:
 * a second mutation while one is in flight is rejected immediately, since
 * peels are irreversible and the server state advances on each one.
 */

import {
  CreatedSchema,
  ErrorSchema,
  decodeResult,
  decodeView,
  type SessionResult,
  type View,
} from "./schema";

export interface CreateRequest {
  covariates: number[][];
  p: number[];
  spec: { kind: string; pstar?: number; cap?: number | null };
  constraint?: Record<string, unknown>;
  alpha: number;
  seed?: number;
  rule?: { kind: string };
}

export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class Client {
  private mutationInFlight = false;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await res.json();
    if (!res.ok) {
      // server errors carry the message (with field path) verbatim
      const parsed = ErrorSchema.safeParse(payload);
      throw new ServiceError(
        res.status,
        parsed.success ? parsed.data.error : `http ${res.status}`,
      );
    }
    return payload;
  }

  private async mutate(path: string, body: unknown): Promise<unknown> {
    if (this.mutationInFlight) {
      throw new Error("a mutation is already in flight for this session");
    }
    this.mutationInFlight = true;
    try {
      return await this.request("POST", path, body);
    } finally {
      this.mutationInFlight = false;
    }
  }

  async healthz(): Promise<void> {
    await this.request("GET", "/healthz");
  }

  async createSession(req: CreateRequest): Promise<string> {
    const payload = await this.mutate("/sessions", { v: 1, ...req });
    return CreatedSchema.parse(payload).token;
  }

  async view(token: string): Promise<View> {
    return decodeView(await this.request("GET", `/sessions/${token}/view`));
  }

  async peel(token: string, ids: number[]): Promise<View> {
    return decodeView(await this.mutate(`/sessions/${token}/peel`, { v: 1, ids }));
  }

  async autostep(token: string, k: number): Promise<View> {
    return decodeView(
      await this.mutate(`/sessions/${token}/autostep`, { v: 1, k }),
    );
  }

  async result(token: string): Promise<SessionResult> {
    return decodeResult(await this.request("GET", `/sessions/${token}/result`));
  }
}
