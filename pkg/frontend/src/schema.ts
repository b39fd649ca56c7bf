/**
 * Schema-validated decoders for the session service payloads.
 *
 * Every piece of state the console renders must round-trip through these
 * parsers; nothing may be synthesized client-side. That makes the
 * information restriction structural: if the server did not send it, the
 * console cannot show it.
 */

import { z } from "zod";

const idValue = z.tuple([z.number().int().nonnegative(), z.number()]);

export const AccumSpecSchema = z.object({
  kind: z.string(),
  pstar: z.number(),
  cap: z.number().nullable(),
});

export const ConstraintSchema = z.object({
  kind: z.string(),
  delta: z.number().optional(),
  angles: z.number().optional(),
  parent: z.array(z.number().int()).optional(),
  n: z.number().int().optional(),
  edges: z.array(z.tuple([z.number().int(), z.number().int()])).optional(),
});

export const ViewSchema = z.object({
  v: z.literal(1),
  step: z.number().int().nonnegative(),
  masked: z.array(idValue),
  revealed: z.array(idValue),
  covariates: z.array(z.array(z.number())),
  sum_h: z.number(),
  fdp_hat: z.number(),
  candidates: z.array(z.array(z.number().int().nonnegative())),
  in_constraint: z.boolean(),
  halted: z.boolean(),
  alpha: z.number().gt(0).lt(1),
  spec: AccumSpecSchema,
  constraint_kind: z.string(),
  constraint: ConstraintSchema,
  fdp_history: z.array(z.number()),
});

export const CreatedSchema = z.object({
  v: z.literal(1),
  token: z.string().min(16),
});

export const ResultSchema = z.object({
  v: z.literal(1),
  rejection: z.array(z.number().int().nonnegative()),
  fdp_hat: z.number(),
  step: z.number().int().nonnegative(),
  alpha: z.number(),
});

export const ErrorSchema = z.object({
  v: z.literal(1),
  error: z.string(),
});

export type View = z.infer<typeof ViewSchema>;
export type SessionResult = z.infer<typeof ResultSchema>;

export function decodeView(payload: unknown): View {
  return ViewSchema.parse(payload);
}

export function decodeResult(payload: unknown): SessionResult {
  return ResultSchema.parse(payload);
}
