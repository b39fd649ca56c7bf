import type { View } from "../src/schema";

/** A small well-formed view payload; override fields per test. */
export function makeView(over: Partial<View> = {}): View {
  return {
    v: 1,
    step: 0,
    masked: [
      [0, 0.1],
      [1, 0.3],
      [2, 0.45],
    ],
    revealed: [[3, 0.91]],
    covariates: [
      [0.1, 0.2],
      [0.4, 0.9],
      [0.8, 0.3],
      [0.5, 0.5],
    ],
    sum_h: 2.0,
    fdp_hat: 0.8,
    candidates: [[2], [1]],
    in_constraint: true,
    halted: false,
    alpha: 0.1,
    spec: { kind: "seqstep", pstar: 0.5, cap: null },
    constraint_kind: "none",
    constraint: { kind: "none" },
    fdp_history: [1.0, 0.9],
    ...over,
  };
}
