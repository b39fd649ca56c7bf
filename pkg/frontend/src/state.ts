/**
 * Pure view-model and gauge logic. Everything here is a function of the
 * last decoded /view response plus transient UI selection state.
 */

import type { View } from "./schema";

export type GaugeState = "green" | "amber" | "running";

/** Halt-green exactly when the server says halted; amber flags the
 * near-miss where the estimate is under alpha but the current set has
 * left the admissible family, so the server will not stop. */
export function gauge(view: View): GaugeState {
  if (view.halted) return "green";
  if (view.fdp_hat <= view.alpha && !view.in_constraint) return "amber";
  return "running";
}

export interface ViewModel {
  view: View;
  /** index into view.candidates of the cut being previewed, or null */
  selected: number | null;
  hoverId: number | null;
  /** estimate trajectory for the sparkline: past steps plus the present */
  fdpHistory: number[];
}

export function makeViewModel(
  view: View,
  prev?: Pick<ViewModel, "selected" | "hoverId">,
): ViewModel {
  const selected =
    prev && prev.selected !== null && prev.selected < view.candidates.length
      ? prev.selected
      : null;
  return {
    view,
    selected,
    hoverId: prev ? prev.hoverId : null,
    fdpHistory: [...view.fdp_history, view.fdp_hat],
  };
}

/** Ids that the currently previewed candidate would remove. */
export function previewIds(vm: ViewModel): ReadonlySet<number> {
  if (vm.selected === null) return new Set();
  return new Set(vm.view.candidates[vm.selected] ?? []);
}
