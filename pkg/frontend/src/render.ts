/**
 * DOM rendering for the analyst console. Everything shown is derived from
 * the ViewModel (i.e. from the last /view response); masked hypotheses
 * are drawn from their disclosed g-value only.
 */

import type { View } from "./schema";
import { gauge, previewIds, type ViewModel } from "./state";

export interface Actions {
  onSelectCandidate(index: number | null): void;
  onConfirmPeel(ids: number[]): void;
  onAutostep(k: number): void;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const KNOWN_KINDS = ["none", "convex2d", "axisbox", "tree", "dag_strong", "dag_weak"];

function fmt(x: number): string {
  return x.toFixed(3);
}

/** Blue ramp for masked points: small g (promising) is dark. */
export function maskedColor(g: number): string {
  const t = Math.max(0, Math.min(1, g / 0.5));
  const light = Math.round(30 + 60 * t);
  return `hsl(220, 70%, ${light}%)`;
}

/** Revealed points: significant-looking p-values in red, the rest grey. */
export function revealedColor(p: number, alpha: number): string {
  return p <= alpha ? "hsl(0, 70%, 50%)" : "hsl(0, 0%, 72%)";
}

type Pos = Map<number, [number, number]>;

function layeredPositions(depth: number[]): Pos {
  const byLayer = new Map<number, number[]>();
  depth.forEach((d, id) => {
    const row = byLayer.get(d) ?? [];
    row.push(id);
    byLayer.set(d, row);
  });
  const maxDepth = Math.max(...depth, 1);
  const pos: Pos = new Map();
  for (const [d, row] of byLayer) {
    row.sort((a, b) => a - b);
    row.forEach((id, i) => {
      pos.set(id, [(i + 0.5) / row.length, maxDepth === 0 ? 0.5 : d / maxDepth]);
    });
  }
  return pos;
}

function treeDepths(parent: number[]): number[] {
  const depth = new Array<number>(parent.length).fill(0);
  for (let v = 0; v < parent.length; v++) {
    let u = v;
    let d = 0;
    while ((parent[u] ?? -1) >= 0) {
      u = parent[u]!;
      d += 1;
    }
    depth[v] = d;
  }
  return depth;
}

function dagDepths(n: number, edges: [number, number][]): number[] {
  // longest path from a root, computed by relaxation (graphs are layered
  // and shallow, so a few sweeps converge)
  const depth = new Array<number>(n).fill(0);
  for (let sweep = 0; sweep < n; sweep++) {
    let changed = false;
    for (const [u, v] of edges) {
      if (depth[v]! < depth[u]! + 1) {
        depth[v] = depth[u]! + 1;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return depth;
}

export function positions(view: View): Pos | null {
  const kind = view.constraint_kind;
  const c = view.constraint;
  if (kind === "tree" && c.parent) return layeredPositions(treeDepths(c.parent));
  if ((kind === "dag_strong" || kind === "dag_weak") && c.n && c.edges) {
    return layeredPositions(dagDepths(c.n, c.edges));
  }
  if (!KNOWN_KINDS.includes(kind)) return null;
  const X = view.covariates;
  if (X.length === 0 || (X[0] ?? []).length === 0) return null;
  const dims = X[0]!.length;
  const col = (j: number) => X.map((row) => row[j] ?? 0);
  const scale = (xs: number[]) => {
    const lo = Math.min(...xs);
    const hi = Math.max(...xs);
    return xs.map((x) => (hi > lo ? (x - lo) / (hi - lo) : 0.5));
  };
  const xs = scale(col(0));
  const ys = dims >= 2 ? scale(col(1)) : X.map(() => 0.5);
  const pos: Pos = new Map();
  xs.forEach((x, id) => pos.set(id, [x, 1 - ys[id]!]));
  return pos;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderGauge(vm: ViewModel): HTMLElement {
  const state = gauge(vm.view);
  const box = el("div", `gauge gauge-${state}`);
  box.appendChild(
    el("span", "gauge-value", `FDP estimate ${fmt(vm.view.fdp_hat)} / alpha ${fmt(vm.view.alpha)}`),
  );
  const label =
    state === "green" ? "halted" : state === "amber" ? "estimate under alpha but set not admissible" : "running";
  box.appendChild(el("span", "gauge-label", label));
  return box;
}

function renderSparkline(history: number[]): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "sparkline");
  svg.setAttribute("viewBox", "0 0 100 24");
  const hi = Math.max(...history, 1e-9);
  const pts = history
    .map((v, i) => {
      const x = history.length > 1 ? (100 * i) / (history.length - 1) : 50;
      const y = 22 - 20 * Math.min(1, v / hi);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const line = document.createElementNS(SVG_NS, "polyline");
  line.setAttribute("points", pts);
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "currentColor");
  svg.appendChild(line);
  return svg;
}

function renderScatter(vm: ViewModel, pos: Pos, actions: Actions): SVGSVGElement {
  const view = vm.view;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "landscape");
  svg.setAttribute("viewBox", "0 0 400 400");
  const inCandidate = new Set<number>();
  for (const c of view.candidates) for (const id of c) inCandidate.add(id);
  const preview = previewIds(vm);

  const place = (id: number): [number, number] => {
    const [x, y] = pos.get(id) ?? [0.5, 0.5];
    return [12 + 376 * x, 12 + 376 * y];
  };
  for (const [id, p] of view.revealed) {
    const [cx, cy] = place(id);
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("class", "pt revealed");
    dot.setAttribute("data-id", String(id));
    dot.setAttribute("cx", String(cx));
    dot.setAttribute("cy", String(cy));
    dot.setAttribute("r", "3");
    dot.setAttribute("fill", revealedColor(p, view.alpha));
    svg.appendChild(dot);
  }
  for (const [id, g] of view.masked) {
    const [cx, cy] = place(id);
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("class", "pt masked");
    dot.setAttribute("data-id", String(id));
    dot.setAttribute("cx", String(cx));
    dot.setAttribute("cy", String(cy));
    dot.setAttribute("r", "4");
    dot.setAttribute("fill", maskedColor(g));
    if (preview.has(id)) {
      dot.setAttribute("stroke", "orange");
      dot.setAttribute("stroke-width", "3");
    } else if (inCandidate.has(id)) {
      dot.setAttribute("stroke", "#333");
      dot.setAttribute("stroke-width", "1.5");
    }
    svg.appendChild(dot);
  }
  void actions;
  return svg;
}

function renderFallbackTable(view: View): HTMLElement {
  const table = el("table", "fallback");
  const head = el("tr");
  for (const h of ["id", "status", "value"]) head.appendChild(el("th", undefined, h));
  table.appendChild(head);
  const rows: [number, string, number][] = [];
  for (const [id, g] of view.masked) rows.push([id, "masked g", g]);
  for (const [id, p] of view.revealed) rows.push([id, "revealed p", p]);
  rows.sort((a, b) => a[0] - b[0]);
  for (const [id, status, value] of rows) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, String(id)));
    tr.appendChild(el("td", undefined, status));
    tr.appendChild(el("td", undefined, fmt(value)));
    table.appendChild(tr);
  }
  return table;
}

function renderCandidates(vm: ViewModel, actions: Actions): HTMLElement {
  const box = el("div", "candidates");
  if (vm.view.halted) return box;
  vm.view.candidates.forEach((ids, i) => {
    const btn = el("button", i === vm.selected ? "candidate selected" : "candidate");
    btn.textContent = `cut ${i}: ${ids.length} ids`;
    btn.addEventListener("click", () =>
      actions.onSelectCandidate(i === vm.selected ? null : i),
    );
    box.appendChild(btn);
  });
  if (vm.selected !== null) {
    const ids = vm.view.candidates[vm.selected] ?? [];
    const preview = el("div", "preview", `would remove: ${ids.join(", ")}`);
    const confirm = el("button", "confirm", `peel ${ids.length}`);
    confirm.addEventListener("click", () => actions.onConfirmPeel([...ids]));
    preview.appendChild(confirm);
    box.appendChild(preview);
  }
  return box;
}

function renderResultPanel(view: View): HTMLElement {
  const box = el("div", "result");
  if (!view.halted) return box;
  if (view.masked.length === 0 && view.revealed.length > 0) {
    box.appendChild(
      el("div", "banner",
         `halted after ${view.step} steps; ${view.revealed.length} p-values disclosed`),
    );
    const table = el("table", "disclosed");
    for (const [id, p] of [...view.revealed].sort((a, b) => a[0] - b[0])) {
      const tr = el("tr");
      tr.appendChild(el("td", undefined, String(id)));
      tr.appendChild(el("td", undefined, p.toPrecision(6)));
      table.appendChild(tr);
    }
    box.appendChild(table);
  } else {
    box.appendChild(el("div", "banner", `halted after ${view.step} steps`));
  }
  return box;
}

export function render(
  root: HTMLElement,
  vm: ViewModel,
  actions: Actions,
  errorText: string | null = null,
): void {
  root.textContent = "";
  const view = vm.view;
  const header = el("div", "header");
  header.appendChild(el("span", "step", `step ${view.step}`));
  header.appendChild(el("span", "spec", `${view.spec.kind} accumulation`));
  header.appendChild(el("span", "kept", `${view.masked.length} in set`));
  root.appendChild(header);
  root.appendChild(renderGauge(vm));
  root.appendChild(renderSparkline(vm.fdpHistory));
  if (errorText !== null) {
    root.appendChild(el("div", "error", errorText));
  }
  const pos = positions(view);
  root.appendChild(
    pos === null ? renderFallbackTable(view) : renderScatter(vm, pos, actions),
  );
  root.appendChild(renderCandidates(vm, actions));
  if (!view.halted) {
    const auto = el("div", "autostep");
    const btn = el("button", undefined, "auto x5");
    btn.addEventListener("click", () => actions.onAutostep(5));
    auto.appendChild(btn);
    root.appendChild(auto);
  }
  root.appendChild(renderResultPanel(view));
}
