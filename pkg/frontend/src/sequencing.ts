/** Sub-problem arrangement panel. The panel only reorders candidates
 * and shows the service's plan or diagnosis; validation lives on the
 * other side of the wire. */

import { escapeHtml } from "./render.js";

export interface ArrangeState {
  order: string[][]; // problem paths in the proposed order
  verdict: PlanVerdict | null;
}

export interface PlanVerdict {
  valid: boolean;
  order?: string[][];
  edges?: { producer: number; consumer: number; slot: string; ambiguous: boolean }[];
  unfed?: { node: number; slot: string }[];
  cycle?: number[];
}

/** Apply one drag: move the entry at `from` so it sits at `to`. */
export function moveEntry(order: string[][], from: number, to: number): string[][] {
  const next = order.slice();
  const [entry] = next.splice(from, 1);
  next.splice(to, 0, entry);
  return next;
}

export function renderArrangePanel(state: ArrangeState): string {
  const out: string[] = ['<div class="arrange-panel">'];
  state.order.forEach((path, i) => {
    out.push(
      `<div class="arrange-entry" data-index="${i}">` +
        `<button class="arr-up" data-index="${i}">↑</button>` +
        `<button class="arr-down" data-index="${i}">↓</button> ` +
        `${escapeHtml(path.join("/"))}</div>`,
    );
  });
  if (state.verdict) {
    out.push(renderVerdict(state.verdict));
  }
  out.push("</div>");
  return out.join("\n");
}

export function renderVerdict(v: PlanVerdict): string {
  if (v.valid) {
    const edges = (v.edges ?? [])
      .map(
        (e) =>
          `${e.producer} → ${e.consumer} via ${escapeHtml(e.slot)}` +
          (e.ambiguous ? " (by type only)" : ""),
      )
      .join("; ");
    return `<div class="plan valid">plan valid: ${edges || "no dependencies"}</div>`;
  }
  const parts: string[] = [];
  if (v.cycle?.length) {
    parts.push(`cycle through entries ${v.cycle.join(" → ")}`);
  }
  for (const u of v.unfed ?? []) {
    parts.push(`entry ${u.node} misses input ${escapeHtml(u.slot)}`);
  }
  return `<div class="plan invalid">no valid sequence: ${parts.join("; ")}</div>`;
}
