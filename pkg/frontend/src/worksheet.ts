/** Worksheet view model: a pure projection of the last snapshot. The
 * page can be reloaded and re-rendered from a fresh snapshot at any
 * time and must come out identical. */

import { Ast, escapeHtml, renderAst } from "./render.js";

export interface StepPayload {
  kind: "step";
  formula: string;
  ast?: Ast;
  tactic?: { kind: string; label: string; ruleset?: string };
  origin: string;
  off_program?: boolean;
  rules?: string[];
}

export interface SpecPayload {
  kind: "spec";
  status: string;
  view: string;
  model: ModelPayload | null;
  refs: { theory: string | null; problem: string[] | null; method: string[] | null };
  children: (StepPayload | SpecPayload)[];
  result: string | null;
}

export interface ModelPayload {
  given: SlotPayload[];
  where: string[];
  where_status: string[];
  find: SlotPayload[];
  relate: SlotPayload[];
}

export interface SlotPayload {
  word: string;
  filled: string | null;
}

export interface Snapshot {
  worksheet: string;
  example: string;
  mode: string;
  status: string;
  position: { path: number[]; slot: string; index: number | null };
  tree: SpecPayload;
}

export interface Row {
  kind: "spec-open" | "spec-close" | "step";
  depth: number;
  key: string;
  text: string;
  tactic?: string;
  ruleset?: string;
  origin?: string;
  offProgram?: boolean;
  rules?: string[];
  status?: string;
}

export function worksheetRows(snapshot: Snapshot): Row[] {
  const rows: Row[] = [];

  function walk(node: SpecPayload, depth: number, key: string) {
    const refs = node.refs.problem ? node.refs.problem.join("/") : "?";
    rows.push({
      kind: "spec-open",
      depth,
      key,
      text: `Problem [${refs}]`,
      status: node.status,
    });
    node.children.forEach((child, i) => {
      const childKey = `${key}.${i}`;
      if (child.kind === "spec") {
        walk(child, depth + 1, childKey);
      } else {
        rows.push({
          kind: "step",
          depth: depth + 1,
          key: childKey,
          text: child.ast ? renderAst(child.ast) : child.formula,
          tactic: child.tactic?.label,
          ruleset: child.tactic?.ruleset,
          origin: child.origin,
          offProgram: child.off_program ?? false,
          rules: child.rules ?? [],
        });
      }
    });
    if (node.result !== null && node.status === "solved") {
      rows.push({
        kind: "spec-close",
        depth,
        key: `${key}.result`,
        text: node.result,
      });
    }
  }

  walk(snapshot.tree, 0, "n");
  return rows;
}

export interface WorksheetUiState {
  justificationOpen: Set<string>;
  ruleDetails: Map<string, string[]>; // key -> fetched rule names
}

export function renderWorksheet(rows: Row[], ui: WorksheetUiState): string {
  const out: string[] = ['<div class="worksheet">'];
  for (const row of rows) {
    const pad = row.depth * 18;
    if (row.kind === "spec-open") {
      out.push(
        `<div class="spec" style="margin-left:${pad}px" data-key="${row.key}">` +
          `<span class="spec-title">${escapeHtml(row.text)}</span>` +
          `<span class="spec-status">${escapeHtml(row.status ?? "")}</span></div>`,
      );
      continue;
    }
    if (row.kind === "spec-close") {
      out.push(
        `<div class="spec-result" style="margin-left:${pad}px">` +
          `= ${escapeHtml(row.text)}</div>`,
      );
      continue;
    }
    const origin = row.origin === "user" ? "user" : "system";
    const off = row.offProgram ? " off-program" : "";
    const open = ui.justificationOpen.has(row.key);
    out.push(
      `<div class="step ${origin}${off}" style="margin-left:${pad}px" data-key="${row.key}">` +
        `<span class="formula">${escapeHtml(row.text)}</span>` +
        `<button class="just-toggle" data-key="${row.key}">${open ? "▾" : "▸"}</button>` +
        (open
          ? `<span class="justification">${escapeHtml(row.tactic ?? "")}` +
            renderRuleDetail(row, ui) +
            `</span>`
          : "") +
        `</div>`,
    );
  }
  out.push("</div>");
  return out.join("\n");
}

function renderRuleDetail(row: Row, ui: WorksheetUiState): string {
  const fetched = ui.ruleDetails.get(row.key);
  const names = fetched ?? row.rules ?? [];
  if (!names.length) {
    return "";
  }
  return ` <span class="rule-group">{${names.map(escapeHtml).join(", ")}}</span>`;
}

export function renderModelPanel(snapshot: Snapshot): string {
  const model = snapshot.tree.model;
  if (!model) {
    return '<div class="model-panel">no model</div>';
  }
  const out: string[] = ['<div class="model-panel">'];
  out.push(`<div class="view-flag">view: ${escapeHtml(snapshot.tree.view)}</div>`);
  const sections: [string, SlotPayload[]][] = [
    ["Given", model.given],
    ["Find", model.find],
    ["Relate", model.relate],
  ];
  for (const [title, slots] of sections) {
    if (!slots.length) continue;
    out.push(`<div class="model-section">${title}</div>`);
    for (const slot of slots) {
      const value = slot.filled ? escapeHtml(slot.filled) : "";
      out.push(
        `<div class="model-slot" data-word="${escapeHtml(slot.word)}">` +
          `<label>${escapeHtml(slot.word)}</label>` +
          `<input value="${value}" data-word="${escapeHtml(slot.word)}">` +
          `</div>`,
      );
    }
  }
  if (model.where.length) {
    out.push(`<div class="model-section">Where</div>`);
    model.where.forEach((w, i) => {
      const status = model.where_status[i] ?? "unchecked";
      out.push(
        `<div class="where-item ${status}">${escapeHtml(w)}` +
          ` <span class="where-status">[${status}]</span></div>`,
      );
    });
  }
  out.push("</div>");
  return out.join("\n");
}
