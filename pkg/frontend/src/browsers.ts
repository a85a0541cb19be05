/** Knowledge browser view models: examples, theories, problems and
 * methods, each a tree plus a detail pane. Selection resolves against
 * the last fetched tree only. */

import { escapeHtml } from "./render.js";

export interface TreeNode {
  name: string;
  path?: string[];
  children: TreeNode[];
}

export type BrowserKind = "example" | "theory" | "problem" | "method";

export interface BrowserState {
  kind: BrowserKind;
  tree: TreeNode[];
  selected: string[] | null;
  detail: string;
}

export function renderTree(nodes: TreeNode[], selected: string[] | null, depth = 0): string {
  const out: string[] = [];
  for (const node of nodes) {
    const path = node.path ?? [node.name];
    const isSelected = selected !== null && samePath(path, selected);
    out.push(
      `<div class="tree-node${isSelected ? " selected" : ""}" ` +
        `style="margin-left:${depth * 14}px" data-path="${escapeHtml(path.join("/"))}">` +
        `${escapeHtml(node.name)}</div>`,
    );
    out.push(renderTree(node.children ?? [], selected, depth + 1));
  }
  return out.join("\n");
}

function samePath(a: string[], b: string[]): boolean {
  return a.length === b.length && a.every((x, i) => x === b[i]);
}

export function renderExampleList(
  examples: { id: string; title: string }[],
  selected: string | null,
): string {
  return examples
    .map(
      (e) =>
        `<div class="tree-node${e.id === selected ? " selected" : ""}" ` +
        `data-example="${escapeHtml(e.id)}">${escapeHtml(e.id)}: ${escapeHtml(e.title)}</div>`,
    )
    .join("\n");
}

export function renderProblemDetail(detail: {
  path: string[];
  theory: string;
  model: Record<string, unknown>;
  postcondition: string | null;
}): string {
  const model = detail.model as {
    given: { word: string; schema: string }[];
    where: string[];
    find: { word: string; schema: string }[];
    relate: { word: string; schema: string }[];
  };
  const section = (title: string, items: { word: string; schema: string }[]) =>
    items.length
      ? `<div><b>${title}</b>: ${items
          .map((i) => `${escapeHtml(i.word)} ${escapeHtml(i.schema)}`)
          .join(", ")}</div>`
      : "";
  return [
    `<div class="detail-title">Problem [${escapeHtml(detail.path.join(", "))}]</div>`,
    `<div>Theory: ${escapeHtml(detail.theory)}</div>`,
    section("Given", model.given),
    model.where.length
      ? `<div><b>Where</b>: ${model.where.map(escapeHtml).join(", ")}</div>`
      : "",
    section("Find", model.find),
    section("Relate", model.relate),
    detail.postcondition
      ? `<div><b>Postcond</b>: ${escapeHtml(detail.postcondition)}</div>`
      : "",
  ].join("\n");
}

export function renderRulesetDetail(detail: {
  name: string;
  rules: { name: string; lhs: string; rhs?: string; conditions?: string[] }[];
}): string {
  const rows = detail.rules.map((r) => {
    const rhs = r.rhs !== undefined ? ` == ${escapeHtml(r.rhs)}` : " (evaluator)";
    const conds = r.conditions?.length
      ? ` if ${r.conditions.map(escapeHtml).join(", ")}`
      : "";
    return `<div class="rule-row">${escapeHtml(r.name)}: ${escapeHtml(r.lhs)}${rhs}${conds}</div>`;
  });
  return `<div class="detail-title">${escapeHtml(detail.name)}</div>` + rows.join("\n");
}
