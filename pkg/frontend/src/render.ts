/** Presentation-tree rendering. The service sends terms as ASTs whose
 * nodes carry their own fixity, so this renderer needs no grammar
 * knowledge and never interprets tokens: it only places brackets. */

export type Ast =
  | { leaf: string }
  | { head: string; fixity: string; children: Ast[] };

function isLeaf(a: Ast): a is { leaf: string } {
  return (a as { leaf?: string }).leaf !== undefined;
}

function looksNegative(token: string): boolean {
  return token.startsWith("-");
}

const UMINUS_PRIO = 75;

export function renderAst(a: Ast, prec = 0): string {
  if (isLeaf(a)) {
    if (looksNegative(a.leaf) && prec > UMINUS_PRIO) {
      return `(${a.leaf})`;
    }
    return a.leaf;
  }
  if (a.fixity === "list" || a.head === "[]") {
    return "[" + a.children.map((c) => renderAst(c, 0)).join(", ") + "]";
  }
  if (a.fixity === "binder") {
    const s = `%${renderAst(a.children[0], 0)}. ${renderAst(a.children[1], 0)}`;
    return prec > 0 ? `(${s})` : s;
  }
  if (a.fixity.startsWith("infix")) {
    const assoc = a.fixity.split(":")[2];
    const prio = Number(a.fixity.split(":")[1]);
    const lp = assoc === "left" ? prio : prio + 1;
    const rp = assoc === "right" ? prio : prio + 1;
    const s = `${renderAst(a.children[0], lp)} ${a.head} ${renderAst(a.children[1], rp)}`;
    return prec > prio ? `(${s})` : s;
  }
  if (a.fixity.startsWith("prefix")) {
    const prio = a.fixity.includes(":") ? Number(a.fixity.split(":")[1]) : 100;
    const parts = a.children.map((c) => renderAst(c, prio + 1));
    const s = a.head === "@" ? parts.join(" ") : `${a.head} ${parts.join(" ")}`;
    return prec > prio ? `(${s})` : s;
  }
  throw new Error(`unknown fixity ${a.fixity}`);
}

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
