/** DOM wiring. All state lives in the last snapshot plus a little UI
 * state; every render is a pure projection of those. Optimistic
 * rendering is forbidden: the server snapshot is authoritative. */

import { ServiceClient, ServiceError } from "./client.js";
import {
  renderExampleList,
  renderProblemDetail,
  renderRulesetDetail,
  renderTree,
  TreeNode,
} from "./browsers.js";
import { escapeHtml } from "./render.js";
import { ArrangeState, moveEntry, renderArrangePanel } from "./sequencing.js";
import {
  renderModelPanel,
  renderWorksheet,
  Snapshot,
  worksheetRows,
  WorksheetUiState,
} from "./worksheet.js";

const WORKSHEET = "w1";

interface AppState {
  snapshot: Snapshot | null;
  examples: { id: string; title: string }[];
  selectedExample: string | null;
  browser: { kind: "problem" | "method" | "theory"; tree: TreeNode[] } | null;
  detail: string;
  banner: string;
  busy: boolean;
  arrange: ArrangeState;
  ui: WorksheetUiState;
}

const state: AppState = {
  snapshot: null,
  examples: [],
  selectedExample: null,
  browser: null,
  detail: "",
  banner: "",
  busy: false,
  arrange: { order: [], verdict: null },
  ui: { justificationOpen: new Set(), ruleDetails: new Map() },
};

const client = new ServiceClient("");

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element ${id}`);
  return node;
}

function render() {
  el("examples").innerHTML = renderExampleList(state.examples, state.selectedExample);
  const snap = state.snapshot;
  const exam = snap?.mode === "exam";
  (el("next-btn") as HTMLButtonElement).disabled =
    state.busy || !snap || snap.status === "solved" || exam;
  (el("next-btn") as HTMLButtonElement).title = exam ? "blocked in exam mode" : "";
  el("banner").textContent = state.banner;
  el("mode-flag").textContent = snap ? `mode: ${snap.mode}` : "";
  if (snap) {
    el("worksheet").innerHTML = renderWorksheet(worksheetRows(snap), state.ui);
    el("model").innerHTML = renderModelPanel(snap);
  }
  if (state.browser) {
    el("browser-tree").innerHTML = renderTree(state.browser.tree, null);
  }
  el("detail").innerHTML = state.detail;
  el("arrange").innerHTML = renderArrangePanel(state.arrange);
  wireDynamicHandlers();
}

async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
  // single in-flight request per worksheet
  if (state.busy) return undefined;
  state.busy = true;
  render();
  try {
    return await work();
  } catch (err) {
    state.banner =
      err instanceof ServiceError
        ? `${err.code}: ${err.message}`
        : "connection lost";
    return undefined;
  } finally {
    state.busy = false;
    render();
  }
}

async function refreshSnapshot() {
  const out = await client.snapshot(WORKSHEET);
  state.snapshot = out.snapshot as Snapshot;
}

async function openExample(id: string) {
  await guard(async () => {
    state.selectedExample = id;
    state.ui.justificationOpen.clear();
    state.ui.ruleDetails.clear();
    const out = await client.init(WORKSHEET + "-" + id, id);
    // one dialog per worksheet: reuse a per-example worksheet id
    state.snapshot = out.snapshot as Snapshot;
    (client as any).worksheetId = out.worksheet;
    state.banner = "";
  });
}

function currentWorksheetId(): string {
  return state.snapshot ? state.snapshot.worksheet : WORKSHEET;
}

async function requestNext() {
  await guard(async () => {
    const out = await client.next(currentWorksheetId());
    if (out.blocked) {
      state.banner = `blocked: ${out.blocked}`;
    }
    const snap = await client.snapshot(currentWorksheetId());
    state.snapshot = snap.snapshot as Snapshot;
  });
}

async function submitStep(text: string) {
  await guard(async () => {
    const out = await client.inputFormula(currentWorksheetId(), text);
    if (out.blocked) {
      state.banner = `blocked: ${out.blocked}`;
    } else if (out.accepted) {
      state.banner = "step accepted";
    } else {
      state.banner = `rejected: ${out.reason ?? "no derivation found"}`;
    }
    const snap = await client.snapshot(currentWorksheetId());
    state.snapshot = snap.snapshot as Snapshot;
  });
}

async function fillModelItem(word: string, text: string) {
  await guard(async () => {
    const out = await client.fillItem(currentWorksheetId(), word, text);
    state.banner = `${word}: ${out.status ?? "blocked"}`;
    const snap = await client.snapshot(currentWorksheetId());
    state.snapshot = snap.snapshot as Snapshot;
  });
}

async function toggleJustification(key: string, ruleset?: string) {
  if (state.ui.justificationOpen.has(key)) {
    state.ui.justificationOpen.delete(key);
    render();
    return;
  }
  state.ui.justificationOpen.add(key);
  if (ruleset && !state.ui.ruleDetails.has(key)) {
    await guard(async () => {
      const out = await client.rules(ruleset, currentWorksheetId());
      if (out.blocked) {
        state.ui.ruleDetails.set(key, [`blocked: ${out.blocked}`]);
      } else {
        state.ui.ruleDetails.set(
          key,
          (out.rules ?? []).map((r: { name: string }) => r.name),
        );
      }
    });
  }
  render();
}

async function toggleSpecView() {
  await guard(async () => {
    await client.toggleView(currentWorksheetId());
    const snap = await client.snapshot(currentWorksheetId());
    state.snapshot = snap.snapshot as Snapshot;
  });
}

async function arrangeValidate() {
  await guard(async () => {
    if (!state.selectedExample) return;
    const out = await client.sequence(state.selectedExample, state.arrange.order, [
      { word: "Unbekannte", text: "[c, c_2, c_3, c_4]" },
    ]);
    state.arrange.verdict = out as ArrangeState["verdict"];
  });
}

function wireDynamicHandlers() {
  document.querySelectorAll<HTMLElement>("#examples .tree-node").forEach((node) => {
    node.onclick = () => void openExample(node.dataset.example ?? "");
  });
  document.querySelectorAll<HTMLButtonElement>(".just-toggle").forEach((btn) => {
    btn.onclick = () => {
      const key = btn.dataset.key ?? "";
      const row = worksheetRows(state.snapshot as Snapshot).find((r) => r.key === key);
      void toggleJustification(key, row && "ruleset" in row ? row.ruleset : undefined);
    };
  });
  document
    .querySelectorAll<HTMLInputElement>(".model-slot input")
    .forEach((input) => {
      input.onchange = () => void fillModelItem(input.dataset.word ?? "", input.value);
    });
  document.querySelectorAll<HTMLButtonElement>(".arr-up").forEach((btn) => {
    btn.onclick = () => {
      const i = Number(btn.dataset.index);
      if (i > 0) state.arrange.order = moveEntry(state.arrange.order, i, i - 1);
      state.arrange.verdict = null;
      render();
    };
  });
  document.querySelectorAll<HTMLButtonElement>(".arr-down").forEach((btn) => {
    btn.onclick = () => {
      const i = Number(btn.dataset.index);
      if (i < state.arrange.order.length - 1)
        state.arrange.order = moveEntry(state.arrange.order, i, i + 1);
      state.arrange.verdict = null;
      render();
    };
  });
}

async function boot() {
  await client.newSession("browser");
  const ex = await client.examples();
  state.examples = ex.examples;
  const problems = await client.tree("problem");
  state.browser = { kind: "problem", tree: problems.tree };
  state.arrange.order = [
    ["vonBelastungZu", "Biegelinien"],
    ["setzeRandbedingungen", "Biegelinien"],
    ["LINEAR", "system"],
  ];
  el("next-btn").onclick = () => void requestNext();
  el("toggle-view-btn").onclick = () => void toggleSpecView();
  el("check-pre-btn").onclick = () =>
    void guard(async () => {
      const out = await client.checkPreconditions(currentWorksheetId());
      state.banner = `preconditions: ${(out.status ?? []).join(", ")}`;
      await refreshSnapshot();
    });
  el("arrange-btn").onclick = () => void arrangeValidate();
  const form = el("step-form") as HTMLFormElement;
  form.onsubmit = (e) => {
    e.preventDefault();
    const input = el("step-input") as HTMLInputElement;
    if (input.value.trim()) void submitStep(input.value.trim());
  };
  document.querySelectorAll<HTMLElement>("#browser-tabs button").forEach((btn) => {
    btn.onclick = () =>
      void guard(async () => {
        const kind = btn.dataset.kind as "problem" | "method" | "theory";
        const out = await client.tree(kind);
        state.browser = { kind, tree: out.tree };
      });
  });
  render();
}

if (typeof document !== "undefined" && document.getElementById("worksheet")) {
  void boot();
}

export { state, render, openExample, requestNext, submitStep, fillModelItem };
