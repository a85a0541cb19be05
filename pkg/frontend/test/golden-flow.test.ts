import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/client.js";
import { renderModelPanel, renderWorksheet, Snapshot, worksheetRows } from "../src/worksheet.js";
import { renderVerdict } from "../src/sequencing.js";

const ROOT = join(__dirname, "..", "..");
const PORT = 18473;
let service: ChildProcess;
let client: ServiceClient;

async function waitForHealth(base: string, tries = 100): Promise<void> {
  for (let i = 0; i < tries; i++) {
    try {
      const resp = await fetch(`${base}/health`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  const data = mkdtempSync(join(tmpdir(), "worksheet-test-"));
  service = spawn(
    "python3",
    ["-m", "stepcalc", "--listen", String(PORT), "--content", join(ROOT, "content"), "--data", data],
    { cwd: ROOT, env: { ...process.env, PYTHONPATH: join(ROOT, "src") }, stdio: "ignore" },
  );
  await waitForHealth(`http://127.0.0.1:${PORT}`);
  client = new ServiceClient(`http://127.0.0.1:${PORT}`);
  await client.newSession("golden");
}, 30000);

afterAll(() => {
  service?.kill();
});

const ui = { justificationOpen: new Set<string>(), ruleDetails: new Map<string, string[]>() };

describe("golden worksheet flow", () => {
  let snapshot: Snapshot;

  async function refresh(worksheet: string) {
    const out = await client.snapshot(worksheet);
    snapshot = out.snapshot as Snapshot;
    return snapshot;
  }

  it("opens the beam example", async () => {
    const out = await client.init("wg", "biegelinie-1");
    snapshot = out.snapshot as Snapshot;
    expect(snapshot.status).toBe("specifying");
    expect(renderModelPanel(snapshot)).toMatchSnapshot("model-panel-initial");
  });

  it("fills model items and gets per-slot feedback", async () => {
    const good = await client.fillItem("wg", "Traegerlaenge", "L");
    expect(good.status).toBe("correct");
    const load = await client.fillItem("wg", "Streckenlast", "q_0");
    expect(load.status).toBe("correct");
    const partial = await client.fillItem("wg", "Randbedingungen", "[Q 0 = q_0 * L]");
    expect(partial.status).toBe("incomplete");
    const wrong = await client.fillItem("wg", "Mysterium", "1");
    expect(wrong.status).toBe("superfluous");
    await refresh("wg");
    expect(renderModelPanel(snapshot)).toMatchSnapshot("model-panel-filled");
  });

  it("checks the preconditions", async () => {
    const out = await client.checkPreconditions("wg");
    expect(out.status).toEqual(["true"]);
    await refresh("wg");
    expect(renderModelPanel(snapshot)).toMatchSnapshot("model-panel-preconditions");
  });

  it("toggles the specification view to the method guard", async () => {
    const toggled = await client.toggleView("wg");
    expect(toggled.view).toBe("method");
    const words = toggled.model.given.map((s: { word: string }) => s.word);
    expect(words).toContain("FunktionsVariable");
    const back = await client.toggleView("wg");
    expect(back.view).toBe("problem");
  });

  it("presses next to completion", async () => {
    for (let i = 0; i < 80; i++) {
      const out = await client.next("wg");
      if (out.finished || out.status === "solved") break;
    }
    await refresh("wg");
    expect(snapshot.status).toBe("solved");
    const rows = worksheetRows(snapshot);
    const last = rows.filter((r) => r.kind === "step").at(-1);
    expect(last?.text).toBe(
      "y x = - (q_0 * x ^ 4 / 24) + L * q_0 * x ^ 3 / 6 - L ^ 2 * q_0 * x ^ 2 / 4",
    );
    expect(renderWorksheet(rows, ui)).toMatchSnapshot("worksheet-solved");
  });

  it("toggles a justification open", async () => {
    const rows = worksheetRows(snapshot);
    const step = rows.find((r) => r.kind === "step" && r.tactic?.startsWith("Rewrite_Set_Inst"));
    expect(step).toBeDefined();
    ui.justificationOpen.add(step!.key);
    const rendered = renderWorksheet(rows, ui);
    expect(rendered).toContain("Rewrite_Set_Inst [(bdv, x)] make_ratpoly_in");
    expect(rendered).toMatchSnapshot("worksheet-justification-open");
    ui.justificationOpen.clear();
  });

  it("accepts a correct step and rejects a wrong one", async () => {
    await client.init("wl", "linear-1");
    for (let i = 0; i < 8; i++) {
      await client.next("wl");
    }
    const accepted = await client.inputFormula("wl", "x = 3");
    expect(accepted.accepted).toBe(true);
    const rejected = await client.inputFormula("wl", "x = 99");
    expect(rejected.accepted).toBe(false);
    expect(rejected.reason).toBeDefined();
    const snap = (await client.snapshot("wl")).snapshot as Snapshot;
    const rows = worksheetRows(snap);
    const userRows = rows.filter((r) => r.kind === "step" && r.origin === "user");
    expect(userRows.length).toBeGreaterThan(0);
    expect(rows.some((r) => r.text === "x = 99")).toBe(false); // rejection left it out
    expect(renderWorksheet(rows, ui)).toMatchSnapshot("worksheet-linear-user-step");
  });

  it("validates the sub-problem arrangement both ways", async () => {
    const paths = [
      ["vonBelastungZu", "Biegelinien"],
      ["setzeRandbedingungen", "Biegelinien"],
      ["LINEAR", "system"],
    ];
    const extras = [{ word: "Unbekannte", text: "[c, c_2, c_3, c_4]" }];
    const ok = await client.sequence("biegelinie-1", paths, extras);
    expect(ok.valid).toBe(true);
    expect(renderVerdict(ok)).toMatchSnapshot("plan-valid");
    const bad = await client.sequence("biegelinie-1", [...paths].reverse(), extras);
    expect(bad.valid).toBe(false);
    expect(bad.cycle.length).toBeGreaterThan(0);
    expect(renderVerdict(bad)).toMatchSnapshot("plan-cycle");
  });

  it("re-rendering a refetched snapshot is identical (statelessness)", async () => {
    const first = renderWorksheet(worksheetRows(await refresh("wg")), ui);
    const second = renderWorksheet(worksheetRows(await refresh("wg")), ui);
    expect(second).toBe(first);
  });

  it("renders a syntax error from the engine verbatim", async () => {
    try {
      await client.inputFormula("wl", "x + * 2");
      expect.unreachable("syntax error expected");
    } catch (err: any) {
      expect(err.code).toBe("parse-error");
      expect(String(err.message)).toContain("offset");
    }
  });
});
