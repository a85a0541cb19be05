import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

/** Static audit: the UI must contain no formula evaluation code. Every
 * mathematical judgement comes from the service; the client only
 * renders tokens and places brackets. */

const SRC = join(__dirname, "..", "src");

const FORBIDDEN = [
  /\beval\s*\(/,
  /new\s+Function\b/,
  /\bparseFloat\s*\(/,
  /\bparseInt\s*\(/,
  /\bMath\.\w+/,
  /\bBigInt\s*\(/,
];

describe("static audit", () => {
  const files = readdirSync(SRC).filter((f) => f.endsWith(".ts"));

  it("covers the whole source tree", () => {
    expect(files.sort()).toEqual(
      ["app.ts", "browsers.ts", "client.ts", "render.ts", "sequencing.ts", "worksheet.ts"].sort(),
    );
  });

  for (const file of files) {
    it(`${file} contains no evaluator`, () => {
      const text = readFileSync(join(SRC, file), "utf8");
      for (const pattern of FORBIDDEN) {
        expect(text).not.toMatch(pattern);
      }
    });
  }

  it("numeric conversion only appears for UI indices and fixity strings", () => {
    for (const file of files) {
      const text = readFileSync(join(SRC, file), "utf8");
      const uses = text.match(/Number\s*\(([^)]*)\)/g) ?? [];
      for (const use of uses) {
        expect(use.includes("dataset") || use.includes("fixity")).toBe(true);
      }
    }
  });

  it("fixity numbers parse only inside the renderer's bracket logic", () => {
    const render = readFileSync(join(SRC, "render.ts"), "utf8");
    // the renderer reads precedences from fixity strings but never
    // computes with formula tokens
    expect(render).not.toMatch(/leaf\s*[-+*/^]/);
  });
});
