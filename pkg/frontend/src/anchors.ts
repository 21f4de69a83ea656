/** Anchor text codec, bit-compatible with the engine's format:
 *  one `x y z  u_1 ... u_N` line per anchor, `#` comments. */

import type { AnchorPoint } from "./types";

export interface ParseIssue {
  line: number;
  message: string;
}

export class AnchorParseError extends Error {
  issues: ParseIssue[];
  constructor(issues: ParseIssue[]) {
    super(issues.map((i) => `line ${i.line}: ${i.message}`).join("; "));
    this.issues = issues;
  }
}

const SIMPLEX_SUM_TOL = 1e-6;
const SIMPLEX_NEG_TOL = 1e-9;

export function isSimplexCode(code: number[]): boolean {
  if (code.length < 1 || code.some((v) => !Number.isFinite(v))) return false;
  const sum = code.reduce((a, b) => a + b, 0);
  if (Math.abs(sum - 1) > SIMPLEX_SUM_TOL) return false;
  return Math.min(...code) >= -SIMPLEX_NEG_TOL;
}

export function parseAnchorText(text: string): AnchorPoint[] {
  const anchors: AnchorPoint[] = [];
  const issues: ParseIssue[] = [];
  let expected: number | null = null;
  text.split(/\r?\n/).forEach((raw, idx) => {
    const line = (raw.split("#", 1)[0] ?? "").trim();
    if (!line) return;
    const fields = line.split(/\s+/);
    if (fields.length < 4) {
      issues.push({ line: idx + 1, message: `expected \`x y z u_1 ... u_N\`, got ${fields.length} fields` });
      return;
    }
    const values = fields.map(Number);
    if (values.some((v) => Number.isNaN(v))) {
      issues.push({ line: idx + 1, message: `not a number: ${line}` });
      return;
    }
    const code = values.slice(3);
    if (expected === null) expected = code.length;
    else if (code.length !== expected) {
      issues.push({ line: idx + 1, message: `latent code has ${code.length} components, previous lines had ${expected}` });
      return;
    }
    if (!isSimplexCode(code)) {
      issues.push({ line: idx + 1, message: "latent code must be nonnegative and sum to 1" });
      return;
    }
    anchors.push({ pos: [values[0]!, values[1]!, values[2]!], code });
  });
  if (issues.length) throw new AnchorParseError(issues);
  if (!anchors.length) throw new AnchorParseError([{ line: 0, message: "no anchors in input" }]);
  return anchors;
}

/** Canonical serialization; JS shortest round-trip formatting keeps values
 *  bit-exact through export -> import. */
export function formatAnchorText(anchors: AnchorPoint[]): string {
  const lines = ["# anchor latent codes: x y z  u_1 ... u_N"];
  for (const a of anchors) {
    lines.push(`${a.pos.map(String).join(" ")}  ${a.code.map(String).join(" ")}`);
  }
  return lines.join("\n") + "\n";
}

export function clampToBounds(
  pos: [number, number, number],
  bounds: [number[], number[]],
): { pos: [number, number, number]; clamped: boolean } {
  const lo = bounds[0];
  const hi = bounds[1];
  let clamped = false;
  const out = pos.map((v, i) => {
    const c = Math.min(Math.max(v, lo[i]!), hi[i]!);
    if (c !== v) clamped = true;
    return c;
  }) as [number, number, number];
  return { pos: out, clamped };
}
