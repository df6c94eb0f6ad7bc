/** Instruction classification tables, shipped as auditable data files. */

import { readFileSync } from "fs";
import { dirname, join } from "path";
import { fileURLToPath } from "url";

export interface ClassTable {
  arch: string;
  call: Set<string>;
  unconditionalJumps: Set<string>;
  returns: Set<string>;
  conditionalJumps: Set<string>;
  arith: Set<string>;
}

interface RawTable {
  arch: string;
  call: string[];
  unconditional_jumps: string[];
  returns: string[];
  conditional_jumps: string[];
  arith: string[];
}

export function loadClassTable(arch: string): ClassTable {
  const here = dirname(fileURLToPath(import.meta.url));
  const candidates = [join(here, "..", "data", `${arch}.json`), join(here, "..", "..", "data", `${arch}.json`)];
  let raw: RawTable | undefined;
  for (const path of candidates) {
    try {
      raw = JSON.parse(readFileSync(path, "utf-8")) as RawTable;
      break;
    } catch {
      continue;
    }
  }
  if (!raw) {
    throw new Error(`no instruction class table for architecture ${arch}`);
  }
  const table: ClassTable = {
    arch: raw.arch,
    call: new Set(raw.call),
    unconditionalJumps: new Set(raw.unconditional_jumps),
    returns: new Set(raw.returns),
    conditionalJumps: new Set(raw.conditional_jumps),
    arith: new Set(raw.arith),
  };
  const all = [table.call, table.unconditionalJumps, table.returns, table.conditionalJumps, table.arith];
  const seen = new Set<string>();
  for (const group of all) {
    for (const mnemonic of group) {
      if (seen.has(mnemonic)) {
        throw new Error(`instruction class table overlaps on ${mnemonic}`);
      }
      seen.add(mnemonic);
    }
  }
  return table;
}

/** Strip one AT&T size suffix when the base form is classified. */
export function baseMnemonic(mnemonic: string, table: ClassTable): string {
  const lower = mnemonic.toLowerCase();
  const known = (m: string) =>
    table.call.has(m) ||
    table.unconditionalJumps.has(m) ||
    table.returns.has(m) ||
    table.conditionalJumps.has(m) ||
    table.arith.has(m);
  if (known(lower)) return lower;
  const stripped = lower.replace(/[bwlq]$/, "");
  if (stripped !== lower && known(stripped)) return stripped;
  return lower;
}

export function isTransfer(base: string, table: ClassTable): boolean {
  return (
    table.unconditionalJumps.has(base) || table.conditionalJumps.has(base) || table.returns.has(base)
  );
}

export function isTerminator(base: string, table: ClassTable): boolean {
  return isTransfer(base, table);
}
