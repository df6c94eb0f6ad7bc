/**
 * objdump-based extraction backend.
 *
 * Parses `objdump -d` output into functions and basic blocks, computes
 * the 7 per-block feature counts, recovers the call graph from direct
 * call (and tail-jump) targets, and pulls string constants out of the
 * read-only data sections. Deterministic: equal binaries give equal
 * output bytes.
 */

import { execFileSync } from "child_process";

import { ClassTable, baseMnemonic, isTerminator, loadClassTable } from "./classify.js";
import { BinaryRecord, BlockFeatures, FunctionRecord, cleanStrings } from "./interchange.js";

interface Instruction {
  addr: bigint;
  mnemonic: string;
  base: string;
  operands: string;
  branchTarget?: bigint; // direct jump/call target
  refAddrs: bigint[]; // rip-relative or immediate address references
  immediates: number; // count of $imm operands
}

interface RawFunction {
  addr: bigint;
  symbol: string;
  instructions: Instruction[];
}

export interface ExtractOptions {
  role: "target" | "tpl";
  stripNames?: boolean;
  binaryId?: string;
}

function run(cmd: string, args: string[]): string {
  return execFileSync(cmd, args, { encoding: "utf-8", maxBuffer: 512 * 1024 * 1024 });
}

const SYMBOL_LINE = /^([0-9a-f]+) <(.+)>:$/;
const INSTR_LINE = /^\s+([0-9a-f]+):\s+(.*)$/;
const DIRECT_TARGET = /^([0-9a-f]+)\s+</;
const REF_COMMENT = /#\s*(?:0x)?([0-9a-f]+)(?:\s|$|<)/;
const IMMEDIATE = /\$(-?(?:0x[0-9a-f]+|\d+))/g;

export function parseDisassembly(text: string): RawFunction[] {
  const functions: RawFunction[] = [];
  let current: RawFunction | undefined;
  for (const line of text.split("\n")) {
    const symbol = SYMBOL_LINE.exec(line);
    if (symbol) {
      current = { addr: BigInt("0x" + symbol[1]), symbol: symbol[2], instructions: [] };
      functions.push(current);
      continue;
    }
    if (!current) continue;
    const instr = INSTR_LINE.exec(line);
    if (!instr) continue;
    const body = instr[2].trim();
    if (body === "" || body.startsWith("...")) continue;
    const [mnemonic, ...restParts] = body.split(/\s+/);
    if (mnemonic === "(bad)") continue;
    const operands = restParts.join(" ");
    const entry: Instruction = {
      addr: BigInt("0x" + instr[1]),
      mnemonic,
      base: mnemonic.toLowerCase(),
      operands,
      refAddrs: [],
      immediates: 0,
    };
    const direct = DIRECT_TARGET.exec(operands);
    if (direct) {
      entry.branchTarget = BigInt("0x" + direct[1]);
    }
    const comment = REF_COMMENT.exec(operands);
    if (comment) {
      entry.refAddrs.push(BigInt("0x" + comment[1]));
    }
    for (const match of operands.matchAll(IMMEDIATE)) {
      entry.immediates += 1;
      const value = match[1].startsWith("-") ? undefined : BigInt(match[1]);
      if (value !== undefined && value > 0x1000n) {
        entry.refAddrs.push(value);
      }
    }
    current.instructions.push(entry);
  }
  return functions.filter((fn) => fn.instructions.length > 0);
}

interface SectionData {
  name: string;
  addr: bigint;
  bytes: Buffer;
}

const SECTION_HEADER = /^Contents of section ([^\s:]+):/;
const DUMP_LINE = /^ ([0-9a-f]+) ((?:[0-9a-f]{2,8} ?){1,4})/;

export function parseSectionDumps(text: string): SectionData[] {
  const sections: SectionData[] = [];
  let name: string | undefined;
  let start: bigint | undefined;
  let chunks: Buffer[] = [];
  let expected: bigint | undefined;

  const flush = () => {
    if (name !== undefined && start !== undefined && chunks.length > 0) {
      sections.push({ name, addr: start, bytes: Buffer.concat(chunks) });
    }
    name = undefined;
    start = undefined;
    chunks = [];
    expected = undefined;
  };

  for (const line of text.split("\n")) {
    const header = SECTION_HEADER.exec(line);
    if (header) {
      flush();
      name = header[1];
      continue;
    }
    if (name === undefined) continue;
    const dump = DUMP_LINE.exec(line);
    if (!dump) continue;
    const addr = BigInt("0x" + dump[1]);
    const hex = dump[2].replace(/\s+/g, "");
    if (start === undefined) {
      start = addr;
      expected = addr;
    }
    if (expected !== addr) {
      // hole in the dump; keep only the first contiguous run
      continue;
    }
    const buf = Buffer.from(hex, "hex");
    chunks.push(buf);
    expected = addr + BigInt(buf.length);
  }
  flush();
  return sections;
}

const MIN_STRING_LENGTH = 4;

/** Maximal printable-ASCII runs (tabs and newlines allowed inside),
 * keyed by their start address; same spirit as binutils strings. */
export function extractStrings(sections: SectionData[]): Map<bigint, string> {
  const found = new Map<bigint, string>();
  for (const section of sections) {
    if (!section.name.startsWith(".rodata")) continue;
    const bytes = section.bytes;
    let runStart = -1;
    for (let i = 0; i <= bytes.length; i++) {
      const byte = i < bytes.length ? bytes[i] : 0;
      const printable = (byte >= 0x20 && byte <= 0x7e) || byte === 0x09 || byte === 0x0a;
      if (printable && runStart < 0) {
        runStart = i;
      } else if (!printable) {
        if (runStart >= 0 && i - runStart >= MIN_STRING_LENGTH) {
          found.set(section.addr + BigInt(runStart), bytes.toString("latin1", runStart, i));
        }
        runStart = -1;
      }
    }
  }
  return found;
}

function buildBlocks(
  fn: RawFunction,
  table: ClassTable,
  fnStarts: Set<bigint>,
  strings: Map<bigint, string>,
): { blocks: BlockFeatures[]; edges: Array<[number, number]>; fnStrings: string[]; calls: bigint[] } {
  const instrs = fn.instructions;
  const inside = new Set(instrs.map((i) => i.addr));
  const leaders = new Set<bigint>([instrs[0].addr]);
  for (let i = 0; i < instrs.length; i++) {
    const instr = instrs[i];
    const base = baseMnemonic(instr.mnemonic, table);
    if (isTerminator(base, table)) {
      if (i + 1 < instrs.length) leaders.add(instrs[i + 1].addr);
      if (instr.branchTarget !== undefined && inside.has(instr.branchTarget)) {
        leaders.add(instr.branchTarget);
      }
    }
  }

  const blockIndexByAddr = new Map<bigint, number>();
  const blockOfInstr: number[] = [];
  let blockCount = -1;
  for (const instr of instrs) {
    if (leaders.has(instr.addr)) {
      blockCount += 1;
      blockIndexByAddr.set(instr.addr, blockCount);
    }
    blockOfInstr.push(blockCount);
  }
  const nBlocks = blockCount + 1;

  const perBlock = Array.from({ length: nBlocks }, () => ({
    string_consts: 0,
    numeric_consts: 0,
    transfer_instrs: 0,
    call_instrs: 0,
    total_instrs: 0,
    arith_instrs: 0,
    offspring: 0,
  }));
  const successors: Array<Set<number>> = Array.from({ length: nBlocks }, () => new Set());
  const fnStrings: string[] = [];
  const calls: bigint[] = [];

  for (let i = 0; i < instrs.length; i++) {
    const instr = instrs[i];
    const block = blockOfInstr[i];
    const features = perBlock[block];
    const base = baseMnemonic(instr.mnemonic, table);
    features.total_instrs += 1;
    let stringRefs = 0;
    for (const ref of instr.refAddrs) {
      const value = strings.get(ref);
      if (value !== undefined) {
        stringRefs += 1;
        fnStrings.push(value);
      }
    }
    features.string_consts += stringRefs;
    features.numeric_consts += Math.max(instr.immediates - stringRefs, 0);
    if (table.arith.has(base)) features.arith_instrs += 1;
    if (table.call.has(base)) {
      features.call_instrs += 1;
      if (instr.branchTarget !== undefined && fnStarts.has(instr.branchTarget)) {
        calls.push(instr.branchTarget); // direct call; self target = recursion
      }
    }
    if (isTerminator(base, table)) {
      features.transfer_instrs += 1;
      const nextBlock = i + 1 < instrs.length ? blockOfInstr[i + 1] : undefined;
      if (table.conditionalJumps.has(base)) {
        if (instr.branchTarget !== undefined && blockIndexByAddr.has(instr.branchTarget)) {
          successors[block].add(blockIndexByAddr.get(instr.branchTarget)!);
        }
        if (nextBlock !== undefined) successors[block].add(nextBlock);
      } else if (table.unconditionalJumps.has(base)) {
        if (instr.branchTarget !== undefined && blockIndexByAddr.has(instr.branchTarget)) {
          successors[block].add(blockIndexByAddr.get(instr.branchTarget)!);
        } else if (
          instr.branchTarget !== undefined &&
          fnStarts.has(instr.branchTarget) &&
          instr.branchTarget !== fn.addr
        ) {
          calls.push(instr.branchTarget); // tail call into another function
        }
      }
      // returns end the block with no successors
    } else if (i + 1 < instrs.length && blockOfInstr[i + 1] !== block) {
      successors[block].add(blockOfInstr[i + 1]); // fallthrough into the next leader
    }
  }

  const edges: Array<[number, number]> = [];
  for (let block = 0; block < nBlocks; block++) {
    perBlock[block].offspring = [...successors[block]].filter((s) => s !== block).length;
    for (const succ of [...successors[block]].sort((a, b) => a - b)) {
      edges.push([block, succ]);
    }
  }
  return { blocks: perBlock, edges, fnStrings, calls };
}

export function extractWithObjdump(binaryPath: string, options: ExtractOptions): BinaryRecord {
  const disasm = run("objdump", ["-d", "--no-show-raw-insn", binaryPath]);
  const dumps = run("objdump", ["-s", binaryPath]);
  const table = loadTableForBinary(binaryPath);
  const rawFunctions = parseDisassembly(disasm);
  const strings = extractStrings(parseSectionDumps(dumps));

  const fnStarts = new Set(rawFunctions.map((fn) => fn.addr));
  const idByAddr = new Map<bigint, string>();
  for (const fn of rawFunctions) {
    idByAddr.set(fn.addr, `f_${fn.addr.toString(16)}`);
  }

  const functions: FunctionRecord[] = [];
  const fcgEdges: Array<[string, string]> = [];
  for (const fn of rawFunctions) {
    const { blocks, edges, fnStrings, calls } = buildBlocks(fn, table, fnStarts, strings);
    const id = idByAddr.get(fn.addr)!;
    const record: FunctionRecord = {
      id,
      blocks,
      cfg_edges: edges,
      strings: fnStrings,
    };
    if (!options.stripNames) {
      record.name = fn.symbol;
    }
    functions.push(record);
    for (const callee of calls) {
      const calleeId = idByAddr.get(callee);
      if (calleeId !== undefined) {
        fcgEdges.push([id, calleeId]);
      }
    }
  }

  return {
    id: options.binaryId ?? binaryPath.split("/").pop() ?? binaryPath,
    role: options.role,
    functions,
    fcg_edges: fcgEdges,
    strings: cleanStrings(strings.values()),
  };
}

function loadTableForBinary(binaryPath: string): ClassTable {
  const header = run("objdump", ["-f", binaryPath]);
  if (/x86-64/.test(header)) {
    return loadClassTable("x86_64");
  }
  throw new Error(`unsupported architecture in ${binaryPath}; only x86_64 tables ship currently`);
}
