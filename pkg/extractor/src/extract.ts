#!/usr/bin/env node
/**
 * libam-extract: export the .libam.json interchange format from binaries.
 *
 * Usage:
 *   libam-extract --backend objdump|r2 --role target|tpl --out DIR [--strip-names] BINARY...
 *
 * On analysis failure the exit code is non-zero and any partial output
 * file for the failing binary is removed.
 */

import { execFileSync } from "child_process";
import { existsSync, mkdirSync, unlinkSync, writeFileSync } from "fs";
import { basename, join } from "path";

import { FILE_SUFFIX, serializeRecord } from "./interchange.js";
import { extractWithObjdump } from "./objdump.js";

interface CliOptions {
  backend: "objdump" | "r2";
  role: "target" | "tpl";
  out: string;
  stripNames: boolean;
  binaries: string[];
}

function usage(): string {
  return "usage: libam-extract --backend objdump|r2 --role target|tpl --out DIR [--strip-names] BINARY...";
}

export function parseArgs(argv: string[]): CliOptions {
  const options: Partial<CliOptions> = { backend: "objdump", stripNames: false, binaries: [] };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--backend") {
      const value = argv[++i];
      if (value !== "objdump" && value !== "r2") throw new Error(`unknown backend ${value}`);
      options.backend = value;
    } else if (arg === "--role") {
      const value = argv[++i];
      if (value !== "target" && value !== "tpl") throw new Error(`unknown role ${value}`);
      options.role = value;
    } else if (arg === "--out") {
      options.out = argv[++i];
    } else if (arg === "--strip-names") {
      options.stripNames = true;
    } else if (arg === "--help" || arg === "-h") {
      throw new Error(usage());
    } else if (arg.startsWith("--")) {
      throw new Error(`unknown option ${arg}`);
    } else {
      options.binaries!.push(arg);
    }
  }
  if (!options.role || !options.out || options.binaries!.length === 0) {
    throw new Error(usage());
  }
  return options as CliOptions;
}

function extractOne(binary: string, options: CliOptions) {
  if (options.backend === "r2") {
    try {
      execFileSync("r2", ["-v"], { stdio: "ignore" });
    } catch {
      throw new Error("backend r2 requires radare2 on PATH; use --backend objdump");
    }
    throw new Error("the r2 backend is not implemented in this build; use --backend objdump");
  }
  return extractWithObjdump(binary, {
    role: options.role,
    stripNames: options.stripNames,
    binaryId: basename(binary),
  });
}

export function main(argv: string[]): number {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  mkdirSync(options.out, { recursive: true });
  for (const binary of options.binaries) {
    const outPath = join(options.out, basename(binary) + FILE_SUFFIX);
    try {
      if (!existsSync(binary)) throw new Error(`no such binary: ${binary}`);
      const record = extractOne(binary, options);
      writeFileSync(outPath, serializeRecord(record), "utf-8");
      console.error(`${binary}: ${record.functions.length} functions -> ${outPath}`);
    } catch (err) {
      if (existsSync(outPath)) unlinkSync(outPath);
      console.error(`${binary}: ${err instanceof Error ? err.message : err}`);
      return 1;
    }
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  (process.argv[1].endsWith("extract.js") || process.argv[1].endsWith("libam-extract"));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
