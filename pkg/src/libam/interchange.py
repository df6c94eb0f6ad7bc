"""Feature interchange format decoupling disassembly from the matching engine.

One binary per ``.libam.json`` file: its functions (basic-block feature
vectors plus CFG edges), the function call graph, and string constants.
Serialization is canonical (sorted keys, sorted sets, compact separators)
so equal records produce byte-identical documents.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

log = logging.getLogger(__name__)

FORMAT_VERSION = "1"
FILE_SUFFIX = ".libam.json"

ROLE_TARGET = "target"
ROLE_TPL = "tpl"

# Fixed serialization order of the per-block feature counts.
BLOCK_FIELDS = (
    "string_consts",
    "numeric_consts",
    "transfer_instrs",
    "call_instrs",
    "total_instrs",
    "arith_instrs",
    "offspring",
)


class InterchangeError(ValueError):
    """Malformed or invariant-violating interchange data.

    ``location`` points at the offending element, e.g.
    ``functions[2].blocks[0]``.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


@dataclass(frozen=True)
class BlockFeatures:
    """Statistical feature counts of one basic block (7 dimensions)."""

    string_consts: int
    numeric_consts: int
    transfer_instrs: int
    call_instrs: int
    total_instrs: int
    arith_instrs: int
    offspring: int

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in BLOCK_FIELDS)

    @staticmethod
    def from_seq(values: Iterable[int]) -> "BlockFeatures":
        vals = list(values)
        if len(vals) != len(BLOCK_FIELDS):
            raise InterchangeError(f"block needs {len(BLOCK_FIELDS)} counts, got {len(vals)}")
        return BlockFeatures(*vals)


@dataclass(frozen=True)
class FunctionRecord:
    """One disassembled function: ACFG, size counts, optional symbol name."""

    id: str
    blocks: tuple[BlockFeatures, ...]
    cfg_edges: tuple[tuple[int, int], ...]
    n_blocks: int
    n_instrs: int
    name: Optional[str] = None
    strings: frozenset[str] = frozenset()


@dataclass(frozen=True)
class BinaryRecord:
    """One binary: its functions, call-graph edges and binary-level strings."""

    id: str
    role: str
    functions: tuple[FunctionRecord, ...]
    fcg_edges: tuple[tuple[str, str], ...]
    strings: frozenset[str] = frozenset()
    version: Optional[str] = None
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {f.id: f for f in self.functions})

    def function(self, fn_id: str) -> FunctionRecord:
        return self._by_id[fn_id]

    def function_ids(self) -> frozenset[str]:
        return frozenset(self._by_id)


def clean_strings(values: Iterable[str]) -> frozenset[str]:
    """Trim NULs/whitespace and deduplicate; disassemblers disagree on trailing bytes."""
    out = set()
    for s in values:
        t = s.strip().strip("\x00").strip()
        if t:
            out.add(t)
    return frozenset(out)


def _expect(cond: bool, message: str, location: str):
    if not cond:
        raise InterchangeError(message, location)


def _check_count(value, message: str, location: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), message, location)
    _expect(value >= 0, f"{message} (negative)", location)
    return value


def validate_function(fn: FunctionRecord, location: str = "") -> None:
    loc = location or f"function {fn.id!r}"
    _expect(len(fn.blocks) == fn.n_blocks, f"n_blocks={fn.n_blocks} but {len(fn.blocks)} blocks declared", loc)
    total = sum(b.total_instrs for b in fn.blocks)
    _expect(total == fn.n_instrs, f"n_instrs={fn.n_instrs} but block totals sum to {total}", loc)
    for bi, b in enumerate(fn.blocks):
        bloc = f"{loc}.blocks[{bi}]"
        for name in BLOCK_FIELDS:
            _check_count(getattr(b, name), f"count {name} must be a non-negative integer", bloc)
        _expect(
            b.total_instrs >= b.transfer_instrs + b.call_instrs,
            f"total_instrs={b.total_instrs} < transfer+call={b.transfer_instrs + b.call_instrs}",
            bloc,
        )
        _expect(
            b.offspring <= max(fn.n_blocks - 1, 0),
            f"offspring={b.offspring} exceeds block count - 1",
            bloc,
        )
    for ei, (src, dst) in enumerate(fn.cfg_edges):
        eloc = f"{loc}.cfg_edges[{ei}]"
        for idx in (src, dst):
            _expect(isinstance(idx, int) and 0 <= idx < fn.n_blocks, f"block index {idx} out of range", eloc)


def validate_record(rec: BinaryRecord) -> None:
    """Check every structural invariant; raises InterchangeError on the first violation."""
    _expect(rec.role in (ROLE_TARGET, ROLE_TPL), f"unknown role {rec.role!r}", "role")
    _expect(bool(rec.id), "binary id must be non-empty", "id")
    seen: set[str] = set()
    for fi, fn in enumerate(rec.functions):
        floc = f"functions[{fi}]"
        _expect(bool(fn.id), "function id must be non-empty", floc)
        _expect(fn.id not in seen, f"duplicate function id {fn.id!r}", floc)
        seen.add(fn.id)
        validate_function(fn, floc)
    for ei, (src, dst) in enumerate(rec.fcg_edges):
        eloc = f"fcg_edges[{ei}]"
        for fid in (src, dst):
            _expect(fid in seen, f"edge references undeclared function {fid!r}", eloc)
    if rec.role == ROLE_TPL and rec.functions:
        named = sum(1 for f in rec.functions if f.name)
        if named / len(rec.functions) < 0.99:
            log.warning("TPL record %s has names on only %d/%d functions", rec.id, named, len(rec.functions))


def _parse_function(obj: dict, loc: str) -> FunctionRecord:
    _expect(isinstance(obj, dict), "function entry must be an object", loc)
    known = {"id", "name", "blocks", "cfg_edges", "n_blocks", "n_instrs", "strings"}
    for key in obj.keys() - known:
        log.warning("%s: ignoring unknown field %r", loc, key)
    for key in ("id", "blocks", "cfg_edges", "n_blocks", "n_instrs"):
        _expect(key in obj, f"missing required field {key!r}", loc)
    _expect(isinstance(obj["id"], str), "function id must be a string", loc)
    name = obj.get("name")
    _expect(name is None or isinstance(name, str), "name must be a string", loc)
    blocks = []
    _expect(isinstance(obj["blocks"], list), "blocks must be an array", loc)
    for bi, row in enumerate(obj["blocks"]):
        bloc = f"{loc}.blocks[{bi}]"
        _expect(isinstance(row, list), "block must be an array of counts", bloc)
        try:
            blocks.append(BlockFeatures.from_seq(row))
        except InterchangeError as exc:
            raise InterchangeError(str(exc), bloc) from None
    edges = []
    _expect(isinstance(obj["cfg_edges"], list), "cfg_edges must be an array", loc)
    for ei, pair in enumerate(obj["cfg_edges"]):
        _expect(isinstance(pair, list) and len(pair) == 2, "cfg edge must be a pair", f"{loc}.cfg_edges[{ei}]")
        edges.append((pair[0], pair[1]))
    strings = obj.get("strings", [])
    _expect(isinstance(strings, list) and all(isinstance(s, str) for s in strings), "strings must be an array of text", loc)
    return FunctionRecord(
        id=obj["id"],
        name=name,
        blocks=tuple(blocks),
        cfg_edges=tuple(sorted(set(edges))),
        n_blocks=_check_count(obj["n_blocks"], "n_blocks must be a non-negative integer", loc),
        n_instrs=_check_count(obj["n_instrs"], "n_instrs must be a non-negative integer", loc),
        strings=clean_strings(strings),
    )


def parse_binary_record(source) -> BinaryRecord:
    """Parse and fully validate one binary record from a stream, str or path."""
    if isinstance(source, (str, bytes)):
        text = source
    elif isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"not valid JSON: {exc}", "document") from None
    _expect(isinstance(obj, dict), "top level must be an object", "document")
    known = {"format_version", "id", "role", "functions", "fcg_edges", "strings", "version"}
    for key in obj.keys() - known:
        log.warning("document: ignoring unknown field %r", key)
    for key in ("format_version", "id", "role", "functions", "fcg_edges"):
        _expect(key in obj, f"missing required field {key!r}", "document")
    if str(obj["format_version"]) != FORMAT_VERSION:
        log.warning("document declares format_version %r, expected %r", obj["format_version"], FORMAT_VERSION)
    _expect(isinstance(obj["functions"], list), "functions must be an array", "document")
    functions = tuple(_parse_function(f, f"functions[{i}]") for i, f in enumerate(obj["functions"]))
    edges = []
    for ei, pair in enumerate(obj["fcg_edges"]):
        _expect(isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair),
                "fcg edge must be a pair of function ids", f"fcg_edges[{ei}]")
        edges.append((pair[0], pair[1]))
    strings = obj.get("strings", [])
    _expect(isinstance(strings, list) and all(isinstance(s, str) for s in strings),
            "strings must be an array of text", "document")
    version = obj.get("version")
    _expect(version is None or isinstance(version, str), "version must be a string", "document")
    _expect(isinstance(obj["id"], str), "id must be a string", "document")
    _expect(isinstance(obj["role"], str), "role must be a string", "document")
    rec = BinaryRecord(
        id=obj["id"],
        role=obj["role"],
        functions=tuple(sorted(functions, key=lambda f: f.id)),
        fcg_edges=tuple(sorted(set(edges))),
        strings=clean_strings(strings),
        version=version,
    )
    validate_record(rec)
    return rec


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def record_to_dict(rec: BinaryRecord) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "id": rec.id,
        "role": rec.role,
        "functions": [
            {
                "id": f.id,
                **({"name": f.name} if f.name is not None else {}),
                "blocks": [list(b.as_tuple()) for b in f.blocks],
                "cfg_edges": [list(e) for e in sorted(set(f.cfg_edges))],
                "n_blocks": f.n_blocks,
                "n_instrs": f.n_instrs,
                "strings": sorted(f.strings),
            }
            for f in sorted(rec.functions, key=lambda f: f.id)
        ],
        "fcg_edges": [list(e) for e in sorted(set(rec.fcg_edges))],
        "strings": sorted(rec.strings),
    }
    if rec.version is not None:
        doc["version"] = rec.version
    return doc


def serialize_binary_record(rec: BinaryRecord) -> str:
    """Canonical single-line document; byte-identical across runs for equal records."""
    validate_record(rec)
    return canonical_json(record_to_dict(rec)) + "\n"


def save_binary_record(rec: BinaryRecord, path: Path) -> None:
    Path(path).write_text(serialize_binary_record(rec), encoding="utf-8")


def load_binary_record(path: Path) -> BinaryRecord:
    return parse_binary_record(Path(path))


def iter_records(directory: Path) -> Iterator[BinaryRecord]:
    """Load every *.libam.json under a directory, sorted by filename."""
    for path in sorted(Path(directory).glob(f"*{FILE_SUFFIX}")):
        yield load_binary_record(path)
