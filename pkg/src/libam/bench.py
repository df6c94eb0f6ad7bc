"""Metrics, synthetic ground-truth corpora, and benchmark runs.

The generator stands in for hand-labeled reuse datasets: it builds random
TPL binaries (layered call graphs, random block features), then builds
targets by implanting a TPL area into fresh noise graphs and perturbing
the copy (feature jitter plus edge churn), emitting exact ground truth.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingModel
from .fcg import Fcg
from .interchange import (
    BinaryRecord,
    BlockFeatures,
    FunctionRecord,
    ROLE_TARGET,
    ROLE_TPL,
    canonical_json,
    save_binary_record,
    validate_record,
)
from .pipeline import DetectionConfig, TplCorpus, build_tpl_index, detect_target
from .vectordb import VectorIndex

log = logging.getLogger(__name__)


class InfeasibleParamsError(ValueError):
    pass


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class Metrics:
    """Precision/recall are None (undefined) when their denominator is 0."""

    precision: Optional[float]
    recall: Optional[float]
    f1: float

    def as_row(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def metrics(c: Confusion) -> Metrics:
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(precision=precision, recall=recall, f1=f1)


# -- ground truth --------------------------------------------------------------


@dataclass
class GroundTruth:
    """Per target: reused tpl ids, and per (target, tpl) the implanted
    target functions with their true TPL function names."""

    tpls: dict[str, set[str]] = field(default_factory=dict)
    areas: dict[tuple[str, str], dict[str, str]] = field(default_factory=dict)

    def add(self, target: str, tpl: str, members: dict[str, str]) -> None:
        self.tpls.setdefault(target, set()).add(tpl)
        self.areas[(target, tpl)] = dict(members)

    def to_dict(self) -> dict:
        targets: dict[str, dict] = {}
        for target, tpls in self.tpls.items():
            targets[target] = {
                "tpls": sorted(tpls),
                "areas": {
                    tpl: {"functions": dict(sorted(self.areas[(target, tpl)].items()))}
                    for tpl in sorted(tpls)
                },
            }
        return {"format_version": "1", "targets": targets}

    def to_json(self) -> str:
        return canonical_json(self.to_dict()) + "\n"

    @staticmethod
    def from_dict(obj: dict) -> "GroundTruth":
        gt = GroundTruth()
        for target, entry in obj.get("targets", {}).items():
            for tpl in entry.get("tpls", []):
                gt.add(target, tpl, entry.get("areas", {}).get(tpl, {}).get("functions", {}))
        return gt

    @staticmethod
    def load(path: Path) -> "GroundTruth":
        return GroundTruth.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- synthetic corpus generation ----------------------------------------------


@dataclass
class CorpusParams:
    n_tpls: int = 30
    n_targets: int = 50
    fns_per_binary: tuple[int, int] = (40, 90)
    implant_ratio: float = 0.35
    perturbation: float = 0.1
    implants_per_target: tuple[int, int] = (1, 2)
    node_split_rate: float = 0.0
    ineligible_ratio: float = 0.15

    def check(self) -> None:
        if self.n_tpls < 1 or self.n_targets < 0:
            raise InfeasibleParamsError("need at least one TPL")
        if not (0 < self.implant_ratio <= 1):
            raise InfeasibleParamsError("implant_ratio must be in (0, 1]")
        if self.fns_per_binary[0] < 8 or self.fns_per_binary[0] > self.fns_per_binary[1]:
            raise InfeasibleParamsError("fns_per_binary range too small to build layered graphs")
        if self.perturbation < 0 or self.perturbation >= 1:
            raise InfeasibleParamsError("perturbation must be in [0, 1)")


@dataclass
class Corpus:
    tpls: list[BinaryRecord]
    targets: list[BinaryRecord]
    ground_truth: GroundTruth

    def save(self, out_dir: Path) -> None:
        out = Path(out_dir)
        (out / "tpls").mkdir(parents=True, exist_ok=True)
        (out / "targets").mkdir(parents=True, exist_ok=True)
        for rec in self.tpls:
            save_binary_record(rec, out / "tpls" / f"{rec.id}.libam.json")
        for rec in self.targets:
            save_binary_record(rec, out / "targets" / f"{rec.id}.libam.json")
        (out / "ground_truth.json").write_text(self.ground_truth.to_json(), encoding="utf-8")

    @staticmethod
    def load(root: Path) -> "Corpus":
        from .interchange import iter_records

        root = Path(root)
        return Corpus(
            tpls=list(iter_records(root / "tpls")),
            targets=list(iter_records(root / "targets")),
            ground_truth=GroundTruth.load(root / "ground_truth.json"),
        )


_BLOCK_PLAIN = 0
_BLOCK_COND = 1
_BLOCK_LOOP = 2


def _structured_cfg(rng: np.random.Generator, n_blocks: int) -> tuple[set[tuple[int, int]], list[int]]:
    """A nested control-flow skeleton built from sequence / if-else /
    loop / switch constructs with per-function motif preferences; block
    roles come back so feature sampling can reflect them."""
    weights = rng.dirichlet([1.5, 1.0, 0.8, 0.5])
    edges: set[tuple[int, int]] = set()
    roles: list[int] = []

    def alloc(role: int) -> int:
        roles.append(role)
        return len(roles) - 1

    def build(budget: int) -> tuple[int, list[int]]:
        if budget <= 1:
            b = alloc(_BLOCK_PLAIN)
            return b, [b]
        pick = int(rng.choice(4, p=weights))
        if pick == 1 and budget >= 4:  # if-else diamond
            entry = alloc(_BLOCK_COND)
            arms = budget - 2
            left = 1 + int(rng.integers(arms - 1))
            e_l, x_l = build(left)
            e_r, x_r = build(arms - left)
            join = alloc(_BLOCK_PLAIN)
            edges.add((entry, e_l))
            edges.add((entry, e_r))
            for x in x_l + x_r:
                edges.add((x, join))
            return entry, [join]
        if pick == 2 and budget >= 2:  # loop with back edge
            header = alloc(_BLOCK_LOOP)
            e_b, x_b = build(budget - 1)
            edges.add((header, e_b))
            for x in x_b:
                edges.add((x, header))
            return header, [header]
        if pick == 3 and budget >= 6:  # switch fan-out
            entry = alloc(_BLOCK_COND)
            join_budget = budget - 2
            k = min(2 + int(rng.integers(3)), join_budget)
            cuts = sorted(rng.choice(np.arange(1, join_budget), size=k - 1, replace=False)) if k > 1 else []
            sizes = np.diff([0, *cuts, join_budget])
            join = alloc(_BLOCK_PLAIN)
            for size in sizes:
                e_a, x_a = build(int(size))
                edges.add((entry, e_a))
                for x in x_a:
                    edges.add((x, join))
            return entry, [join]
        head = alloc(_BLOCK_PLAIN)  # sequence
        e_rest, x_rest = build(budget - 1)
        edges.add((head, e_rest))
        return head, x_rest

    build(n_blocks)
    return edges, roles


def _random_blocks(rng: np.random.Generator, n_blocks: int) -> tuple[list[BlockFeatures], list[tuple[int, int]]]:
    """Random block features and CFG edges.

    Each function draws its own rate parameters (a lognormal hyperprior)
    and motif mix, giving it a distinct statistical and structural
    signature that survives the jitter perturbation; without this,
    synthetic functions are near-clones and no similarity model could
    tell them apart.
    """
    rate = lambda mean: float(mean * rng.lognormal(0.0, 1.2))
    r_string = rate(0.4)
    r_numeric = rate(2.2)
    r_transfer = rate(1.2)
    r_call = rate(0.7)
    r_arith = rate(3.0)
    r_filler = rate(4.0)

    edges, roles = _structured_cfg(rng, n_blocks)
    succ: dict[int, set[int]] = {}
    for s, d in edges:
        succ.setdefault(s, set()).add(d)
    blocks = []
    for i in range(n_blocks):
        role = roles[i]
        transfer = int(rng.poisson(r_transfer * (2.0 if role != _BLOCK_PLAIN else 1.0)))
        call = int(rng.poisson(r_call))
        arith = int(rng.poisson(r_arith * (2.5 if role == _BLOCK_LOOP else 1.0)))
        filler = int(rng.poisson(r_filler)) + 1
        blocks.append(
            BlockFeatures(
                string_consts=int(rng.poisson(r_string)),
                numeric_consts=int(rng.poisson(r_numeric)),
                transfer_instrs=transfer,
                call_instrs=call,
                total_instrs=transfer + call + arith + filler,
                arith_instrs=arith,
                offspring=len(succ.get(i, set()) - {i}),
            )
        )
    return blocks, sorted(edges)


def _random_function(rng: np.random.Generator, fn_id: str, name: Optional[str], eligible: bool) -> FunctionRecord:
    if eligible:
        n_blocks = int(np.clip(rng.lognormal(2.6, 0.6), 6, 80))
    else:
        n_blocks = int(rng.integers(1, 6))
    blocks, edges = _random_blocks(rng, n_blocks)
    return FunctionRecord(
        id=fn_id,
        name=name,
        blocks=tuple(blocks),
        cfg_edges=tuple(edges),
        n_blocks=n_blocks,
        n_instrs=sum(b.total_instrs for b in blocks),
        strings=frozenset(
            f"s{int(rng.integers(10 ** 6)):06d}" for _ in range(int(rng.poisson(0.8)))
        ),
    )


def _call_graph_edges(rng: np.random.Generator, fn_ids: list[str], hubs: bool = False) -> list[tuple[str, str]]:
    """A spine-plus-subtrees call graph; every edge points forward in one
    topological order, so the graph is a DAG whose descendant-set sizes
    walk down from ~n to 1 in small steps (a dense spectrum of area sizes
    for implant picking). ``hubs`` gives a share of nodes fan-out past
    degree 5 so that degree-based area sampling finds training seeds at
    every scale."""
    n = len(fn_ids)
    if n < 2:
        return []
    order = [fn_ids[int(i)] for i in rng.permutation(n)]
    spine_len = max(int(n * rng.uniform(0.35, 0.6)), min(n, 4))
    edges: set[tuple[str, str]] = set()
    for i in range(spine_len - 1):
        edges.add((order[i], order[i + 1]))
    for p in range(spine_len, n):
        parent = int(rng.integers(p))
        edges.add((order[parent], order[p]))
    extra = int(rng.binomial(n, rng.uniform(0.1, 0.35)))
    for _ in range(extra):
        i = int(rng.integers(n - 1))
        j = int(rng.integers(i + 1, n))
        edges.add((order[i], order[j]))
    if hubs:
        for i in range(n - 7):
            if rng.random() < 0.3:
                fan = 6 + int(rng.integers(3))
                targets = rng.choice(np.arange(i + 1, n), size=min(fan, n - i - 1), replace=False)
                for j in targets:
                    edges.add((order[i], order[int(j)]))
    return sorted(edges)


def _make_tpl(rng: np.random.Generator, tpl_id: str, n_fns: int, ineligible_ratio: float, hubs: bool = False) -> BinaryRecord:
    fns = []
    for i in range(n_fns):
        eligible = rng.random() >= ineligible_ratio
        fn_id = f"{tpl_id}_f{i:03d}"
        fns.append(_random_function(rng, fn_id, name=fn_id, eligible=eligible))
    edges = _call_graph_edges(rng, [f.id for f in fns], hubs=hubs)
    rec = BinaryRecord(
        id=tpl_id,
        role=ROLE_TPL,
        functions=tuple(sorted(fns, key=lambda f: f.id)),
        fcg_edges=tuple(edges),
        strings=frozenset(f"{tpl_id}-marker-{i}" for i in range(3)),
        version="1.0",
    )
    validate_record(rec)
    return rec


def _jitter_count(rng: np.random.Generator, value: int, strength: float) -> int:
    if strength <= 0:
        return value
    return max(int(round(value * (1.0 + rng.normal(0.0, strength)))), 0)


def _perturb_function(rng: np.random.Generator, fn: FunctionRecord, new_id: str, strength: float) -> FunctionRecord:
    """Jitter block features and churn CFG edges, keeping counts legal."""
    edges = set(fn.cfg_edges)
    if strength > 0 and fn.n_blocks > 1:
        kept = {e for e in edges if rng.random() >= strength}
        inserts = int(rng.binomial(max(len(edges), 1), strength))
        for _ in range(inserts):
            src = int(rng.integers(fn.n_blocks))
            dst = int(rng.integers(fn.n_blocks))
            if src != dst:
                kept.add((src, dst))
        edges = kept
    succ: dict[int, set[int]] = {}
    for s, d in edges:
        succ.setdefault(s, set()).add(d)
    blocks = []
    for i, b in enumerate(fn.blocks):
        transfer = _jitter_count(rng, b.transfer_instrs, strength)
        call = _jitter_count(rng, b.call_instrs, strength)
        arith = _jitter_count(rng, b.arith_instrs, strength)
        total = max(_jitter_count(rng, b.total_instrs, strength), transfer + call, 1)
        blocks.append(
            BlockFeatures(
                string_consts=_jitter_count(rng, b.string_consts, strength),
                numeric_consts=_jitter_count(rng, b.numeric_consts, strength),
                transfer_instrs=transfer,
                call_instrs=call,
                total_instrs=total,
                arith_instrs=arith,
                offspring=len(succ.get(i, set()) - {i}),
            )
        )
    return FunctionRecord(
        id=new_id,
        name=None,
        blocks=tuple(blocks),
        cfg_edges=tuple(sorted(edges)),
        n_blocks=fn.n_blocks,
        n_instrs=sum(b.total_instrs for b in blocks),
        strings=fn.strings,
    )


def _pick_implant_area(rng: np.random.Generator, graph: Fcg, rec: BinaryRecord, ratio: float):
    """An area rooted at an eligible anchor whose size lands in the
    +/-25% window around ratio * function count; partial reuse by
    construction (reused entry points are non-trivial functions).

    Small graphs may not offer an area in the strict window; the window
    then widens in deterministic steps before giving up.
    """
    from .anchors import eligible

    n_fns = len(rec.functions)
    areas = [
        graph.area_of(anchor)
        for anchor in sorted(graph.nodes)
        if eligible(rec.function(anchor))
    ]
    lo = 0.75 * ratio * n_fns
    hi = 1.25 * ratio * n_fns
    for widen in (1.0, 1.35, 1.8, 2.5):
        sized = [a for a in areas if lo / widen <= a.size <= hi * widen]
        if sized:
            if widen > 1.0:
                log.warning(
                    "%s: widened implant window by %.2fx to find an area near size %.0f",
                    rec.id, widen, ratio * n_fns,
                )
            return sized[int(rng.integers(len(sized)))]
    raise InfeasibleParamsError(
        f"no eligible-anchored area with size near {ratio * n_fns:.0f} out of {n_fns} functions; "
        "adjust implant_ratio or fns_per_binary"
    )


def _perturb_fcg_edges(
    rng: np.random.Generator,
    members: list[str],
    edges: set[tuple[str, str]],
    anchor: str,
    strength: float,
) -> set[tuple[str, str]]:
    """Edge churn that preserves reachability of every member from the
    anchor, so ground-truth membership stays exact."""

    def reachable(es: set[tuple[str, str]]) -> bool:
        succ: dict[str, list[str]] = {}
        for s, d in es:
            succ.setdefault(s, []).append(d)
        seen = {anchor}
        stack = [anchor]
        while stack:
            for nxt in succ.get(stack.pop(), []):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen >= set(members)

    out = set(edges)
    if strength <= 0:
        return out
    for edge in sorted(edges):
        if rng.random() < strength:
            trial = out - {edge}
            if reachable(trial):
                out = trial
    inserts = int(rng.binomial(max(len(edges), 1), strength))
    for _ in range(inserts):
        src = members[int(rng.integers(len(members)))]
        dst = members[int(rng.integers(len(members)))]
        if src != dst:
            out.add((src, dst))
    return out


def gen_corpus(params: CorpusParams, seed: int = 0) -> Corpus:
    """Deterministic synthetic corpus with exact reuse ground truth."""
    params.check()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 51966])))
    tpls = []
    for t in range(params.n_tpls):
        n_fns = int(rng.integers(params.fns_per_binary[0], params.fns_per_binary[1] + 1))
        tpls.append(_make_tpl(rng, f"tpl{t:03d}", n_fns, params.ineligible_ratio))
    graphs = {rec.id: Fcg.from_record(rec) for rec in tpls}

    targets = []
    truth = GroundTruth()
    for t in range(params.n_targets):
        target_id = f"target{t:03d}"
        n_noise = int(rng.integers(params.fns_per_binary[0], params.fns_per_binary[1] + 1))
        counter = 0
        fns: list[FunctionRecord] = []
        edges: set[tuple[str, str]] = set()

        noise_ids = []
        for _ in range(n_noise):
            fn_id = f"fn_{counter:04d}"
            counter += 1
            eligible = rng.random() >= params.ineligible_ratio
            fns.append(_random_function(rng, fn_id, name=None, eligible=eligible))
            noise_ids.append(fn_id)
        edges.update(_call_graph_edges(rng, noise_ids))

        n_implants = int(rng.integers(params.implants_per_target[0], params.implants_per_target[1] + 1))
        reused = rng.choice(params.n_tpls, size=min(n_implants, params.n_tpls), replace=False)
        for tpl_idx in sorted(int(i) for i in reused):
            tpl = tpls[tpl_idx]
            area = _pick_implant_area(rng, graphs[tpl.id], tpl, params.implant_ratio)
            id_map = {}
            for member in area.members:
                new_id = f"fn_{counter:04d}"
                counter += 1
                id_map[member] = new_id
                fns.append(_perturb_function(rng, tpl.function(member), new_id, params.perturbation))
            member_ids = [id_map[m] for m in area.members]
            sub_edges = {
                (id_map[s], id_map[d])
                for s, d in graphs[tpl.id].induced_subgraph(area.members).edges
            }
            sub_edges = _perturb_fcg_edges(
                rng, member_ids, sub_edges, id_map[area.anchor], params.perturbation
            )
            edges.update(sub_edges)
            for _ in range(1 + int(rng.integers(2))):
                caller = noise_ids[int(rng.integers(len(noise_ids)))]
                edges.add((caller, id_map[area.anchor]))
            truth.add(target_id, tpl.id, {id_map[m]: tpl.function(m).name for m in area.members})

        rec = BinaryRecord(
            id=target_id,
            role=ROLE_TARGET,
            functions=tuple(sorted(fns, key=lambda f: f.id)),
            fcg_edges=tuple(sorted(edges)),
            strings=frozenset(f"{target_id}-note-{i}" for i in range(2)),
        )
        validate_record(rec)
        targets.append(rec)
    return Corpus(tpls=tpls, targets=targets, ground_truth=truth)


# -- training corpus -----------------------------------------------------------


@dataclass
class TrainCorpusParams:
    n_groups: int = 24
    fns_per_binary: tuple[int, int] = (30, 60)
    perturbation: float = 0.1
    ineligible_ratio: float = 0.15


def gen_training_corpus(params: TrainCorpusParams, seed: int = 0) -> list[tuple[BinaryRecord, BinaryRecord]]:
    """Homologous pairs: a base binary and a perturbed twin with the same
    function ids and names, standing in for recompilation variance."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7353])))
    groups = []
    for g in range(params.n_groups):
        n_fns = int(rng.integers(params.fns_per_binary[0], params.fns_per_binary[1] + 1))
        base = _make_tpl(rng, f"train{g:03d}-v0", n_fns, params.ineligible_ratio, hubs=True)
        twin_fns = []
        for fn in base.functions:
            p = _perturb_function(rng, fn, fn.id, params.perturbation)
            twin_fns.append(
                FunctionRecord(
                    id=fn.id, name=fn.name, blocks=p.blocks, cfg_edges=p.cfg_edges,
                    n_blocks=p.n_blocks, n_instrs=p.n_instrs, strings=p.strings,
                )
            )
        twin = BinaryRecord(
            id=f"train{g:03d}-v1",
            role=ROLE_TPL,
            functions=tuple(twin_fns),
            fcg_edges=base.fcg_edges,
            strings=base.strings,
            version="1.1",
        )
        validate_record(twin)
        groups.append((base, twin))
    return groups


def save_training_corpus(groups: Sequence[tuple[BinaryRecord, BinaryRecord]], out_dir: Path) -> None:
    out = Path(out_dir)
    (out / "binaries").mkdir(parents=True, exist_ok=True)
    manifest = []
    for base, twin in groups:
        save_binary_record(base, out / "binaries" / f"{base.id}.libam.json")
        save_binary_record(twin, out / "binaries" / f"{twin.id}.libam.json")
        manifest.append([base.id, twin.id])
    (out / "train_manifest.json").write_text(
        canonical_json({"format_version": "1", "groups": manifest}) + "\n", encoding="utf-8"
    )


def load_training_corpus(root: Path) -> list[tuple[BinaryRecord, BinaryRecord]]:
    from .interchange import load_binary_record

    root = Path(root)
    manifest = json.loads((root / "train_manifest.json").read_text(encoding="utf-8"))
    groups = []
    for base_id, twin_id in manifest["groups"]:
        groups.append(
            (
                load_binary_record(root / "binaries" / f"{base_id}.libam.json"),
                load_binary_record(root / "binaries" / f"{twin_id}.libam.json"),
            )
        )
    return groups


# -- benchmark ------------------------------------------------------------------


@dataclass
class BenchmarkResult:
    tpl_confusion: Confusion
    tpl_metrics: Metrics
    area_confusion: Confusion
    area_metrics: Metrics
    name_accuracy: Optional[float]
    reports: dict[str, "DetectionReport"] = field(default_factory=dict)

    def rows(self, label: str = "") -> list[dict]:
        return [
            {"task": "tpl", "config": label, **self.tpl_metrics.as_row()},
            {"task": "area", "config": label, **self.area_metrics.as_row()},
        ]


def score_reports(corpus: Corpus, reports: dict[str, "DetectionReport"]) -> BenchmarkResult:
    """Score detection reports against the corpus ground truth.

    TPL-level confusion counts TPLs per target over the corpus TPL
    universe; area-level counts (tpl, target function) claims, with no
    TN (the non-reused function space is unbounded).
    """
    universe = {rec.id for rec in corpus.tpls}
    tpl_conf = Confusion()
    area_conf = Confusion()
    names_total = 0
    names_correct = 0
    for target in corpus.targets:
        report = reports[target.id]
        detected = {r.tpl for r in report.reused_tpls}
        true_tpls = corpus.ground_truth.tpls.get(target.id, set())
        tp = len(detected & true_tpls)
        fp = len(detected - true_tpls)
        fn = len(true_tpls - detected)
        tn = len(universe) - tp - fp - fn
        tpl_conf = tpl_conf + Confusion(tp, fp, fn, tn)

        claimed: set[tuple[str, str]] = set()
        for area in report.reuse_areas:
            claimed.update((area.tpl, member) for member in area.members)
        true_fns: set[tuple[str, str]] = set()
        for (t_id, tpl), members in corpus.ground_truth.areas.items():
            if t_id == target.id:
                true_fns.update((tpl, fn_id) for fn_id in members)
        area_conf = area_conf + Confusion(
            tp=len(claimed & true_fns),
            fp=len(claimed - true_fns),
            fn=len(true_fns - claimed),
            tn=0,
        )
        for area in report.reuse_areas:
            mapping = corpus.ground_truth.areas.get((target.id, area.tpl))
            if mapping is None:
                continue
            for target_fn, tpl_name in area.name_map:
                if target_fn in mapping:
                    names_total += 1
                    names_correct += int(mapping[target_fn] == tpl_name)
    return BenchmarkResult(
        tpl_confusion=tpl_conf,
        tpl_metrics=metrics(tpl_conf),
        area_confusion=area_conf,
        area_metrics=metrics(area_conf),
        name_accuracy=(names_correct / names_total) if names_total else None,
        reports=dict(reports),
    )


def run_benchmark(
    corpus: Corpus,
    fn_model: EmbeddingModel,
    area_model: EmbeddingModel,
    config: Optional[DetectionConfig] = None,
    index: Optional[VectorIndex] = None,
) -> BenchmarkResult:
    """Run the full pipeline on every target and score both tasks."""
    config = config or DetectionConfig()
    if index is None:
        index = build_tpl_index(corpus.tpls, fn_model, config.min_blocks, config.min_instrs)
    tpl_corpus = TplCorpus(corpus.tpls, index)
    reports = {}
    for target in corpus.targets:
        reports[target.id] = detect_target(target, tpl_corpus, index, fn_model, area_model, config)
    return score_reports(corpus, reports)
