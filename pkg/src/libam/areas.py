"""Area comparison: decide reuse per area pair and run the two tasks.

An area pair is judged reused when its structural similarity S (cosine of
the two area embeddings) exceeds one threshold and its alignment length L
(longest one-to-one chain of anchor pairs consistent with descendant
order on both call graphs, seed included) reaches another.

Alignment is randomized: chains are rebuilt from the seed pair until the
best length stops improving for ``max_stale`` consecutive restarts. Every
randomized step draws from a stream derived from the global seed and the
(target, tpl, pair) context, so results are reproducible and independent
of worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anchors import AnchorPair, AreaPair, generate_area_pairs
from .embedding import EmbeddingModel, area_graph, cosine, embed_graph
from .fcg import Area, Fcg
from .interchange import BinaryRecord, canonical_json
from .rng import derive_rng

DEFAULT_STRUCTURE_THRESHOLD = 0.8
DEFAULT_ALIGNMENT_THRESHOLD = 3
DEFAULT_MAX_STALE = 100


@dataclass(frozen=True)
class AreaVerdict:
    pair: AreaPair
    structure_score: float
    alignment_length: int
    reused: bool
    aligned_pairs: tuple[AnchorPair, ...]


@dataclass
class ReusedTplEntry:
    tpl: str
    structure_score: float
    alignment_length: int


@dataclass
class ReuseAreaEntry:
    tpl: str
    target_anchor: str
    members: tuple[str, ...]
    name_map: tuple[tuple[str, str], ...]  # (target fn id, tpl fn name)


@dataclass
class DetectionReport:
    target: str
    reused_tpls: list[ReusedTplEntry] = field(default_factory=list)
    reuse_areas: list[ReuseAreaEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "reused_tpls": [
                {"tpl": r.tpl, "S": r.structure_score, "L": r.alignment_length} for r in self.reused_tpls
            ],
            "reuse_areas": [
                {
                    "tpl": a.tpl,
                    "target_anchor": a.target_anchor,
                    "members": list(a.members),
                    "name_map": [{"target_fn": t, "tpl_fn_name": n} for t, n in a.name_map],
                }
                for a in self.reuse_areas
            ],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict()) + "\n"

    @staticmethod
    def from_dict(obj: dict) -> "DetectionReport":
        return DetectionReport(
            target=obj["target"],
            reused_tpls=[ReusedTplEntry(r["tpl"], r["S"], r["L"]) for r in obj.get("reused_tpls", [])],
            reuse_areas=[
                ReuseAreaEntry(
                    tpl=a["tpl"],
                    target_anchor=a["target_anchor"],
                    members=tuple(a["members"]),
                    name_map=tuple((m["target_fn"], m["tpl_fn_name"]) for m in a.get("name_map", [])),
                )
                for a in obj.get("reuse_areas", [])
            ],
        )


def decide_reuse(
    structure_score: float,
    alignment_length: int,
    structure_threshold: float = DEFAULT_STRUCTURE_THRESHOLD,
    alignment_threshold: int = DEFAULT_ALIGNMENT_THRESHOLD,
) -> bool:
    return structure_score > structure_threshold and alignment_length >= alignment_threshold


def _bind_tpl_anchor(
    candidates: list[AnchorPair], tpl_desc: frozenset[str], used_tpl: set[str], g_tpl: Fcg
) -> Optional[AnchorPair]:
    """The matched TPL anchor inside the current TPL area with the most
    descendants; ties go to the lexicographically smaller function id."""
    best: Optional[AnchorPair] = None
    best_key: Optional[tuple[int, str]] = None
    for cand in candidates:
        if cand.tpl_fn in used_tpl or cand.tpl_fn not in tpl_desc:
            continue
        key = (-len(g_tpl.descendants(cand.tpl_fn)), cand.tpl_fn)
        if best_key is None or key < best_key:
            best_key = key
            best = cand
    return best


def _random_chain(
    seed: AnchorPair,
    by_target: dict[str, list[AnchorPair]],
    g_target: Fcg,
    g_tpl: Fcg,
    rng: np.random.Generator,
) -> list[AnchorPair]:
    """One randomized descendant chain grown from the seed pair."""
    chain: list[AnchorPair] = []
    used_target = {seed.target_fn}
    used_tpl = {seed.tpl_fn}
    cur_target, cur_tpl = seed.target_fn, seed.tpl_fn
    while True:
        tar_desc = g_target.descendants(cur_target)
        candidates = sorted(t for t in by_target if t in tar_desc and t not in used_target)
        if not candidates:
            return chain
        pick = candidates[int(rng.integers(len(candidates)))]
        bound = _bind_tpl_anchor(by_target[pick], g_tpl.descendants(cur_tpl), used_tpl, g_tpl)
        if bound is None:
            return chain
        chain.append(bound)
        used_target.add(bound.target_fn)
        used_tpl.add(bound.tpl_fn)
        cur_target, cur_tpl = bound.target_fn, bound.tpl_fn


def _enrich_chain(
    aligned: list[AnchorPair],
    anchors: Sequence[AnchorPair],
    g_target: Fcg,
    g_tpl: Fcg,
) -> list[AnchorPair]:
    """Append anchor pairs sitting strictly between consecutive chain
    members on both graphs; they are evidence, not alignment length."""
    used_target = {a.target_fn for a in aligned}
    used_tpl = {a.tpl_fn for a in aligned}
    extras: list[AnchorPair] = []
    for upper, lower in zip(aligned, aligned[1:]):
        gap_t = g_target.descendants(upper.target_fn)
        gap_u = g_tpl.descendants(upper.tpl_fn)
        for cand in sorted(anchors, key=lambda a: (a.target_fn, a.tpl_fn)):
            if cand.target_fn in used_target or cand.tpl_fn in used_tpl:
                continue
            if (
                cand.target_fn in gap_t
                and lower.target_fn in g_target.descendants(cand.target_fn)
                and cand.tpl_fn in gap_u
                and lower.tpl_fn in g_tpl.descendants(cand.tpl_fn)
            ):
                extras.append(cand)
                used_target.add(cand.target_fn)
                used_tpl.add(cand.tpl_fn)
    return aligned + extras


def anchor_alignment(
    seed: AnchorPair,
    anchors: Sequence[AnchorPair],
    g_target: Fcg,
    g_tpl: Fcg,
    max_stale: int = DEFAULT_MAX_STALE,
    rng: Optional[np.random.Generator] = None,
    rng_seed: int = 0,
    enrich: bool = True,
) -> tuple[int, tuple[AnchorPair, ...]]:
    """Longest non-overlapping anchor-pair chain found by randomized
    restarts; stops after ``max_stale`` restarts without improvement.

    Returns (L, aligned pairs). L counts the seed, so a lone seed gives 1.
    """
    if seed not in anchors:
        raise ValueError(f"seed pair {seed} not in the anchor list")
    if rng is None:
        rng = derive_rng(rng_seed, "alignment", seed.tpl, seed.target_fn, seed.tpl_fn)
    by_target: dict[str, list[AnchorPair]] = {}
    for a in sorted(anchors, key=lambda a: (a.target_fn, a.tpl_fn)):
        by_target.setdefault(a.target_fn, []).append(a)

    seed_desc = g_target.descendants(seed.target_fn)
    tpl_desc = g_tpl.descendants(seed.tpl_fn)
    first_steps = [
        t
        for t in by_target
        if t in seed_desc
        and t != seed.target_fn
        and any(a.tpl_fn in tpl_desc and a.tpl_fn != seed.tpl_fn for a in by_target[t])
    ]
    best: list[AnchorPair] = []
    if first_steps:
        stale = 0
        while True:
            chain = _random_chain(seed, by_target, g_target, g_tpl, rng)
            if len(chain) > len(best):
                best = chain
                stale = 0
            else:
                stale += 1
            if stale >= max_stale:
                break
    aligned = [seed] + best
    if enrich:
        aligned = _enrich_chain(aligned, anchors, g_target, g_tpl)
    return 1 + len(best), tuple(aligned)


class AreaEmbedder:
    """Caches area embeddings per anchor for one side of the comparison."""

    def __init__(self, graph: Fcg, vectors: dict[str, np.ndarray], model: EmbeddingModel):
        self.graph = graph
        self.vectors = vectors
        self.model = model
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, area: Area) -> np.ndarray:
        vec = self._cache.get(area.anchor)
        if vec is None:
            vec = embed_graph(self.model, area_graph(self.graph, area, self.vectors, self.model.input_dim))
            self._cache[area.anchor] = vec
        return vec


def structural_similarity(pair: AreaPair, target_embedder: AreaEmbedder, tpl_embedder: AreaEmbedder) -> float:
    """Cosine similarity of the two area embeddings."""
    return cosine(target_embedder.embed(pair.target_area), tpl_embedder.embed(pair.tpl_area))


@dataclass
class CompareConfig:
    structure_threshold: float = DEFAULT_STRUCTURE_THRESHOLD
    alignment_threshold: int = DEFAULT_ALIGNMENT_THRESHOLD
    max_stale: int = DEFAULT_MAX_STALE
    enrich: bool = True
    seed: int = 0


class TplComparison:
    """All per-(target, tpl) machinery: pair evaluation with caching, the
    randomized TPL reuse decision and exhaustive area reporting."""

    def __init__(
        self,
        target_id: str,
        tpl_rec: BinaryRecord,
        anchors: Sequence[AnchorPair],
        g_target: Fcg,
        g_tpl: Fcg,
        target_embedder: AreaEmbedder,
        tpl_embedder: AreaEmbedder,
        config: CompareConfig,
    ):
        self.target_id = target_id
        self.tpl_rec = tpl_rec
        self.anchors = list(anchors)
        self.g_target = g_target
        self.g_tpl = g_tpl
        self.target_embedder = target_embedder
        self.tpl_embedder = tpl_embedder
        self.config = config
        self.area_pairs = generate_area_pairs(self.anchors, g_target, g_tpl)
        self._verdicts: dict[tuple[str, str], AreaVerdict] = {}

    def _pair_rng(self, pair: AreaPair) -> np.random.Generator:
        return derive_rng(
            self.config.seed, "alignment", self.target_id, pair.seed.tpl, pair.seed.target_fn, pair.seed.tpl_fn
        )

    def evaluate(self, pair: AreaPair) -> AreaVerdict:
        """Structure score first; alignment only runs when the score can
        still lead to a reuse verdict. Results are cached per pair."""
        key = (pair.seed.target_fn, pair.seed.tpl_fn)
        cached = self._verdicts.get(key)
        if cached is not None:
            return cached
        score = structural_similarity(pair, self.target_embedder, self.tpl_embedder)
        if score <= self.config.structure_threshold:
            verdict = AreaVerdict(pair, score, 0, False, ())
        else:
            length, aligned = anchor_alignment(
                pair.seed,
                self.anchors,
                self.g_target,
                self.g_tpl,
                max_stale=self.config.max_stale,
                rng=self._pair_rng(pair),
                enrich=self.config.enrich,
            )
            verdict = AreaVerdict(
                pair,
                score,
                length,
                decide_reuse(score, length, self.config.structure_threshold, self.config.alignment_threshold),
                aligned,
            )
        self._verdicts[key] = verdict
        return verdict

    def detect_tpl(self) -> Optional[AreaVerdict]:
        """Randomly walk the candidate area pairs without replacement and
        stop at the first one that passes both thresholds."""
        order = list(range(len(self.area_pairs)))
        rng = derive_rng(self.config.seed, "pair-order", self.target_id, self.tpl_rec.id)
        rng.shuffle(order)
        for idx in order:
            verdict = self.evaluate(self.area_pairs[idx])
            if verdict.reused:
                return verdict
        return None

    def detect_areas(self) -> list[AreaVerdict]:
        """Report reuse areas largest-first; areas fully contained in an
        already-accepted area are skipped, and an area matching several
        TPL areas keeps the highest (L, S)."""
        by_anchor: dict[str, list[AreaPair]] = {}
        for pair in self.area_pairs:
            by_anchor.setdefault(pair.seed.target_fn, []).append(pair)
        order = sorted(
            by_anchor,
            key=lambda anchor: (-by_anchor[anchor][0].target_area.size, anchor),
        )
        accepted: list[AreaVerdict] = []
        covered: list[frozenset[str]] = []
        for anchor in order:
            members = by_anchor[anchor][0].target_area.member_set()
            if any(members <= c for c in covered):
                continue
            passing = [v for v in (self.evaluate(p) for p in by_anchor[anchor]) if v.reused]
            if not passing:
                continue
            best = min(
                passing,
                key=lambda v: (-v.alignment_length, -v.structure_score, v.pair.seed.tpl_fn),
            )
            accepted.append(best)
            covered.append(members)
        return accepted


def tpl_function_names(rec: BinaryRecord) -> dict[str, str]:
    return {f.id: f.name for f in rec.functions if f.name}


def area_entry(verdict: AreaVerdict, names: dict[str, str]) -> ReuseAreaEntry:
    name_map = tuple(
        (a.target_fn, names[a.tpl_fn]) for a in verdict.aligned_pairs if a.tpl_fn in names
    )
    return ReuseAreaEntry(
        tpl=verdict.pair.seed.tpl,
        target_anchor=verdict.pair.seed.target_fn,
        members=verdict.pair.target_area.members,
        name_map=name_map,
    )
