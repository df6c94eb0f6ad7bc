"""End-to-end detection: embed target functions, shortlist candidate TPLs,
detect anchors, and run the area comparison per candidate.

Per-(target, tpl) comparisons are independent; with ``jobs > 1`` they run
on a thread pool and results merge in sorted order, so reports are
byte-identical regardless of worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .anchors import detect_anchors, embed_functions, query_functions
from .areas import (
    AreaEmbedder,
    AreaVerdict,
    CompareConfig,
    DetectionReport,
    ReusedTplEntry,
    TplComparison,
    area_entry,
    tpl_function_names,
)
from .embedding import EmbeddingModel
from .fcg import Fcg
from .interchange import BinaryRecord
from .vectordb import VectorIndex, filter_candidate_tpls

log = logging.getLogger(__name__)

TASK_TPL = "tpl"
TASK_AREA = "area"
TASK_BOTH = "both"


@dataclass
class DetectionConfig:
    anchor_threshold: float = 0.72
    structure_threshold: float = 0.8
    alignment_threshold: int = 3
    min_blocks: int = 5
    min_instrs: int = 10
    top_tpls: int = 200
    top_fns: int = 100
    max_stale: int = 100
    enrich: bool = True
    seed: int = 0
    jobs: int = 1
    search_mode: str = "exact"
    tasks: str = TASK_BOTH

    def compare_config(self) -> CompareConfig:
        return CompareConfig(
            structure_threshold=self.structure_threshold,
            alignment_threshold=self.alignment_threshold,
            max_stale=self.max_stale,
            enrich=self.enrich,
            seed=self.seed,
        )


class TplCorpus:
    """TPL records plus per-TPL call graphs and function vectors.

    Vectors come from the index (the offline embedding artifact), so a
    detection run never re-embeds TPL functions.
    """

    def __init__(self, records: Sequence[BinaryRecord], index: VectorIndex):
        self.records = {rec.id: rec for rec in records}
        self._graphs: dict[str, Fcg] = {}
        self._vectors: dict[str, dict[str, np.ndarray]] = {}
        for tpl, fn, vec in zip(index.tpl_ids, index.fn_ids, index.vectors):
            self._vectors.setdefault(tpl, {})[fn] = vec.astype(float)

    def record(self, tpl: str) -> BinaryRecord:
        return self.records[tpl]

    def graph(self, tpl: str) -> Fcg:
        g = self._graphs.get(tpl)
        if g is None:
            g = Fcg.from_record(self.records[tpl])
            self._graphs[tpl] = g
        return g

    def vectors(self, tpl: str) -> dict[str, np.ndarray]:
        return self._vectors.get(tpl, {})


def detect_target(
    target: BinaryRecord,
    corpus: TplCorpus,
    index: VectorIndex,
    fn_model: EmbeddingModel,
    area_model: EmbeddingModel,
    config: Optional[DetectionConfig] = None,
) -> DetectionReport:
    """Detect reused TPLs and reuse areas for one target binary."""
    config = config or DetectionConfig()
    g_target = Fcg.from_record(target)
    target_vectors = embed_functions(target, fn_model, config.min_blocks, config.min_instrs)
    hits = query_functions(
        target_vectors, index, fn_model.checksum(), top_fns=config.top_fns, mode=config.search_mode
    )
    candidates = [
        tpl for tpl in filter_candidate_tpls(hits, config.top_tpls) if tpl in corpus.records
    ]
    anchors_by_tpl = detect_anchors(hits, candidates, config.anchor_threshold)
    log.debug(
        "target %s: %d eligible functions, %d candidate TPLs, %d with anchors",
        target.id, len(target_vectors), len(candidates), len(anchors_by_tpl),
    )
    target_embedder = AreaEmbedder(g_target, target_vectors, area_model)
    cmp_config = config.compare_config()
    with_areas = config.tasks in (TASK_AREA, TASK_BOTH)

    def compare(tpl: str) -> tuple[str, Optional[AreaVerdict], list[AreaVerdict]]:
        comparison = TplComparison(
            target_id=target.id,
            tpl_rec=corpus.record(tpl),
            anchors=anchors_by_tpl[tpl],
            g_target=g_target,
            g_tpl=corpus.graph(tpl),
            target_embedder=target_embedder,
            tpl_embedder=AreaEmbedder(corpus.graph(tpl), corpus.vectors(tpl), area_model),
            config=cmp_config,
        )
        verdict = comparison.detect_tpl()
        areas = comparison.detect_areas() if (verdict is not None and with_areas) else []
        return tpl, verdict, areas

    tpls = sorted(anchors_by_tpl)
    if config.jobs > 1 and len(tpls) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(compare, tpls))
    else:
        results = [compare(tpl) for tpl in tpls]

    report = DetectionReport(target=target.id)
    for tpl, verdict, areas in sorted(results, key=lambda r: r[0]):
        if verdict is None:
            continue
        report.reused_tpls.append(
            ReusedTplEntry(tpl=tpl, structure_score=verdict.structure_score, alignment_length=verdict.alignment_length)
        )
        names = tpl_function_names(corpus.record(tpl))
        for area_verdict in sorted(areas, key=lambda v: v.pair.seed.target_fn):
            report.reuse_areas.append(area_entry(area_verdict, names))
    if config.tasks == TASK_AREA:
        report.reused_tpls = []
    if config.tasks == TASK_TPL:
        report.reuse_areas = []
    return report


def build_tpl_index(
    records: Sequence[BinaryRecord],
    fn_model: EmbeddingModel,
    min_blocks: int = 5,
    min_instrs: int = 10,
) -> VectorIndex:
    """Embed every eligible function of every TPL record into an index."""
    from .vectordb import build_index

    entries = []
    for rec in sorted(records, key=lambda r: r.id):
        vectors = embed_functions(rec, fn_model, min_blocks, min_instrs)
        entries.extend((rec.id, fn_id, vec) for fn_id, vec in sorted(vectors.items()))
    return build_index(entries, fn_model.checksum(), dim=fn_model.embed_dim)
