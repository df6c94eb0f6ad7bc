"""Anchor detection between a target binary and candidate TPLs, plus the
extension of each matched pair into an area pair on both call graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingModel, acfg_graph, embed_graph
from .fcg import Area, Fcg
from .interchange import BinaryRecord, FunctionRecord
from .vectordb import VectorIndex

DEFAULT_ANCHOR_THRESHOLD = 0.72
MIN_BLOCKS = 5
MIN_INSTRS = 10
TOP_FUNCTIONS = 100


@dataclass(frozen=True)
class AnchorPair:
    """A matched (target function, TPL function) pair with its similarity."""

    target_fn: str
    tpl_fn: str
    tpl: str
    score: float


@dataclass(frozen=True)
class AreaPair:
    seed: AnchorPair
    target_area: Area
    tpl_area: Area


def eligible(fn: FunctionRecord, min_blocks: int = MIN_BLOCKS, min_instrs: int = MIN_INSTRS) -> bool:
    """Functions worth embedding: strictly more than 5 blocks and 10 instructions."""
    return fn.n_blocks > min_blocks and fn.n_instrs > min_instrs


def embed_functions(
    rec: BinaryRecord,
    model: EmbeddingModel,
    min_blocks: int = MIN_BLOCKS,
    min_instrs: int = MIN_INSTRS,
) -> dict[str, np.ndarray]:
    """Vectors for every eligible function of a binary, keyed by function id."""
    return {
        fn.id: embed_graph(model, acfg_graph(fn))
        for fn in rec.functions
        if eligible(fn, min_blocks, min_instrs)
    }


def query_functions(
    vectors: dict[str, np.ndarray],
    index: VectorIndex,
    model_checksum: str,
    top_fns: int = TOP_FUNCTIONS,
    mode: str = "exact",
) -> dict[str, list[tuple[str, str, float]]]:
    """Per-target-function top-k TPL hits, the raw material both for TPL
    candidate filtering and for anchor detection."""
    return {
        fn_id: index.query_topk(vec, top_fns, model_checksum=model_checksum, mode=mode)
        for fn_id, vec in sorted(vectors.items())
    }


def detect_anchors(
    hits: dict[str, list[tuple[str, str, float]]],
    candidates: set[str] | frozenset[str] | list[str],
    threshold: float = DEFAULT_ANCHOR_THRESHOLD,
) -> dict[str, list[AnchorPair]]:
    """All pairs above the similarity threshold, grouped by TPL.

    Each target function's hits are already truncated to its top-k before
    the threshold applies; many-to-many matches are preserved on purpose,
    the alignment step resolves the overlapping later.
    """
    allowed = set(candidates)
    per_tpl: dict[str, list[AnchorPair]] = {}
    for target_fn in sorted(hits):
        for tpl, tpl_fn, score in hits[target_fn]:
            if tpl in allowed and score > threshold:
                per_tpl.setdefault(tpl, []).append(
                    AnchorPair(target_fn=target_fn, tpl_fn=tpl_fn, tpl=tpl, score=score)
                )
    for pairs in per_tpl.values():
        pairs.sort(key=lambda a: (a.target_fn, a.tpl_fn))
    return per_tpl


def generate_area_pairs(anchors: list[AnchorPair], g_target: Fcg, g_tpl: Fcg) -> list[AreaPair]:
    """One area pair per anchor pair, rooted at its two functions."""
    return [
        AreaPair(seed=a, target_area=g_target.area_of(a.target_fn), tpl_area=g_tpl.area_of(a.tpl_fn))
        for a in anchors
    ]
