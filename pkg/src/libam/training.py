"""Builds triplet datasets from homologous binary pairs and trains the
function model followed by the area model (whose node features are the
trained function vectors)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anchors import embed_functions
from .embedding import (
    AREA_INPUT_DIM,
    EmbeddingModel,
    GraphTriple,
    TrainParams,
    TrainResult,
    acfg_graph,
    area_graph,
    embed_graph,
    sample_training_areas,
    train_siamese,
)
from .fcg import Fcg
from .interchange import BinaryRecord

log = logging.getLogger(__name__)

Group = tuple[BinaryRecord, BinaryRecord]


def _eligible_common(base: BinaryRecord, twin: BinaryRecord) -> list[str]:
    from .anchors import eligible

    twin_ids = {f.id for f in twin.functions if eligible(f)}
    return sorted(f.id for f in base.functions if eligible(f) and f.id in twin_ids)


def function_triples(
    groups: Sequence[Group], seed: int = 0, max_per_group: int = 0, negatives_per_anchor: int = 2
) -> list[GraphTriple]:
    """(anchor, homologous copy, other-group function) ACFG triples.

    Negatives are size-matched: among a random other group the function
    with the closest block count is preferred, which forces the model to
    discriminate on more than graph size."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 101])))
    pools = [_eligible_common(base, twin) for base, twin in groups]
    triples: list[GraphTriple] = []
    for gi, (base, twin) in enumerate(groups):
        ids = pools[gi]
        if max_per_group and len(ids) > max_per_group:
            ids = sorted(ids[i] for i in rng.choice(len(ids), size=max_per_group, replace=False))
        others = [oi for oi in range(len(groups)) if oi != gi and pools[oi]]
        if not others:
            continue
        for fn_id in ids:
            anchor_graph = acfg_graph(base.function(fn_id))
            pos_graph = acfg_graph(twin.function(fn_id))
            anchor_blocks = base.function(fn_id).n_blocks
            for oi in rng.choice(others, size=min(negatives_per_anchor, len(others)), replace=False):
                other_rec = groups[int(oi)][0]
                ranked = sorted(
                    pools[int(oi)],
                    key=lambda nid: (abs(other_rec.function(nid).n_blocks - anchor_blocks), nid),
                )
                neg_id = ranked[int(rng.integers(min(3, len(ranked))))]
                triples.append((anchor_graph, pos_graph, acfg_graph(other_rec.function(neg_id))))
    return triples


def mined_function_triples(
    groups: Sequence[Group],
    model: EmbeddingModel,
    per_anchor: int = 2,
) -> list[GraphTriple]:
    """Triples whose negatives are the cross-group functions the current
    model confuses most with each anchor. The plain hinge loss goes
    silent once easy negatives are separated; mining keeps gradient on
    the colliding tail."""
    pools = [_eligible_common(base, twin) for base, twin in groups]
    embeds = []
    owners = []
    for gi, (base, _twin) in enumerate(groups):
        vecs = embed_functions(base, model)
        for fn_id in pools[gi]:
            v = vecs[fn_id]
            norm = np.linalg.norm(v)
            embeds.append(v / norm if norm > 0 else v)
            owners.append((gi, fn_id))
    if not embeds:
        return []
    matrix = np.array(embeds)
    triples: list[GraphTriple] = []
    for row, (gi, fn_id) in enumerate(owners):
        sims = matrix @ matrix[row]
        order = np.argsort(-sims, kind="stable")
        picked = 0
        for idx in order:
            o_gi, o_fn = owners[int(idx)]
            if o_gi == gi:
                continue
            base, twin = groups[gi]
            triples.append(
                (
                    acfg_graph(base.function(fn_id)),
                    acfg_graph(twin.function(fn_id)),
                    acfg_graph(groups[o_gi][0].function(o_fn)),
                )
            )
            picked += 1
            if picked >= per_anchor:
                break
    return triples


def _area_contexts(groups: Sequence[Group], fn_model: EmbeddingModel, min_degree: int = 5) -> list[dict]:
    contexts = []
    for base, twin in groups:
        g_base = Fcg.from_record(base)
        g_twin = Fcg.from_record(twin)
        contexts.append(
            {
                "g_base": g_base,
                "g_twin": g_twin,
                "v_base": embed_functions(base, fn_model),
                "v_twin": embed_functions(twin, fn_model),
                "areas": sample_training_areas(g_base, min_degree),
            }
        )
    return contexts


def area_triples(
    groups: Sequence[Group],
    fn_model: EmbeddingModel,
    seed: int = 0,
    min_degree: int = 5,
) -> list[GraphTriple]:
    """(area, homologous area, other-group area) triples whose node
    features are the trained function vectors."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 202])))
    contexts = _area_contexts(groups, fn_model, min_degree)
    triples: list[GraphTriple] = []
    for gi, ctx in enumerate(contexts):
        others = [oi for oi in range(len(contexts)) if oi != gi and contexts[oi]["areas"]]
        if not others:
            continue
        for area in ctx["areas"]:
            oi = others[int(rng.integers(len(others)))]
            other = contexts[oi]
            ranked = sorted(other["areas"], key=lambda a: (abs(a.size - area.size), a.anchor))
            neg_area = ranked[int(rng.integers(min(3, len(ranked))))]
            anchor_graph = area_graph(ctx["g_base"], area, ctx["v_base"], AREA_INPUT_DIM)
            pos_graph = area_graph(ctx["g_twin"], ctx["g_twin"].area_of(area.anchor), ctx["v_twin"], AREA_INPUT_DIM)
            neg_graph = area_graph(other["g_base"], neg_area, other["v_base"], AREA_INPUT_DIM)
            triples.append((anchor_graph, pos_graph, neg_graph))
    return triples


def mined_area_triples(
    groups: Sequence[Group],
    fn_model: EmbeddingModel,
    area_model: EmbeddingModel,
    per_anchor: int = 2,
    min_degree: int = 5,
) -> list[GraphTriple]:
    """Area triples with the most-confused cross-group areas as negatives."""
    contexts = _area_contexts(groups, fn_model, min_degree)
    graphs = []
    owners = []
    for gi, ctx in enumerate(contexts):
        for area in ctx["areas"]:
            graphs.append(area_graph(ctx["g_base"], area, ctx["v_base"], AREA_INPUT_DIM))
            owners.append((gi, area))
    if not graphs:
        return []
    embeds = []
    for g in graphs:
        v = embed_graph(area_model, g)
        norm = np.linalg.norm(v)
        embeds.append(v / norm if norm > 0 else v)
    matrix = np.array(embeds)
    triples: list[GraphTriple] = []
    for row, (gi, area) in enumerate(owners):
        ctx = contexts[gi]
        sims = matrix @ matrix[row]
        order = np.argsort(-sims, kind="stable")
        pos_graph = area_graph(ctx["g_twin"], ctx["g_twin"].area_of(area.anchor), ctx["v_twin"], AREA_INPUT_DIM)
        picked = 0
        for idx in order:
            if owners[int(idx)][0] == gi:
                continue
            triples.append((graphs[row], pos_graph, graphs[int(idx)]))
            picked += 1
            if picked >= per_anchor:
                break
    return triples


@dataclass
class PipelineTrainParams:
    """Schedules for the two model passes; exposed via the config file.

    With ``mine`` set, each model trains twice: a bootstrap pass on
    size-matched negatives, then a pass that adds the negatives the
    bootstrap model confuses most.
    """

    function: TrainParams = field(default_factory=lambda: TrainParams())
    area: TrainParams = field(default_factory=lambda: TrainParams())
    max_function_triples_per_group: int = 0
    mine: bool = True
    mined_negatives: int = 2


@dataclass
class TrainedModels:
    fn_model: EmbeddingModel
    area_model: EmbeddingModel
    fn_result: TrainResult
    area_result: TrainResult


def train_models(groups: Sequence[Group], params: Optional[PipelineTrainParams] = None, seed: int = 0) -> TrainedModels:
    params = params or PipelineTrainParams()
    fn_triples = function_triples(groups, seed=seed, max_per_group=params.max_function_triples_per_group)
    if not fn_triples:
        raise ValueError("training corpus produced no function triples")
    log.info("training function model on %d triples", len(fn_triples))
    fn_result = train_siamese(fn_triples, params.function, seed=seed)
    if params.mine:
        mined = mined_function_triples(groups, fn_result.model, per_anchor=params.mined_negatives)
        log.info("retraining function model with %d mined triples", len(mined))
        fn_result = train_siamese(fn_triples + mined, params.function, seed=seed)
    a_triples = area_triples(groups, fn_result.model, seed=seed)
    if not a_triples:
        raise ValueError("training corpus produced no area triples")
    log.info("training area model on %d triples", len(a_triples))
    area_result = train_siamese(a_triples, params.area, seed=seed)
    if params.mine:
        mined = mined_area_triples(groups, fn_result.model, area_result.model, per_anchor=params.mined_negatives)
        log.info("retraining area model with %d mined triples", len(mined))
        area_result = train_siamese(a_triples + mined, params.area, seed=seed)
    return TrainedModels(
        fn_model=fn_result.model,
        area_model=area_result.model,
        fn_result=fn_result,
        area_result=area_result,
    )
