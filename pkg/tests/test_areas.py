import json

import numpy as np
import pytest

from libam.anchors import AnchorPair, AreaPair
from libam.areas import (
    AreaEmbedder,
    CompareConfig,
    DetectionReport,
    TplComparison,
    anchor_alignment,
    decide_reuse,
    structural_similarity,
)
from libam.embedding import EmbeddingModel
from libam.fcg import Fcg
from libam.interchange import BinaryRecord, BlockFeatures, FunctionRecord


def pairs_of(aligned):
    return [(a.target_fn, a.tpl_fn) for a in aligned]


def figure8():
    g_target = Fcg(["1", "2", "3", "4", "5", "6"], [("1", "2"), ("2", "3"), ("3", "4"), ("5", "1"), ("6", "5")])
    g_tpl = Fcg(["A", "B", "C", "D"], [("A", "B"), ("B", "C"), ("C", "D")])
    raw = [("5", "A"), ("1", "A"), ("6", "A"), ("6", "C"), ("3", "C"), ("4", "C"), ("4", "D")]
    anchors = [AnchorPair(t, u, "lib", 0.9) for t, u in raw]
    return g_target, g_tpl, anchors


def test_alignment_figure8_configuration():
    g_target, g_tpl, anchors = figure8()
    seed = anchors[1]  # (1, A)
    length, aligned = anchor_alignment(seed, anchors, g_target, g_tpl, rng_seed=0)
    assert length == 3
    assert pairs_of(aligned) == [("1", "A"), ("3", "C"), ("4", "D")]


def test_alignment_leaf_seed_scores_one():
    g_target = Fcg(["t"], [])
    g_tpl = Fcg(["u"], [])
    seed = AnchorPair("t", "u", "lib", 0.9)
    length, aligned = anchor_alignment(seed, [seed], g_target, g_tpl, rng_seed=0)
    assert length == 1
    assert pairs_of(aligned) == [("t", "u")]


def test_alignment_requires_seed_in_list():
    g = Fcg(["a"], [])
    with pytest.raises(ValueError):
        anchor_alignment(AnchorPair("a", "a", "lib", 0.9), [], g, g)


def test_alignment_chain_is_consistent_and_one_to_one(rng):
    for trial in range(40):
        g_target, g_tpl, anchors = random_instance(rng)
        seed = anchors[int(rng.integers(len(anchors)))]
        length, aligned = anchor_alignment(seed, anchors, g_target, g_tpl, rng_seed=trial)
        chain = aligned[:length]
        assert chain[0] == seed
        for prev, cur in zip(chain, chain[1:]):
            assert cur.target_fn in g_target.descendants(prev.target_fn)
            assert cur.tpl_fn in g_tpl.descendants(prev.tpl_fn)
        targets = [a.target_fn for a in aligned]
        tpls = [a.tpl_fn for a in aligned]
        assert len(set(targets)) == len(targets)
        assert len(set(tpls)) == len(tpls)


def random_instance(rng, max_nodes=12):
    def random_dag(n):
        nodes = [f"n{i}" for i in range(n)]
        edges = [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.25]
        return Fcg(nodes, edges), nodes

    g_target, t_nodes = random_dag(int(rng.integers(6, max_nodes + 1)))
    g_tpl, u_nodes = random_dag(int(rng.integers(6, max_nodes + 1)))
    wanted = int(rng.integers(4, 11))
    raw = set()
    while len(raw) < wanted:
        raw.add((t_nodes[int(rng.integers(len(t_nodes)))], u_nodes[int(rng.integers(len(u_nodes)))]))
    anchors = [AnchorPair(t, u, "lib", 0.9) for t, u in sorted(raw)]
    return g_target, g_tpl, anchors


def exhaustive_best_chain(seed, anchors, g_target, g_tpl):
    """Depth-first enumeration of every legal chain; the true optimum."""
    best = 1

    def extend(cur, used_t, used_u, length):
        nonlocal best
        best = max(best, length)
        dt = g_target.descendants(cur.target_fn)
        du = g_tpl.descendants(cur.tpl_fn)
        for cand in anchors:
            if cand.target_fn in used_t or cand.tpl_fn in used_u:
                continue
            if cand.target_fn in dt and cand.tpl_fn in du:
                extend(cand, used_t | {cand.target_fn}, used_u | {cand.tpl_fn}, length + 1)

    extend(seed, {seed.target_fn}, {seed.tpl_fn}, 1)
    return best


def test_alignment_against_exhaustive_oracle(rng):
    equal = 0
    trials = 60
    for trial in range(trials):
        g_target, g_tpl, anchors = random_instance(rng)
        seed = anchors[int(rng.integers(len(anchors)))]
        length, _ = anchor_alignment(seed, anchors, g_target, g_tpl, rng_seed=trial)
        optimum = exhaustive_best_chain(seed, anchors, g_target, g_tpl)
        assert length <= optimum
        equal += int(length == optimum)
    assert equal / trials >= 0.95


def test_full_chain_found_on_plain_ladder():
    g_target = Fcg(["1", "2", "3"], [("1", "2"), ("2", "3")])
    g_tpl = Fcg(["A", "B", "C"], [("A", "B"), ("B", "C")])
    anchors = [
        AnchorPair("1", "A", "lib", 0.9),
        AnchorPair("2", "B", "lib", 0.9),
        AnchorPair("3", "C", "lib", 0.9),
    ]
    length, aligned = anchor_alignment(anchors[0], anchors, g_target, g_tpl, rng_seed=0)
    assert length == 3
    assert pairs_of(aligned) == [("1", "A"), ("2", "B"), ("3", "C")]


def test_enrichment_fills_gap_left_by_a_short_chain():
    # With a crippled search budget the walk can settle on the short
    # chain (1,A) -> (3,C); the in-between anchor pair (2,B) must then be
    # appended as aligned evidence without raising L.
    g_target = Fcg(["1", "2", "3"], [("1", "2"), ("2", "3")])
    g_tpl = Fcg(["A", "B", "C"], [("A", "B"), ("B", "C")])
    anchors = [
        AnchorPair("1", "A", "lib", 0.9),
        AnchorPair("2", "B", "lib", 0.9),
        AnchorPair("3", "C", "lib", 0.9),
    ]
    seen_enrichment = False
    for seed in range(64):
        length, aligned = anchor_alignment(
            anchors[0], anchors, g_target, g_tpl, max_stale=1, rng_seed=seed
        )
        assert length <= 3
        chain = aligned[:length]
        extras = aligned[length:]
        targets = [a.target_fn for a in aligned]
        assert len(set(targets)) == len(targets)
        if length == 2 and pairs_of(chain) == [("1", "A"), ("3", "C")]:
            assert pairs_of(extras) == [("2", "B")]
            seen_enrichment = True
    assert seen_enrichment


def test_enrichment_disabled_keeps_chain_only():
    g_target, g_tpl, anchors = figure8()
    seed = anchors[1]
    _, aligned = anchor_alignment(seed, anchors, g_target, g_tpl, rng_seed=0, enrich=False)
    assert pairs_of(aligned) == [("1", "A"), ("3", "C"), ("4", "D")]


@pytest.mark.parametrize(
    "score,length,expected",
    [
        (0.85, 3, True),
        (0.85, 2, False),
        (0.80, 5, False),  # strict on S
        (0.81, 3, True),
        (0.9, 1, False),
    ],
)
def test_decide_reuse(score, length, expected):
    assert decide_reuse(score, length) is expected


# -- structural similarity -----------------------------------------------------


def unit_vectors(names, dim=64, seed=0):
    rng = np.random.default_rng(seed)
    return {n: rng.normal(size=dim) for n in names}


def test_structural_similarity_identical_areas():
    g = Fcg(["a", "b", "c"], [("a", "b"), ("a", "c")])
    vectors = unit_vectors(["a", "b", "c"])
    model = EmbeddingModel.initialize(64, seed=1)
    embedder = AreaEmbedder(g, vectors, model)
    pair = AreaPair(AnchorPair("a", "a", "lib", 0.9), g.area_of("a"), g.area_of("a"))
    assert structural_similarity(pair, embedder, embedder) == pytest.approx(1.0, abs=1e-6)


def test_structural_similarity_permutation_invariant():
    g1 = Fcg(["a", "b", "c"], [("a", "b"), ("b", "c")])
    g2 = Fcg(["x", "y", "z"], [("x", "y"), ("y", "z")])
    vecs = unit_vectors(["a", "b", "c"])
    renamed = {"x": vecs["a"], "y": vecs["b"], "z": vecs["c"]}
    model = EmbeddingModel.initialize(64, seed=1)
    pair = AreaPair(AnchorPair("a", "x", "lib", 0.9), g1.area_of("a"), g2.area_of("x"))
    s = structural_similarity(pair, AreaEmbedder(g1, vecs, model), AreaEmbedder(g2, renamed, model))
    assert s == pytest.approx(1.0, abs=1e-6)


def test_nonhomologous_areas_mostly_below_threshold(bench_corpus, bench_index, toy_models):
    """Trained toy model pushes at least 90% of random non-homologous
    area pairs under the 0.8 structure threshold."""
    rng = np.random.default_rng(7)
    corpus, models = bench_corpus, toy_models
    embeds = []
    for rec in corpus.tpls[:12]:
        g = Fcg.from_record(rec)
        vectors = {
            tpl_fn: vec
            for (tpl, tpl_fn, vec) in zip(bench_index.tpl_ids, bench_index.fn_ids, bench_index.vectors)
            if tpl == rec.id
        }
        vectors = {k: v.astype(float) for k, v in vectors.items()}
        anchors = sorted(g.nodes)
        for a in rng.choice(anchors, size=5, replace=False):
            area = g.area_of(a)
            if area.size < 2:
                continue
            embedder = AreaEmbedder(g, vectors, models.area_model)
            embeds.append((rec.id, embedder.embed(area)))
    from libam.embedding import cosine

    scores = [
        cosine(e1, e2)
        for i, (t1, e1) in enumerate(embeds)
        for t2, e2 in embeds[i + 1 :]
        if t1 != t2
    ]
    assert len(scores) >= 100
    below = sum(1 for s in scores if s < 0.8)
    assert below / len(scores) >= 0.9


# -- detection-stage behavior ---------------------------------------------------


def tiny_function(fn_id, name=None):
    return FunctionRecord(
        id=fn_id,
        name=name,
        blocks=(BlockFeatures(0, 1, 1, 0, 6, 2, 0),),
        cfg_edges=(),
        n_blocks=1,
        n_instrs=6,
    )


def test_detect_tpl_no_anchors_not_reused():
    g = Fcg(["x"], [])
    tpl_rec = BinaryRecord(id="lib", role="tpl", functions=(tiny_function("x"),), fcg_edges=())
    model = EmbeddingModel.initialize(64, seed=0)
    comparison = TplComparison(
        target_id="tgt",
        tpl_rec=tpl_rec,
        anchors=[],
        g_target=g,
        g_tpl=g,
        target_embedder=AreaEmbedder(g, {}, model),
        tpl_embedder=AreaEmbedder(g, {}, model),
        config=CompareConfig(),
    )
    assert comparison.detect_tpl() is None


def stub_scores(monkeypatch, scores):
    import libam.areas as areas_module

    monkeypatch.setattr(
        areas_module,
        "structural_similarity",
        lambda pair, a, b: scores[(pair.seed.target_fn, pair.seed.tpl_fn)],
    )


def chain_graphs():
    g_target = Fcg(["t1", "t2", "t3"], [("t1", "t2"), ("t2", "t3")])
    g_tpl = Fcg(["u1", "u2", "u3"], [("u1", "u2"), ("u2", "u3")])
    anchors = [
        AnchorPair("t1", "u1", "lib", 0.9),
        AnchorPair("t2", "u2", "lib", 0.9),
        AnchorPair("t3", "u3", "lib", 0.9),
    ]
    return g_target, g_tpl, anchors


def build_comparison(anchors, g_target, g_tpl, config=None):
    tpl_rec = BinaryRecord(
        id="lib",
        role="tpl",
        functions=tuple(tiny_function(n, name=f"{n}_name") for n in sorted(g_tpl.nodes)),
        fcg_edges=tuple(g_tpl.edges),
    )
    model = EmbeddingModel.initialize(64, seed=0)
    return TplComparison(
        target_id="tgt",
        tpl_rec=tpl_rec,
        anchors=anchors,
        g_target=g_target,
        g_tpl=g_tpl,
        target_embedder=AreaEmbedder(g_target, {}, model),
        tpl_embedder=AreaEmbedder(g_tpl, {}, model),
        config=config or CompareConfig(),
    )


def test_detect_tpl_finds_last_passing_pair(monkeypatch):
    g_target, g_tpl, anchors = chain_graphs()
    # only the root pair passes structure; wherever the random walk puts
    # it, exhaustive no-replacement iteration must still find it
    stub_scores(
        monkeypatch,
        {("t1", "u1"): 0.95, ("t2", "u2"): 0.1, ("t3", "u3"): 0.1},
    )
    comparison = build_comparison(anchors, g_target, g_tpl)
    verdict = comparison.detect_tpl()
    assert verdict is not None
    assert verdict.pair.seed.target_fn == "t1"
    assert verdict.alignment_length == 3


def test_detect_tpl_rejects_when_all_fail(monkeypatch):
    g_target, g_tpl, anchors = chain_graphs()
    stub_scores(monkeypatch, {(a.target_fn, a.tpl_fn): 0.5 for a in anchors})
    comparison = build_comparison(anchors, g_target, g_tpl)
    assert comparison.detect_tpl() is None


def test_detect_tpl_requires_alignment_length(monkeypatch):
    g_target, g_tpl, anchors = chain_graphs()
    stub_scores(monkeypatch, {("t1", "u1"): 0.95, ("t2", "u2"): 0.95, ("t3", "u3"): 0.95})
    comparison = build_comparison(
        anchors, g_target, g_tpl, CompareConfig(alignment_threshold=4)
    )
    assert comparison.detect_tpl() is None  # longest possible chain is 3


def test_detect_areas_skips_contained_and_reports(monkeypatch):
    g_target, g_tpl, anchors = chain_graphs()
    stub_scores(monkeypatch, {(a.target_fn, a.tpl_fn): 0.95 for a in anchors})
    comparison = build_comparison(anchors, g_target, g_tpl)
    assert comparison.detect_tpl() is not None
    verdicts = comparison.detect_areas()
    # t2/t3 areas are contained in the accepted t1 area
    assert [v.pair.seed.target_fn for v in verdicts] == ["t1"]
    assert verdicts[0].alignment_length == 3


def test_detect_areas_prefers_higher_alignment_then_score(monkeypatch):
    g_target = Fcg(["t1", "t2", "t3"], [("t1", "t2"), ("t2", "t3")])
    # two TPL-side candidates for anchor t1: u1 roots a 3-chain, w1 only itself
    g_tpl = Fcg(["u1", "u2", "u3", "w1"], [("u1", "u2"), ("u2", "u3")])
    anchors = [
        AnchorPair("t1", "u1", "lib", 0.9),
        AnchorPair("t1", "w1", "lib", 0.9),
        AnchorPair("t2", "u2", "lib", 0.9),
        AnchorPair("t3", "u3", "lib", 0.9),
    ]
    # w1-pair has the higher structure score but only L=1
    stub_scores(
        monkeypatch,
        {("t1", "u1"): 0.9, ("t1", "w1"): 0.99, ("t2", "u2"): 0.85, ("t3", "u3"): 0.85},
    )
    comparison = build_comparison(anchors, g_target, g_tpl, CompareConfig(alignment_threshold=1))
    comparison.detect_tpl()
    verdicts = comparison.detect_areas()
    top = [v for v in verdicts if v.pair.seed.target_fn == "t1"]
    assert len(top) == 1
    assert top[0].pair.seed.tpl_fn == "u1"  # L=3 wins over S=0.99 with L=1


def test_report_round_trip_and_schema():
    report = DetectionReport(target="tgt")
    from libam.areas import ReusedTplEntry, ReuseAreaEntry

    report.reused_tpls.append(ReusedTplEntry("lib", 0.91, 4))
    report.reuse_areas.append(
        ReuseAreaEntry(tpl="lib", target_anchor="t1", members=("t1", "t2"), name_map=(("t1", "u1_name"),))
    )
    payload = json.loads(report.to_json())
    assert payload == {
        "target": "tgt",
        "reused_tpls": [{"tpl": "lib", "S": 0.91, "L": 4}],
        "reuse_areas": [
            {
                "tpl": "lib",
                "target_anchor": "t1",
                "members": ["t1", "t2"],
                "name_map": [{"target_fn": "t1", "tpl_fn_name": "u1_name"}],
            }
        ],
    }
    again = DetectionReport.from_dict(payload)
    assert again.to_json() == report.to_json()
