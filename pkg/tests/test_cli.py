import json

import pytest

from libam.cli import main
from libam.embedding import EmbeddingModel
from libam.vectordb import VectorIndex

GEN_ARGS = [
    "--n-tpls", "4", "--n-targets", "3", "--fns-min", "30", "--fns-max", "45",
    "--implant-ratio", "0.35", "--perturbation", "0.1",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen -> train -> index -> detect, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    train_dir = root / "train-corpus"
    bench_dir = root / "bench-corpus"
    models = root / "models"
    assert main(["gen", "--kind", "train", "--out", str(train_dir), "--n-groups", "4",
                 "--fns-min", "25", "--fns-max", "35", "--seed", "0"]) == 0
    assert main(["gen", "--kind", "bench", "--out", str(bench_dir), "--seed", "0", *GEN_ARGS]) == 0
    cfg = root / "train.json"
    cfg.write_text(json.dumps({"epochs": 2, "learning_rate": 1e-3}), encoding="utf-8")
    assert main(["train", "--corpus", str(train_dir), "--out", str(models), "--config", str(cfg)]) == 0
    index = root / "corpus.lvdb"
    assert main(["index", "--tpls", str(bench_dir / "tpls"), "--model", str(models / "function.s2v"),
                 "--out", str(index)]) == 0
    return root


def target_files(workspace):
    return sorted((workspace / "bench-corpus" / "targets").glob("*.libam.json"))


def detect(workspace, out_name, *extra):
    out = workspace / out_name
    code = main([
        "detect",
        "--index", str(workspace / "corpus.lvdb"),
        "--tpls", str(workspace / "bench-corpus" / "tpls"),
        "--models", str(workspace / "models"),
        "--out", str(out),
        "--seed", "0",
        *extra,
        *[str(p) for p in target_files(workspace)],
    ])
    return code, out


def test_gen_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--out", str(a), "--seed", "3", *GEN_ARGS]) == 0
    assert main(["gen", "--out", str(b), "--seed", "3", *GEN_ARGS]) == 0
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_train_writes_both_models(workspace):
    fn_model = EmbeddingModel.load(workspace / "models" / "function.s2v")
    area_model = EmbeddingModel.load(workspace / "models" / "area.s2v")
    assert fn_model.input_dim == 7
    assert area_model.input_dim == 64


def test_train_same_seed_same_checksums(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 2, "learning_rate": 1e-3}), encoding="utf-8")
    out = tmp_path / "models2"
    assert main(["train", "--corpus", str(workspace / "train-corpus"), "--out", str(out),
                 "--config", str(cfg)]) == 0
    first = EmbeddingModel.load(workspace / "models" / "function.s2v")
    second = EmbeddingModel.load(out / "function.s2v")
    assert first.checksum() == second.checksum()


def test_train_missing_corpus_exits_2(tmp_path):
    assert main(["train", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "m")]) == 2


def test_index_entry_count_matches_eligible(workspace):
    from libam.anchors import eligible
    from libam.interchange import iter_records

    index = VectorIndex.load(workspace / "corpus.lvdb")
    expected = sum(
        sum(1 for f in rec.functions if eligible(f))
        for rec in iter_records(workspace / "bench-corpus" / "tpls")
    )
    assert len(index) == expected


def test_index_rebuild_identical_bytes(workspace, tmp_path):
    out = tmp_path / "again.lvdb"
    assert main(["index", "--tpls", str(workspace / "bench-corpus" / "tpls"),
                 "--model", str(workspace / "models" / "function.s2v"), "--out", str(out)]) == 0
    assert out.read_bytes() == (workspace / "corpus.lvdb").read_bytes()


def test_index_wrong_dim_model_exits_2(workspace, tmp_path):
    assert main(["index", "--tpls", str(workspace / "bench-corpus" / "tpls"),
                 "--model", str(workspace / "models" / "area.s2v"),
                 "--out", str(tmp_path / "bad.lvdb")]) == 2


def test_detect_writes_reports(workspace):
    code, out = detect(workspace, "reports")
    assert code == 0
    reports = sorted(out.glob("*.report.json"))
    assert len(reports) == len(target_files(workspace))
    payload = json.loads(reports[0].read_text(encoding="utf-8"))
    assert set(payload) == {"target", "reused_tpls", "reuse_areas"}


def test_detect_tasks_tpl_skips_areas(workspace):
    code, out = detect(workspace, "reports-tpl", "--tasks", "tpl")
    assert code == 0
    for path in out.glob("*.report.json"):
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload["reuse_areas"] == []


def test_detect_jobs_do_not_change_bytes(workspace):
    _, out1 = detect(workspace, "reports-j1", "--jobs", "1")
    _, out8 = detect(workspace, "reports-j8", "--jobs", "8")
    for path in sorted(out1.glob("*.report.json")):
        assert path.read_bytes() == (out8 / path.name).read_bytes()


def test_detect_missing_target_exits_2(workspace, tmp_path):
    code = main([
        "detect",
        "--index", str(workspace / "corpus.lvdb"),
        "--tpls", str(workspace / "bench-corpus" / "tpls"),
        "--models", str(workspace / "models"),
        "--out", str(tmp_path / "r"),
        str(tmp_path / "missing.libam.json"),
    ])
    assert code == 2


def test_detect_mismatched_index_exits_2(workspace, tmp_path):
    other_models = tmp_path / "other-models"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "seed": 9}), encoding="utf-8")
    assert main(["train", "--corpus", str(workspace / "train-corpus"), "--out", str(other_models),
                 "--config", str(cfg)]) == 0
    code = main([
        "detect",
        "--index", str(workspace / "corpus.lvdb"),
        "--tpls", str(workspace / "bench-corpus" / "tpls"),
        "--models", str(other_models),
        "--out", str(tmp_path / "r"),
        *[str(p) for p in target_files(workspace)],
    ])
    assert code == 2


def test_eval_emits_table(workspace, tmp_path, capsys):
    out = tmp_path / "rows.json"
    code = main(["eval", "--corpus", str(workspace / "bench-corpus"), "--models", str(workspace / "models"),
                 "--out", str(out), "--seed", "0"])
    assert code == 0
    table = capsys.readouterr().out
    assert "precision" in table.splitlines()[0]
    rows = json.loads(out.read_text(encoding="utf-8"))
    assert {r["task"] for r in rows} == {"tpl", "area"}


def test_eval_sweep_recall_non_increasing(workspace, tmp_path, capsys):
    out = tmp_path / "sweep.json"
    code = main(["eval", "--corpus", str(workspace / "bench-corpus"), "--models", str(workspace / "models"),
                 "--out", str(out), "--seed", "0", "--sweep-n", "1", "2", "3"])
    assert code == 0
    rows = [r for r in json.loads(out.read_text(encoding="utf-8")) if r["task"] == "tpl"]
    recalls = [r["recall"] for r in rows]
    assert recalls == sorted(recalls, reverse=True)


def test_vuln_association_rows(workspace, tmp_path):
    code, reports = detect(workspace, "reports-vuln")
    assert code == 0
    report_path = None
    payload = None
    for path in sorted(reports.glob("*.report.json")):
        candidate = json.loads(path.read_text(encoding="utf-8"))
        if candidate["reuse_areas"] and candidate["reuse_areas"][0]["name_map"]:
            report_path, payload = path, candidate
            break
    if report_path is None:
        pytest.skip("toy CLI model detected no named reuse area")
    tpl = payload["reuse_areas"][0]["tpl"]
    fn_name = payload["reuse_areas"][0]["name_map"][0]["tpl_fn_name"]
    cve_map = tmp_path / "cves.csv"
    cve_map.write_text(
        "cve_id,tpl_id,versions,fn_names,cwe\n"
        f"CVE-A,{tpl},*,{fn_name},CWE-1\n"
        f"CVE-B,{tpl},*,absent_function,\n"
        f"CVE-C,{tpl},*,,\n",
        encoding="utf-8",
    )
    out = tmp_path / "assoc.json"
    assert main(["vuln", "--cves", str(cve_map), "--out", str(out), str(report_path)]) == 0
    rows = json.loads(out.read_text(encoding="utf-8"))
    by_cve = {r["cve"]: r for r in rows}
    assert by_cve["CVE-A"]["confidence"] == "high"
    assert "CVE-B" not in by_cve  # patch function not in the reuse area
    assert by_cve["CVE-C"]["confidence"] == "low"


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_knob": 1}), encoding="utf-8")
    assert main(["gen", "--out", str(tmp_path / "x"), "--config", str(cfg)]) == 2
