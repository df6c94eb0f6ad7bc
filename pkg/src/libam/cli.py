"""Command-line front end: train, index, detect, eval, vuln, gen.

Exit codes: 0 success, 1 detection-time data error, 2 usage/config error.
Logs go to stderr; machine-readable results go to files or stdout only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, training, vulns
from .areas import DetectionReport
from .config import Config, ConfigError
from .embedding import EmbeddingModel, ModelMismatchError, TrainingDivergedError
from .interchange import FILE_SUFFIX, InterchangeError, canonical_json, iter_records, load_binary_record
from .pipeline import TplCorpus, build_tpl_index, detect_target
from .vectordb import ApproxParams, ChecksumMismatchError, IndexError_, VectorIndex

log = logging.getLogger("libam")

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2

FN_MODEL_NAME = "function.s2v"
AREA_MODEL_NAME = "area.s2v"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _load_config(args) -> Config:
    cfg = Config.from_file(args.config) if args.config else Config()
    overrides = {}
    for key in ("seed", "jobs", "search", "tasks"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    for key in (
        "anchor_threshold",
        "structure_threshold",
        "alignment_threshold",
        "top_tpls",
        "top_fns",
        "max_stale",
        "learning_rate",
        "batch_size",
        "epochs",
    ):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return cfg.override(**overrides)


def _require_dir(path: Path, what: str) -> Path:
    if not Path(path).is_dir():
        raise UsageError(f"{what} directory not found: {path}")
    return Path(path)


def _require_file(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _load_models(models_dir: Path) -> tuple[EmbeddingModel, EmbeddingModel]:
    fn_path = _require_file(Path(models_dir) / FN_MODEL_NAME, "function model")
    area_path = _require_file(Path(models_dir) / AREA_MODEL_NAME, "area model")
    return EmbeddingModel.load(fn_path), EmbeddingModel.load(area_path)


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    if args.kind == "bench":
        params = bench.CorpusParams(
            n_tpls=args.n_tpls,
            n_targets=args.n_targets,
            fns_per_binary=(args.fns_min, args.fns_max),
            implant_ratio=args.implant_ratio,
            perturbation=args.perturbation,
        )
        try:
            corpus = bench.gen_corpus(params, seed=cfg.seed)
        except bench.InfeasibleParamsError as exc:
            raise UsageError(str(exc)) from None
        corpus.save(out)
        log.info("wrote %d TPLs, %d targets to %s", len(corpus.tpls), len(corpus.targets), out)
    else:
        params = bench.TrainCorpusParams(
            n_groups=args.n_groups,
            fns_per_binary=(args.fns_min, args.fns_max),
            perturbation=args.perturbation,
        )
        groups = bench.gen_training_corpus(params, seed=cfg.seed)
        bench.save_training_corpus(groups, out)
        log.info("wrote %d homologous pairs to %s", len(groups), out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    corpus_dir = _require_dir(args.corpus, "training corpus")
    if not (corpus_dir / "train_manifest.json").is_file():
        raise UsageError(f"no train_manifest.json in {corpus_dir}")
    groups = bench.load_training_corpus(corpus_dir)
    params = training.PipelineTrainParams(function=cfg.train_params(), area=cfg.train_params())
    trained = training.train_models(groups, params, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trained.fn_model.save(out / FN_MODEL_NAME)
    trained.area_model.save(out / AREA_MODEL_NAME)
    log.info(
        "models written to %s (function checksum %s, area checksum %s)",
        out,
        trained.fn_model.checksum()[:12],
        trained.area_model.checksum()[:12],
    )
    return EXIT_OK


def cmd_index(args) -> int:
    cfg = _load_config(args)
    tpl_dir = _require_dir(args.tpls, "TPL corpus")
    model = EmbeddingModel.load(_require_file(args.model, "function model"))
    records = list(iter_records(tpl_dir))
    if not records:
        raise UsageError(f"no {FILE_SUFFIX} files in {tpl_dir}")
    index = build_tpl_index(records, model, cfg.min_blocks, cfg.min_instrs)
    index.save(Path(args.out))
    log.info("indexed %d vectors from %d TPLs into %s", len(index), len(records), args.out)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    fn_model, area_model = _load_models(args.models)
    index = VectorIndex.load(_require_file(args.index, "vector index"))
    if index.model_checksum != fn_model.checksum():
        raise UsageError("index was built with a different function model")
    tpl_dir = _require_dir(args.tpls, "TPL corpus")
    tpl_records = list(iter_records(tpl_dir))
    corpus = TplCorpus(tpl_records, index)
    detection = cfg.detection()
    if cfg.search == "approx":
        index.build_trees(ApproxParams(seed=cfg.seed))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for target_path in args.targets:
        target = load_binary_record(_require_file(target_path, "target record"))
        report = detect_target(target, corpus, index, fn_model, area_model, detection)
        report_path = out_dir / f"{target.id}.report.json"
        report_path.write_text(report.to_json(), encoding="utf-8")
        log.info(
            "%s: %d reused TPLs, %d reuse areas -> %s",
            target.id,
            len(report.reused_tpls),
            len(report.reuse_areas),
            report_path,
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    corpus = bench.Corpus.load(_require_dir(args.corpus, "benchmark corpus"))
    fn_model, area_model = _load_models(args.models)
    index = build_tpl_index(corpus.tpls, fn_model, cfg.min_blocks, cfg.min_instrs)
    sweep = args.sweep_n or [cfg.alignment_threshold]
    rows = []
    for n in sweep:
        detection = cfg.override(alignment_threshold=n).detection()
        result = bench.run_benchmark(corpus, fn_model, area_model, detection, index=index)
        rows.extend(result.rows(label=f"n={n}"))
    table = _format_table(rows)
    if args.out:
        Path(args.out).write_text(canonical_json(rows) + "\n", encoding="utf-8")
        log.info("wrote %s", args.out)
    sys.stdout.write(table)
    return EXIT_OK


def _format_table(rows: list[dict]) -> str:
    def fmt(x):
        if x is None:
            return "undef"
        if isinstance(x, float):
            return f"{x:.4f}"
        return str(x)

    lines = ["config\ttask\tprecision\trecall\tf1"]
    for row in rows:
        lines.append(
            "\t".join(fmt(v) for v in (row["config"], row["task"], row["precision"], row["recall"], row["f1"]))
        )
    return "\n".join(lines) + "\n"


def cmd_vuln(args) -> int:
    cves = vulns.load_cve_map(_require_file(args.cves, "CVE map"))
    version_rankings = None
    if args.version_strings:
        if not args.target_strings:
            raise UsageError("--version-strings requires --target-strings")
        per_tpl = json.loads(_require_file(args.version_strings, "version strings").read_text(encoding="utf-8"))
        target_strings = set(json.loads(_require_file(args.target_strings, "target strings").read_text(encoding="utf-8")))
        version_rankings = {
            tpl: vulns.identify_version(target_strings, per_version) for tpl, per_version in per_tpl.items()
        }
    rows = []
    for report_path in args.reports:
        report = DetectionReport.from_dict(
            json.loads(_require_file(report_path, "detection report").read_text(encoding="utf-8"))
        )
        for assoc in vulns.associate(report, cves, version_rankings):
            rows.append(assoc.to_dict())
    payload = canonical_json(rows) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        log.info("wrote %d associations to %s", len(rows), args.out)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus")
    add_common(p_gen)
    p_gen.add_argument("--kind", choices=("bench", "train"), default="bench")
    p_gen.add_argument("--out", required=True, type=Path)
    p_gen.add_argument("--n-tpls", type=int, default=30, dest="n_tpls")
    p_gen.add_argument("--n-targets", type=int, default=50, dest="n_targets")
    p_gen.add_argument("--n-groups", type=int, default=24, dest="n_groups")
    p_gen.add_argument("--fns-min", type=int, default=40)
    p_gen.add_argument("--fns-max", type=int, default=90)
    p_gen.add_argument("--implant-ratio", type=float, default=0.35)
    p_gen.add_argument("--perturbation", type=float, default=0.1)

    p_train = sub.add_parser("train", help="train function and area models")
    add_common(p_train)
    p_train.add_argument("--corpus", required=True, type=Path)
    p_train.add_argument("--out", required=True, type=Path)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p_train.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")

    p_index = sub.add_parser("index", help="embed TPL functions into a vector index")
    add_common(p_index)
    p_index.add_argument("--tpls", required=True, type=Path)
    p_index.add_argument("--model", required=True, type=Path)
    p_index.add_argument("--out", required=True, type=Path)

    p_detect = sub.add_parser("detect", help="detect reused TPLs and areas")
    add_common(p_detect)
    p_detect.add_argument("--index", required=True, type=Path)
    p_detect.add_argument("--tpls", required=True, type=Path)
    p_detect.add_argument("--models", required=True, type=Path)
    p_detect.add_argument("--out", required=True, type=Path)
    p_detect.add_argument("--jobs", type=int, default=None)
    p_detect.add_argument("--search", choices=("exact", "approx"), default=None)
    p_detect.add_argument("--tasks", choices=("tpl", "area", "both"), default=None)
    p_detect.add_argument("targets", nargs="+", type=Path)

    p_eval = sub.add_parser("eval", help="run the benchmark and print P/R/F1")
    add_common(p_eval)
    p_eval.add_argument("--corpus", required=True, type=Path)
    p_eval.add_argument("--models", required=True, type=Path)
    p_eval.add_argument("--sweep-n", type=int, nargs="*", dest="sweep_n")
    p_eval.add_argument("--out", type=Path)
    p_eval.add_argument("--jobs", type=int, default=None)

    p_vuln = sub.add_parser("vuln", help="associate reports with CVEs")
    p_vuln.add_argument("--cves", required=True, type=Path)
    p_vuln.add_argument("--version-strings", type=Path, dest="version_strings")
    p_vuln.add_argument("--target-strings", type=Path, dest="target_strings")
    p_vuln.add_argument("--out", type=Path)
    p_vuln.add_argument("reports", nargs="+", type=Path)

    return parser


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "index": cmd_index,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "vuln": cmd_vuln,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ModelMismatchError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (InterchangeError, IndexError_, ChecksumMismatchError, vulns.CveMapError, TrainingDivergedError) as exc:
        log.error("%s", exc)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
