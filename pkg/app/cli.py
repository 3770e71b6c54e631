"""Command-line entry point for the appropriateness workbench.

Usage:
  python -m app ingest arguments --in args.tsv
  python -m app ingest annotations --in ann.tsv --mode lenient
  python -m app aggregate --strategy conservative --out gold.tsv
  python -m app mace --seed 1 --out mace.tsv
  python -m app folds --seed 7 --out folds.tsv
  python -m app score --folds folds.tsv --pred majority=majority.tsv
  python -m app report table1a --format md
  python -m app serve --port 5000
  python -m app campaign create --url http://localhost:5000 --seed 3 --from-store

The corpus store directory comes from --data-dir, else APW_DATA_DIR, else ./data.
Usage errors exit 2; data errors exit 1 with a JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from itertools import combinations
from pathlib import Path
from typing import IO, Any, Callable, Sequence

from app.core import reports
from app.core.aggregate import AggregationError, LabelMatrix, Strategy, aggregate_strategy
from app.core.corpus import RATING_SCALES, CorpusStore, IngestError, parse_annotations, read_released_corpus
from app.core.evaluation import (
    EvaluationError,
    FoldPlan,
    PredictionSet,
    ScoreReport,
    SignificanceVerdict,
    class_weights,
    fold_positive_rates,
    human_performance,
    majority_baseline,
    make_folds,
    random_baseline,
    score,
    significance,
    write_weights,
)
from app.core.mace import MaceConfig, MaceError, mace_fit, mace_labels
from app.core.stats import StatsError, agreement_report, quality_pearson, region_total, venn_overlap
from app.core.taxonomy import DIMENSION_ORDER, TaxonomyError, ValidationMode, parse_dimension, validate
from app.core.votes import build_votes
from app.integrations.service_client import CampaignAPIError, CampaignClient

logger = logging.getLogger("app.cli")

DEFAULT_DATA_DIR = "data"

REPORT_NAMES = (
    "table1a",
    "table1b",
    "table1c",
    "table2",
    "table3",
    "table4",
    "table5",
    "table7",
    *reports.SOURCE_TABLES,
    "stats",
)

_ERROR_CODES: dict[type[Exception], str] = {
    IngestError: "ingest_error",
    TaxonomyError: "taxonomy_error",
    AggregationError: "aggregation_error",
    MaceError: "mace_error",
    StatsError: "stats_error",
    EvaluationError: "evaluation_error",
    CampaignAPIError: "campaign_api_error",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _data_dir(args: argparse.Namespace) -> Path:
    return Path(args.data_dir or os.environ.get("APW_DATA_DIR") or DEFAULT_DATA_DIR)


def _store(args: argparse.Namespace, *, writable: bool = False) -> CorpusStore:
    on_duplicate = getattr(args, "on_duplicate", "error")
    return CorpusStore(_data_dir(args), writable=writable, on_duplicate=on_duplicate)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)


def _open_out(out: str | None) -> IO[str]:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        return open(out, "w", encoding="utf-8", newline="")
    return sys.stdout


def _close_out(fh: IO[str]) -> None:
    if fh is not sys.stdout:
        fh.close()


def _json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _require_seed(args: argparse.Namespace, what: str) -> int:
    if args.seed is None:
        raise UsageError(f"{what} is stochastic: --seed is required")
    return int(args.seed)


def _dimensions(raw: str | None) -> list[str] | None:
    if not raw:
        return None
    try:
        return [parse_dimension(p.strip()).value for p in raw.split(",") if p.strip()]
    except TaxonomyError as e:
        raise UsageError(str(e)) from e


def _gold(args: argparse.Namespace, store: CorpusStore | None = None) -> LabelMatrix:
    if getattr(args, "gold", None):
        with open(args.gold, encoding="utf-8", newline="") as fh:
            return LabelMatrix.from_tsv(fh)
    store = store or _store(args)
    return aggregate_strategy(store.records(), Strategy.CONSERVATIVE, unequal="per-argument")


def _plan(path: str) -> FoldPlan:
    with open(path, encoding="utf-8", newline="") as fh:
        return FoldPlan.from_tsv(fh)


def _predictions(specs: Sequence[str]) -> list[PredictionSet]:
    out: list[PredictionSet] = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        if not name or not path:
            raise UsageError(f"--pred expects name=path (got {spec!r})")
        with open(path, encoding="utf-8", newline="") as fh:
            out.append(PredictionSet.from_tsv(fh, name.strip()))
    return out


def _scale(raw: str | None) -> tuple[int, int] | None:
    if not raw:
        return None
    lo, sep, hi = raw.partition("-")
    try:
        if not sep:
            raise ValueError(raw)
        return int(lo), int(hi)
    except ValueError as e:
        raise UsageError(f"--scale expects LO-HI (got {raw!r})") from e


def _mace_config(args: argparse.Namespace) -> MaceConfig:
    return MaceConfig(
        iterations=args.iterations,
        restarts=args.restarts,
        smoothing=args.smoothing,
        seed=_require_seed(args, "mace"),
        workers=args.workers,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    with _store(args, writable=True) as store:
        if args.kind == "released":
            with open(args.input, encoding="utf-8", newline="") as fh:
                arguments, records = read_released_corpus(fh, delimiter=args.delimiter, in_scale=args.in_scale)
            known = {a.argument_id for a in store.arguments()}
            added = store.add_arguments([a for a in arguments if a.argument_id not in known], origin=args.input)
            report = store.add_records(records, validation=args.mode, origin=args.input)
            payload: dict[str, Any] = {"ok": True, "arguments": added, **report.to_dict()}
        else:
            with open(args.input, encoding="utf-8", newline="") as fh:
                if args.kind == "arguments":
                    payload = {"ok": True, "count": store.ingest_arguments(fh, args.format)}
                elif args.kind == "annotations":
                    payload = {"ok": True, **store.ingest_annotations(fh, args.format, args.mode).to_dict()}
                elif args.kind == "ratings":
                    payload = {"ok": True, "count": store.ingest_ratings(fh, args.format, _scale(args.scale))}
                else:
                    payload = {"ok": True, "count": store.ingest_pairs(fh, args.format)}
    sys.stdout.write(_json(payload))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.input:
        problems = _store(args).check_integrity(args.expected_annotators)
        sys.stdout.write(_json({"ok": not problems, "problems": problems}))
        return 0 if not problems else 1

    mode = ValidationMode(args.mode)
    invalid: list[dict[str, Any]] = []
    warnings: list[dict[str, Any]] = []
    checked = 0
    with open(args.input, encoding="utf-8", newline="") as fh:
        for line, record, errors in parse_annotations(fh, args.format):
            checked += 1
            if record is None or errors:
                invalid.append({"line": line, "errors": errors})
                continue
            result = validate(record, mode)
            if not result.ok:
                invalid.append(
                    {
                        "line": line,
                        "argument_id": record.argument_id,
                        "annotator_id": record.annotator_id,
                        "errors": result.structural_errors + [v.message for v in result.violations],
                    }
                )
            if result.warnings:
                warnings.append({"line": line, "warnings": list(result.warnings)})
    sys.stdout.write(_json({"ok": not invalid, "checked": checked, "mode": mode.value, "invalid": invalid, "warnings": warnings}))
    return 0 if not invalid else 1


def cmd_aggregate(args: argparse.Namespace) -> int:
    store = _store(args)
    if args.strategy == "mace":
        labels = mace_labels(mace_fit(store.records(), _mace_config(args)), threshold=args.threshold)
    else:
        labels = aggregate_strategy(store.records(), args.strategy, unequal=args.unequal)
    fh = _open_out(args.out)
    try:
        labels.to_tsv(fh)
    finally:
        _close_out(fh)
    return 0


def cmd_mace(args: argparse.Namespace) -> int:
    store = _store(args)
    model = mace_fit(store.records(), _mace_config(args), _dimensions(args.dimensions))
    fh = _open_out(args.out)
    try:
        mace_labels(model, threshold=args.threshold).to_tsv(fh)
    finally:
        _close_out(fh)
    if args.competence:
        rows = ["annotator_id\tdimension\tspam_probability\tcompetence"]
        for d, fit in model.fits.items():
            for annotator, theta in zip(model.annotator_ids, fit.theta):
                rows.append(f"{annotator}\t{d.value}\t{theta:.6f}\t{1.0 - theta:.6f}")
        _emit("\n".join(rows) + "\n", args.competence)
    logger.info("MACE objective %.4f", model.log_likelihood)
    return 0


def cmd_agreement(args: argparse.Namespace) -> int:
    votes = build_votes(_store(args).records())
    metrics = {d: args.metric for d in DIMENSION_ORDER} if args.metric else None
    _emit(reports.render(reports.table1b(agreement_report(votes, metrics)), args.format), args.out)
    return 0


def _strongest_first(item: tuple[str, float]) -> tuple[bool, float, str]:
    name, r = item
    undefined = math.isnan(r)
    return undefined, 0.0 if undefined else -abs(r), name


def cmd_correlate(args: argparse.Namespace) -> int:
    store = _store(args)
    if args.kind == "dimensions":
        table = reports.table1c(store.records())
    elif args.kind == "quality":
        build = reports.table7 if args.corpus == "gaq" else reports.table3
        table = build(store.records(), store.ratings(), orient=args.orient)
    elif args.kind == "pairs":
        table = reports.table4(store.records(), store.pairs())
    else:
        target = args.target or "appropriateness"
        values = quality_pearson(store.ratings(), target=target, corpus=args.corpus)
        table = reports.Table(
            "pearson",
            f"Pearson r of {target} with every other quality dimension",
            ["dimension", "r"],
            [[d, r] for d, r in sorted(values.items(), key=_strongest_first)],
        )
    _emit(reports.render(table, args.format), args.out)
    return 0


def cmd_venn(args: argparse.Namespace) -> int:
    dims = [d.strip() for d in (args.dimensions or "").split(",") if d.strip()]
    if not dims:
        raise UsageError("venn needs --dimensions a,b[,c]")
    cells = venn_overlap(_store(args).ratings(), dims, corpus=args.corpus, low_threshold=args.threshold)
    rows: list[list[Any]] = []
    for k in range(len(dims) + 1):
        for combo in combinations(dims, k):
            rows.append(["+".join(combo) or "(none)", cells[frozenset(combo)], region_total(cells, combo)])
    table = reports.Table(
        "venn", f"Arguments rated low (<= threshold) per dimension set ({args.corpus})", ["low_on", "exactly", "at_least"], rows
    )
    _emit(reports.render(table, args.format), args.out)
    return 0


def cmd_folds(args: argparse.Namespace) -> int:
    plan = make_folds(
        _gold(args),
        _require_seed(args, "folds"),
        repetitions=args.repetitions,
        folds=args.folds,
        dev_fraction=args.dev_fraction,
    )
    fh = _open_out(args.out)
    try:
        plan.to_tsv(fh)
    finally:
        _close_out(fh)
    if args.rates:
        gold = _gold(args)
        rows = ["repetition\tfold\t" + "\t".join(d.value for d in DIMENSION_ORDER)]
        for (r, f), rates in fold_positive_rates(plan, gold).items():
            rows.append(f"{r}\t{f}\t" + "\t".join(f"{v:.4f}" for v in rates))
        _emit("\n".join(rows) + "\n", args.rates)
    return 0


def cmd_weights(args: argparse.Namespace) -> int:
    plan = _plan(args.folds)
    gold = _gold(args)
    if args.repetition is not None or args.fold is not None:
        key = (args.repetition or 0, args.fold or 0)
        if key not in plan.assignments:
            raise UsageError(f"fold plan has no repetition {key[0]} fold {key[1]}")
        fh = _open_out(args.out)
        try:
            write_weights(fh, class_weights(gold.reindex(plan.assignments[key].train)))
        finally:
            _close_out(fh)
        return 0

    rows = ["repetition\tfold\tdimension\tweight"]
    for r, f in plan.keys():
        weights = class_weights(gold.reindex(plan.assignments[(r, f)].train))
        rows.extend(f"{r}\t{f}\t{d.value}\t{weights[d]:.6f}" for d in DIMENSION_ORDER)
    _emit("\n".join(rows) + "\n", args.out)
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    plan = _plan(args.folds)
    if args.kind == "random":
        predictions = random_baseline(plan, _require_seed(args, "the random baseline"))
    else:
        predictions = majority_baseline(plan, _gold(args))
    fh = _open_out(args.out)
    try:
        predictions.to_tsv(fh)
    finally:
        _close_out(fh)
    return 0


def _verdicts(scored: Sequence[ScoreReport]) -> list[SignificanceVerdict]:
    out: list[SignificanceVerdict] = []
    for first, second in combinations([r for r in scored if r.per_fold], 2):
        v = significance(first, second)
        out.append(v)
        # both directions so either side can carry the mark
        out.append(significance(second, first))
    return out


def _score_all(args: argparse.Namespace) -> list[ScoreReport]:
    if not args.pred:
        raise UsageError("at least one --pred name=path is required")
    plan = _plan(args.folds)
    gold = _gold(args)
    return [score(p, gold, plan) for p in _predictions(args.pred)]


def cmd_score(args: argparse.Namespace) -> int:
    scored = _score_all(args)
    if args.human:
        scored.append(human_performance(_store(args).records(), _gold(args)))
    _emit(reports.render(reports.table5(scored, _verdicts(scored)), args.format), args.out)
    return 0


def cmd_human(args: argparse.Namespace) -> int:
    store = _store(args)
    report = human_performance(store.records(), _gold(args, store))
    rows = [[a, *(float(v) for v in f1), float(f1.mean())] for a, f1 in report.per_annotator.items()]
    rows.append(["mean", *(report.per_dimension[d] for d in DIMENSION_ORDER), report.macro])
    table = reports.Table(
        "human",
        "Two-class macro F1 of each annotator against the gold labels",
        ["annotator", *(d.value for d in DIMENSION_ORDER), "macro"],
        rows,
    )
    _emit(reports.render(table, args.format), args.out)
    return 0


def cmd_significance(args: argparse.Namespace) -> int:
    scored = _score_all(args)
    if len(scored) != 2:
        raise UsageError("significance compares exactly two --pred files")
    v = significance(scored[0], scored[1], alpha_level=args.alpha)
    payload = {
        "ok": True,
        "first": v.first,
        "second": v.second,
        "direction": v.direction,
        "statistic": v.result.statistic,
        "p_value": v.result.p_value,
        "significant": v.result.significant,
        "tested": v.result.tested,
        "n": v.result.n,
        "method": v.result.method,
        "verdict": v.result.verdict,
    }
    _emit(_json(payload), args.out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    # create_app() reads its configuration from the environment.
    os.environ.setdefault("CORPUS_DIR", str(_data_dir(args)))
    from app import create_app

    app = create_app()
    app.run(host=args.host, port=args.port, debug=args.debug)
    return 0


def cmd_campaign(args: argparse.Namespace) -> int:
    token = args.token or os.environ.get("APW_ADMIN_TOKEN")
    if not token:
        raise UsageError("campaign commands need --token or APW_ADMIN_TOKEN")
    client = CampaignClient(args.url, token=token)
    if args.action == "create":
        if args.seed is None:
            raise UsageError("campaign create needs --seed")
        arguments = None
        if args.from_store:
            arguments = [
                {"argument_id": a.argument_id, "source": a.source.value, "issue": a.issue, "text": a.text}
                for a in _store(args).arguments()
            ]
        created = client.create_campaign(
            seed=args.seed,
            campaign_id=args.campaign_id,
            batch_size=args.batch_size,
            annotators=args.annotator or None,
            arguments=arguments,
        )
        _emit(_json(created), args.out)
        return 0
    if not args.campaign_id:
        raise UsageError(f"campaign {args.action} needs --campaign-id")
    if args.action == "progress":
        _emit(_json(client.progress(args.campaign_id)), args.out)
        return 0
    if args.action == "history":
        if len(args.annotator) != 1 or not args.argument:
            raise UsageError("campaign history needs one --annotator and --argument")
        _emit(_json(client.history(args.campaign_id, args.annotator[0], args.argument)), args.out)
        return 0
    result = client.export(args.campaign_id, args.kind, args.format)
    _emit(result.body, args.out)
    return 0


def _report_table(name: str, args: argparse.Namespace, store: CorpusStore) -> reports.Table:
    if name == "table1a":
        return reports.table1a(store.records())
    if name == "table1b":
        return reports.table1b(store.records())
    if name == "table1c":
        return reports.table1c(store.records())
    if name == "table2":
        model = mace_fit(store.records(), _mace_config(args))
        return reports.table2(store.records(), model, threshold=args.threshold)
    if name == "table3":
        return reports.table3(store.records(), store.ratings(), orient=args.orient)
    if name == "table4":
        return reports.table4(store.records(), store.pairs())
    if name == "table5":
        if not args.folds:
            raise UsageError("table5 needs --folds and --pred")
        scored = _score_all(args)
        if args.human:
            scored.append(human_performance(store.records(), _gold(args, store)))
        return reports.table5(scored, _verdicts(scored))
    if name == "table7":
        return reports.table7(store.records(), store.ratings(), orient=args.orient)
    if name in reports.SOURCE_TABLES:
        return reports.source_table(name, store.arguments(), store.records())
    return reports.stats_table(store.corpus_stats(args.group_by))


def cmd_report(args: argparse.Namespace) -> int:
    store = _store(args)
    _emit(reports.render(_report_table(args.name, args, store), args.format), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=reports.FORMATS, default="csv")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="Output file (default: stdout)")


def _add_gold(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gold", help="Gold label TSV (default: conservative aggregation of the store)")


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="Seed for every stochastic step")


def _add_mace(p: argparse.ArgumentParser) -> None:
    _add_seed(p)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--smoothing", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--threshold", type=float, default=None, help="Posterior cut for yes (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="workbench", description="Argument appropriateness annotation workbench")
    parser.add_argument("--data-dir", help="Corpus store directory (default: $APW_DATA_DIR or ./data)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Add arguments, annotations, ratings or pair reasons to the store")
    p.add_argument("kind", choices=["arguments", "annotations", "ratings", "pairs", "released"])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["tsv", "jsonl"], default="tsv")
    p.add_argument("--mode", choices=[m.value for m in ValidationMode], default="lenient")
    p.add_argument("--on-duplicate", choices=["error", "skip"], default="error")
    p.add_argument("--scale", help=f"Rating scale LO-HI (default per corpus: {RATING_SCALES})")
    p.add_argument("--delimiter", default=",", help="Delimiter of a released CSV")
    p.add_argument("--in-scale", choices=["binary", "ordinal"], default="binary")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="Check an annotation file, or the store's integrity without --in")
    p.add_argument("--in", dest="input")
    p.add_argument("--format", choices=["tsv", "jsonl"], default="tsv")
    p.add_argument("--mode", choices=[m.value for m in ValidationMode], default="strict")
    p.add_argument("--expected-annotators", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("aggregate", help="Aggregate annotations into one label per argument and dimension")
    p.add_argument("--strategy", choices=[*(s.value for s in Strategy), "mace"], default="conservative")
    p.add_argument("--unequal", choices=["error", "per-argument"], default="error")
    _add_mace(p)
    _add_out(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("mace", help="Fit MACE and write posterior labels")
    _add_mace(p)
    p.add_argument("--dimensions", help="Comma-separated dimension codes (default: all)")
    p.add_argument("--competence", help="Also write per-annotator spam probabilities here")
    _add_out(p)
    p.set_defaults(func=cmd_mace)

    p = sub.add_parser("agreement", help="Full agreement and Krippendorff's alpha per dimension")
    p.add_argument("--metric", choices=["nominal", "ordinal", "interval"], default=None)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("correlate", help="Kendall's tau / Pearson correlations")
    p.add_argument("kind", choices=["dimensions", "quality", "pairs", "pearson"])
    p.add_argument("--corpus", choices=sorted(RATING_SCALES), default="dagstuhl")
    p.add_argument("--orient", choices=["appropriateness", "inappropriateness"], default="appropriateness")
    p.add_argument("--target", help="Quality dimension for pearson (default: appropriateness)")
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("venn", help="Overlap of arguments rated low on several quality dimensions")
    p.add_argument("--dimensions", required=True)
    p.add_argument("--corpus", choices=sorted(RATING_SCALES), default="dagstuhl")
    p.add_argument("--threshold", type=float, default=None)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_venn)

    p = sub.add_parser("folds", help="Repeated stratified cross-validation plan")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--dev-fraction", type=float, default=0.1)
    p.add_argument("--rates", help="Also write per-fold positive rates here")
    _add_seed(p)
    _add_gold(p)
    _add_out(p)
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("weights", help="Per-dimension class weights from each training split")
    p.add_argument("--folds", required=True)
    p.add_argument("--repetition", type=int, default=None)
    p.add_argument("--fold", type=int, default=None)
    _add_gold(p)
    _add_out(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("baseline", help="Random or majority baseline predictions")
    p.add_argument("kind", choices=["random", "majority"])
    _add_seed(p)
    p.add_argument("--folds", required=True)
    _add_gold(p)
    _add_out(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("score", help="Two-class macro F1 of prediction files")
    p.add_argument("--folds", required=True)
    p.add_argument("--pred", action="append", default=[], help="name=path (repeatable)")
    p.add_argument("--human", action="store_true", help="Add the human performance row")
    _add_gold(p)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("human", help="Annotators scored against the gold labels")
    _add_gold(p)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_human)

    p = sub.add_parser("significance", help="Wilcoxon signed-rank test over per-fold macro F1")
    p.add_argument("--folds", required=True)
    p.add_argument("--pred", action="append", default=[], help="name=path (exactly two)")
    p.add_argument("--alpha", type=float, default=0.05)
    _add_gold(p)
    _add_out(p)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("serve", help="Run the annotation campaign service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5000)
    p.add_argument("--debug", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("campaign", help="Drive a running campaign service (admin)")
    p.add_argument("action", choices=["create", "progress", "export", "history"])
    p.add_argument("--url", default="http://127.0.0.1:5000")
    p.add_argument("--token", help="Admin token (default: $APW_ADMIN_TOKEN)")
    p.add_argument("--campaign-id", default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--annotator", action="append", default=[], help="Roster id (repeatable; default: server roster)")
    p.add_argument("--from-store", action="store_true", help="Send the local store's arguments inline")
    p.add_argument("--argument", default=None, help="Argument id (history)")
    p.add_argument("--kind", choices=["annotations", "conservative-gold", "agreement", "correlations"], default="annotations")
    _add_seed(p)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("report", help="Render one of the report tables")
    p.add_argument("name", choices=REPORT_NAMES)
    p.add_argument("--group-by", choices=["none", "source", "genre"], default="source")
    p.add_argument("--orient", choices=["appropriateness", "inappropriateness"], default="appropriateness")
    p.add_argument("--folds", default=None)
    p.add_argument("--pred", action="append", default=[], help="name=path (table5)")
    p.add_argument("--human", action="store_true", help="Add the human row to table5")
    _add_mace(p)
    _add_gold(p)
    _add_format(p)
    _add_out(p)
    p.set_defaults(func=cmd_report)

    return parser


def _error_report(code: str, message: str, details: Any = None) -> str:
    err: dict[str, Any] = {"code": code, "message": message}
    if details:
        err["details"] = details
    return json.dumps({"ok": False, "error": err}, sort_keys=True) + "\n"


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        return handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{parser.prog}: error: {e}\n")
        return 2
    except tuple(_ERROR_CODES) as e:
        code = next(c for cls, c in _ERROR_CODES.items() if isinstance(e, cls))
        sys.stderr.write(_error_report(code, str(e), getattr(e, "details", None)))
        return 1
    except OSError as e:
        sys.stderr.write(_error_report("io_error", str(e)))
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
