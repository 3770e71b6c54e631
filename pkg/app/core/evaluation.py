"""Cross-validation protocol: folds, class weights, baselines, scoring, significance.

Models are trained elsewhere. This module writes the fold and weight files they
need and scores the prediction files they return.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
from sklearn.metrics import f1_score

from app.core.aggregate import LabelMatrix
from app.core.stats import WilcoxonResult, wilcoxon_signed_rank
from app.core.taxonomy import DIMENSION_ORDER, AnnotationRecord, DimensionId
from app.core.votes import MISSING, build_votes

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
WEIGHT_MIN = 0.1
WEIGHT_MAX = 10.0
FOLD_RATE_TOLERANCE = 0.02


class EvaluationError(ValueError):
    def __init__(self, message: str, *, details: list[str] | None = None) -> None:
        super().__init__(message)
        self.details = details or []


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]

    def ids(self, split: str) -> tuple[str, ...]:
        return getattr(self, split)


@dataclass(frozen=True)
class FoldPlan:
    repetitions: int
    folds: int
    seed: int | None
    assignments: dict[tuple[int, int], Split]

    def keys(self) -> list[tuple[int, int]]:
        return sorted(self.assignments)

    def split(self, repetition: int, fold: int) -> Split:
        return self.assignments[(repetition, fold)]

    def to_tsv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
        writer.writerow(["repetition", "fold", "split", "argument_id"])
        for r, f in self.keys():
            split = self.assignments[(r, f)]
            for name in SPLITS:
                for a in split.ids(name):
                    writer.writerow([r, f, name, a])

    def fingerprint(self) -> str:
        buf = io.StringIO()
        self.to_tsv(buf)
        return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()

    @classmethod
    def from_tsv(cls, stream: IO[str]) -> "FoldPlan":
        reader = csv.DictReader(stream, delimiter="\t")
        if reader.fieldnames is None or not {"repetition", "fold", "split", "argument_id"} <= set(reader.fieldnames):
            raise EvaluationError("fold file needs columns: repetition fold split argument_id")
        parts: dict[tuple[int, int], dict[str, list[str]]] = defaultdict(lambda: {s: [] for s in SPLITS})
        for row in reader:
            try:
                key = (int(row["repetition"]), int(row["fold"]))
            except ValueError as e:
                raise EvaluationError(f"line {reader.line_num}: repetition and fold must be integers") from e
            if row["split"] not in SPLITS:
                raise EvaluationError(f"line {reader.line_num}: unknown split {row['split']!r}")
            parts[key][row["split"]].append(row["argument_id"])
        if not parts:
            raise EvaluationError("fold file is empty")
        assignments = {k: Split(tuple(v["train"]), tuple(v["dev"]), tuple(v["test"])) for k, v in parts.items()}
        return cls(
            repetitions=len({k[0] for k in assignments}),
            folds=len({k[1] for k in assignments}),
            seed=None,
            assignments=assignments,
        )


@dataclass(frozen=True)
class PredictionSet:
    approach: str
    # (repetition, fold) -> argument_id -> 14 binary predictions
    folds: dict[tuple[int, int], dict[str, np.ndarray]]

    def to_tsv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
        writer.writerow(["repetition", "fold", "argument_id", *(d.value for d in DIMENSION_ORDER)])
        for (r, f) in sorted(self.folds):
            for a, row in self.folds[(r, f)].items():
                writer.writerow([r, f, a, *(int(v) for v in row)])

    @classmethod
    def from_tsv(cls, stream: IO[str], approach: str) -> "PredictionSet":
        reader = csv.DictReader(stream, delimiter="\t")
        needed = ["repetition", "fold", "argument_id", *(d.value for d in DIMENSION_ORDER)]
        if reader.fieldnames is None or [c for c in needed if c not in reader.fieldnames]:
            raise EvaluationError("prediction file needs columns: " + " ".join(needed))
        folds: dict[tuple[int, int], dict[str, np.ndarray]] = defaultdict(dict)
        for row in reader:
            try:
                key = (int(row["repetition"]), int(row["fold"]))
                values = np.array([int(row[d.value]) for d in DIMENSION_ORDER], dtype=np.int8)
            except (TypeError, ValueError) as e:
                raise EvaluationError(f"line {reader.line_num}: predictions must be 0 or 1") from e
            if not np.isin(values, (0, 1)).all():
                raise EvaluationError(f"line {reader.line_num}: predictions must be 0 or 1")
            folds[key][row["argument_id"]] = values
        return cls(approach, dict(folds))


@dataclass(frozen=True)
class ScoreReport:
    approach: str
    per_dimension: dict[DimensionId, float]
    macro: float
    per_fold: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    per_annotator: dict[str, np.ndarray] = field(default_factory=dict)
    plan_fingerprint: str | None = None

    def fold_macros(self) -> list[float]:
        return [float(self.per_fold[k].mean()) for k in sorted(self.per_fold)]


@dataclass(frozen=True)
class SignificanceVerdict:
    first: str
    second: str
    result: WilcoxonResult
    direction: str

    @property
    def significant(self) -> bool:
        return self.result.significant


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


def _even_sizes(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _stratify(
    values: np.ndarray,
    sizes: list[int],
    rng: np.random.Generator,
    *,
    tolerance: float = FOLD_RATE_TOLERANCE,
) -> np.ndarray:
    """Iterative multi-label stratification with hard capacities.

    Rarest remaining label first; each carrier goes to the open bin that still
    wants most of that label, then most of all the carrier's labels together,
    then to the bin with most room. Pairwise swaps afterwards pull every bin's
    positive rates to within `tolerance` of the overall rate.
    """
    n, k = values.shape
    total = max(n, 1)
    capacity = np.array(sizes, dtype=float)
    wanted = np.outer(np.array(sizes, dtype=float) / total, values.sum(axis=0))
    out = np.full(n, -1, dtype=int)
    remaining = np.ones(n, dtype=bool)

    def place(i: int, label: int | None) -> None:
        open_bins = np.flatnonzero(capacity > 0)
        if label is not None:
            scores = wanted[open_bins, label]
            open_bins = open_bins[scores == scores.max()]
        demand = wanted[open_bins] @ values[i]
        open_bins = open_bins[demand == demand.max()]
        room = capacity[open_bins]
        open_bins = open_bins[room == room.max()]
        b = int(open_bins[rng.integers(open_bins.size)]) if open_bins.size > 1 else int(open_bins[0])
        out[i] = b
        capacity[b] -= 1
        wanted[b] -= values[i]
        remaining[i] = False

    while True:
        counts = values[remaining].sum(axis=0)
        carried = np.flatnonzero(counts > 0)
        if carried.size == 0:
            break
        label = int(carried[np.argmin(counts[carried])])
        carriers = np.flatnonzero(remaining & (values[:, label] == 1))
        for i in rng.permutation(carriers):
            place(int(i), label)
    for i in rng.permutation(np.flatnonzero(remaining)):
        place(int(i), None)
    assert (out >= 0).all()
    return _rebalance(values, out, sizes, tolerance)


def _rebalance(values: np.ndarray, out: np.ndarray, sizes: list[int], tolerance: float) -> np.ndarray:
    """Swap items between bins until every positive rate is within `tolerance`.

    A swap keeps bin sizes, must lower the summed squared rate deviation, and
    may only move a label count away from its target while it stays inside the
    count's rounding band, so rare labels keep their one-apart spread.
    """
    bins = len(sizes)
    if bins < 2 or values.shape[0] == 0:
        return out
    out = out.copy()
    vf = values.astype(float)
    ones = vf.sum(axis=1)
    size = np.array(sizes, dtype=float)
    scale = np.where(size > 0, size, 1.0)
    rate = vf.mean(axis=0)
    target = np.outer(size, rate)
    lo, hi = np.floor(target), np.ceil(target)
    counts = np.stack([vf[out == b].sum(axis=0) for b in range(bins)])

    def allowed(b: int, step: float) -> np.ndarray:
        new = counts[b] + step
        closer = np.abs(new - target[b]) < np.abs(counts[b] - target[b])
        return closer | ((new >= lo[b]) & (new <= hi[b]))

    for _ in range(values.shape[0] * bins):
        dev = np.where(size[:, None] > 0, counts / scale[:, None] - rate, 0.0)
        worst = np.abs(dev).max(axis=1)
        if worst.max() <= tolerance + 1e-12:
            break
        best: tuple[float, int, int, int, int] | None = None
        for b in np.argsort(-worst, kind="stable"):
            if worst[b] <= tolerance + 1e-12:
                break
            in_b = np.flatnonzero(out == b)
            vb = vf[in_b]
            for c in range(bins):
                if c == b or size[c] == 0:
                    continue
                in_c = np.flatnonzero(out == c)
                vc = vf[in_c]
                # label gained by b (and lost by c), then label lost by b
                bad_gain = ~(allowed(int(b), 1.0) & allowed(c, -1.0))
                bad_loss = ~(allowed(int(b), -1.0) & allowed(c, 1.0))
                blocked = (1.0 - vb) @ (bad_gain[:, None] * vc.T) + vb @ (bad_loss[:, None] * (1.0 - vc).T)
                g = dev[b] / scale[b] - dev[c] / scale[c]
                dist = ones[in_b][:, None] + ones[in_c][None, :] - 2.0 * (vb @ vc.T)
                delta = 2.0 * ((vc @ g)[None, :] - (vb @ g)[:, None]) + dist * (1.0 / scale[b] ** 2 + 1.0 / scale[c] ** 2)
                delta[blocked > 0] = np.inf
                flat = int(np.argmin(delta))
                i, j = divmod(flat, delta.shape[1])
                if delta[i, j] < -1e-12 and (best is None or delta[i, j] < best[0]):
                    best = (float(delta[i, j]), int(b), c, int(in_b[i]), int(in_c[j]))
            if best is not None:
                break
        if best is None:
            logger.warning("Fold rates stay %.4f from the overall rate; no improving swap left", float(worst.max()))
            break
        _, b, c, i, j = best
        out[i], out[j] = c, b
        counts[b] += vf[j] - vf[i]
        counts[c] += vf[i] - vf[j]
    return out


def make_folds(
    labels: LabelMatrix,
    seed: int,
    *,
    repetitions: int = 5,
    folds: int = 5,
    dev_fraction: float = 0.1,
) -> FoldPlan:
    """Repeated stratified k-fold; dev is carved out of each non-test pool."""
    n = len(labels)
    if folds < 2 or repetitions < 1:
        raise EvaluationError("need at least 2 folds and 1 repetition")
    if n < folds * 2:
        raise EvaluationError(f"{n} arguments are too few for {folds} folds")
    dev_size = int(round(n * dev_fraction))
    ids = np.array(labels.argument_ids, dtype=object)
    values = labels.values.astype(np.int64)

    assignments: dict[tuple[int, int], Split] = {}
    for r in range(repetitions):
        fold_of = _stratify(values, _even_sizes(n, folds), np.random.default_rng([seed, r]))
        for f in range(folds):
            test_mask = fold_of == f
            pool = np.flatnonzero(~test_mask)
            if dev_size >= pool.size:
                raise EvaluationError("dev split would leave no training data")
            side = _stratify(values[pool], [dev_size, pool.size - dev_size], np.random.default_rng([seed, r, f]))
            assignments[(r, f)] = Split(
                train=tuple(ids[pool[side == 1]]),
                dev=tuple(ids[pool[side == 0]]),
                test=tuple(ids[test_mask]),
            )
    logger.info("Planned %d x %d folds over %d arguments (seed %d)", repetitions, folds, n, seed)
    return FoldPlan(repetitions, folds, seed, assignments)


def fold_positive_rates(plan: FoldPlan, labels: LabelMatrix, split: str = "test") -> dict[tuple[int, int], np.ndarray]:
    return {k: labels.reindex(plan.assignments[k].ids(split)).values.mean(axis=0) for k in plan.keys()}


# ---------------------------------------------------------------------------
# Weights and baselines
# ---------------------------------------------------------------------------


def class_weights(labels: LabelMatrix) -> dict[DimensionId, float]:
    """negatives / positives per dimension, clamped to [0.1, 10]."""
    if len(labels) == 0:
        raise EvaluationError("class weights need a non-empty training set")
    out: dict[DimensionId, float] = {}
    for d in DIMENSION_ORDER:
        pos = int(labels.column(d).sum())
        neg = len(labels) - pos
        if pos == 0:
            logger.warning("No positive %s labels in training data; weight clamped to %.1f", d.value, WEIGHT_MAX)
            out[d] = WEIGHT_MAX
            continue
        out[d] = float(min(WEIGHT_MAX, max(WEIGHT_MIN, neg / pos)))
    return out


def write_weights(stream: IO[str], weights: dict[DimensionId, float]) -> None:
    writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
    writer.writerow(["dimension", "weight"])
    for d in DIMENSION_ORDER:
        writer.writerow([d.value, f"{weights[d]:.6f}"])


def random_baseline(plan: FoldPlan, seed: int) -> PredictionSet:
    folds: dict[tuple[int, int], dict[str, np.ndarray]] = {}
    for r, f in plan.keys():
        rng = np.random.default_rng([seed, r, f])
        test = plan.assignments[(r, f)].test
        draws = rng.integers(0, 2, size=(len(test), len(DIMENSION_ORDER)), dtype=np.int8)
        folds[(r, f)] = {a: draws[i] for i, a in enumerate(test)}
    return PredictionSet("random", folds)


def majority_baseline(plan: FoldPlan, gold: LabelMatrix) -> PredictionSet:
    """Training-set majority per dimension; an exact 50/50 split predicts no."""
    folds: dict[tuple[int, int], dict[str, np.ndarray]] = {}
    for r, f in plan.keys():
        split = plan.assignments[(r, f)]
        rate = gold.reindex(split.train).values.mean(axis=0)
        constant = (rate > 0.5).astype(np.int8)
        folds[(r, f)] = {a: constant.copy() for a in split.test}
    return PredictionSet("majority", folds)


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def two_class_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean of yes-class and no-class F1; a class absent from both sides scores 1."""
    return float(f1_score(y_true, y_pred, average="macro", labels=[0, 1], zero_division=1.0))


def _score_rows(gold: np.ndarray, pred: np.ndarray) -> np.ndarray:
    return np.array([two_class_f1(gold[:, k], pred[:, k]) for k in range(len(DIMENSION_ORDER))])


def score(predictions: PredictionSet, gold: LabelMatrix, plan: FoldPlan) -> ScoreReport:
    gaps: list[str] = []
    for key in plan.keys():
        test = set(plan.assignments[key].test)
        got = set(predictions.folds.get(key, {}))
        if key not in predictions.folds:
            gaps.append(f"repetition {key[0]} fold {key[1]}: no predictions")
            continue
        if test - got:
            gaps.append(f"repetition {key[0]} fold {key[1]}: {len(test - got)} test arguments unpredicted")
        if got - test:
            gaps.append(f"repetition {key[0]} fold {key[1]}: {len(got - test)} predictions outside the test set")
    extra = sorted(set(predictions.folds) - set(plan.assignments))
    gaps.extend(f"repetition {r} fold {f}: not in the fold plan" for r, f in extra)
    if gaps:
        raise EvaluationError(f"predictions for {predictions.approach!r} do not cover the fold plan", details=gaps)

    per_fold: dict[tuple[int, int], np.ndarray] = {}
    for key in plan.keys():
        test = plan.assignments[key].test
        g = gold.reindex(test).values
        p = np.stack([predictions.folds[key][a] for a in test])
        per_fold[key] = _score_rows(g, p)

    means = np.stack([per_fold[k] for k in plan.keys()]).mean(axis=0)
    return ScoreReport(
        approach=predictions.approach,
        per_dimension={d: float(means[i]) for i, d in enumerate(DIMENSION_ORDER)},
        macro=float(means.mean()),
        per_fold=per_fold,
        plan_fingerprint=plan.fingerprint(),
    )


def human_performance(records: Iterable[AnnotationRecord], gold: LabelMatrix) -> ScoreReport:
    """Each annotator against gold over the items they labelled, then averaged."""
    votes = build_votes(records)
    gold_index = {a: i for i, a in enumerate(gold.argument_ids)}
    per_annotator: dict[str, np.ndarray] = {}
    for j, annotator in enumerate(votes.annotator_ids):
        rows = [
            i for i, a in enumerate(votes.argument_ids) if votes.in_raw[i, j] != MISSING and a in gold_index
        ]
        if not rows:
            logger.warning("Annotator %s shares no arguments with the gold labels; skipped", annotator)
            continue
        if len(rows) < len(gold):
            logger.warning("Annotator %s covers %d of %d gold arguments", annotator, len(rows), len(gold))
        own = votes.binary[rows, j, :]
        g = gold.values[[gold_index[votes.argument_ids[i]] for i in rows]]
        per_annotator[annotator] = _score_rows(g, own)
    if not per_annotator:
        raise EvaluationError("no annotator overlaps the gold labels")
    means = np.stack(list(per_annotator.values())).mean(axis=0)
    return ScoreReport(
        approach="human",
        per_dimension={d: float(means[i]) for i, d in enumerate(DIMENSION_ORDER)},
        macro=float(means.mean()),
        per_annotator=per_annotator,
    )


def significance(first: ScoreReport, second: ScoreReport, alpha_level: float = 0.05) -> SignificanceVerdict:
    """Wilcoxon signed-rank over paired per-fold macro F1."""
    if not first.per_fold or not second.per_fold:
        raise EvaluationError("significance needs per-fold scores on both sides")
    if sorted(first.per_fold) != sorted(second.per_fold) or first.plan_fingerprint != second.plan_fingerprint:
        raise EvaluationError("reports were built on different fold plans")
    result = wilcoxon_signed_rank(first.fold_macros(), second.fold_macros(), alpha_level)
    if result.statistic > 0:
        direction = f"{first.approach} > {second.approach}"
    elif result.statistic < 0:
        direction = f"{first.approach} < {second.approach}"
    else:
        direction = "tie"
    return SignificanceVerdict(first.approach, second.approach, result, direction)
