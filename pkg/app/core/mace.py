"""Annotator-reliability EM (MACE) over binary labels, one dimension at a time.

Each annotation is either a copy of the item's latent true label (probability
1 - theta_j) or a draw from the annotator's own label distribution xi_j
(probability theta_j). EM alternates posteriors over (T, S) with smoothed
re-estimates of theta and xi; the restart with the best objective wins.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from app.core.aggregate import LabelMatrix, close_matrix
from app.core.taxonomy import DIMENSION_ORDER, AnnotationRecord, DimensionId
from app.core.votes import MISSING, VoteTensor, build_votes

logger = logging.getLogger(__name__)

N_LABELS = 2


class MaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MaceConfig:
    iterations: int = 50
    restarts: int = 10
    smoothing: float = 0.1
    seed: int = 0
    init_noise: float = 0.1
    workers: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise MaceError("iterations must be >= 0")
        if self.restarts < 1:
            raise MaceError("restarts must be >= 1")
        if self.smoothing < 0:
            raise MaceError("smoothing must be >= 0")
        if not 0.0 <= self.init_noise < 1.0:
            raise MaceError("init_noise must be in [0, 1)")


@dataclass(frozen=True)
class DimensionFit:
    dimension: DimensionId
    theta: np.ndarray  # annotators
    xi: np.ndarray  # annotators x 2 (no, yes)
    posterior: np.ndarray  # items x 2 (no, yes)
    log_likelihood: float
    restart: int
    # objective per iteration, one list per restart (aborted restarts are empty)
    traces: list[list[float]] = field(default_factory=list)


@dataclass(frozen=True)
class MaceModel:
    argument_ids: tuple[str, ...]
    annotator_ids: tuple[str, ...]
    config: MaceConfig
    fits: dict[DimensionId, DimensionFit]

    @property
    def log_likelihood(self) -> float:
        return float(sum(f.log_likelihood for f in self.fits.values()))

    def theta(self, dim: DimensionId | str) -> dict[str, float]:
        fit = self.fits[DimensionId(dim)]
        return {a: float(t) for a, t in zip(self.annotator_ids, fit.theta)}

    def posterior_yes(self, dim: DimensionId | str) -> np.ndarray:
        return self.fits[DimensionId(dim)].posterior[:, 1]


@dataclass(frozen=True)
class _Restart:
    index: int
    theta: np.ndarray
    xi: np.ndarray
    posterior: np.ndarray
    objective: float
    trace: list[float]


def _e_step(labels: np.ndarray, present: np.ndarray, theta: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Returns (item posterior items x 2, data log-likelihood, expected spam counts items x annotators)."""
    safe = np.where(present, labels, 0)
    spam_prob = theta[None, :] * xi[np.arange(xi.shape[0])[None, :], safe]  # theta_j * xi_j(A_ij)
    # P(A_ij | T = t) for t in {0, 1}
    p_given = np.stack([(1.0 - theta[None, :]) * (safe == t) + spam_prob for t in range(N_LABELS)], axis=-1)
    p_given = np.where(present[..., None], p_given, 1.0)
    with np.errstate(divide="ignore"):
        log_joint = np.log(p_given).sum(axis=1) + np.log(1.0 / N_LABELS)
    log_norm = logsumexp(log_joint, axis=1)
    posterior = np.exp(log_joint - log_norm[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        spam_given = np.where(p_given > 0, spam_prob[..., None] / p_given, 0.0)
    spam = (posterior[:, None, :] * spam_given).sum(axis=-1) * present
    return posterior, float(log_norm.sum()), spam


def _m_step(labels: np.ndarray, present: np.ndarray, spam: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    totals = present.sum(axis=0).astype(float)
    spam_total = spam.sum(axis=0)
    theta = (spam_total + s) / (totals + 2.0 * s)
    per_label = np.stack([(spam * (labels == l) * present).sum(axis=0) for l in range(N_LABELS)], axis=1)
    denom = spam_total[:, None] + N_LABELS * s
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(denom > 0, (per_label + s) / np.where(denom > 0, denom, 1.0), 1.0 / N_LABELS)
    return theta, xi


def _objective(log_lik: float, theta: np.ndarray, xi: np.ndarray, s: float) -> float:
    if s == 0:
        return log_lik
    with np.errstate(divide="ignore"):
        prior = s * (np.log(theta).sum() + np.log(1.0 - theta).sum()) + s * np.log(xi).sum()
    return float(log_lik + prior)


def _run_restart(labels: np.ndarray, present: np.ndarray, config: MaceConfig, dim_index: int, restart: int) -> _Restart | None:
    n_annotators = labels.shape[1]
    s = config.smoothing / N_LABELS
    rng = np.random.default_rng([config.seed, dim_index, restart])
    theta = 0.5 + config.init_noise * rng.uniform(-0.5, 0.5, size=n_annotators)
    xi = 1.0 + config.init_noise * rng.uniform(-0.5, 0.5, size=(n_annotators, N_LABELS))
    xi = xi / xi.sum(axis=1, keepdims=True)

    trace: list[float] = []
    posterior, log_lik, spam = _e_step(labels, present, theta, xi)
    for _ in range(config.iterations):
        objective = _objective(log_lik, theta, xi, s)
        if not np.isfinite(objective):
            logger.warning("MACE restart %d on dimension %d hit a non-finite objective; dropped", restart, dim_index)
            return None
        trace.append(objective)
        theta, xi = _m_step(labels, present, spam, s)
        posterior, log_lik, spam = _e_step(labels, present, theta, xi)
    objective = _objective(log_lik, theta, xi, s)
    if not np.isfinite(objective):
        logger.warning("MACE restart %d on dimension %d hit a non-finite objective; dropped", restart, dim_index)
        return None
    trace.append(objective)
    return _Restart(restart, theta, xi, posterior, objective, trace)


def _constant_fit(labels: np.ndarray, present: np.ndarray, config: MaceConfig, dim: DimensionId, value: int) -> DimensionFit:
    s = config.smoothing / N_LABELS
    totals = present.sum(axis=0).astype(float)
    theta = np.full(labels.shape[1], s) / (totals + 2.0 * s) if s > 0 else np.zeros(labels.shape[1])
    xi = np.full((labels.shape[1], N_LABELS), 1.0 / N_LABELS)
    posterior = np.zeros((labels.shape[0], N_LABELS))
    posterior[:, value] = 1.0
    _, log_lik, _ = _e_step(labels, present, theta, xi)
    logger.debug("MACE %s: constant column, labels taken as observed", dim.value)
    return DimensionFit(dim, theta, xi, posterior, _objective(log_lik, theta, xi, s), 0, [[] for _ in range(config.restarts)])


def _fit_dimension(labels: np.ndarray, config: MaceConfig, dim: DimensionId, dim_index: int) -> DimensionFit:
    present = labels != MISSING
    if not present.any(axis=1).all():
        raise MaceError(f"every item needs at least one {dim.value} annotation")

    observed = np.unique(labels[present])
    if observed.size == 1:
        # EM on a constant column converges to the all-spam solution.
        return _constant_fit(labels, present, config, dim, int(observed[0]))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            runs = list(pool.map(lambda r: _run_restart(labels, present, config, dim_index, r), range(config.restarts)))
    else:
        runs = [_run_restart(labels, present, config, dim_index, r) for r in range(config.restarts)]

    done = [r for r in runs if r is not None]
    if not done:
        raise MaceError(f"every restart diverged on dimension {dim.value}")
    best = sorted(done, key=lambda r: (-r.objective, r.index))[0]
    traces = [r.trace if r is not None else [] for r in runs]
    return DimensionFit(dim, best.theta, best.xi, best.posterior, best.objective, best.index, traces)


def mace_fit(
    data: VoteTensor | Iterable[AnnotationRecord],
    config: MaceConfig | None = None,
    dimensions: Iterable[DimensionId | str] | None = None,
) -> MaceModel:
    config = config or MaceConfig()
    votes = data if isinstance(data, VoteTensor) else build_votes(data)
    if votes.n_annotators < 2:
        raise MaceError("MACE needs at least two annotators")
    dims = [DimensionId(d) for d in dimensions] if dimensions is not None else list(DIMENSION_ORDER)

    fits: dict[DimensionId, DimensionFit] = {}
    for d in dims:
        fits[d] = _fit_dimension(votes.column(d).astype(int), config, d, DIMENSION_ORDER.index(d))
        logger.debug("MACE %s: objective %.4f (restart %d)", d.value, fits[d].log_likelihood, fits[d].restart)
    logger.info(
        "MACE fitted %d dimensions over %d items x %d annotators", len(dims), votes.n_items, votes.n_annotators
    )
    return MaceModel(votes.argument_ids, votes.annotator_ids, config, fits)


def mace_labels(model: MaceModel, threshold: float | None = None, *, close: bool = True) -> LabelMatrix:
    """yes iff posterior(yes) > threshold (default 0.5, so exact ties go to no).

    Dimensions the model was not fitted on stay no before closure.
    """
    cut = 0.5 if threshold is None else float(threshold)
    values = np.zeros((len(model.argument_ids), len(DIMENSION_ORDER)), dtype=np.int8)
    for d, fit in model.fits.items():
        values[:, DIMENSION_ORDER.index(d)] = (fit.posterior[:, 1] > cut).astype(np.int8)
    if close:
        values = close_matrix(values)
    return LabelMatrix(model.argument_ids, values, "mace")
