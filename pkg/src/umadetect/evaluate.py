"""Per-user attack labels, detection metrics, and spam-ratio sweeps."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatchError, ParameterError
from .simulate import AttackSpec, CleanDataset, inject_profile_attacks
from .solver import SolverConfig, default_config, rpca_preset, solve

logger = logging.getLogger(__name__)

ConfigFactory = Callable[[int, int], SolverConfig]

DEFAULT_DETECTORS: dict[str, ConfigFactory] = {
    "uma": default_config,
    "rpca": rpca_preset,
}


@dataclass(frozen=True)
class DetectionReport:
    labels: np.ndarray
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    precision: float
    recall: float
    f1: float


def label_users(sparse, threshold: float = 0.0) -> np.ndarray:
    """User i is an attacker iff row i of the sparse part has |entry| > threshold.

    The default threshold is exactly zero: shrinkage produces exact zeros, so
    any nonzero entry (however tiny) counts.  A positive threshold is for
    exploratory use only.
    """
    sparse = np.asarray(sparse, dtype=np.float64)
    if sparse.ndim != 2:
        raise DimensionMismatchError(f"sparse part must be 2-d, got shape {sparse.shape}")
    if threshold < 0:
        raise ParameterError(f"threshold must be >= 0, got {threshold}")
    return (np.abs(sparse) > threshold).any(axis=1)


def score(labels, truth_labels) -> DetectionReport:
    """Confusion counts plus precision / recall / F1.

    Zero-division conventions: precision is 0 when nothing was detected,
    recall is 0 when the truth has no attackers, F1 is 0 when both rates
    vanish.
    """
    labels = np.asarray(labels, dtype=bool).ravel()
    truth = np.asarray(truth_labels, dtype=bool).ravel()
    if labels.shape != truth.shape:
        raise DimensionMismatchError(
            f"label vectors differ in length: {labels.size} vs {truth.size}"
        )
    tp = int(np.sum(labels & truth))
    fp = int(np.sum(labels & ~truth))
    fn = int(np.sum(~labels & truth))
    tn = int(np.sum(~labels & ~truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return DetectionReport(
        labels=labels,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        true_negatives=tn,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def report_to_dict(report: DetectionReport, *, user_ids=None, config_echo=None,
                   diagnostics_summary=None) -> dict:
    doc = {
        "labels": [int(v) for v in report.labels],
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
        "false_negatives": report.false_negatives,
        "true_negatives": report.true_negatives,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    }
    if user_ids is not None:
        doc["user_ids"] = list(user_ids)
    if config_echo is not None:
        doc["config"] = config_echo
    if diagnostics_summary is not None:
        doc["diagnostics"] = diagnostics_summary
    return doc


@dataclass
class SweepCell:
    ratio: float
    seed: int
    detector: str
    report: DetectionReport | None = None
    error: str | None = None


@dataclass
class SweepResult:
    ratios: list[float]
    seeds: list[int]
    detectors: list[str]
    cells: list[SweepCell]

    def reports(self, detector: str, ratio: float) -> list[DetectionReport]:
        return [
            c.report
            for c in self.cells
            if c.detector == detector and c.ratio == ratio and c.report is not None
        ]

    def mean_metric(self, detector: str, metric: str) -> list[float]:
        """Per-ratio mean of a metric (nan where every seed failed)."""
        out = []
        for ratio in self.ratios:
            values = [getattr(r, metric) for r in self.reports(detector, ratio)]
            out.append(float(np.mean(values)) if values else float("nan"))
        return out

    def std_metric(self, detector: str, metric: str) -> list[float]:
        out = []
        for ratio in self.ratios:
            values = [getattr(r, metric) for r in self.reports(detector, ratio)]
            out.append(float(np.std(values)) if values else float("nan"))
        return out

    def errors(self) -> list[SweepCell]:
        return [c for c in self.cells if c.error is not None]


def sweep_spam_ratio(
    clean: CleanDataset,
    ratios: Sequence[float],
    detectors: Mapping[str, ConfigFactory] | None = None,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    *,
    attack: AttackSpec | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Regenerate attacks per (ratio, seed) on a fixed normal-user base and
    score every detector on the same attacked instances.

    Per-cell failures are recorded on the result instead of aborting the
    sweep.  Cells are independent, so ``jobs > 1`` runs them concurrently;
    the assembled result order is fixed regardless.
    """
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise ParameterError("ratio list must be nonempty")
    if any(not 0.0 < r < 1.0 for r in ratios):
        raise ParameterError("every spam ratio must be in (0, 1)")
    seeds = [int(s) for s in seeds]
    if detectors is None:
        detectors = dict(DEFAULT_DETECTORS)
    base_attack = attack if attack is not None else AttackSpec()

    def run_cell(ratio: float, seed: int) -> list[SweepCell]:
        cells: list[SweepCell] = []
        try:
            spec = replace(base_attack, spam_ratio=ratio, seed=seed)
            attacked = inject_profile_attacks(clean, spec)
        except Exception as exc:  # recorded, not raised
            logger.warning("attack generation failed at ratio=%s seed=%s: %s", ratio, seed, exc)
            return [
                SweepCell(ratio=ratio, seed=seed, detector=name, error=str(exc))
                for name in detectors
            ]
        matrix = attacked.ratings.matrix
        mask = attacked.ratings.mask
        for name, factory in detectors.items():
            try:
                config = factory(*matrix.shape)
                result = solve(matrix, mask, config)
                report = score(label_users(result.sparse), attacked.truth_labels)
                cells.append(SweepCell(ratio=ratio, seed=seed, detector=name, report=report))
            except Exception as exc:
                logger.warning("detector %s failed at ratio=%s seed=%s: %s", name, ratio, seed, exc)
                cells.append(SweepCell(ratio=ratio, seed=seed, detector=name, error=str(exc)))
        return cells

    grid = [(ratio, seed) for ratio in ratios for seed in seeds]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda rs: run_cell(*rs), grid))
    else:
        chunks = [run_cell(*rs) for rs in grid]

    cells = [cell for chunk in chunks for cell in chunk]
    return SweepResult(ratios=ratios, seeds=seeds, detectors=list(detectors), cells=cells)


def sweep_to_csv(result: SweepResult) -> str:
    """CSV table (ratio, seed, detector, precision, recall, f1) at full
    round-trip precision; failed cells carry nan metrics."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "seed", "detector", "precision", "recall", "f1"])
    for cell in result.cells:
        if cell.report is not None:
            p, r, f = cell.report.precision, cell.report.recall, cell.report.f1
        else:
            p = r = f = float("nan")
        writer.writerow([repr(cell.ratio), cell.seed, cell.detector, repr(p), repr(r), repr(f)])
    return buf.getvalue()
