"""Error analysis of predicted density curves, plus the two-sensor baseline.

Each window's prediction is attributed to the window's last step; earlier
steps carry no prediction and are excluded from the statistics. Error
thresholds of 0.3 and 0.6 °P bracket the good cases, and the maximum error
exposes the failure mode where predictions run away by several Plato.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import net
from .errors import ValidationError
from .sim import G_M_S2, PA_PER_MBAR, ProcessRun, density_to_plato, two_sensor_pressures
from .store import ModelBundle
from .targets import TargetCurve, build_target_curve
from .validation import check_positive
from .windows import apply_normalizer, build_windows, variant_for

THRESHOLD_GOOD = 0.6
THRESHOLD_TRAIN = 0.3


@dataclass
class ErrorReport:
    """Absolute-error series for one run and its summary statistics."""

    run_id: str
    split: str
    steps: np.ndarray
    errors: np.ndarray
    mae: float
    max_error: float
    frac_le_03: float
    frac_le_06: float

    @classmethod
    def from_errors(cls, run_id: str, split: str, steps, errors) -> "ErrorReport":
        steps = np.asarray(steps, dtype=np.int64)
        errors = np.asarray(errors, dtype=np.float64)
        if steps.shape != errors.shape or steps.ndim != 1 or steps.size == 0:
            raise ValidationError("steps and errors must be matching nonempty vectors")
        if np.any(errors < 0) or not np.all(np.isfinite(errors)):
            raise ValidationError("errors must be finite and nonnegative")
        return cls(
            run_id=run_id,
            split=split,
            steps=steps,
            errors=errors,
            mae=float(np.mean(errors)),
            max_error=float(np.max(errors)),
            frac_le_03=float(np.mean(errors <= THRESHOLD_TRAIN)),
            frac_le_06=float(np.mean(errors <= THRESHOLD_GOOD)),
        )

    def self_consistent(self, tol: float = 1e-12) -> bool:
        """Summary statistics must be recomputable from the stored series."""
        return (
            abs(self.mae - float(np.mean(self.errors))) <= tol
            and abs(self.max_error - float(np.max(self.errors))) <= tol
            and self.frac_le_03 == float(np.mean(self.errors <= THRESHOLD_TRAIN))
            and self.frac_le_06 == float(np.mean(self.errors <= THRESHOLD_GOOD))
        )

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "split": self.split,
            "mae": self.mae,
            "max_error": self.max_error,
            "frac_le_03": self.frac_le_03,
            "frac_le_06": self.frac_le_06,
            "steps": self.steps.tolist(),
            "errors": self.errors.tolist(),
        }


def absolute_error_curve(
    predicted: Sequence[tuple[int, float]],
    target: TargetCurve,
    run_id: str = "",
    split: str = "",
) -> ErrorReport:
    """Per-step |prediction - target| at every predicted step."""
    if not len(predicted):
        raise ValidationError("no predictions given")
    steps = np.array([int(s) for s, _ in predicted], dtype=np.int64)
    values = np.array([float(p) for _, p in predicted], dtype=np.float64)
    if np.any(steps[1:] <= steps[:-1]):
        raise ValidationError("predicted steps must be strictly increasing")
    if steps[0] < 0 or steps[-1] >= target.duration_steps:
        raise ValidationError(
            f"predicted steps outside the target curve's [0, {target.duration_steps})"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("predictions contain non-finite values")
    errors = np.abs(values - target.plato[steps])
    return ErrorReport.from_errors(run_id, split, steps, errors)


def hydrostatic_density_baseline(p_low, p_high, sensor_gap_m: float = 0.10):
    """Density in °Plato from a two-sensor pressure differential over a known gap."""
    check_positive("sensor_gap_m", sensor_gap_m)
    p_low = np.asarray(p_low, dtype=np.float64)
    p_high = np.asarray(p_high, dtype=np.float64)
    if np.any(p_high < 0):
        raise ValidationError("upper sensor pressure must be >= 0")
    diff = p_low - p_high
    if np.any(diff <= 0):
        raise ValidationError(
            "nonpositive pressure differential: sensor fault or uncovered upper sensor"
        )
    density = diff * PA_PER_MBAR / (G_M_S2 * sensor_gap_m)
    out = density_to_plato(density)
    return float(out) if np.ndim(out) == 0 else out


def baseline_density_series(run: ProcessRun, sensor_gap_m: float = 0.10) -> np.ndarray:
    """Closed-loop baseline: noise-free two-sensor pair fed back through the formula."""
    p_low, p_high = two_sensor_pressures(run, sensor_gap_m)
    return np.asarray(hydrostatic_density_baseline(p_low, p_high, sensor_gap_m))


@dataclass
class SplitEvaluation:
    reports: list[ErrorReport]
    aggregate: dict = field(default_factory=dict)
    predictions: dict[str, list[tuple[int, float]]] = field(default_factory=dict)


def evaluate_split(
    bundle: ModelBundle,
    runs: Sequence[ProcessRun],
    split: str,
    overlap: int = 7,
    windowsize: int | None = None,
) -> SplitEvaluation:
    """One ErrorReport per run plus a macro-average over the split."""
    if split == "test":
        train_ids = set(bundle.train_run_ids())
        leaked = sorted({r.run_id for r in runs} & train_ids)
        if leaked:
            raise ValidationError(
                f"test split contains runs seen in training: {leaked}"
            )
    windowsize = bundle.config.windowsize if windowsize is None else windowsize
    variant = variant_for(bundle.feature_names)
    reports = []
    predictions: dict[str, list[tuple[int, float]]] = {}
    for run in runs:
        target = build_target_curve(run.probes, run.duration_steps)
        raw = build_windows(run, target, windowsize, overlap, variant)
        batch = apply_normalizer(raw, bundle.norm_stats, bundle.feature_names)
        preds = net.predict(bundle.params, batch.features)
        series = [
            (int(s) + windowsize - 1, float(p))
            for s, p in zip(batch.start_steps, preds)
        ]
        predictions[run.run_id] = series
        reports.append(absolute_error_curve(series, target, run.run_id, split))
    return SplitEvaluation(
        reports=reports, aggregate=aggregate_reports(reports), predictions=predictions
    )


def aggregate_reports(reports: Sequence[ErrorReport]) -> dict:
    if not reports:
        return {"n_runs": 0, "mae": None, "max_error": None,
                "frac_le_03": None, "frac_le_06": None}
    return {
        "n_runs": len(reports),
        "mae": float(np.mean([r.mae for r in reports])),
        "max_error": float(np.max([r.max_error for r in reports])),
        "frac_le_03": float(np.mean([r.frac_le_03 for r in reports])),
        "frac_le_06": float(np.mean([r.frac_le_06 for r in reports])),
    }
