"""Dense per-step density targets fused from sparse manual probes.

Refractometer readings are frequent but in °Brix and less trustworthy;
spindle readings are scarce but directly in °Plato. The fused curve is the
interpolated refractometer curve warped by an additive piecewise-linear
correction so that it passes exactly through every spindle reading.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .sim import PROBE_KINDS, REFRACTOMETER, SPINDLE, WORT_BRIX_FACTOR, ProbeEvent
from .validation import check_finite, check_positive


@dataclass(frozen=True)
class Reading:
    """One probe value at a step, in °Plato (spindle) or °Brix (refractometer)."""

    step: int
    value: float
    kind: str

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ValidationError(f"unknown reading kind {self.kind!r}")
        if self.value < 0:
            raise ValidationError(f"reading value must be >= 0, got {self.value!r}")


@dataclass
class TargetCurve:
    """Per-step °Plato target, defined for every step of a run."""

    plato: np.ndarray

    def __post_init__(self):
        self.plato = np.asarray(self.plato, dtype=np.float64)
        if self.plato.ndim != 1:
            raise ValidationError(f"plato must be 1-D, got shape {self.plato.shape}")
        check_finite("plato", self.plato)

    @property
    def duration_steps(self) -> int:
        return self.plato.size


@dataclass
class StepFunction:
    """Cumulative probe count per step: nondecreasing, unit increments."""

    count: np.ndarray

    def __post_init__(self):
        self.count = np.asarray(self.count, dtype=np.int64)
        if self.count.ndim != 1:
            raise ValidationError(f"count must be 1-D, got shape {self.count.shape}")
        if self.count.size:
            if self.count[0] < 0:
                raise ValidationError("count must be nonnegative")
            jumps = np.diff(self.count)
            if np.any(jumps < 0) or np.any(jumps > 1):
                raise ValidationError("count must be nondecreasing with unit increments")


def brix_to_plato(brix: float, factor: float = WORT_BRIX_FACTOR) -> float:
    """Convert a refractometer °Brix reading to °Plato via the wort correction factor."""
    if brix < 0:
        raise ValidationError(f"brix must be >= 0, got {brix!r}")
    check_positive("factor", factor)
    return brix / factor


def _checked_steps(readings: Sequence[Reading], kind: str) -> np.ndarray:
    steps = np.array([r.step for r in readings], dtype=np.int64)
    if np.any(steps[1:] <= steps[:-1]):
        raise ValidationError(f"{kind} reading steps must be strictly increasing")
    return steps


def interpolate_refractometer(readings: Sequence[Reading], duration_steps: int) -> TargetCurve:
    """Piecewise-linear curve through refractometer readings (already in °Plato).

    Constant extrapolation before the first and after the last reading.
    """
    if len(readings) < 2:
        raise ValidationError(
            f"need at least 2 refractometer readings to interpolate, got {len(readings)}"
        )
    for r in readings:
        if r.kind != REFRACTOMETER:
            raise ValidationError(f"expected refractometer readings, got kind {r.kind!r}")
    steps = _checked_steps(readings, REFRACTOMETER)
    values = np.array([r.value for r in readings], dtype=np.float64)
    grid = np.arange(duration_steps, dtype=np.float64)
    return TargetCurve(np.interp(grid, steps.astype(np.float64), values))


def anchor_spindle(spindle: Sequence[Reading], refr_curve: TargetCurve) -> TargetCurve:
    """Warp the refractometer curve so it passes exactly through spindle readings.

    The correction is piecewise-linear in the step between adjacent anchors
    and held constant beyond the outermost ones. Without spindle readings
    the curve is returned unchanged.
    """
    if not spindle:
        return TargetCurve(refr_curve.plato.copy())
    duration = refr_curve.duration_steps
    for r in spindle:
        if r.kind != SPINDLE:
            raise ValidationError(f"expected spindle readings, got kind {r.kind!r}")
        if not 0 <= r.step < duration:
            raise ValidationError(f"spindle reading at step {r.step} outside [0, {duration})")
    steps = _checked_steps(spindle, SPINDLE)
    deltas = np.array(
        [r.value - refr_curve.plato[r.step] for r in spindle], dtype=np.float64
    )
    grid = np.arange(duration, dtype=np.float64)
    correction = np.interp(grid, steps.astype(np.float64), deltas)
    return TargetCurve(refr_curve.plato + correction)


def probe_step_function(
    events: Iterable[ProbeEvent], duration_steps: int, kind_filter: str = SPINDLE
) -> StepFunction:
    """Cumulative number of ``kind_filter`` probes taken up to and including each step."""
    steps = np.array(
        [e.step for e in events if e.kind == kind_filter], dtype=np.int64
    )
    if np.any(steps[1:] <= steps[:-1]):
        raise ValidationError(f"{kind_filter} event steps must be strictly increasing")
    if steps.size and (steps[0] < 0 or steps[-1] >= duration_steps):
        raise ValidationError(f"event steps must lie within [0, {duration_steps})")
    grid = np.arange(duration_steps, dtype=np.int64)
    return StepFunction(np.searchsorted(steps, grid, side="right"))


def build_target_curve(
    probes: Sequence[ProbeEvent], duration_steps: int, brix_factor: float = WORT_BRIX_FACTOR
) -> TargetCurve:
    """Full fusion pipeline: convert, interpolate, then anchor to spindle readings."""
    refr = [
        Reading(p.step, brix_to_plato(p.value, brix_factor), REFRACTOMETER)
        for p in probes
        if p.kind == REFRACTOMETER
    ]
    spindle = [Reading(p.step, p.value, SPINDLE) for p in probes if p.kind == SPINDLE]
    curve = interpolate_refractometer(refr, duration_steps)
    return anchor_spindle(spindle, curve)


TARGET_HEADER = ["step", "plato"]


def write_target_csv(curve: TargetCurve, path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TARGET_HEADER)
        for s in range(curve.duration_steps):
            writer.writerow([s, repr(float(curve.plato[s]))])


def read_target_csv(path: Path) -> TargetCurve:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TARGET_HEADER:
            raise ValidationError(f"{path}: unexpected header {header!r}")
        values = [float(row[1]) for row in reader if row]
    return TargetCurve(np.array(values, dtype=np.float64))
