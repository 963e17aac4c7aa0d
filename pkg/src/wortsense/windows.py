"""Overlapping training frames built from runs and their target curves.

A frame is a ``windowsize x n_features`` slice of a run's feature matrix;
its scalar target is the fused density at the frame's last step, so a
prediction only ever looks backward. Frames never cross run boundaries.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .sim import SPINDLE, ProcessRun
from .targets import TargetCurve, probe_step_function
from .validation import check_finite, check_window_array

BASE5 = "base5"
EXTENDED7 = "extended7"

FEATURES_BASE5 = ("pressure_mbar", "step", "ambient_temp_c", "wort_temp_c", "probe_count")
FEATURES_EXTENDED7 = FEATURES_BASE5 + ("initial_pressure_mbar", "initial_plato")

_VARIANTS = {BASE5: FEATURES_BASE5, EXTENDED7: FEATURES_EXTENDED7}


def feature_names(feature_set: str) -> tuple[str, ...]:
    try:
        return _VARIANTS[feature_set]
    except KeyError:
        raise ValidationError(
            f"unknown feature set {feature_set!r}, expected one of {sorted(_VARIANTS)}"
        ) from None


def variant_for(names: Sequence[str]) -> str:
    for variant, expected in _VARIANTS.items():
        if tuple(names) == expected:
            return variant
    raise ValidationError(f"feature names {list(names)!r} match no known feature set")


@dataclass
class DataFrameWindow:
    """One frame: feature matrix plus the scalar target at its last step."""

    features: np.ndarray
    target: float
    source_run: str
    start_step: int


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and standard deviation used for z-scoring."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "sd", np.asarray(self.sd, dtype=np.float64))
        if self.mean.shape != self.sd.shape or self.mean.ndim != 1:
            raise ValidationError("norm stats must be matching 1-D vectors")
        if np.any(self.sd <= 0):
            raise ValidationError("norm stats sd must be > 0 for every feature")

    @property
    def n_features(self) -> int:
        return self.mean.size

    def __eq__(self, other):
        return (
            isinstance(other, NormStats)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.sd, other.sd)
        )


@dataclass
class WindowBatch:
    """Stacked frames sharing one feature layout and normalization."""

    features: np.ndarray                 # (n_windows, windowsize, n_features)
    targets: np.ndarray                  # (n_windows,)
    run_ids: list[str]
    start_steps: np.ndarray              # (n_windows,)
    feature_names: tuple[str, ...]
    norm_stats: NormStats | None = None

    def __post_init__(self):
        self.features = check_window_array("features", self.features)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.start_steps = np.asarray(self.start_steps, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        n = self.features.shape[0]
        if self.targets.shape != (n,) or self.start_steps.shape != (n,):
            raise ValidationError("targets/start_steps length must match window count")
        if len(self.run_ids) != n:
            raise ValidationError("run_ids length must match window count")
        check_finite("targets", self.targets)
        if self.features.shape[2] != len(self.feature_names):
            raise ValidationError(
                f"{self.features.shape[2]} feature columns but "
                f"{len(self.feature_names)} feature names"
            )
        if self.norm_stats is not None and self.norm_stats.n_features != len(self.feature_names):
            raise ValidationError("norm_stats feature count mismatch")

    @property
    def n_windows(self) -> int:
        return self.features.shape[0]

    @property
    def windowsize(self) -> int:
        return self.features.shape[1]

    @property
    def windows(self) -> list[DataFrameWindow]:
        return [
            DataFrameWindow(self.features[i], float(self.targets[i]),
                            self.run_ids[i], int(self.start_steps[i]))
            for i in range(self.n_windows)
        ]


def window_count(duration_steps: int, windowsize: int, overlap: int) -> int:
    """Number of frames: floor((duration - windowsize)/overlap) + 1."""
    if duration_steps < windowsize:
        raise ValidationError(
            f"duration {duration_steps} shorter than windowsize {windowsize}"
        )
    return (duration_steps - windowsize) // overlap + 1


def run_feature_matrix(run: ProcessRun, feature_set: str = BASE5) -> np.ndarray:
    """Per-step feature matrix (duration x n_features) in canonical column order."""
    names = feature_names(feature_set)
    n = run.duration_steps
    counts = probe_step_function(run.probes, n, SPINDLE).count.astype(np.float64)
    columns = {
        "pressure_mbar": run.pressure_mbar,
        "step": np.arange(n, dtype=np.float64),
        "ambient_temp_c": run.ambient_temp_c,
        "wort_temp_c": run.wort_temp_c,
        "probe_count": counts,
    }
    if feature_set == EXTENDED7:
        columns["initial_pressure_mbar"] = np.full(n, run.initial_pressure_mbar)
        columns["initial_plato"] = np.full(n, run.initial_plato)
    return np.column_stack([columns[name] for name in names])


def build_windows(
    run: ProcessRun,
    target: TargetCurve,
    windowsize: int,
    overlap: int,
    feature_set: str = BASE5,
) -> list[DataFrameWindow]:
    """Slice one run into overlapping frames targeting the last-step density."""
    if windowsize < 1 or overlap < 1:
        raise ValidationError("windowsize and overlap must be >= 1")
    if target.duration_steps != run.duration_steps:
        raise ValidationError(
            f"target curve length {target.duration_steps} != run duration {run.duration_steps}"
        )
    n_windows = window_count(run.duration_steps, windowsize, overlap)
    matrix = run_feature_matrix(run, feature_set)
    check_finite("run features", matrix)
    starts = np.arange(n_windows, dtype=np.int64) * overlap
    stacked = np.stack([matrix[s:s + windowsize] for s in starts])
    ends = starts + windowsize - 1
    return [
        DataFrameWindow(stacked[i], float(target.plato[ends[i]]), run.run_id, int(starts[i]))
        for i in range(n_windows)
    ]


def stack_windows(windows: Sequence[DataFrameWindow]) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray]:
    if not windows:
        raise ValidationError("no windows given")
    features = np.stack([w.features for w in windows]).astype(np.float64)
    targets = np.array([w.target for w in windows], dtype=np.float64)
    run_ids = [w.source_run for w in windows]
    start_steps = np.array([w.start_step for w in windows], dtype=np.int64)
    return features, targets, run_ids, start_steps


class WindowNormalizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring of window tensors; statistics come from fit data only."""

    def __init__(self, sd_floor: float = 1e-8):
        self.sd_floor = sd_floor

    def fit(self, X, y=None):
        X = check_window_array("X", X)
        if X.shape[0] == 0:
            raise ValidationError("cannot fit normalizer on an empty window set")
        self.mean_ = X.mean(axis=(0, 1))
        self.scale_ = np.maximum(X.std(axis=(0, 1)), self.sd_floor)
        self.n_features_in_ = X.shape[2]
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "mean_"):
            raise ValidationError("normalizer is not fitted")
        X = check_window_array("X", X)
        if X.shape[2] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[2]} features, normalizer was fitted with {self.n_features_in_}"
            )
        return (X - self.mean_) / self.scale_

    @property
    def stats(self) -> NormStats:
        if not hasattr(self, "mean_"):
            raise ValidationError("normalizer is not fitted")
        return NormStats(self.mean_.copy(), self.scale_.copy())


def fit_normalizer(windows: Sequence[DataFrameWindow], sd_floor: float = 1e-8) -> NormStats:
    """Per-feature mean/sd over every row of the given (training) windows."""
    features, *_ = stack_windows(windows)
    return WindowNormalizer(sd_floor=sd_floor).fit(features).stats


def apply_normalizer(
    windows: Sequence[DataFrameWindow],
    stats: NormStats,
    feature_names: Sequence[str],
) -> WindowBatch:
    """Z-score windows with previously fitted stats; targets stay in raw °Plato."""
    features, targets, run_ids, start_steps = stack_windows(windows)
    if features.shape[2] != stats.n_features:
        raise ValidationError(
            f"windows have {features.shape[2]} features, stats expect {stats.n_features}"
        )
    normalized = (features - stats.mean) / stats.sd
    return WindowBatch(normalized, targets, run_ids, start_steps,
                       tuple(feature_names), stats)


def split_runs(runs: Sequence, train_n: int, val_n: int, test_n: int, seed: int):
    """Deterministic run-level split into disjoint train/val/test id sets."""
    ids = [r.run_id if isinstance(r, ProcessRun) else str(r) for r in runs]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate run ids")
    for name, n in (("train_n", train_n), ("val_n", val_n), ("test_n", test_n)):
        if n < 0:
            raise ValidationError(f"{name} must be >= 0")
    if train_n + val_n + test_n != len(ids):
        raise ValidationError(
            f"split {train_n}+{val_n}+{test_n} != {len(ids)} runs"
        )
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    train = tuple(shuffled[:train_n])
    val = tuple(shuffled[train_n:train_n + val_n])
    test = tuple(shuffled[train_n + val_n:])
    return train, val, test


# ---------------------------------------------------------------------------
# Frames file: JSON header + little-endian binary blocks
# ---------------------------------------------------------------------------

FRAMES_MAGIC = b"WSFRAMES"
FRAMES_VERSION = 1


@dataclass
class FramesFile:
    """Loaded frames file: named partitions plus the shared layout metadata."""

    partitions: dict[str, WindowBatch]
    windowsize: int
    feature_names: tuple[str, ...]
    norm_stats: NormStats
    overlap: int | None = None


def save_frames(path: Path, partitions: dict[str, WindowBatch], overlap: int | None = None) -> None:
    """Persist named partitions sharing one feature layout and one NormStats."""
    if not partitions:
        raise ValidationError("no partitions to save")
    first = next(iter(partitions.values()))
    stats = first.norm_stats
    if stats is None:
        raise ValidationError("partitions must be normalized before saving")
    blocks: list[tuple[str, np.ndarray]] = []
    part_meta = []
    for name, batch in partitions.items():
        if batch.feature_names != first.feature_names:
            raise ValidationError("partitions disagree on feature names")
        if batch.norm_stats != stats:
            raise ValidationError("partitions disagree on norm stats")
        unique_ids = sorted(set(batch.run_ids))
        index = {rid: i for i, rid in enumerate(unique_ids)}
        run_index = np.array([index[rid] for rid in batch.run_ids], dtype=np.int64)
        part_meta.append({"name": name, "n_windows": batch.n_windows, "run_ids": unique_ids})
        blocks.append((f"{name}.features", batch.features))
        blocks.append((f"{name}.targets", batch.targets))
        blocks.append((f"{name}.start_steps", batch.start_steps))
        blocks.append((f"{name}.run_index", run_index))
    header = {
        "format_version": FRAMES_VERSION,
        "windowsize": first.windowsize,
        "overlap": overlap,
        "n_features": len(first.feature_names),
        "feature_names": list(first.feature_names),
        "norm_stats": {"mean": stats.mean.tolist(), "sd": stats.sd.tolist()},
        "partitions": part_meta,
        "blocks": [
            {"name": name, "dtype": _wire_dtype(arr), "shape": list(arr.shape)}
            for name, arr in blocks
        ],
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FRAMES_MAGIC)
        fh.write(struct.pack("<II", FRAMES_VERSION, len(payload)))
        fh.write(payload)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype=_wire_dtype(arr)).tobytes())


def _wire_dtype(arr: np.ndarray) -> str:
    return "<i8" if arr.dtype.kind == "i" else "<f8"


def load_frames(path: Path) -> FramesFile:
    with open(path, "rb") as fh:
        magic = fh.read(len(FRAMES_MAGIC))
        if magic != FRAMES_MAGIC:
            raise ValidationError(f"{path}: not a frames file")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != FRAMES_VERSION:
            raise ValidationError(
                f"{path}: frames format version {version}, expected {FRAMES_VERSION}"
            )
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            count = int(np.prod(shape)) if shape else 1
            dtype = np.dtype(block["dtype"])
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValidationError(f"{path}: truncated block {block['name']!r}")
            arrays[block["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise ValidationError(f"{path}: trailing bytes after declared blocks")
    stats = NormStats(
        np.array(header["norm_stats"]["mean"]), np.array(header["norm_stats"]["sd"])
    )
    names = tuple(header["feature_names"])
    out: dict[str, WindowBatch] = {}
    for part in header["partitions"]:
        name = part["name"]
        features = arrays[f"{name}.features"].astype(np.float64)
        expected = (part["n_windows"], header["windowsize"], header["n_features"])
        if features.shape != expected:
            raise ValidationError(
                f"{path}: partition {name!r} features shape {features.shape}, "
                f"header declares {expected}"
            )
        run_index = arrays[f"{name}.run_index"]
        run_ids = [part["run_ids"][i] for i in run_index]
        out[name] = WindowBatch(
            features,
            arrays[f"{name}.targets"].astype(np.float64),
            run_ids,
            arrays[f"{name}.start_steps"].astype(np.int64),
            names,
            stats,
        )
    return FramesFile(
        partitions=out,
        windowsize=header["windowsize"],
        feature_names=names,
        norm_stats=stats,
        overlap=header.get("overlap"),
    )


def export_sample_csv(batch: WindowBatch, path: Path, n_windows: int = 2) -> None:
    """Human-readable dump of the first few frames for eyeballing."""
    import csv

    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window", "source_run", "start_step", "row",
                         *batch.feature_names, "target"])
        for i in range(min(n_windows, batch.n_windows)):
            for row in range(batch.windowsize):
                writer.writerow([
                    i, batch.run_ids[i], int(batch.start_steps[i]), row,
                    *[repr(float(v)) for v in batch.features[i, row]],
                    repr(float(batch.targets[i])),
                ])
