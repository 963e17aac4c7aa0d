"""Versioned weights file: JSON header plus little-endian float64 blocks.

The header is self-describing (format version, architecture, feature
names, normalization stats, array manifest) so a load can fail loudly on
any mismatch instead of silently truncating.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .net import ModelConfig, ModelParams
from .windows import NormStats

MODEL_MAGIC = b"WSLSTMWT"
MODEL_VERSION = 1


@dataclass
class ModelBundle:
    """Trained weights plus everything needed to apply them to new data."""

    params: ModelParams
    config: ModelConfig
    feature_names: tuple[str, ...]
    norm_stats: NormStats
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        if len(self.feature_names) != self.config.totalfeatures:
            raise ValidationError(
                f"{len(self.feature_names)} feature names for "
                f"totalfeatures={self.config.totalfeatures}"
            )
        if self.norm_stats.n_features != self.config.totalfeatures:
            raise ValidationError("norm_stats feature count does not match model config")
        if not self.params.matches_config(self.config):
            raise ValidationError("parameter shapes do not match model config")

    def check_feature_names(self, names) -> None:
        names = tuple(names)
        if names != self.feature_names:
            raise ValidationError(
                f"feature mismatch: model was trained on {list(self.feature_names)}, "
                f"data provides {list(names)}"
            )

    def train_run_ids(self) -> tuple[str, ...]:
        return tuple(self.metadata.get("splits", {}).get("train", ()))


def save_params(path: Path, bundle: ModelBundle) -> None:
    arrays = list(bundle.params.named_arrays())
    header = {
        "format_version": MODEL_VERSION,
        "model_config": bundle.config.to_dict(),
        "feature_names": list(bundle.feature_names),
        "norm_stats": {
            "mean": bundle.norm_stats.mean.tolist(),
            "sd": bundle.norm_stats.sd.tolist(),
        },
        "metadata": bundle.metadata,
        "arrays": [
            {"name": name, "dtype": "<f8", "shape": list(arr.shape)}
            for name, arr in arrays
        ],
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(payload)))
        fh.write(payload)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path: Path) -> ModelBundle:
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ValidationError(f"{path}: not a weights file")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != MODEL_VERSION:
            raise ValidationError(
                f"{path}: weights format version {version}, expected {MODEL_VERSION}"
            )
        header = json.loads(fh.read(header_len).decode("utf-8"))
        config = ModelConfig.from_dict(header["model_config"])
        declared = {entry["name"]: tuple(entry["shape"]) for entry in header["arrays"]}
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValidationError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after declared arrays")

    params = _params_from_arrays(config, arrays, declared, path)
    stats = NormStats(
        np.array(header["norm_stats"]["mean"]), np.array(header["norm_stats"]["sd"])
    )
    return ModelBundle(
        params=params,
        config=config,
        feature_names=tuple(header["feature_names"]),
        norm_stats=stats,
        metadata=header.get("metadata", {}),
    )


def _params_from_arrays(config, arrays, declared, path) -> ModelParams:
    d, f = config.lstm_dim, config.totalfeatures
    expected: dict[str, tuple[int, ...]] = {
        "lstm_W": (4 * d, f),
        "lstm_U": (4 * d, d),
        "lstm_b": (4 * d,),
    }
    fan_in = d
    widths = list(config.dense_dims) + [config.output_dim]
    for k, width in enumerate(widths):
        expected[f"dense{k}_W"] = (width, fan_in)
        expected[f"dense{k}_b"] = (width,)
        fan_in = width
    if set(declared) != set(expected):
        raise ValidationError(f"{path}: array manifest does not match model config")
    for name, shape in expected.items():
        if declared[name] != shape:
            raise ValidationError(
                f"{path}: array {name!r} has shape {declared[name]}, "
                f"model config requires {shape}"
            )
    dense = tuple(
        (arrays[f"dense{k}_W"], arrays[f"dense{k}_b"]) for k in range(len(widths))
    )
    return ModelParams(arrays["lstm_W"], arrays["lstm_U"], arrays["lstm_b"], dense)
