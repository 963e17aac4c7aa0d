import json
import struct

import numpy as np
import pytest

from wortsense.errors import ValidationError
from wortsense.net import ModelConfig, init_params
from wortsense.store import MODEL_MAGIC, ModelBundle, load_params, save_params
from wortsense.windows import FEATURES_BASE5, FEATURES_EXTENDED7, NormStats


def make_bundle(feature_names=FEATURES_BASE5, seed=4):
    config = ModelConfig(totalfeatures=len(feature_names))
    params = init_params(config, seed=seed)
    stats = NormStats(np.arange(len(feature_names), dtype=float),
                      np.ones(len(feature_names)))
    metadata = {"splits": {"train": ["run000", "run001"], "val": [], "test": ["run002"]},
                "overlap": 7}
    return ModelBundle(params, config, feature_names, stats, metadata)


def rewrite_header(path, mutate):
    blob = path.read_bytes()
    off = len(MODEL_MAGIC)
    version, header_len = struct.unpack("<II", blob[off:off + 8])
    header = json.loads(blob[off + 8:off + 8 + header_len])
    mutate(header)
    payload = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(
        blob[:off] + struct.pack("<II", version, len(payload)) + payload
        + blob[off + 8 + header_len:]
    )


class TestRoundTrip:
    def test_bitwise_identical(self, tmp_path):
        bundle = make_bundle()
        path = tmp_path / "model.bin"
        save_params(path, bundle)
        loaded = load_params(path)
        for (name_a, a), (name_b, b) in zip(bundle.params.named_arrays(),
                                            loaded.params.named_arrays()):
            assert name_a == name_b
            assert a.tobytes() == b.tobytes()
        assert loaded.config == bundle.config
        assert loaded.feature_names == bundle.feature_names
        assert loaded.norm_stats == bundle.norm_stats
        assert loaded.metadata == bundle.metadata

    def test_save_twice_identical_bytes(self, tmp_path):
        bundle = make_bundle()
        save_params(tmp_path / "a.bin", bundle)
        save_params(tmp_path / "b.bin", bundle)
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


class TestValidation:
    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMODEL" + b"\x00" * 64)
        with pytest.raises(ValidationError, match="not a weights file"):
            load_params(path)

    def test_rejects_future_version(self, tmp_path):
        path = tmp_path / "model.bin"
        save_params(path, make_bundle())
        blob = bytearray(path.read_bytes())
        blob[len(MODEL_MAGIC)] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(ValidationError, match="version"):
            load_params(path)

    def test_rejects_tampered_shape(self, tmp_path):
        path = tmp_path / "model.bin"
        save_params(path, make_bundle())
        rewrite_header(path, lambda h: h["arrays"][0].__setitem__("shape", [16, 7]))
        with pytest.raises(ValidationError):
            load_params(path)

    def test_rejects_truncation(self, tmp_path):
        path = tmp_path / "model.bin"
        save_params(path, make_bundle())
        blob = path.read_bytes()
        (tmp_path / "cut.bin").write_bytes(blob[:-8])
        with pytest.raises(ValidationError, match="truncated"):
            load_params(tmp_path / "cut.bin")

    def test_rejects_trailing_garbage(self, tmp_path):
        path = tmp_path / "model.bin"
        save_params(path, make_bundle())
        (tmp_path / "fat.bin").write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ValidationError, match="trailing"):
            load_params(tmp_path / "fat.bin")

    def test_feature_mismatch_message(self, tmp_path):
        path = tmp_path / "model.bin"
        save_params(path, make_bundle(FEATURES_BASE5))
        bundle = load_params(path)
        with pytest.raises(ValidationError, match="feature mismatch"):
            bundle.check_feature_names(FEATURES_EXTENDED7)
        bundle.check_feature_names(FEATURES_BASE5)

    def test_bundle_rejects_inconsistent_feature_count(self):
        config = ModelConfig(totalfeatures=5)
        params = init_params(config, seed=0)
        stats = NormStats(np.zeros(5), np.ones(5))
        with pytest.raises(ValidationError):
            ModelBundle(params, config, FEATURES_EXTENDED7, stats)

    def test_train_run_ids(self):
        assert make_bundle().train_run_ids() == ("run000", "run001")
