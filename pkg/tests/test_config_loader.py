import os

import numpy as np
import pytest

from src.models.base_model import FormatError
from src.models.codec_model import RoundingMode
from src.models.experiment_model import AblationConfig, NeedleConfig, SweepConfig, SyntheticProbeConfig
from src.utils.config_loader import apply_overrides, load_config
from src.utils.matrix_io import decode_matrix, encode_matrix, read_matrix, write_matrix

QUICK_CONFIG = os.path.join(os.path.dirname(__file__), "..", "data", "table1_quick.json5")


def test_load_json5_with_comments(tmp_path):
    path = tmp_path / "cfg.json5"
    path.write_text("// 注释\n{dim: 64, bits: [2, 3,],}\n", encoding="utf-8")
    assert load_config(str(path)) == {"dim": 64, "bits": [2, 3]}


def test_load_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.json5"))
    bad = tmp_path / "bad.json5"
    bad.write_text("{dim: ", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(str(bad))
    array = tmp_path / "array.json5"
    array.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(str(array))


def test_overrides_win_and_none_is_ignored():
    cfg = apply_overrides(SyntheticProbeConfig, {"dim": 64, "n_seeds": 3}, n_seeds=1, bits=None)
    assert (cfg.dim, cfg.n_seeds, cfg.bits) == (64, 1, (2, 3, 4))
    with pytest.raises(ValueError):
        apply_overrides(SyntheticProbeConfig, {"dims": 64})


@pytest.mark.parametrize("config_cls,data", [
    (SyntheticProbeConfig, {"codecs": 5}),
    (SyntheticProbeConfig, {"dim": [1]}),
    (SyntheticProbeConfig, {"bits": [[2]]}),
    (NeedleConfig, {"noise_fraction": "0.1"}),
    (NeedleConfig, {"needle_norm": 1}),
    (SweepConfig, {"n_seeds": True}),
    (AblationConfig, {"modes": {"scalar": 1}}),
])
def test_mistyped_config_values(config_cls, data):
    with pytest.raises(ValueError, match="类型不对"):
        apply_overrides(config_cls, data)


def test_bundled_quick_config():
    cfg = apply_overrides(SyntheticProbeConfig, load_config(QUICK_CONFIG))
    assert cfg.dim == 64
    assert cfg.rounding is RoundingMode.SCALAR
    assert cfg.codecs == ("tq_mse", "octopus", "octopus_qjl")


def test_experiment_config_defaults_and_validation():
    assert SyntheticProbeConfig().rounding is RoundingMode.SCALAR
    assert NeedleConfig().softmax_scale == pytest.approx(128 ** -0.5)
    assert SweepConfig().rounding is RoundingMode.LOCAL3X3
    assert AblationConfig(modes="scalar,full").modes == (RoundingMode.SCALAR, RoundingMode.FULL)
    with pytest.raises(ValueError):
        NeedleConfig(noise_fraction=1.0)
    with pytest.raises(ValueError):
        SweepConfig(deltas=(1, 2))
    with pytest.raises(ValueError):
        AblationConfig(modes=("full",))
    with pytest.raises(ValueError):
        SyntheticProbeConfig(n_keys=0)


def test_matrix_file_round_trip(tmp_path):
    m = np.arange(12, dtype=np.float32).reshape(3, 4)
    path = write_matrix(str(tmp_path / "sub" / "keys.octm"), m)
    assert np.array_equal(read_matrix(path), m)
    blob = encode_matrix(m)
    assert blob[:4] == b"OCTM" and len(blob) == 12 + 48
    with pytest.raises(FormatError):
        decode_matrix(blob[:-1])
    with pytest.raises(FormatError):
        decode_matrix(b"NOPE" + blob[4:])
    with pytest.raises(FileNotFoundError):
        read_matrix(str(tmp_path / "missing.octm"))
    with pytest.raises(ValueError):
        encode_matrix(np.zeros(3))
