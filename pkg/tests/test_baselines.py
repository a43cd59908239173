import numpy as np
import pytest

from src.analysis.metrics import per_key_errors
from src.core.baselines import (
    baseline_bits_per_coord,
    baseline_decode,
    baseline_encode,
    baseline_score,
    pack_baseline,
    polar_angles,
    polar_encode,
    polar_reconstruct,
    tq_mse_encode,
    tq_qjl_encode,
    tq_qjl_score,
    unpack_baseline,
)
from src.core.marginals import SampleStream, sample_unit_sphere
from src.models.base_model import FormatError
from src.models.codec_model import BaselineConfig, BaselineKind


def _codec(store, kind, dim, bits, seed=1):
    cfg = BaselineConfig.for_seed(kind, dim, bits, seed)
    return cfg, store.baseline_books(cfg)


def test_tq_mse_high_rate_is_near_lossless(store, rng):
    cfg, book = _codec(store, BaselineKind.TQ_MSE, 64, 8)
    keys = rng.standard_normal((64, 64))
    cos, _ = per_key_errors(keys, baseline_decode(cfg, book, baseline_encode(cfg, book, keys)))
    assert cos.min() > 0.9999


@pytest.mark.parametrize("kind", [BaselineKind.TQ_MSE, BaselineKind.POLAR])
def test_score_equals_dot_with_decoded_key(store, rng, kind):
    cfg, books = _codec(store, kind, 64, 3)
    keys = rng.standard_normal((16, 64))
    queries = rng.standard_normal((3, 64))
    state = baseline_encode(cfg, books, keys)
    expected = queries @ baseline_decode(cfg, books, state).T
    assert np.allclose(baseline_score(cfg, books, queries, state), expected, rtol=1e-9, atol=1e-9)


def test_tq_qjl_first_stage_matches_tq_mse(store, rng):
    qjl_cfg, qjl_book = _codec(store, BaselineKind.TQ_QJL, 64, 3)
    mse_cfg, mse_book = _codec(store, BaselineKind.TQ_MSE, 64, 2)
    keys = rng.standard_normal((8, 64))
    sketched = baseline_encode(qjl_cfg, qjl_book, keys)
    plain = baseline_encode(mse_cfg, mse_book, keys)
    assert sketched.stage_one() == plain
    assert np.array_equal(baseline_decode(qjl_cfg, qjl_book, sketched), baseline_decode(mse_cfg, mse_book, plain))


def test_polar_angles_invert_exactly():
    u = sample_unit_sphere(32, SampleStream(12), 50)
    phi, inner = polar_angles(u)
    assert phi.shape == (50, 16)
    assert [psi.shape[1] for psi in inner] == [8, 4, 2, 1]
    assert np.all((phi >= -np.pi) & (phi < np.pi))
    assert all(np.all((psi >= 0.0) & (psi <= np.pi / 2.0)) for psi in inner)
    assert np.allclose(polar_reconstruct(phi, inner), u, atol=1e-12)


def test_polar_decode_keeps_norm(store, rng):
    cfg, books = _codec(store, BaselineKind.POLAR, 64, 2)
    keys = rng.standard_normal((10, 64))
    state = baseline_encode(cfg, books, keys)
    assert state.indices.shape == (10, 63)
    norms = np.linalg.norm(baseline_decode(cfg, books, state), axis=1)
    assert np.allclose(norms, np.linalg.norm(keys, axis=1), rtol=1e-6)


@pytest.mark.parametrize("kind,bits", [
    (BaselineKind.TQ_MSE, 2), (BaselineKind.TQ_QJL, 3), (BaselineKind.POLAR, 3),
])
def test_pack_round_trip(store, rng, kind, bits):
    cfg, books = _codec(store, kind, 64, bits)
    state = baseline_encode(cfg, books, rng.standard_normal((5, 64)))
    blob = pack_baseline(cfg, state)
    assert blob[:4] == b"OCTB"
    assert unpack_baseline(cfg, blob) == state
    with pytest.raises(FormatError):
        unpack_baseline(BaselineConfig.for_seed(kind, 64, bits + 1, 1), blob)
    with pytest.raises(FormatError):
        unpack_baseline(cfg, blob[:-1])


def test_bits_per_coord():
    assert baseline_bits_per_coord(BaselineConfig(BaselineKind.TQ_MSE, 128, 2)) == pytest.approx(2.25)
    assert baseline_bits_per_coord(BaselineConfig.for_seed(BaselineKind.TQ_QJL, 128, 3, 0)) == pytest.approx(3.375)
    assert baseline_bits_per_coord(BaselineConfig(BaselineKind.POLAR, 128, 3)) == pytest.approx(413 / 128)


def test_config_errors():
    with pytest.raises(ValueError):
        BaselineConfig.for_seed(BaselineKind.TQ_QJL, 128, 1, 0)
    with pytest.raises(ValueError):
        BaselineConfig(BaselineKind.TQ_MSE, 100, 2)
    assert BaselineConfig("polar", 64, 2).kind is BaselineKind.POLAR


def test_mismatched_books(store, rng):
    cfg, _ = _codec(store, BaselineKind.TQ_MSE, 64, 2)
    _, other = _codec(store, BaselineKind.TQ_MSE, 64, 3)
    with pytest.raises(ValueError):
        baseline_encode(cfg, other, rng.standard_normal((2, 64)))


@pytest.mark.parametrize("kind,encode", [
    (BaselineKind.TQ_MSE, tq_mse_encode), (BaselineKind.TQ_QJL, tq_qjl_encode), (BaselineKind.POLAR, polar_encode),
])
def test_direct_encoders_match_dispatch(store, rng, kind, encode):
    cfg, books = _codec(store, kind, 64, 3)
    keys = rng.standard_normal((6, 64))
    state = encode(cfg, books, keys)
    assert state == baseline_encode(cfg, books, keys)
    assert np.allclose(state.gamma, np.linalg.norm(keys, axis=1), rtol=1e-6)
    # 类型不符的配置直接拒绝
    other = BaselineKind.TQ_MSE if kind is not BaselineKind.TQ_MSE else BaselineKind.TQ_QJL
    with pytest.raises(ValueError):
        encode(BaselineConfig.for_seed(other, 64, 3, 1), books, keys)


def test_tq_qjl_scores_from_stage_one(store, rng):
    qjl_cfg, qjl_book = _codec(store, BaselineKind.TQ_QJL, 64, 3)
    mse_cfg, mse_book = _codec(store, BaselineKind.TQ_MSE, 64, 2)
    keys = rng.standard_normal((32, 64))
    queries = rng.standard_normal((4, 64))
    sketched = baseline_encode(qjl_cfg, qjl_book, keys)
    plain = baseline_score(mse_cfg, mse_book, queries, baseline_encode(mse_cfg, mse_book, keys))
    assert np.array_equal(baseline_score(qjl_cfg, qjl_book, queries, sketched), plain)
    # 修正后的估计只在显式要求时使用
    corrected = tq_qjl_score(qjl_cfg, qjl_book, queries, sketched, corrected=True)
    assert not np.allclose(corrected, plain)
    with pytest.raises(FormatError):
        tq_qjl_score(qjl_cfg, qjl_book, queries, sketched.stage_one(), corrected=True)
