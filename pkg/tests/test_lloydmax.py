import numpy as np
import pytest

from src.core.codebook_store import train_xi_codebook, train_xi_codebook_from_density
from src.core.lloydmax import (
    TrainingOptions,
    cell_conditional_means,
    density_distortion,
    dequantize,
    quantize_index,
    sample_distortion,
    train_from_density,
    train_from_samples,
)
from src.core.marginals import DensitySpec
from src.models.codebook_model import Codebook, CodebookKind


def test_uniform_codebooks():
    cb = train_from_density(DensitySpec.uniform(), 1)
    assert np.allclose(cb.centroids, [-0.5, 0.5], atol=1e-9)
    cb = train_from_density(DensitySpec.uniform(), 2)
    assert np.allclose(cb.centroids, [-0.75, -0.25, 0.25, 0.75], atol=1e-9)


def test_gaussian_one_bit_codebook():
    cb = train_from_density(DensitySpec.unit_gaussian(), 1)
    assert np.allclose(cb.centroids, [-np.sqrt(2.0 / np.pi), np.sqrt(2.0 / np.pi)], atol=1e-6)


def test_trained_codebook_invariants():
    density = DensitySpec.triplet_norm(128)
    cb = train_from_density(density, 3)
    assert cb.kind is CodebookKind.TRIPLET_NORM
    assert np.all(np.diff(cb.centroids) > 0.0)
    assert cb.centroids[0] >= 0.0 and cb.centroids[-1] <= 1.0
    assert np.allclose(cb.boundaries, (cb.centroids[:-1] + cb.centroids[1:]) / 2.0)
    assert np.allclose(cell_conditional_means(cb, density), cb.centroids, atol=1e-5)
    for i in range(cb.size):
        assert quantize_index(cb, dequantize(cb, i)) == i


def test_distortion_never_increases_with_iterations():
    density = DensitySpec.rotated_coordinate(64)
    values = [
        density_distortion(train_from_density(density, 3, TrainingOptions(max_iter=n)), density)
        for n in (1, 3, 10, 10000)
    ]
    assert all(b <= a * (1.0 + 1e-9) for a, b in zip(values, values[1:]))


def test_sample_training_examples():
    cb = train_from_samples(np.array([-1.0, -1.0, 1.0, 1.0]), 1)
    assert np.allclose(cb.centroids, [-1.0, 1.0])
    with pytest.raises(ValueError):
        train_from_samples(np.full(100, 0.3), 1)
    with pytest.raises(ValueError):
        train_from_samples(np.array([]), 1)


def test_sample_trainer_matches_density_trainer():
    from_samples = train_xi_codebook(3)
    from_density = train_xi_codebook_from_density(3)
    assert from_samples.distortion == pytest.approx(from_density.distortion, rel=0.02)


def test_sample_distortion_of_trained_book(rng):
    x = rng.standard_normal(50_000)
    cb = train_from_samples(x, 2)
    assert sample_distortion(cb, x) == pytest.approx(cb.distortion, rel=1e-6)


def test_quantize_tie_rule_and_clamping():
    cb = Codebook(CodebookKind.CUSTOM, 1, np.array([-0.5, 0.5]))
    assert quantize_index(cb, -0.2) == 0
    assert quantize_index(cb, 0.0) == 1
    assert quantize_index(cb, -5.0) == 0
    assert quantize_index(cb, 5.0) == 1
    assert list(quantize_index(cb, np.array([-0.7, 0.0, 0.9]))) == [0, 1, 1]


def test_dequantize_range_check():
    cb = Codebook(CodebookKind.CUSTOM, 1, np.array([-0.5, 0.5]))
    assert dequantize(cb, 1) == 0.5
    with pytest.raises(ValueError):
        dequantize(cb, 2)
    with pytest.raises(ValueError):
        dequantize(cb, -1)


def test_bits_out_of_range():
    with pytest.raises(ValueError):
        train_from_density(DensitySpec.uniform(), 0)
    with pytest.raises(ValueError):
        train_from_density(DensitySpec.uniform(), 9)
