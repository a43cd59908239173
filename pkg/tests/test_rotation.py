import numpy as np
import pytest
from scipy.linalg import hadamard

from src.core.rotation import RotationSpec, fwht, make_rotation, rotate, rotate_inverse


def test_make_rotation_is_deterministic():
    a = make_rotation(2, 0)
    b = make_rotation(2, 0)
    assert np.array_equal(a.signs, b.signs)
    assert set(np.unique(a.signs)) <= {-1.0, 1.0}


def test_make_rotation_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        make_rotation(3, 0)


def test_signs_are_balanced():
    spec = make_rotation(128, 7)
    assert -0.35 <= spec.signs.mean() <= 0.35


def test_different_seeds_give_different_signs():
    assert not np.array_equal(make_rotation(64, 1).signs, make_rotation(64, 2).signs)


def test_fwht_matches_sylvester_hadamard(rng):
    for d in (2, 4, 16, 64):
        x = rng.standard_normal((5, d))
        assert np.allclose(fwht(x), x @ hadamard(d).T, atol=1e-12)


def test_rotate_hadamard_row():
    spec = RotationSpec(2, 0, np.array([1.0, 1.0]))
    out = rotate(spec, np.array([1.0, 0.0]))
    assert np.allclose(out, [0.70710678, 0.70710678], atol=1e-8)
    back = rotate(spec, np.array([0.70710678118654752, 0.70710678118654752]))
    assert np.allclose(back, [1.0, 0.0], atol=1e-12)


def test_rotate_preserves_norm(rng):
    spec = make_rotation(8, 3)
    v = rng.standard_normal(8)
    assert np.linalg.norm(rotate(spec, v)) == pytest.approx(np.linalg.norm(v), abs=1e-12)


def test_rotate_inverse_round_trip(rng):
    e0 = np.zeros(4)
    e0[0] = 1.0
    spec = make_rotation(4, 5)
    assert np.allclose(rotate_inverse(spec, rotate(spec, e0)), e0, atol=1e-6)

    spec = make_rotation(128, 9)
    v = rng.standard_normal((1000, 128)).astype(np.float32)
    assert np.max(np.abs(rotate_inverse(spec, rotate(spec, v)) - v)) < 1e-5


def test_inner_products_are_invariant(rng):
    spec = make_rotation(64, 21)
    q, k = rng.standard_normal((2, 64))
    assert rotate(spec, q) @ rotate(spec, k) == pytest.approx(q @ k, abs=1e-5)
    assert rotate_inverse(spec, rotate(spec, q)) @ k == pytest.approx(q @ k, abs=1e-5)


def test_batched_rotation_matches_rows(rng):
    spec = make_rotation(32, 4)
    m = rng.standard_normal((7, 32))
    rows = np.stack([rotate(spec, r) for r in m])
    assert np.allclose(rotate(spec, m), rows)


def test_length_mismatch_raises():
    spec = make_rotation(8, 0)
    with pytest.raises(ValueError):
        rotate(spec, np.ones(4))
    with pytest.raises(ValueError):
        rotate_inverse(spec, np.ones(16))


def test_rotation_spec_validates_signs():
    with pytest.raises(ValueError):
        RotationSpec(4, 0, np.array([1.0, 0.5, -1.0, 1.0]))
