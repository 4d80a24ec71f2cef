import numpy as np
import pytest

from fcpqr import (SmoothingSpec, default_bandwidth, smooth_indicator,
                   smooth_indicator_deriv)


def test_half_at_zero():
    for h in (0.01, 0.3, 5.0):
        assert smooth_indicator(SmoothingSpec(h=h), 0.0) == pytest.approx(0.5)


def test_symmetry_sums_to_one():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(500) * 3
    h = rng.uniform(0.01, 2.0, 500)
    for wi, hi in zip(w, h):
        spec = SmoothingSpec(h=hi)
        total = smooth_indicator(spec, wi) + smooth_indicator(spec, -wi)
        assert total == pytest.approx(1.0, abs=1e-12)


def test_saturates_toward_indicator():
    assert smooth_indicator(SmoothingSpec(h=0.01), 1.0) >= 1.0 - 1e-15
    for h in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        spec = SmoothingSpec(h=h)
        assert smooth_indicator(spec, 0.3) >= smooth_indicator(SmoothingSpec(h=1.0), 0.3)
    # indicator limit at fixed w != 0
    for w in (-0.7, -0.05, 0.05, 0.7):
        vals = [smooth_indicator(SmoothingSpec(h=h), w)
                for h in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
        assert abs(vals[-1] - (1.0 if w >= 0 else 0.0)) < 1e-12


def test_monotone_in_w():
    spec = SmoothingSpec(h=0.2)
    w = np.linspace(-5, 5, 1001)
    vals = smooth_indicator(spec, w)
    assert np.all(np.diff(vals) >= 0)


def test_deriv_at_zero():
    assert smooth_indicator_deriv(SmoothingSpec(h=1.0), 0.0) == pytest.approx(
        1.0 / np.sqrt(2 * np.pi))


def test_deriv_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(200):
        h = rng.uniform(0.05, 2.0)
        w = rng.uniform(-3, 3)
        spec = SmoothingSpec(h=h)
        eps = 1e-6 * max(1.0, abs(w))
        fd = (smooth_indicator(spec, w + eps) - smooth_indicator(spec, w - eps)) / (2 * eps)
        assert smooth_indicator_deriv(spec, w) == pytest.approx(fd, abs=1e-6, rel=1e-4)


def test_deriv_nonnegative():
    spec = SmoothingSpec(h=0.3)
    assert np.all(smooth_indicator_deriv(spec, np.linspace(-50, 50, 2001)) >= 0)


def test_default_bandwidth_value():
    h = default_bandwidth(400, 1.0, 1.0)
    assert h == pytest.approx(400.0 ** (-0.4))
    assert h == pytest.approx(0.09103, abs=1e-5)


def test_default_bandwidth_homogeneity_and_monotone():
    assert default_bandwidth(400, 2.0) == pytest.approx(2 * default_bandwidth(400, 1.0))
    assert default_bandwidth(10_000, 1.0) < default_bandwidth(100, 1.0)


def test_default_bandwidth_validation():
    with pytest.raises(ValueError):
        default_bandwidth(1, 1.0)
    with pytest.raises(ValueError):
        default_bandwidth(100, 0.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        SmoothingSpec(h=0.0)
