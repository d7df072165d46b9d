import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlwave._smooth import cutoff, ramp, smooth_step
from qlwave.errors import DomainError
from qlwave.regions import DyadicAnnulus, SpacetimeRegion, japanese, shells_covering


def test_step_endpoints():
    s = smooth_step(np.array([-1.0, 0.0, 1.0, 2.0]))[0]
    assert np.array_equal(s, [0.0, 0.0, 1.0, 1.0])


def test_step_symmetry():
    x = np.linspace(0.01, 0.99, 50)
    s = smooth_step(x)[0]
    np.testing.assert_allclose(s + smooth_step(1 - x)[0], 1.0, atol=1e-14)


def test_step_derivatives_match_differences():
    x = np.linspace(0.05, 0.95, 40)
    h = 1e-5
    vals = smooth_step(x, 3)
    for k in range(3):
        fd = (smooth_step(x + h, 3)[k] - smooth_step(x - h, 3)[k]) / (2 * h)
        np.testing.assert_allclose(vals[k + 1], fd, rtol=1e-5, atol=1e-6)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_step_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert smooth_step(lo)[0] <= smooth_step(hi)[0]


def test_ramp_and_cutoff_are_complementary():
    r = np.linspace(0, 10, 101)
    np.testing.assert_allclose(ramp(r, 3, 6)[0] + cutoff(r, 3, 6)[0], 1.0)
    d_ramp = ramp(r, 3, 6, 1)[1]
    assert d_ramp.min() >= 0 and d_ramp[r < 3].max() == 0


def test_japanese_bracket():
    assert japanese(0.0) == 1.0
    np.testing.assert_allclose(japanese(3.0), np.sqrt(10.0))


def test_annulus_bounds_and_membership():
    A = DyadicAnnulus(4)
    lo, hi = A.bounds
    assert A.contains(0.5 * (lo + hi))
    assert not A.contains(hi + 1e-9)
    assert A.contains(lo + 1e-9)
    assert DyadicAnnulus(1).contains(0.0)


def test_annulus_rejects_non_dyadic():
    with pytest.raises(DomainError):
        DyadicAnnulus(3)
    with pytest.raises(DomainError):
        DyadicAnnulus(0.5)


@given(st.floats(0.0, 1e4))
def test_shells_cover_and_partition(rmax):
    shells = shells_covering(rmax)
    r = np.linspace(0, rmax, 200)
    count = sum(A.contains(r).astype(int) for A in shells)
    assert np.all(count == 1)


def test_region_masks():
    reg = SpacetimeRegion.cone_block(16.0)
    t = np.array([16.0, 20.0, 40.0])
    r = np.array([10.0, 25.0, 30.0])
    assert reg.mask(t, r).tolist() == [True, False, False]
    ps = SpacetimeRegion.photonsphere(1.0, 0, 10)
    assert ps.mask(5.0, 3.0) and not ps.mask(5.0, 4.0)
    cu = SpacetimeRegion.cone_dyadic(16.0, 4.0)
    assert cu.mask(20.0, 10.0, 14.0) and not cu.mask(20.0, 10.0, 19.0)
    with pytest.raises(DomainError):
        cu.mask(20.0, 10.0)


def test_region_validation_and_descriptor():
    with pytest.raises(DomainError):
        SpacetimeRegion("nonsense")
    with pytest.raises(DomainError):
        SpacetimeRegion.time_slab(5.0, 1.0)
    d = SpacetimeRegion.time_slab(0.0, 8.0, r_lo=2.5).descriptor()
    assert d.startswith("time_slab(") and "t1=8" in d and "r_lo=2.5" in d
