from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from salab.core import (
    STREAM_DIAG,
    STREAM_MAIN,
    STREAM_PILOT,
    BallFamily,
    BoxFamily,
    SaceFamily,
    SeparationFamily,
    StepSchedule,
    gamma_at,
    make_rng,
    shift,
)

getcontext().prec = 40


def _decimal_gamma(g0, beta, k):
    return float(Decimal(str(g0)) / (Decimal(k) ** Decimal(str(beta))))


schedules = st.builds(
    StepSchedule,
    gamma0=st.floats(1e-3, 1e3),
    beta=st.floats(0.5, 1.0, exclude_min=True),
    offset=st.integers(0, 10_000),
)


class TestGammaAt:
    def test_first_step_is_gamma0(self):
        assert gamma_at(StepSchedule(0.5, 0.7), 0) == 0.5

    def test_against_decimal_power(self):
        # independent 40-digit evaluation of 0.5 * 4^-0.7
        assert gamma_at(StepSchedule(0.5, 0.7), 3) == pytest.approx(_decimal_gamma(0.5, 0.7, 4), rel=1e-14)
        assert gamma_at(StepSchedule(0.5, 0.7), 3) == pytest.approx(0.18946, abs=5e-6)

    def test_offset_denominator(self):
        assert gamma_at(StepSchedule(1.0, 1.0, offset=2), 0) == pytest.approx(1 / 3)

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            gamma_at(StepSchedule(1.0, 0.6), -1)

    @pytest.mark.parametrize("beta", [0.5, 0.4, 1.01, 0.0])
    def test_beta_range(self, beta):
        with pytest.raises(ValueError):
            StepSchedule(1.0, beta)

    @pytest.mark.parametrize("g0", [0.0, -1.0, float("inf"), float("nan")])
    def test_gamma0_positive(self, g0):
        with pytest.raises(ValueError):
            StepSchedule(g0, 0.6)

    @given(schedules, st.integers(0, 10**6))
    def test_positive_and_non_increasing(self, s, n):
        assert 0 < gamma_at(s, n + 1) <= gamma_at(s, n)

    def test_partial_sums_grow(self):
        s = StepSchedule(1.0, 1.0)
        partial = np.cumsum([gamma_at(s, n) for n in range(100_000)])
        # harmonic growth: every decade adds about log(10)
        assert partial[99_999] - partial[9_999] > 2.2
        assert partial[9_999] - partial[999] > 2.2
        assert gamma_at(s, 10**9) < 1e-8


class TestShift:
    def test_zero_shift_is_identity(self):
        s = StepSchedule(0.3, 0.8, offset=4)
        assert shift(s, 0) == s

    def test_shifted_index(self):
        s = StepSchedule(0.3, 0.8)
        assert gamma_at(shift(s, 2), 1) == gamma_at(s, 3)

    def test_composition(self):
        s = StepSchedule(0.3, 0.8)
        assert shift(shift(s, 1), 2) == shift(s, 3)

    def test_negative_shift_rejected(self):
        with pytest.raises(ValueError):
            shift(StepSchedule(1.0, 0.6), -1)

    @given(schedules, st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
    def test_composition_law_exact(self, s, a, b, n):
        assert gamma_at(shift(shift(s, a), b), n) == gamma_at(s, a + b + n)

    @given(schedules, st.integers(0, 1000))
    def test_shift_keeps_gamma0_beta(self, s, q):
        t = shift(s, q)
        assert (t.gamma0, t.beta, t.offset) == (s.gamma0, s.beta, s.offset + q)


def _families():
    return [
        (BoxFamily(2.0, 2.0), 3),
        (BallFamily(1.5, 3.0), 4),
        (SeparationFamily(3, 2, 1.0, 4.0), 6),
        (SaceFamily(4.0, 3.0, 2.0), 6),
    ]


@pytest.mark.parametrize("family,dim", _families(), ids=["box", "ball", "separation", "sace"])
def test_family_nesting(family, dim, seed):
    rng = make_rng(seed)
    for _ in range(1000):
        i = int(rng.integers(0, 6))
        scale = float(rng.choice([0.2, 1.0, 5.0, 40.0]))
        theta = scale * rng.standard_normal(dim)
        if isinstance(family, SaceFamily):
            theta[1:] = -np.abs(theta[1:])
        if family.contains(i, theta):
            assert family.contains(i + 1, theta)


def test_box_family_radii():
    fam = BoxFamily(2.0, 2.0)
    assert fam.contains(0, np.array([2.0, -2.0]))
    assert not fam.contains(0, np.array([2.01]))
    assert fam.contains(1, np.array([4.0]))


def test_separation_family():
    fam = SeparationFamily(2, 1, 1.0, 2.0)
    assert fam.contains(0, np.array([0.0, 0.5]))
    assert not fam.contains(0, np.array([0.0, 0.4]))
    assert fam.contains(1, np.array([0.0, 0.4]))
    assert not fam.contains(5, np.array([0.0, 1.5]))


def test_sace_family_bounds():
    fam = SaceFamily(2.0, 4.0)
    assert fam.contains(0, np.array([1.0, -1.0, -0.3]))
    assert not fam.contains(0, np.array([1.0, -0.2]))
    assert not fam.contains(0, np.array([3.0, -1.0]))
    assert fam.contains(1, np.array([3.0, -0.2]))


def test_streams_are_distinct_and_reproducible():
    a = make_rng(7, STREAM_MAIN).random(4)
    assert np.array_equal(a, make_rng(7, STREAM_MAIN).random(4))
    assert not np.array_equal(a, make_rng(7, STREAM_PILOT).random(4))
    assert not np.array_equal(make_rng(7, STREAM_PILOT).random(4), make_rng(7, STREAM_DIAG).random(4))
