import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from salab.bridge import BridgeNetwork, phi, phi_batch
from salab.core import StepSchedule, make_rng
from salab.oracles import empirical_quantile
from salab.sace import (
    BetaProductFamily,
    DegenerateDraw,
    NonNegativeSufficientStat,
    SaceField,
    SaceKernel,
    SaceState,
    gibbs_kernel,
    importance_weight,
    nu_hat,
    pilot_init,
    sace_step,
    sample_beta_product,
    tail_increment,
)
from salab.stabilizer import check_bookkeeping, run_stable_sa

NET = BridgeNetwork()


class FixedUniform:
    """Stand-in generator returning a constant uniform."""

    def __init__(self, value):
        self.value = value

    def random(self, shape=None):
        return np.full(shape, self.value) if shape is not None else self.value


class TestNuHat:
    def test_uniform_case(self):
        assert nu_hat([-1.0, -1.0, -1.0]).tolist() == [1.0, 1.0, 1.0]

    def test_reciprocal(self):
        assert nu_hat([-2.0, -4.0]) == pytest.approx([0.5, 0.25])

    @pytest.mark.parametrize("s", [[0.0, -1.0], [-1.0, 0.5], [np.nan, -1.0]])
    def test_nonnegative(self, s):
        with pytest.raises(NonNegativeSufficientStat):
            nu_hat(s)

    @given(st.lists(st.floats(-1e6, -1e-6), min_size=1, max_size=8))
    def test_positive_and_maximises_likelihood(self, s):
        s = np.array(s)
        nu = nu_hat(s)
        assert np.all(nu > 0)
        # stationary point of B(nu) + <nu, s> = sum log nu + nu s
        assert 1.0 / nu + s == pytest.approx(np.zeros_like(s), abs=1e-9 * np.abs(s).max())


class TestWeights:
    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
    def test_uniform_instrumental(self, z):
        assert importance_weight(z, np.ones(len(z))) == pytest.approx(1.0)

    def test_density_arithmetic(self):
        assert importance_weight([0.5], [2.0]) == pytest.approx(1.0)
        assert importance_weight([0.25], [2.0]) == pytest.approx(2.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateDraw):
            importance_weight([0.0, 0.5], [0.5, 1.0])

    def test_matches_log_density(self):
        fam = BetaProductFamily(3)
        z, nu = np.array([0.3, 0.8, 0.6]), np.array([2.0, 0.7, 5.0])
        assert importance_weight(z, nu) == pytest.approx(math.exp(-fam.log_density(z, nu)))
        assert fam.log_partition(nu) == pytest.approx(np.log(nu).sum())
        assert fam.suff_stat(z) == pytest.approx(np.log(z))


class TestBetaSampler:
    def test_uniform_marginals(self, seed):
        rng = make_rng(seed)
        samples = np.array([sample_beta_product(np.ones(2), rng) for _ in range(100_000)])
        for ell in range(2):
            assert stats.kstest(samples[:, ell], "uniform").pvalue > 0.01

    def test_beta_mean(self, seed):
        rng = make_rng(seed)
        x = np.array([sample_beta_product(np.array([2.0]), rng)[0] for _ in range(100_000)])
        se = math.sqrt(2 / 36 / len(x))  # Beta(2,1) variance 1/18
        assert abs(x.mean() - 2 / 3) < 3 * se

    def test_inverse_cdf(self):
        assert sample_beta_product(np.array([2.0]), FixedUniform(0.25)).tolist() == [0.5]

    def test_cdf_ks(self, seed):
        rng = make_rng(seed)
        x = np.array([sample_beta_product(np.array([3.5]), rng)[0] for _ in range(50_000)])
        assert stats.kstest(x, lambda v: np.clip(v, 0, 1) ** 3.5).pvalue > 0.01


def _state(theta=1.2):
    y = np.array([0.9, 0.8, 0.5, 0.9, 0.8])
    assert phi(NET, y) >= theta
    return SaceState(theta, np.array([-0.2, -0.6, -0.9, -0.2, -0.6]), y, y.copy())


class TestSaceStep:
    def test_zero_step(self):
        s = _state()
        out = sace_step(s, 0.9, gibbs_kernel(NET), NET, 0.0, make_rng(1))
        assert out.theta == s.theta and np.array_equal(out.sigma, s.sigma)
        assert not np.array_equal(out.y, s.y) and out.n == 1

    def test_unit_step_sets_sigma(self):
        out = sace_step(_state(), 0.9, gibbs_kernel(NET), NET, 1.0, make_rng(2))
        assert out.sigma == pytest.approx(np.log(out.y))

    def test_indicator_vanishes_above_threshold(self, seed):
        # low theta: every draw clears it, so the plain-indicator form adds exactly step * q
        s = _state(theta=0.05)
        rng = make_rng(seed)
        for _ in range(20):
            out = sace_step(s, 0.99, gibbs_kernel(NET), NET, 0.1, rng, estimator="below")
            if phi(NET, out.z) >= s.theta:
                assert out.theta == s.theta + 0.1 * 0.99

    def test_complementary_form(self, seed):
        s = _state(theta=1.0)
        rng = make_rng(seed)
        out = sace_step(s, 0.99, gibbs_kernel(NET), NET, 0.1, rng, estimator="above")
        nu = nu_hat(s.sigma)
        w = importance_weight(out.z, nu) if phi(NET, out.z) >= s.theta else 0.0
        assert out.theta == pytest.approx(s.theta + 0.1 * (0.99 - 1 + w))

    def test_new_y_in_support(self, seed):
        # the kernel targets the threshold held before the update
        s = _state(theta=1.4)
        rng = make_rng(seed)
        prev = s.theta
        for _ in range(50):
            nxt = sace_step(s, 0.99, gibbs_kernel(NET), NET, 0.01, rng)
            assert phi(NET, nxt.y) >= prev
            s, prev = nxt, nxt.theta

    def test_z_uses_previous_nu(self, seed):
        s = _state()
        a, b = make_rng(seed), make_rng(seed)
        out = sace_step(s, 0.9, gibbs_kernel(NET), NET, 0.5, a)
        # replay: the Gibbs sweep takes 5 uniforms, then z is drawn with nu_hat(sigma_n)
        b.random(5)
        z = sample_beta_product(nu_hat(s.sigma), b)
        assert out.z == pytest.approx(z)
        assert not np.allclose(nu_hat(out.sigma), nu_hat(s.sigma))


def test_tail_estimator_unbiased(seed):
    rng = make_rng(seed)
    theta, nu = 1.6, np.array([6.0, 1.5, 1.0, 6.0, 1.5])
    z = rng.random((1_000_000, 5)) ** (1.0 / nu)
    w = 1.0 / np.prod(nu * z ** (nu - 1), axis=1)
    est = np.where(phi_batch(NET, z) >= theta, w, 0.0)
    u = make_rng(seed + 50).random((1_000_000, 5))
    hit = (phi_batch(NET, u) >= theta).astype(float)
    diff = est.mean() - hit.mean()
    se = math.sqrt(est.var() / len(est) + hit.var() / len(hit))
    assert abs(diff) < 3 * se


def test_increment_forms_agree_in_mean(seed):
    rng = make_rng(seed)
    theta, nu = 1.5, np.array([3.0, 1.2, 1.0, 3.0, 1.2])
    above, below = [], []
    for _ in range(200_000):
        z = sample_beta_product(nu, rng)
        above.append(tail_increment(NET, 0.95, theta, z, nu, 1e12, "above")[0])
        below.append(tail_increment(NET, 0.95, theta, z, nu, 1e12, "below")[0])
    above, below = np.array(above), np.array(below)
    se = math.sqrt(above.var() / len(above) + below.var() / len(below))
    assert abs(above.mean() - below.mean()) < 4 * se
    # the complementary form has the smaller spread when nu is tilted towards the tail
    assert above.var() < below.var()


def test_weight_cap_counts_clips():
    f = SaceField(NET, 0.9, weight_cap=1.5)
    vartheta = np.array([0.0, -0.1, -0.1, -0.1, -0.1, -0.1])
    y = np.full(5, 0.5)
    z = np.full(5, 0.2)  # nu = 10: weight = 1 / prod(10 * 0.2^9), astronomically large
    h = f(vartheta, (y, z))
    assert f.clip_events == 1
    assert h[0] == pytest.approx(0.9 - 1 + 1.5)


def test_pilot_init(seed):
    init = pilot_init(NET, 0.99, make_rng(seed))
    scores = phi_batch(NET, make_rng(seed).random((1000, 5)))
    assert init.theta0 == empirical_quantile(scores, 0.99)
    assert np.all(init.sigma0 < 0)
    assert phi(NET, init.y0) >= init.theta0
    assert init.family.contains(0, np.concatenate(([init.theta0], init.sigma0)))


def _sace_trace(seed, budget, q=0.99, thin=1):
    init = pilot_init(NET, q, make_rng(seed + 1))
    fld = SaceField(NET, q)
    anchor = ((init.y0, init.y0.copy()), np.concatenate(([init.theta0], init.sigma0)))
    tr = run_stable_sa(init.family, SaceKernel(NET), fld, StepSchedule(1.0, 0.6), anchor, budget, make_rng(seed), thin=thin)
    return tr, init


def test_sigma_stays_negative(seed):
    tr, init = _sace_trace(seed, 100_000)
    assert np.all(tr.theta[:, 1:] < 0)
    check_bookkeeping(tr.n, tr.I, tr.zeta, tr.restart, tr.theta, init.family.contains)


def test_sigma_stays_negative_long_run():
    tr, _ = _sace_trace(11, 1_000_000)
    assert len(tr) == 1_000_000
    assert tr.theta[:, 1:].max() < 0
