from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from kernbandit.base_algorithms import AlgoConfig, GPUCB, candidate_bound
from kernbandit.errors import InvalidArgs, RewardOutOfRange
from kernbandit.metrics import Environment, KernelExpansion, run_episode
from kernbandit.kernels import KernelSpec
from kernbandit.model_selection import (
    RBBE,
    Corral,
    RbbeState,
    confidence_radius,
    corral_init,
    corral_learning_rate,
    corral_step,
    corral_update,
    log_barrier_step,
    play_ratio_bound,
    rbbe_eliminate,
    rbbe_select,
    reward_to_unit,
)

HALF = Fraction(1, 2)


def omd_oracle(p, loss, eta):
    """argmin_q <q, loss> + sum_i (1/eta_i)(q_i/p_i - log(q_i/p_i) - 1) on the simplex."""
    eta = np.broadcast_to(eta, p.shape)

    def obj(q):
        return q @ loss + np.sum((q / p - np.log(q / p) - 1.0) / eta)

    def grad(q):
        return loss + (1.0 / p - 1.0 / q) / eta

    res = minimize(obj, p, jac=grad, method="SLSQP", bounds=[(1e-12, 1.0)] * len(p),
                   constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1.0, "jac": lambda q: np.ones_like(q)}],
                   options={"ftol": 1e-15, "maxiter": 500})
    return res.x


class StubBase:
    """Plays a fixed action; counts resets."""

    def __init__(self, x=0.5):
        self.x = x
        self.resets = 0

    def reset(self):
        self.resets += 1

    def select_action(self):
        return self.x

    def observe(self, x, y):
        pass


class TestCorralInit:
    def test_uniform(self):
        st_ = corral_init(Fraction(3, 2), 100, 3)
        np.testing.assert_allclose(st_.p, [1 / 3] * 3)
        np.testing.assert_allclose(st_.rho, 6.0)
        assert st_.gamma == pytest.approx(0.01)

    def test_learning_rate(self):
        assert corral_learning_rate(Fraction(3, 2), 4096) == pytest.approx(4096**-0.625)
        np.testing.assert_allclose(corral_init(Fraction(3, 2), 4096, 2).eta, 4096**-0.625)

    def test_rejects(self):
        with pytest.raises(InvalidArgs):
            corral_init(HALF, 100, 1)
        with pytest.raises(InvalidArgs):
            corral_init(HALF, 2, 3)


class TestLogBarrier:
    @pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
    def test_matches_optimisation_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            M = int(rng.integers(2, 6))
            p = rng.dirichlet(np.ones(M))
            loss = np.zeros(M)
            i = int(rng.integers(M))
            loss[i] = rng.uniform(0, 1) / p[i]
            eta = rng.uniform(0.01, 0.5, M)
            np.testing.assert_allclose(log_barrier_step(p, loss, eta), omd_oracle(p, loss, eta), atol=1e-6)

    def test_equal_losses_keep_p(self):
        p = np.array([0.5, 0.5])
        for loss in (0.0, 0.3, 1.0):
            np.testing.assert_allclose(log_barrier_step(p, [loss, loss], 0.1), p, atol=1e-12)

    def test_zero_loss_is_fixed_point(self):
        st_ = corral_init(Fraction(3, 2), 1000, 2)
        for _ in range(50):
            corral_update(st_, 0, 0.0)
            corral_update(st_, 1, 0.0)
        np.testing.assert_allclose(st_.p, [0.5, 0.5], atol=1e-12)

    def test_chosen_loss_lowers_probability(self):
        st_ = corral_init(Fraction(3, 2), 1000, 2)
        corral_update(st_, 0, 1.0)
        assert st_.p[0] < 0.5 < st_.p[1]


class TestCorralInvariants:
    def test_random_steps(self):
        rng = np.random.default_rng(1)
        T, M = 10**4, 3
        st_ = corral_init(HALF, T, M)
        prev_rho = st_.rho.copy()
        for _ in range(T):
            i = int(rng.choice(M, p=st_.p))
            corral_update(st_, i, float(rng.uniform()))
            assert abs(st_.p.sum() - 1.0) <= 1e-9
            assert st_.p.min() >= st_.gamma / M - 1e-15
            assert np.all(st_.rho >= prev_rho)
            prev_rho = st_.rho.copy()
        assert np.all(st_.restarts <= math.log2(T * M) + 1)

    def test_restart_doubles_threshold(self):
        st_ = corral_init(HALF, 1000, 2, eta=5.0)
        eta0 = st_.eta.copy()
        restarted = []
        for _ in range(200):
            rho_before = st_.rho.copy()
            r = corral_update(st_, 0, 1.0)
            for i in r:
                assert st_.rho[i] >= 2 * rho_before[i] - 1e-9 or st_.rho[i] == pytest.approx(2 / st_.p[i])
                restarted.append(i)
        assert 0 in restarted
        assert st_.eta[0] > eta0[0]

    def test_unbiased_loss_estimates(self):
        rng = np.random.default_rng(2)
        p = np.array([0.2, 0.5, 0.3])
        losses = np.array([0.9, 0.1, 0.5])
        n = 10**5
        draws = rng.choice(3, size=n, p=p)
        for i in range(3):
            est = np.where(draws == i, losses[i] / p[i], 0.0)
            se = est.std(ddof=1) / math.sqrt(n)
            assert abs(est.mean() - losses[i]) <= 3 * se

    def test_reward_map(self):
        assert reward_to_unit(0.0, (-1, 1)) == 0.5
        with pytest.raises(RewardOutOfRange):
            reward_to_unit(3.5, (-1, 1))

    def test_corral_master_runs_and_resets(self):
        bases = [StubBase(0.2), StubBase(0.8)]
        env = Environment(lambda x: np.asarray(x, dtype=float), 1.0, 1.0, noise_sigma=0.1)
        algo = Corral(bases, 400, HALF, seed=3)
        tr = run_episode(algo, env, 400, seed=0)
        assert len(algo.choices) == 400
        assert set(np.unique(tr.actions)) <= {0.2, 0.8}
        assert algo.choices.count(1) > algo.choices.count(0)

    def test_corral_step_functional(self):
        st_ = corral_init(HALF, 100, 2)
        env = Environment(lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0, 0.0)
        i, x, y, st2 = corral_step(st_, [StubBase(0.1), StubBase(0.9)], env, np.random.default_rng(0))
        assert i in (0, 1) and x in (0.1, 0.9) and y == 0.0 and st2 is st_


class TestRbbeSelect:
    def test_initial_choice(self):
        # at n = 1 every t^beta factor is 1: the smallest B wins, ties go to the smallest index
        st_ = RbbeState([HALF, Fraction(3, 2), Fraction(5, 2)], [2.0, 1.0, 3.0], 0.05)
        assert rbbe_select(st_) == 1
        st_ = RbbeState([HALF, Fraction(3, 2), Fraction(5, 2)], [1.0, 1.0, 1.0], 0.05)
        assert rbbe_select(st_) == 0

    def test_singleton(self):
        st_ = RbbeState([HALF, Fraction(3, 2)], [1.0, 1.0], 0.05, active=[0])
        assert rbbe_select(st_) == 0

    def test_balancing_alternates(self):
        st_ = RbbeState([HALF, Fraction(3, 2)], [1.0, 1.0], 0.05)
        picks = []
        for t in range(1, 101):
            i = rbbe_select(st_, t)
            picks.append(i)
            st_.n[i] += 1
            st_.t = t
        assert picks[0] == 0
        assert 0 in picks and 1 in picks
        switches = sum(a != b for a, b in zip(picks, picks[1:]))
        assert switches >= 4
        # each pick is the argmin of the bound after one more play
        st2 = RbbeState([HALF, Fraction(3, 2)], [1.0, 1.0], 0.05)
        for i in picks:
            vals = [st2.bound(j, st2.n[j] + 1) for j in (0, 1)]
            assert i == int(np.argmin(vals))
            st2.n[i] += 1

    def test_sum_of_counts(self):
        algo = RBBE([StubBase(), StubBase()], [HALF, Fraction(3, 2)], [1.0, 1.0])
        env = Environment(lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0, 0.5)
        run_episode(algo, env, 57, seed=0)
        assert algo.state.n.sum() == 57


class TestRbbeEliminate:
    def test_trailing_base_dropped(self):
        st_ = RbbeState([HALF, HALF], [1.0, 1.0], 0.05, C=1e-6)
        st_.n[:] = 1000
        st_.cum_reward[:] = [1000.0, 0.0]
        rbbe_eliminate(st_, 2000)
        assert st_.active == [0]
        assert st_.eliminated_at == {1: 2000}

    def test_idempotent(self):
        st_ = RbbeState([HALF, HALF, HALF], [1.0, 1.0, 1.0], 0.05, C=1e-6)
        st_.n[:] = 1000
        st_.cum_reward[:] = [1000.0, 0.0, 990.0]
        rbbe_eliminate(st_, 3000)
        snapshot = list(st_.active)
        rbbe_eliminate(st_, 3000)
        assert st_.active == snapshot

    def test_unplayed_never_dropped(self):
        st_ = RbbeState([HALF, HALF, HALF], [1.0, 1.0, 1.0], 0.05, C=1e-6)
        st_.n[:] = [1000, 1000, 0]
        st_.cum_reward[:] = [1000.0, 0.0, 0.0]
        rbbe_eliminate(st_, 2000)
        assert 2 in st_.active

    def test_well_specified_never_eliminated(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            M = int(rng.integers(2, 5))
            nus = [Fraction(int(k), 1) + HALF for k in rng.integers(0, 3, M)]
            Bs = list(rng.uniform(1.0, 4.0, M))
            star = int(rng.integers(M))
            gaps = rng.uniform(0.2, 1.0, M)
            st_ = RbbeState(nus, Bs, 0.05)
            for t in range(1, 600):
                rbbe_eliminate(st_, t)
                assert star in st_.active
                i = rbbe_select(st_, t)
                n = st_.n[i] + 1
                if i == star:
                    # realized regret grows like half its own candidate bound
                    inc = 0.5 * (st_.bound(i, n) - (st_.bound(i, n - 1) if n > 1 else 0.0))
                    reward = 1.0 - min(inc, 1.0)
                else:
                    reward = 1.0 - gaps[i]
                st_.n[i] += 1
                st_.cum_reward[i] += reward

    def test_radius(self):
        assert confidence_radius(4, 10, 3, 0.05) == pytest.approx(
            math.sqrt(math.log(3 * math.log(math.e * 10) / 0.05) / 8))


class TestPlayRatio:
    def test_examples(self):
        assert play_ratio_bound(1.0, 1.0, 0.5, 0.5, 1) == 4.0
        assert play_ratio_bound(1.0, 3.0, 0.7, 0.7, 1) == play_ratio_bound(1.0, 3.0, 0.7, 0.7, 999)

    @given(st.floats(1, 10), st.floats(1, 10), st.floats(0.5, 0.99), st.floats(0.5, 0.99), st.integers(1, 10**6))
    def test_at_least_two(self, ti, tj, bi, bj, n):
        assert play_ratio_bound(ti, tj, bi, bj, n) >= 2.0

    def test_audit_along_runs(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            M = int(rng.integers(2, 5))
            nus = [Fraction(int(k), 1) + HALF for k in rng.integers(0, 4, M)]
            Bs = list(np.sort(rng.uniform(1.0, 9.0, M)))
            st_ = RbbeState(nus, Bs, 0.05)
            star = int(rng.integers(M))
            for t in range(1, 2001):
                i = rbbe_select(st_, t)
                st_.n[i] += 1
                if st_.n[star] == 0:
                    continue
                for j in range(M):
                    if j == star:
                        continue
                    bound = play_ratio_bound(st_.theta(j), st_.theta(star), st_.beta(j), st_.beta(star),
                                             st_.n[star])
                    assert st_.n[j] / st_.n[star] <= bound + 1e-12


class TestMastersEndToEnd:
    def test_rbbe_on_kernel_function(self):
        spec = KernelSpec(Fraction(3, 2), 0.2 * math.sqrt(3))
        env = Environment.from_function(KernelExpansion.random(spec, 1.0, 12, 1), noise_sigma=0.5)
        bases = [GPUCB(AlgoConfig(nu_input=nu, grid_size=64, lengthscale=0.2 * math.sqrt(2 * float(nu))), 300)
                 for nu in (HALF, Fraction(3, 2))]
        algo = RBBE(bases, [HALF, Fraction(3, 2)], [1.0, 1.0])
        tr = run_episode(algo, env, 300, seed=1)
        assert np.all(np.diff(tr.cum_regret) >= 0)
        assert algo.state.n.sum() == 300
        assert candidate_bound(HALF, 1.0, 1, 0.05) > 0
