from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernbandit.base_algorithms import (
    GPUCB,
    AlgoConfig,
    DoublingWrapper,
    SupKernelUCB,
    candidate_bound,
    default_grid_size,
    doubling_epochs,
    gpucb_select,
    make_base,
    minimax_exponent,
    ucb_width,
    uniform_grid,
)
from kernbandit.errors import HorizonTooSmall, InvalidArgs
from kernbandit.metrics import Environment, run_episode
from kernbandit.regression import empty_state, fit


def constant_env(value=0.3, sigma=0.0):
    return Environment(lambda x: np.full(np.shape(x), value), value, 0.0, noise_sigma=sigma)


def indicator_env(grid, best, high=1.0, low=0.5):
    def f(x):
        return np.where(np.isclose(np.asarray(x, dtype=float), grid[best]), high, low)

    return Environment(f, high, float(grid[best]), noise_sigma=0.0)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(InvalidArgs):
            AlgoConfig(grid_size=1)
        with pytest.raises(InvalidArgs):
            AlgoConfig(delta=1.0)

    def test_default_grid(self):
        assert default_grid_size(100) == 400
        assert default_grid_size(10**6) == 65536
        assert AlgoConfig().resolved(50).grid_size == 200


class TestGPUCBSelect:
    def test_first_round_takes_smallest_index(self):
        cfg = AlgoConfig(grid_size=11)
        assert gpucb_select(empty_state(cfg.kernel), cfg, 1) == 0.0
        assert GPUCB(cfg).select_action() == 0.0

    def test_rejects_t_zero(self):
        cfg = AlgoConfig(grid_size=11)
        with pytest.raises(InvalidArgs):
            gpucb_select(empty_state(cfg.kernel), cfg, 0)

    def test_argmax_consistency(self):
        cfg = AlgoConfig(grid_size=51)
        grid = uniform_grid(51)
        rng = np.random.default_rng(0)
        state = fit(cfg.kernel, rng.uniform(0, 1, 5), [3.0, -1.0, 0.5, 0.2, 1.0])
        x = gpucb_select(state, cfg, 6)
        mean, var = state.predict(grid)
        ucb = mean + ucb_width(state.info_gain(), cfg) * np.sqrt(var)
        mx, vx = state.predict(x)
        assert mx + ucb_width(state.info_gain(), cfg) * np.sqrt(vx) >= ucb.max() - 1e-12

    def test_grid_form_matches_reference(self):
        cfg = AlgoConfig(grid_size=64, lengthscale=0.3)
        algo = GPUCB(cfg)
        env = Environment(lambda x: np.sin(5 * np.asarray(x)), 1.0, 0.314, noise_sigma=0.5)
        rng = np.random.default_rng(1)
        xs, ys = [], []
        for t in range(1, 31):
            state = fit(cfg.kernel, xs, ys) if xs else empty_state(cfg.kernel)
            ref = gpucb_select(state, cfg, t, algo.grid)
            x = algo.select_action()
            assert x == ref
            y = env.mean_reward(x) + 0.5 * rng.standard_normal()
            algo.observe(x, y)
            xs.append(x)
            ys.append(y)

    def test_noiseless_quadratic_converges(self):
        # noiseless data: regularizer near zero, as the noise level suggests
        cfg = AlgoConfig(grid_size=11, regularizer=1e-4)
        env = Environment.from_function(lambda x: -(np.asarray(x) - 0.6) ** 2, noise_sigma=0.0)
        tr = run_episode(GPUCB(cfg), env, 200, seed=0)
        cell = 1.0 / (cfg.grid_size - 1)
        assert np.all(np.abs(tr.actions[-20:] - 0.6) <= cell + 1e-12)

    def test_actions_inside_domain(self):
        cfg = AlgoConfig(grid_size=33)
        env = Environment(lambda x: np.cos(9 * np.asarray(x)), 1.0, 0.0)
        tr = run_episode(GPUCB(cfg), env, 50, seed=2)
        assert np.all((tr.actions >= 0) & (tr.actions <= 1))


class TestSupKernelUCB:
    def test_horizon_too_small(self):
        with pytest.raises(HorizonTooSmall):
            SupKernelUCB(AlgoConfig(grid_size=8), 1)

    def test_constant_reward_no_regret_no_elimination(self):
        algo = SupKernelUCB(AlgoConfig(grid_size=8, lengthscale=0.05), 512)
        tr = run_episode(algo, constant_env(), 512, seed=0)
        assert tr.final_regret == 0.0
        assert algo.eliminations == []

    def test_two_level_elimination_stage(self):
        # gap 0.5: the first stage that can separate the arms is the first with 2^-s < 0.25
        grid = uniform_grid(4)
        algo = SupKernelUCB(AlgoConfig(grid_size=4, lengthscale=1e-3), 4096)
        run_episode(algo, indicator_env(grid, 1), 4096, seed=0)
        assert algo.eliminations, "no arm was ever eliminated"
        first_stage = algo.eliminations[0][1]
        assert first_stage == 3
        assert all(s >= 3 for _, s, _ in algo.eliminations)
        assert list(algo.last_active) == [1]

    def test_never_drops_best_arm_noiseless(self):
        rng = np.random.default_rng(7)
        n = 8
        grid = uniform_grid(n)
        for trial in range(100):
            levels = rng.uniform(0, 1, n)
            best = int(np.argmax(levels))
            env = Environment(lambda x, lv=levels: lv[np.rint(np.asarray(x) * (n - 1)).astype(int)],
                              float(levels[best]), float(grid[best]), noise_sigma=0.0)
            algo = SupKernelUCB(AlgoConfig(grid_size=n, lengthscale=1e-3), 256)
            for _ in range(256):
                x = algo.select_action()
                assert best in algo.last_active, f"trial {trial}"
                algo.observe(x, env.mean_reward(x))


class TestDoubling:
    def test_epochs(self):
        assert doubling_epochs(1) == [1]
        assert doubling_epochs(10) == [1, 2, 4, 3]

    @given(st.integers(1, 100000))
    def test_epochs_partition(self, T):
        ep = doubling_epochs(T)
        assert sum(ep) == T
        assert all(e == 2**k for k, e in enumerate(ep[:-1]))
        assert 1 <= ep[-1] <= 2 ** (len(ep) - 1)

    def test_epoch_instances(self):
        made = []

        def factory(h):
            made.append(h)
            return GPUCB(AlgoConfig(grid_size=8))

        w = DoublingWrapper(factory, 10)
        run_episode(w, constant_env(), 10, seed=0)
        assert made == [2, 2, 4, 8]

    def test_wrapped_within_factor_of_fixed_horizon(self):
        cfg = AlgoConfig(grid_size=64, lengthscale=0.2)
        env = Environment.from_function(lambda x: np.sin(7 * np.asarray(x)) * 0.8, noise_sigma=0.5)
        T = 512
        wrapped = [run_episode(make_base("supkernelucb", cfg, T), env, T, s).final_regret for s in range(20)]
        fixed = [run_episode(make_base("supkernelucb_fixed", cfg, T), env, T, s).final_regret for s in range(20)]
        assert np.mean(wrapped) <= 4 * np.mean(fixed)


class TestCandidateBound:
    def test_exponents(self):
        assert minimax_exponent(Fraction(1, 2)) == Fraction(3, 4)
        assert minimax_exponent(Fraction(3, 2)) == Fraction(5, 8)

    def test_monotone(self):
        ts = np.unique(np.logspace(0, 6, 400).astype(int))
        vals = [candidate_bound(Fraction(3, 2), 2.0, t, 0.05, M=3) for t in ts]
        assert np.all(np.diff(vals) >= 0)

    def test_rejects_small_t(self):
        with pytest.raises(InvalidArgs):
            candidate_bound(Fraction(1, 2), 1.0, 0.5, 0.05)


def test_make_base_unknown():
    with pytest.raises(InvalidArgs):
        make_base("thompson", AlgoConfig(grid_size=8), 10)
