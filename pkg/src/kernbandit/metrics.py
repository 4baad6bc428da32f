"""Environments, episode runner, regret accounting and rate calculators."""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateFit, InvalidArgs
from .kernels import KernelSpec, gram_matrix, kernel_matrix

CERT_GRID = 2**16 + 1


def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else str(float(v))


def fmt17(v) -> str:
    """Float text with 17 significant digits (round-trips exactly)."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


class KernelExpansion:
    """f(x) = sum_i alpha_i k(x, c_i), scaled so that alpha^T K alpha = B^2.

    The RKHS norm is then exactly B.
    """

    def __init__(self, spec: KernelSpec, centers, alpha, B: float = None):
        self.spec = spec
        self.centers = np.asarray(centers, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        K = gram_matrix(spec, self.centers)
        if B is not None:
            alpha = alpha * (B / math.sqrt(alpha @ K @ alpha))
        self.alpha = alpha
        self.rkhs_norm = math.sqrt(alpha @ K @ alpha)

    @classmethod
    def random(cls, spec: KernelSpec, B: float, n_centers: int, seed: int) -> "KernelExpansion":
        rng = np.random.default_rng(seed)
        centers = np.sort(rng.uniform(0.0, 1.0, n_centers))
        alpha = rng.standard_normal(n_centers)
        return cls(spec, centers, alpha, B)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = kernel_matrix(self.spec, x.reshape(-1), self.centers) @ self.alpha
        return out.reshape(x.shape) if x.ndim else float(out[0])


def locate_max(fn, grid_size: int = CERT_GRID):
    """Maximiser and maximum of ``fn`` on [0, 1]: fine grid, then refine."""
    xs = np.linspace(0.0, 1.0, grid_size)
    ys = np.asarray(fn(xs), dtype=float)
    i = int(np.argmax(ys))
    best_x, best_y = float(xs[i]), float(ys[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid_size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -float(fn(np.array([x]))[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > best_y:
            best_x, best_y = float(res.x), float(-res.fun)
    return best_x, best_y


@dataclass
class Environment:
    reward_fn: object
    f_star: float
    x_star: float
    noise_sigma: float = 0.5
    noise_kind: str = "gaussian"
    env_id: str = "env"
    metadata: dict = field(default_factory=dict)
    bin_of: object = None  # optional: array of x -> bin index

    @classmethod
    def from_function(cls, fn, **kwargs) -> "Environment":
        x_star, f_star = locate_max(fn)
        return cls(reward_fn=fn, f_star=f_star, x_star=x_star, **kwargs)

    def mean_reward(self, x) -> float:
        return float(np.asarray(self.reward_fn(np.array([x])))[0])


def env_key(env_id: str, seed: int, stream: int = 0):
    return [zlib.crc32(env_id.encode()) | (stream << 32), int(seed) & 0xFFFFFFFFFFFFFFFF]


def noise_generator(env_id: str, seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator: the t-th draw depends only on (id, seed, t)."""
    return np.random.Generator(np.random.Philox(key=env_key(env_id, seed, stream)))


def draw_noise(rng: np.random.Generator, kind: str, sigma: float, size: int) -> np.ndarray:
    if sigma == 0:
        return np.zeros(size)
    if kind == "gaussian":
        return sigma * rng.standard_normal(size)
    if kind == "uniform":
        a = sigma * math.sqrt(3.0)
        return rng.uniform(-a, a, size)
    if kind == "rademacher":
        return sigma * (2.0 * rng.integers(0, 2, size) - 1.0)
    raise InvalidArgs(f"unknown noise kind {kind!r}")


@dataclass
class RegretTrace:
    actions: np.ndarray
    rewards: np.ndarray
    cum_regret: np.ndarray
    bins: np.ndarray
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.actions)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.T else 0.0

    @property
    def bin_counts(self) -> dict:
        if self.T == 0 or np.all(self.bins < 0):
            return {}
        keys, counts = np.unique(self.bins, return_counts=True)
        return {int(k): int(c) for k, c in zip(keys, counts)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "regret_cum", "bin"])
            for t in range(self.T):
                w.writerow([t + 1, fmt17(self.actions[t]), fmt17(self.rewards[t]),
                            fmt17(self.cum_regret[t]), int(self.bins[t])])


def run_episode(algo, env: Environment, T: int, seed: int, on_step=None) -> RegretTrace:
    """Play ``algo`` for T rounds; y_t = f(x_t) + noise drawn from (env_id, seed, t)."""
    if T < 1:
        raise InvalidArgs("T must be >= 1")
    noise = draw_noise(noise_generator(env.env_id, seed), env.noise_kind, env.noise_sigma, T)
    actions = np.empty(T)
    means = np.empty(T)
    rewards = np.empty(T)
    for t in range(T):
        x = algo.select_action()
        m = env.mean_reward(x)
        y = m + noise[t]
        algo.observe(x, y)
        actions[t], means[t], rewards[t] = x, m, y
        if on_step is not None:
            on_step(t, x, y)
    inst = np.maximum(env.f_star - means, 0.0)
    bins = env.bin_of(actions) if env.bin_of is not None else np.full(T, -1)
    return RegretTrace(actions, rewards, np.cumsum(inst), np.asarray(bins, dtype=int), seed)


def estimate_exponent(horizons, regrets):
    """OLS slope of log(regret) on log(T) and its standard error."""
    T = np.asarray(horizons, dtype=float)
    R = np.asarray(regrets, dtype=float)
    if len(T) != len(R) or len(T) < 4:
        raise InvalidArgs("need at least four (horizon, regret) pairs")
    if np.any(R <= 0):
        raise DegenerateFit("regrets must be positive for a log-log fit")
    x, y = np.log(T), np.log(R)
    xc = x - x.mean()
    sxx = xc @ xc
    slope = (xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = len(x) - 2
    stderr = math.sqrt((resid @ resid) / dof / sxx)
    return float(slope), float(stderr)


def _half_integer(nu) -> Fraction:
    nu = Fraction(nu)
    if nu <= 0 or (nu + Fraction(1, 2)).denominator != 1:
        raise InvalidArgs(f"expected a positive half-integer, got {nu}")
    return nu


def theory_exponents(kind: str, *args) -> Fraction:
    """Exponent of T in the regret rates, as exact fractions.

    kind: ``minimax`` (nu), ``lower`` (nu1, nu2), ``corral`` (nu_tilde,
    nu_star), ``rbbe`` (nu_star).
    """
    nus = [_half_integer(a) for a in args]
    if kind == "minimax" and len(nus) == 1:
        (nu,) = nus
        return (nu + 1) / (2 * nu + 1)
    if kind == "lower" and len(nus) == 2:
        n1, n2 = nus
        if n1 > n2:
            raise InvalidArgs("lower bound needs nu1 <= nu2")
        return (n1 * n2 + 2 * n2 + 1) / ((n1 + 1) * (2 * n2 + 1))
    if kind == "corral" and len(nus) == 2:
        nt, ns = nus
        return max((1 + nt) / (1 + 2 * nt), (1 + 2 * nt + nt * ns) / ((1 + 2 * nt) * (1 + ns)))
    if kind == "rbbe" and len(nus) == 1:
        (ns,) = nus
        return (1 + 4 * ns + 2 * ns**2) / (1 + 2 * ns) ** 2
    raise InvalidArgs(f"bad exponent request {kind}{tuple(args)}")


@dataclass
class TradeoffReport:
    T: int
    seeds: list
    Delta: float
    M: int
    R_tilde_measured: float
    mean_regret: np.ndarray  # index s = 1..M at position s - 1
    mean_visits_phi0: np.ndarray  # mean N_{H_s}(T) under phi_0, s = 1..M
    accounting_violations: int
    traces_checked: int
    threshold: float
    slack: float

    @property
    def mean_over_s(self) -> float:
        return float(self.mean_regret.mean())

    @property
    def accounting_holds(self) -> bool:
        return self.accounting_violations == 0

    @property
    def bound_holds(self) -> bool:
        return self.mean_over_s >= self.threshold - self.slack * abs(self.threshold)


def accounting_gap(trace: RegretTrace, s: int, Delta: float) -> float:
    """R_T - (Delta/2)(T - N_{H_s}(T)); non-negative on a certified instance."""
    visits = int(np.sum(trace.bins == s))
    return trace.final_regret - 0.5 * Delta * (trace.T - visits)


def adversary_environment(instance, s: int, noise_sigma: float = 0.5, noise_kind: str = "gaussian") -> Environment:
    p = instance.params
    f_star = p.Delta if s else p.Delta / 2
    return Environment(instance.reward_fn(s), f_star, instance.midpoint(s), noise_sigma, noise_kind,
                       env_id=f"adversary-m{p.m1}{p.m2}-M{p.M}-s{s}", bin_of=instance.bin_of)


def tradeoff_experiment(instance, algo_factory, T: int, seeds, slack: float = 0.1,
                        noise_sigma: float = 0.5) -> TradeoffReport:
    """Run ``algo_factory()`` on phi_0 and on every phi_s of a certified instance.

    Checks R_{T,s} >= (Delta/2)(T - N_{H_s}(T)) on every trace of phi_s and
    compares the mean over s of the regret with
    (Delta T / 2)(1/2 - sqrt(Delta R_measured / M)).
    """
    from .errors import UncertifiedInstance

    if not instance.certified:
        raise UncertifiedInstance("trade-off experiment needs a certified instance")
    seeds = list(seeds)
    M, Delta = instance.M, instance.Delta
    visits = np.zeros(M)
    base_regret = []
    for seed in seeds:
        tr = run_episode(algo_factory(), adversary_environment(instance, 0, noise_sigma), T, seed)
        base_regret.append(tr.final_regret)
        visits += np.bincount(tr.bins, minlength=M + 1)[1:]
    R_meas = float(np.mean(base_regret))
    mean_regret = np.zeros(M)
    violations = checked = 0
    for s in range(1, M + 1):
        env = adversary_environment(instance, s, noise_sigma)
        total = 0.0
        for seed in seeds:
            tr = run_episode(algo_factory(), env, T, seed)
            total += tr.final_regret
            checked += 1
            if accounting_gap(tr, s, Delta) < -1e-9 * T:
                violations += 1
        mean_regret[s - 1] = total / len(seeds)
    threshold = 0.5 * Delta * T * (0.5 - math.sqrt(Delta * R_meas / M))
    return TradeoffReport(T, seeds, Delta, M, R_meas, mean_regret, visits / len(seeds), violations, checked,
                          threshold, slack)
