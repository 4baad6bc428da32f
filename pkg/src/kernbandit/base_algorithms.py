"""Non-adaptive kernelised bandit algorithms on a uniform grid of [0, 1].

GP-UCB and a Sup-style SupKernelUCB, the doubling wrapper that makes a
fixed-horizon algorithm anytime, and the candidate regret bounds used by
the RBBE master.

Every algorithm follows the same small protocol::

    x = algo.select_action()
    algo.observe(x, y)
    algo.reset()

Actions are always grid points; ``observe`` must be called with the action
just returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import HorizonTooSmall, InvalidArgs
from .kernels import JITTER, KernelSpec, kernel_matrix
from .regression import DEFAULT_REGULARIZER, PosteriorState

MAX_GRID = 65536
DENSE_LIMIT = 1024


def default_grid_size(T: int) -> int:
    return int(min(4 * T, MAX_GRID))


def uniform_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True)
class AlgoConfig:
    """Inputs a base algorithm is instantiated with.

    ``grid_size`` of 0 means "use the default for the horizon",
    min(4 T, 65536).
    """

    nu_input: Fraction = Fraction(3, 2)
    B_input: float = 1.0
    grid_size: int = 0
    delta: float = 0.05
    ucb_scale: float = 0.5
    regularizer: float = DEFAULT_REGULARIZER
    lengthscale: float = None

    def __post_init__(self):
        object.__setattr__(self, "nu_input", Fraction(self.nu_input))
        if self.grid_size and self.grid_size < 2:
            raise InvalidArgs("grid_size must be >= 2")
        if not 0 < self.delta < 1:
            raise InvalidArgs("delta must lie in (0, 1)")
        if self.B_input <= 0 or self.ucb_scale <= 0:
            raise InvalidArgs("B_input and ucb_scale must be positive")

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.nu_input, self.lengthscale)

    def resolved(self, T: int) -> "AlgoConfig":
        if self.grid_size:
            return self
        return replace(self, grid_size=default_grid_size(T))


class GridPosterior:
    """GP posterior restricted to a fixed grid, updated by rank-1 conditioning.

    Small grids keep the full posterior covariance; larger ones keep the
    low-rank factor of the covariance reduction so memory grows with the
    number of observations instead of the grid size squared.
    """

    def __init__(self, kernel: KernelSpec, grid: np.ndarray, regularizer: float):
        self.kernel = kernel
        self.grid = grid
        self.noise = regularizer + JITTER
        n = len(grid)
        self.mean = np.zeros(n)
        self.var = np.ones(n)
        self.count = 0
        self.info_gain = 0.0
        self.dense = n <= DENSE_LIMIT
        if self.dense:
            self.cov = kernel_matrix(kernel, grid, grid)
        else:
            self._rows = np.zeros((16, n))

    def _cov_column(self, i: int) -> np.ndarray:
        if self.dense:
            return self.cov[:, i].copy()
        c = kernel_matrix(self.kernel, self.grid[i : i + 1], self.grid)[0]
        if self.count:
            V = self._rows[: self.count]
            c -= V[:, i] @ V
        return c

    def update(self, i: int, y: float) -> None:
        c = self._cov_column(i)
        denom = c[i] + self.noise
        self.info_gain += 0.5 * math.log1p(c[i] / self.noise)
        self.mean += c * ((y - self.mean[i]) / denom)
        self.var -= c * c / denom
        np.maximum(self.var, 0.0, out=self.var)
        if self.dense:
            self.cov -= np.outer(c, c / denom)
        else:
            if self.count == len(self._rows):
                self._rows = np.vstack([self._rows, np.zeros_like(self._rows)])
            self._rows[self.count] = c / math.sqrt(denom)
        self.count += 1

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def ucb_width(info_gain: float, cfg: AlgoConfig) -> float:
    """GP-UCB multiplier B + c sqrt(2 (gamma + 1 + ln(1/delta)))."""
    return cfg.B_input + cfg.ucb_scale * math.sqrt(2.0 * (info_gain + 1.0 + math.log(1.0 / cfg.delta)))


def gpucb_select(state: PosteriorState, cfg: AlgoConfig, t: int, grid=None) -> float:
    """GP-UCB action for a posterior on scattered points.

    Reference form of the selection rule; ``GPUCB`` applies the same rule on
    an incrementally maintained grid posterior.
    """
    if t < 1:
        raise InvalidArgs("t must be >= 1")
    if grid is None:
        grid = uniform_grid(cfg.grid_size or 2)
    mean, var = state.predict(np.asarray(grid, dtype=float))
    ucb = mean + ucb_width(state.info_gain(), cfg) * np.sqrt(var)
    return float(grid[int(np.argmax(ucb))])


class GPUCB:
    def __init__(self, cfg: AlgoConfig, T: int = None):
        if T is not None:
            cfg = cfg.resolved(T)
        elif not cfg.grid_size:
            raise InvalidArgs("GPUCB needs a grid_size or a horizon")
        self.cfg = cfg
        self.grid = uniform_grid(cfg.grid_size)
        self.reset()

    def reset(self) -> None:
        self.post = GridPosterior(self.cfg.kernel, self.grid, self.cfg.regularizer)
        self.t = 0
        self._pending = None

    def ucb(self) -> np.ndarray:
        return self.post.mean + ucb_width(self.post.info_gain, self.cfg) * self.post.std

    def select_action(self) -> float:
        # np.argmax returns the first maximiser, i.e. the smallest grid index.
        self._pending = int(np.argmax(self.ucb()))
        return float(self.grid[self._pending])

    def observe(self, x: float, y: float) -> None:
        i = self._pending
        if i is None or self.grid[i] != x:
            i = int(np.argmin(np.abs(self.grid - x)))
        self.post.update(i, y)
        self.t += 1
        self._pending = None


class SupKernelUCB:
    """Sup-style elimination over a uniform grid for a known horizon ``T``.

    Stage ``s`` keeps its own posterior built only from the rounds that
    stopped at stage ``s``. Within a round the candidate set shrinks stage by
    stage: arms are played while some width exceeds 2^-s, and once all
    widths are below 2^-s the arms whose UCB trails the best UCB by more than
    2 * 2^-s are dropped before descending. Internal constants follow the
    generic Sup template and are not tuned to any particular bound.
    """

    def __init__(self, cfg: AlgoConfig, T: int):
        if T < 2:
            raise HorizonTooSmall(f"SupKernelUCB needs T >= 2, got {T}")
        self.cfg = cfg.resolved(T)
        self.T = T
        self.grid = uniform_grid(self.cfg.grid_size)
        self.n_stages = math.ceil(math.log2(T))
        n = len(self.grid)
        self.beta = self.cfg.B_input + self.cfg.ucb_scale * math.sqrt(
            2.0 * math.log(2.0 * self.n_stages * n / self.cfg.delta)
        )
        self.exploit_width = 1.0 / math.sqrt(T)
        self.reset()

    def reset(self) -> None:
        self.stages = {}
        self.t = 0
        self._pending = None
        self.eliminations = []  # (round, stage, n_dropped) log for diagnostics
        self.last_active = None

    def _stage(self, s: int) -> GridPosterior:
        post = self.stages.get(s)
        if post is None:
            post = GridPosterior(self.cfg.kernel, self.grid, self.cfg.regularizer)
            self.stages[s] = post
        return post

    def select_action(self) -> float:
        active = np.arange(len(self.grid))
        s = 1
        while True:
            post = self._stage(s)
            width = self.beta * post.std[active]
            mean = post.mean[active]
            if s > self.n_stages or np.all(width <= self.exploit_width):
                i = int(active[np.argmax(mean + width)])
                self._pending = (i, None)
                break
            threshold = 2.0**-s
            wide = width > threshold
            if np.any(wide):
                i = int(active[np.argmax(np.where(wide, width, -np.inf))])
                self._pending = (i, s)
                break
            ucb = mean + width
            keep = ucb >= ucb.max() - 2.0 * threshold
            if not np.all(keep):
                self.eliminations.append((self.t + 1, s, int((~keep).sum())))
            active = active[keep]
            s += 1
        self.last_active = active
        return float(self.grid[self._pending[0]])

    def observe(self, x: float, y: float) -> None:
        i, s = self._pending
        if s is not None:
            self.stages[s].update(i, y)
        self.t += 1
        self._pending = None


def doubling_epochs(T: int) -> list:
    """Epoch lengths 1, 2, 4, ... with the last one truncated to fit T."""
    if T < 1:
        raise InvalidArgs("T must be >= 1")
    epochs, length, used = [], 1, 0
    while used < T:
        size = min(length, T - used)
        epochs.append(size)
        used += size
        length *= 2
    return epochs


class DoublingWrapper:
    """Anytime wrapper: fresh base instances on epochs of length 2^k.

    ``factory(horizon)`` must return a new algorithm tuned for ``horizon``
    steps. Each epoch instance is built for the full (untruncated) 2^k
    length, so stopping early never changes earlier choices.
    """

    def __init__(self, factory, T: int = None):
        self.factory = factory
        self.T = T
        self.reset()

    def reset(self) -> None:
        self.epoch = -1
        self.remaining = 0
        self.t = 0
        self.base = None

    def _next_epoch(self) -> None:
        self.epoch += 1
        length = 2**self.epoch
        self.remaining = length
        self.base = self.factory(max(length, 2))

    def select_action(self) -> float:
        if self.remaining == 0:
            self._next_epoch()
        return self.base.select_action()

    def observe(self, x: float, y: float) -> None:
        self.base.observe(x, y)
        self.remaining -= 1
        self.t += 1


def minimax_exponent(nu) -> Fraction:
    nu = Fraction(nu)
    return (nu + 1) / (2 * nu + 1)


def candidate_bound(nu_i, B_i: float, t: float, delta: float, M: int = 1, C: float = 1.0) -> float:
    """Presumed cumulative pseudo-regret of a well-specified base after t plays.

    C sqrt(B) t^beta ln(e t) sqrt(ln(M ln(e t) / delta)), beta = (nu+1)/(2nu+1).
    """
    if t < 1:
        raise InvalidArgs("candidate_bound needs t >= 1")
    beta = float(minimax_exponent(nu_i))
    log_et = math.log(math.e * t)
    return C * math.sqrt(B_i) * t**beta * log_et * math.sqrt(math.log(M * log_et / delta))


def make_base(kind: str, cfg: AlgoConfig, T: int):
    """Build a base algorithm by name. ``supkernelucb`` is doubling-wrapped."""
    kind = kind.lower()
    if kind == "gpucb":
        return GPUCB(cfg, T)
    if kind == "supkernelucb":
        return DoublingWrapper(lambda horizon: SupKernelUCB(cfg if cfg.grid_size else cfg.resolved(T), horizon), T)
    if kind == "supkernelucb_fixed":
        return SupKernelUCB(cfg, T)
    raise InvalidArgs(f"unknown base algorithm {kind!r}")
