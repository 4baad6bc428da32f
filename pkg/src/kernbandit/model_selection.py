"""Model-selection masters over a nested family of base algorithms.

``Corral`` is the smoothed CORRAL master: log-barrier online mirror descent
on the simplex over bases, importance-weighted losses, uniform mixing and
threshold-triggered restarts. ``RBBE`` is regret bound balancing and
elimination: play the base with the smallest presumed regret, drop bases
whose rewards contradict their own regret bound.

Both expose the base-algorithm protocol (``select_action`` / ``observe`` /
``reset``) so they can be run by ``metrics.run_episode``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .base_algorithms import candidate_bound, minimax_exponent
from .errors import InvalidArgs, NormalizerNotFound, RewardOutOfRange

BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200


def corral_learning_rate(nu_tilde, T: int) -> float:
    """eta = T^{-(1+nu)/(1+2nu)} for the user-chosen regularity nu_tilde."""
    return float(T) ** (-float(minimax_exponent(nu_tilde)))


def log_barrier_step(p, loss_est, eta, tol=BISECT_TOL, max_iter=BISECT_MAX_ITER):
    """One log-barrier OMD step on the simplex.

    Finds the normaliser lam with sum_j 1 / (1/p_j + eta_j (l_j - lam)) = 1
    by bisection and returns the new probability vector.
    """
    p = np.asarray(p, dtype=float)
    loss_est = np.asarray(loss_est, dtype=float)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), p.shape)
    inv_p = 1.0 / p

    def total(lam):
        denom = inv_p + eta * (loss_est - lam)
        if np.any(denom <= 0):
            return math.inf
        return float(np.sum(1.0 / denom))

    lo = float(loss_est.min())
    hi = float(loss_est.max())
    # past this point some denominator turns non-positive
    hi = min(hi, float(np.min(loss_est + inv_p / eta)))
    if total(lo) > 1.0 + tol:
        raise NormalizerNotFound("normaliser bracket lost at the lower end")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = total(mid)
        if abs(s - 1.0) <= tol:
            lo = hi = mid
            break
        if s > 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * max(1.0, abs(hi)):
            break
    lam = 0.5 * (lo + hi)
    s = total(lam)
    if not abs(s - 1.0) <= max(tol, 1e-9):
        raise NormalizerNotFound(f"bisection stopped with sum {s!r}")
    new = 1.0 / (inv_p + eta * (loss_est - lam))
    return new / new.sum()


@dataclass
class CorralState:
    p: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    gamma: float
    T: int
    restarts: np.ndarray = None

    def __post_init__(self):
        if self.restarts is None:
            self.restarts = np.zeros(len(self.p), dtype=int)

    @property
    def M(self) -> int:
        return len(self.p)


def corral_init(nu_tilde, T: int, M: int, eta: float = None, gamma: float = None) -> CorralState:
    if M < 2:
        raise InvalidArgs("CORRAL needs at least two bases")
    if T < M:
        raise InvalidArgs("CORRAL needs T >= M")
    eta0 = corral_learning_rate(nu_tilde, T) if eta is None else float(eta)
    return CorralState(
        p=np.full(M, 1.0 / M),
        eta=np.full(M, eta0),
        rho=np.full(M, 2.0 * M),
        gamma=1.0 / T if gamma is None else float(gamma),
        T=T,
    )


def reward_to_unit(r: float, reward_range) -> float:
    v, u = reward_range
    r_bar = (r - v) / (u - v)
    if not -0.5 <= r_bar <= 1.5:
        raise RewardOutOfRange(f"reward {r} maps to {r_bar} with range [{v}, {u}]")
    return r_bar


def corral_update(state: CorralState, chosen: int, loss: float) -> list:
    """Apply one round's feedback in place; returns the bases to restart."""
    loss_est = np.zeros(state.M)
    loss_est[chosen] = loss / state.p[chosen]
    p = log_barrier_step(state.p, loss_est, state.eta)
    p = (1.0 - state.gamma) * p + state.gamma / state.M
    state.p = p
    restart = []
    inflate = math.exp(1.0 / math.log(state.T)) if state.T > 1 else math.e
    for i in range(state.M):
        if 1.0 / p[i] > state.rho[i]:
            state.rho[i] = 2.0 / p[i]
            state.eta[i] *= inflate
            state.restarts[i] += 1
            restart.append(i)
    return restart


class Corral:
    def __init__(self, bases, T: int, nu_tilde, seed: int = 0, reward_range=(-1.0, 1.0),
                 eta: float = None, gamma: float = None):
        self.bases = list(bases)
        self.T = T
        self.nu_tilde = Fraction(nu_tilde)
        self.seed = seed
        self.reward_range = tuple(reward_range)
        self._eta, self._gamma = eta, gamma
        self.reset()

    def reset(self) -> None:
        self.state = corral_init(self.nu_tilde, self.T, len(self.bases), self._eta, self._gamma)
        self.rng = np.random.default_rng([self.seed, 0xC0881])
        for b in self.bases:
            b.reset()
        self.choices = []
        self._chosen = None

    def select_action(self) -> float:
        i = int(self.rng.choice(self.state.M, p=self.state.p))
        self._chosen = i
        return self.bases[i].select_action()

    def observe(self, x: float, y: float) -> None:
        i = self._chosen
        self.bases[i].observe(x, y)
        loss = 1.0 - reward_to_unit(y, self.reward_range)
        for j in corral_update(self.state, i, loss):
            self.bases[j].reset()
        self.choices.append(i)
        self._chosen = None


def corral_step(state: CorralState, bases, env, rng, t: int = None, noise: float = 0.0,
                reward_range=(-1.0, 1.0)):
    """Functional single round: returns (chosen base, action, reward, state)."""
    i = int(rng.choice(state.M, p=state.p))
    x = bases[i].select_action()
    y = env.mean_reward(x) + noise
    bases[i].observe(x, y)
    loss = 1.0 - reward_to_unit(y, reward_range)
    for j in corral_update(state, i, loss):
        bases[j].reset()
    return i, x, y, state


def confidence_radius(n: int, t: int, M: int, delta: float) -> float:
    """sqrt(ln(M ln(e t) / delta) / (2 n)), the 1/4-subgaussian radius."""
    return math.sqrt(math.log(M * math.log(math.e * t) / delta) / (2.0 * n))


def play_ratio_bound(theta_i, theta_j, beta_i, beta_j, n_j) -> float:
    """Upper bound on n_i / n_j under regret bound balancing."""
    if n_j < 1:
        raise InvalidArgs("n_j must be >= 1")
    return max((2.0 * theta_j / theta_i) ** (1.0 / beta_i) * n_j ** (beta_j / beta_i - 1.0), 2.0)


@dataclass
class RbbeState:
    nus: list
    Bs: list
    delta: float
    C: float = 1.0
    active: list = None
    n: np.ndarray = None
    cum_reward: np.ndarray = None
    t: int = 0
    eliminated_at: dict = field(default_factory=dict)

    def __post_init__(self):
        M = len(self.nus)
        if self.active is None:
            self.active = list(range(M))
        if self.n is None:
            self.n = np.zeros(M, dtype=int)
        if self.cum_reward is None:
            self.cum_reward = np.zeros(M)

    @property
    def M(self) -> int:
        return len(self.nus)

    def bound(self, i: int, n: float) -> float:
        return candidate_bound(self.nus[i], self.Bs[i], n, self.delta, self.M, self.C)

    def theta(self, i: int) -> float:
        return self.C * math.sqrt(self.Bs[i])

    def beta(self, i: int) -> float:
        return float(minimax_exponent(self.nus[i]))


def rbbe_select(state: RbbeState, t: int = None) -> int:
    """Active base with the smallest presumed regret after one more play."""
    if not state.active:
        raise InvalidArgs("no active base")
    best, best_val = None, math.inf
    for i in state.active:
        val = state.bound(i, state.n[i] + 1)
        if val < best_val:
            best, best_val = i, val
    return best


def rbbe_eliminate(state: RbbeState, t: int) -> RbbeState:
    """Drop active bases whose optimistic value falls below another's pessimistic one."""
    t = max(int(t), 1)
    played = [i for i in state.active if state.n[i] > 0]
    if len(played) < 2:
        return state
    mean = {i: state.cum_reward[i] / state.n[i] for i in played}
    rad = {i: confidence_radius(state.n[i], t, state.M, state.delta) for i in played}
    lower = max(mean[j] - rad[j] for j in played)
    drop = [
        i for i in played
        if mean[i] + state.bound(i, state.n[i]) / state.n[i] + rad[i] < lower
    ]
    if len(drop) == len(state.active):
        return state
    for i in drop:
        state.active.remove(i)
        state.eliminated_at[i] = t
    return state


class RBBE:
    def __init__(self, bases, nus, Bs, delta: float = 0.05, C: float = 1.0):
        if not (len(bases) == len(nus) == len(Bs)):
            raise InvalidArgs("bases, nus and Bs must align")
        self.bases = list(bases)
        self.nus = [Fraction(v) for v in nus]
        self.Bs = [float(b) for b in Bs]
        self.delta = delta
        self.C = C
        self.reset()

    def reset(self) -> None:
        self.state = RbbeState(list(self.nus), list(self.Bs), self.delta, self.C)
        for b in self.bases:
            b.reset()
        self.choices = []
        self._chosen = None

    def select_action(self) -> float:
        st = self.state
        st.t += 1
        rbbe_eliminate(st, st.t)
        i = rbbe_select(st, st.t)
        self._chosen = i
        return self.bases[i].select_action()

    def observe(self, x: float, y: float) -> None:
        i = self._chosen
        self.bases[i].observe(x, y)
        self.state.n[i] += 1
        self.state.cum_reward[i] += y
        self.choices.append(i)
        self._chosen = None
