"""Turn an ExperimentConfig into environments, algorithms and CSV output.

Every (environment, algorithm, horizon, replicate) cell is independent. Cells
may run in a process pool; the collector writes all files itself in sorted
cell order, so output bytes do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .base_algorithms import AlgoConfig, make_base
from .config import AlgoSpec, EnvSpec, ExperimentConfig, parse_config, serialize_config
from .errors import ConfigError, KernBanditError
from .kernels import KernelSpec
from .metrics import Environment, KernelExpansion, estimate_exponent, fmt17, run_episode
from .model_selection import RBBE, Corral

SUMMARY_COLUMNS = ("env_id", "algo_id", "T", "seed", "final_regret", "slope", "stderr")


class _Params:
    """Typed reads from a string-valued parameter dict, with field diagnostics."""

    def __init__(self, section: str, params: dict):
        self.section = section
        self.params = dict(params)
        self.used = set()

    def _get(self, key, default, convert):
        self.used.add(key)
        if key not in self.params:
            return default
        raw = self.params[key]
        try:
            return convert(raw)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"[{self.section}] cannot read {raw!r}", field=key) from None

    def float(self, key, default=None):
        return self._get(key, default, float)

    def int(self, key, default=None):
        return self._get(key, default, int)

    def frac(self, key, default=None):
        return self._get(key, default, Fraction)

    def str(self, key, default=None):
        return self._get(key, default, str)

    def fracs(self, key, default=None):
        return self._get(key, default, lambda s: [Fraction(v.strip()) for v in s.split(",") if v.strip()])

    def floats(self, key, default=None):
        return self._get(key, default, lambda s: [float(v.strip()) for v in s.split(",") if v.strip()])

    def require(self, key):
        if key not in self.params:
            raise ConfigError(f"[{self.section}] missing required key", field=key)

    def check_unused(self):
        extra = sorted(set(self.params) - self.used)
        if extra:
            raise ConfigError(f"[{self.section}] unknown key(s) {extra}", field=extra[0])


def _kernel(p: _Params, nu) -> KernelSpec:
    ls = p.float("lengthscale")
    factor = p.float("lengthscale_factor")
    if ls is not None and factor is not None:
        raise ConfigError(f"[{p.section}] give lengthscale or lengthscale_factor, not both", field="lengthscale")
    if factor is not None:
        ls = factor * math.sqrt(2 * float(nu))
    try:
        return KernelSpec(nu, ls)
    except (ValueError, KernBanditError) as exc:
        raise ConfigError(f"[{p.section}] {exc}", field="nu") from None


@lru_cache(maxsize=32)
def _adversary(m1, m2, L1, L2, R_tilde):
    from .adversary import build_certified

    return build_certified(m1, m2, L1, L2, R_tilde)


def build_environment(spec: EnvSpec) -> Environment:
    p = _Params(f"env.{spec.name}", spec.params)
    sigma = p.float("noise_sigma", 0.5)
    kind = p.str("noise_kind", "gaussian")
    if kind not in ("gaussian", "uniform", "rademacher"):
        raise ConfigError(f"[env.{spec.name}] unknown noise kind {kind!r}", field="noise_kind")
    if spec.kind == "expansion":
        nu = p.frac("nu", Fraction(3, 2))
        kernel = _kernel(p, nu)
        fn = KernelExpansion.random(kernel, p.float("B", 1.0), p.int("n_centers", 12), p.int("function_seed", 1))
        p.check_unused()
        return Environment.from_function(fn, noise_sigma=sigma, noise_kind=kind, env_id=spec.name,
                                         metadata={"rkhs_norm": fn.rkhs_norm})
    if spec.kind == "adversary":
        from .adversary import read_instance_file
        from .metrics import adversary_environment

        path = p.str("file")
        if path is not None:
            header, _, _ = read_instance_file(path)
            args = (int(header["m1"]), int(header["m2"]), float(header["L1"]), float(header["L2"]),
                    float(header["R_tilde"]))
        else:
            for key in ("m1", "m2", "L1", "L2", "R_tilde"):
                p.require(key)
            L1 = p.str("L1")
            args = (p.int("m1"), p.int("m2"), L1 if L1 == "auto" else p.float("L1"), p.float("L2"),
                    p.float("R_tilde"))
        s = p.int("s", 0)
        p.check_unused()
        inst = _adversary(*args)
        if not 0 <= s <= inst.M:
            raise ConfigError(f"[env.{spec.name}] hypothesis index must lie in 0..{inst.M}", field="s")
        env = adversary_environment(inst, s, sigma, kind)
        env.env_id = spec.name
        return env
    raise ConfigError(f"unknown environment kind {spec.kind!r}", field="kind")


def _algo_config(p: _Params, nu, B) -> AlgoConfig:
    kernel = _kernel(p, nu)
    try:
        return AlgoConfig(
            nu_input=nu, B_input=B, grid_size=p.int("grid_size", 0), delta=p.float("delta", 0.05),
            ucb_scale=p.float("ucb_scale", 0.5), regularizer=p.float("regularizer", 0.25),
            lengthscale=kernel.lengthscale,
        )
    except KernBanditError as exc:
        raise ConfigError(f"[{p.section}] {exc}") from None


def build_algorithm(spec: AlgoSpec, T: int, seed: int):
    p = _Params(f"algo.{spec.name}", spec.params)
    if spec.kind in ("gpucb", "supkernelucb", "supkernelucb_fixed"):
        cfg = _algo_config(p, p.frac("nu", Fraction(3, 2)), p.float("B", 1.0))
        p.check_unused()
        return make_base(spec.kind, cfg, T)
    base = p.str("base", "gpucb")
    if base not in ("gpucb", "supkernelucb"):
        raise ConfigError(f"[algo.{spec.name}] unknown base {base!r}", field="base")
    nus = p.fracs("candidates", [Fraction(1, 2), Fraction(3, 2), Fraction(5, 2)])
    Bs = p.floats("Bs", None) or [p.float("B", 1.0)] * len(nus)
    if len(Bs) != len(nus):
        raise ConfigError(f"[algo.{spec.name}] Bs and candidates differ in length", field="Bs")
    if len(nus) < 2:
        raise ConfigError(f"[algo.{spec.name}] need at least two candidates", field="candidates")
    cfgs = [_algo_config(p, nu, B) for nu, B in zip(nus, Bs)]
    bases = [make_base(base, c, T) for c in cfgs]
    if spec.kind == "corral":
        lo_hi = p.floats("reward_range", [-2.0, 2.0])
        if len(lo_hi) != 2 or lo_hi[0] >= lo_hi[1]:
            raise ConfigError(f"[algo.{spec.name}] reward_range must be 'low, high'", field="reward_range")
        algo = Corral(bases, T, p.frac("nu_tilde", max(nus)), seed=seed, reward_range=tuple(lo_hi),
                      eta=p.float("eta"), gamma=p.float("gamma"))
    else:
        algo = RBBE(bases, nus, Bs, delta=p.float("delta", 0.05), C=p.float("C", 1.0))
    p.check_unused()
    return algo


def validate(cfg: ExperimentConfig) -> None:
    """Build every environment and algorithm once so bad configs fail before any run."""
    for env in cfg.environments:
        build_environment(env)
    for algo in cfg.algorithms:
        build_algorithm(algo, cfg.horizons[0], cfg.seed_base)


@dataclass(frozen=True)
class Cell:
    env_index: int
    algo_index: int
    T: int
    seed: int


def cells(cfg: ExperimentConfig) -> list:
    return [
        Cell(e, a, T, cfg.seed_base + r)
        for e in range(len(cfg.environments))
        for a in range(len(cfg.algorithms))
        for T in cfg.horizons
        for r in range(cfg.replicates)
    ]


def run_cell(cfg: ExperimentConfig, cell: Cell):
    env = build_environment(cfg.environments[cell.env_index])
    algo = build_algorithm(cfg.algorithms[cell.algo_index], cell.T, cell.seed)
    return run_episode(algo, env, cell.T, cell.seed)


def _run_cell_text(cfg_text: str, cell: Cell):
    return run_cell(parse_config(cfg_text), cell)


def trace_filename(env_id: str, algo_id: str, T: int, seed: int) -> str:
    return f"{env_id}__{algo_id}__T{T}__seed{seed}.csv"


def run_sweep(cfg: ExperimentConfig, workers: int = 1, write_traces: bool = True, progress=None) -> str:
    """Execute the full sweep; returns the summary CSV path."""
    validate(cfg)
    todo = cells(cfg)
    if workers > 1:
        text = serialize_config(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_cell_text, [text] * len(todo), todo))
    else:
        traces = []
        for i, cell in enumerate(todo):
            traces.append(run_cell(cfg, cell))
            if progress:
                progress(i + 1, len(todo))

    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    if write_traces:
        os.makedirs(os.path.join(out, "traces"), exist_ok=True)
    finals = {}
    for cell, tr in zip(todo, traces):
        env_id = cfg.environments[cell.env_index].name
        algo_id = cfg.algorithms[cell.algo_index].name
        finals.setdefault((env_id, algo_id), {}).setdefault(cell.T, []).append(tr.final_regret)
        if write_traces:
            tr.write_csv(os.path.join(out, "traces", trace_filename(env_id, algo_id, cell.T, cell.seed)))
    fits = {key: _fit(by_T) for key, by_T in finals.items()}

    path = os.path.join(out, "summary.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for cell, tr in zip(todo, traces):
            key = (cfg.environments[cell.env_index].name, cfg.algorithms[cell.algo_index].name)
            slope, stderr = fits[key]
            w.writerow([key[0], key[1], cell.T, cell.seed, fmt17(tr.final_regret), fmt17(slope), fmt17(stderr)])
    return path


def _fit(by_T: dict):
    horizons = sorted(by_T)
    means = [float(np.mean(by_T[T])) for T in horizons]
    if len(horizons) < 4 or min(means) <= 0:
        return math.nan, math.nan
    return estimate_exponent(horizons, means)


def read_summary(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
