"""Flat sectioned key=value experiment configs.

::

    [experiment]
    horizons = 256, 512, 1024, 2048
    replicates = 20
    seed_base = 0
    output_dir = out

    [env.smooth]
    kind = expansion
    nu = 3/2

    [algo.sup]
    kind = supkernelucb
    nu = 3/2

Section names after ``env.`` / ``algo.`` are the ids written to the CSVs.
Parameter values stay strings in the spec objects; ``harness`` interprets
them. Parse followed by serialize followed by parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError

ENV_KINDS = ("expansion", "adversary")
ALGO_KINDS = ("gpucb", "supkernelucb", "supkernelucb_fixed", "corral", "rbbe")
EXPERIMENT_KEYS = ("horizons", "replicates", "seed_base", "output_dir")


@dataclass(frozen=True)
class EnvSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AlgoSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    environments: tuple
    algorithms: tuple
    horizons: tuple
    replicates: int = 1
    seed_base: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if not self.horizons:
            raise ConfigError("at least one horizon is required", field="horizons")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ConfigError("horizons must be strictly increasing", field="horizons")
        if self.horizons[0] < 1:
            raise ConfigError("horizons must be >= 1", field="horizons")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1", field="replicates")
        if not self.environments:
            raise ConfigError("no [env.*] section")
        if not self.algorithms:
            raise ConfigError("no [algo.*] section")

    def with_overrides(self, seed_base=None, output_dir=None) -> "ExperimentConfig":
        kw = {}
        if seed_base is not None:
            kw["seed_base"] = int(seed_base)
        if output_dir is not None:
            kw["output_dir"] = str(output_dir)
        return replace(self, **kw)


def _int(value: str, name: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"expected an integer, got {value!r}", line=line, field=name) from None


def parse_config(text: str) -> ExperimentConfig:
    sections = []  # (header, line, {key: (value, line)})
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            header = line[1:-1].strip()
            if any(h == header for h, _, _ in sections):
                raise ConfigError(f"duplicate section [{header}]", line=lineno)
            current = (header, lineno, {})
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside of any section", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in current[2]:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, field=key)
        current[2][key] = (value, lineno)

    exp, envs, algos = None, [], []
    for header, lineno, body in sections:
        if header == "experiment":
            exp = (lineno, body)
        elif header.startswith("env."):
            envs.append(_spec(EnvSpec, ENV_KINDS, header[4:], lineno, body))
        elif header.startswith("algo."):
            algos.append(_spec(AlgoSpec, ALGO_KINDS, header[5:], lineno, body))
        else:
            raise ConfigError(f"unknown section [{header}]", line=lineno)
    if exp is None:
        raise ConfigError("missing [experiment] section")
    lineno, body = exp
    for key, (_, kl) in body.items():
        if key not in EXPERIMENT_KEYS:
            raise ConfigError(f"unknown experiment key {key!r}", line=kl, field=key)
    if "horizons" not in body:
        raise ConfigError("missing horizons", line=lineno, field="horizons")
    hv, hl = body["horizons"]
    horizons = tuple(_int(v.strip(), "horizons", hl) for v in hv.split(",") if v.strip())
    kw = {}
    for key in ("replicates", "seed_base"):
        if key in body:
            kw[key] = _int(body[key][0], key, body[key][1])
    if "output_dir" in body:
        kw["output_dir"] = body["output_dir"][0]
    if any(b <= a for a, b in zip(horizons, horizons[1:])) or (horizons and horizons[0] < 1):
        raise ConfigError("horizons must be >= 1 and strictly increasing", line=hl, field="horizons")
    if kw.get("replicates", 1) < 1:
        raise ConfigError("replicates must be >= 1", line=body["replicates"][1], field="replicates")
    return ExperimentConfig(tuple(envs), tuple(algos), horizons, **kw)


def _spec(cls, kinds, name, lineno, body):
    if not name:
        raise ConfigError("section needs a name", line=lineno)
    if "kind" not in body:
        raise ConfigError("missing kind", line=lineno, field="kind")
    kind, kl = body["kind"]
    if kind not in kinds:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {kinds}", line=kl, field="kind")
    params = {k: v for k, (v, _) in body.items() if k != "kind"}
    return cls(name, kind, params)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [
        "[experiment]",
        "horizons = " + ", ".join(str(t) for t in cfg.horizons),
        f"replicates = {cfg.replicates}",
        f"seed_base = {cfg.seed_base}",
        f"output_dir = {cfg.output_dir}",
    ]
    for prefix, specs in (("env", cfg.environments), ("algo", cfg.algorithms)):
        for spec in specs:
            lines += ["", f"[{prefix}.{spec.name}]", f"kind = {spec.kind}"]
            lines += [f"{k} = {v}" for k, v in spec.params.items()]
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
