"""Hard instances for adaptivity: bump-function hypothesis families.

An instance splits [0, 1] into M + 1 bins, H_1..H_M of width h = 1/(2M)
covering [0, 1/2] and H_0 = [1/2, 1]. A smooth bump f_0 of height Delta/2
sits in H_0 and a rough bump f_s of height Delta sits in each H_s. The
reward functions are phi_0 = f_0 and phi_s = f_s + f_0, so phi_s agrees with
phi_0 off H_s. All amplitudes and widths are chosen so that f_s has Sobolev
seminorm of order m1 at most L1 and f_0 of order m2 at most L2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigError, ConstraintViolation, QuadratureNotConverged
from .kernels import KernelSpec, matern_fourier
from .metrics import fmt17

MAX_ORDER = 4
K0_STAR = math.exp(-1.0)
_EDGE = 1e-12
_ONE_MINUS_X2 = Polynomial([1.0, 0.0, -1.0])


def _derivative_numerators(order: int) -> list:
    """P_m with K0^(m)(x) = P_m(x) / (1 - x^2)^(2m) * K0(x)."""
    polys = [Polynomial([1.0])]
    x = Polynomial([0.0, 1.0])
    for m in range(order):
        P = polys[-1]
        nxt = P.deriv() * _ONE_MINUS_X2**2 + 4 * m * x * P * _ONE_MINUS_X2 - 2 * x * P
        polys.append(nxt)
    return polys


_NUMERATORS = _derivative_numerators(MAX_ORDER)


def bump(x):
    """exp(-1 / (1 - x^2)) on |x| < 1, exactly 0 elsewhere."""
    return bump_derivative(x, 0)


def bump_derivative(x, m: int):
    if not 0 <= m <= MAX_ORDER:
        raise ValueError(f"derivative order must be in 0..{MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0 - _EDGE
    xi = x[inside]
    q = 1.0 - xi * xi
    val = np.exp(-1.0 / q)
    if m:
        val = val * _NUMERATORS[m](xi) / q ** (2 * m)
    out[inside] = val
    return out if out.ndim else float(out)


def squared_derivative_integral(m: int, n: int) -> float:
    """Trapezoid rule for int_{-1}^{1} [K0^(m)(u)]^2 du on n intervals."""
    u = np.linspace(-1.0, 1.0, n + 1)
    return float(np.trapezoid(bump_derivative(u, m) ** 2, u))


def derivative_energy(m: int, n: int = 2**15, rtol: float = 5e-3) -> float:
    coarse = squared_derivative_integral(m, n)
    fine = squared_derivative_integral(m, 2 * n)
    if abs(fine - coarse) > rtol * abs(fine):
        raise QuadratureNotConverged(f"I_{m}: {coarse} vs {fine} under grid doubling")
    return fine


class Constants(NamedTuple):
    K0_star: float
    I_m1: float
    I_m2: float
    C_m1: float
    C_prime: float
    C_bins: float


def compute_constants(m1: int, m2: int) -> Constants:
    """Bump-derived constants of the construction.

    ``C_m1`` is K0* / (2^(2 m1 - 1) sqrt(I_m1)). The number of bins scales
    with ``C_bins`` = C_m1^(2 / (2 m1 - 1)): that is the power for which
    M = floor(C_bins (L1 / Delta)^(2 / (2 m1 - 1))) keeps the rough bump
    width parameter b at least 2. ``C_prime`` is built from ``C_bins``.
    """
    if not (1 <= m1 < m2 <= MAX_ORDER):
        raise ConfigError(f"need 1 <= m1 < m2 <= {MAX_ORDER}, got m1={m1}, m2={m2}")
    I1 = derivative_energy(m1)
    I2 = derivative_energy(m2)
    C = K0_STAR / (2 ** (2 * m1 - 1) * math.sqrt(I1))
    C_bins = C ** (2.0 / (2 * m1 - 1))
    ratio = (m1 - 0.5) / (m1 + 0.5)
    C_prime = 2 ** (2 * m2 - 2) * (C_bins / 32) ** ratio * math.sqrt(I2) / K0_STAR
    return Constants(K0_STAR, I1, I2, C, C_prime, C_bins)


def admissible_L1(m1: int, m2: int, L2: float, R_tilde: float, consts: Constants = None):
    """Closed interval of L1 for which a certified instance exists."""
    c = consts or compute_constants(m1, m2)
    lo = 3 ** (m1 + 0.5) / 32 * c.C_bins ** (-m1 + 0.5) / R_tilde
    hi = c.C_prime ** (-(m1 + 0.5)) * L2 ** (m1 + 0.5) * R_tilde ** (m1 - 0.5)
    return lo, hi


def peak_height(m1: int, L1: float, R_tilde: float, C_bins: float) -> float:
    ratio = (m1 - 0.5) / (m1 + 0.5)
    return (C_bins / 32) ** ratio * L1 ** (1 / (m1 + 0.5)) * R_tilde ** (-ratio)


def bin_count(m1: int, L1: float, Delta: float, C_bins: float) -> int:
    e = 2.0 / (2 * m1 - 1)
    return int(math.floor(C_bins * L1**e * Delta ** (-e)))


@dataclass(frozen=True)
class ConstructionParams:
    m1: int
    m2: int
    L1: float
    L2: float
    R_tilde: float
    Delta: float
    M: int
    h: float
    a: float
    b: float
    a_tilde: float
    b_tilde: float


@dataclass
class AdversaryInstance:
    params: ConstructionParams
    constants: Constants
    certified: bool = False
    report: object = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def Delta(self) -> float:
        return self.params.Delta

    def midpoint(self, s: int) -> float:
        if s == 0:
            return 0.75
        return (s - 0.5) / (2 * self.M)

    def bin_interval(self, s: int):
        if s == 0:
            return 0.5, 1.0
        return (s - 1) / (2 * self.M), s / (2 * self.M)

    def rough(self, x, s: int):
        """f_s for s >= 1."""
        p = self.params
        x = np.asarray(x, dtype=float)
        return p.a * p.h ** (p.m1 - 0.5) * bump(p.b * (x - self.midpoint(s)) / p.h)

    def smooth(self, x):
        """f_0."""
        p = self.params
        x = np.asarray(x, dtype=float)
        return p.a_tilde * p.h ** (p.m2 - 0.5) * bump(p.b_tilde * (x - 0.75) / p.h)

    def phi(self, x, s: int):
        if s == 0:
            return self.smooth(x)
        return self.rough(x, s) + self.smooth(x)

    def reward_fn(self, s: int):
        return lambda x: self.phi(x, s)

    def bin_of(self, x):
        """Bin index per point: 1..M on [0, 1/2], 0 on (1/2, 1]."""
        x = np.asarray(x, dtype=float)
        s = np.ceil(x * 2 * self.M).astype(int)
        s = np.clip(s, 1, self.M)
        return np.where(x > 0.5, 0, s)

    def in_bin(self, x, s: int):
        lo, hi = self.bin_interval(s)
        x = np.asarray(x, dtype=float)
        return (x >= lo) & (x <= hi)


def construct_instance(m1: int, m2: int, L1: float, L2: float, R_tilde: float) -> AdversaryInstance:
    c = compute_constants(m1, m2)
    if min(L1, L2, R_tilde) <= 0:
        raise ConfigError("L1, L2 and R_tilde must be positive")
    lo, hi = admissible_L1(m1, m2, L2, R_tilde, c)
    if L1 < lo:
        raise ConstraintViolation("L1_lower_bound", f"L1={L1!r} below {lo!r}; at least two rough bins are needed")
    if L1 > hi:
        raise ConstraintViolation("L1_upper_bound", f"L1={L1!r} above {hi!r}; the smooth bump would not fit its ball")
    Delta = peak_height(m1, L1, R_tilde, c.C_bins)
    M = bin_count(m1, L1, Delta, c.C_bins)
    if M < 2:
        raise ConstraintViolation("M_at_least_2", f"M={M}")
    h = 1.0 / (2 * M)
    a = Delta * (2 * M) ** (m1 - 0.5) / c.K0_star
    a_tilde = Delta * (2 * M) ** (m2 - 0.5) / (2 * c.K0_star)
    b_max = (L1**2 * c.K0_star**2 / (Delta**2 * (2 * M) ** (2 * m1 - 1) * c.I_m1)) ** (1 / (2 * m1 - 1))
    bt_max = (4 * L2**2 * c.K0_star**2 / (Delta**2 * (2 * M) ** (2 * m2 - 1) * c.I_m2)) ** (1 / (2 * m2 - 1))
    if b_max < 2 * (1 - 1e-12):
        raise ConstraintViolation("b_at_least_2", f"largest admissible b is {b_max!r}")
    if bt_max < 4 * h * (1 - 1e-12):
        raise ConstraintViolation("b_tilde_at_least_4h", f"largest admissible b_tilde is {bt_max!r} < {4 * h!r}")
    params = ConstructionParams(
        m1=m1, m2=m2, L1=float(L1), L2=float(L2), R_tilde=float(R_tilde), Delta=Delta, M=M, h=h,
        a=a, b=max(b_max, 2.0), a_tilde=a_tilde, b_tilde=max(bt_max, 4 * h),
    )
    return AdversaryInstance(params, c)


def sobolev_seminorm(f, m: int, grid_size: int = 2**14, interval=(0.0, 1.0), rtol: float = 5e-3) -> float:
    """|f|_{m,2} on ``interval`` by m-th finite differences and the trapezoid rule.

    The value on ``2 * grid_size`` intervals is returned once it agrees with
    the ``grid_size`` value to ``rtol``.
    """
    if not 1 <= m <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    coarse = _seminorm_once(f, m, grid_size, interval)
    fine = _seminorm_once(f, m, 2 * grid_size, interval)
    scale = max(abs(fine), abs(coarse))
    if scale > 1e-300 and abs(fine - coarse) > rtol * scale:
        raise QuadratureNotConverged(f"seminorm {coarse!r} vs {fine!r} under grid doubling")
    return fine


def _seminorm_once(f, m, n, interval):
    a, b = interval
    dx = (b - a) / n
    # padded so the m-th difference lands on the n+1 nodes of [a, b]
    x = a + (np.arange(n + m + 1) - m / 2.0) * dx
    d = np.diff(np.asarray(f(x), dtype=float), n=m) / dx**m
    return math.sqrt(np.trapezoid(d * d, dx=dx))


def rkhs_norm_surrogate(f, spec: KernelSpec, grid_size: int = 2**14, support=(0.0, 1.0), pad: int = 8,
                        rtol: float = 1e-2):
    """Fourier-side RKHS norm of f extended by zero outside ``support``.

    sqrt( (1 / 2 pi) int |f_hat(w)|^2 / k_hat(w) dw ) from a zero-padded FFT.
    Returns (value, relative change under grid doubling).
    """
    coarse = _surrogate_once(f, spec, grid_size, support, pad)
    fine = _surrogate_once(f, spec, 2 * grid_size, support, pad)
    delta = abs(fine - coarse) / fine if fine > 0 else 0.0
    if delta > rtol:
        raise QuadratureNotConverged(f"RKHS surrogate changed by {delta:.3g} under grid doubling")
    return fine, delta


def _surrogate_once(f, spec, n, support, pad):
    a, b = support
    dx = (b - a) / n
    x = a + np.arange(n + 1) * dx
    samples = np.zeros(pad * (n + 1))
    samples[: n + 1] = np.asarray(f(x), dtype=float)
    fhat = np.fft.rfft(samples) * dx
    omega = 2 * math.pi * np.fft.rfftfreq(len(samples), d=dx)
    dw = omega[1]
    dens = np.abs(fhat) ** 2 / matern_fourier(spec, omega)
    # rfft holds the non-negative half; the integrand is even in omega
    total = dens[0] + 2.0 * np.sum(dens[1:])
    return math.sqrt(total * dw / (2 * math.pi))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class CertificationReport:
    checks: list = field(default_factory=list)
    seminorms: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(CheckResult(name, bool(passed), detail))

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}" for c in self.checks]
        lines.append("CERTIFIED" if self.certified else "NOT CERTIFIED")
        return "\n".join(lines)


def _bin_grid(lo, hi, n):
    # n even keeps the bin midpoint on the grid
    return np.linspace(lo, hi, n + 1)


def _representative_bins(M):
    return sorted({1, (M + 1) // 2, M})


def verify_conditions(instance: AdversaryInstance, grid_size: int = 2**14, chunk: int = 2**22) -> CertificationReport:
    """Re-check peaks, Sobolev membership and the off-bin structure on grids.

    Peaks and off-bin equality are checked for every bin. The seminorm of
    f_s does not depend on s (the bumps are translates), so it is evaluated
    on the first, middle and last bins only.
    """
    if grid_size < 2**14 or grid_size % 2:
        raise ConfigError("grid_size must be even and >= 2^14")
    p = instance.params
    M, Delta = p.M, p.Delta
    rep = CertificationReport()

    # structural couplings
    rep.add("M_at_least_2", M >= 2, f"M={M}")
    rep.add("b_at_least_2", p.b >= 2 * (1 - 1e-12), f"b={p.b:.6g}")
    rep.add("b_tilde_at_least_4h", p.b_tilde >= 4 * p.h * (1 - 1e-12), f"b_tilde={p.b_tilde:.6g}, 4h={4 * p.h:.6g}")
    ratio = math.sqrt(Delta * p.R_tilde / M)
    rep.add("sqrt_Delta_R_over_M", ratio <= 0.25, f"sqrt(Delta R/M)={ratio:.6g}")

    # (1) peaks
    g0 = _bin_grid(0.5, 1.0, grid_size)
    phi0 = instance.smooth(g0)
    peak0 = float(phi0.max())
    # phi_0 on [0, 1/2] is identically zero by support
    off0 = instance.smooth(np.linspace(0.0, 0.5, grid_size + 1))
    peak0 = max(peak0, float(off0.max()))
    rep.add("peak_phi0", abs(peak0 - Delta / 2) <= 1e-6, f"max={peak0!r}, Delta/2={Delta / 2!r}")
    worst_peak = 0.0
    worst_leak = 0.0
    offsets = np.linspace(0.0, 1.0, grid_size + 1)
    global_grid = np.linspace(0.0, 1.0, grid_size + 1)
    rows = max(1, chunk // len(offsets))
    for start in range(1, M + 1, rows):
        ss = np.arange(start, min(M, start + rows - 1) + 1)
        lo = (ss - 1) / (2 * M)
        local = lo[:, None] + offsets[None, :] / (2 * M)
        vals = p.a * p.h ** (p.m1 - 0.5) * bump(p.b * (local - ((ss - 0.5) / (2 * M))[:, None]) / p.h)
        peaks = np.maximum(vals.max(axis=1) + 0.0, peak0)
        worst_peak = max(worst_peak, float(np.max(np.abs(peaks - Delta))))
        # (3) f_s must vanish outside H_s on the global grid
        mids = (ss - 0.5) / (2 * M)
        gvals = bump(p.b * (global_grid[None, :] - mids[:, None]) / p.h)
        outside = (global_grid[None, :] < lo[:, None]) | (global_grid[None, :] > (ss / (2 * M))[:, None])
        leak = np.abs(np.where(outside, gvals, 0.0)).max() * p.a * p.h ** (p.m1 - 0.5)
        worst_leak = max(worst_leak, float(leak))
    rep.add("peak_phi_s", worst_peak <= 1e-6, f"max |peak - Delta| = {worst_peak:.3g}")

    # (2) Sobolev membership
    fs_norms = []
    for s in _representative_bins(M):
        lo, hi = instance.bin_interval(s)
        fs_norms.append(sobolev_seminorm(lambda x, s=s: instance.rough(x, s), p.m1, grid_size, (lo, hi)))
    f0_norm = sobolev_seminorm(instance.smooth, p.m2, grid_size, (0.5, 1.0))
    rep.seminorms = {"f_s": max(fs_norms), "f_0": f0_norm}
    rep.add("seminorm_f_s", max(fs_norms) <= p.L1 * 1.01, f"|f_s|_{p.m1}={max(fs_norms):.6g} vs L1={p.L1:.6g}")
    rep.add("seminorm_f_0", f0_norm <= p.L2 * 1.01, f"|f_0|_{p.m2}={f0_norm:.6g} vs L2={p.L2:.6g}")

    # (3) off-bin equality and gap
    rep.add("off_bin_equality", worst_leak <= 1e-12, f"max |phi_s - phi_0| off H_s = {worst_leak:.3g}")
    max_phi0_off = max(peak0, 0.0)
    gap = Delta - max_phi0_off
    rep.add("off_bin_gap", gap >= Delta / 2 - 1e-9, f"gap={gap!r}, Delta/2={Delta / 2!r}")

    instance.report = rep
    instance.certified = rep.certified
    return rep


def lower_bound_value(m1: int, L1: float, R_tilde: float, T: float, C_bins: float = None) -> float:
    """T * Delta / 8: the guaranteed mean regret over the rough hypotheses."""
    if C_bins is None:
        C_bins = compute_constants(m1, m1 + 1).C_bins
    ratio = (m1 - 0.5) / (m1 + 0.5)
    return 0.125 * (C_bins / 32) ** ratio * L1 ** (1 / (m1 + 0.5)) * R_tilde ** (-ratio) * T


def build_certified(m1, m2, L1, L2, R_tilde, grid_size: int = 2**14) -> AdversaryInstance:
    """Construct and certify; ``L1='auto'`` picks the log-midpoint of the admissible range."""
    if isinstance(L1, str):
        if L1 != "auto":
            raise ConfigError(f"L1 must be a number or 'auto', got {L1!r}")
        lo, hi = admissible_L1(m1, m2, L2, R_tilde)
        if lo > hi:
            raise ConstraintViolation("L1_lower_bound", f"admissible L1 range is empty: [{lo!r}, {hi!r}]")
        L1 = math.sqrt(lo * hi)
    inst = construct_instance(m1, m2, float(L1), L2, R_tilde)
    verify_conditions(inst, grid_size)
    return inst


# -- text artifact ----------------------------------------------------------

_PARAM_KEYS = ("m1", "m2", "L1", "L2", "R_tilde", "Delta", "M", "h", "a", "b", "a_tilde", "b_tilde")


def export_instance(instance: AdversaryInstance, path, grid_size: int = 257) -> None:
    p = instance.params
    xs = np.linspace(0.0, 1.0, grid_size)
    cols = [instance.smooth(xs)] + [instance.phi(xs, s) for s in range(1, p.M + 1)]
    with open(path, "w") as fh:
        fh.write("# kernbandit adversary instance\n")
        for k, v in asdict(p).items():
            fh.write(f"# {k}={fmt17(v)}\n")
        fh.write(f"# certified={int(instance.certified)}\n")
        fh.write(f"# grid_size={grid_size}\n")
        fh.write(",".join(["x"] + [f"phi_{s}" for s in range(p.M + 1)]) + "\n")
        for r, x in enumerate(xs):
            fh.write(",".join([fmt17(x)] + [fmt17(c[r]) for c in cols]) + "\n")


def read_instance_file(path):
    header, rows, columns = {}, [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            if columns is None:
                columns = line.split(",")
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise ConfigError(f"non-numeric table row: {line[:60]!r}", line=lineno) from None
            if len(rows[-1]) != len(columns):
                raise ConfigError("row width does not match header", line=lineno)
    missing = [k for k in _PARAM_KEYS if k not in header]
    if missing:
        raise ConfigError(f"missing header keys {missing}")
    return header, columns, np.array(rows)


def certify_file(path, grid_size: int = 2**14) -> CertificationReport:
    """Rebuild the instance from the file header and check the file against it."""
    header, columns, table = read_instance_file(path)
    m1, m2 = int(header["m1"]), int(header["m2"])
    inst = construct_instance(m1, m2, float(header["L1"]), float(header["L2"]), float(header["R_tilde"]))
    rep = verify_conditions(inst, grid_size)
    p = inst.params
    for k in _PARAM_KEYS:
        stored = float(header[k])
        fresh = float(getattr(p, k))
        ok = math.isclose(stored, fresh, rel_tol=1e-12, abs_tol=0.0)
        rep.add(f"header_{k}", ok, f"stored={stored!r}, rebuilt={fresh!r}")
    expected_cols = ["x"] + [f"phi_{s}" for s in range(p.M + 1)]
    rep.add("table_columns", columns == expected_cols, f"{len(columns)} columns")
    if columns == expected_cols and len(table):
        xs = table[:, 0]
        worst = 0.0
        for s in range(p.M + 1):
            worst = max(worst, float(np.max(np.abs(table[:, s + 1] - inst.phi(xs, s)))))
        rep.add("table_values", worst <= 1e-12 * max(1.0, p.Delta), f"max deviation {worst:.3g}")
        # off-bin equality read straight from the file
        leak = 0.0
        for s in range(1, p.M + 1):
            off = ~inst.in_bin(xs, s)
            if off.any():
                leak = max(leak, float(np.max(np.abs(table[off, s + 1] - table[off, 1]))))
        rep.add("table_off_bin_equality", leak <= 1e-12, f"max off-bin deviation {leak:.3g}")
    inst.report = rep
    inst.certified = rep.certified
    return rep


def l2_norm(f, interval=(0.0, 1.0), grid_size: int = 2**15) -> float:
    a, b = interval
    x = np.linspace(a, b, grid_size + 1)
    v = np.asarray(f(x), dtype=float)
    return math.sqrt(np.trapezoid(v * v, x))


def interpolation_constant(instance: AdversaryInstance, grid_size: int = 2**14) -> float:
    """Fitted K in |f_0|_{m1} <= K |f_0|_{m2}^{m1/m2} ||f_0||_2^{(m2-m1)/m2}.

    Reported only: the true constant depends on the domain and is not
    available in closed form.
    """
    p = instance.params
    H0 = (0.5, 1.0)
    low = sobolev_seminorm(instance.smooth, p.m1, grid_size, H0)
    high = sobolev_seminorm(instance.smooth, p.m2, grid_size, H0)
    l2 = l2_norm(instance.smooth, H0)
    return low / (high ** (p.m1 / p.m2) * l2 ** ((p.m2 - p.m1) / p.m2))


def fitted_norm_ratio(instance: AdversaryInstance, spec: KernelSpec = None, grid_size: int = 2**14) -> float:
    """rkhs_norm_surrogate(f_0) / |f_0|_{m2}: the fitted-constant equivalency ratio.

    With the kernel whose Fourier decay matches m2 (nu = m2 - 1/2) the two
    norms are equivalent, so this ratio is a scale-free instance summary.
    """
    from fractions import Fraction

    p = instance.params
    spec = spec or KernelSpec(Fraction(2 * p.m2 - 1, 2))
    surrogate, _ = rkhs_norm_surrogate(instance.smooth, spec, grid_size, support=(0.5, 1.0))
    return surrogate / sobolev_seminorm(instance.smooth, p.m2, grid_size, (0.5, 1.0))
