"""Half-integer Matérn kernels on the unit interval.

For nu = p + 1/2 the Matérn kernel reduces to a polynomial times an
exponential in the scaled distance z = sqrt(2 nu) r / l, so no Bessel
function evaluations are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, gamma, pi, sqrt

import numpy as np

from .errors import ConfigError, GridTooCoarse

MAX_NU = Fraction(7, 2)
JITTER = 1e-10


def _as_half_integer(nu) -> Fraction:
    if isinstance(nu, str):
        nu = Fraction(nu.strip())
    elif isinstance(nu, float):
        nu = Fraction(nu).limit_denominator(2)
    else:
        nu = Fraction(nu)
    if nu <= 0 or (nu + Fraction(1, 2)).denominator != 1:
        raise ConfigError(f"nu must be a positive half-integer, got {nu}", field="nu")
    if nu > MAX_NU:
        raise ConfigError(f"closed forms implemented up to nu = {MAX_NU}, got {nu}", field="nu")
    return nu


@dataclass(frozen=True)
class KernelSpec:
    """Translation-invariant Matérn kernel with half-integer regularity.

    ``lengthscale`` defaults to sqrt(2 nu), which makes the scaled distance
    equal the raw distance.
    """

    nu: Fraction
    lengthscale: float = None
    family: str = "matern"
    dim: int = 1
    _coef: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nu = _as_half_integer(self.nu)
        object.__setattr__(self, "nu", nu)
        if self.lengthscale is None:
            object.__setattr__(self, "lengthscale", sqrt(2 * float(nu)))
        if not self.lengthscale > 0:
            raise ConfigError("lengthscale must be positive", field="lengthscale")
        object.__setattr__(self, "lengthscale", float(self.lengthscale))
        if self.family != "matern":
            raise ConfigError(f"unsupported kernel family {self.family!r}", field="family")
        if self.dim != 1:
            raise ConfigError("only dim = 1 is supported", field="dim")
        p = int(nu - Fraction(1, 2))
        # k(z) = e^{-z} * sum_i c_i (2z)^{p-i},  c_i = p! (p+i)! / ((2p)! i! (p-i)!)
        coef = tuple(
            factorial(p) * factorial(p + i) / (factorial(2 * p) * factorial(i) * factorial(p - i))
            for i in range(p + 1)
        )
        object.__setattr__(self, "_coef", coef)

    @property
    def p(self) -> int:
        return int(self.nu - Fraction(1, 2))

    @property
    def inv_scale(self) -> float:
        """sqrt(2 nu) / l, the factor mapping distance to scaled distance."""
        return sqrt(2 * float(self.nu)) / self.lengthscale

    def to_text(self) -> str:
        return "\n".join(
            [
                f"family={self.family}",
                f"nu={self.nu}",
                f"lengthscale={self.lengthscale!r}",
            ]
        )

    @classmethod
    def from_text(cls, text: str) -> "KernelSpec":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"expected key=value, got {raw!r}", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        if "nu" not in values:
            raise ConfigError("missing nu", field="nu")
        ls = values.get("lengthscale")
        return cls(
            nu=Fraction(values["nu"]),
            lengthscale=None if ls in (None, "", "auto") else float(ls),
            family=values.get("family", "matern"),
        )


def matern_scaled(spec: KernelSpec, z):
    """Kernel value as a function of the scaled distance z >= 0."""
    z = np.asarray(z, dtype=float)
    poly = np.zeros_like(z)
    two_z = 2.0 * z
    for c in spec._coef:
        poly = poly * two_z + c
    return poly * np.exp(-z)


def matern_eval(spec: KernelSpec, r):
    """k(x, x') for distance r = |x - x'| (scalar or array)."""
    return matern_scaled(spec, np.abs(np.asarray(r, dtype=float)) * spec.inv_scale)


def kernel_matrix(spec: KernelSpec, xs, ys):
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    return matern_eval(spec, xs[:, None] - ys[None, :])


def gram_matrix(spec: KernelSpec, points):
    """Symmetric Gram matrix of ``points`` (no jitter added)."""
    K = kernel_matrix(spec, points, points)
    return 0.5 * (K + K.T)


def fourier_constant(spec: KernelSpec) -> float:
    nu = float(spec.nu)
    d = spec.dim
    return (
        2**d * pi ** (d / 2) * gamma(nu + d / 2) * (2 * nu) ** nu
        / (gamma(nu) * spec.lengthscale ** (2 * nu))
    )


def fourier_decay_rate(spec: KernelSpec) -> Fraction:
    return spec.nu + Fraction(spec.dim, 2)


def matern_fourier(spec: KernelSpec, omega):
    """Spectral density under the convention k_hat(w) = int k(r) e^{-i w r} dr."""
    omega = np.asarray(omega, dtype=float)
    nu = float(spec.nu)
    rate = float(fourier_decay_rate(spec))
    return fourier_constant(spec) * (2 * nu / spec.lengthscale**2 + omega**2) ** (-rate)


def empirical_fourier_decay(spec: KernelSpec, grid_size: int = 2**16, max_residual: float = 0.05):
    """Estimate the Fourier decay exponent m from a sampled kernel.

    Samples the kernel on a symmetric grid, takes an FFT, and fits the
    log-log slope of the spectrum over a tail band whose lower end sits at
    ten times the spectral knee. Returns ``-slope / 2``.
    """
    if grid_size < 2**12 or grid_size & (grid_size - 1):
        raise GridTooCoarse(f"grid_size must be a power of two >= 2^12, got {grid_size}")
    s = spec.inv_scale
    half_width = 32.0 / s
    dx = 2 * half_width / grid_size
    r = (np.arange(grid_size) - grid_size // 2) * dx
    samples = matern_eval(spec, r)
    # ifftshift puts r = 0 at index 0 so the transform is real.
    spectrum = np.real(np.fft.fft(np.fft.ifftshift(samples))) * dx
    omega = 2 * pi * np.fft.fftfreq(grid_size, d=dx)
    nyquist = pi / dx
    lo = 10.0 * s
    hi = min(100.0 * s, nyquist / 8)
    band = (omega >= lo) & (omega <= hi) & (spectrum > 1e-11 * spectrum[0])
    if band.sum() < 8:
        raise GridTooCoarse(f"only {int(band.sum())} frequencies in the fit band")
    lx = np.log(omega[band])
    ly = np.log(spectrum[band])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    if rms > max_residual:
        raise GridTooCoarse(f"tail fit residual {rms:.3g} exceeds {max_residual}")
    return -slope / 2
