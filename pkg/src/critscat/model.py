"""Physical configuration: coefficient schedules, potential families, grids,
cutoffs, and annular test packets.

All values here are immutable after construction and safe to share across
workers. Construction performs full validation, so downstream numerics can
assume every invariant holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import AnnulusEmpty, AnnulusTooWide, ConfigError

# Distance beyond which the realized potential profile is certified against
# its (1+|x|)^-2 (log(1+|x|))^kappa envelope.
X_FAR = 1.0e3

# Largest admissible packet momentum as a fraction of the grid Nyquist.
NYQUIST_MARGIN = 0.5

_U_EPS = 1e-4  # transition variables are clamped to [_U_EPS, 1-_U_EPS]


# ---------------------------------------------------------------------------
# smooth step and bump primitives
# ---------------------------------------------------------------------------

def _exp_reciprocal(s):
    """exp(-1/s) for s > 0, 0 otherwise; underflow maps smoothly to 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    with np.errstate(divide="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_step(u):
    """C-infinity monotone step: 0 for u <= 0, 1 for u >= 1.

    Built from the classical partition-of-unity quotient
    f(u) / (f(u) + f(1-u)) with f(u) = exp(-1/u).
    """
    u = np.asarray(u, dtype=float)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    f = _exp_reciprocal(uc)
    g = _exp_reciprocal(1.0 - uc)
    r = f / (f + g)
    return np.where(u <= 0.0, 0.0, np.where(u >= 1.0, 1.0, r))


def smooth_step_d1(u):
    """First derivative of smooth_step."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    f = _exp_reciprocal(uc)
    g = _exp_reciprocal(1.0 - uc)
    s = f + g
    q = uc ** -2 + (1.0 - uc) ** -2
    with np.errstate(under="ignore"):
        d = f * g * q / s**2
    return np.where(inside, d, 0.0)


def smooth_step_d2(u):
    """Second derivative of smooth_step."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    f = _exp_reciprocal(uc)
    g = _exp_reciprocal(1.0 - uc)
    s = f + g
    a = uc ** -2
    b = (1.0 - uc) ** -2
    q = a + b
    w = a - b
    qp = -2.0 * uc ** -3 + 2.0 * (1.0 - uc) ** -3
    with np.errstate(under="ignore"):
        d2 = (f * g * (w * q + qp)) / s**2 - 2.0 * f * g * q * (f * a - g * b) / s**3
    return np.where(inside, d2, 0.0)


def bump(u):
    """C-infinity bump exp(-1/(u(1-u))) on (0,1), 0 elsewhere."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    v = uc * (1.0 - uc)
    with np.errstate(under="ignore"):
        b = np.exp(-1.0 / v)
    return np.where(inside, b, 0.0)


def bump_d1(u):
    """First derivative of bump."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    v = uc * (1.0 - uc)
    with np.errstate(under="ignore"):
        b = np.exp(-1.0 / v)
        d = b * (1.0 - 2.0 * uc) / v**2
    return np.where(inside, d, 0.0)


def bump_d2(u):
    """Second derivative of bump."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    v = uc * (1.0 - uc)
    w = 1.0 - 2.0 * uc
    with np.errstate(under="ignore"):
        b = np.exp(-1.0 / v)
        d2 = b * (w**2 / v**4 - 2.0 * w**2 / v**3 - 2.0 / v**2)
    return np.where(inside, d2, 0.0)


@lru_cache(maxsize=1)
def _bump_l2() -> float:
    """Integral of bump(u)^2 over [0,1]."""
    val, _ = quad(lambda u: float(bump(u)) ** 2, 0.0, 1.0, limit=200)
    return val


# ---------------------------------------------------------------------------
# coefficient schedule k(t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSchedule:
    """Time-dependent spring coefficient.

    k(t) = sigma / t^2 for |t| >= r0; for |t| < r0 the interior profile
    applies (``constant`` continues the boundary value sigma / r0^2, which
    keeps k continuous and bounded).
    """

    sigma: float
    r0: float = 1.0
    mass: float = 1.0
    interior: str = "constant"

    def __post_init__(self):
        if not (self.mass > 0.0):
            raise ConfigError(f"mass must be positive, got {self.mass}")
        if not (0.0 <= self.sigma <= self.mass / 4.0):
            raise ConfigError(
                f"sigma must lie in [0, mass/4] = [0, {self.mass / 4.0}], got {self.sigma}"
            )
        if not (self.r0 >= 1.0):
            raise ConfigError(f"r0 must be >= 1, got {self.r0}")
        if self.interior != "constant":
            raise ConfigError(f"unknown interior profile {self.interior!r}")

    @property
    def critical(self) -> bool:
        return self.sigma == self.mass / 4.0

    @property
    def lam(self) -> float:
        """Indicial exponent (1 - sqrt(1 - 4 sigma/m)) / 2; equals 1/2 when critical."""
        return (1.0 - math.sqrt(max(0.0, 1.0 - 4.0 * self.sigma / self.mass))) / 2.0

    @property
    def bound(self) -> float:
        """sup over t of |k(t)|."""
        return self.sigma / self.r0**2

    def evaluate(self, t):
        """k(t); total, bounded, continuous at |t| = r0."""
        t = np.asarray(t, dtype=float)
        tt = np.maximum(np.abs(t), self.r0)
        return self.sigma / tt**2


def evaluate_k(schedule: CoefficientSchedule, t):
    """Coefficient value k(t) for a schedule (vectorized)."""
    return schedule.evaluate(t)


# ---------------------------------------------------------------------------
# potential family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeModulation:
    """Bounded time factor h(t); ``constant`` is h = 1, ``logcos`` wobbles
    between 1-depth and 1 at rate omega in log t (sign-definite for depth < 1).
    """

    kind: str = "constant"
    depth: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "logcos"):
            raise ConfigError(f"unknown time modulation {self.kind!r}")
        if self.kind == "logcos" and not (0.0 <= self.depth < 1.0):
            raise ConfigError("logcos depth must lie in [0, 1)")

    @property
    def inf(self) -> float:
        return 1.0 if self.kind == "constant" else 1.0 - self.depth

    def __call__(self, t):
        if self.kind == "constant":
            return np.ones_like(np.asarray(t, dtype=float))
        t = np.asarray(t, dtype=float)
        return 1.0 - self.depth * 0.5 * (1.0 - np.cos(self.omega * np.log(np.maximum(t, 1e-300))))


@dataclass(frozen=True)
class PotentialSpec:
    """Potential family with profile (1+x^2)^-1 (log(e+x^2))^kappa.

    The smooth profile is normalized to 1 at the origin and matches the
    reference envelope g(x) = (1+|x|)^-2 (log(1+|x|))^kappa asymptotically
    up to the factor 2^kappa, which the internal amplitude absorbs so that

        amplitude_low * g(x) <= |V(t, x)| <= amplitude_high * g(x)

    holds for |x| >= X_FAR (certified numerically at construction).
    """

    kappa: float
    amplitude_low: float
    amplitude_high: float
    sign: int = 1
    time_modulation: TimeModulation = field(default_factory=TimeModulation)

    def __post_init__(self):
        if self.kappa < 0.0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if not (0.0 < self.amplitude_low <= self.amplitude_high):
            raise ConfigError("need 0 < amplitude_low <= amplitude_high")
        if self.sign not in (-1, 1):
            raise ConfigError(f"sign must be +1 or -1, got {self.sign}")
        lo, hi = self.certified_band()
        if lo < self.amplitude_low * (1.0 - 1e-12) or hi > self.amplitude_high * (1.0 + 1e-12):
            raise ConfigError(
                "claimed envelope constants do not hold: realized |V|/g spans "
                f"[{lo:.6g}, {hi:.6g}] on |x| >= {X_FAR:g} but "
                f"[{self.amplitude_low:g}, {self.amplitude_high:g}] was claimed "
                "(amplitude_high must exceed amplitude_low by the profile slack, ~0.2%)"
            )

    @property
    def range_class(self) -> str:
        """``short`` for kappa < 1, ``long`` for kappa >= 1."""
        return "short" if self.kappa < 1.0 else "long"

    @property
    def amplitude(self) -> float:
        """Internal profile amplitude; 2^-kappa rescales for the asymptotic
        log doubling, 1/inf(h) compensates the time modulation's dip."""
        return self.amplitude_low * 2.0 ** (-self.kappa) / self.time_modulation.inf

    def profile(self, x):
        """Smooth global profile g~(x) = (1+x^2)^-1 (log(e+x^2))^kappa, g~(0) = 1."""
        x = np.asarray(x, dtype=float)
        x2 = np.minimum(x * x, 1e300)
        return np.exp(self.kappa * np.log(np.log(math.e + x2)) - np.log1p(x2))

    def envelope(self, x):
        """Reference envelope g(x) = (1+|x|)^-2 (log(1+|x|))^kappa."""
        ax = np.abs(np.asarray(x, dtype=float))
        return (1.0 + ax) ** -2 * np.log1p(ax) ** self.kappa

    def evaluate(self, t, x):
        """V(t, x) = sign * amplitude * g~(x) * h(t)."""
        return self.sign * self.amplitude * self.profile(x) * self.time_modulation(t)

    def certified_band(self, x_lo: float = X_FAR, x_hi: float = 1e8, n: int = 1000):
        """Extremes of |V(t,x)| / g(x) on a log-spaced sample of [x_lo, x_hi],
        minimized/maximized over the time factor."""
        x = np.geomspace(x_lo, x_hi, n)
        ratio = self.amplitude * self.profile(x) / self.envelope(x)
        return float(ratio.min() * self.time_modulation.inf), float(ratio.max())

    @property
    def sup_abs(self) -> float:
        """sup over t, x of |V| (profile peaks at the origin for kappa <= 2)."""
        x = np.linspace(0.0, 10.0, 4001)
        return float(self.amplitude * self.profile(x).max())


def evaluate_potential(spec: PotentialSpec, t, x):
    """Pointwise potential value (vectorized in x)."""
    return spec.evaluate(t, x)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_width, half_width)."""

    half_width: float
    points: int
    dimension: int = 1

    def __post_init__(self):
        if self.dimension != 1:
            raise ConfigError("only dimension 1 is implemented")
        if self.half_width <= 0.0:
            raise ConfigError(f"half_width must be positive, got {self.half_width}")
        if self.points < 8 or (self.points & (self.points - 1)) != 0:
            raise ConfigError(f"points must be a power of two >= 8, got {self.points}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def dk(self) -> float:
        return math.pi / self.half_width

    @property
    def nyquist(self) -> float:
        return math.pi / self.dx

    def x_axis(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.points)

    def k_axis(self) -> np.ndarray:
        """Momentum axis in FFT ordering."""
        return 2.0 * math.pi * np.fft.fftfreq(self.points, d=self.dx)

    def norm(self, values: np.ndarray) -> float:
        """Discrete L^2 norm with the dx weight."""
        return float(np.sqrt(self.dx * np.sum(np.abs(values) ** 2)))

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(self.dx * np.sum(np.conj(b) * a))


# ---------------------------------------------------------------------------
# cutoff function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffFunction:
    """Radial cutoff: 0 on |x| <= eps/2, 1 on |x| >= eps, mollified between."""

    eps: float
    smoothness: str = "mollified"

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.smoothness != "mollified":
            raise ConfigError(f"unknown smoothness profile {self.smoothness!r}")

    def _u(self, x):
        return (np.abs(np.asarray(x, dtype=float)) - self.eps / 2.0) / (self.eps / 2.0)

    def __call__(self, x):
        return smooth_step(self._u(x))

    def grad(self, x):
        """d/dx of the cutoff (odd in x)."""
        x = np.asarray(x, dtype=float)
        return smooth_step_d1(self._u(x)) * (2.0 / self.eps) * np.sign(x)

    def lap(self, x):
        """Second derivative of the cutoff."""
        return smooth_step_d2(self._u(x)) * (2.0 / self.eps) ** 2

    @property
    def sup_grad(self) -> float:
        u = np.linspace(0.0, 1.0, 20001)
        return float(np.abs(smooth_step_d1(u)).max()) * (2.0 / self.eps)

    @property
    def sup_lap(self) -> float:
        u = np.linspace(0.0, 1.0, 20001)
        return float(np.abs(smooth_step_d2(u)).max()) * (2.0 / self.eps) ** 2


# ---------------------------------------------------------------------------
# annular wave packets
# ---------------------------------------------------------------------------

_PACKET_SHAPES = ("symmetric", "positive")


@dataclass(frozen=True)
class FourierProfile:
    """Closed-form Fourier-side profile of an annular packet.

    The profile is a scaled C-infinity bump supported on 2 eps <= |xi| <= R
    (both signs for ``symmetric``, xi > 0 only for ``positive``), normalized
    to unit continuum L^2 norm. First and second derivatives are analytic,
    which gives exact Fourier representations of x*phi and x^2*phi.
    """

    eps: float
    R: float
    shape: str = "symmetric"

    def __post_init__(self):
        if self.shape not in _PACKET_SHAPES:
            raise ConfigError(f"unknown packet shape {self.shape!r}")
        if self.eps <= 0.0 or 2.0 * self.eps >= self.R:
            raise AnnulusEmpty(f"need 0 < 2*eps < R, got eps={self.eps}, R={self.R}")

    @property
    def width(self) -> float:
        return self.R - 2.0 * self.eps

    @property
    def norm_const(self) -> float:
        sides = 2.0 if self.shape == "symmetric" else 1.0
        return 1.0 / math.sqrt(sides * self.width * _bump_l2())

    def _u(self, xi):
        return (np.abs(np.asarray(xi, dtype=float)) - 2.0 * self.eps) / self.width

    def _mask(self, xi):
        if self.shape == "positive":
            return np.asarray(xi) > 0.0
        return np.ones_like(np.asarray(xi, dtype=float), dtype=bool)

    def __call__(self, xi):
        return np.where(self._mask(xi), self.norm_const * bump(self._u(xi)), 0.0)

    def deriv(self, xi):
        xi = np.asarray(xi, dtype=float)
        d = self.norm_const * bump_d1(self._u(xi)) * np.sign(xi) / self.width
        return np.where(self._mask(xi), d, 0.0)

    def deriv2(self, xi):
        xi = np.asarray(xi, dtype=float)
        d2 = self.norm_const * bump_d2(self._u(xi)) / self.width**2
        return np.where(self._mask(xi), d2, 0.0)

    def support_intervals(self):
        pos = (2.0 * self.eps, self.R)
        if self.shape == "positive":
            return (pos,)
        return ((-self.R, -2.0 * self.eps), pos)

    def integrate(self, weight, order: int = 400) -> float:
        """Gauss-Legendre integral of weight(xi) * |profile(xi)|^2 over the support."""
        nodes, w = leggauss(order)
        total = 0.0
        for a, b in self.support_intervals():
            xi = 0.5 * (b - a) * nodes + 0.5 * (b + a)
            total += 0.5 * (b - a) * float(
                np.sum(w * np.asarray(weight(xi), dtype=float) * self(xi) ** 2)
            )
        return total

    def integrate_fn(self, fn, order: int = 400) -> float:
        """Gauss-Legendre integral of fn(xi) over the support (fn arbitrary)."""
        nodes, w = leggauss(order)
        total = 0.0
        for a, b in self.support_intervals():
            xi = 0.5 * (b - a) * nodes + 0.5 * (b + a)
            total += 0.5 * (b - a) * float(np.sum(w * np.asarray(fn(xi), dtype=float)))
        return total

    # moments used by the diagnostic bounds
    def mean_xi(self) -> float:
        return self.integrate(lambda xi: xi)

    def mean_xi2(self) -> float:
        return self.integrate(lambda xi: xi**2)

    def norm_x_phi(self) -> float:
        """||x phi|| = ||phi_hat'||."""
        return math.sqrt(self.integrate_fn(lambda xi: self.deriv(xi) ** 2))

    def norm_x2_phi(self) -> float:
        """||x^2 phi|| = ||phi_hat''||."""
        return math.sqrt(self.integrate_fn(lambda xi: self.deriv2(xi) ** 2))


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Unit-norm grid state whose Fourier transform lives on the annulus
    2 eps <= |xi| <= R. Carries its analytic Fourier profile for exact
    momentum-space evaluations."""

    eps: float
    R: float
    shape: str
    grid: GridSpec
    values: np.ndarray
    profile: FourierProfile

    @property
    def norm(self) -> float:
        return self.grid.norm(self.values)


def make_packet(eps: float, R: float, grid: GridSpec, shape: str = "symmetric") -> WavePacket:
    """Construct an annular packet on a grid.

    The Fourier profile is sampled on the grid momenta and inverted; the
    result is renormalized to unit discrete norm (the continuum norm is
    already 1, so the correction is at roundoff level).
    """
    if eps <= 0.0 or 2.0 * eps >= R:
        raise AnnulusEmpty(f"need 0 < 2*eps < R, got eps={eps}, R={R}")
    if R > NYQUIST_MARGIN * grid.nyquist:
        raise AnnulusTooWide(
            f"outer radius {R} exceeds {NYQUIST_MARGIN} * Nyquist = "
            f"{NYQUIST_MARGIN * grid.nyquist:.4g}"
        )
    profile = FourierProfile(eps=eps, R=R, shape=shape)
    k = grid.k_axis()
    fhat = profile(k).astype(np.complex128)
    # unitary continuum transform conventions: see spectral.fourier_transform
    x0 = -grid.half_width
    phase = np.exp(1j * k * x0)
    values = np.fft.ifft(fhat * phase) * (grid.dk * grid.points / math.sqrt(2.0 * math.pi))
    values = values / grid.norm(values)
    return WavePacket(eps=eps, R=R, shape=shape, grid=grid, values=values, profile=profile)
