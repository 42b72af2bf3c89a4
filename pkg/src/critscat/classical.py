"""Classical amplitude equation: high-order integration of
zeta'' + (k(t)/m) zeta = 0, exact matched closed forms past the matching
radius, asymptotic-regime fitting, and classical trajectories.

With the constant interior continuation the interior solution is exact
trigonometry, so the matched coefficients have closed forms; the adaptive
integrator is kept alongside as a cross-check oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import ToleranceNotMet, WindowTooNarrow
from .model import CoefficientSchedule


@dataclass(frozen=True)
class MatchedCoefficients:
    """Closed-form continuation coefficients on t >= r0.

    Critical: zeta_j(t) = sqrt(t) (A_j + B_j log t).
    Non-critical: zeta_j(t) = a_j t^(1-lam) + b_j t^lam.
    """

    critical: bool
    lam: float
    c1: tuple  # (A1, B1) or (a1, b1)
    c2: tuple  # (A2, B2) or (a2, b2)


@dataclass(frozen=True)
class TrajectoryState:
    """Initial phase-space expectations."""

    x0: float
    p0: float

    def __post_init__(self):
        if not (math.isfinite(self.x0) and math.isfinite(self.p0)):
            raise ValueError("trajectory state must be finite")


class ClassicalSolution:
    """Evaluable pair (zeta1, zeta2) with derivatives and Wronskian.

    Evaluation uses the interior closed form below r0 and the matched closed
    form above it (exact, no error accumulation over long horizons); the
    stored dense adaptive solution provides the independent numeric branch.
    """

    def __init__(self, schedule: CoefficientSchedule, t_max: float, tol: float,
                 dense, matched: MatchedCoefficients, samples: np.ndarray):
        self.schedule = schedule
        self.t_max = t_max
        self.tol = tol
        self._dense = dense
        self.matched = matched
        self.samples = samples

    # -- closed-form branches ------------------------------------------------

    def _interior(self, t):
        s = self.schedule
        omega = math.sqrt(s.sigma / s.mass) / s.r0
        t = np.asarray(t, dtype=float)
        if omega == 0.0:
            one, zero = np.ones_like(t), np.zeros_like(t)
            return one, zero, t.copy(), one
        z1 = np.cos(omega * t)
        d1 = -omega * np.sin(omega * t)
        z2 = np.sin(omega * t) / omega
        d2 = np.cos(omega * t)
        return z1, d1, z2, d2

    def _matched(self, t):
        t = np.asarray(t, dtype=float)
        m = self.matched
        if m.critical:
            rt, lg = np.sqrt(t), np.log(t)
            out = []
            for a, b in (m.c1, m.c2):
                z = rt * (a + b * lg)
                d = (a + b * lg) / (2.0 * rt) + b / rt
                out.extend((z, d))
            return tuple(out)
        lam = m.lam
        out = []
        for a, b in (m.c1, m.c2):
            z = a * t ** (1.0 - lam) + b * t**lam
            d = a * (1.0 - lam) * t**-lam + b * lam * t ** (lam - 1.0)
            out.extend((z, d))
        return tuple(out)

    def eval(self, t):
        """(zeta1, zeta1', zeta2, zeta2') at t (vectorized, t >= 0)."""
        t = np.asarray(t, dtype=float)
        inner = self._interior(np.minimum(t, self.schedule.r0))
        outer = self._matched(np.maximum(t, self.schedule.r0))
        mask = t < self.schedule.r0
        return tuple(np.where(mask, i, o) for i, o in zip(inner, outer))

    def eval_numeric(self, t):
        """Same quadruple from the stored adaptive dense output (oracle branch)."""
        y = self._dense(np.asarray(t, dtype=float))
        return y[0], y[1], y[2], y[3]

    def wronskian(self, t):
        z1, d1, z2, d2 = self.eval(t)
        return z1 * d2 - z2 * d1

    def wronskian_numeric(self, t):
        z1, d1, z2, d2 = self.eval_numeric(t)
        return z1 * d2 - z2 * d1


def _match_at_r0(schedule: CoefficientSchedule, z, d) -> tuple:
    """Coefficients of the outer closed form from value z and derivative d at r0."""
    r0 = schedule.r0
    if schedule.critical:
        # z = sqrt(r0)(A + B log r0), d = (A + B log r0)/(2 sqrt(r0)) + B/sqrt(r0)
        rt, lg = math.sqrt(r0), math.log(r0)
        bb = (d - z / (2.0 * r0)) * rt
        aa = z / rt - bb * lg
        return (aa, bb)
    lam = schedule.lam
    # z = a r^(1-lam) + b r^lam, d = a(1-lam) r^-lam + b lam r^(lam-1)
    m = np.array([
        [r0 ** (1.0 - lam), r0**lam],
        [(1.0 - lam) * r0**-lam, lam * r0 ** (lam - 1.0)],
    ])
    a, b = np.linalg.solve(m, np.array([z, d]))
    return (float(a), float(b))


def solve_zeta(schedule: CoefficientSchedule, t_max: float,
               tol: float = 1e-12) -> ClassicalSolution:
    """Integrate the amplitude equation from 0 to t_max and attach the
    matched closed form past r0.

    The adaptive branch uses an 8th-order embedded pair with dense output;
    matching coefficients come from the exact interior values at r0.
    """
    if t_max < schedule.r0:
        raise ValueError(f"t_max must be >= r0 = {schedule.r0}")
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")

    def rhs(t, y):
        c = schedule.evaluate(t) / schedule.mass
        return [y[1], -c * y[0], y[3], -c * y[2]]

    sol = solve_ivp(rhs, (0.0, t_max), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success:
        raise ToleranceNotMet(f"adaptive integration failed: {sol.message}")

    # interior closed form is exact for the constant continuation
    omega = math.sqrt(schedule.sigma / schedule.mass) / schedule.r0
    r0 = schedule.r0
    if omega == 0.0:
        vals1, vals2 = (1.0, 0.0), (r0, 1.0)
    else:
        vals1 = (math.cos(omega * r0), -omega * math.sin(omega * r0))
        vals2 = (math.sin(omega * r0) / omega, math.cos(omega * r0))
    matched = MatchedCoefficients(
        critical=schedule.critical, lam=schedule.lam,
        c1=_match_at_r0(schedule, *vals1), c2=_match_at_r0(schedule, *vals2),
    )

    solution = ClassicalSolution(schedule, t_max, tol, sol.sol, matched, np.empty(0))
    ts = np.geomspace(max(r0 * 1e-3, 1e-6), t_max, 200)
    z1, d1, z2, d2 = solution.eval(ts)
    samples = np.rec.fromarrays(
        [ts, z1, d1, z2, d2, z1 * d2 - z2 * d1],
        names=["t", "zeta1", "dzeta1", "zeta2", "dzeta2", "wronskian"],
    )
    solution.samples = samples
    return solution


# ---------------------------------------------------------------------------
# asymptotic regime fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticsFit:
    """Result of the regime fit over a window.

    ``regime`` is ``critical`` (sqrt(t) log t growth wins), ``free``
    (fitted lambda at zero), or ``noncritical``; ``log_coefficient`` is the
    coefficient of sqrt(t) log t in the critical branch, meaningful when
    critical; ``dominant_exponent`` is 1 - lambda.
    """

    regime: str
    lam: float
    dominant_exponent: float
    log_coefficient: float
    residual_critical: float
    residual_noncritical: float
    window: tuple


def _lstsq_residual(basis: np.ndarray, y: np.ndarray):
    coeff, res, _, _ = np.linalg.lstsq(basis, y, rcond=None)
    fit = basis @ coeff
    rel = float(np.linalg.norm(fit - y) / np.linalg.norm(y))
    return coeff, rel


def fit_asymptotics(solution: ClassicalSolution, window: tuple,
                    n_samples: int = 120) -> AsymptoticsFit:
    """Fit zeta2 samples over [t_lo, t_hi] against both asymptotic models.

    The non-critical model a t^(1-lam) + b t^lam is fitted with lambda free
    by projecting out the linear coefficients and minimizing the residual
    over lambda in [0, 1/2); the critical model uses the fixed basis
    sqrt(t), sqrt(t) log t. The regime with the smaller relative residual
    wins, ``free`` being the lambda -> 0 boundary of the non-critical model.
    """
    t_lo, t_hi = window
    r0 = solution.schedule.r0
    e2 = math.e**2
    if t_lo < e2 * r0 or t_hi < e2 * t_lo:
        raise WindowTooNarrow(
            f"need t_lo >= e^2 r0 and t_hi >= e^2 t_lo, got ({t_lo}, {t_hi})"
        )
    if t_hi > solution.t_max:
        raise ValueError("window exceeds the solved horizon")

    ts = np.geomspace(t_lo, t_hi, n_samples)
    _, _, z2, _ = solution.eval(ts)

    crit_basis = np.column_stack([np.sqrt(ts), np.sqrt(ts) * np.log(ts)])
    crit_coeff, crit_res = _lstsq_residual(crit_basis, z2)

    def noncrit_res(lam):
        basis = np.column_stack([ts ** (1.0 - lam), ts**lam])
        return _lstsq_residual(basis, z2)[1]

    opt = minimize_scalar(noncrit_res, bounds=(0.0, 0.5 - 1e-9), method="bounded",
                          options={"xatol": 1e-12})
    lam_hat = float(opt.x)
    noncrit_coeff, noncrit_r = _lstsq_residual(
        np.column_stack([ts ** (1.0 - lam_hat), ts**lam_hat]), z2
    )

    if crit_res < noncrit_r:
        return AsymptoticsFit(
            regime="critical", lam=0.5, dominant_exponent=0.5,
            log_coefficient=float(crit_coeff[1]),
            residual_critical=crit_res, residual_noncritical=noncrit_r,
            window=(t_lo, t_hi),
        )
    regime = "free" if lam_hat < 1e-6 else "noncritical"
    return AsymptoticsFit(
        regime=regime, lam=lam_hat, dominant_exponent=1.0 - lam_hat,
        log_coefficient=float("nan"),
        residual_critical=crit_res, residual_noncritical=noncrit_r,
        window=(t_lo, t_hi),
    )


def classical_trajectory(solution: ClassicalSolution, state: TrajectoryState, t):
    """(x(t), p(t)) = (zeta1 x0 + zeta2 p0 / m, zeta1' x0 + zeta2' p0) for m = mass."""
    t = np.asarray(t, dtype=float)
    if np.any(t > solution.t_max):
        raise ValueError("t exceeds the solved horizon")
    z1, d1, z2, d2 = solution.eval(t)
    m = solution.schedule.mass
    x = z1 * state.x0 + z2 * state.p0 / m
    p = m * (d1 * state.x0 + d2 * state.p0 / m)
    return x, p


def zeta_csv_rows(solution: ClassicalSolution):
    """(t, zeta1, zeta2, wronskian) rows from the solution's sample table."""
    s = solution.samples
    return [(float(r.t), float(r.zeta1), float(r.zeta2), float(r.wronskian)) for r in s]
