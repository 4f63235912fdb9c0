"""Decay fits, construction verification, eigenvalue detection and energy scans.

Along a phase-locked solution ``(log R)' ~ -B x^-g`` with ``g = (p-1) gamma``:

* critical ``g = 1``: ``log R = log A - B log x`` (power-law decay);
* subcritical ``g < 1``: ``log R = log A - B x^(1-g) / (1-g)`` (stretched exponential).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import NotFound, StepFailure, WindowTooShort
from .integrator import (
    ShootingResult,
    Trajectory,
    integrate_coupled_construction,
    integrate_direct,
    integrate_prufer,
    shoot_psi_initial,
)
from .model import PotentialModel
from .potential import ConstructionPlan, PotentialSpec, xi_effective_offset, xi_effective_weight

CRITICAL = "critical"
SUBCRITICAL = "subcritical"


def wrap_angle(a):
    """Representative in ``(-pi, pi]``."""
    return -((-np.asarray(a) + math.pi) % (2 * math.pi) - math.pi)


@dataclass
class AsymptoticsFit:
    regime: str
    B: float
    A: float
    theta_inf: float
    psi_inf: float | None
    residual: float
    window: tuple[float, float]
    n_points: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def regime_of(gamma_power: float) -> str:
    return CRITICAL if abs(gamma_power - 1.0) < 1e-12 else SUBCRITICAL


def decay_variable(x, gamma_power: float) -> np.ndarray:
    """``log x`` in the critical case, ``x^(1-g) / (1-g)`` otherwise."""
    x = np.asarray(x, dtype=np.float64)
    if regime_of(gamma_power) == CRITICAL:
        return np.log(x)
    return x ** (1.0 - gamma_power) / (1.0 - gamma_power)


def default_window(x) -> tuple[float, float]:
    """Last two decades of the run, minus its final 5%."""
    X = float(np.max(x))
    return X / 100.0, 0.95 * X


def _window_mask(x, window, min_decades):
    x = np.asarray(x)
    lo, hi = window
    if float(np.min(x)) > lo * (1 + 1e-12) or lo <= 0 or hi <= lo:
        raise WindowTooShort(f"trajectory covers [{np.min(x):.4g}, {np.max(x):.4g}], "
                             f"window needs [{lo:.4g}, {hi:.4g}]")
    if math.log10(np.max(x) / lo) < min_decades - 1e-9:
        raise WindowTooShort(f"window spans fewer than {min_decades} decades")
    mask = (x >= lo) & (x <= hi)
    if mask.sum() < 3:
        raise WindowTooShort("fewer than 3 samples in the fit window")
    return mask


def regress_log_amplitude(x, logR, gamma_power: float, window=None,
                          min_decades: float = 2.0) -> tuple[float, float, float, np.ndarray]:
    """Least squares ``log R = c - B s(x)``; returns ``(B, c, rms, mask)``."""
    x = np.asarray(x, dtype=np.float64)
    logR = np.asarray(logR, dtype=np.float64)
    window = default_window(x) if window is None else window
    mask = _window_mask(x, window, min_decades)
    s = decay_variable(x[mask], gamma_power)
    M = np.column_stack([-s, np.ones_like(s)])
    coef, *_ = np.linalg.lstsq(M, logR[mask], rcond=None)
    rms = float(np.sqrt(np.mean((M @ coef - logR[mask]) ** 2)))
    return float(coef[0]), float(coef[1]), rms, mask


def fit_decay(traj: Trajectory, spec: PotentialSpec, window=None,
              gamma_power: float | None = None) -> AsymptoticsFit:
    """Fit the decay law of ``log R`` on the default (or given) window.

    ``theta_inf`` is the window mean of ``theta``; ``psi_inf`` is the terminal
    value of ``psi`` when the trajectory carries one.
    """
    g = float(spec.gamma * (spec.p - 1)) if gamma_power is None else gamma_power
    B, c, rms, mask = regress_log_amplitude(traj.x, traj.logR, g, window)
    xs = traj.x[mask]
    psi_inf = None
    if traj.psi is not None:
        psi_inf = float(traj.psi[np.argmax(traj.x)])
    return AsymptoticsFit(regime_of(g), B, math.exp(c), float(np.mean(traj.theta[mask])), psi_inf,
                          rms, (float(xs.min()), float(xs.max())), int(mask.sum()))


def regime_comparison(traj: Trajectory, spec: PotentialSpec, window=None) -> dict:
    """RMS residuals of the power-law and stretched-exponential regressions."""
    g = float(spec.gamma * (spec.p - 1))
    B_pow, _, r_pow, _ = regress_log_amplitude(traj.x, traj.logR, 1.0, window)
    out = {"log_x": {"B": B_pow, "residual": r_pow}}
    if regime_of(g) == SUBCRITICAL:
        B_str, _, r_str, _ = regress_log_amplitude(traj.x, traj.logR, g, window)
        out["stretched"] = {"B": B_str, "residual": r_str, "exponent": 1.0 - g}
    return out


@dataclass
class EnvelopeFit:
    """``psi(x) ~ psi_lim + C x^q`` over the last decades of a run."""

    exponent: float
    C: float
    psi_limit: float
    expected: float
    window: tuple[float, float]

    def within(self, tolerance: float) -> bool:
        return abs(self.exponent - self.expected) <= tolerance


def psi_envelope(traj: Trajectory, spec: PotentialSpec, decades: float = 3.0) -> EnvelopeFit:
    """Three-parameter fit of the approach of ``psi`` to its limit."""
    if traj.psi is None:
        raise ValueError("trajectory carries no psi samples")
    x, psi = traj.x, traj.psi
    X = float(np.max(x))
    lo = X / 10 ** decades
    if float(np.min(x)) > lo:
        raise WindowTooShort(f"psi envelope needs {decades} decades")
    mask = x >= lo
    expected = float(1 - spec.p * spec.gamma)
    psi_end = float(psi[np.argmax(x)])

    def model(xx, a, c, q):
        return a + c * xx ** q

    p0 = [psi_end, (float(psi[mask][0]) - psi_end) * lo ** -expected, expected]
    (a, c, q), _ = curve_fit(model, x[mask], psi[mask], p0=p0, maxfev=20000)
    return EnvelopeFit(float(q), float(c), float(a), expected, (lo, X))


def slope_residual_exponent(traj: Trajectory, plan: ConstructionPlan, window=None) -> float:
    """Log-log slope of ``|(log R)' + |Lambda| x^-g| * x^g`` on secant slopes.

    Secants between consecutive samples of a geometric mesh average out the
    non-resonant oscillations; a negative value means the residual decays
    faster than ``x^-g``.
    """
    g = plan.gamma_power
    x, lr = traj.x, traj.logR
    order = np.argsort(x)
    x, lr = x[order], lr[order]
    xm = np.sqrt(x[1:] * x[:-1])
    sec = np.diff(lr) / np.diff(x)
    if abs(g - 1.0) < 1e-12:
        pred = -plan.Lambda_abs * np.log(x[1:] / x[:-1]) / np.diff(x)
    else:
        pred = -plan.Lambda_abs * np.diff(x ** (1 - g)) / (1 - g) / np.diff(x)
    rel = np.abs(sec - pred) * xm ** g
    window = default_window(x) if window is None else window
    mask = (xm >= window[0]) & (xm <= window[1]) & (rel > 0)
    if mask.sum() < 3:
        raise WindowTooShort("not enough secants in the window")
    return float(np.polyfit(np.log(xm[mask]), np.log(rel[mask]), 1)[0])


def verify_construction(spec: PotentialSpec, plan: ConstructionPlan, traj: Trajectory,
                        psi_tol: float = 1e-3, B_tol: float = 0.05,
                        envelope_tol: float | None = None) -> dict:
    """Report with independently evaluated verdicts."""
    fit = fit_decay(traj, spec)
    psi_err = float(wrap_angle(fit.psi_inf - plan.target_psi))
    ratio = fit.B / plan.Lambda_abs
    slope_exp = slope_residual_exponent(traj, plan)
    verdicts = {
        "psi_locked": bool(abs(psi_err) < psi_tol),
        "B_ratio": bool(abs(ratio - 1.0) <= B_tol),
        "slope_residual": bool(slope_exp < 0.0),
    }
    report = {
        "psi_inf": fit.psi_inf,
        "target_psi": plan.target_psi,
        "psi_error": psi_err,
        "B": fit.B,
        "Lambda_abs": plan.Lambda_abs,
        "ratio": ratio,
        "residual": fit.residual,
        "regime": fit.regime,
        "window": list(fit.window),
        "slope_residual_exponent": slope_exp,
    }
    if envelope_tol is not None:
        env = psi_envelope(traj, spec)
        report["psi_envelope_exponent"] = env.exponent
        report["psi_envelope_expected"] = env.expected
        verdicts["psi_envelope"] = bool(env.within(envelope_tol))
    report["verdicts"] = verdicts
    report["all_pass"] = bool(all(verdicts.values()))
    return report


@dataclass
class EigenvalueSearchConfig:
    """``boundary_angle_grid`` sets the resolution used to report the angle on
    ``[0, pi)``; ``B_threshold`` is the critical-case L^2 bound."""

    boundary_angle_grid: int = 360
    B_threshold: float = 0.5
    x_max: float = 1e4
    tol: float = 1e-10
    n_samples: int = 400

    def __post_init__(self):
        if self.B_threshold != 0.5:
            raise ValueError("critical-case threshold is exactly 1/2")
        if self.boundary_angle_grid < 1:
            raise ValueError("boundary_angle_grid must be positive")


@dataclass
class EigenvalueResult:
    theta_boundary: float
    grid_angle: float
    fit: AsymptoticsFit
    u0: float
    du0: float
    trajectory: Trajectory = field(repr=False)


def _boundary_angle(E, x_end, theta_end):
    # V vanishes below x0, so theta keeps its value down to 0
    eta = 2.0 * math.sqrt(E)
    u0 = math.sin(theta_end)
    du0 = 0.5 * eta * math.cos(theta_end)
    return math.atan2(u0, du0) % math.pi, u0, du0


def detect_embedded_eigenvalue(spec: PotentialSpec, plan: ConstructionPlan,
                               config: EigenvalueSearchConfig | None = None,
                               shot: ShootingResult | None = None) -> EigenvalueResult:
    """Integrate the decaying branch backward from ``x_max`` and read the boundary angle.

    Frozen potentials start from ``theta(X)`` on the decaying branch
    ``psi = target``.  Phase-locked constructions start from the terminal state
    of the shot forward run and integrate the coupled system backward.
    """
    cfg = config or EigenvalueSearchConfig()
    model = PotentialModel.from_spec(spec, plan)
    E = float(spec.E)
    X = cfg.x_max
    back = np.geomspace(X, spec.x0, cfg.n_samples)
    dynamic = xi_effective_weight(spec, plan) != 0
    if dynamic:
        if shot is None:
            fwd = np.geomspace(spec.x0, X, cfg.n_samples)
            shot = shoot_psi_initial(model, E, fwd, plan.target_psi, ode_tol=cfg.tol)
        tr = shot.trajectory
        traj = integrate_coupled_construction(model, E, float(tr.theta[-1]), float(tr.xi[-1]),
                                              back, tol=cfg.tol)
    else:
        theta_X = 0.5 * (plan.target_psi - xi_effective_offset(spec, plan))
        traj = integrate_prufer(model, E, theta_X, 0.0, back, tol=cfg.tol)
    fit = fit_decay(traj, spec)
    theta_b, u0, du0 = _boundary_angle(E, spec.x0, float(traj.theta[-1]))
    step = math.pi / cfg.boundary_angle_grid
    grid_angle = (round(theta_b / step) % cfg.boundary_angle_grid) * step
    if fit.regime == CRITICAL and not fit.B > cfg.B_threshold:
        raise NotFound(f"decay exponent B={fit.B:.4g} <= 1/2: solution not square-integrable",
                       fit)
    if fit.regime == SUBCRITICAL and not fit.B > 0:
        raise NotFound(f"decay constant B={fit.B:.4g} is not positive", fit)
    return EigenvalueResult(theta_b, grid_angle, fit, u0, du0, traj)


def direct_decay_oracle(spec: PotentialSpec, plan: ConstructionPlan, x_max: float = 1e4,
                        tol: float = 1e-10, n_samples: int = 400) -> float:
    """Decay constant from backward ``(u, u')`` integration of a frozen potential.

    Regresses ``log sqrt(u^2 + u'^2)`` on the default window; shares no code
    with the Pruefer path beyond the potential evaluator.
    """
    if xi_effective_weight(spec, plan) != 0:
        raise ValueError("the direct oracle needs a frozen potential")
    model = PotentialModel.from_spec(spec, plan)
    E = float(spec.E)
    eta = 2.0 * math.sqrt(E)
    theta_X = 0.5 * (plan.target_psi - xi_effective_offset(spec, plan))
    ph = 0.5 * eta * x_max + theta_X
    mesh = np.geomspace(x_max, spec.x0, n_samples)
    arr = integrate_direct(model, E, math.sin(ph), 0.5 * eta * math.cos(ph), mesh, tol=tol)
    amp = 0.5 * np.log(arr[:, 1] ** 2 + arr[:, 2] ** 2)
    g = float(spec.gamma * (spec.p - 1))
    B, _, _, _ = regress_log_amplitude(arr[:, 0], amp, g)
    return B


@dataclass(frozen=True)
class ScanRow:
    E: float
    sup_logR: float
    status: str


def scan_energies(model: PotentialModel, E_grid, x_range, tol: float = 1e-9,
                  theta0: float = 0.0, logR0: float = 0.0, workers: int = 1) -> list[ScanRow]:
    """``sup log R`` over accepted steps on ``x_range`` for each energy; failures are recorded."""
    x_lo, x_hi = map(float, x_range)
    mesh = np.array([x_lo, x_hi])

    def one(E):
        E = float(E)
        if E <= 0:
            return ScanRow(E, float("nan"), "invalid-energy")
        try:
            tr = integrate_prufer(model, E, theta0, logR0, mesh, tol=tol)
        except StepFailure as exc:
            return ScanRow(E, float("nan"), f"step-failure: {exc}")
        return ScanRow(E, tr.sup_logR, "ok")

    grid = [float(e) for e in E_grid]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, grid))
    return [one(E) for E in grid]


def spike_locations(rows: list[ScanRow], factor: float = 3.0) -> list[float]:
    """Energies of local maxima of ``sup log R`` exceeding ``factor`` times the grid median.

    Resonance tails stay above the median over a finite range of ``x``, so
    only the peaks themselves count as spikes.
    """
    ok = [r for r in rows if r.status == "ok"]
    if not ok:
        return []
    vals = np.array([r.sup_logR for r in ok])
    med = float(np.median(vals))
    out = []
    for i, r in enumerate(ok):
        left = vals[i - 1] if i > 0 else -np.inf
        right = vals[i + 1] if i + 1 < len(ok) else -np.inf
        if vals[i] >= left and vals[i] >= right and vals[i] > factor * med:
            out.append(r.E)
    return out


def sup_growth(model: PotentialModel, E: float, decades=((1e2, 1e3), (1e3, 1e4)),
               theta0: float = 0.0, tol: float = 1e-10) -> tuple[float, float]:
    """``sup log R`` over two consecutive ranges of one forward run from ``x0``."""
    (a, b), (c, d) = decades
    mesh = np.array(sorted({model.x0 if model.x0 > 0 else 1.0, a, b, c, d}))
    tr = integrate_prufer(model, E, theta0, 0.0, mesh, tol=tol)
    return tr.sup_between(a, b), tr.sup_between(c, d)
