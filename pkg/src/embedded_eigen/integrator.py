"""Adaptive integration of the Pruefer system, the Schroedinger equation and the
phase-locking construction.

Pruefer variables (parametrized by ``eta = 2 sqrt(E)``):

    u  = R sin(eta x / 2 + theta),   2 u' / eta = R cos(eta x / 2 + theta)
    theta'  = (V / eta) (cos(eta x + 2 theta) - 1)
    log R'  = (V / eta)  sin(eta x + 2 theta)

Construction runs add ``xi' = -2 Re(Lambda x^-g e^{i psi})`` with
``psi = xi_eff + 2 theta`` and evaluate ``V`` with the live ``xi``.

The stepper is a Dormand-Prince 5(4) pair with PI control, local
extrapolation, error per unit step, and a hard step cap of a fraction of the
shortest oscillation period.  ``theta`` is integrated as a continuous lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import BracketFailure, NonConvergence, StepFailure
from .model import PotentialModel, potential_value

PRUFER = 0
DIRECT = 1

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_PHASE_JUMP = 2
STATUS_MAX_STEPS = 3

# Dormand-Prince 5(4)
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)


@njit(cache=True, nogil=True)
def _rhs(kind, coupled, x, y, P, C, eta, out):
    Lre, Lim, gpow, xw, xoff = C
    xi = y[2]
    V = potential_value(x, xi, P)
    if kind == 0:
        ph = eta * x + 2.0 * y[0]
        s = V / eta
        out[0] = s * (math.cos(ph) - 1.0)
        out[1] = s * math.sin(ph)
        if coupled:
            psi = xw * xi + xoff + 2.0 * y[0]
            out[2] = -2.0 * (Lre * math.cos(psi) - Lim * math.sin(psi)) * x ** (-gpow)
        else:
            out[2] = 0.0
    else:
        E = 0.25 * eta * eta
        out[0] = y[1]
        out[1] = (V - E) * y[0]
        if coupled:
            # e^{2 i theta} from (2u'/eta + i u)^2 e^{-i eta x} / R^2
            a = 2.0 * y[1] / eta
            b = y[0]
            r2 = a * a + b * b
            re2 = (a * a - b * b) / r2
            im2 = 2.0 * a * b / r2
            c = math.cos(eta * x)
            s_ = math.sin(eta * x)
            e2re = re2 * c + im2 * s_
            e2im = im2 * c - re2 * s_
            base = xw * xi + xoff
            cre = math.cos(base) * e2re - math.sin(base) * e2im
            cim = math.sin(base) * e2re + math.cos(base) * e2im
            out[2] = -2.0 * (Lre * cre - Lim * cim) * x ** (-gpow)
        else:
            out[2] = 0.0


@njit(cache=True, nogil=True)
def _drive(kind, coupled, y0, x_start, x_out, P, C, eta, tol, hcap, max_steps):
    n_out = x_out.shape[0]
    Y = np.empty((n_out, 3))
    seg_max = np.full(n_out, -np.inf)
    y = y0.copy()
    x = x_start
    direction = 1.0
    if n_out > 0 and x_out[n_out - 1] < x_start:
        direction = -1.0
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    k5 = np.empty(3)
    k6 = np.empty(3)
    k7 = np.empty(3)
    yt = np.empty(3)
    ynew = np.empty(3)
    err = np.empty(3)
    _rhs(kind, coupled, x, y, P, C, eta, k1)
    h = min(hcap, 0.01 * hcap + 1e-3)
    err_old = 1e-4
    n_acc = 0
    n_rej = 0
    status = 0
    sup = -np.inf
    j = 0
    # samples that coincide with the start point
    while j < n_out and x_out[j] == x_start:
        Y[j, :] = y
        seg_max[j] = y[1] if kind == 0 else 0.0
        j += 1
    while j < n_out:
        target = x_out[j]
        remaining = (target - x) * direction
        last = False
        hs = h
        if hs >= remaining:
            hs = remaining
            last = True
        hmin = 1e-13 * max(1.0, abs(x))
        if hs < hmin and not last:
            status = 1
            break
        hd = hs * direction
        for i in range(3):
            yt[i] = y[i] + hd * _A21 * k1[i]
        _rhs(kind, coupled, x + _C2 * hd, yt, P, C, eta, k2)
        for i in range(3):
            yt[i] = y[i] + hd * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(kind, coupled, x + _C3 * hd, yt, P, C, eta, k3)
        for i in range(3):
            yt[i] = y[i] + hd * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(kind, coupled, x + _C4 * hd, yt, P, C, eta, k4)
        for i in range(3):
            yt[i] = y[i] + hd * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(kind, coupled, x + _C5 * hd, yt, P, C, eta, k5)
        for i in range(3):
            yt[i] = y[i] + hd * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i]
                                 + _A65 * k5[i])
        _rhs(kind, coupled, x + hd, yt, P, C, eta, k6)
        for i in range(3):
            ynew[i] = y[i] + hd * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i]
                                   + _B6 * k6[i])
        _rhs(kind, coupled, x + hd, ynew, P, C, eta, k7)
        for i in range(3):
            err[i] = hd * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                           + _E6 * k6[i] + _E7 * k7[i])
        # error per unit step
        if kind == 0:
            en = max(abs(err[0]), abs(err[1]), abs(err[2]))
        else:
            amp = math.sqrt(y[0] * y[0] + (2.0 * y[1] / eta) ** 2)
            en = max(abs(err[0]), abs(2.0 * err[1] / eta)) / max(amp, 1e-300)
            en = max(en, abs(err[2]))
        en = en / (tol * hs)
        if en <= 1.0:
            if kind == 0 and abs(ynew[0] - y[0]) > math.pi:
                status = 2
                break
            x = x + hd
            if last:
                x = target
            for i in range(3):
                y[i] = ynew[i]
                k1[i] = k7[i]
            n_acc += 1
            val = y[1] if kind == 0 else 0.5 * math.log(y[0] * y[0] + (2.0 * y[1] / eta) ** 2)
            if val > seg_max[j]:
                seg_max[j] = val
            if val > sup:
                sup = val
            fac = 0.9 * max(en, 1e-10) ** (-0.22) * err_old ** 0.04
            fac = min(5.0, max(0.2, fac))
            err_old = max(en, 1e-4)
            hnew = min(hcap, hs * fac)
            if last:
                Y[j, :] = y
                j += 1
                # keep the controller's proposal instead of the clipped step
                h = max(h, hnew) if hs < h else hnew
                h = min(h, hcap)
            else:
                h = hnew
            if n_acc + n_rej > max_steps:
                status = 3
                break
        else:
            n_rej += 1
            fac = max(0.2, 0.9 * en ** (-0.25))
            h = hs * fac
    return Y, seg_max, j, n_acc, n_rej, status, x, sup


@dataclass(frozen=True)
class PruferState:
    x: float
    theta: float
    logR: float
    xi: float | None = None


@dataclass(frozen=True)
class SolutionState:
    x: float
    u: float
    du: float


@dataclass
class Trajectory:
    """Pruefer samples on an output mesh plus step diagnostics."""

    E: float
    eta: float
    x: np.ndarray
    theta: np.ndarray
    logR: np.ndarray
    xi: np.ndarray | None = None
    psi: np.ndarray | None = None
    seg_max: np.ndarray | None = None
    sup_logR: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def samples(self) -> list[PruferState]:
        xi = self.xi if self.xi is not None else [None] * len(self.x)
        return [PruferState(float(a), float(b), float(c), None if d is None else float(d))
                for a, b, c, d in zip(self.x, self.theta, self.logR, xi)]

    def sup_between(self, lo: float, hi: float) -> float:
        """Max of log R over accepted steps with ``lo < x <= hi`` (segment resolution)."""
        if self.seg_max is None:
            raise ValueError("no per-segment maxima recorded")
        xs = self.x
        if xs[0] <= xs[-1]:
            mask = (xs > lo) & (xs <= hi)
        else:
            mask = (xs >= lo) & (xs < hi)
        vals = np.where(mask, np.maximum(self.seg_max, self.logR), -np.inf)
        return float(vals.max())

    def amplitude(self) -> np.ndarray:
        return np.exp(self.logR)

    def to_solution(self) -> tuple[np.ndarray, np.ndarray]:
        """``(u, u')`` reconstructed from the Pruefer samples."""
        R = np.exp(self.logR)
        ph = 0.5 * self.eta * self.x + self.theta
        return R * np.sin(ph), 0.5 * self.eta * R * np.cos(ph)


def _check_mesh(x_out) -> np.ndarray:
    x_out = np.asarray(x_out, dtype=np.float64)
    if x_out.ndim != 1 or x_out.size == 0:
        raise ValueError("output mesh must be a nonempty 1-D array")
    d = np.diff(x_out)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("output mesh must be strictly monotone")
    return x_out


def _step_cap(model: PotentialModel, eta: float, cap_fraction: float) -> float:
    return cap_fraction * 2.0 * math.pi / model.max_frequency(eta)


def _raise_status(status: int, x: float):
    if status == STATUS_UNDERFLOW:
        raise StepFailure(f"step size underflow at x={x:.6g}")
    if status == STATUS_PHASE_JUMP:
        raise StepFailure(f"Pruefer phase jumped by more than pi at x={x:.6g}")
    if status == STATUS_MAX_STEPS:
        raise StepFailure(f"step budget exhausted at x={x:.6g}")


def _as_model(potential) -> PotentialModel:
    if isinstance(potential, PotentialModel):
        return potential
    raise TypeError("compiled integrators need a PotentialModel; use integrate_callable for "
                    "arbitrary Python callables")


def _run(kind, coupled, model, eta, y0, x_start, x_out, tol, cap_fraction, max_steps):
    hcap = _step_cap(model, eta, cap_fraction)
    Y, seg, n, nacc, nrej, status, xend, sup = _drive(
        kind, coupled, np.asarray(y0, dtype=np.float64), float(x_start), x_out,
        model.params, model.coupling, float(eta), float(tol), hcap, int(max_steps))
    _raise_status(status, xend)
    diag = {"accepted": int(nacc), "rejected": int(nrej), "step_cap": hcap, "tol": tol}
    return Y, seg, sup, diag


def integrate_prufer(potential, E: float, theta0: float, logR0: float, x_out, tol: float = 1e-10,
                     x_start: float | None = None, xi: float = 0.0, cap_fraction: float = 1 / 20,
                     max_steps: int = 200_000_000) -> Trajectory:
    """Integrate ``(theta, log R)`` from ``x_start`` (default ``x_out[0]``) over the mesh."""
    if E <= 0:
        raise ValueError("E must be positive")
    model = _as_model(potential)
    x_out = _check_mesh(x_out)
    eta = 2.0 * math.sqrt(E)
    xs = float(x_out[0]) if x_start is None else float(x_start)
    Y, seg, sup, diag = _run(PRUFER, False, model, eta, [theta0, logR0, xi], xs, x_out, tol,
                             cap_fraction, max_steps)
    return Trajectory(float(E), eta, x_out, Y[:, 0].copy(), Y[:, 1].copy(), seg_max=seg,
                      sup_logR=max(float(sup), float(logR0)), diagnostics=diag)


def integrate_direct(potential, E: float, u0: float, du0: float, x_out, tol: float = 1e-10,
                     x_start: float | None = None, xi: float = 0.0, cap_fraction: float = 1 / 20,
                     max_steps: int = 200_000_000) -> np.ndarray:
    """Integrate ``-u'' + V u = E u``; returns an ``(n, 3)`` array of ``x, u, u'``."""
    if (u0, du0) == (0, 0):
        raise ValueError("trivial initial data")
    model = _as_model(potential)
    x_out = _check_mesh(x_out)
    eta = 2.0 * math.sqrt(E) if E > 0 else 1.0
    xs = float(x_out[0]) if x_start is None else float(x_start)
    Y, _, _, _ = _run(DIRECT, False, model, eta, [u0, du0, xi], xs, x_out, tol, cap_fraction,
                      max_steps)
    return np.column_stack([x_out, Y[:, 0], Y[:, 1]])


def solution_states(arr: np.ndarray) -> list[SolutionState]:
    return [SolutionState(float(a), float(b), float(c)) for a, b, c in arr]


def prufer_from_solution(x, u, du, eta):
    """``(theta, log R)`` from ``(u, u')`` (theta reduced to (-pi, pi])."""
    a = 2.0 * np.asarray(du) / eta
    R = np.hypot(u, a)
    theta = np.arctan2(u, a) - 0.5 * eta * np.asarray(x)
    theta = np.angle(np.exp(1j * theta))
    return theta, np.log(R)


def integrate_coupled_construction(model: PotentialModel, E: float, theta0: float, xi0: float,
                                   x_out, tol: float = 1e-10, logR0: float = 0.0,
                                   x_start: float | None = None, cap_fraction: float = 1 / 20,
                                   max_steps: int = 200_000_000) -> Trajectory:
    """Joint ``(theta, log R, xi)`` trajectory with the phase-locking feedback."""
    x_out = _check_mesh(x_out)
    eta = 2.0 * math.sqrt(E)
    xs = float(x_out[0]) if x_start is None else float(x_start)
    coupled = model.Lambda != 0
    Y, seg, sup, diag = _run(PRUFER, coupled, model, eta, [theta0, logR0, xi0], xs, x_out, tol,
                             cap_fraction, max_steps)
    theta, logR, xi = Y[:, 0].copy(), Y[:, 1].copy(), Y[:, 2].copy()
    psi = model.xi_weight * xi + model.xi_offset + 2.0 * theta
    diag["coupled"] = bool(coupled)
    return Trajectory(float(E), eta, x_out, theta, logR, xi=xi, psi=psi, seg_max=seg,
                      sup_logR=max(float(sup), float(logR0)), diagnostics=diag)


def integrate_direct_coupled(model: PotentialModel, E: float, u0: float, du0: float, xi0: float,
                             x_out, tol: float = 1e-10, x_start: float | None = None,
                             cap_fraction: float = 1 / 20) -> np.ndarray:
    """Direct equation with the same phase-locking feedback; columns ``x, u, u', xi``."""
    x_out = _check_mesh(x_out)
    eta = 2.0 * math.sqrt(E)
    xs = float(x_out[0]) if x_start is None else float(x_start)
    Y, _, _, _ = _run(DIRECT, model.Lambda != 0, model, eta, [u0, du0, xi0], xs, x_out, tol,
                      cap_fraction, 200_000_000)
    return np.column_stack([x_out, Y])


def psi_limit_check(traj: Trajectory, tol: float) -> float:
    """Spread of ``psi`` over the last decade of the mesh; raises NonConvergence above ``tol``."""
    if traj.psi is None:
        raise ValueError("trajectory carries no psi samples")
    x_end = traj.x[-1]
    mask = traj.x >= x_end / 10
    spread = float(np.ptp(traj.psi[mask]))
    if spread > tol:
        raise NonConvergence(f"psi varies by {spread:.3g} over the last decade (tol {tol:.3g})")
    return spread


def integrate_callable(V, E: float, theta0: float, logR0: float, x_out, tol: float = 1e-10,
                       cap: float | None = None) -> Trajectory:
    """Pruefer integration for an arbitrary Python callable ``V(x)`` (slow, uncompiled)."""
    from scipy.integrate import solve_ivp

    x_out = _check_mesh(x_out)
    eta = 2.0 * math.sqrt(E)

    def rhs(x, y):
        ph = eta * x + 2.0 * y[0]
        s = V(x) / eta
        return [s * (math.cos(ph) - 1.0), s * math.sin(ph)]

    max_step = cap if cap is not None else 2 * math.pi / eta / 20
    sol = solve_ivp(rhs, (x_out[0], x_out[-1]), [theta0, logR0], method="DOP853", t_eval=x_out,
                    rtol=tol, atol=tol, max_step=max_step)
    if not sol.success:
        raise StepFailure(sol.message)
    return Trajectory(float(E), eta, x_out, sol.y[0], sol.y[1],
                      sup_logR=float(np.max(sol.y[1])), diagnostics={"nfev": sol.nfev})


@dataclass
class ShootingResult:
    """Outcome of the circle search for the initial aggregate phase."""

    xi0: float
    psi_limit: float
    target: float
    residual: float
    mesh_xi: np.ndarray
    mesh_psi: np.ndarray
    evaluations: int
    trajectory: Trajectory | None = None

    @property
    def max_gap(self) -> float:
        """Largest gap between the realized limits of the mesh runs on the circle."""
        v = np.sort(np.mod(self.mesh_psi, 2 * math.pi))
        gaps = np.diff(np.concatenate([v, [v[0] + 2 * math.pi]]))
        return float(gaps.max())


def _nearest_level(value: float, target: float) -> float:
    return target + 2 * math.pi * round((value - target) / (2 * math.pi))


def shoot_psi_initial(model: PotentialModel, E: float, x_out, target: float, tol: float = 1e-4,
                      theta0: float = 0.0, ode_tol: float = 1e-10, n_mesh: int = 16,
                      keep_trajectory: bool = True) -> ShootingResult:
    """Initial ``xi(x_0)`` whose realized ``psi(X)`` hits ``target`` modulo ``2 pi``.

    The limit map ``xi_0 -> psi(X)`` is lifted along an equispaced circle mesh;
    because it has degree one, the lifted values sweep a full turn and some
    level ``target + 2 pi k`` is crossed between neighbours.  That bracket is
    refined with Brent's method.
    """
    from scipy.optimize import brentq

    x_out = _check_mesh(x_out)
    if model.Lambda == 0:
        raise ValueError("shooting needs a nonzero resonant coefficient")
    count = [0]
    cache = {}

    def run(xi0):
        count[0] += 1
        tr = integrate_coupled_construction(model, E, theta0, xi0, x_out, tol=ode_tol)
        cache[xi0] = tr
        return float(tr.psi[-1])

    mesh = np.linspace(0.0, 2 * math.pi, n_mesh + 1)
    raw = np.array([run(float(v)) for v in mesh[:-1]])
    # the endpoint repeats the first run shifted by the map's degree
    lifted = np.unwrap(np.concatenate([raw, [raw[0]]]))
    degree = round((lifted[-1] - lifted[0]) / (2 * math.pi))
    lifted[-1] = lifted[0] + 2 * math.pi * degree
    if degree == 0:
        raise BracketFailure("lifted limit map has degree 0 on the initial mesh")

    best = None
    for i in range(n_mesh):
        lo, hi = lifted[i], lifted[i + 1]
        level = _nearest_level(0.5 * (lo + hi), target)
        for lv in (level - 2 * math.pi, level, level + 2 * math.pi):
            a, b = lo - lv, hi - lv
            if a == 0.0:
                best = (i, lv, True)
                break
            if a * b < 0:
                best = (i, lv, False)
                break
        if best is not None:
            break
    if best is None:
        raise BracketFailure("no sign change of the shooting residual on the circle mesh")
    i, level, exact = best
    a_xi, b_xi = float(mesh[i]), float(mesh[i + 1])
    if exact:
        xi0 = a_xi
    else:
        mid_ref = 0.5 * (lifted[i] + lifted[i + 1])

        def resid(xi0):
            if xi0 == a_xi:
                return lifted[i] - level
            if xi0 == b_xi:
                return lifted[i + 1] - level
            v = run(xi0)
            v = v + 2 * math.pi * round((mid_ref - v) / (2 * math.pi))
            return v - level

        xi0 = brentq(resid, a_xi, b_xi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    traj = cache.get(xi0)
    if traj is None:
        run(xi0)
        traj = cache[xi0]
    psi = float(traj.psi[-1])
    res = float(np.angle(np.exp(1j * (psi - target))))
    if abs(res) > tol:
        raise NonConvergence(f"shooting residual {res:.3g} exceeds {tol:.3g}")
    return ShootingResult(float(xi0) % (2 * math.pi), psi, target, res, mesh[:-1], raw,
                          count[0], traj if keep_trajectory else None)
