"""Numeric potential model shared by the evaluator and the compiled integrators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .potential import (
    Beta0Table,
    ConstructionPlan,
    PotentialSpec,
    omega_table,
    xi_effective_offset,
    xi_effective_weight,
)


@njit(cache=True, nogil=True)
def omega_value(x, b, xi, phase0, cw, gamma, coef, mpow, npow, S):
    total = 0.0
    K = phase0.shape[0]
    for i in range(coef.shape[0]):
        ph = 0.0
        for k in range(K):
            if S[i, k] != 0:
                ph += S[i, k] * (phase0[k] + cw[k] * xi)
        total += coef[i] * x ** (-npow[i] * gamma) * b ** mpow[i] * math.cos(ph)
    return total


@njit(cache=True, nogil=True)
def beta0_value(x, xi, phase0, cw, gamma, coef, mpow, npow, S, eta, n_iter):
    b = 0.0
    for _ in range(n_iter):
        b = b + eta * omega_value(x, b, xi, phase0, cw, gamma, coef, mpow, npow, S)
    return b


@njit(cache=True, nogil=True)
def potential_value(x, xi, P):
    lam, alpha, phase0, cw, gamma, x0, coef, mpow, npow, S, eta, n_iter = P
    if x < x0:
        return 0.0
    v = 0.0
    if lam.shape[0] > 0:
        xg = x ** (-gamma)
        for k in range(lam.shape[0]):
            v += lam[k] * xg * math.cos(alpha[k] * x + phase0[k] + cw[k] * xi)
    if n_iter > 0:
        v += beta0_value(x, xi, phase0, cw, gamma, coef, mpow, npow, S, eta, n_iter)
    return v


@dataclass(frozen=True)
class PotentialModel:
    """``V(x; xi) = sum lam_k x^-gamma cos(alpha_k x + phase_k + c_k xi) + beta0``, 0 below ``x0``.

    The optional resonant coupling drives ``xi`` in construction runs:
    ``xi' = -2 Re(Lambda x^-gamma_power e^{i psi})`` with
    ``psi = xi_weight * xi + xi_offset + 2 theta``.
    """

    lam: np.ndarray
    alpha: np.ndarray
    phase0: np.ndarray
    cw: np.ndarray
    gamma: float
    x0: float
    beta0: Beta0Table
    beta0_eta: float = 0.0
    Lambda: complex = 0j
    gamma_power: float = 0.0
    xi_weight: float = 0.0
    xi_offset: float = 0.0
    label: str = field(default="", compare=False)

    @classmethod
    def zero(cls, x0: float = 0.0) -> "PotentialModel":
        return cls.cosines([], [], 1.0, x0=x0, label="zero")

    @classmethod
    def cosines(cls, lams, alphas, gamma, phases=None, x0: float = 1.0, label="") -> "PotentialModel":
        lams = np.asarray(lams, dtype=np.float64)
        alphas = np.asarray([float(a) for a in alphas], dtype=np.float64)
        phases = np.zeros_like(lams) if phases is None else np.asarray(phases, dtype=np.float64)
        K = lams.shape[0]
        return cls(lams, alphas, phases, np.zeros(K), float(gamma), float(x0),
                   Beta0Table.empty(K), label=label)

    @classmethod
    def wigner_von_neumann(cls, lam: float = 8.0, alpha: float = 2.0, gamma: float = 1.0,
                           x0: float = 1.0) -> "PotentialModel":
        """``-lam sin(alpha x) / x**gamma`` written as ``lam cos(alpha x + pi/2) / x**gamma``."""
        return cls.cosines([lam], [alpha], gamma, [math.pi / 2], x0=x0, label="wvn")

    @classmethod
    def from_spec(cls, spec: PotentialSpec, plan: ConstructionPlan | None = None) -> "PotentialModel":
        K = len(spec.terms)
        lam = np.array([t.lam for t in spec.terms], dtype=np.float64)
        alpha = np.array([float(t.alpha) for t in spec.terms], dtype=np.float64)
        phase0 = np.array([t.phase for t in spec.terms], dtype=np.float64)
        cw = np.zeros(K) if plan is None else np.array(plan.c, dtype=np.float64)
        table = omega_table(spec, plan) if spec.beta0_mode == "iterative" else Beta0Table.empty(K)
        kw = {}
        if plan is not None:
            kw = dict(
                Lambda=complex(plan.Lambda),
                gamma_power=float(plan.gamma_power),
                xi_weight=xi_effective_weight(spec, plan),
                xi_offset=xi_effective_offset(spec, plan),
            )
        eta = spec.eta_float if plan is None else float(plan.eta)
        return cls(lam, alpha, phase0, cw, float(spec.gamma), float(spec.x0), table,
                   beta0_eta=eta, label="spec", **kw)

    @property
    def params(self) -> tuple:
        b = self.beta0
        return (self.lam, self.alpha, self.phase0, self.cw, self.gamma, self.x0,
                b.coef, b.mpow, b.npow, b.S, self.beta0_eta, b.n_iter)

    @property
    def coupling(self) -> tuple:
        return (self.Lambda.real, self.Lambda.imag, self.gamma_power, self.xi_weight, self.xi_offset)

    def __call__(self, x: float, xi: float = 0.0) -> float:
        return potential_value(float(x), float(xi), self.params)

    def values(self, x, xi=0.0) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        xi = np.broadcast_to(np.asarray(xi, dtype=np.float64), x.shape)
        P = self.params
        return np.array([potential_value(a, b, P) for a, b in zip(x, xi)])

    def beta0_at(self, x: float, xi: float = 0.0) -> float:
        b = self.beta0
        if b.n_iter == 0:
            return 0.0
        return beta0_value(float(x), float(xi), self.phase0, self.cw, self.gamma,
                           b.coef, b.mpow, b.npow, b.S, self.beta0_eta, b.n_iter)

    def omega_at(self, x: float, beta0: float, xi: float = 0.0) -> float:
        b = self.beta0
        return omega_value(float(x), float(beta0), float(xi), self.phase0, self.cw, self.gamma,
                           b.coef, b.mpow, b.npow, b.S)

    def max_frequency(self, eta: float) -> float:
        amax = float(self.alpha.max()) if self.alpha.size else 0.0
        return max(eta, amax, eta + 2.0 * amax)

    @property
    def is_zero(self) -> bool:
        return self.lam.size == 0 and self.beta0.n_iter == 0


def evaluate_potential(spec: PotentialSpec, plan: ConstructionPlan | None, x: float, xi: float = 0.0) -> float:
    """``V(x)`` for the given aggregate phase ``xi`` (0 below ``x0``)."""
    return PotentialModel.from_spec(spec, plan)(x, xi)


def beta0_cancellation(spec: PotentialSpec, plan: ConstructionPlan | None = None):
    """Pointwise ``beta0(x, xi)`` after ``p-1`` rounds of ``beta0 <- beta0 + eta Omega(beta0)``."""
    if spec.beta0_mode != "iterative":
        raise ValueError("beta0_mode must be 'iterative'")
    model = PotentialModel.from_spec(spec, plan)
    return model.beta0_at


def omega_residual(spec: PotentialSpec, plan: ConstructionPlan | None = None):
    """Pointwise ``Omega(x)`` left after the cancellation rounds."""
    model = PotentialModel.from_spec(spec, plan)

    def residual(x: float, xi: float = 0.0) -> float:
        return model.omega_at(x, model.beta0_at(x, xi), xi)

    return residual
