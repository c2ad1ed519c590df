"""Smoothing proximal gradient for the coefficient block with the precisions fixed.

The fusion term ``lam1 * P1`` is replaced by its Nesterov smoothing, a sum
of Huber functions of the coupled differences, and the resulting problem

    g(beta) + h_mu(beta) + lam2 * ||beta||_1

is solved with FISTA. Internally every class is handled through its
``(J*P, J)`` weight matrix so that the GLS loss only needs ``J*P``-sized
Gram matrices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .panel import CoefficientSet, PrecisionSet, StackedDesign, residuals
from .penalties import FusionCoupling, build_coupling, eval_l1, eval_pairwise_fusion

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpgOptions:
    mu: float = 1e-3
    max_iter: int = 2000
    tol: float = 1e-6

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("smoothing parameter mu must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class SpgResult:
    beta: CoefficientSet
    objective: float
    n_iter: int
    converged: bool
    lipschitz: float


def _omega_array(omega) -> np.ndarray:
    return omega.omega if isinstance(omega, PrecisionSet) else np.asarray(omega, dtype=float)


def check_positive_definite(omega: np.ndarray):
    for k, om in enumerate(omega):
        if not np.allclose(om, om.T, rtol=0, atol=1e-10):
            raise ValueError(f"precision matrix of class {k} is not symmetric")
        try:
            np.linalg.cholesky(om)
        except np.linalg.LinAlgError:
            raise ValueError(f"precision matrix of class {k} is not positive definite") from None


def _huber(z: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
    """Smoothed absolute value summed over ``z`` and the optimal dual ``alpha``."""
    alpha = np.clip(z / mu, -1.0, 1.0)
    a = np.abs(z)
    value = np.where(a <= mu, z * z / (2 * mu), a - mu / 2).sum()
    return float(value), alpha


def smooth_fusion(beta: CoefficientSet, coupling: FusionCoupling, mu: float):
    """Value and gradient of ``h_mu`` at ``beta``.

    The gradient is returned with the shape of ``beta.coef``.
    """
    if mu <= 0:
        raise ValueError("smoothing parameter mu must be positive")
    flat = beta.flat()
    value, alpha = _huber(coupling.apply(flat), mu)
    grad = coupling.apply_transpose(alpha).reshape(beta.coef.shape)
    return value, grad


def gls_loss_grad(beta: CoefficientSet, design: StackedDesign, omega):
    """GLS loss ``sum_k e_k' (Omega_k kron I_N) e_k`` and its gradient.

    Uses ``e' (Omega kron I_N) e = sum(E * (E @ Omega))`` for the ``N x J``
    residual matrix ``E``; the ``NJ x NJ`` weight is never formed.
    """
    om = _omega_array(omega)
    check_positive_definite(om)
    E = residuals(design, beta)
    EO = E @ om
    value = float(np.sum(E * EO))
    gW = -2.0 * design.X0.transpose(0, 2, 1) @ EO
    return value, CoefficientSet.from_weights(gW).coef


def power_max_eig(A: np.ndarray, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = A.shape[0]
    if not np.any(A):
        return 0.0
    v = np.linspace(1.0, 2.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nrm
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return lam


def lipschitz_bound(design: StackedDesign, omega, coupling: FusionCoupling | None, mu: float) -> float:
    om = _omega_array(omega)
    data_term = 2.0 * max(
        power_max_eig(G) * power_max_eig(o) for G, o in zip(design.gram, om)
    )
    if coupling is None or coupling.lam1 == 0.0:
        return data_term
    return data_term + coupling.norm_sq() / mu


class _Problem:
    """Precomputed pieces of the smoothed objective in weight space."""

    def __init__(self, design: StackedDesign, omega: np.ndarray, lam1: float, lam2: float, mu: float):
        s = design.spec
        self.G = design.gram
        self.XtY = design.cross
        self.YtY = design.Y.transpose(0, 2, 1) @ design.Y
        self.omega = omega
        self.lam2 = lam2
        self.mu = mu
        self.coupling = build_coupling(s, lam1) if (s.K >= 2 and lam1 > 0) else None
        if self.coupling is not None:
            self.D = self.coupling.incidence
            self.ia, self.ib = np.triu_indices(s.K, k=1)
            self.lam1 = lam1

    def smooth(self, W: np.ndarray):
        R = self.XtY - self.G @ W
        A = self.YtY - W.transpose(0, 2, 1) @ (R + self.XtY)
        value = float(np.sum(self.omega * A))
        grad = -2.0 * R @ self.omega
        if self.coupling is not None:
            flat = W.reshape(W.shape[0], -1)
            hval, alpha = _huber(self.lam1 * (flat[self.ia] - flat[self.ib]), self.mu)
            value += hval
            grad = grad + (self.D.T @ alpha).reshape(W.shape)
        return value, grad

    def value(self, W: np.ndarray) -> float:
        v, _ = self.smooth(W)
        return v + self.lam2 * float(np.abs(W).sum())


def spg_fit(design: StackedDesign, omega, lam1: float, lam2: float,
            options: SpgOptions | None = None, init: CoefficientSet | None = None) -> SpgResult:
    """FISTA on the smoothed objective; the l1 prox gives exact zeros.

    Stops when the relative objective change drops below ``options.tol`` or
    after ``options.max_iter`` iterations. The best iterate seen (including
    the start and ``beta = 0``) is returned; hitting the iteration cap is
    reported through ``converged=False``.
    """
    options = options or SpgOptions()
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalty parameters must be non-negative")
    om = _omega_array(omega)
    check_positive_definite(om)
    s = design.spec
    prob = _Problem(design, om, float(lam1), float(lam2), options.mu)
    L = lipschitz_bound(design, om, prob.coupling, options.mu)

    zero = np.zeros((s.K, s.J * s.P, s.J))
    x = zero if init is None else init.weights().copy()
    F_prev = prob.value(x)
    best_F, best_x = F_prev, x
    if init is not None:
        F0 = prob.value(zero)
        if F0 < best_F:
            best_F, best_x = F0, zero

    if L == 0.0:
        # only possible for all-zero predictors: the loss is constant
        return SpgResult(CoefficientSet.from_weights(zero), prob.value(zero), 0, True, L)

    step = 1.0 / L
    thresh = lam2 * step
    y = x
    t = 1.0
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        _, grad = prob.smooth(y)
        z = y - step * grad
        x_new = np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)
        F_new = prob.value(x_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if F_new < best_F:
            best_F, best_x = F_new, x_new
        if abs(F_prev - F_new) <= options.tol * max(abs(F_prev), 1e-300):
            converged = True
            break
        F_prev = F_new
    if not converged:
        logger.debug("spg_fit hit max_iter=%d (lam1=%g, lam2=%g)", options.max_iter, lam1, lam2)
    return SpgResult(CoefficientSet.from_weights(best_x), best_F, it, converged, L)


def smoothed_objective(beta: CoefficientSet, design: StackedDesign, omega, lam1: float, lam2: float, mu: float) -> float:
    """``g + h_mu + lam2 * P2`` evaluated through the public pieces."""
    g, _ = gls_loss_grad(beta, design, omega)
    h = 0.0
    if beta.K >= 2 and lam1 > 0:
        h, _ = smooth_fusion(beta, build_coupling(design.spec, lam1), mu)
    return g + h + lam2 * eval_l1(beta.coef)


def exact_objective(beta: CoefficientSet, design: StackedDesign, omega, lam1: float, lam2: float) -> float:
    """``g + lam1 * P1 + lam2 * P2`` with the unsmoothed fusion term."""
    g, _ = gls_loss_grad(beta, design, omega)
    return g + lam1 * eval_pairwise_fusion(beta.flat()) + lam2 * eval_l1(beta.coef)
