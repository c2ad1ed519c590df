"""Fused joint graphical lasso over the residual covariances, solved by ADMM.

With the coefficients held fixed the precision block of the objective is

    sum_k N [tr(S_k Omega_k) - J_w log|Omega_k|]
        + gamma1 * sum_{k<k'} |Omega_k - Omega_k'|_1 + gamma2 * sum_k |Omega_k|_1

which is split as ``Omega = Z`` with a scaled dual ``U``. The ``Omega``
update has a closed form through one symmetric eigendecomposition per
class; the ``Z`` update is an elementwise prox across classes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .panel import PrecisionSet
from .penalties import eval_l1, eval_pairwise_fusion, soft_threshold

__all__ = [
    "AdmmOptions",
    "JglResult",
    "PrecisionSet",
    "admm_omega_update",
    "clique_fusion_prox",
    "jgl_fit",
    "jgl_objective",
    "pava",
    "residual_covariance",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmOptions:
    rho: float = 1.0
    max_iter: int = 1000
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass
class JglResult:
    omega: PrecisionSet
    n_iter: int
    converged: bool
    primal_residual: float
    dual_residual: float


def logdet_weight(mode: str | float, J: int) -> float:
    """Multiplier of ``N log|Omega|``: ``"series"`` gives ``J``, ``"likelihood"`` gives 1."""
    if isinstance(mode, (int, float)):
        return float(mode)
    if mode == "series":
        return float(J)
    if mode == "likelihood":
        return 1.0
    raise ValueError(f"unknown log-det weight {mode!r}; use 'series' or 'likelihood'")


def residual_covariance(resid: np.ndarray) -> np.ndarray:
    """``S_k = E_k' E_k / N`` for residuals of shape ``(K, N, J)``."""
    resid = np.asarray(resid, dtype=float)
    if resid.ndim == 2:
        resid = resid[None]
    N = resid.shape[1]
    if N == 0:
        raise ValueError("need at least one residual row")
    S = resid.transpose(0, 2, 1) @ resid / N
    return 0.5 * (S + S.transpose(0, 2, 1))


def pava(y: np.ndarray) -> np.ndarray:
    """Non-decreasing least-squares fit by pool-adjacent-violators (unit weights)."""
    y = np.asarray(y, dtype=float)
    means: list[float] = []
    sizes: list[int] = []
    for v in y:
        means.append(float(v))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            n = sizes[-2] + sizes[-1]
            m = (means[-2] * sizes[-2] + means[-1] * sizes[-1]) / n
            means[-2:] = [m]
            sizes[-2:] = [n]
    return np.repeat(means, sizes)


@numba.njit(cache=True)
def _pava_inplace(y, means, sizes):
    n = 0
    for v in y:
        means[n] = v
        sizes[n] = 1
        n += 1
        while n > 1 and means[n - 2] > means[n - 1]:
            tot = sizes[n - 2] + sizes[n - 1]
            means[n - 2] = (means[n - 2] * sizes[n - 2] + means[n - 1] * sizes[n - 1]) / tot
            sizes[n - 2] = tot
            n -= 1
    pos = 0
    for b in range(n):
        for _ in range(sizes[b]):
            y[pos] = means[b]
            pos += 1


@numba.njit(cache=True)
def _fused_prox_rows(X, t_fuse, t_sparse):
    """Clique fusion prox applied independently to each row of ``X``."""
    B, K = X.shape
    Z = np.empty_like(X)
    buf = np.empty(K)
    means = np.empty(K)
    sizes = np.empty(K, dtype=np.int64)
    for r in range(B):
        x = X[r]
        if t_fuse > 0.0 and K > 1:
            order = np.argsort(x, kind="mergesort")
            for i in range(K):
                buf[i] = x[order[i]] + t_fuse * (K - 1 - 2 * i)
            _pava_inplace(buf, means, sizes)
            for i in range(K):
                Z[r, order[i]] = buf[i]
        else:
            Z[r] = x
        if t_sparse > 0.0:
            for i in range(K):
                v = Z[r, i]
                a = abs(v) - t_sparse
                Z[r, i] = np.sign(v) * a if a > 0.0 else 0.0
    return Z


def clique_fusion_prox(x, t_fuse: float, t_sparse: float) -> np.ndarray:
    """Minimiser of ``0.5||z - x||^2 + t_fuse sum_{k<k'}|z_k - z_k'| + t_sparse ||z||_1``.

    Sort, shift the i-th smallest entry by ``t_fuse (K + 1 - 2i)``, restore
    monotonicity with PAVA, undo the sort and soft-threshold.
    """
    if t_fuse < 0 or t_sparse < 0:
        raise ValueError("prox weights must be non-negative")
    x = np.asarray(x, dtype=float)
    K = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    i = np.arange(1, K + 1)
    fitted = pava(xs + t_fuse * (K + 1 - 2 * i))
    z = np.empty(K)
    z[order] = fitted
    return np.asarray(soft_threshold(z, t_sparse), dtype=float).reshape(K)


def _eig_map(S: np.ndarray, A: np.ndarray, rho: float, N: float, Jw: float) -> np.ndarray:
    M = rho * A - N * S
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    e, V = np.linalg.eigh(M)
    w = (e + np.sqrt(e * e + 4.0 * rho * N * Jw)) / (2.0 * rho)
    return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


def admm_omega_update(S: np.ndarray, A: np.ndarray, rho: float, N: float, logdet: float = 1.0) -> np.ndarray:
    """Exact minimiser of ``N tr(S W) - N*logdet*log|W| + rho/2 ||W - A||_F^2``."""
    S = np.asarray(S, dtype=float)
    A = np.asarray(A, dtype=float)
    if rho <= 0:
        raise ValueError("rho must be positive")
    for name, M in (("S", S), ("A", A)):
        if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=0, atol=1e-8):
            raise ValueError(f"{name} must be symmetric")
    return _eig_map(S, A, rho, N, logdet)


def jgl_objective(omega, S: np.ndarray, gamma1: float, gamma2: float, N: float, logdet: float = 1.0) -> float:
    om = omega.omega if isinstance(omega, PrecisionSet) else np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float)
    # slogdet alone would accept negative definite matrices of even size
    if np.linalg.eigvalsh(0.5 * (om + np.swapaxes(om, -1, -2))).min() <= 0:
        return np.inf
    _, ld = np.linalg.slogdet(om)
    fit = N * float(np.einsum("kij,kji->", S, om)) - N * logdet * float(ld.sum())
    return fit + gamma1 * eval_pairwise_fusion(om) + gamma2 * eval_l1(om)


def jgl_fit(S, gamma1: float, gamma2: float, N: float, options: AdmmOptions | None = None,
            logdet: float = 1.0, init: PrecisionSet | None = None) -> JglResult:
    """ADMM for the fused joint graphical lasso.

    Returns the sparse consensus copy ``Z`` when it is positive definite and
    the smooth copy otherwise. Failing to meet the residual tolerances within
    ``max_iter`` is reported through ``converged=False``.
    """
    options = options or AdmmOptions()
    if gamma1 < 0 or gamma2 < 0:
        raise ValueError("penalty parameters must be non-negative")
    S = np.asarray(S, dtype=float)
    if S.ndim == 2:
        S = S[None]
    K, J, _ = S.shape
    rho = options.rho
    t_fuse, t_sparse = gamma1 / rho, gamma2 / rho
    if init is None:
        Z = np.broadcast_to(np.eye(J), (K, J, J)).copy()
    else:
        Z = init.omega.copy()
    U = np.zeros_like(Z)
    iu = np.triu_indices(J)
    theta = Z
    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        theta = _eig_map(S, Z - U, rho, N, logdet)
        V = theta + U
        # entries (i, j) and (j, i) share the same prox; solve the upper triangle once
        cols = V[:, iu[0], iu[1]].T
        fused = _fused_prox_rows(np.ascontiguousarray(cols), t_fuse if K > 1 else 0.0, t_sparse)
        Z_new = np.empty_like(Z)
        Z_new[:, iu[0], iu[1]] = fused.T
        Z_new[:, iu[1], iu[0]] = fused.T
        U = U + theta - Z_new
        r_norm = float(np.linalg.norm(theta - Z_new))
        s_norm = float(rho * np.linalg.norm(Z_new - Z))
        Z = Z_new
        if r_norm < options.tol_primal and s_norm < options.tol_dual:
            converged = True
            break
    if not converged:
        logger.debug("jgl_fit hit max_iter=%d (primal %.3g, dual %.3g)", options.max_iter, r_norm, s_norm)
    out = PrecisionSet(Z)
    if not out.is_positive_definite():
        out = PrecisionSet(0.5 * (theta + theta.transpose(0, 2, 1)))
    return JglResult(out, it, converged, r_norm, s_norm)
