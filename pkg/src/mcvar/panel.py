"""Multi-class panels, coefficient containers and the stacked VAR design."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PanelSpec:
    K: int
    J: int
    T: int
    P: int = 1

    def __post_init__(self):
        for name in ("K", "J", "T", "P"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.T < self.P + 1:
            raise ValueError("T must exceed P (need N = T - P >= 1)")

    @property
    def N(self) -> int:
        return self.T - self.P

    @property
    def d(self) -> int:
        """Total number of autoregressive coefficients across classes."""
        return self.K * self.P * self.J * self.J


@dataclass
class MultiClassPanel:
    """Per-class ``T x J`` observation matrices stored as one ``(K, T, J)`` array."""

    data: np.ndarray
    series_names: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError("panel data must have shape (K, T, J)")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("panel data contain non-finite values")
        K, T, J = self.data.shape
        if K < 1 or T < 1 or J < 1:
            raise ValueError("panel must have at least one class, time point and series")
        if not self.series_names:
            self.series_names = [f"y{j + 1}" for j in range(J)]
        if not self.class_names:
            self.class_names = [str(k + 1) for k in range(K)]
        self.series_names = [str(s) for s in self.series_names]
        self.class_names = [str(c) for c in self.class_names]
        if len(self.series_names) != J:
            raise ValueError("series_names must have length J")
        if len(self.class_names) != K:
            raise ValueError("class_names must have length K")

    @classmethod
    def from_list(cls, matrices: Sequence[np.ndarray], **names) -> "MultiClassPanel":
        shapes = {np.shape(m) for m in matrices}
        if len(shapes) != 1:
            raise ValueError(f"unbalanced panel: classes have shapes {sorted(shapes)}")
        return cls(np.stack([np.asarray(m, dtype=float) for m in matrices]), **names)

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def J(self) -> int:
        return self.data.shape[2]

    def spec(self, P: int) -> PanelSpec:
        return PanelSpec(self.K, self.J, self.T, P)


@dataclass
class CoefficientSet:
    """Autoregressive matrices ``B_p^(k)`` stored as a ``(K, P, J, J)`` array.

    ``coef[k, p, i, j]`` is the effect of series ``j`` at lag ``p + 1`` on
    series ``i`` in class ``k`` (all indices zero-based).
    """

    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.ndim != 4 or self.coef.shape[2] != self.coef.shape[3]:
            raise ValueError("coefficients must have shape (K, P, J, J)")

    @classmethod
    def zeros(cls, K: int, P: int, J: int) -> "CoefficientSet":
        return cls(np.zeros((K, P, J, J)))

    @classmethod
    def from_flat(cls, flat: np.ndarray, P: int, J: int) -> "CoefficientSet":
        flat = np.asarray(flat, dtype=float)
        return cls(flat.reshape(flat.shape[0], P, J, J))

    @classmethod
    def from_weights(cls, W: np.ndarray) -> "CoefficientSet":
        """Inverse of :meth:`weights`."""
        W = np.asarray(W, dtype=float)
        K, JP, J = W.shape
        P = JP // J
        # W[k, p*J + j, i] = B_p[i, j]
        return cls(W.reshape(K, P, J, J).transpose(0, 1, 3, 2).copy())

    @property
    def K(self) -> int:
        return self.coef.shape[0]

    @property
    def P(self) -> int:
        return self.coef.shape[1]

    @property
    def J(self) -> int:
        return self.coef.shape[2]

    @property
    def d(self) -> int:
        return self.coef.size

    def beta(self, k: int, p: int, i: int, j: int) -> float:
        return float(self.coef[k, p, i, j])

    def flat(self) -> np.ndarray:
        """``(K, P*J*J)`` view used by the penalties; position order is (p, i, j)."""
        return self.coef.reshape(self.K, -1)

    def weights(self) -> np.ndarray:
        """``(K, J*P, J)`` regression weights with ``Yhat = X0 @ W``.

        Rows follow the lag-major column order of ``X0``; column ``i`` holds
        the coefficients of equation ``i``. Column-major vectorisation of
        ``W[k]`` is the per-class coefficient vector matching ``I_J kron X0``.
        """
        K, P, J, _ = self.coef.shape
        return self.coef.transpose(0, 1, 3, 2).reshape(K, P * J, J)

    def copy(self) -> "CoefficientSet":
        return CoefficientSet(self.coef.copy())


@dataclass
class StackedDesign:
    """Lagged regression form of a centered panel.

    ``Y[k]`` is the ``N x J`` target block and ``X0[k]`` the ``N x JP``
    predictor block ``[lag-1 block, ..., lag-P block]``.
    """

    Y: np.ndarray
    X0: np.ndarray
    spec: PanelSpec

    def y(self, k: int) -> np.ndarray:
        """Stacked response of length ``N*J``, equation by equation."""
        return self.Y[k].ravel(order="F")

    def X(self, k: int) -> np.ndarray:
        """Full ``NJ x J^2 P`` block-diagonal regressor (small problems only)."""
        return np.kron(np.eye(self.spec.J), self.X0[k])

    @cached_property
    def gram(self) -> np.ndarray:
        return self.X0.transpose(0, 2, 1) @ self.X0

    @cached_property
    def cross(self) -> np.ndarray:
        return self.X0.transpose(0, 2, 1) @ self.Y


def center_panel(panel: MultiClassPanel, scale: bool = False) -> tuple[MultiClassPanel, np.ndarray]:
    """Remove the per-class, per-series mean.

    Returns the centered panel and the ``(K, J)`` means. With ``scale=True``
    each centered column is also divided by its standard deviation (constant
    columns are left at zero).
    """
    data = panel.data
    if not np.all(np.isfinite(data)):
        raise ValueError("panel data contain non-finite values")
    means = data.mean(axis=1)
    centered = data - means[:, None, :]
    if scale:
        sd = centered.std(axis=1)
        sd = np.where(sd > 0, sd, 1.0)
        centered = centered / sd[:, None, :]
    out = MultiClassPanel(centered, list(panel.series_names), list(panel.class_names))
    return out, means


def build_stacked(panel: MultiClassPanel, P: int) -> StackedDesign:
    if P < 1:
        raise ValueError("order P must be >= 1")
    T = panel.T
    if T <= P:
        raise ValueError(f"time length T={T} must exceed the order P={P}")
    spec = panel.spec(P)
    data = panel.data
    Y = data[:, P:, :].copy()
    X0 = np.concatenate([data[:, P - lag:T - lag, :] for lag in range(1, P + 1)], axis=2)
    return StackedDesign(Y, X0, spec)


def _check_dims(design: StackedDesign, beta: CoefficientSet):
    s = design.spec
    if beta.coef.shape != (s.K, s.P, s.J, s.J):
        raise ValueError(
            f"coefficient shape {beta.coef.shape} does not match panel (K={s.K}, P={s.P}, J={s.J})"
        )


def residuals(design: StackedDesign, beta: CoefficientSet) -> np.ndarray:
    """``(K, N, J)`` residual matrices ``Y - X0 W``."""
    _check_dims(design, beta)
    return design.Y - design.X0 @ beta.weights()


def companion(beta: CoefficientSet, k: int) -> np.ndarray:
    P, J = beta.P, beta.J
    top = np.concatenate([beta.coef[k, p] for p in range(P)], axis=1)
    if P == 1:
        return top
    bottom = np.concatenate([np.eye(J * (P - 1)), np.zeros((J * (P - 1), J))], axis=1)
    return np.concatenate([top, bottom], axis=0)


def var_stability(beta: CoefficientSet, k: int) -> float:
    """Spectral radius of the companion matrix of class ``k``; stable iff < 1."""
    return float(np.max(np.abs(np.linalg.eigvals(companion(beta, k)))))


@dataclass
class PrecisionSet:
    """Per-class inverse error covariance matrices, shape ``(K, J, J)``."""

    omega: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.ndim != 3 or self.omega.shape[1] != self.omega.shape[2]:
            raise ValueError("precision matrices must have shape (K, J, J)")

    @classmethod
    def identity(cls, K: int, J: int) -> "PrecisionSet":
        return cls(np.broadcast_to(np.eye(J), (K, J, J)).copy())

    @property
    def K(self) -> int:
        return self.omega.shape[0]

    @property
    def J(self) -> int:
        return self.omega.shape[1]

    def w(self, k: int, i: int, j: int) -> float:
        return float(self.omega[k, i, j])

    def min_eigenvalues(self) -> np.ndarray:
        sym = 0.5 * (self.omega + self.omega.transpose(0, 2, 1))
        return np.linalg.eigvalsh(sym)[:, 0]

    def is_positive_definite(self, tol: float = 1e-10) -> bool:
        if not np.allclose(self.omega, self.omega.transpose(0, 2, 1), rtol=0, atol=1e-12):
            return False
        return bool(np.all(self.min_eigenvalues() > tol))

    def copy(self) -> "PrecisionSet":
        return PrecisionSet(self.omega.copy())
