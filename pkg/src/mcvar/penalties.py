"""Fusion and lasso penalties, and the sparse cross-class coupling operator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .panel import PanelSpec


def _as_classes(values) -> np.ndarray:
    arrs = [np.asarray(v, dtype=float).ravel() for v in values]
    if len({a.size for a in arrs}) > 1:
        raise ValueError("all classes must carry the same number of entries")
    return np.stack(arrs) if arrs else np.zeros((0, 0))


def eval_pairwise_fusion(values) -> float:
    """Sum over unordered class pairs and entries of ``|v_k - v_k'|``.

    ``values`` is a sequence of per-class arrays (or a ``(K, ...)`` array).
    The same function evaluates the fusion penalty for coefficients and for
    precision matrices.
    """
    v = _as_classes(values)
    K = v.shape[0]
    if K < 2:
        return 0.0
    ia, ib = np.triu_indices(K, k=1)
    return float(np.abs(v[ia] - v[ib]).sum())


def eval_l1(values) -> float:
    return float(sum(np.abs(np.asarray(v, dtype=float)).sum() for v in values))


def soft_threshold(v, t):
    """``sign(v) * max(|v| - t, 0)``, elementwise."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FusionCoupling:
    """Sparse form of the coupling matrix pairing coefficients across classes.

    Row ``(pair, q)`` has weight ``+lam1`` on class ``pairs[pair][0]`` and
    ``-lam1`` on class ``pairs[pair][1]``, both at coefficient position ``q``.
    Rows are ordered pair-major. The dense matrix is never built during
    fitting; :meth:`to_sparse` exists for inspection and tests.
    """

    K: int
    Q: int
    lam1: float

    @property
    def pairs(self) -> np.ndarray:
        ia, ib = np.triu_indices(self.K, k=1)
        return np.column_stack([ia, ib])

    @property
    def n_pairs(self) -> int:
        return self.K * (self.K - 1) // 2

    @property
    def row_count(self) -> int:
        return self.n_pairs * self.Q

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_count, self.K * self.Q

    @property
    def incidence(self) -> np.ndarray:
        """``(n_pairs, K)`` signed incidence matrix scaled by ``lam1``."""
        D = np.zeros((self.n_pairs, self.K))
        idx = np.arange(self.n_pairs)
        ia, ib = np.triu_indices(self.K, k=1)
        D[idx, ia] = self.lam1
        D[idx, ib] = -self.lam1
        return D

    def rows(self) -> Iterator[tuple[tuple[int, int], int, float]]:
        for a, b in self.pairs:
            for q in range(self.Q):
                yield (int(a), int(b)), q, self.lam1

    def apply(self, flat: np.ndarray) -> np.ndarray:
        """``C beta`` as an ``(n_pairs, Q)`` array, for ``flat`` of shape ``(K, Q)``."""
        ia, ib = np.triu_indices(self.K, k=1)
        return self.lam1 * (flat[ia] - flat[ib])

    def apply_transpose(self, alpha: np.ndarray) -> np.ndarray:
        """``C' alpha`` for ``alpha`` of shape ``(n_pairs, Q)``; returns ``(K, Q)``."""
        return self.incidence.T @ alpha

    def to_sparse(self):
        from scipy import sparse

        ia, ib = np.triu_indices(self.K, k=1)
        n, Q = self.n_pairs, self.Q
        rows = np.arange(n * Q)
        pair_of_row = rows // Q
        q_of_row = rows % Q
        r = np.concatenate([rows, rows])
        c = np.concatenate([ia[pair_of_row] * Q + q_of_row, ib[pair_of_row] * Q + q_of_row])
        v = np.concatenate([np.full(n * Q, self.lam1), np.full(n * Q, -self.lam1)])
        return sparse.csr_matrix((v, (r, c)), shape=self.shape)

    def norm_sq(self) -> float:
        """Squared spectral norm: the complete-graph Laplacian has top eigenvalue K."""
        return self.lam1 ** 2 * self.K


def build_coupling(spec: PanelSpec, lam1: float) -> FusionCoupling:
    if spec.K < 2:
        raise ValueError("fusion needs at least two classes; use lam1 = 0 for K = 1")
    if lam1 < 0:
        raise ValueError("lam1 must be non-negative")
    return FusionCoupling(spec.K, spec.P * spec.J * spec.J, float(lam1))
