"""BIC-driven grid search for the coefficient and precision penalties."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .jgl import AdmmOptions, jgl_fit
from .panel import CoefficientSet, PrecisionSet, StackedDesign
from .spg import SpgOptions, gls_loss_grad, spg_fit


def _check_values(name: str, values) -> list[float] | None:
    if values is None:
        return None
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError(f"{name} grid is empty")
    if any(v < 0 or not np.isfinite(v) for v in vals):
        raise ValueError(f"{name} grid values must be finite and non-negative")
    if vals != sorted(vals):
        raise ValueError(f"{name} grid must be sorted ascending")
    return vals


@dataclass
class RegularizationGrid:
    """Candidate penalty values; ``None`` means "use the data-driven default"."""

    lam1: Sequence[float] | None = None
    lam2: Sequence[float] | None = None
    gamma1: Sequence[float] | None = None
    gamma2: Sequence[float] | None = None
    n_default: int = 10

    def __post_init__(self):
        for name in ("lam1", "lam2", "gamma1", "gamma2"):
            setattr(self, name, _check_values(name, getattr(self, name)))

    def replace(self, **kw) -> "RegularizationGrid":
        vals = dict(lam1=self.lam1, lam2=self.lam2, gamma1=self.gamma1,
                    gamma2=self.gamma2, n_default=self.n_default)
        vals.update(kw)
        return RegularizationGrid(**vals)


def default_beta_values(design: StackedDesign, omega, n: int = 10) -> list[float]:
    """``n`` log-spaced values over ``[0.01, 1] * max|grad g(0)|``.

    ``max|grad g(0)| = max|2 X0' Y Omega|`` is the smallest lasso weight that
    zeroes every coefficient when there is no fusion.
    """
    om = omega.omega if isinstance(omega, PrecisionSet) else np.asarray(omega)
    lam_max = float(np.abs(2.0 * design.cross @ om).max())
    if lam_max == 0.0:
        lam_max = 1.0
    return list(lam_max * np.logspace(-2, 0, n))


def default_gamma_values(S: np.ndarray, N: int, n: int = 10) -> list[float]:
    S = np.asarray(S)
    J = S.shape[-1]
    off = S[:, ~np.eye(J, dtype=bool)]
    scale = float(np.abs(off).max()) if off.size else 0.0
    if scale == 0.0:
        scale = float(np.abs(S).max())
    if scale == 0.0:
        scale = 1.0
    return list(scale * N * np.logspace(-2, 0, n))


def bic_beta(beta: CoefficientSet, design: StackedDesign, omega) -> float:
    """``2 g(beta) + df log N`` with ``df`` the number of nonzero coefficients."""
    g, _ = gls_loss_grad(beta, design, omega)
    df = int(np.count_nonzero(beta.coef))
    return 2.0 * g + df * np.log(design.spec.N)


def bic_omega(omega, S: np.ndarray, N: int) -> float:
    """``sum_k N [tr(S_k W_k) - log|W_k|] + log N * sum_k df_k``.

    ``df_k`` is ``J`` plus the nonzero off-diagonal entries of the upper
    triangle of ``W_k``.
    """
    om = omega.omega if isinstance(omega, PrecisionSet) else np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float).reshape(om.shape)
    if np.linalg.eigvalsh(0.5 * (om + np.swapaxes(om, -1, -2))).min() <= 0:
        raise ValueError("precision matrices must be positive definite")
    _, ld = np.linalg.slogdet(om)
    J = om.shape[-1]
    iu = np.triu_indices(J, k=1)
    df = om.shape[0] * J + int(np.count_nonzero(om[:, iu[0], iu[1]]))
    fit = N * (float(np.einsum("kij,kji->", S, om)) - float(ld.sum()))
    return fit + np.log(N) * df


@dataclass
class Selection:
    """Outcome of a two-dimensional grid search."""

    first: float
    second: float
    estimate: object
    bic: float
    table: dict[tuple[float, float], float] = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (first, second, estimate)
        return iter((self.first, self.second, self.estimate))


def _select(cells: list[tuple[float, float, float, object]]) -> Selection:
    # smallest BIC; ties go to the larger (first, second) pair
    best = min(cells, key=lambda c: (c[2], -c[0], -c[1]))
    table = {(c[0], c[1]): c[2] for c in cells}
    return Selection(best[0], best[1], best[3], best[2], table)


def _run_rows(row_fn: Callable, rows: Sequence[float], executor=None) -> list:
    mapper = map if executor is None else executor.map
    out = []
    for cells in mapper(row_fn, rows):
        out.extend(cells)
    return out


def grid_search_beta(design: StackedDesign, omega, lam1_values: Sequence[float],
                     lam2_values: Sequence[float], options: SpgOptions | None = None,
                     executor=None) -> Selection:
    """Fit every ``(lam1, lam2)`` cell and keep the BIC minimiser.

    Each ``lam1`` row is an independent path traversed from the largest to
    the smallest ``lam2``, starting at zero and warm-starting every later
    cell from its predecessor, so rows may be evaluated in any order or
    concurrently through ``executor``.
    """
    options = options or SpgOptions()
    lam1_values = _check_values("lam1", sorted(lam1_values))
    lam2_values = _check_values("lam2", sorted(lam2_values))

    def row(lam1):
        cells = []
        init = None
        for lam2 in reversed(lam2_values):
            res = spg_fit(design, omega, lam1, lam2, options, init=init)
            init = res.beta
            cells.append((lam1, lam2, bic_beta(res.beta, design, omega), res.beta))
        return cells

    return _select(_run_rows(row, lam1_values, executor))


def grid_search_omega(S: np.ndarray, gamma1_values: Sequence[float], gamma2_values: Sequence[float],
                      N: int, options: AdmmOptions | None = None, logdet: float = 1.0,
                      executor=None) -> Selection:
    """Analogue of :func:`grid_search_beta` for the joint graphical lasso."""
    options = options or AdmmOptions()
    gamma1_values = _check_values("gamma1", sorted(gamma1_values))
    gamma2_values = _check_values("gamma2", sorted(gamma2_values))

    def row(g1):
        cells = []
        init = None
        for g2 in reversed(gamma2_values):
            res = jgl_fit(S, g1, g2, N, options, logdet=logdet, init=init)
            init = res.omega
            cells.append((g1, g2, bic_omega(res.omega, S, N), res.omega))
        return cells

    return _select(_run_rows(row, gamma1_values, executor))
