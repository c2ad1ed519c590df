"""Outer alternation between the coefficient and precision blocks, plus baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .jgl import AdmmOptions, jgl_fit, jgl_objective, logdet_weight, residual_covariance
from .panel import (
    CoefficientSet,
    MultiClassPanel,
    PrecisionSet,
    StackedDesign,
    build_stacked,
    center_panel,
    residuals,
)
from .penalties import eval_l1, eval_pairwise_fusion
from .spg import SpgOptions, gls_loss_grad, spg_fit
from .tuning import (
    RegularizationGrid,
    default_beta_values,
    default_gamma_values,
    grid_search_beta,
    grid_search_omega,
)

logger = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """A solver stage failed; the message names the stage."""


@dataclass(frozen=True)
class FitOptions:
    order: int = 1
    spg: SpgOptions = field(default_factory=SpgOptions)
    admm: AdmmOptions = field(default_factory=AdmmOptions)
    logdet_weight: str | float = "series"
    outer_tol: float = 1e-2
    max_outer: int = 20
    estimate_omega: bool = True
    scale: bool = False


@dataclass
class FitResult:
    beta: CoefficientSet
    omega: PrecisionSet
    lam1: float
    lam2: float
    gamma1: float
    gamma2: float
    objective_trace: list[float]
    outer_iterations: int
    converged: bool
    series_names: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    means: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def selected(self) -> tuple[float, float, float, float]:
        return self.lam1, self.lam2, self.gamma1, self.gamma2


def full_objective(design: StackedDesign, beta: CoefficientSet, omega: PrecisionSet,
                   lam1: float, lam2: float, gamma1: float, gamma2: float, logdet: float) -> float:
    """Penalised GLS objective in both blocks with the exact fusion terms."""
    g, _ = gls_loss_grad(beta, design, omega)
    N = design.spec.N
    _, ld = np.linalg.slogdet(omega.omega)
    value = g - N * logdet * float(ld.sum())
    value += lam1 * eval_pairwise_fusion(beta.flat()) + lam2 * eval_l1(beta.coef)
    value += gamma1 * eval_pairwise_fusion(omega.omega) + gamma2 * eval_l1(omega.omega)
    return value


def _prepare(panel: MultiClassPanel, options: FitOptions):
    centered, means = center_panel(panel, scale=options.scale)
    return centered, means, build_stacked(centered, options.order)


def fit_multiclass(panel: MultiClassPanel, grid: RegularizationGrid | None = None,
                   options: FitOptions | None = None) -> FitResult:
    """Jointly estimate all classes by alternating the two penalised blocks.

    Starts from identity precisions. The first outer iteration tunes
    ``(lam1, lam2)`` and then ``(gamma1, gamma2)`` by BIC; later iterations
    refit at the selected values, warm-started, and keep a block update only
    when it does not increase the objective. Stops when the relative change
    between successive objectives is below ``options.outer_tol``.
    """
    options = options or FitOptions()
    grid = grid or RegularizationGrid()
    centered, means, design = _prepare(panel, options)
    s = design.spec
    N, J, K = s.N, s.J, s.K
    if K == 1:
        grid = grid.replace(lam1=[0.0], gamma1=[0.0])
    Jw = logdet_weight(options.logdet_weight, J)

    omega = PrecisionSet.identity(K, J)
    beta = CoefficientSet.zeros(K, s.P, J)
    lam1 = lam2 = gamma1 = gamma2 = 0.0
    trace: list[float] = []
    flags: list[str] = []
    converged = False
    it = 0
    for it in range(1, options.max_outer + 1):
        try:
            if it == 1:
                lam1_values = grid.lam1 if grid.lam1 is not None else default_beta_values(design, omega, grid.n_default)
                lam2_values = grid.lam2 if grid.lam2 is not None else default_beta_values(design, omega, grid.n_default)
                sel = grid_search_beta(design, omega, lam1_values, lam2_values, options.spg)
                lam1, lam2, beta = sel.first, sel.second, sel.estimate
            else:
                cand = spg_fit(design, omega, lam1, lam2, options.spg, init=beta).beta
                old = full_objective(design, beta, omega, lam1, lam2, gamma1, gamma2, Jw)
                new = full_objective(design, cand, omega, lam1, lam2, gamma1, gamma2, Jw)
                if new <= old:
                    beta = cand
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise EstimationError(f"coefficient stage, outer iteration {it}: {exc}") from exc

        if options.estimate_omega:
            try:
                S = residual_covariance(residuals(design, beta))
                if it == 1:
                    g1_values = grid.gamma1 if grid.gamma1 is not None else default_gamma_values(S, N, grid.n_default)
                    g2_values = grid.gamma2 if grid.gamma2 is not None else default_gamma_values(S, N, grid.n_default)
                    gsel = grid_search_omega(S, g1_values, g2_values, N, options.admm, logdet=Jw)
                    gamma1, gamma2, omega = gsel.first, gsel.second, gsel.estimate
                else:
                    cand = jgl_fit(S, gamma1, gamma2, N, options.admm, logdet=Jw, init=omega).omega
                    if jgl_objective(cand, S, gamma1, gamma2, N, Jw) <= jgl_objective(omega, S, gamma1, gamma2, N, Jw):
                        omega = cand
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise EstimationError(f"precision stage, outer iteration {it}: {exc}") from exc
            if not omega.is_positive_definite():
                raise EstimationError(f"precision stage, outer iteration {it}: estimate is not positive definite")

        obj = full_objective(design, beta, omega, lam1, lam2, gamma1, gamma2, Jw)
        trace.append(obj)
        if len(trace) >= 2:
            prev = trace[-2]
            denom = abs(prev) if prev != 0 else 1.0
            if abs(prev - obj) / denom < options.outer_tol:
                converged = True
                break
    if not converged:
        flags.append("outer-not-converged")
        logger.warning("alternation did not converge in %d outer iterations", options.max_outer)
    return FitResult(beta, omega, lam1, lam2, gamma1, gamma2, trace, it, converged,
                     list(panel.series_names), list(panel.class_names), means, flags)


def fit_singleclass(panel: MultiClassPanel, grid: RegularizationGrid | None = None,
                    options: FitOptions | None = None) -> FitResult:
    """Per-class sparse estimator: the joint fit with both fusion weights pinned to 0."""
    grid = (grid or RegularizationGrid()).replace(lam1=[0.0], gamma1=[0.0])
    return fit_multiclass(panel, grid, options)


def fit_ls(panel: MultiClassPanel, P: int = 1, options: FitOptions | None = None) -> FitResult:
    """Equation-by-equation ordinary least squares, separately per class."""
    options = replace(options or FitOptions(), order=P)
    centered, means, design = _prepare(panel, options)
    s = design.spec
    if s.N <= s.J * s.P:
        raise ValueError(f"least squares is underdetermined: N={s.N} <= J*P={s.J * s.P}")
    try:
        W = np.linalg.solve(design.gram, design.cross)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"singular normal equations: {exc}") from exc
    beta = CoefficientSet.from_weights(W)
    S = residual_covariance(residuals(design, beta))
    flags: list[str] = []
    omegas = []
    # relative to the data scale, so an exact fit (S ~ 1e-30) also counts as singular
    scale = np.mean(design.Y ** 2, axis=(1, 2))
    for k, Sk in enumerate(S):
        if np.linalg.eigvalsh(Sk)[0] > 1e-12 * max(scale[k], np.finfo(float).tiny):
            omegas.append(np.linalg.inv(Sk))
        else:
            omegas.append(np.eye(s.J))
            flags.append(f"class {k}: residual covariance singular, identity precision used")
    omega = PrecisionSet(np.stack(omegas))
    omega.omega = 0.5 * (omega.omega + omega.omega.transpose(0, 2, 1))
    Jw = logdet_weight(options.logdet_weight, s.J)
    obj = full_objective(design, beta, omega, 0.0, 0.0, 0.0, 0.0, Jw)
    return FitResult(beta, omega, 0.0, 0.0, 0.0, 0.0, [obj], 1, True,
                     list(panel.series_names), list(panel.class_names), means, flags)
