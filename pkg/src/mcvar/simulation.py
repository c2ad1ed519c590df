"""Monte Carlo study of the LS, single-class and multi-class estimators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .estimate import FitOptions, FitResult, fit_ls, fit_multiclass, fit_singleclass
from .panel import CoefficientSet, MultiClassPanel, PanelSpec, var_stability
from .tuning import RegularizationGrid

logger = logging.getLogger(__name__)

BURN_IN = 100


class Variant(str, Enum):
    VARYING_BETA = "varying-beta"
    VARYING_SIGMA = "varying-sigma"
    VARYING_BOTH = "varying-both"


@dataclass(frozen=True)
class SimulationDesign:
    variant: Variant = Variant.VARYING_BETA
    spec: PanelSpec = PanelSpec(K=15, J=10, T=100, P=1)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.spec.P != 1:
            raise ValueError("the simulation designs are VAR(1) models")
        if self.spec.J < 2:
            raise ValueError("the simulation designs need J >= 2")


def _class_group(k: int, K: int) -> int:
    """Group 0, 1 or 2 for zero-based class ``k``: thirds of the class range."""
    return min(3 * k // K, 2)


ETA = (0.20, 0.25, 0.30)
RHO = (0.05, 0.10, 0.15)


def _leader_block(J: int, cross: float) -> np.ndarray:
    """Upper-left block: 0.5 diagonal and ``cross`` across the first row."""
    A = 0.5 * np.eye(J)
    A[0, 1:] = cross
    return A


def _split(J: int) -> tuple[int, int]:
    h = (J + 1) // 2
    return h, J - h


def varying_beta_matrix(eta: float, J: int = 10) -> np.ndarray:
    """``[[A1, A2], [0, A1]]`` with ``eta`` on the leading rows of each block."""
    h, r = _split(J)
    B = np.zeros((J, J))
    B[:h, :h] = _leader_block(h, eta)
    B[h:, h:] = _leader_block(r, eta)
    B[0, h:] = eta
    return B


def varying_sigma_matrix(J: int = 10) -> np.ndarray:
    """``[[A3, A4], [0, 0.5 I]]``: 0.25 cross effects on the first row only."""
    B = 0.5 * np.eye(J)
    B[0, 1:] = 0.25
    return B


def band_covariance(rho: float, J: int) -> np.ndarray:
    idx = np.arange(J)
    return 0.5 * rho ** np.abs(idx[:, None] - idx[None, :])


def design_parameters(design: SimulationDesign) -> tuple[CoefficientSet, np.ndarray]:
    """True ``(K, 1, J, J)`` coefficients and ``(K, J, J)`` error covariances."""
    K, J = design.spec.K, design.spec.J
    v = design.variant
    Bs, Sigmas = [], []
    for k in range(K):
        g = _class_group(k, K)
        if v in (Variant.VARYING_BETA, Variant.VARYING_BOTH):
            Bs.append(varying_beta_matrix(ETA[g], J))
        else:
            Bs.append(varying_sigma_matrix(J))
        if v in (Variant.VARYING_SIGMA, Variant.VARYING_BOTH):
            Sigmas.append(band_covariance(RHO[g], J))
        else:
            Sigmas.append(0.5 * np.eye(J))
    return CoefficientSet(np.stack(Bs)[:, None]), np.stack(Sigmas)


def run_seed(master_seed: int, run: int) -> np.random.SeedSequence:
    """Seed of run ``run``; depends only on the pair, never on scheduling."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(run),))


def gen_design(design: SimulationDesign, seed) -> tuple[MultiClassPanel, CoefficientSet, np.ndarray]:
    """Simulate one panel from the design after a burn-in of ``BURN_IN`` steps."""
    beta, Sigma = design_parameters(design)
    K, J, T = design.spec.K, design.spec.J, design.spec.T
    rng = np.random.default_rng(seed)
    data = np.empty((K, T, J))
    for k in range(K):
        chol = np.linalg.cholesky(Sigma[k])
        eps = rng.standard_normal((BURN_IN + T, J)) @ chol.T
        B = beta.coef[k, 0]
        y = np.zeros(J)
        path = np.empty((BURN_IN + T, J))
        for t in range(BURN_IN + T):
            y = B @ y + eps[t]
            path[t] = y
        data[k] = path[BURN_IN:]
    return MultiClassPanel(data), beta, Sigma


def maee(estimates: Sequence[CoefficientSet], truths: Sequence[CoefficientSet]) -> float:
    """Mean absolute coefficient error over runs, classes, lags and entries."""
    if len(estimates) != len(truths) or not estimates:
        raise ValueError("need matching, non-empty lists of estimates and truths")
    total = 0.0
    for est, tru in zip(estimates, truths):
        a = est.coef if isinstance(est, CoefficientSet) else np.asarray(est)
        b = tru.coef if isinstance(tru, CoefficientSet) else np.asarray(tru)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        total += float(np.abs(a - b).mean())
    return total / len(estimates)


class DegenerateTestError(ValueError):
    pass


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value for ``mean(a - b) = 0``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = d.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateTestError("all paired differences are equal; the t statistic is undefined")
    t = d.mean() / (sd / np.sqrt(n))
    return float(2.0 * stats.t.sf(abs(t), df=n - 1))


ESTIMATORS = ("ls", "single", "multi")


@dataclass
class StudyOptions:
    fit: FitOptions = field(default_factory=lambda: FitOptions(logdet_weight="likelihood"))
    grid: RegularizationGrid = field(default_factory=RegularizationGrid)
    estimators: tuple[str, ...] = ESTIMATORS
    workers: int = 1


@dataclass
class RunRecord:
    run: int
    seed_entropy: int
    maee: dict[str, float]
    errors: dict[str, str] = field(default_factory=dict)
    selected: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class StudyResult:
    design: SimulationDesign
    master_seed: int
    runs: list[RunRecord]
    estimators: tuple[str, ...]

    def traces(self, name: str) -> list[float]:
        return [r.maee[name] for r in self.runs if r.ok]

    @property
    def mean_maee(self) -> dict[str, float]:
        return {e: float(np.mean(self.traces(e))) if self.traces(e) else float("nan") for e in self.estimators}

    @property
    def excluded(self) -> list[int]:
        return [r.run for r in self.runs if not r.ok]

    def pvalues(self) -> dict[str, float]:
        out = {}
        names = list(self.estimators)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                try:
                    out[f"{a}-vs-{b}"] = paired_ttest(self.traces(a), self.traces(b))
                except ValueError:
                    out[f"{a}-vs-{b}"] = float("nan")
        return out


def _fitters(options: StudyOptions) -> dict[str, Callable[[MultiClassPanel], FitResult]]:
    return {
        "ls": lambda p: fit_ls(p, options.fit.order, options.fit),
        "single": lambda p: fit_singleclass(p, options.grid, options.fit),
        "multi": lambda p: fit_multiclass(p, options.grid, options.fit),
    }


def run_once(design: SimulationDesign, master_seed: int, run: int, options: StudyOptions) -> RunRecord:
    seed = run_seed(master_seed, run)
    panel, truth, _ = gen_design(design, seed)
    fitters = _fitters(options)
    rec = RunRecord(run, int(seed.entropy), {})
    for name in options.estimators:
        try:
            fit = fitters[name](panel)
        except Exception as exc:  # recorded per run, never dropped silently
            rec.errors[name] = f"{type(exc).__name__}: {exc}"
            logger.warning("run %d, estimator %s failed: %s", run, name, exc)
            continue
        rec.maee[name] = maee([fit.beta], [truth])
        rec.selected[name] = fit.selected
    return rec


def _run_once_args(args):
    return run_once(*args)


def run_study(design: SimulationDesign, R: int, master_seed: int,
              options: StudyOptions | None = None, progress: Callable[[RunRecord], None] | None = None) -> StudyResult:
    """Simulate ``R`` panels and score each estimator by MAEE.

    Runs are independent; with ``options.workers > 1`` they execute in a
    process pool and are reassembled in run order, so the result does not
    depend on the parallelism level.
    """
    options = options or StudyOptions()
    if R < 1:
        raise ValueError("need at least one run")
    unknown = set(options.estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    jobs = [(design, master_seed, r, options) for r in range(R)]
    records: list[RunRecord] = []
    if options.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            for rec in pool.map(_run_once_args, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for job in jobs:
            rec = _run_once_args(job)
            records.append(rec)
            if progress:
                progress(rec)
    records.sort(key=lambda r: r.run)
    return StudyResult(design, master_seed, records, tuple(options.estimators))


def check_stability(design: SimulationDesign) -> list[float]:
    beta, _ = design_parameters(design)
    return [var_stability(beta, k) for k in range(beta.K)]
