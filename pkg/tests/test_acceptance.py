"""Acceptance gate: one test and one printed pass/fail line per criterion.

Criteria 1-3 read the full-scale Monte Carlo study from ``acceptance/<design>/``
(written by ``acceptance/run_study.sh``, about an hour per design on one core).
Run 0 of every design is recomputed here and must match the stored row
bit for bit, so the stored results are tied to the current code. With
``MCVAR_FULL_STUDY=1`` a missing design is simulated in-process instead.
"""
import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mcvar.estimate import FitOptions, fit_multiclass, fit_singleclass
from mcvar.io import write_study
from mcvar.jgl import jgl_fit, jgl_objective, residual_covariance
from mcvar.panel import CoefficientSet, MultiClassPanel, PanelSpec, build_stacked
from mcvar.penalties import build_coupling, eval_pairwise_fusion
from mcvar.simulation import SimulationDesign, StudyOptions, gen_design, paired_ttest, run_once, run_seed, run_study
from mcvar.spg import SpgOptions, exact_objective, gls_loss_grad, smooth_fusion, smoothed_objective, spg_fit
from mcvar.tuning import RegularizationGrid, grid_search_omega

from conftest import ACCEPTANCE_LINES, random_stable, simulate_var

ROOT = Path(__file__).resolve().parents[1]
STUDY_DIR = ROOT / "acceptance"
MASTER_SEED = 20240611
RUNS = 100
DESIGNS = ("varying-beta", "varying-sigma", "varying-both")
REFERENCE = {
    "varying-beta": {"ls": 0.124, "single": 0.094, "multi": 0.083},
    "varying-sigma": {"ls": 0.111, "single": 0.081, "multi": 0.073},
    "varying-both": {"ls": 0.124, "single": 0.095, "multi": 0.083},
}


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- study cache

def _read_runs(path: Path) -> dict[str, list[float]]:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if any(r["excluded"] != "0" for r in rows):
        raise AssertionError(f"{path}: runs were excluded: {[r['run'] for r in rows if r['excluded'] != '0']}")
    return {name: [float(r[f"maee_{name}"]) for r in rows] for name in ("ls", "single", "multi")}


def _spot_check(design: str, traces: dict[str, list[float]]):
    rec = run_once(SimulationDesign(design), MASTER_SEED, 0, StudyOptions())
    for name, v in rec.maee.items():
        if v != traces[name][0]:
            raise AssertionError(f"{design}: stored run 0 ({name}={traces[name][0]!r}) does not match "
                                 f"a fresh run ({v!r}); rerun acceptance/run_study.sh")


_STUDY: dict[str, dict[str, list[float]]] = {}


def study(design: str) -> dict[str, list[float]]:
    if design in _STUDY:
        return _STUDY[design]
    outdir = STUDY_DIR / design
    runs_csv, summary = outdir / "runs.csv", outdir / "summary.json"
    if not runs_csv.exists() and os.environ.get("MCVAR_FULL_STUDY") == "1":
        write_study(run_study(SimulationDesign(design), RUNS, MASTER_SEED), outdir)
    if not runs_csv.exists():
        pytest.fail(f"missing {runs_csv}; run acceptance/run_study.sh or set MCVAR_FULL_STUDY=1")
    meta = json.loads(summary.read_text())
    spec = (meta["K"], meta["J"], meta["T"], meta["P"], meta["runs"], meta["master_seed"])
    assert spec == (15, 10, 100, 1, RUNS, MASTER_SEED), f"{summary}: unexpected study settings {spec}"
    traces = _read_runs(runs_csv)
    assert all(len(v) == RUNS for v in traces.values())
    _spot_check(design, traces)
    _STUDY[design] = traces
    return traces


def _means(design):
    return {k: float(np.mean(v)) for k, v in study(design).items()}


# ---------------------------------------------------------------- criteria 1-3

def test_criterion_1_table_ordering():
    parts, ok = [], True
    for d in DESIGNS:
        tr = study(d)
        m = _means(d)
        p = paired_ttest(tr["single"], tr["multi"])
        good = m["multi"] < m["single"] < m["ls"] and p < 0.01
        ok &= good
        parts.append(f"{d}: LS {m['ls']:.4f} > single {m['single']:.4f} > multi {m['multi']:.4f}, "
                     f"p(single vs multi)={p:.2g}")
    record(1, ok, "; ".join(parts))


def test_criterion_2_table_magnitudes():
    parts, ok = [], True
    for d in DESIGNS:
        m = _means(d)
        for est in ("ls", "single", "multi"):
            gap = m[est] - REFERENCE[d][est]
            ok &= abs(gap) <= 0.015
            parts.append(f"{d}/{est} {m[est]:.4f} vs {REFERENCE[d][est]:.3f} ({gap:+.4f})")
    record(2, ok, "tolerance 0.015; " + "; ".join(parts))


def test_criterion_3_relative_improvement():
    m = _means("varying-beta")
    gain = 1.0 - m["multi"] / m["ls"]
    record(3, gain >= 0.25, f"varying-beta: multi improves on LS by {100 * gain:.1f}% (need >= 25%)")


# ---------------------------------------------------------------- criterion 4

def _toy_design(seed=3):
    rng = np.random.default_rng(seed)
    B = np.array([[[0.5]]]), np.array([[[0.2]]])
    data = np.stack([simulate_var(b, 20, rng) for b in B])
    return build_stacked(MultiClassPanel(data), 1)


def _spg_vs_grid():
    d = _toy_design()
    lam1, lam2, mu = 2.0, 1.0, 1e-3
    res = spg_fit(d, np.ones((2, 1, 1)), lam1, lam2, SpgOptions(mu=mu))
    spg_value = exact_objective(res.beta, d, np.ones((2, 1, 1)), lam1, lam2)
    # exact objective on the grid: per-class quadratics plus the two l1 terms
    a = d.gram[:, 0, 0]
    c = d.cross[:, 0, 0]
    e = np.sum(d.Y[:, :, 0] ** 2, axis=1)
    g = np.round(np.linspace(-2.0, 2.0, 4001), 12)
    q1 = a[0] * g * g - 2 * c[0] * g + e[0] + lam2 * np.abs(g)
    q2 = a[1] * g * g - 2 * c[1] * g + e[1] + lam2 * np.abs(g)
    best = np.inf
    for start in range(0, g.size, 500):
        block = q1[start:start + 500, None] + q2[None, :] + lam1 * np.abs(g[start:start + 500, None] - g[None, :])
        best = min(best, float(block.min()))
    allowance = 1e-4 + mu * 1 / 2  # one coupling row
    return spg_value - best, allowance


def _clique_prox_vs_grid():
    from mcvar.jgl import clique_fusion_prox

    x, tf, ts = np.array([0.9, 0.1, 0.5]), 0.3, 0.1
    z = clique_fusion_prox(x, tf, ts)
    g = np.round(np.linspace(-2.0, 2.0, 4001), 12)
    h = 1e-3

    def f(z1, z2, z3):
        return (0.5 * ((z1 - x[0]) ** 2 + (z2 - x[1]) ** 2 + (z3 - x[2]) ** 2)
                + tf * (np.abs(z1 - z2) + np.abs(z1 - z3) + np.abs(z2 - z3))
                + ts * (np.abs(z1) + np.abs(z2) + np.abs(z3)))

    # Exhaustive over (z1, z2); for each pair the objective is convex in z3, so its
    # minimum over the z3 grid sits at a grid neighbour of the continuous minimiser.
    best, arg = np.inf, None
    for start in range(0, g.size, 250):
        z1 = g[start:start + 250, None] * np.ones((1, g.size))
        z2 = np.ones((z1.shape[0], 1)) * g[None, :]
        anchors = np.stack([z1, z2, np.zeros_like(z1)])
        w = np.array([tf, tf, ts])[:, None, None]
        cands = [anchors[0], anchors[1], anchors[2]]
        for s in np.array(np.meshgrid(*[[-1, 1]] * 3)).reshape(3, -1).T:
            cands.append(x[2] - np.sum(w * s[:, None, None], axis=0))
        obj = lambda z3: f(z1, z2, z3)
        star = cands[0]
        val = obj(star)
        for cand in cands[1:]:
            v = obj(cand)
            take = v < val
            star, val = np.where(take, cand, star), np.where(take, v, val)
        lo = np.clip(np.floor(np.round(star / h, 9)) * h, -2.0, 2.0)
        hi = np.clip(lo + h, -2.0, 2.0)
        v_lo, v_hi = obj(lo), obj(hi)
        v = np.minimum(v_lo, v_hi)
        i = np.unravel_index(np.argmin(v), v.shape)
        if v[i] < best:
            best = float(v[i])
            z3 = lo[i] if v_lo[i] <= v_hi[i] else hi[i]
            arg = np.array([z1[i], z2[i], z3])
    return float(np.abs(z - arg).max()), float(f(*z) - best)


def _jgl_vs_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(8)
    S = residual_covariance(rng.normal(size=(2, 30, 2)) @ np.array([[1.0, 0.4], [0.0, 0.8]]))
    N, worst = 30, -np.inf
    for g1, g2 in [(1.0, 1.0), (5.0, 2.0), (0.5, 8.0), (20.0, 0.5)]:
        res = jgl_fit(S, g1, g2, N)
        O = [cp.Variable((2, 2), symmetric=True) for _ in range(2)]
        obj = sum(N * (cp.trace(S[k] @ O[k]) - cp.log_det(O[k])) for k in range(2))
        obj += g1 * cp.sum(cp.abs(O[0] - O[1])) + g2 * sum(cp.sum(cp.abs(o)) for o in O)
        prob = cp.Problem(cp.Minimize(obj))
        prob.solve(solver="CLARABEL")
        ours = jgl_objective(res.omega, S, g1, g2, N)
        # the solver's point, re-evaluated with the same objective code
        ref = jgl_objective(np.stack([o.value for o in O]), S, g1, g2, N)
        worst = max(worst, ours - min(ref, prob.value))
    return worst


def test_criterion_4_oracles():
    spg_gap, allowance = _spg_vs_grid()
    prox_dist, prox_gap = _clique_prox_vs_grid()
    jgl_gap = _jgl_vs_solver()
    ok = spg_gap <= allowance and prox_dist <= 2e-3 and jgl_gap < 1e-4
    record(4, ok, f"spg minus grid {spg_gap:.2e} (allowed {allowance:.1e}); "
                  f"clique prox vs grid argmin {prox_dist:.1e} (allowed 2e-3); "
                  f"jgl minus convex solver {jgl_gap:.1e} (allowed 1e-4)")


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_limits():
    rng = np.random.default_rng(21)
    data = np.stack([simulate_var(random_stable(rng, 3), 50, rng) for _ in range(3)])
    d = build_stacked(MultiClassPanel(data), 1)
    eye = np.stack([np.eye(3)] * 3)
    ols = np.stack([np.linalg.solve(d.gram[k], d.cross[k]) for k in range(3)])
    # the identity concerns the solver's fixed point, so it is run to a tight tolerance
    unpen = spg_fit(d, eye, 0.0, 0.0, SpgOptions(tol=1e-10, max_iter=20000)).beta
    ols_err = float(np.abs(unpen.weights() - ols).max())
    fused = spg_fit(d, eye, 1e4, 0.0).beta
    fused_range = float(np.ptp(fused.coef, axis=0).max())
    empty = spg_fit(d, eye, 0.5, 1e6).beta
    one = MultiClassPanel(data[:1])
    grid = RegularizationGrid(n_default=4)
    opts = FitOptions(logdet_weight="likelihood")
    a, b = fit_multiclass(one, grid, opts), fit_singleclass(one, grid, opts)
    same = (a.beta.coef.tobytes() == b.beta.coef.tobytes() and a.omega.omega.tobytes() == b.omega.omega.tobytes())
    ok = ols_err < 1e-4 and fused_range < 1e-3 and not empty.coef.any() and same
    record(5, ok, f"unpenalized vs OLS {ols_err:.1e}; lam1=1e4 range {fused_range:.1e}; "
                  f"lam2=1e6 nonzeros {np.count_nonzero(empty.coef)}; K=1 multi == single bitwise: {same}")


# ---------------------------------------------------------------- criterion 6

def test_criterion_6_hygiene():
    rng = np.random.default_rng(6)
    worst_grad = 0.0
    for _ in range(20):
        K, J, P = rng.integers(2, 4), rng.integers(1, 4), rng.integers(1, 3)
        data = np.stack([simulate_var(random_stable(rng, J, P), 12, rng) for _ in range(K)])
        d = build_stacked(MultiClassPanel(data), int(P))
        A = rng.normal(size=(K, J, J))
        om = A @ A.transpose(0, 2, 1) + J * np.eye(J)
        beta = CoefficientSet(rng.normal(size=(K, P, J, J)) * 0.3)
        lam1, mu = float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.05, 0.5))
        analytic = (gls_loss_grad(beta, d, om)[1] + smooth_fusion(beta, build_coupling(d.spec, lam1), mu)[1]).ravel()
        f = lambda c: smoothed_objective(CoefficientSet(c.reshape(beta.coef.shape)), d, om, lam1, 0.0, mu)
        x, h = beta.coef.ravel(), 1e-6
        fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])
        worst_grad = max(worst_grad, float(np.linalg.norm(fd - analytic) / np.linalg.norm(analytic)))

    gap_ok = True
    spec = PanelSpec(4, 3, 10, 2)
    for _ in range(100):
        lam1, mu = float(rng.uniform(0, 5)), float(10 ** rng.uniform(-4, 0))
        C = build_coupling(spec, lam1)
        beta = CoefficientSet(rng.normal(size=(4, 2, 3, 3)) * rng.uniform(0.001, 2))
        h, _ = smooth_fusion(beta, C, mu)
        gap = lam1 * eval_pairwise_fusion(beta.flat()) - h
        gap_ok &= -1e-12 <= gap <= mu * C.row_count / 2 + 1e-12

    n_pd, pd_ok = 0, True
    for design in DESIGNS:
        panel, _, _ = gen_design(SimulationDesign(design, PanelSpec(3, 4, 40, 1)), run_seed(6, 0))
        for fit in (fit_multiclass(panel, RegularizationGrid(n_default=3), FitOptions(logdet_weight=w))
                    for w in ("likelihood", "series")):
            pd_ok &= fit.omega.is_positive_definite(1e-10)
            n_pd += 1
    S = residual_covariance(rng.normal(size=(3, 8, 4)))
    sel = grid_search_omega(S, [0.0, 1.0, 10.0], [0.0, 0.5, 5.0, 50.0], 8)
    for g1 in (0.0, 1.0, 10.0):
        for g2 in (0.0, 0.5, 5.0, 50.0):
            pd_ok &= jgl_fit(S, g1, g2, 8).omega.is_positive_definite(1e-10)
            n_pd += 1
    pd_ok &= sel.estimate.is_positive_definite(1e-10)

    ok = worst_grad < 1e-5 and gap_ok and pd_ok
    record(6, ok, f"worst gradient rel. error over 20 instances {worst_grad:.1e}; smoothing gap bound on 100 draws: "
                  f"{gap_ok}; {n_pd + 1} fitted precision sets positive definite: {pd_ok}")


# ---------------------------------------------------------------- criterion 7

def test_criterion_7_determinism(tmp_path):
    outputs = []
    for i, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"run{i}"
        proc = subprocess.run(
            [sys.executable, "-m", "mcvar", "simulate", "--design", "varying-both", "--runs", "3", "--seed", "7",
             "--scale", "3,3,60", "--workers", str(workers), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(((out / "runs.csv").read_bytes(), (out / "summary.json").read_bytes()))
    same = all(o == outputs[0] for o in outputs)
    record(7, same, "simulate with one worker twice and with two workers: outputs bitwise identical" if same
           else "simulate outputs differ between repeats or worker counts")
