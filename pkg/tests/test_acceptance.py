"""End-to-end acceptance suite.

Thirteen numbered criteria covering the Lyapunov table, the reflection-coupling
machinery, the coupling-time bounds, the staged Burgers decay, marginal
preservation, determinism of the shipped configs, and the plotting package.
Each test prints a single PASS/FAIL line with the measured quantities
(run with ``pytest -s tests/test_acceptance.py`` to see them).
"""

import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ks_2samp

from spdecouple import (
    Field,
    Grid,
    ReactionDiffusion,
    SolverConfig,
    StagedParams,
    Zero,
    build_f,
    dissipativity_constants,
    estimate_tau_stats,
    fit_decay,
    inner,
    load_config,
    norm,
    reflect,
    run_coupled_ensemble,
    solve_deterministic_burgers,
    unit_mode,
)
from spdecouple.coupling import _mix_noise_rows
from spdecouple.drifts import Burgers, cutoff_square, drift_eval_rows
from spdecouple.ensemble import run_plain_ensemble
from spdecouple.harness import OBSERVABLES, generator_check, run_experiment, tv_check
from spdecouple.solvers import to_modes
from spdecouple.staged import run_staged_ensemble

ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = ROOT / "configs"


def _check(num, ok, detail):
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


# -- shared expensive artifacts ----------------------------------------------


@pytest.fixture(scope="session")
def rd_table():
    return build_f(dissipativity_constants(1.0), r_max=10.0)


@pytest.fixture(scope="session")
def rd_ensembles(rd_table):
    """Reflection-coupled cubic-drift ensembles at three starting separations.

    n = 32, dt = 1e-4, M = 500.  The r0 = 2 ensemble also records the built-in
    test functions on [0, 2] so the coupling inequality can be audited.
    """
    g = Grid(32)
    cfg = SolverConfig(dt=1e-4)
    spec = ReactionDiffusion(alpha=1.0)
    e1 = unit_mode(g, 1).values
    M = 500
    out = {}
    for r0, seed in ((0.5, 1001), (1.0, 1002)):
        x1 = np.tile(0.5 * r0 * e1, (M, 1))
        out[r0] = run_coupled_ensemble(x1, -x1, g, spec, cfg, 10.0, 1e-6, seed)
    obs_names = tuple(OBSERVABLES)
    observables = [OBSERVABLES[name][0] for name in obs_names]
    x1 = np.tile(e1, (M, 1))
    res = run_coupled_ensemble(x1, -x1, g, spec, cfg, 10.0, 1e-6, 1003,
                               record_times=np.linspace(0.0, 2.0, 11),
                               observables=observables)
    out[2.0] = res
    out["obs_names"] = obs_names
    out["grid"] = g
    return out


@pytest.fixture(scope="session")
def shipped_runs(tmp_path_factory):
    """Every config in configs/ run with worker counts 1 and 8."""
    base = tmp_path_factory.mktemp("shipped")
    runs = {}
    for path in sorted(CONFIG_DIR.glob("*.cfg")):
        config = load_config(path)
        dirs = {}
        for threads in (1, 8):
            out_dir = base / f"{path.stem}_t{threads}"
            run_experiment(config, out_dir, threads=threads)
            dirs[threads] = out_dir
        runs[path.stem] = dirs
    return runs


# -- criteria -----------------------------------------------------------------


def test_01_lyapunov_table_quality(rd_table):
    t0 = time.perf_counter()
    table = build_f(dissipativity_constants(1.0), r_max=10.0)
    elapsed = time.perf_counter() - t0
    consts = table.params["consts"] if "consts" in table.params else None
    a, lam = 1.0 / 6.0, 0.0
    # central differences need interior points; stop one step inside r_max
    rs = np.linspace(0.01, 10.0 - 2e-4, 400)
    worst_resid = max(abs(table.ode_residual(float(r))) for r in rs)
    knots = table.r[table.r > 0]
    fprime = np.array([table.eval(float(r), "fprime") for r in knots])
    product = (a * knots**3 - lam * knots) * fprime
    ok = (worst_resid <= 1e-5
          and np.all(product < 1.0)
          and np.all(np.diff(fprime) < 0.0)
          and np.all(fprime > 0.0)
          and math.isfinite(table.Lambda)
          and elapsed < 10.0)
    _check(1, ok,
           f"max |ode residual| = {worst_resid:.2e} (<= 1e-5), "
           f"max drift-gain product = {product.max():.4f} (< 1), "
           f"f' positive and strictly decreasing, Lambda = {table.Lambda:.5f}, "
           f"build time {elapsed:.2f} s (< 10 s)")


def test_02_reflection_algebra_and_noise_law():
    t0 = time.perf_counter()
    g = Grid(16)
    rng = np.random.default_rng(7)
    e = unit_mode(g, 1)
    v = Field(g, rng.normal(size=g.n_interior))
    rv = reflect(v, e)
    rrv = reflect(rv, e)
    involution = float(np.max(np.abs(rrv.values - v.values)))
    norm_gap = abs(norm(rv, "L2") - norm(v, "L2"))
    # component along e flips, the orthogonal part is untouched
    flip_gap = abs(inner(rv, e) + inner(v, e))
    ortho_gap = float(np.max(np.abs(
        (rv.values - inner(rv, e) * e.values) - (v.values - inner(v, e) * e.values))))

    # the mixed driving noise of the second marginal stays white
    M, dt = 100_000, 1e-3
    scale = math.sqrt(dt / g.dx)
    d = np.tile(unit_mode(g, 1).values, (M, 1))
    dW1 = scale * rng.standard_normal((M, g.n_interior))
    dW2 = scale * rng.standard_normal((M, g.n_interior))
    m1, m2 = _mix_noise_rows(d, dW1, dW2, g.dx, np.ones(M, dtype=bool))
    worst_z = 0.0
    for k in (1, 2, 5):
        ek = unit_mode(g, k).values
        for m in (m1, m2):
            coeffs = g.dx * m @ ek
            var = float(np.var(coeffs))
            z = abs(var - dt) / (dt * math.sqrt(2.0 / M))
            worst_z = max(worst_z, z)
    elapsed = time.perf_counter() - t0
    ok = (involution <= 1e-12 and norm_gap <= 1e-12 and flip_gap <= 1e-12
          and ortho_gap <= 1e-12 and worst_z <= 3.0 and elapsed < 30.0)
    _check(2, ok,
           f"involution gap {involution:.1e}, norm gap {norm_gap:.1e}, "
           f"sign-flip gap {flip_gap:.1e}, orthogonal-part gap {ortho_gap:.1e} "
           f"(all <= 1e-12), worst mode-variance z = {worst_z:.2f} (<= 3), "
           f"runtime {elapsed:.1f} s (< 30 s)")


def _absorbed_amplitude_taus(r0, lam, dt, eps, t_max, M, seed):
    """Signed 1-D amplitude dr = -lam r dt + 2 dbeta, absorbed at r <= eps."""
    rng = np.random.Generator(np.random.Philox(seed))
    r = np.full(M, r0)
    tau = np.full(M, np.inf)
    alive = np.ones(M, dtype=bool)
    for s in range(1, int(round(t_max / dt)) + 1):
        z = rng.standard_normal(M)
        r[alive] = (r[alive] + 2.0 * math.sqrt(dt) * z[alive]) / (1.0 + dt * lam)
        hit = alive & (r <= eps)
        tau[hit] = s * dt
        alive &= ~hit
        if not alive.any():
            break
    return tau


def test_03_meeting_time_matches_amplitude_oracle():
    t0 = time.perf_counter()
    g = Grid(16)
    dt, M = 1e-4, 1000
    e1 = unit_mode(g, 1).values
    res = run_coupled_ensemble(np.tile(0.5 * e1, (M, 1)), np.tile(-0.5 * e1, (M, 1)),
                               g, Zero(), SolverConfig(dt=dt), 5.0, 1e-6, 4242)
    oracle = _absorbed_amplitude_taus(1.0, g.lam1, dt, 1e-6, 5.0, M, 512)
    stat = float(ks_2samp(res.tau, oracle).statistic)
    elapsed = time.perf_counter() - t0
    ok = res.censored.sum() == 0 and stat <= 0.1 and elapsed < 300.0
    _check(3, ok,
           f"KS statistic vs 1-D absorbed diffusion = {stat:.4f} (<= 0.1), "
           f"{int(res.censored.sum())} censored, runtime {elapsed:.0f} s (< 5 min)")


def test_04_mean_coupling_time_bound(rd_table, rd_ensembles):
    details, ok = [], True
    for r0 in (0.5, 1.0, 2.0):
        stats = estimate_tau_stats(rd_ensembles[r0].outcomes(), rd_table, r0=r0)
        bound = 1.10 * rd_table.eval(r0, "f")
        good = stats.mean_ci[1] <= bound
        ok &= good
        details.append(f"r0={r0}: CI-hi {stats.mean_ci[1]:.3f} <= {bound:.3f}"
                       f" [{'ok' if good else 'VIOLATED'}]")
    _check(4, ok, "upper 95% CI of mean tau vs 1.10 f(r0): " + "; ".join(details))


def test_05_survival_tail_bound(rd_table, rd_ensembles):
    details, ok = [], True
    rate = 1.0 / (2.0 * rd_table.Lambda**2)
    for r0 in (0.5, 1.0, 2.0):
        stats = estimate_tau_stats(rd_ensembles[r0].outcomes(), rd_table, r0=r0)
        envelope = np.minimum(np.exp(rate * (stats.bound_mean - stats.t_grid)), 1.0)
        margin = float(np.max(stats.survival_ci_lo - envelope))
        good = margin <= 0.0
        ok &= good
        details.append(f"r0={r0}: max(ci_lo - envelope) = {margin:.3f}"
                       f" [{'ok' if good else 'VIOLATED'}]")
    _check(5, ok, "survival curve vs exponential envelope at every grid time: "
           + "; ".join(details))


def test_06_coupling_inequality_zero_violations(rd_ensembles):
    rows = tv_check(rd_ensembles[2.0], rd_ensembles["obs_names"])
    n_bad = sum(r["violation"] for r in rows)
    worst = max(r["diff"] - r["bound"] for r in rows)
    ok = n_bad == 0
    _check(6, ok,
           f"{len(rows)} (t, phi) checks, {n_bad} violations beyond CI slack, "
           f"worst diff-bound margin {worst:.3f}")


def test_07_one_step_generator_identity():
    t0 = time.perf_counter()
    out = generator_check(load_config(CONFIG_DIR / "generator_check.cfg"))
    elapsed = time.perf_counter() - t0
    ok = len(out["cases"]) == 2 and all(c["within_3se"] for c in out["cases"])
    ok &= elapsed < 300.0
    detail = "; ".join(
        f"{c['case']}: drift {c['mc_drift']:.4f} vs {c['prediction']:.4f} "
        f"(z = {c['z']:.2f})" for c in out["cases"])
    _check(7, ok, detail + f"; runtime {elapsed:.0f} s (< 5 min)")


def test_08_cutoff_drift_bounds():
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    g = Grid(32)
    R = 1.5
    worst_norm, worst_lip = -np.inf, -np.inf
    for _ in range(10_000):
        x = rng.normal(scale=rng.uniform(0.05, 3.0), size=g.n_interior)
        y = x + rng.normal(scale=rng.uniform(0.01, 2.0), size=g.n_interior)
        fx = cutoff_square(Field(g, x), R)
        fy = cutoff_square(Field(g, y), R)
        worst_norm = max(worst_norm, norm(fx, "L2") - R**2)
        worst_lip = max(worst_lip,
                        norm(Field(g, fx.values - fy.values), "L2")
                        - 2.0 * R * norm(Field(g, x - y), "L4"))
    elapsed = time.perf_counter() - t0
    ok = worst_norm <= 1e-12 and worst_lip <= 1e-12 and elapsed < 10.0
    _check(8, ok,
           f"10^4 pairs: max(|F_R(u)| - R^2) = {worst_norm:.2e}, "
           f"max Lipschitz excess = {worst_lip:.2e} (both <= 1e-12), "
           f"runtime {elapsed:.1f} s (< 10 s)")


def test_09_deterministic_burgers_decay_and_pairing():
    t0 = time.perf_counter()
    g = Grid(255)
    cfg = SolverConfig(dt=1e-4)
    x0 = Field(g, np.sin(np.pi * g.xi))
    base = norm(x0, "L4") ** 4
    ratios = []
    decay_ok = True
    for t in (0.1, 0.5, 1.0):
        val = norm(solve_deterministic_burgers(x0, t, cfg), "L4") ** 4
        bound = 1.05 * math.exp(-np.pi**2 * t / 4.0) * base
        ratios.append(val / bound)
        decay_ok &= val <= bound

    # discrete convection-cubic pairing vanishes at second order in h
    pairings = []
    for n in (63, 127, 255):
        gn = Grid(n)
        u = (np.sin(np.pi * gn.xi) + 0.5 * np.sin(2.0 * np.pi * gn.xi))[None, :]
        b = drift_eval_rows(Burgers(), u, gn)
        pairings.append(abs(float(gn.dx * np.sum(b * u**3))))
    order = float(np.polyfit(np.log([63, 127, 255]), np.log(pairings), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = decay_ok and -order >= 1.8 and elapsed < 120.0
    _check(9, ok,
           f"L4^4 decay margins (value/bound) = "
           f"{', '.join(f'{r:.3f}' for r in ratios)} (all <= 1), "
           f"pairing magnitudes {', '.join(f'{p:.2e}' for p in pairings)}, "
           f"empirical order {-order:.2f} (>= 1.8), "
           f"runtime {elapsed:.0f} s (< 2 min)")


def test_10_staged_burgers_geometric_decay(shipped_runs):
    out_dir = shipped_runs["burgers_staged"][1]
    rows = np.genfromtxt(out_dir / "staged.csv", delimiter=",", names=True)
    summary = json.loads((out_dir / "summary.json").read_text())
    p, lo, hi, F = rows["p_uncoupled"], rows["ci_lo"], rows["ci_hi"], rows["F_k"]
    strictly_down = bool(np.all(np.diff(p[2:]) < 0.0))
    gamma_hat = summary["fit"]["gamma_hat"]
    goodness = summary["fit"]["goodness"]
    # CI slack for F_k scaled by the mean weight among uncoupled pairs
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.nanmax(np.where(p > 0, F / p, np.nan))
    slack = weight * (hi - lo) / 2.0
    f_ok = bool(np.all(np.diff(F) <= (slack[1:] + slack[:-1])))
    ok = strictly_down and gamma_hat > 0 and goodness >= 0.9 and f_ok
    _check(10, ok,
           f"p_hat strictly decreasing for k >= 2: {strictly_down}, "
           f"gamma_hat = {gamma_hat:.3f} (> 0), goodness = {goodness:.4f} (>= 0.9), "
           f"F_k nonincreasing within CI slack: {f_ok}")


def test_11_marginal_preservation():
    # first marginal of the coupled run vs an independent plain run, compared
    # through mode-1 amplitude and squared L2 norm at the same time
    level = 0.01
    details, ok = [], True

    g = Grid(16)
    cfg = SolverConfig(dt=1e-3)
    spec = ReactionDiffusion(alpha=1.0)
    e1 = unit_mode(g, 1).values
    M = 2000

    def obs_mode1(values, grid):
        return to_modes(grid, values)[..., 0]

    def obs_l2sq(values, grid):
        return grid.dx * np.sum(values**2, axis=-1)

    res = run_coupled_ensemble(np.tile(0.8 * e1, (M, 1)), np.tile(-0.8 * e1, (M, 1)),
                               g, spec, cfg, 0.5, 1e-6, 2101,
                               record_times=[0.5], observables=[obs_mode1, obs_l2sq])
    plain = run_plain_ensemble(np.tile(0.8 * e1, (M, 1)), g, spec, cfg, 0.5, 2102)
    keep_c, keep_p = ~res.blowup, ~plain.blowup
    for oi, name in enumerate(("mode-1", "|X|_2^2")):
        coupled_samples = res.records[0, oi, 0, keep_c]
        plain_samples = [obs_mode1, obs_l2sq][oi](plain.states[keep_p], g)
        pv = float(ks_2samp(coupled_samples, plain_samples).pvalue)
        good = pv >= level
        ok &= good
        details.append(f"cubic drift {name}: p = {pv:.3f}"
                       f" [{'ok' if good else 'VIOLATED'}]")

    g32 = Grid(32)
    params = StagedParams(rho0=1.2, rho1=0.3, R=2.5, dt=1e-3,
                          wait_coupling="independent")
    e1 = unit_mode(g32, 1).values
    M = 500
    staged = run_staged_ensemble(np.tile(0.8 * e1, (M, 1)), np.tile(-0.8 * e1, (M, 1)),
                                 g32, params, 1, 2103)
    plain = run_plain_ensemble(np.tile(0.8 * e1, (M, 1)), g32, Burgers(),
                               params.solver_config(), params.T, 2104)
    keep_s, keep_p = ~staged.blowup, ~plain.blowup
    for obs, name in ((obs_mode1, "mode-1"), (obs_l2sq, "|X|_2^2")):
        pv = float(ks_2samp(obs(staged.states_x1[keep_s], g32),
                            obs(plain.states[keep_p], g32)).pvalue)
        good = pv >= level
        ok &= good
        details.append(f"staged convection {name}: p = {pv:.3f}"
                       f" [{'ok' if good else 'VIOLATED'}]")
    _check(11, ok, "two-sample KS at level 0.01: " + "; ".join(details))


def test_12_shipped_configs_thread_determinism(shipped_runs):
    details, ok = [], True
    for name, dirs in sorted(shipped_runs.items()):
        csvs = sorted(p.name for p in dirs[1].glob("*.csv"))
        same = csvs == sorted(p.name for p in dirs[8].glob("*.csv"))
        for fname in csvs:
            same &= filecmp.cmp(dirs[1] / fname, dirs[8] / fname, shallow=False)
        ok &= same
        details.append(f"{name}: {len(csvs)} CSVs"
                       f" {'identical' if same else 'DIFFER'}")
    _check(12, ok, "worker counts 1 vs 8, byte-level CSV comparison: "
           + "; ".join(details))


def test_13_plot_rendering(tmp_path):
    from spdecouple_plots.render import (PlotJob, _render_lyapunov, _render_staged_decay,
                                         _render_survival, _render_tv_table, render)
    from spdecouple_plots.schema import SchemaError, read_table

    fixtures = ROOT / "plots" / "tests" / "fixtures"
    jobs = {
        "survival": ("survival.csv", _render_survival),
        "staged_decay": ("staged.csv", _render_staged_decay),
        "lyapunov": ("lyapunov.csv", _render_lyapunov),
        "tv_table": ("survival.csv", _render_tv_table),
    }
    checks = []
    for kind, (src, fn) in jobs.items():
        out = tmp_path / f"{kind}.png"
        job = PlotJob(kind, [str(fixtures / src)], str(out), 2.0, 0.3)
        path = render(job)
        rendered = Path(path).stat().st_size > 0
        fig = fn(job)
        ax = fig.axes[0]
        if kind == "survival":
            structural = ax.get_yscale() == "log" and len(ax.lines) >= 2
        elif kind == "staged_decay":
            structural = ax.get_yscale() == "log" and (
                len(ax.lines) + len(ax.containers)) >= 2
        elif kind == "lyapunov":
            structural = len(fig.axes) == 2 and len(ax.lines) >= 1
        else:
            structural = len(ax.tables) == 1
        checks.append((kind, rendered and structural))

    bad = tmp_path / "bad.csv"
    bad.write_text("t,p_hat\n0.0,1.0\n")
    with pytest.raises(SchemaError):
        read_table(bad, "survival")
    ok = all(c[1] for c in checks)
    _check(13, ok,
           "figures rendered with expected series and axes: "
           + ", ".join(f"{k}:{'ok' if good else 'BAD'}" for k, good in checks)
           + "; malformed header raises SchemaError")
