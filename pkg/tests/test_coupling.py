import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from spdecouple.coupling import (CoupledPair, _mix_noise_rows, coupled_step, reflect,
                                 run_coupled_ensemble, run_until_coupled)
from spdecouple.drifts import ReactionDiffusion, Zero
from spdecouple.grid import Field, Grid, inner, l2_norm_rows, norm, unit_mode
from spdecouple.noise import NoiseStream, sample_white_increment
from spdecouple.solvers import SolverConfig


def test_reflect_flips_parallel_component():
    g = Grid(16)
    e = unit_mode(g, 1)
    assert np.allclose(reflect(e, e).values, -e.values, atol=1e-12)


def test_reflect_fixes_orthogonal():
    g = Grid(16)
    e = unit_mode(g, 1)
    v = unit_mode(g, 3)
    assert np.allclose(reflect(v, e).values, v.values, atol=1e-12)


def test_reflect_involution():
    g = Grid(16)
    rng = np.random.default_rng(9)
    e = unit_mode(g, 2)
    for _ in range(50):
        v = Field(g, rng.normal(size=16))
        assert np.allclose(reflect(reflect(v, e), e).values, v.values, atol=1e-12)


def test_reflect_requires_unit_direction():
    g = Grid(16)
    with pytest.raises(ValueError):
        reflect(unit_mode(g, 1), Field(g, 2.0 * unit_mode(g, 1).values))


def test_mix_preserves_white_noise_law():
    # each marginal increment (dW1 + H dW2)/sqrt2 is again white noise
    g = Grid(16)
    dt = 1e-3
    M = 100_000
    s1, s2 = NoiseStream(77, 0), NoiseStream(77, 1)
    dW1 = np.sqrt(dt / g.dx) * s1.standard_block((M, 16))
    dW2 = np.sqrt(dt / g.dx) * s2.standard_block((M, 16))
    d = np.tile(unit_mode(g, 1).values + 0.3 * unit_mode(g, 2).values, (M, 1))
    a1, a2 = _mix_noise_rows(d, dW1, dW2, g.dx, np.ones(M, dtype=bool))
    se = dt * np.sqrt(2.0 / M)
    for a in (a1, a2):
        for k in (1, 2, 5):
            proj = g.dx * a @ unit_mode(g, k).values
            assert abs(np.var(proj) - dt) < 3 * se
            assert abs(np.mean(proj)) < 3 * np.sqrt(dt / M)


def test_difference_noise_is_one_dimensional():
    # noise felt by x1 - x2 has variance 4 dt along e and zero orthogonal to it
    g = Grid(16)
    dt = 1e-3
    M = 100_000
    dW1 = np.sqrt(dt / g.dx) * NoiseStream(5, 0).standard_block((M, 16))
    dW2 = np.sqrt(dt / g.dx) * NoiseStream(5, 1).standard_block((M, 16))
    e = unit_mode(g, 1)
    d = np.tile(2.0 * e.values, (M, 1))
    a1, a2 = _mix_noise_rows(d, dW1, dW2, g.dx, np.ones(M, dtype=bool))
    diff = a1 - a2
    along = g.dx * diff @ e.values
    ortho = g.dx * diff @ unit_mode(g, 2).values
    assert abs(np.var(along) - 4.0 * dt) < 3 * 4.0 * dt * np.sqrt(2.0 / M)
    assert np.abs(ortho).max() < 1e-14


def test_merged_pair_stays_bitwise_equal():
    g = Grid(8)
    cfg = SolverConfig(dt=1e-3)
    x = Field(g, np.sin(np.pi * g.xi))
    pair = CoupledPair(x, x.copy(), regime="merged")
    s1, s2 = NoiseStream(3, 0), NoiseStream(3, 1)
    for _ in range(20):
        pair = coupled_step(pair, ReactionDiffusion(1.0), cfg,
                            sample_white_increment(g, cfg.dt, s1),
                            sample_white_increment(g, cfg.dt, s2), 1e-6)
        assert np.array_equal(pair.x1.values, pair.x2.values)
    assert pair.regime == "merged"


def test_identical_start_couples_immediately():
    g = Grid(8)
    x = Field(g, np.ones(8))
    out = run_until_coupled(x, x.copy(), Zero(), SolverConfig(dt=1e-3), 1.0, 1e-6, 1)
    assert out.tau == 0.0
    assert not out.censored


def test_far_apart_single_step_censors():
    g = Grid(8)
    x1 = Field(g, 5.0 * np.ones(8))
    x2 = Field(g, -5.0 * np.ones(8))
    cfg = SolverConfig(dt=1e-3)
    out = run_until_coupled(x1, x2, Zero(), cfg, cfg.dt, 1e-6, 1)
    assert out.censored
    assert out.tau is None
    assert out.t_max == cfg.dt


def test_t_max_validation():
    g = Grid(8)
    x = Field(g, np.ones(8))
    with pytest.raises(ValueError):
        run_until_coupled(x, x, Zero(), SolverConfig(dt=1e-3), 0.0, 1e-6, 1)


def _oracle_taus(r0, lam, dt, eps, t_max, M, seed):
    """Signed 1-D amplitude dr = -lam r dt + 2 dbeta, absorbed at r <= eps."""
    rng = np.random.Generator(np.random.Philox(seed))
    r = np.full(M, r0)
    tau = np.full(M, np.inf)
    alive = np.ones(M, dtype=bool)
    n_steps = int(round(t_max / dt))
    for s in range(1, n_steps + 1):
        z = rng.standard_normal(M)
        r[alive] = (r[alive] + 2.0 * math.sqrt(dt) * z[alive]) / (1.0 + dt * lam)
        hit = alive & (r <= eps)
        tau[hit] = s * dt
        alive &= ~hit
        if not alive.any():
            break
    return tau


def test_tau_matches_one_dimensional_oracle():
    # b = 0, difference on the first sine mode: the difference stays on the
    # mode ray, so tau follows the 1-D absorbed diffusion exactly
    g = Grid(16)
    dt = 1e-4
    M = 1000
    e1 = unit_mode(g, 1).values
    res = run_coupled_ensemble(np.tile(0.5 * e1, (M, 1)), np.tile(-0.5 * e1, (M, 1)),
                               g, Zero(), SolverConfig(dt=dt), 5.0, 1e-6, 4242)
    assert res.censored.sum() == 0
    oracle = _oracle_taus(1.0, g.lam1, dt, 1e-6, 5.0, M, 512)
    stat = ks_2samp(res.tau, oracle).statistic
    assert stat <= 0.1


def test_eps_stability_of_tau():
    g = Grid(16)
    dt = 1e-4
    M = 300
    e1 = unit_mode(g, 1).values
    x1, x2 = np.tile(0.5 * e1, (M, 1)), np.tile(-0.5 * e1, (M, 1))
    medians = []
    for eps in (1e-4, 1e-5, 1e-6):
        res = run_coupled_ensemble(x1, x2, g, Zero(), SolverConfig(dt=dt),
                                   5.0, eps, 900)
        medians.append(np.median(res.tau))
    # bootstrap-free width proxy: 1.57 IQR / sqrt(M) on the tightest case
    res = run_coupled_ensemble(x1, x2, g, Zero(), SolverConfig(dt=dt), 5.0, 1e-6, 900)
    q1, q3 = np.percentile(res.tau, [25, 75])
    width = 2 * 1.57 * (q3 - q1) / math.sqrt(M)
    assert max(medians) - min(medians) <= width


def test_ensemble_determinism_and_stream_isolation():
    g = Grid(8)
    e1 = unit_mode(g, 1).values
    cfg = SolverConfig(dt=1e-3)
    a = run_coupled_ensemble(np.tile(e1, (4, 1)), np.tile(-e1, (4, 1)), g, Zero(),
                             cfg, 1.0, 1e-6, 31)
    b = run_coupled_ensemble(np.tile(e1, (4, 1)), np.tile(-e1, (4, 1)), g, Zero(),
                             cfg, 1.0, 1e-6, 31)
    assert np.array_equal(a.tau, b.tau, equal_nan=True)
    # trajectory i alone reproduces its full-ensemble result (stream isolation)
    solo = run_coupled_ensemble(e1[None, :], -e1[None, :], g, Zero(), cfg, 1.0,
                                1e-6, 31, stream_base=4)
    assert solo.tau[0] == a.tau[2]


def test_outcomes_structure():
    g = Grid(8)
    e1 = unit_mode(g, 1).values
    res = run_coupled_ensemble(np.tile(0.2 * e1, (3, 1)), np.tile(-0.2 * e1, (3, 1)),
                               g, Zero(), SolverConfig(dt=1e-3), 2.0, 1e-6, 17)
    outs = res.outcomes()
    assert [o.trajectory_id for o in outs] == [0, 1, 2]
    for o in outs:
        assert o.censored or o.tau >= 0.0
