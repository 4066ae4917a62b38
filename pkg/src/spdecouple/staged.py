"""Staged coupling for the Burgers equation.

Each block of length T repeats: a wait phase of length T0 under the full
Burgers drift, a small-ball entry check on the L4 norms, a reflection-coupled
phase under the cut-off drift until the truncation exit or the block end, and
synchronous continuation.  Coupled pairs stay coupled forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import MERGED, REFLECTING, CoupledPair, _mix_noise_rows
from .drifts import Burgers, CutoffBurgers
from .ensemble import run_plain_ensemble
from .grid import Field, Grid, l2_norm_rows, l4_norm_rows, unit_mode
from .lyapunov import LyapunovTable, build_f_R
from .noise import generator_for
from .solvers import SolverConfig, step_rows
from .stats import clopper_pearson, mean_ci

SYNCHRONOUS = "synchronous"
INDEPENDENT = "independent"


def wait_time(rho0: float, rho1: float) -> float:
    """Deterministic-decay entry time T0 = (16/pi^2) ln(2 rho0 / rho1)."""
    if rho1 > rho0:
        raise ValueError("rho1 must be <= rho0")
    return 16.0 / np.pi**2 * math.log(2.0 * rho0 / rho1)


@dataclass
class StagedParams:
    rho0: float
    rho1: float
    R: float
    T0: float = None
    T: float = None
    nu: float = 1.0
    eps_meet: float = 1e-6
    dt: float = 1e-3
    blowup_guard: float = 1e6
    wait_coupling: str = SYNCHRONOUS

    def __post_init__(self):
        if self.T0 is None:
            self.T0 = wait_time(self.rho0, self.rho1)
        if self.T is None:
            self.T = self.T0 + 1.0
        if self.R <= max(self.rho0, self.rho1):
            raise ValueError("R must exceed max(rho0, rho1)")
        if not self.T > self.T0 > 0:
            raise ValueError("need T > T0 > 0")
        if self.rho1 > 1.0:
            raise ValueError("rho1 must be <= 1")
        if self.wait_coupling not in (SYNCHRONOUS, INDEPENDENT):
            raise ValueError(f"unknown wait_coupling {self.wait_coupling!r}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, blowup_guard=self.blowup_guard)


@dataclass
class BlockOutcome:
    entered_ball: bool
    truncation_exit: bool
    coupled_at_end: bool
    end_state: CoupledPair


@dataclass
class StagedTrace:
    blocks: list = field(default_factory=list)
    l4_x1: list = field(default_factory=list)
    l4_x2: list = field(default_factory=list)
    blowup: bool = False


class StagedEnsembleResult:
    """Per-block records for an ensemble of staged couplings.

    uncoupled[k, i]: pair i not yet coupled after k blocks (k = 0..k_max);
    l4_x1/l4_x2[k, i]: marginal L4 norms at t = kT.
    """

    def __init__(self, k_max, M):
        self.k_max = k_max
        self.uncoupled = np.ones((k_max + 1, M), dtype=bool)
        self.l4_x1 = np.zeros((k_max + 1, M))
        self.l4_x2 = np.zeros((k_max + 1, M))
        self.entered_ball = np.zeros((k_max, M), dtype=bool)
        self.truncation_exit = np.zeros((k_max, M), dtype=bool)
        self.blowup = np.zeros(M, dtype=bool)
        self.states_x1 = None
        self.states_x2 = None

    def p_uncoupled(self, k: int) -> float:
        ok = ~self.blowup
        return float(np.mean(self.uncoupled[k, ok]))


def run_staged_ensemble(x1_rows, x2_rows, grid: Grid, params: StagedParams,
                        k_max: int, master_seed: int, stream_base: int = 0,
                        block_steps: int = 256) -> StagedEnsembleResult:
    """Vectorized staged coupling of M pairs over k_max blocks."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    cfg = params.solver_config()
    dt, dx = params.dt, grid.dx
    x1 = np.atleast_2d(np.asarray(x1_rows, dtype=float)).copy()
    x2 = np.atleast_2d(np.asarray(x2_rows, dtype=float)).copy()
    M, n = x1.shape
    full = Burgers()
    cut = CutoffBurgers(params.R)
    steps_T0 = int(round(params.T0 / dt))
    steps_T = int(round(params.T / dt))

    res = StagedEnsembleResult(k_max, M)
    merged = np.zeros(M, dtype=bool)
    blowup = res.blowup
    counters = np.zeros(M, dtype=int)
    res.uncoupled[0] = True
    res.l4_x1[0] = l4_norm_rows(x1, dx)
    res.l4_x2[0] = l4_norm_rows(x2, dx)
    independent_wait = params.wait_coupling == INDEPENDENT
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    scale = math.sqrt(dt / dx)

    # condition for the reflection phase: both block-start norms within rho0
    for k in range(k_max):
        cond = (~merged & ~blowup
                & (l4_norm_rows(x1, dx) <= params.rho0)
                & (l4_norm_rows(x2, dx) <= params.rho0))
        refl_active = np.zeros(M, dtype=bool)
        trunc = res.truncation_exit[k]
        step_in_block = 0
        while step_in_block < steps_T:
            B = min(block_steps, steps_T - step_in_block)
            Z1 = np.empty((M, B, n))
            Z2 = np.empty((M, B, n))
            for i in range(M):
                Z1[i] = generator_for(master_seed, stream_base + 2 * i, counters[i]).standard_normal((B, n))
                Z2[i] = generator_for(master_seed, stream_base + 2 * i + 1, counters[i]).standard_normal((B, n))
                counters[i] += 1
            live = ~blowup
            for b in range(B):
                s = step_in_block + b
                if s == steps_T0:
                    # small-ball entry check opens the reflection phase
                    cond &= ((l4_norm_rows(x1, dx) <= params.rho1)
                             & (l4_norm_rows(x2, dx) <= params.rho1)
                             & ~merged & live)
                    res.entered_ball[k] = cond
                    refl_active = cond.copy()
                dW1 = scale * Z1[:, b]
                dW2 = scale * Z2[:, b]
                d_pre = x1 - x2
                rnorm = l2_norm_rows(d_pre, dx)
                e_pre = d_pre / np.where(rnorm > 0.0, rnorm, 1.0)[:, None]
                m1, m2 = _mix_noise_rows(d_pre, dW1, dW2, dx, refl_active)
                if independent_wait:
                    wait_rows = ~refl_active & ~merged
                    m1[wait_rows] = dW1[wait_rows]
                    m2[wait_rows] = dW2[wait_rows]
                # cut-off drift only while the reflection phase is active
                y1 = step_rows(x1, full, cfg, m1, grid)
                y2 = step_rows(x2, full, cfg, m2, grid)
                if np.any(refl_active):
                    y1c = step_rows(x1, cut, cfg, m1, grid)
                    y2c = step_rows(x2, cut, cfg, m2, grid)
                    y1[refl_active] = y1c[refl_active]
                    y2[refl_active] = y2c[refl_active]
                y2[merged] = y1[merged]
                n1 = l4_norm_rows(y1, dx)
                n2 = l4_norm_rows(y2, dx)
                bad = live & ((n1 > cfg.blowup_guard) | (n2 > cfg.blowup_guard))
                blowup |= bad
                live = ~blowup
                x1[live] = y1[live]
                x2[live] = y2[live]
                # signed post-step amplitude along the pre-step direction
                s_amp = dx * np.sum((x1 - x2) * e_pre, axis=1)
                meet = refl_active & live & (s_amp <= params.eps_meet)
                if np.any(meet):
                    x2[meet] = x1[meet]
                    merged |= meet
                    refl_active &= ~meet
                # truncation exit: either marginal leaves the R-ball post-step
                exit_R = refl_active & live & ((n1 > params.R) | (n2 > params.R))
                if np.any(exit_R):
                    trunc |= exit_R
                    refl_active &= ~exit_R
            step_in_block += B
        res.uncoupled[k + 1] = ~merged
        res.l4_x1[k + 1] = l4_norm_rows(x1, dx)
        res.l4_x2[k + 1] = l4_norm_rows(x2, dx)

    res.states_x1, res.states_x2 = x1, x2
    return res


def staged_block(pair: CoupledPair, params: StagedParams, master_seed: int,
                 stream_base: int = 0) -> BlockOutcome:
    """Run one block of the staged construction for a single pair."""
    grid = pair.x1.grid
    res = run_staged_ensemble(pair.x1.values[None, :], pair.x2.values[None, :],
                              grid, params, 1, master_seed, stream_base)
    merged = not bool(res.uncoupled[1, 0])
    t_end = pair.t + params.T
    end = CoupledPair(Field(grid, res.states_x1[0]), Field(grid, res.states_x2[0]),
                      t_end, MERGED if merged else REFLECTING,
                      merge_time=t_end if merged and pair.regime != MERGED else pair.merge_time)
    return BlockOutcome(entered_ball=bool(res.entered_ball[0, 0]),
                        truncation_exit=bool(res.truncation_exit[0, 0]),
                        coupled_at_end=merged,
                        end_state=end)


def run_staged(x1: Field, x2: Field, params: StagedParams, k_max: int,
               master_seed: int, stream_base: int = 0) -> StagedTrace:
    """Iterate staged blocks for a single pair, recording per-block status."""
    res = run_staged_ensemble(x1.values[None, :], x2.values[None, :], x1.grid,
                              params, k_max, master_seed, stream_base)
    trace = StagedTrace(blowup=bool(res.blowup[0]))
    for k in range(k_max):
        trace.blocks.append({
            "entered_ball": bool(res.entered_ball[k, 0]),
            "truncation_exit": bool(res.truncation_exit[k, 0]),
            "coupled_at_end": not bool(res.uncoupled[k + 1, 0]),
        })
        trace.l4_x1.append(float(res.l4_x1[k + 1, 0]))
        trace.l4_x2.append(float(res.l4_x2[k + 1, 0]))
    return trace


def kantorovich(res: StagedEnsembleResult, nu: float, k: int) -> float:
    """Ensemble average of (1 + nu(|X1|_L4^4 + |X2|_L4^4)) 1_{X1 != X2} at block k."""
    if k > res.k_max:
        raise ValueError(f"k={k} beyond k_max={res.k_max}")
    ok = ~res.blowup
    w = 1.0 + nu * (res.l4_x1[k, ok] ** 4 + res.l4_x2[k, ok] ** 4)
    return float(np.mean(w * res.uncoupled[k, ok]))


@dataclass
class CalibrationReport:
    rho0: float
    rho1: float
    R: float
    T0: float
    alpha_hat: float
    alpha_ci: tuple
    f_R_log_at_2rho1: float
    condition_312_ok: bool
    condition_313_ok: bool
    K1_hat: float
    K1_ci: tuple
    K2_hat: float
    K2_ci: tuple
    K3_hat: float
    K3_ci: tuple
    delta: float = 1.0

    @property
    def f_R_at_2rho1(self) -> float:
        return math.exp(self.f_R_log_at_2rho1) if self.f_R_log_at_2rho1 < 709 else math.inf


def calibrate(rho0: float, rho1: float, R: float, mc_budget: int,
              master_seed: int, grid: Grid | None = None, dt: float = 1e-3,
              delta: float = 1.0, stream_base: int = 0,
              f_R_table: LyapunovTable | None = None) -> CalibrationReport:
    """Estimate the staged-coupling constants by Monte Carlo.

    T0 comes from the deterministic-decay formula; alpha_hat is the
    probability that a synchronously-driven pair started at worst-case L4 norm
    rho0 has both marginals in the rho1-ball at T0; K1..K3 are empirical
    stand-ins for the a-priori moment constants.
    """
    if rho1 > rho0:
        raise ValueError("rho1 must be <= rho0")
    if mc_budget < 100:
        raise ValueError("mc_budget must be >= 100")
    if grid is None:
        grid = Grid(32)
    T0 = wait_time(rho0, rho1)
    cfg = SolverConfig(dt=dt)
    dx = grid.dx

    # worst-case-norm initial pair: opposite first-mode profiles scaled to |x|_L4 = rho0
    e1 = unit_mode(grid, 1).values
    x1 = e1 * (rho0 / l4_norm_rows(e1[None, :], dx)[0])
    x2 = -x1
    M = mc_budget
    horizon = max(T0 + 1.0, 2.0)
    n_rec = 41
    rec = [round(i * horizon / (n_rec - 1) / dt) * dt for i in range(n_rec)]
    r1 = run_plain_ensemble(np.tile(x1, (M, 1)), grid, Burgers(), cfg, horizon,
                            master_seed, stream_base, record_times=rec)
    # synchronous wait: both marginals see the same noise, so the second
    # marginal's run reuses the same streams with the mirrored start
    r2 = run_plain_ensemble(np.tile(x2, (M, 1)), grid, Burgers(), cfg, horizon,
                            master_seed, stream_base, record_times=rec)

    it0 = int(np.argmin(np.abs(np.array(rec) - T0)))
    ok = ~(r1.blowup | r2.blowup)
    both_in = (r1.l4_records[it0, ok] <= rho1) & (r2.l4_records[it0, ok] <= rho1)
    alpha_hat = float(np.mean(both_in))
    alpha_ci = clopper_pearson(int(both_in.sum()), int(ok.sum()))

    l40 = rho0**4
    ts = np.array(rec)
    # K1: E[sup_{s<=t} |X|_L4^4] <= 4 |x|^4 + K1 (1 + t^delta)
    k1_t = (np.mean(r1.sup_l4pow4[:, ok], axis=1) - 4.0 * l40) / (1.0 + ts**delta)
    i1 = int(np.argmax(k1_t))
    K1_hat = max(float(k1_t[i1]), 0.0)
    K1_ci = mean_ci(r1.sup_l4pow4[i1, ok] / (1.0 + ts[i1] ** delta))
    # K2: E[|X(t)|_L4^4]^{1/4} <= e^{-pi^2 t/16} |x|_L4 + K2
    k2_t = np.mean(r1.l4_records[:, ok] ** 4, axis=1) ** 0.25 - np.exp(-np.pi**2 * ts / 16.0) * rho0
    i2 = int(np.argmax(k2_t))
    K2_hat = max(float(k2_t[i2]), 0.0)
    K2_ci = mean_ci(r1.l4_records[i2, ok] ** 4)
    # K3: E[|X(t)|_L4^4] <= K3 (1 + |x|_L2^4) for t in [1,2]
    l2_0 = l2_norm_rows(x1[None, :], dx)[0]
    in_12 = (ts >= 1.0) & (ts <= 2.0)
    k3_t = np.mean(r1.l4_records[in_12][:, ok] ** 4, axis=1) / (1.0 + l2_0**4)
    i3 = int(np.argmax(k3_t))
    K3_hat = float(k3_t[i3])
    K3_ci = mean_ci(r1.l4_records[in_12][i3, ok] ** 4 / (1.0 + l2_0**4))

    if f_R_table is None:
        f_R_table = build_f_R(R, r_max=max(4.0 * rho1, 2.0))
    log_f2rho1 = f_R_table.eval_log(2.0 * rho1, "f")

    return CalibrationReport(
        rho0=rho0, rho1=rho1, R=R, T0=T0,
        alpha_hat=alpha_hat, alpha_ci=alpha_ci,
        f_R_log_at_2rho1=float(log_f2rho1),
        condition_312_ok=bool((8.0 + 4.0 * K1_hat) / R**4 <= 0.25),
        condition_313_ok=bool(log_f2rho1 <= math.log(0.25)),
        K1_hat=K1_hat, K1_ci=K1_ci, K2_hat=K2_hat, K2_ci=K2_ci,
        K3_hat=K3_hat, K3_ci=K3_ci, delta=delta)
