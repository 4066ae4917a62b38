"""Reflection coupling of two trajectories and coupling-time extraction.

Before the meeting time the second trajectory receives noise reflected across
the hyperplane orthogonal to x1 - x2 (Householder map in the discrete L2 inner
product); once the trajectories meet they are driven synchronously by
(dW1 + dW2)/sqrt(2) and remain bitwise equal.

Meeting detection: the difference lies entirely along its own unit direction
e, and the coupled noise felt by the difference is one-dimensional along e, so
|x1 - x2| hits the eps_meet threshold within a step exactly when the signed
post-step amplitude <y1 - y2, e> drops to eps_meet or below.  Checking the
signed projection (rather than the post-step norm, which steps over the
threshold almost surely) is the refinement-stable rendering of the continuous
hitting time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .drifts import DriftSpec
from .grid import Field, Grid, l2_norm_rows, l4_norm_rows
from .noise import generator_for
from .solvers import SolverConfig, step_rows

REFLECTING = "reflecting"
MERGED = "merged"


@dataclass
class CoupledPair:
    x1: Field
    x2: Field
    t: float = 0.0
    regime: str = REFLECTING
    merge_time: float | None = None

    def __post_init__(self):
        if self.regime == MERGED and self.merge_time is None:
            self.merge_time = self.t


@dataclass
class CouplingOutcome:
    tau: float | None
    censored: bool
    t_max: float
    trajectory_id: int = 0
    blowup: bool = False


def reflect(v: Field, e: Field) -> Field:
    """Householder reflection v - 2 <v,e> e w.r.t. the discrete L2 inner product."""
    ee = e.grid.dx * np.dot(e.values, e.values)
    if abs(ee - 1.0) > 1e-12:
        raise ValueError(f"e is not a unit field: <e,e> = {ee}")
    proj = e.grid.dx * np.dot(v.values, e.values)
    return Field(v.grid, v.values - 2.0 * proj * e.values)


def _mix_noise_rows(d: np.ndarray, dW1: np.ndarray, dW2: np.ndarray, dx: float,
                    reflecting: np.ndarray):
    """Per-row coupled noise increments (a1, a2) for (M, n) batches.

    Reflecting rows: a1 = (dW1 + H dW2)/sqrt2, a2 = (H dW1 + dW2)/sqrt2 with H
    the Householder map along e = d/|d|.  Merged rows: a1 = a2 = (dW1+dW2)/sqrt2.
    """
    rnorm = l2_norm_rows(d, dx)
    safe = np.where(rnorm > 0.0, rnorm, 1.0)
    e = d / safe[:, None]
    p1 = dx * np.sum(dW1 * e, axis=1)
    p2 = dx * np.sum(dW2 * e, axis=1)
    h1 = dW1 - 2.0 * p1[:, None] * e
    h2 = dW2 - 2.0 * p2[:, None] * e
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    sync = inv_sqrt2 * (dW1 + dW2)
    refl = reflecting[:, None]
    a1 = np.where(refl, inv_sqrt2 * (dW1 + h2), sync)
    a2 = np.where(refl, inv_sqrt2 * (h1 + dW2), sync)
    return a1, a2


def coupled_step(pair: CoupledPair, spec: DriftSpec, cfg: SolverConfig,
                 dW1: Field, dW2: Field, eps_meet: float) -> CoupledPair:
    """One semi-implicit step of the coupled dynamics with meeting detection."""
    grid = pair.x1.grid
    v1 = pair.x1.values[None, :]
    v2 = pair.x2.values[None, :]
    reflecting = np.array([pair.regime == REFLECTING])
    a1, a2 = _mix_noise_rows(v1 - v2, dW1.values[None, :], dW2.values[None, :],
                             grid.dx, reflecting)
    y1 = step_rows(v1, spec, cfg, a1, grid)
    y2 = y1.copy() if pair.regime == MERGED else step_rows(v2, spec, cfg, a2, grid)
    from .solvers import BlowUpError

    if max(l4_norm_rows(y1, grid.dx)[0], l4_norm_rows(y2, grid.dx)[0]) > cfg.blowup_guard:
        raise BlowUpError("coupled step exceeded the blow-up guard")
    t_new = pair.t + cfg.dt
    regime, merge_time = pair.regime, pair.merge_time
    d_pre = v1 - v2
    rnorm = l2_norm_rows(d_pre, grid.dx)[0]
    s_amp = (grid.dx * float(np.sum((y1 - y2) * d_pre)) / rnorm
             if rnorm > 0.0 else 0.0)
    if regime == REFLECTING and s_amp <= eps_meet:
        y2 = y1.copy()
        regime, merge_time = MERGED, t_new
    return CoupledPair(Field(grid, y1[0]), Field(grid, y2[0]), t_new, regime, merge_time)


class EnsembleResult:
    def __init__(self, tau, censored, blowup, t_max, records=None, record_times=None):
        self.tau = tau
        self.censored = censored
        self.blowup = blowup
        self.t_max = t_max
        self.records = records
        self.record_times = record_times

    def outcomes(self) -> list[CouplingOutcome]:
        out = []
        for i in range(len(self.tau)):
            tau = None if self.censored[i] or self.blowup[i] else float(self.tau[i])
            out.append(CouplingOutcome(tau, bool(self.censored[i]), self.t_max,
                                       trajectory_id=i, blowup=bool(self.blowup[i])))
        return out


def run_coupled_ensemble(x1_rows: np.ndarray, x2_rows: np.ndarray, grid: Grid,
                         spec: DriftSpec, cfg: SolverConfig, t_max: float,
                         eps_meet: float, master_seed: int, stream_base: int = 0,
                         record_times: Sequence[float] | None = None,
                         observables: Sequence[Callable] | None = None,
                         block_steps: int = 256) -> EnsembleResult:
    """Run M reflection-coupled pairs until they all meet (or t_max), vectorized.

    Trajectory i draws its two noise streams from counter-based ids
    (stream_base + 2i, stream_base + 2i + 1), so results are independent of
    batching and worker scheduling.  Blown-up trajectories are flagged and
    frozen, never clipped.
    """
    x1 = np.atleast_2d(np.asarray(x1_rows, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2_rows, dtype=float))
    shape = np.broadcast_shapes(x1.shape, x2.shape)
    x1 = np.broadcast_to(x1, shape).copy()
    x2 = np.broadcast_to(x2, shape).copy()
    M, n = x1.shape
    dt, dx = cfg.dt, grid.dx
    n_steps = int(round(t_max / dt))

    rec_steps = []
    if record_times is not None:
        rec_steps = [int(round(t / dt)) for t in record_times]
        n_obs = len(observables)
        records = np.full((len(rec_steps), n_obs, 2, M), np.nan)
    else:
        records = None

    merged = l2_norm_rows(x1 - x2, dx) <= eps_meet
    x2[merged] = x1[merged]
    tau = np.where(merged, 0.0, np.nan)
    blowup = np.zeros(M, dtype=bool)
    done = np.zeros(M, dtype=bool)
    counters = np.zeros(M, dtype=int)
    last_rec = max(rec_steps) if rec_steps else 0

    def snapshot(step_idx):
        if records is None or step_idx not in rec_steps:
            return
        ti = rec_steps.index(step_idx)
        for oi, obs in enumerate(observables):
            records[ti, oi, 0] = obs(x1, grid)
            records[ti, oi, 1] = obs(x2, grid)

    snapshot(0)
    step = 0
    scale = math.sqrt(dt / dx)
    while step < n_steps:
        # a trajectory is finished once merged (and past the recording window)
        done |= blowup | (merged & (step >= last_rec))
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        B = min(block_steps, n_steps - step)
        Z1 = np.empty((active.size, B, n))
        Z2 = np.empty((active.size, B, n))
        for j, i in enumerate(active):
            Z1[j] = generator_for(master_seed, stream_base + 2 * i, counters[i]).standard_normal((B, n))
            Z2[j] = generator_for(master_seed, stream_base + 2 * i + 1, counters[i]).standard_normal((B, n))
            counters[i] += 1
        a_x1, a_x2 = x1[active], x2[active]
        a_merged = merged[active]
        a_blow = blowup[active]
        a_tau = tau[active]
        live = ~a_blow
        for b in range(B):
            t_new = (step + b + 1) * dt
            dW1 = scale * Z1[:, b]
            dW2 = scale * Z2[:, b]
            d_pre = a_x1 - a_x2
            rnorm = l2_norm_rows(d_pre, dx)
            e_pre = d_pre / np.where(rnorm > 0.0, rnorm, 1.0)[:, None]
            m1, m2 = _mix_noise_rows(d_pre, dW1, dW2, dx, ~a_merged)
            y1 = step_rows(a_x1, spec, cfg, m1, grid)
            y2 = step_rows(a_x2, spec, cfg, m2, grid)
            y2[a_merged] = y1[a_merged]
            bad = live & ((l4_norm_rows(y1, dx) > cfg.blowup_guard)
                          | (l4_norm_rows(y2, dx) > cfg.blowup_guard))
            a_blow |= bad
            live = ~a_blow
            a_x1[live] = y1[live]
            a_x2[live] = y2[live]
            s_amp = dx * np.sum((a_x1 - a_x2) * e_pre, axis=1)
            meet = live & ~a_merged & (s_amp <= eps_meet)
            if np.any(meet):
                a_x2[meet] = a_x1[meet]
                a_tau[meet] = t_new
                a_merged |= meet
            if records is not None and (step + b + 1) in rec_steps:
                x1[active], x2[active] = a_x1, a_x2
                snapshot(step + b + 1)
        x1[active], x2[active] = a_x1, a_x2
        merged[active] = a_merged
        blowup[active] = a_blow
        tau[active] = a_tau
        step += B

    censored = ~merged & ~blowup
    return EnsembleResult(tau, censored, blowup, t_max, records,
                          np.array(record_times) if record_times is not None else None)


def run_until_coupled(x1: Field, x2: Field, spec: DriftSpec, cfg: SolverConfig,
                      t_max: float, eps_meet: float, master_seed: int,
                      stream_base: int = 0) -> CouplingOutcome:
    """Step a single coupled pair until it merges or t_max; censoring is disclosed."""
    if t_max <= 0:
        raise ValueError("t_max must be > 0")
    res = run_coupled_ensemble(x1.values[None, :], x2.values[None, :], x1.grid,
                               spec, cfg, t_max, eps_meet, master_seed, stream_base)
    return res.outcomes()[0]
