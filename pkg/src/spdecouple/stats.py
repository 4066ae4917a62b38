"""Estimators for coupling-time samples and geometric block decay."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


class InsufficientData(RuntimeError):
    pass


class DegenerateFit(RuntimeError):
    pass


def mean_ci(samples, level: float = 0.95) -> tuple:
    """Normal-approximation confidence interval for the mean."""
    samples = np.asarray(samples, dtype=float)
    m = float(np.mean(samples))
    if samples.size < 2:
        return (m, m)
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    z = sps.norm.ppf(0.5 + level / 2.0)
    return (m - z * se, m + z * se)


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple:
    """Exact binomial confidence interval."""
    if trials == 0:
        return (0.0, 1.0)
    a = 1.0 - level
    lo = 0.0 if successes == 0 else sps.beta.ppf(a / 2, successes, trials - successes + 1)
    hi = 1.0 if successes == trials else sps.beta.ppf(1 - a / 2, successes + 1, trials - successes)
    return (float(lo), float(hi))


def survival_curve(taus: np.ndarray, censored: np.ndarray, t_grid: np.ndarray,
                   level: float = 0.95):
    """Empirical P(tau >= t) on a time grid; censored samples count as tau > t_max.

    Returns (p_hat, ci_lo, ci_hi) arrays.  Valid for t up to the censoring
    horizon, which is how it is used here.
    """
    n = len(taus)
    p, lo, hi = np.empty(len(t_grid)), np.empty(len(t_grid)), np.empty(len(t_grid))
    alive = np.where(censored, np.inf, taus)
    for j, t in enumerate(t_grid):
        k = int(np.sum(alive >= t))
        p[j] = k / n
        lo[j], hi[j] = clopper_pearson(k, n, level)
    return p, lo, hi


@dataclass
class TauStats:
    n_samples: int
    n_censored: int
    mean: float
    mean_ci: tuple
    t_grid: np.ndarray
    survival: np.ndarray
    survival_ci_lo: np.ndarray
    survival_ci_hi: np.ndarray
    exp_moment: float          # mean of e^{tau/(2 Lambda^2)} over uncensored samples
    exp_moment_rate: float     # 1/(2 Lambda^2)
    tail_rate: float           # fitted exponential tail rate of the survival curve
    bound_mean: float          # f(|x1-x2|) from the Lyapunov table
    bound_exp_moment_proof: float   # e^{f(|x1-x2|)/(2 Lambda^2)}
    bound_exp_moment_stated: float  # e^{1/Lambda}


def estimate_tau_stats(outcomes, table, r0: float | None = None,
                       t_grid: np.ndarray | None = None) -> TauStats:
    """Summarize coupling-time samples against the Lyapunov-function bounds.

    outcomes: list of CouplingOutcome.  table: LyapunovTable.  r0: initial
    difference norm |x1 - x2| used for the theoretical comparisons.
    """
    taus = np.array([o.tau if o.tau is not None else np.nan for o in outcomes])
    censored = np.array([o.censored for o in outcomes])
    blow = np.array([o.blowup for o in outcomes])
    keep = ~blow
    taus, censored = taus[keep], censored[keep]
    unc = taus[~censored]
    if len(unc) < 30:
        raise InsufficientData(f"only {len(unc)} uncensored samples (need 30)")

    t_max = outcomes[0].t_max
    if t_grid is None:
        t_grid = np.linspace(0.0, t_max, 101)
    p, lo, hi = survival_curve(taus, censored, t_grid)

    Lam = table.Lambda
    rate = 1.0 / (2.0 * Lam**2)
    exp_moment = float(np.mean(np.exp(rate * unc)))
    # censored samples only increase the exponential moment; disclosed via n_censored

    pos = (p > 0) & (t_grid > 0)
    if pos.sum() >= 3:
        slope = np.polyfit(t_grid[pos], np.log(p[pos]), 1)[0]
        tail_rate = float(max(-slope, 0.0))
    else:
        tail_rate = float("nan")

    if r0 is None:
        r0 = float("nan")
    bound_mean = table.eval(r0, "f") if np.isfinite(r0) else float("nan")
    return TauStats(
        n_samples=len(taus), n_censored=int(censored.sum()),
        mean=float(np.mean(unc)), mean_ci=mean_ci(unc),
        t_grid=t_grid, survival=p, survival_ci_lo=lo, survival_ci_hi=hi,
        exp_moment=exp_moment, exp_moment_rate=rate, tail_rate=tail_rate,
        bound_mean=bound_mean,
        bound_exp_moment_proof=math.exp(rate * bound_mean) if np.isfinite(bound_mean) else float("nan"),
        bound_exp_moment_stated=math.exp(1.0 / Lam),
    )


def fit_decay(series) -> tuple:
    """Least-squares geometric decay rate from (k, p_k) pairs.

    Zero-probability entries truncate the fit range (disclosed by the caller).
    Returns (rate, goodness) where goodness is the coefficient of determination.
    """
    ks = np.array([k for k, p in series], dtype=float)
    ps = np.array([p for k, p in series], dtype=float)
    if np.any(ps < 0):
        raise ValueError("probabilities must be nonnegative")
    if np.any(ps == 0):
        first_zero = int(np.argmax(ps == 0))
        ks, ps = ks[:first_zero], ps[:first_zero]
    if len(ks) < 3:
        raise DegenerateFit(f"only {len(ks)} usable points (need 3)")
    y = np.log(ps)
    slope, intercept = np.polyfit(ks, y, 1)
    resid = y - (slope * ks + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    goodness = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(max(-slope, 0.0)), float(goodness)
