"""Figure renderers for the simulation artifacts.

Each job kind maps input CSVs (validated against the documented schemas) to a
single figure file.  Survival and staged-decay plots use a log-scale y-axis;
when the Lyapunov bound Lambda is supplied, the survival plot overlays the
theoretical envelope e^{1/Lambda} e^{-t/(2 Lambda^2)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, read_table

KINDS = ("survival", "staged_decay", "lyapunov", "tv_table")


@dataclass
class PlotJob:
    kind: str
    inputs: list
    out: str
    lambda_: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def render(job: PlotJob) -> str:
    """Render the figure for a job and return the output path."""
    fig = {
        "survival": _render_survival,
        "staged_decay": _render_staged_decay,
        "lyapunov": _render_lyapunov,
        "tv_table": _render_tv_table,
    }[job.kind](job)
    fig.savefig(job.out, dpi=150)
    plt.close(fig)
    return job.out


def _render_survival(job):
    fig, ax = plt.subplots(figsize=(6, 4))
    t_hi = 0.0
    for path in job.inputs:
        tab = read_table(path, "survival")
        t, p = tab["t"], tab["p_hat"]
        floor = _positive_floor(p)
        ax.step(t, np.maximum(p, floor), where="post", label=_label(path))
        ax.fill_between(t, np.maximum(tab["ci_lo"], floor),
                        np.maximum(tab["ci_hi"], floor), step="post", alpha=0.2)
        t_hi = max(t_hi, float(t[-1]))
    if job.lambda_ is not None:
        lam = job.lambda_
        tt = np.linspace(0.0, t_hi, 200)
        env = np.exp(1.0 / lam) * np.exp(-tt / (2.0 * lam**2))
        ax.plot(tt, env, "k--", label="exponential envelope")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("P(tau >= t)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def _render_staged_decay(job):
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in job.inputs:
        tab = read_table(path, "staged")
        k, p = tab["k"], tab["p_uncoupled"]
        floor = _positive_floor(p)
        pp = np.maximum(p, floor)
        err_lo = pp - np.maximum(tab["ci_lo"], floor)
        err_hi = np.maximum(tab["ci_hi"], floor) - pp
        ax.errorbar(k, pp, yerr=[err_lo, err_hi], fmt="o-", capsize=3,
                    label=_label(path))
        if job.gamma is not None:
            anchor = pp[1] if len(pp) > 1 else pp[0]
            kk = np.linspace(k[0], k[-1], 100)
            ax.plot(kk, anchor * np.exp(-job.gamma * (kk - k[min(1, len(k) - 1)])),
                    "k--", label=f"exp(-{job.gamma:.3g} k) fit")
    ax.set_yscale("log")
    ax.set_xlabel("block k")
    ax.set_ylabel("P(uncoupled after k blocks)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def _render_lyapunov(job):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax2 = ax.twinx()
    for path in job.inputs:
        tab = read_table(path, "lyapunov")
        ax.plot(tab["r"], tab["f"], label=f"f  [{_label(path)}]")
        ax2.plot(tab["r"], tab["fprime"], "--", label=f"f'  [{_label(path)}]")
    ax.set_xlabel("r")
    ax.set_ylabel("f(r)")
    ax2.set_ylabel("f'(r)")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="center right", fontsize=8)
    fig.tight_layout()
    return fig


def _render_tv_table(job):
    """Tabulate the total-variation bound min(1, P(tau >= t)) from a survival curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.axis("off")
    rows = []
    for path in job.inputs:
        tab = read_table(path, "survival")
        idx = np.unique(np.linspace(0, len(tab["t"]) - 1, 12).astype(int))
        for j in idx:
            t, p = tab["t"][j], tab["p_hat"][j]
            cells = [f"{t:.4g}", f"{p:.4g}", f"{min(1.0, p):.4g}"]
            if job.lambda_ is not None:
                lam = job.lambda_
                cells.append(f"{math.exp(1.0 / lam) * math.exp(-t / (2 * lam**2)):.4g}")
            rows.append(cells)
    headers = ["t", "P(tau >= t)", "TV bound"]
    if job.lambda_ is not None:
        headers.append("envelope")
    table = ax.table(cellText=rows, colLabels=headers, loc="center")
    table.scale(1.0, 1.2)
    fig.tight_layout()
    return fig


def _label(path):
    import os

    return os.path.basename(str(path))


def _positive_floor(p):
    pos = p[p > 0]
    return float(pos.min()) * 0.5 if pos.size else 1e-12
