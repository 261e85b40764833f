"""Classical-limit sweeps: rerun the branch analysis while shrinking hbar
(or widening the intervals) and watch the off-diagonal metric die.

Each row replans its own interval range and output grid, since the window
length ell and the packet momenta move with the swept parameter.  A row
that would exceed the node budget is reported with budget_limited set and
no metric, never computed at silently degraded resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import CoarseGraining, GaussianState, interval_edges, window_E
from .errors import BudgetError, ParameterError
from .histories import decoherence_analysis, plan_branch_range, plan_grid
from . import freeparticle, oscillator

__all__ = ["SweepSpec", "SweepRow", "run_sweep"]


@dataclass(frozen=True)
class SweepSpec:
    """Axis ("hbar" or "delta"), multiplicative factors, and the base case."""

    axis: str
    factors: tuple
    params: object
    cg: CoarseGraining
    particle: GaussianState
    pointer: GaussianState

    def __post_init__(self):
        if self.axis not in ("hbar", "delta"):
            raise ParameterError(f"unknown sweep axis {self.axis!r}")
        f = tuple(float(v) for v in self.factors)
        if len(f) < 3:
            raise ParameterError("need at least 3 sweep factors")
        if any(v <= 0.0 for v in f):
            raise ParameterError("sweep factors must be positive")
        diffs = np.diff(f)
        if self.axis == "hbar" and not np.all(diffs < 0.0):
            raise ParameterError("hbar sweep factors must strictly decrease")
        if self.axis == "delta" and not np.all(diffs > 0.0):
            raise ParameterError("delta sweep factors must strictly increase")
        object.__setattr__(self, "factors", f)


@dataclass(frozen=True)
class SweepRow:
    factor: float
    hbar_eff: float
    ell: float
    ell_over_delta: float
    epsilon: float
    n_branches: int
    nx: int
    nX: int
    t_spread: float
    window_conv: float
    budget_limited: bool


def _window_convergence(cg, ell):
    """Worst |window - indicator| away from the edge skirts (3 ell)."""
    lo0, _ = interval_edges(cg, cg.alpha_min)
    _, hi1 = interval_edges(cg, cg.alpha_max)
    Z = np.linspace(lo0, hi1, 801)
    edges = np.array([interval_edges(cg, a)[0] for a in cg.labels()]
                     + [hi1])
    near_edge = np.min(np.abs(Z[:, None] - edges[None, :]), axis=1) < 3.0 * ell
    keep = ~near_edge
    if not keep.any():
        return float("nan")
    worst = 0.0
    for a in cg.labels():
        w = window_E(Z[keep], ell, cg, a)
        lo, hi = interval_edges(cg, a)
        ind = ((Z[keep] > lo) & (Z[keep] <= hi)).astype(float)
        worst = max(worst, float(np.max(np.abs(w - ind))))
    return worst


def run_sweep(spec, *, quality=1.0, threads=1, budget=None):
    """One SweepRow per factor, in the order given."""
    rows = []
    base = spec.params
    mod = freeparticle if base.kind == "free" else oscillator
    for f in spec.factors:
        if spec.axis == "hbar":
            params = replace(base, hbar=base.hbar * f)
            delta = spec.cg.delta
        else:
            params = base
            delta = spec.cg.delta * f
        ell = mod.derived_constants(params).ell
        lo, hi = plan_branch_range(mod, params,
                                   CoarseGraining(delta, spec.cg.xbar0, 0, 0),
                                   spec.particle, spec.pointer)
        cg = CoarseGraining(delta, spec.cg.xbar0, lo, hi)
        grid = plan_grid(mod, params, spec.particle, spec.pointer)
        t_spread = spec.particle.width ** 2 * params.m / (2.0 * params.hbar)
        conv = _window_convergence(cg, ell)
        try:
            _, _, _, info = decoherence_analysis(
                mod, params, cg, spec.particle, spec.pointer, grid,
                quality=quality, threads=threads, budget=budget)
            eps = info["epsilon"]
            limited = False
        except BudgetError:
            eps = float("nan")
            limited = True
        rows.append(SweepRow(
            factor=float(f),
            hbar_eff=params.hbar,
            ell=ell,
            ell_over_delta=ell / delta,
            epsilon=float(eps),
            n_branches=hi - lo + 1,
            nx=grid.nx,
            nX=grid.nX,
            t_spread=t_spread,
            window_conv=conv,
            budget_limited=limited,
        ))
    return rows
