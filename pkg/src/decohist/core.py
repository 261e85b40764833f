"""Shared parameter types, interval coarse graining, and the smoothed window.

A history label ``alpha`` names the right-closed interval
(xbar0 + alpha*delta - delta/2, xbar0 + alpha*delta + delta/2] for the
time-averaged particle position.  The exact projector onto that interval,
seen through the quadratic path integral, becomes a pair of error functions
evaluated on the ray exp(-i pi/4); ``window_E`` packages that object and
``indicator`` its sharp classical counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CausticError, KindError, OutOfRangeError, ParameterError
from .specfun import fresnel_erf

__all__ = [
    "SystemParams",
    "CoarseGraining",
    "Endpoints",
    "GaussianState",
    "SharpState",
    "KernelFactors",
    "RegimeReport",
    "xbar_center",
    "interval_edges",
    "containing_alpha",
    "indicator",
    "window_E",
    "window_partition_sum",
    "regime_report",
]

_SIN_GUARD = 1e-6
_COS_HALF_GUARD = 1e-6


def _require_finite(name, value):
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")


def _require_positive(name, value):
    _require_finite(name, value)
    if value <= 0.0:
        raise ParameterError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Masses, coupling and clock for one particle-plus-pointer system.

    kind is "free" or "oscillator"; omega must be zero exactly for the
    former and positive for the latter.  The oscillator is only supported
    on the first half period, away from caustics.
    """

    kind: str
    m: float
    M: float
    g: float
    omega: float
    T: float
    hbar: float

    def __post_init__(self):
        if self.kind not in ("free", "oscillator"):
            raise ParameterError(f"unknown system kind {self.kind!r}")
        _require_positive("m", self.m)
        _require_positive("M", self.M)
        _require_positive("T", self.T)
        _require_positive("hbar", self.hbar)
        _require_finite("g", self.g)
        _require_finite("omega", self.omega)
        if self.kind == "free":
            if self.omega != 0.0:
                raise KindError("free system requires omega == 0")
        else:
            if self.omega <= 0.0:
                raise KindError("oscillator requires omega > 0")
            u = self.omega * self.T
            if not 0.0 < u < math.pi:
                raise CausticError(
                    f"omega*T = {u:g} outside the supported range (0, pi)"
                )
            if abs(math.sin(u)) <= _SIN_GUARD:
                raise CausticError(f"sin(omega*T) = {math.sin(u):.3e} too small")
            if abs(math.cos(0.5 * u)) <= _COS_HALF_GUARD:
                raise CausticError(
                    f"cos(omega*T/2) = {math.cos(0.5 * u):.3e} too small"
                )


@dataclass(frozen=True)
class CoarseGraining:
    """Uniform interval partition for the path-averaged position."""

    delta: float
    xbar0: float
    alpha_min: int
    alpha_max: int

    def __post_init__(self):
        _require_positive("delta", self.delta)
        _require_finite("xbar0", self.xbar0)
        if int(self.alpha_min) != self.alpha_min or int(self.alpha_max) != self.alpha_max:
            raise ParameterError("alpha_min and alpha_max must be integers")
        if self.alpha_min > self.alpha_max:
            raise ParameterError(
                f"alpha_min {self.alpha_min} exceeds alpha_max {self.alpha_max}"
            )

    def labels(self):
        return range(int(self.alpha_min), int(self.alpha_max) + 1)


@dataclass(frozen=True)
class Endpoints:
    """Initial and final positions (x for the particle, X for the pointer)."""

    x_in: float
    x_out: float
    X_in: float
    X_out: float

    def __post_init__(self):
        for name in ("x_in", "x_out", "X_in", "X_out"):
            _require_finite(name, getattr(self, name))


@dataclass(frozen=True)
class GaussianState:
    """Normalized Gaussian wave packet, |psi|^2 of rms width width/2."""

    center: float
    width: float
    momentum: float = 0.0

    def __post_init__(self):
        _require_finite("center", self.center)
        _require_positive("width", self.width)
        _require_finite("momentum", self.momentum)

    def wavefunction(self, x, hbar):
        x = np.asarray(x, dtype=np.float64)
        d = self.width
        u = (x - self.center) / d
        amp = (2.0 / (np.pi * d * d)) ** 0.25
        return amp * np.exp(-u * u + 1j * self.momentum * (x - self.center) / hbar)


@dataclass(frozen=True)
class SharpState:
    """Position eigenstate; usable as an initial pointer, not normalizable."""

    center: float

    def __post_init__(self):
        _require_finite("center", self.center)


@dataclass(frozen=True)
class KernelFactors:
    """Phase-level factorization of the two-body propagator kernel.

    K(x, X; x', X') = amplitude * exp(i (Q(x, x') + gap_gain * B^2) / hbar)
    with B = (X - X') - g_shift * (x + x') / 2, and the window argument
    Z = z_s * (x + x') / 2 + z_gap * B smoothed over length ell.  Q is the
    system module's pair_action.
    """

    amplitude: complex
    g_shift: float
    gap_gain: float
    z_s: float
    z_gap: float
    ell: float


@dataclass(frozen=True)
class RegimeReport:
    """Scale comparison deciding whether interval records behave classically."""

    t_spread: float
    ell: float
    delta_over_ell: float
    width_over_ell: float
    classical: bool


def xbar_center(cg, alpha):
    """Center of interval alpha."""
    return cg.xbar0 + alpha * cg.delta


def interval_edges(cg, alpha):
    """(low, high) edges of the right-closed interval alpha."""
    c = xbar_center(cg, alpha)
    return c - 0.5 * cg.delta, c + 0.5 * cg.delta


def containing_alpha(cg, xbar):
    """The unique integer label whose interval contains xbar.

    Works over the full integer line and so may fall outside the declared
    [alpha_min, alpha_max] range; combine with ``indicator`` when the range
    matters.  Ties on a shared edge resolve to the interval that owns it
    (the one whose high edge equals xbar).
    """
    _require_finite("xbar", xbar)
    a = math.ceil((xbar - cg.xbar0) / cg.delta - 0.5)
    # float rounding can land one interval off near an edge; fix against the
    # same edge arithmetic indicator uses
    lo, hi = interval_edges(cg, a)
    if xbar > hi:
        a += 1
    elif xbar <= lo:
        a -= 1
    return int(a)


def indicator(cg, alpha, xbar):
    """1 if xbar lies in interval alpha, else 0.

    Raises OutOfRangeError when alpha is outside the declared range.
    """
    if not cg.alpha_min <= alpha <= cg.alpha_max:
        raise OutOfRangeError(
            f"alpha = {alpha} outside [{cg.alpha_min}, {cg.alpha_max}]"
        )
    lo, hi = interval_edges(cg, alpha)
    return int(lo < xbar <= hi)


def window_E(Z, ell, cg, alpha):
    """Smoothed interval window at effective position Z.

    Half the difference of two error functions on the exp(-i pi/4) ray,
    one per interval edge.  Z may be an array; the return matches its
    shape.  Reduces to the sharp indicator as ell -> 0 away from edges.
    """
    if not ell > 0.0:
        raise ParameterError(f"ell must be positive, got {ell!r}")
    lo, hi = interval_edges(cg, alpha)
    Z = np.asarray(Z, dtype=np.float64)
    out = 0.5 * (fresnel_erf((Z - lo) / ell) - fresnel_erf((Z - hi) / ell))
    return complex(out) if out.ndim == 0 else out


def window_partition_sum(Z, ell, cg, include_tails=True):
    """Sum of window_E over the declared range, optionally with both tails.

    The two tails (all alpha below alpha_min, all above alpha_max) telescope
    to closed form, so with include_tails=True the result is the full sum
    over every integer alpha, which is exactly 1 up to rounding.  Every
    window is evaluated individually (no analytic cancellation), but all
    edges go through one batched error-function call.
    """
    if not ell > 0.0:
        raise ParameterError(f"ell must be positive, got {ell!r}")
    Z = np.asarray(Z, dtype=np.float64)
    edges = np.array([interval_edges(cg, a) for a in cg.labels()])
    F = fresnel_erf((Z[..., None, None] - edges) / ell)
    total = 0.5 * np.sum(F[..., 0] - F[..., 1], axis=-1)
    if include_tails:
        total = total + 0.5 * (1.0 - F[..., 0, 0])
        total = total + 0.5 * (1.0 + F[..., -1, 1])
    return complex(total) if np.ndim(total) == 0 else total


def regime_report(params, particle, cg):
    """Compare the window smoothing length against the record and packet scales.

    Returns a RegimeReport; ``classical`` is set when both delta/ell and
    width/ell reach 10, the regime where interval records decohere and the
    windows act like sharp indicators.  t_spread = width^2 m / (2 hbar) is
    the free spreading time of the packet, a sanity scale for choosing T.
    """
    if not isinstance(particle, GaussianState):
        raise ParameterError("regime_report needs a Gaussian particle state")
    # local import, the system modules import this module for types
    if params.kind == "free":
        from . import freeparticle as system
    else:
        from . import oscillator as system

    ell = system.derived_constants(params).ell
    d = particle.width
    t_spread = d * d * params.m / (2.0 * params.hbar)
    r_delta = cg.delta / ell
    r_width = d / ell
    return RegimeReport(
        t_spread=t_spread,
        ell=ell,
        delta_over_ell=r_delta,
        width_over_ell=r_width,
        classical=bool(r_delta >= 10.0 and r_width >= 10.0),
    )
