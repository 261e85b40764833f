"""Harmonic particle dragging a pointer that records its path-averaged position.

Same structure as the free case but with trigonometric coefficients in
u = omega*T; the coupling renormalizes to g_T = (2g/u) tan(u/2) and the
whole family degenerates at caustics, so u is restricted to (0, pi) with
guard bands.  The stationary action has no tidy printed form here, so the
propagator integrates the Lagrangian along the stationary path numerically
with Richardson extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KernelFactors, window_E
from .errors import CausticError, KindError, OutOfRangeError, ParameterError

__all__ = [
    "OscDerived",
    "OscClassicalSolution",
    "derived_constants",
    "length_Z",
    "propagator",
    "classical_solution",
    "class_op_element",
    "reduced_action_SPk",
    "pair_action",
    "kernel_factors",
]

_QUARTER_TURN = np.exp(-0.25j * np.pi)  # 1/sqrt(i)


@dataclass(frozen=True)
class OscDerived:
    """Dressed coupling g_T, effective pointer mass, smoothing length, and
    the bare oscillator amplitude prefactor A."""

    gT: float
    M_eff: float
    ell: float
    A: complex


@dataclass(frozen=True)
class OscClassicalSolution:
    """Sampled stationary path; P0 is the conserved pointer momentum."""

    t: np.ndarray
    x: np.ndarray
    Xdot: np.ndarray
    P0: float
    S_cl: float
    xbar_cl: float


def _check_kind(params):
    if params.kind != "oscillator":
        raise KindError(f"oscillator op called with kind {params.kind!r}")


def _tanc_excess(u):
    """(2/u) tan(u/2) - 1, series-stabilized near u = 0."""
    if u < 0.05:
        u2 = u * u
        return u2 * (1.0 / 12.0 + u2 * (1.0 / 120.0
                     + u2 * (17.0 / 20160.0 + u2 * (31.0 / 362880.0))))
    return 2.0 * np.tan(0.5 * u) / u - 1.0


def _gamma_kernel(u):
    """f(u) = 2 sin^2(u/2)/u^2 - sin(u)/(2u), series-stabilized near u = 0."""
    if u < 0.05:
        u2 = u * u
        return u2 * (1.0 / 24.0 + u2 * (-1.0 / 360.0 + u2 * (1.0 / 13440.0
                     + u2 * (-1.0 / 907200.0 + u2 / 95800320.0))))
    s = np.sin(0.5 * u)
    return 2.0 * s * s / (u * u) - np.sin(u) / (2.0 * u)


def _zsum_coeff(u):
    # (1 - cos u) / (u sin u), written through the half-angle sine so small
    # u loses no digits
    s = np.sin(0.5 * u)
    return 2.0 * s * s / (u * np.sin(u))


def derived_constants(params):
    """g_T, M_eff, ell and the oscillator amplitude A."""
    _check_kind(params)
    m, M, g = params.m, params.M, params.g
    omega, T, hbar = params.omega, params.T, params.hbar
    u = omega * T
    excess = _tanc_excess(u)  # g_T/g - 1
    gT = g * (1.0 + excess)
    M_eff = M / (1.0 + (g * g * M / (u * u * m)) * excess)
    ell_sq = (2.0 * hbar / (m * omega * omega * T)) * excess * (M_eff / M)
    if not ell_sq > 0.0:
        raise CausticError(f"nonpositive smoothing length squared {ell_sq:g}")
    A = np.sqrt(m * omega / (2.0 * np.pi * hbar * np.sin(u))) * _QUARTER_TURN
    return OscDerived(gT=float(gT), M_eff=float(M_eff),
                      ell=float(np.sqrt(ell_sq)), A=complex(A))


def _gap(params, d, ep):
    # pointer gap with the dressed endpoint average subtracted
    return ep.X_out - ep.X_in - d.gT * (ep.x_in + ep.x_out) / 2.0


def length_Z(params, ep):
    """Effective averaged position entering the window argument."""
    _check_kind(params)
    d = derived_constants(params)
    u = params.omega * params.T
    Bkt = _gap(params, d, ep)
    z_gap = (params.g * d.M_eff / (params.m * params.omega ** 2 * params.T ** 2)
             * _tanc_excess(u))
    return _zsum_coeff(u) * (ep.x_in + ep.x_out) + z_gap * Bkt


def _path_pieces(params, ep):
    d = derived_constants(params)
    u = params.omega * params.T
    Bkt = _gap(params, d, ep)
    W = params.g * d.M_eff / (params.omega ** 2 * params.T ** 2 * params.m) * Bkt
    c_cos = ep.x_in + W
    c_sin = (ep.x_out - ep.x_in * np.cos(u) - (np.cos(u) - 1.0) * W) / np.sin(u)
    return d, Bkt, W, c_cos, c_sin


def _integrate_action(f, T, rtol=1e-10):
    """Trapezoid with doubling and one Richardson step; smooth integrands."""
    n = 64
    t = np.linspace(0.0, T, n + 1)
    v = f(t)
    trap = (T / n) * (np.sum(v) - 0.5 * (v[0] + v[-1]))
    rich = None
    for _ in range(14):
        mids = f((np.arange(n) + 0.5) * (T / n))
        trap_half = 0.5 * trap + (T / (2.0 * n)) * np.sum(mids)
        new_rich = (4.0 * trap_half - trap) / 3.0
        if rich is not None and abs(new_rich - rich) <= rtol * (1.0 + abs(new_rich)):
            return new_rich
        rich, trap, n = new_rich, trap_half, 2 * n
    return rich


def _action_numeric(params, ep):
    d, Bkt, W, c_cos, c_sin = _path_pieces(params, ep)
    m, M, g, omega, T = params.m, params.M, params.g, params.omega, params.T

    def lagrangian(t):
        wt = omega * t
        x = c_cos * np.cos(wt) + c_sin * np.sin(wt) - W
        xdot = omega * (c_sin * np.cos(wt) - c_cos * np.sin(wt))
        Xdot = (g / T) * x + d.M_eff * Bkt / (M * T)
        rec = Xdot - (g / T) * x  # conserved along the path
        return 0.5 * m * xdot * xdot - 0.5 * m * omega * omega * x * x \
            + 0.5 * M * rec * rec

    return _integrate_action(lagrangian, T)


def propagator(params, ep):
    """Full two-body propagator between sharp endpoints.

    Amplitude is the oscillator prefactor A times the dressed pointer
    factor; the phase integrates the Lagrangian along the stationary path.
    """
    _check_kind(params)
    d = derived_constants(params)
    S_cl = _action_numeric(params, ep)
    amp = d.A * np.sqrt(d.M_eff / (2.0 * np.pi * params.hbar * params.T)) \
        * _QUARTER_TURN
    return complex(amp * np.exp(1j * S_cl / params.hbar))


def classical_solution(params, ep, n_samples=201):
    """Stationary path sampled on n_samples uniform times in [0, T]."""
    _check_kind(params)
    if n_samples < 2:
        raise ParameterError("n_samples must be at least 2")
    d, Bkt, W, c_cos, c_sin = _path_pieces(params, ep)
    m, M, g, omega, T = params.m, params.M, params.g, params.omega, params.T
    u = omega * T

    t = np.linspace(0.0, T, int(n_samples))
    wt = omega * t
    x = c_cos * np.cos(wt) + c_sin * np.sin(wt) - W
    P0 = d.M_eff * Bkt / T
    Xdot = (g / T) * x + P0 / M

    # analytic time average of the trig path, a separate route from length_Z
    xbar_cl = c_cos * np.sin(u) / u + c_sin * (1.0 - np.cos(u)) / u - W
    S_cl = _action_numeric(params, ep)
    return OscClassicalSolution(t=t, x=x, Xdot=Xdot, P0=float(P0),
                                S_cl=float(S_cl), xbar_cl=float(xbar_cl))


def class_op_element(params, cg, alpha, ep):
    """Propagator times the smoothed window for interval alpha."""
    _check_kind(params)
    if not cg.alpha_min <= alpha <= cg.alpha_max:
        raise OutOfRangeError(
            f"alpha = {alpha} outside [{cg.alpha_min}, {cg.alpha_max}]"
        )
    d = derived_constants(params)
    Z = length_Z(params, ep)
    return propagator(params, ep) * window_E(Z, d.ell, cg, alpha)


def reduced_action_SPk(params, k, P, ep):
    """Stationary particle action at fixed pointer momentum P and wavenumber k.

    Quadratic in q = hbar*k - g*P, like the free case but with trigonometric
    coefficients; reduces to the free expressions as omega*T -> 0.
    """
    _check_kind(params)
    u = params.omega * params.T
    q = params.hbar * k - params.g * P
    S0 = float(pair_action(params, ep.x_out, ep.x_in))
    beta = _zsum_coeff(u) * (ep.x_in + ep.x_out)
    gamma = _gamma_kernel(u) / (params.m * params.omega * np.sin(u))
    return S0 + beta * q - gamma * q * q


def pair_action(params, x_out, x_in):
    """Particle-only oscillator action, broadcast over endpoint arrays."""
    _check_kind(params)
    u = params.omega * params.T
    x_out = np.asarray(x_out, dtype=np.float64)
    x_in = np.asarray(x_in, dtype=np.float64)
    pref = params.m * params.omega / (2.0 * np.sin(u))
    return pref * ((x_out * x_out + x_in * x_in) * np.cos(u) - 2.0 * x_out * x_in)


def kernel_factors(params):
    """Factorized kernel constants consumed by the grid evolution engine.

    The pair phase here is the closed form of the numeric stationary action;
    the two routes are pinned against each other in the test suite.
    """
    _check_kind(params)
    d = derived_constants(params)
    u = params.omega * params.T
    amp = d.A * np.sqrt(d.M_eff / (2.0 * np.pi * params.hbar * params.T)) \
        * _QUARTER_TURN
    z_gap = (params.g * d.M_eff / (params.m * params.omega ** 2 * params.T ** 2)
             * _tanc_excess(u))
    return KernelFactors(
        amplitude=complex(amp),
        g_shift=d.gT,
        gap_gain=d.M_eff / (2.0 * params.T),
        z_s=2.0 * _zsum_coeff(u),
        z_gap=z_gap,
        ell=d.ell,
    )
