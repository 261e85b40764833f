"""Free particle dragging a pointer that records its path-averaged position.

The pointer couples through (g/T) * integral x dt, so integrating it out (or
solving it classically) renormalizes the pointer mass to M_eff and smears
interval records over the length ell.  Everything here is closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KernelFactors, window_E
from .errors import KindError, OutOfRangeError, ParameterError

__all__ = [
    "FreeDerived",
    "ClassicalSolution",
    "derived_constants",
    "length_Z",
    "propagator",
    "classical_solution",
    "class_op_element",
    "reduced_action_SPk",
    "pair_action",
    "kernel_factors",
]


@dataclass(frozen=True)
class FreeDerived:
    """Pointer-dressed constants: effective mass and window smoothing length."""

    M_eff: float
    ell: float


@dataclass(frozen=True)
class ClassicalSolution:
    """Sampled stationary path and its conserved data.

    t, x, Xdot are equal-length arrays; X0T is the net pointer displacement,
    S_cl the stationary action, xbar_cl the time average of x over the path.
    """

    t: np.ndarray
    x: np.ndarray
    Xdot: np.ndarray
    X0T: float
    S_cl: float
    xbar_cl: float


def _check_kind(params):
    if params.kind != "free":
        raise KindError(f"free-particle op called with kind {params.kind!r}")


def derived_constants(params):
    """M_eff and ell for the free system."""
    _check_kind(params)
    m, M, g = params.m, params.M, params.g
    M_eff = M / (1.0 + g * g * M / (12.0 * m))
    ell = np.sqrt(params.hbar * params.T / (6.0 * m) * (M_eff / M))
    return FreeDerived(M_eff=M_eff, ell=float(ell))


def _gap(params, ep):
    # pointer gap with the coupling's endpoint average subtracted
    return ep.X_out - ep.X_in - params.g * (ep.x_in + ep.x_out) / 2.0


def length_Z(params, ep):
    """Effective averaged position entering the window argument."""
    _check_kind(params)
    d = derived_constants(params)
    B0 = _gap(params, ep)
    return (params.g * d.M_eff / (12.0 * params.m)) * B0 + (ep.x_in + ep.x_out) / 2.0


def propagator(params, ep):
    """Full two-body propagator between sharp endpoints."""
    _check_kind(params)
    d = derived_constants(params)
    m, T, hbar = params.m, params.T, params.hbar
    B0 = _gap(params, ep)
    S_cl = (m / (2.0 * T)) * (ep.x_out - ep.x_in) ** 2 + (d.M_eff / (2.0 * T)) * B0 * B0
    amp = np.sqrt(m * d.M_eff) / (2.0 * np.pi * hbar * T) * (-1j)
    return complex(amp * np.exp(1j * S_cl / hbar))


def classical_solution(params, ep, n_samples=201):
    """Stationary path sampled on n_samples uniform times in [0, T].

    The particle path is the parabola produced by the constant force the
    moving pointer exerts; Xdot follows it algebraically.
    """
    _check_kind(params)
    if n_samples < 2:
        raise ParameterError("n_samples must be at least 2")
    m, M, g, T = params.m, params.M, params.g, params.T
    d = derived_constants(params)
    B0 = _gap(params, ep)
    X0T = B0 * d.M_eff / M
    a = g * M * X0T / (2.0 * m)

    t = np.linspace(0.0, T, int(n_samples))
    tau = t / T
    x = ep.x_in + (ep.x_out - ep.x_in + a) * tau - a * tau * tau
    Xdot = (g / T) * x + X0T / T

    S_cl = (m / (2.0 * T)) * (ep.x_out - ep.x_in) ** 2 + (d.M_eff / (2.0 * T)) * B0 * B0
    # time average of the parabola, kept as a separate arithmetic route from
    # length_Z on purpose
    xbar_cl = ep.x_in + (ep.x_out - ep.x_in + a) / 2.0 - a / 3.0
    return ClassicalSolution(t=t, x=x, Xdot=Xdot, X0T=float(X0T),
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

    Quadratic in q = hbar*k - g*P; the three coefficients are what the
    momentum-and-k integral representation of the windowed element uses.
    """
    _check_kind(params)
    m, T = params.m, params.T
    q = params.hbar * k - params.g * P
    S0 = m * (ep.x_out - ep.x_in) ** 2 / (2.0 * T)
    beta = (ep.x_in + ep.x_out) / 2.0
    gamma = T / (24.0 * m)
    return S0 + beta * q - gamma * q * q


def pair_action(params, x_out, x_in):
    """Particle-only kinetic action, broadcast over endpoint arrays."""
    _check_kind(params)
    x_out = np.asarray(x_out, dtype=np.float64)
    x_in = np.asarray(x_in, dtype=np.float64)
    diff = x_out - x_in
    return params.m * diff * diff / (2.0 * params.T)


def kernel_factors(params):
    """Factorized kernel constants consumed by the grid evolution engine."""
    _check_kind(params)
    d = derived_constants(params)
    amp = np.sqrt(params.m * d.M_eff) / (2.0 * np.pi * params.hbar * params.T) * (-1j)
    return KernelFactors(
        amplitude=complex(amp),
        g_shift=params.g,
        gap_gain=d.M_eff / (2.0 * params.T),
        z_s=1.0,
        z_gap=params.g * d.M_eff / (12.0 * params.m),
        ell=d.ell,
    )
