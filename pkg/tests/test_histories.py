"""Engine checks against routes that never touch the shared-lattice code:
closed-form Gaussian spreading for the decoupled case, and a naive direct
summation of propagator times window over a dense input grid for the
coupled one."""

import numpy as np
import pytest

from decohist import freeparticle, histories, oscillator
from decohist.core import (
    CoarseGraining,
    GaussianState,
    SharpState,
    SystemParams,
    window_E,
)
from decohist.errors import (
    BudgetError,
    DegenerateError,
    GridError,
    KindError,
    OutOfRangeError,
    ParameterError,
)
from decohist.histories import BranchGrid, GridSpec

BRUTE_POINTS = [(2, 3), (5, 11), (8, 8), (11, 4), (14, 13), (7, 1), (3, 14), (12, 9)]


def spread_gauss(state, mass, t, hbar, x):
    """Free Gaussian evolution by the textbook contour integral."""
    d, c, p = state.width, state.center, state.momentum
    a = 1.0 / (d * d)
    beta = mass / (2.0 * hbar * t)
    N = (2.0 / (np.pi * d * d)) ** 0.25
    k0 = p / hbar
    y = np.asarray(x) - c
    pref = N * np.sqrt(mass / (2.0j * np.pi * hbar * t)) \
        * np.sqrt(np.pi / (a - 1j * beta))
    return pref * np.exp(1j * beta * y * y
                         - (k0 - 2.0 * beta * y) ** 2 / (4.0 * (a - 1j * beta)))


def brute_points(mod, params, cg, alpha, particle, ptr, grid, pts, nf=600):
    """Windowed amplitude at selected grid points by direct summation.

    Same input truncation as the engine (three widths), same trapezoid
    weights, but every node goes through plain exp calls and the batched
    error function; no lattice reuse, no chirp recurrence, no table.
    """
    kf = mod.kernel_factors(params)
    hbar = params.hbar
    xg = np.linspace(particle.center - 3.0 * particle.width,
                     particle.center + 3.0 * particle.width, nf)
    wx = np.full(nf, xg[1] - xg[0])
    wx[0] *= 0.5
    wx[-1] *= 0.5
    phi = particle.wavefunction(xg, hbar) * wx
    if isinstance(ptr, SharpState):
        Xg = np.array([ptr.center])
        Phi = np.array([1.0 + 0.0j])
    else:
        Xg = np.linspace(ptr.center - 3.0 * ptr.width,
                         ptr.center + 3.0 * ptr.width, nf)
        wX = np.full(nf, Xg[1] - Xg[0])
        wX[0] *= 0.5
        wX[-1] *= 0.5
        Phi = ptr.wavefunction(Xg, hbar) * wX
    xs, Xs = grid.x_axis(), grid.X_axis()
    out = []
    for (i, j) in pts:
        x, X = xs[i], Xs[j]
        Q = np.asarray(mod.pair_action(params, x, xg))[:, None]
        S = 0.5 * (x + xg)[:, None]
        B = (X - Xg)[None, :] - kf.g_shift * S
        Z = kf.z_s * S + kf.z_gap * B
        ph = np.exp(1j * (Q + kf.gap_gain * B * B) / hbar)
        Ew = window_E(Z, kf.ell, cg, alpha)
        out.append(kf.amplitude * np.sum(phi[:, None] * Phi[None, :] * ph * Ew))
    return np.array(out)


@pytest.fixture
def small_grid():
    return GridSpec(16, 16, 0.0, 0.0, 1.6, 1.4)


@pytest.fixture
def cg_wide():
    return CoarseGraining(1.2, 0.0, -2, 2)


def test_gridspec_invariants():
    gs = GridSpec(20, 16, 0.5, -0.5, 2.0, 1.0)
    assert gs.dx == pytest.approx(4.0 / 19)
    x = gs.x_axis()
    assert x[0] == pytest.approx(-1.5) and x[-1] == pytest.approx(2.5)
    assert gs.weights_x().sum() == pytest.approx(2.0 * gs.Lx)
    assert gs.weights_X().sum() == pytest.approx(2.0 * gs.LX)
    with pytest.raises(ParameterError):
        GridSpec(15, 16, 0.0, 0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(16, 16, 0.0, 0.0, 0.0, 1.0)


def test_plan_grid_covers_moments(free_params, packet, pointer):
    gs = histories.plan_grid("free", free_params, packet, pointer)
    assert 16 <= gs.nx <= 512 and 16 <= gs.nX <= 512
    # the packet drifts nowhere for zero momentum; center must track it
    assert abs(gs.x_center - packet.center) < 1.0
    # explicit overrides are taken verbatim
    gs2 = histories.plan_grid("free", free_params, packet, pointer, nx=48, nX=32)
    assert (gs2.nx, gs2.nX) == (48, 32)
    with pytest.raises(ParameterError):
        histories.plan_grid("free", free_params, packet, SharpState(0.0))


def test_plan_branch_range_is_symmetric_and_grows(free_params, packet, pointer):
    cg = CoarseGraining(1.2, 0.0, 0, 0)
    lo, hi = histories.plan_branch_range("free", free_params, cg, packet, pointer)
    assert lo < 0 < hi
    assert hi == -lo  # symmetric initial data
    lo2, hi2 = histories.plan_branch_range("free", free_params, cg, packet,
                                           pointer, margin=9.0)
    assert lo2 <= lo and hi2 >= hi


def test_decoupled_evolution_matches_gaussian_spreading():
    p0 = SystemParams("free", 1.0, 5.0, 0.0, 0.0, 1.0, 1.0)
    packet = GaussianState(0.2, 0.5, 0.3)
    pointer = GaussianState(-0.1, 0.4, -0.5)
    grid = histories.plan_grid(freeparticle, p0, packet, pointer)
    bg = histories.evolve(freeparticle, p0, packet, pointer, grid)
    ref = np.multiply.outer(
        spread_gauss(packet, p0.m, p0.T, p0.hbar, grid.x_axis()),
        spread_gauss(pointer, p0.M, p0.T, p0.hbar, grid.X_axis()),
    )
    dev = np.max(np.abs(bg.psi - ref)) / np.max(np.abs(ref))
    assert dev < 2e-4  # input truncation at three widths sets the floor

    mom = histories.moments(bg)
    d, c, pm = packet.width, packet.center, packet.momentum
    assert mom["mass"] == pytest.approx(1.0, abs=1e-6)
    assert mom["mean_x"] == pytest.approx(c + pm * p0.T / p0.m, abs=1e-8)
    assert mom["var_x"] == pytest.approx(
        d * d / 4.0 + (p0.hbar * p0.T / (p0.m * d)) ** 2, abs=1e-5)
    D, C, PM = pointer.width, pointer.center, pointer.momentum
    assert mom["mean_X"] == pytest.approx(C + PM * p0.T / p0.M, abs=1e-8)
    assert mom["var_X"] == pytest.approx(
        D * D / 4.0 + (p0.hbar * p0.T / (p0.M * D)) ** 2, abs=1e-5)


def test_branch_against_direct_summation(free_params, packet, pointer,
                                         small_grid, cg_wide):
    brs = histories.branch_wavefunctions("free", free_params, cg_wide, packet,
                                         pointer, small_grid, alphas=[0, 1],
                                         quality=2.0)
    for br in brs:
        ref = brute_points(freeparticle, free_params, cg_wide, br.alpha,
                           packet, pointer, small_grid, BRUTE_POINTS)
        eng = np.array([br.psi[i, j] for (i, j) in BRUTE_POINTS])
        assert np.max(np.abs(eng - ref)) / np.max(np.abs(br.psi)) < 2e-5


def test_branch_against_direct_summation_oscillator(osc_params, packet, pointer,
                                                    small_grid, cg_wide):
    br = histories.branch_wavefunctions("oscillator", osc_params, cg_wide,
                                        packet, pointer, small_grid,
                                        alphas=[0], quality=2.0)[0]
    ref = brute_points(oscillator, osc_params, cg_wide, 0, packet, pointer,
                       small_grid, BRUTE_POINTS)
    eng = np.array([br.psi[i, j] for (i, j) in BRUTE_POINTS])
    assert np.max(np.abs(eng - ref)) / np.max(np.abs(br.psi)) < 2e-5


def test_sharp_pointer_branch_against_direct_summation(free_params, packet,
                                                       small_grid, cg_wide):
    sharp = SharpState(0.15)
    br = histories.branch_wavefunction("free", free_params, cg_wide, 0, packet,
                                       sharp, small_grid, quality=2.0)
    ref = brute_points(freeparticle, free_params, cg_wide, 0, packet, sharp,
                       small_grid, BRUTE_POINTS)
    eng = np.array([br.psi[i, j] for (i, j) in BRUTE_POINTS])
    assert np.max(np.abs(eng - ref)) / np.max(np.abs(br.psi)) < 2e-5


def test_quality_refinement_is_converged(free_params, osc_params, packet,
                                         pointer, small_grid, cg_wide):
    for name, params in (("free", free_params), ("oscillator", osc_params)):
        b1 = histories.branch_wavefunctions(name, params, cg_wide, packet,
                                            pointer, small_grid, alphas=[0],
                                            quality=1.0)[0]
        b2 = histories.branch_wavefunctions(name, params, cg_wide, packet,
                                            pointer, small_grid, alphas=[0],
                                            quality=2.0)[0]
        num = np.sqrt(np.sum(np.abs(b1.psi - b2.psi) ** 2))
        den = np.sqrt(np.sum(np.abs(b2.psi) ** 2))
        assert num / den < 1e-4


def test_threads_do_not_change_bits(free_params, packet, pointer, small_grid,
                                    cg_wide):
    kw = dict(alphas=[-1, 0, 1], quality=1.0)
    a = histories.branch_wavefunctions("free", free_params, cg_wide, packet,
                                       pointer, small_grid, threads=1, **kw)
    b = histories.branch_wavefunctions("free", free_params, cg_wide, packet,
                                       pointer, small_grid, threads=3, **kw)
    assert all(np.array_equal(x.psi, y.psi) for x, y in zip(a, b))


def test_full_analysis_invariants(free_params, pointer):
    packet = GaussianState(0.0, 1.0)
    cg = CoarseGraining(1.2, 0.0, -8, 8)
    grid = histories.plan_grid("free", free_params, packet, pointer)
    dm, branches, evolved, info = histories.decoherence_analysis(
        "free", free_params, cg, packet, pointer, grid)

    assert info["epsilon"] == pytest.approx(0.4125660768601657, rel=1e-6)
    assert info["completeness"] < 1e-9
    assert abs(info["evolved_mass"] - 1.0) < 1e-6

    H = dm.D - dm.D.conj().T
    assert np.max(np.abs(H)) <= 1e-14 * np.max(np.abs(dm.D))
    p = dm.probabilities()
    assert np.all(p >= 0.0)
    # symmetric initial data must weigh mirror intervals identically
    assert max(abs(p[i] - p[-1 - i]) for i in range(len(p) // 2)) < 1e-12 * p.max()
    # the normalized matrix sums to one, split across the reported pieces
    assert abs(info["sum_probabilities"] + info["offdiag_sum_re"] - 1.0) < 1e-12
    assert abs(info["offdiag_sum_im"]) < 1e-12
    assert histories.completeness_residual(branches, evolved) == info["completeness"]


def test_mass_leak_raises_with_suggestion(free_params, packet, pointer,
                                          small_grid):
    with pytest.raises(GridError) as ei:
        histories.evolve("free", free_params, packet, pointer, small_grid)
    assert ei.value.suggestion["Lx"] == pytest.approx(1.5 * small_grid.Lx)
    assert ei.value.suggestion["LX"] == pytest.approx(1.5 * small_grid.LX)


def test_branch_overshoot_guard(small_grid):
    psi = np.full((16, 16), 0.9, dtype=np.complex128)
    bad = BranchGrid(alpha=0, psi=psi, grid=small_grid)
    assert bad.mass() > 1.05
    with pytest.raises(GridError):
        histories._check_branch_masses([bad])


def test_budget_error_reports_cost(free_params, packet, pointer, small_grid,
                                   cg_wide):
    with pytest.raises(BudgetError) as ei:
        histories.branch_wavefunctions("free", free_params, cg_wide, packet,
                                       pointer, small_grid, budget=1000)
    rep = ei.value.report
    assert rep["nodes"] > 1000
    assert rep["nodes"] == rep["ns"] * rep["nd"] * rep["tables"]


def test_metric_and_matrix_guards(free_params, packet, pointer, small_grid,
                                  cg_wide):
    with pytest.raises(DegenerateError):
        histories.decoherence_metric(np.zeros((3, 3), dtype=np.complex128))
    with pytest.raises(ParameterError):
        histories.decoherence_matrix([])
    br = histories.branch_wavefunctions("free", free_params, cg_wide, packet,
                                        pointer, small_grid, alphas=[0])[0]
    other = GridSpec(16, 16, 0.0, 0.0, 1.7, 1.4)
    alien = BranchGrid(alpha=1, psi=br.psi, grid=other)
    with pytest.raises(GridError):
        histories.decoherence_matrix([br, alien])


def test_out_of_range_and_kind_guards(free_params, osc_params, packet, pointer,
                                      small_grid, cg_wide):
    with pytest.raises(OutOfRangeError):
        histories.branch_wavefunction("free", free_params, cg_wide, 7, packet,
                                      pointer, small_grid)
    with pytest.raises(KindError):
        histories.evolve("magnet", free_params, packet, pointer, small_grid)
    with pytest.raises(KindError):
        histories.evolve("oscillator", free_params, packet, pointer, small_grid)
    with pytest.raises(KindError):
        histories.evolve("free", osc_params, packet, pointer, small_grid)
