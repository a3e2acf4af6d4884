"""Realization layer: invariance, the three clauses, psi, and simulation."""

import math

import numpy as np
import pytest

from affinespde import funalg, levy, operators
from affinespde import realization as rz
from affinespde.errors import (DriftConditionFails, GridMismatch,
                               LinearSolveFailure, NotInvariant,
                               SchemeUnsupported, SigmaEscapesV,
                               TruncationTailTooLarge)
from affinespde.funalg import QExpFunction as Q
from affinespde.grids import Grid1D
from affinespde.operators import Cable, Translation

HALF_LINE = rz.GridSpace(Grid1D.from_interval(0.0, 20.0, 801),
                         weight=funalg.parse_qexp("exp(-0.1*x)"))
CABLE_SPACE = rz.GridSpace(Grid1D.from_interval(0.0, math.pi, 315))


def test_invariant_span_dimensions():
    one = rz.invariant_span(Translation(), [Q.exponential(-1.0)])
    assert one.status == "quasi_exponential" and one.basis.dim == 1

    two = rz.invariant_span(Translation(),
                            [funalg.parse_qexp("exp(-0.5*x)*cos(1*x)")])
    assert two.status == "quasi_exponential" and two.basis.dim == 2

    three = rz.invariant_span(Translation(), [funalg.parse_qexp("x^2*exp(-1*x)")])
    assert three.status == "quasi_exponential" and three.basis.dim == 3

    # dims grow monotonically while the sweep runs
    assert all(b >= a for a, b in zip(three.dims, three.dims[1:]))

    capped = rz.invariant_span(Translation(), [funalg.parse_qexp("x^12")],
                               dim_cap=10)
    assert capped.status == "not_detected"
    assert capped.basis.dim > 10


def test_check_invariant_pass_and_fail():
    ok = rz.check_invariant(Cable(), [Q.trig("sin", 1.0), Q.trig("sin", 2.0)])
    assert ok.ok and ok.dim == 2

    bad = rz.check_invariant(Translation(), [funalg.parse_qexp("x*exp(-1*x)")])
    assert not bad.ok
    assert bad.offender == 0
    assert bad.residual > 0.1


def test_subspace_rejects_dependent_basis():
    near_copy = funalg.parse_qexp("exp(-1*x) + 0.0000000000001*exp(-2*x)")
    with pytest.raises(LinearSolveFailure):
        rz.Subspace.build([Q.exponential(-1.0), near_copy], HALF_LINE)


def test_subspace_projection_round_trips():
    V = rz.Subspace.build([Q.exponential(-1.0), Q.exponential(-2.0)], HALF_LINE)
    c = np.array([0.7, -1.3])
    assert np.allclose(V.coords(V.from_coords(c)), c, atol=1e-12)

    rng = np.random.default_rng(11)
    h = rng.standard_normal(HALF_LINE.size)
    proj = V.project(h)
    assert np.allclose(V.project(proj), proj, atol=1e-10)
    # the complement residual is weight-orthogonal to every basis sample
    resid = V.complement_residual(h)
    orth = V.samples @ (HALF_LINE.weights() * resid)
    assert np.max(np.abs(orth)) < 1e-8 * np.linalg.norm(h)


def test_coordinate_matrix_is_diagonal_for_eigenbasis():
    V = rz.Subspace.build([Q.trig("sin", 1.0), Q.trig("sin", 2.0)], CABLE_SPACE)
    real = rz.build_realization(Cable(), rz.ConstantDrift(None), [], V)
    assert np.allclose(real.B, np.diag([-2.0, -5.0]), atol=1e-12)


def _fiber_setup():
    V = rz.Subspace.build([Q.exponential(-1.0)], HALF_LINE)
    x = HALF_LINE.grid.points()
    u_dir = V.complement_residual(np.exp(-3.0 * x))
    rng = np.random.default_rng(5)
    probes = [rng.standard_normal(HALF_LINE.size) for _ in range(3)]
    directions = [V.from_coords(np.array([s])) for s in (0.5, -1.0)]
    return V, u_dir, probes, directions


def test_drift_projection_constant_decisions():
    V, u_dir, probes, directions = _fiber_setup()
    ok, dev = rz.drift_projection_constant(rz.ConstantDrift(None), V)
    assert ok and dev == 0.0
    ok, _ = rz.drift_projection_constant(
        rz.StateDrift(lambda t, y: -y), V)
    assert ok

    # complement part reacts to the V-coordinate: varies along fibers
    w = HALF_LINE.weights()
    g = V.samples[0]
    varying = rz.CallableDrift(lambda h: float(g @ (w * h)) * u_dir)
    ok, dev = rz.drift_projection_constant(varying, V, probes, directions)
    assert not ok and dev > 1e-4

    # any function of the complement residual is constant along fibers
    flat = rz.CallableDrift(lambda h: np.tanh(V.complement_residual(h)))
    ok, dev = rz.drift_projection_constant(flat, V, probes, directions)
    assert ok and dev < 1e-10

    with pytest.raises(DriftConditionFails):
        rz.drift_projection_constant(varying, V)


def test_build_realization_clause_failures():
    bad_v = rz.Subspace.build([funalg.parse_qexp("x*exp(-1*x)")], HALF_LINE)
    with pytest.raises(NotInvariant):
        rz.build_realization(Translation(), rz.ConstantDrift(None), [], bad_v)

    V = rz.Subspace.build([Q.trig("sin", 1.0), Q.trig("sin", 2.0)], CABLE_SPACE)
    with pytest.raises(SigmaEscapesV):
        rz.build_realization(Cable(), rz.ConstantDrift(None),
                             [Q.trig("sin", 3.0)], V)

    Vh, u_dir, probes, directions = _fiber_setup()
    w = HALF_LINE.weights()
    g = Vh.samples[0]
    varying = rz.CallableDrift(lambda h: float(g @ (w * h)) * u_dir)
    with pytest.raises(DriftConditionFails):
        rz.build_realization(Translation(), varying, [], Vh,
                             probes=probes, directions=directions)


def test_correction_cancels_complement_image():
    # the canonical semi-invariant example: A maps x e^{-x} to
    # e^{-x} - x e^{-x}, whose e^{-x} part escapes the one dimensional span
    V = rz.Subspace.build([funalg.parse_qexp("x*exp(-1*x)")], HALF_LINE)
    corr = rz.semiinvariant_correction(Translation(), V)
    for b in V.basis:
        v = HALF_LINE.sample(b)
        image = HALF_LINE.sample(operators.apply_exact(Translation(), b))
        resid = V.complement_residual(image + corr.apply(v))
        assert rz.space_norm(HALF_LINE, resid) <= 1e-10

    # T factors through the projection onto V: complement vectors map to zero
    rng = np.random.default_rng(2)
    u = V.complement_residual(rng.standard_normal(HALF_LINE.size))
    assert np.max(np.abs(corr.apply(u))) < 1e-9

    # nothing to correct when V is already invariant
    inv = rz.Subspace.build([Q.trig("sin", 1.0)], CABLE_SPACE)
    assert rz.semiinvariant_correction(Cable(), inv).operator_norm() < 1e-9


def _cable_realization(h0_text="0.6*sin(1*x) + 0.25*sin(3*x)",
                       vols=(), drift=None, modes=(1, 2, 3)):
    V = rz.Subspace.build([Q.trig("sin", 1.0), Q.trig("sin", 2.0)], CABLE_SPACE)
    real = rz.build_realization(
        Cable(), rz.ConstantDrift(drift), list(vols), V,
        psi_method="spectral_truncation", mode_indices=modes)
    return real, funalg.parse_qexp(h0_text)


def test_split_initial_symbolic():
    real, h0 = _cable_realization()
    u0, v0 = rz.split_initial(real, h0)
    assert np.allclose(v0, [0.6, 0.0], atol=1e-9)
    assert funalg.allclose(u0, funalg.parse_qexp("0.25*sin(3*x)"), tol=1e-9)


def test_solve_psi_spectral_closed_form():
    real, h0 = _cable_realization()
    t_grid = np.linspace(0.0, 1.0, 51)
    psi = rz.solve_psi(real, h0, t_grid)
    x = CABLE_SPACE.grid.points()
    g3 = operators.generator_eigenvalue(Cable(), 3)
    exact = 0.25 * np.exp(g3 * t_grid)[:, None] * np.sin(3 * x)[None, :]
    assert np.max(np.abs(psi.values - exact)) < 1e-10


def test_solve_psi_truncation_guard():
    real, _ = _cable_realization()
    h0 = funalg.parse_qexp("0.6*sin(1*x) + 0.25*sin(9*x)")
    with pytest.raises(TruncationTailTooLarge):
        rz.solve_psi(real, h0, np.linspace(0.0, 1.0, 11))


def test_solve_psi_shift_exact_against_direct_evaluation():
    V = rz.Subspace.build([Q.exponential(-1.0)], HALF_LINE)
    drift = funalg.parse_qexp("0.2*exp(-2*x)")
    real = rz.build_realization(Translation(), rz.ConstantDrift(drift), [], V,
                                psi_method="shift_exact")
    h0 = funalg.parse_qexp("0.5*exp(-0.25*x) + 1.0*exp(-1*x)")
    t_grid = np.linspace(0.0, 0.8, 33)
    psi = rz.solve_psi(real, h0, t_grid)

    x = HALF_LINE.grid.points()
    c0 = float(V.coords(HALF_LINE.sample(h0))[0])
    ca = float(V.coords(HALF_LINE.sample(drift))[0])

    def u0_at(pts):
        return 0.5 * np.exp(-0.25 * pts) + (1.0 - c0) * np.exp(-pts)

    def drift_integral(pts, t):
        # int_0^t a_U(x + s) ds for a_U = 0.2 e^{-2x} - ca e^{-x}
        anti = lambda y: -0.1 * np.exp(-2 * y) + ca * np.exp(-y)
        return anti(pts + t) - anti(pts)

    for i, t in enumerate(t_grid):
        expect = u0_at(x + t) + drift_integral(x, float(t))
        assert np.max(np.abs(psi.values[i] - expect)) < 1e-11


def _ou_realization():
    V = rz.Subspace.build([Q.exponential(-1.0)], HALF_LINE)
    return rz.build_realization(
        Translation(), rz.ConstantDrift(Q.exponential(-1.0) * 0.3),
        [Q.exponential(-1.0)], V, psi_method="shift_exact")


def test_exp_exact_matches_affine_closed_form():
    real = _ou_realization()
    t_grid = np.linspace(0.0, 2.0, 201)
    psi = rz.solve_psi(real, Q.exponential(-1.0), t_grid)
    dt = t_grid[1] - t_grid[0]
    zeros = levy.IncrementMatrix(dt, np.zeros((200, 1)), seed=0)
    path = rz.simulate_coordinates(real, psi, np.array([1.0]), zeros,
                                   scheme="exp_exact")
    a = 0.3
    exact = np.exp(-t_grid) * 1.0 + a * (1.0 - np.exp(-t_grid))
    assert np.max(np.abs(path.coords[:, 0] - exact)) < 1e-12


def test_euler_first_order_toward_exact_update():
    real = _ou_realization()
    errs = []
    for n_t in (100, 200):
        t_grid = np.linspace(0.0, 1.0, n_t + 1)
        psi = rz.solve_psi(real, Q.exponential(-1.0), t_grid)
        dt = t_grid[1] - t_grid[0]
        zeros = levy.IncrementMatrix(dt, np.zeros((n_t, 1)), seed=0)
        eu = rz.simulate_coordinates(real, psi, np.array([1.0]), zeros, "euler")
        ex = rz.simulate_coordinates(real, psi, np.array([1.0]), zeros,
                                     "exp_exact")
        errs.append(np.max(np.abs(eu.coords - ex.coords)))
    assert errs[1] < 0.6 * errs[0]


def test_simulate_coordinates_grid_mismatches():
    real = _ou_realization()
    t_grid = np.linspace(0.0, 1.0, 11)
    psi = rz.solve_psi(real, Q.exponential(-1.0), t_grid)
    with pytest.raises(GridMismatch):
        rz.simulate_coordinates(real, psi, np.array([0.0]),
                                levy.IncrementMatrix(0.1, np.zeros((7, 1)), 0))
    with pytest.raises(GridMismatch):
        rz.simulate_coordinates(real, psi, np.array([0.0]),
                                levy.IncrementMatrix(0.2, np.zeros((10, 1)), 0))
    with pytest.raises(GridMismatch):
        rz.simulate_coordinates(real, psi, np.array([0.0]),
                                levy.IncrementMatrix(0.1, np.zeros((10, 2)), 0))


def test_ensemble_matches_per_seed_paths():
    real = _ou_realization()
    t_grid = np.linspace(0.0, 0.5, 26)
    psi = rz.solve_psi(real, Q.exponential(-1.0), t_grid)
    dt = t_grid[1] - t_grid[0]
    spec = levy.make_levy_spec([{"brownian_vol": 0.4}])
    seeds = [5, 6, 7]
    for scheme in ("euler", "exp_exact"):
        ens = rz.simulate_ensemble(real, psi, np.array([1.0]), spec, seeds,
                                   scheme=scheme)
        for p, seed in enumerate(seeds):
            inc = levy.sample_increments(spec, dt, 25, seed)
            one = rz.simulate_coordinates(real, psi, np.array([1.0]), inc,
                                          scheme=scheme)
            assert np.array_equal(ens[p], one.coords)


def test_state_vol_needs_euler():
    V = rz.Subspace.build([Q.exponential(-1.0)], HALF_LINE)
    vol = rz.StateVol(Q.exponential(-1.0), lambda y: 1.0 + 0.5 * float(y[0]) ** 2)
    real = rz.build_realization(Translation(), rz.ConstantDrift(None), [vol], V,
                                psi_method="shift_exact")
    t_grid = np.linspace(0.0, 0.2, 21)
    psi = rz.solve_psi(real, Q.exponential(-1.0), t_grid)
    inc = levy.sample_increments(levy.make_levy_spec([{"brownian_vol": 1.0}]),
                                 t_grid[1] - t_grid[0], 20, 9)
    path = rz.simulate_coordinates(real, psi, np.array([0.5]), inc, "euler")
    assert path.coords.shape == (21, 1)
    with pytest.raises(SchemeUnsupported):
        rz.simulate_coordinates(real, psi, np.array([0.5]), inc, "exp_exact")


def test_reconstruct_assembles_curve_plus_coordinates():
    real, h0 = _cable_realization()
    t_grid = np.linspace(0.0, 0.3, 16)
    psi = rz.solve_psi(real, h0, t_grid)
    _u0, v0 = rz.split_initial(real, h0)
    inc = levy.sample_increments(levy.make_levy_spec([{"brownian_vol": 0.2}]),
                                 t_grid[1] - t_grid[0], 15, 13)
    real_vol, _ = _cable_realization(vols=[funalg.parse_qexp("0.2*sin(2*x)")])
    path = rz.simulate_coordinates(real_vol, psi, v0, inc, "exp_exact")
    out = rz.reconstruct(psi, path, real.V)
    assert np.allclose(out.values, psi.values + path.coords @ real.V.samples)

    other = rz.CoordinatePath(np.linspace(0.0, 0.4, 16), path.coords, 13)
    with pytest.raises(GridMismatch):
        rz.reconstruct(psi, other, real.V)
