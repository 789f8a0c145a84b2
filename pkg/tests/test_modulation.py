"""Modulation fits, diagnostic functionals, and the defect report."""

import numpy as np
import pytest

from gkdvlab import soliton as sol
from gkdvlab.ansatz import SolitonParams, eval_V
from gkdvlab.solver import PeriodicGrid, FieldState, conserved
from gkdvlab.modulation import (decompose, track, lyapunov_functionals,
                                translation_functionals, defect_report,
                                initial_guess_from_peaks, h1_norm_periodic)

GRID = PeriodicGrid(256.0, 4096)
CENTER = 128.0


def make_field(params, corr, Y0, t=0.0):
    u = eval_V(params, corr, GRID.x, Y0=Y0, center=CENTER)
    return FieldState(GRID, u, t)


def shifted(p, dy=0.0):
    return SolitonParams(p.mu1, p.mu2, p.y1 + CENTER + dy, p.y2 + CENTER + dy)


def test_decompose_fixed_point(corr):
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.1, 0.12, 5.1, -4.7))
    st = make_field(truth, corr, Y0)
    guess = SolitonParams(truth.mu1 + 0.03, truth.mu2 - 0.02,
                          truth.y1 + 0.2, truth.y2 - 0.15)
    dec = decompose(st, corr, guess, Y0)
    assert dec.converged
    got = dec.params.as_array()
    assert np.max(np.abs(got - truth.as_array())) < 1e-9
    assert dec.eps_h1 < 1e-9


def test_decompose_orthogonal_perturbation(corr):
    # add a perturbation orthogonal to the four fit directions: parameters
    # must not move and eps must equal the perturbation
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.05, 0.08, 5.0, -5.0))
    st = make_field(truth, corr, Y0)
    x1 = GRID.x - truth.y1
    bump = 1e-3 * np.exp(-0.5 * (GRID.x - CENTER) ** 2)
    dirs = np.stack([
        sol.eval_Qc(x1, 1 + truth.mu1), sol.eval_Qc_prime(x1, 1 + truth.mu1),
        sol.eval_Qc(GRID.x - truth.y2, 1 + truth.mu2),
        sol.eval_Qc_prime(GRID.x - truth.y2, 1 + truth.mu2)])
    gram = GRID.h * dirs @ dirs.T
    coef = np.linalg.solve(gram, GRID.h * dirs @ bump)
    bump_perp = bump - coef @ dirs
    st.values = st.values + bump_perp
    dec = decompose(st, corr, truth, Y0)
    assert dec.converged
    assert np.max(np.abs(dec.params.as_array() - truth.as_array())) < 1e-9
    assert np.max(np.abs(dec.epsilon - bump_perp)) < 1e-9


def test_decompose_bare_pair_sees_corrections(corr):
    # u = two bare solitons: fitting the corrected ansatz leaves eps of the
    # size of the correction terms, |eps|_{H1} <= C sqrt(y) e^{-y}
    for y in (10.0, 13.0):
        Y0 = y
        mu0 = np.sqrt(corr.constants["alpha"]) * np.exp(-Y0 / 2)
        p = shifted(SolitonParams(-mu0, mu0, y / 2, -y / 2))
        u = (sol.eval_Qc(GRID.x - p.y1, 1 + p.mu1)
             + sol.eval_Qc(GRID.x - p.y2, 1 + p.mu2))
        dec = decompose(FieldState(GRID, u, 0.0), corr, p, Y0)
        assert dec.converged
        assert dec.eps_h1 < 60.0 * np.sqrt(y) * np.exp(-y)
        assert dec.eps_h1 > 0.1 * np.sqrt(y) * np.exp(-y)


def test_decompose_roundtrip_randomized(corr):
    rng = np.random.default_rng(42)
    Y0 = 8.5
    for _ in range(20):
        truth = shifted(SolitonParams(
            float(rng.uniform(-0.25, 0.25)), float(rng.uniform(-0.25, 0.25)),
            float(rng.uniform(3.0, 7.0)), float(rng.uniform(-7.0, -3.0))))
        st = make_field(truth, corr, Y0)
        guess = SolitonParams(truth.mu1 + rng.uniform(-0.02, 0.02),
                              truth.mu2 + rng.uniform(-0.02, 0.02),
                              truth.y1 + rng.uniform(-0.1, 0.1),
                              truth.y2 + rng.uniform(-0.1, 0.1))
        dec = decompose(st, corr, guess, Y0)
        assert dec.converged
        assert np.max(np.abs(dec.params.as_array() - truth.as_array())) < 1e-9


def test_decompose_bare_target(corr):
    Y0 = 9.0
    truth = shifted(SolitonParams(-0.1, 0.1, 6.0, -6.0))
    u = (sol.eval_Qc(GRID.x - truth.y1, 1 + truth.mu1)
         + sol.eval_Qc(GRID.x - truth.y2, 1 + truth.mu2))
    dec = decompose(FieldState(GRID, u, 0.0), corr, truth, Y0, target="bare")
    assert dec.converged
    assert np.max(np.abs(dec.params.as_array() - truth.as_array())) < 1e-10
    assert dec.eps_h1 < 1e-10


def test_orthogonality_residuals_below_tolerance(corr):
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.07, 0.05, 4.5, -5.5))
    st = make_field(truth, corr, Y0)
    st.values = st.values + 1e-4 * np.sin(0.2 * GRID.x) * np.exp(
        -0.02 * (GRID.x - CENTER) ** 2)
    dec = decompose(st, corr, truth, Y0)
    unorm = np.sqrt(GRID.h * np.sum(st.values ** 2))
    assert np.max(np.abs(dec.residual_orthogonality)) < 1e-10 * unorm


def test_initial_guess_from_peaks(corr):
    truth = shifted(SolitonParams(0.15, -0.1, 6.0, -6.0))
    u = (sol.eval_Qc(GRID.x - truth.y1, 1 + truth.mu1)
         + sol.eval_Qc(GRID.x - truth.y2, 1 + truth.mu2))
    guess = initial_guess_from_peaks(FieldState(GRID, u, 0.0))
    assert abs(guess.y1 - truth.y1) < 0.2
    assert abs(guess.y2 - truth.y2) < 0.2
    assert abs(guess.mu1 - truth.mu1) < 0.05


def test_track_recovers_reduced_trajectory(corr):
    from gkdvlab.reduced import integrate_incoming
    mu0 = 0.12
    Y0 = float(np.log(corr.constants["alpha"] / mu0 ** 2))
    traj = integrate_incoming(mu0, corr, n_out=41)
    snaps = []
    for i, t in enumerate(traj.times):
        p = traj.params_at(i)
        snaps.append(make_field(shifted(p), corr, Y0, t=float(t)))
    decs = track(snaps, corr, Y0)
    assert all(d.converged for d in decs)
    for i, d in enumerate(decs):
        err = np.max(np.abs(d.params.as_array()
                            - shifted(traj.params_at(i)).as_array()))
        assert err < 1e-8, f"snapshot {i}: {err}"
        assert d.eps_h1 < 1e-8


def test_lyapunov_functionals_zero_eps(corr):
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.05, 0.05, 4.0, -4.0))
    st = make_field(truth, corr, Y0)
    dec = decompose(st, corr, truth, Y0)
    fp, fm = lyapunov_functionals(st, dec, corr, Y0)
    assert abs(fp) < 1e-16 and abs(fm) < 1e-16


def test_lyapunov_functionals_coercive_on_perturbation(corr):
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.05, 0.05, 4.0, -4.0))
    st = make_field(truth, corr, Y0)
    rng = np.random.default_rng(3)
    noise = 1e-3 * rng.standard_normal(GRID.n_modes)
    noise = np.fft.irfft(np.fft.rfft(noise) * (GRID.k < 2.0), n=GRID.n_modes)
    st.values = st.values + noise
    dec = decompose(st, corr, truth, Y0)
    fp, fm = lyapunov_functionals(st, dec, corr, Y0)
    h1_sq = dec.eps_h1 ** 2
    assert fp > 0.05 * h1_sq
    assert fm > 0.05 * h1_sq
    with pytest.raises(ValueError):
        lyapunov_functionals(st, dec, corr, Y0, rho=0.1)


def test_translation_functionals(corr):
    Y0 = 8.0
    truth = shifted(SolitonParams(-0.05, 0.05, 4.0, -4.0))
    st = make_field(truth, corr, Y0)
    dec = decompose(st, corr, truth, Y0)
    j1, j2, flag = translation_functionals(st, dec)
    assert abs(j1) < 1e-12 and abs(j2) < 1e-12
    # closed loop: eps = c * LamR1 gives J1 = c * int(LamQ J1')/intQLamQ ...
    # verified against direct quadrature
    c_amp = 1e-3
    lam1 = sol.eval_LambdaQc(GRID.x - truth.y1, 1 + truth.mu1)
    dec.epsilon = c_amp * lam1
    j1, j2, flag = translation_functionals(st, dec)
    jj = np.concatenate([[0.0], np.cumsum(0.5 * (lam1[1:] + lam1[:-1]) * GRID.h)])
    expected = GRID.h * np.sum(c_amp * lam1 * jj) / sol.soliton_scalars().intQLamQ
    assert j1 == pytest.approx(expected, rel=1e-12)
    assert not flag
    # tail-dominated flag fires when eps lives far to the right
    dec.epsilon = 1e-3 * np.exp(-0.5 * (GRID.x - (truth.y1 + 40.0)) ** 2)
    _, _, flag = translation_functionals(st, dec)
    assert flag


def test_defect_report_on_elastic_null(corr):
    from gkdvlab.experiments import RunConfig, run_elastic_null
    cfg = RunConfig(mu0=0.15, domain_length=256.0, n_modes=4096,
                    out_dir="/tmp/gkdv_test_runs",
                    cache_dir="/tmp/gkdv_test_runs/cache")
    report, decs = run_elastic_null(cfg, corr=corr)
    assert all(d.converged for d in decs)
    # synthetic elastic input: recovered asymptotic speeds match the input
    # trajectory and the pipeline's own remainder is at Newton-tolerance level
    assert max(d.eps_h1 for d in decs) < 1e-8
    assert report.mu1_plus_avg == pytest.approx(0.15, abs=2e-3)
    assert report.mu2_plus_avg == pytest.approx(-0.15, abs=2e-3)


def test_speeds_from_conservation_inversion(corr):
    from gkdvlab.modulation import _speeds_from_conservation
    s = sol.soliton_scalars()
    c1t, c2t = 1.27, 0.81
    mass = (c1t ** (1 / 6) + c2t ** (1 / 6)) * s.intQ2
    energy = -(c1t ** (7 / 6) + c2t ** (7 / 6)) * s.intQ2 / 7.0
    c1, c2 = _speeds_from_conservation(mass, energy, (1.2, 0.9))
    assert c1 == pytest.approx(c1t, rel=1e-12)
    assert c2 == pytest.approx(c2t, rel=1e-12)
