"""Two-soliton ansatz: assembly, cutoff, parameter derivatives, residual."""

import numpy as np
import pytest

from gkdvlab import soliton as sol
from gkdvlab import ansatz as az
from gkdvlab.ansatz import SolitonParams
from gkdvlab.linop import build_corrections
from gkdvlab.util import h1_norm_uniform, spectral_derivative


def exact_rates(p, corr):
    m1, m2, n1, n2 = az.modulation_fields(p, corr)
    return np.array([m1, m2, p.mu1 - n1, p.mu2 - n2])


def test_params_validation():
    with pytest.raises(ValueError):
        SolitonParams(0.0, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        SolitonParams(-1.5, 0.0, 1.0, -1.0)


def test_build_V0_rejects_tiny_separation(corr):
    with pytest.raises(ValueError):
        az.build_V0(SolitonParams(0.0, 0.0, 0.5, -0.5), corr, np.linspace(-5, 5, 64))


def test_V0_at_zero_mu_has_no_BD_terms(corr):
    x = np.linspace(-30, 30, 1201)
    st = az.build_V0(SolitonParams(0.0, 0.0, 6.0, -6.0), corr, x)
    assert np.max(np.abs(st.components["wQ"])) == 0.0
    assert np.max(np.abs(st.components["wB"])) == 0.0
    assert np.max(np.abs(st.components["wD"])) == 0.0
    bare = sol.eval_Q(x - 6.0) + sol.eval_Q(x + 6.0)
    ey = np.exp(-12.0)
    # summation order leaves one ulp of noise; the components themselves match
    assert np.array_equal(st.components["R1"] + st.components["R2"], bare)
    assert np.max(np.abs(st.V0 - bare
                         - ey * (corr.A1(x - 6) + corr.A2(x + 6)))) < 1e-14


def test_V0_closeness_to_bare_pair(corr):
    # sup |V0 - R1 - R2| <= C e^{-y} with stable C across y
    cs = []
    for y in (8.0, 10.0, 12.0, 14.0, 16.0):
        x = np.linspace(-y / 2 - 25, y / 2 + 25, 4001)
        p = SolitonParams(-0.05, 0.05, y / 2, -y / 2)
        st = az.build_V0(p, corr, x)
        bare = st.components["R1"] + st.components["R2"]
        cs.append(np.max(np.abs(st.V0 - bare)) * np.exp(y))
    cs = np.array(cs)
    assert np.all(cs < 100.0) and np.max(cs) / np.min(cs) < 5.0


def test_cutoff_regions(corr):
    y = 10.0
    Y0 = 9.0
    edge = np.exp(Y0 / 2)
    x = np.linspace(-3 * edge, 30, 3001)
    p = SolitonParams(-0.1, 0.1, y / 2, -y / 2)
    st = az.build_V0(p, corr, x)
    v = az.apply_cutoff(st, Y0)
    right = x >= -edge / 2
    assert np.array_equal(v[right], st.V0[right]), "psi must be exactly 1 there"
    left = x <= -edge
    assert np.all(v[left] == 0.0)
    # V is in L^2: extending the grid leftward does not change the norm
    assert np.sqrt(np.trapezoid(v ** 2, x)) < np.inf
    mid = (~right) & (~left)
    assert np.all(np.abs(v[mid]) <= np.abs(st.V0[mid]) + 1e-15)


def test_cutoff_H1_bound_sqrt_y(corr):
    # |V - R1 - R2|_{H1} <= C sqrt(y) e^{-y}, with mu at its regime size
    # mu0(Y0) = sqrt(alpha) e^{-Y0/2}
    cs = []
    for y in (8.0, 10.0, 12.0, 14.0, 16.0):
        Y0 = y
        half = np.exp(Y0 / 2) + 20
        n = int(2 * half / 0.02)
        x = np.linspace(-half, half, n)
        mu0 = np.sqrt(corr.constants["alpha"]) * np.exp(-Y0 / 2)
        p = SolitonParams(-mu0, mu0, y / 2, -y / 2)
        st = az.build_V0(p, corr, x)
        v = az.apply_cutoff(st, Y0)
        diff = v - st.components["R1"] - st.components["R2"]
        h1 = h1_norm_uniform(diff, x[1] - x[0])
        cs.append(h1 * np.exp(y) / np.sqrt(y))
    cs = np.array(cs)
    assert np.max(cs) / np.min(cs) < 5.0, f"C not stable: {cs}"


def test_psi_derivative_stack():
    s = np.linspace(-0.2, 0.7, 2001)
    e = 1e-5
    for k in (1, 2, 3):
        fd = (az.cutoff_psi(s + e, k - 1) - az.cutoff_psi(s - e, k - 1)) / (2 * e)
        err = np.max(np.abs(fd - az.cutoff_psi(s, k)))
        assert err < 1e-4 * max(1.0, np.max(np.abs(az.cutoff_psi(s, k)))), \
            f"order {k}: {err}"


def test_wA_symmetric_in_symmetric_frame(corr):
    x = np.linspace(-30, 30, 2401)
    p = SolitonParams(-0.1, 0.1, 7.0, -7.0)
    st = az.build_V0(p, corr, x)
    wa = st.components["wA"]
    assert np.max(np.abs(wa - wa[::-1])) < 1e-12


def test_modulation_fields_structure(corr):
    c = corr.constants
    y = 9.0
    p0 = SolitonParams(0.0, 0.0, y / 2, -y / 2)
    m1, m2, n1, n2 = az.modulation_fields(p0, corr)
    assert m1 == pytest.approx(c["alpha"] * np.exp(-y), rel=1e-14)
    assert m2 == pytest.approx(-m1, rel=1e-14)
    assert n1 == pytest.approx(c["a"] * np.exp(-y), rel=1e-14)
    assert n2 == pytest.approx(n1, rel=1e-14)
    # index-swap structure of the scaling fields: M1(mu2, mu1) = -M2(mu1, mu2);
    # the translation fields break it (b1 != b2), which drives the inelasticity
    pa = SolitonParams(0.03, -0.07, y / 2, -y / 2)
    pb = SolitonParams(-0.07, 0.03, y / 2, -y / 2)
    ma = az.modulation_fields(pa, corr)
    mb = az.modulation_fields(pb, corr)
    assert mb[0] == pytest.approx(-ma[1], rel=1e-12)
    assert abs(mb[2] + ma[3]) > 1e-6 * abs(ma[3])


def test_modulation_fields_independent_recompute(corr):
    c = corr.constants
    mu0 = 0.2
    Y0 = np.log(c["alpha"] / mu0 ** 2)
    p = SolitonParams(-mu0, mu0, Y0 / 2, -Y0 / 2)
    m1, _, n1, _ = az.modulation_fields(p, corr)
    ey = np.exp(-Y0)
    m1_direct = ey * (c["alpha"] + c["beta"] * (-mu0) * Y0 + c["delta"] * (-mu0))
    n1_direct = ey * (c["a"] + c["b1"] * (-mu0) * Y0 + c["d1"] * (-mu0))
    assert m1 == pytest.approx(m1_direct, rel=1e-14)
    assert n1 == pytest.approx(n1_direct, rel=1e-14)


def test_dV0_dGamma_matches_finite_differences(corr):
    p = SolitonParams(-0.12, 0.08, 5.5, -4.5)
    x = np.linspace(-25, 25, 1501)
    analytic = az.dV0_dGamma(p, corr, x)
    fd = az._fd_grads(p, corr, x, drop=())
    for k in range(4):
        scale = max(1.0, np.max(np.abs(fd[k])))
        assert np.max(np.abs(analytic[k] - fd[k])) < 2e-6 * scale, f"comp {k}"


def test_dV_dGamma_near_soliton_directions(corr):
    # dV/dmu_j ~ LamR_j and dV/dy_j ~ -dx R_j with O(sqrt(y) e^{-y})
    # discrepancy over the soliton region (the far-left correction plateau is
    # the cutoff's business and is measured by the cutoff tests)
    cs_mu, cs_y = [], []
    for y in (10.0, 14.0, 18.0):
        x = np.linspace(-y / 2 - 10, y / 2 + 10, 4001)
        h = x[1] - x[0]
        mu0 = np.sqrt(corr.constants["alpha"]) * np.exp(-y / 2)
        p = SolitonParams(-mu0, mu0, y / 2, -y / 2)
        grads = az.dV0_dGamma(p, corr, x)
        lam1 = sol.eval_LambdaQc(x - p.y1, 1 + p.mu1)
        dr1 = sol.eval_Qc_prime(x - p.y1, 1 + p.mu1)
        scale = np.sqrt(y) * np.exp(-y)
        cs_mu.append(h1_norm_uniform(grads[0] - lam1, h) / scale)
        cs_y.append(h1_norm_uniform(grads[2] + dr1, h) / scale)
    assert max(cs_mu) / min(cs_mu) < 5.0, f"mu-gradient C unstable: {cs_mu}"
    assert max(cs_y) / min(cs_y) < 5.0, f"y-gradient C unstable: {cs_y}"


def test_V0_derivative_stack_consistency(corr):
    p = SolitonParams(-0.1, 0.1, 5.0, -5.0)
    x = np.linspace(-20, 20, 1201)
    v0, v1, v2, v3 = az.V0_derivative_stack(p, corr, x)
    st = az.build_V0(p, corr, x)
    assert np.max(np.abs(v0 - st.V0)) < 1e-12
    e = 1e-3
    sts = {s: az.build_V0(p, corr, x + s).V0 for s in (-2 * e, -e, e, 2 * e)}
    fd1 = (sts[e] - sts[-e]) / (2 * e)
    fd2 = (sts[e] - 2 * v0 + sts[-e]) / e ** 2
    fd3 = (sts[2 * e] - 2 * sts[e] + 2 * sts[-e] - sts[-2 * e]) / (2 * e ** 3)
    assert np.max(np.abs(fd1 - v1)) < 5e-6
    assert np.max(np.abs(fd2 - v2)) < 5e-3 * max(1, np.max(np.abs(v2)))
    assert np.max(np.abs(fd3 - v3)) < 5e-2 * max(1, np.max(np.abs(v3)))


# ---------------------------------------------------------------------------
# residual of the approximate equation
# ---------------------------------------------------------------------------

def test_residual_zero_for_single_soliton(corr):
    # a bare soliton with exact transport rates is an exact solution
    mu, y1 = 0.2, 1.0
    x = np.linspace(-40, 40, 4001)
    h = x[1] - x[0]
    v = az.single_soliton_state(mu, y1, x)
    flux = spectral_derivative(v, h, 2) - v + v ** 4
    e_vals = mu * (-spectral_derivative(v, h, 1)) + spectral_derivative(flux, h, 1)
    assert np.max(np.abs(e_vals)) < 1e-8


def test_residual_second_order_scaling_mu_zero(corr):
    # with mu = 0 only the pair-interaction remainder is left: O(poly(y) e^{-2y})
    vals = {}
    for y in (10.0, 14.0):
        p = SolitonParams(0.0, 0.0, y / 2, -y / 2)
        rep = az.residual_of_approx(p, exact_rates(p, corr), corr, Y0=y)
        vals[y] = rep.weighted_sup * np.exp(2 * y)
    assert vals[14.0] < 10.0 * vals[10.0], f"not second order: {vals}"
    assert vals[14.0] < 2e5


def test_residual_linear_in_mu_cancels(corr):
    # central difference in mu kills the quadratic terms; what is left of the
    # linear-order residual must be far below the per-order sizes it cancels
    y = 16.0
    x = np.linspace(-y / 2 - 25, y / 2 + 25, 12001)
    eps = 1e-5

    def E_of(m):
        p = SolitonParams(-m, m, y / 2, -y / 2)
        return az.residual_of_approx(p, exact_rates(p, corr), corr, Y0=y, x=x).E

    lin = (E_of(eps) - E_of(-eps)) / (2 * eps) * np.exp(y)
    mask = np.abs(x) < y / 2 + 8
    assert np.max(np.abs(lin[mask])) < 1.0


def test_residual_scaling_in_mu0(corr):
    # weighted sup obeys C (1+Y0^sigma) e^{-Y0} e^{-y} with sigma around 3
    alpha = corr.constants["alpha"]
    scaled = []
    for mu0 in (0.2, 0.05):
        Y0 = np.log(alpha / mu0 ** 2)
        p = SolitonParams(-mu0, mu0, Y0 / 2, -Y0 / 2)
        rep = az.residual_of_approx(p, exact_rates(p, corr), corr, Y0=Y0)
        scaled.append(rep.weighted_sup * np.exp(2 * Y0))
    growth = scaled[1] / scaled[0]
    assert 1.0 < growth < 30.0, f"scaled residuals {scaled}"


def test_residual_ablation_shows_corrections_matter(corr):
    # dropping w_B and w_D degrades the residual by >= 5x once mu0 is deep in
    # the asymptotic regime
    mu0 = 0.01
    alpha = corr.constants["alpha"]
    Y0 = np.log(alpha / mu0 ** 2)
    p = SolitonParams(-mu0, mu0, Y0 / 2, -Y0 / 2)
    rates = exact_rates(p, corr)
    full = az.residual_of_approx(p, rates, corr, Y0=Y0)
    dropped = az.residual_of_approx(p, rates, corr, Y0=Y0, drop=("wB", "wD"))
    assert dropped.weighted_sup > 5.0 * full.weighted_sup


def test_a_term_sign_choice(corr):
    # the consistent forcing carries -a (LamQ)'; the opposite sign leaves a
    # first-order residual of size ~ 2a|(LamQ)'| at the solitons
    wrong = build_corrections(a_lamq_sign=+1.0)
    y = 16.0
    x = np.linspace(-y / 2 - 25, y / 2 + 25, 12001)
    eps = 1e-5
    sups = {}
    for tag, cset in (("right", corr), ("wrong", wrong)):
        def E_of(m, cs=cset):
            p = SolitonParams(-m, m, y / 2, -y / 2)
            return az.residual_of_approx(p, exact_rates(p, cs), cs, Y0=y, x=x).E
        lin = (E_of(eps) - E_of(-eps)) / (2 * eps) * np.exp(y)
        mask = np.abs(x) < y / 2 + 8
        sups[tag] = np.max(np.abs(lin[mask]))
    assert sups["wrong"] > 10.0 * sups["right"]


def test_exact_product_expansion_identity(corr):
    # the quartic product expansion behind the mid-range term: apply the
    # operator stack to (x1+x2) R1 R2 and compare with the collected form
    y = 14.0
    n = 16384
    half = y / 2 + 25
    h = 2 * half / n
    x = -half + h * np.arange(n)
    y1, y2 = y / 2, -y / 2
    x1, x2 = x - y1, x - y2
    Q, Qp = sol.eval_Q, sol.eval_Q_prime
    r1, r2 = Q(x1), Q(x2)
    r1p, r2p = Qp(x1), Qp(x2)
    g = (x1 + x2) * r1 * r2
    lhs = spectral_derivative(
        -spectral_derivative(g, h, 2) + g - 4 * (r1 ** 3 + r2 ** 3) * g, h, 1)
    d_r14 = 4 * r1 ** 3 * r1p
    d_r24 = 4 * r2 ** 3 * r2p
    rhs = (2 * r1 * r2
           + 3 * y * (r1 - r1p - d_r14) * r2 - y * r1 ** 4 * r2p
           + 3 * y * (r2 + r2p + d_r24) * r1 + y * r2 ** 4 * r1p
           + (-r1 ** 4 - 6 * x1 * d_r14) * r2 - 2 * x1 * r1 ** 4 * r2p
           - r1 ** 4 * r2
           + 6 * x1 * (r1 - r1p) * r2 + 6 * (r1 - r1p) * r2p
           - 6 * (r1 - r1p) * r2
           + (-r2 ** 4 - 6 * x2 * d_r24) * r1 - 2 * x2 * r2 ** 4 * r1p
           - r2 ** 4 * r1
           - 6 * x2 * (r2 + r2p) * r1 - 6 * (r2p + r2) * r1p
           - 6 * (r2 + r2p) * r1)
    assert np.max(np.abs(lhs - rhs)) < 1e-7


def test_stilde_matches_finite_separation_extraction(corr):
    # Stilde1 closed form equals the finite-y residual of the mid-range
    # expansion, with the mismatch shrinking as the separation grows
    from gkdvlab.linop import rhs_S_tilde1
    scal = corr.scalars
    thA = corr.constants["theta_A"]
    errs = []
    for y in (16.0, 22.0):
        n = 16384
        half = y / 2 + 20
        h = 2 * half / n
        x = -half + h * np.arange(n)
        y1, y2 = y / 2, -y / 2
        x1, x2 = x - y1, x - y2
        r1, r2 = sol.eval_Q(x1), sol.eval_Q(x2)
        r1p, r2p = sol.eval_Q_prime(x1), sol.eval_Q_prime(x2)
        g = (x1 + x2) * r1 * r2
        full = spectral_derivative(
            -spectral_derivative(g, h, 2) + g - 4 * (r1 ** 3 + r2 ** 3) * g,
            h, 1)
        d_r14 = 4 * r1 ** 3 * r1p
        d_r24 = 4 * r2 ** 3 * r2p
        lead = (2 * r1 * r2
                + 3 * y * (r1 - r1p - d_r14) * r2 - y * r1 ** 4 * r2p
                + 3 * y * (r2 + r2p + d_r24) * r1 + y * r2 ** 4 * r1p)
        resid = full - lead
        # normalize to the per-soliton profile near soliton 1
        pref = 10 ** (1 / 3) * np.exp(-y)
        window = np.abs(x1) < 5
        got = resid[window] / pref
        want = rhs_S_tilde1(x1[window], scal) * 10 ** (1 / 3) / (2.0 * thA)
        errs.append(np.max(np.abs(got - want)) / np.max(np.abs(want)))
    # the finite-separation contamination is already below the spectral noise
    # floor at these separations; demand agreement at that floor
    assert max(errs) < 1e-5, f"extraction disagrees: {errs}"


def test_residual_report_fields(corr):
    p = SolitonParams(-0.2, 0.2, 4.0, -4.0)
    rep = az.residual_of_approx(p, exact_rates(p, corr), corr, Y0=8.0)
    assert rep.weighted_sup > 0
    assert rep.h1_norm > 0
    assert rep.window[0] < -np.exp(4.0)
