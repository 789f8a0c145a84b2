"""Decomposition of a numerical field into two modulated solitons plus
remainder, diagnostic functionals, and the per-run collision report.

The fit drives the four orthogonality integrals

    int eps R~_1 = int eps dx(R~_1) = int eps R~_2 = int eps dx(R~_2) = 0,
    eps = u - V(.; Gamma),

to zero by a Newton iteration on Gamma = (mu1, mu2, y1, y2); V is the full
corrected ansatz by default ("full"), or the bare two-soliton sum ("bare")
for the large-time regime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.fft import rfft, irfft

from . import soliton as sol
from .ansatz import SolitonParams, eval_V, dV_dGamma, build_V0, apply_cutoff
from .linop import CorrectionSet
from .solver import FieldState, PeriodicGrid, conserved
from .util import l2_norm_uniform


@dataclass
class Decomposition:
    time: float
    params: SolitonParams
    epsilon: np.ndarray                 # remainder against the fit target
    w: np.ndarray                       # remainder against the bare pair
    residual_orthogonality: np.ndarray  # the four fit integrals
    eps_h1: float
    w_h1: float
    converged: bool
    iterations: int
    target: str

    @property
    def separation(self) -> float:
        return self.params.y


def _orthogonality_directions(params: SolitonParams, x):
    x1 = x - params.y1
    x2 = x - params.y2
    c1, c2 = 1.0 + params.mu1, 1.0 + params.mu2
    o = np.stack([sol.eval_Qc(x1, c1), sol.eval_Qc_prime(x1, c1),
                  sol.eval_Qc(x2, c2), sol.eval_Qc_prime(x2, c2)])
    do = np.zeros((4, 4, len(x)))      # d o_j / d Gamma_k
    do[0, 0] = sol.eval_LambdaQc(x1, c1)
    do[0, 2] = -sol.eval_Qc_prime(x1, c1)
    do[1, 0] = sol.eval_LambdaQc_prime(x1, c1)
    do[1, 2] = -(c1 * sol.eval_Qc(x1, c1) - sol.eval_Qc(x1, c1) ** 4)
    do[2, 1] = sol.eval_LambdaQc(x2, c2)
    do[2, 3] = -sol.eval_Qc_prime(x2, c2)
    do[3, 1] = sol.eval_LambdaQc_prime(x2, c2)
    do[3, 3] = -(c2 * sol.eval_Qc(x2, c2) - sol.eval_Qc(x2, c2) ** 4)
    return o, do


def _eval_target(params, corr, x, target, Y0, center):
    if target == "bare":
        return (sol.eval_Qc(x - params.y1, 1.0 + params.mu1)
                + sol.eval_Qc(x - params.y2, 1.0 + params.mu2))
    return eval_V(params, corr, x, Y0=Y0, center=center)


def _target_grads(params, corr, x, target, Y0, center):
    if target == "bare":
        x1, x2 = x - params.y1, x - params.y2
        c1, c2 = 1.0 + params.mu1, 1.0 + params.mu2
        return np.stack([sol.eval_LambdaQc(x1, c1), sol.eval_LambdaQc(x2, c2),
                         -sol.eval_Qc_prime(x1, c1), -sol.eval_Qc_prime(x2, c2)])
    return dV_dGamma(params, corr, x, Y0=Y0, center=center)


def h1_norm_periodic(values: np.ndarray, grid: PeriodicGrid) -> float:
    dv = irfft(1j * grid.k * rfft(values), n=grid.n_modes)
    return float(np.sqrt(grid.h * np.sum(values ** 2 + dv ** 2)))


def windowed_h1_periodic(values: np.ndarray, grid: PeriodicGrid,
                         left: float, right: float) -> float:
    dv = irfft(1j * grid.k * rfft(values), n=grid.n_modes)
    m = (grid.x >= left) & (grid.x <= right)
    return float(np.sqrt(grid.h * np.sum(values[m] ** 2 + dv[m] ** 2)))


def initial_guess_from_peaks(state: FieldState) -> SolitonParams:
    """Seed a fit from the two tallest well-separated maxima."""
    u = state.values
    x = state.grid.x
    order = np.argsort(u)[::-1]
    y_first = x[order[0]]
    # second peak at least 3 units away
    for idx in order[1:]:
        if abs(x[idx] - y_first) > 3.0:
            y_second = x[idx]
            break
    else:
        raise ValueError("could not locate two separated peaks")
    ys = sorted([y_first, y_second], reverse=True)
    mus = []
    for yj in ys:
        amp = float(np.interp(yj, x, u))
        mus.append(np.clip((amp / sol.Q_PEAK) ** 3 - 1.0, -0.5, 0.5))
    return SolitonParams(mus[0], mus[1], ys[0], ys[1])


def decompose(state: FieldState, corr: CorrectionSet,
              guess: SolitonParams, Y0: float, target: str = "full",
              center: float | None = None, tol_rel: float = 1e-11,
              max_iter: int = 25) -> Decomposition:
    """Newton fit of the four modulation parameters.

    Fails (converged=False) on iteration overrun; raises if the soliton
    ordering y1 > y2 is lost, which signals a bad seed rather than noise.
    """
    grid = state.grid
    x = grid.x
    h = grid.h
    u = state.values
    unorm = max(l2_norm_uniform(u, h), 1e-30)
    tol = tol_rel * unorm
    if center is None:
        center = 0.5 * grid.length

    def residual_of(g_arr):
        params = SolitonParams.from_array(g_arr)
        v = _eval_target(params, corr, x, target, Y0, center)
        eps = u - v
        o, do = _orthogonality_directions(params, x)
        return params, v, eps, o, do, h * (o @ eps)

    def admissible(g_arr):
        return (g_arr[2] - g_arr[3] > 2.0 and 1.0 + g_arr[0] > 0.05
                and 1.0 + g_arr[1] > 0.05)

    g = guess.as_array()
    if not admissible(g):
        raise ValueError(f"inadmissible initial guess {g}")
    converged = False
    params, v, eps, o, do, res = residual_of(g)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(res)) < tol:
            converged = True
            break
        grads = _target_grads(params, corr, x, target, Y0, center)
        # jac[j, k] = d res_j / d Gamma_k
        jac = -h * (o @ grads.T) + h * np.tensordot(do, eps, axes=(2, 0))
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        # damped update: halve the step until admissible and non-diverging
        accepted = False
        for _ in range(8):
            g_try = g + step
            if admissible(g_try):
                trial = residual_of(g_try)
                if np.max(np.abs(trial[5])) < 2.0 * np.max(np.abs(res)):
                    g = g_try
                    params, v, eps, o, do, res = trial
                    accepted = True
                    break
            step = 0.5 * step
        if not accepted:
            break

    params = SolitonParams.from_array(g)
    v = _eval_target(params, corr, x, target, Y0, center)
    eps = u - v
    bare = (sol.eval_Qc(x - params.y1, 1.0 + params.mu1)
            + sol.eval_Qc(x - params.y2, 1.0 + params.mu2))
    w = u - bare
    o, _ = _orthogonality_directions(params, x)
    res = h * (o @ eps)
    return Decomposition(time=state.time, params=params, epsilon=eps, w=w,
                         residual_orthogonality=res,
                         eps_h1=h1_norm_periodic(eps, grid),
                         w_h1=h1_norm_periodic(w, grid),
                         converged=converged, iterations=it, target=target)


def track(states, corr: CorrectionSet, Y0: float, guess: SolitonParams = None,
          target: str = "full", reseed_eps: float = 0.05, **kw):
    """Sequential decomposition of time-ordered snapshots, each fit seeded
    from the previous; failed fits are recorded as-is, never interpolated.

    Mid-collision the orthogonality system can carry several nearby solution
    branches; only the small-remainder one is the decomposition (the others
    have left the closeness ball).  Whenever the continuation fit's remainder
    exceeds ``reseed_eps``, a peak-detection-seeded fit is tried as well and
    the smaller-remainder solution kept.
    """
    out = []
    for state in states:
        if guess is None:
            guess = initial_guess_from_peaks(state)
        dec = decompose(state, corr, guess, Y0, target=target, **kw)
        if not dec.converged or dec.eps_h1 > reseed_eps:
            try:
                reseed = initial_guess_from_peaks(state)
                alt = decompose(state, corr, reseed, Y0, target=target, **kw)
                if alt.converged and (not dec.converged
                                      or alt.eps_h1 < dec.eps_h1):
                    dec = alt
            except ValueError:
                pass
        out.append(dec)
        if dec.converged:
            guess = dec.params
    return out


# ---------------------------------------------------------------------------
# diagnostic functionals
# ---------------------------------------------------------------------------

def lyapunov_functionals(state: FieldState, dec: Decomposition,
                         corr: CorrectionSet, Y0: float, rho: float = 1.0 / 64.0,
                         center: float | None = None):
    """Weighted energy/mass functionals controlling the remainder.

    F_plus uses the flat H^1 quadratic form plus a mu-weighted mass term;
    F_minus carries the scaling weights 1/(1+mu_j)^2.  The transition weight
    is centered between the two fitted solitons.
    """
    if not 0 < rho < 1.0 / 32.0:
        raise ValueError("rho must lie in (0, 1/32)")
    grid = state.grid
    if center is None:
        center = 0.5 * grid.length
    p = dec.params
    eps = dec.epsilon
    deps = irfft(1j * grid.k * rfft(eps), n=grid.n_modes)
    v = _eval_target(p, corr, grid.x, dec.target, Y0, center)
    phi = (2.0 / np.pi) * np.arctan(
        np.exp(np.clip(8.0 * rho * (grid.x - 0.5 * (p.y1 + p.y2)), -500, 500)))
    quintic = (eps + v) ** 5 - v ** 5 - 5.0 * v ** 4 * eps
    quad = deps ** 2 + eps ** 2 - 0.4 * quintic
    big_phi = p.mu1 * phi + p.mu2 * (1.0 - phi)
    f_plus = grid.h * float(np.sum(quad + eps ** 2 * big_phi))
    phi1 = phi / (1.0 + p.mu1) ** 2 + (1.0 - phi) / (1.0 + p.mu2) ** 2
    phi2 = (p.mu1 * phi / (1.0 + p.mu1) ** 2
            + p.mu2 * (1.0 - phi) / (1.0 + p.mu2) ** 2)
    f_minus = grid.h * float(np.sum(quad * phi1 + eps ** 2 * phi2))
    return f_plus, f_minus


def translation_functionals(state: FieldState, dec: Decomposition,
                            tail_window: float = 10.0):
    """J_j = (int eps J_j) / int Q LamQ with J_j(x) = int_-inf^x LamR~_j.

    J_j has a nonzero limit on the right, so the values only mean something
    when eps carries no mass far to the right of the solitons; a
    tail-dominated flag is returned alongside.
    """
    grid = state.grid
    x = grid.x
    h = grid.h
    p = dec.params
    scalars = sol.soliton_scalars()
    out = []
    for (mu, yj) in ((p.mu1, p.y1), (p.mu2, p.y2)):
        lam = sol.eval_LambdaQc(x - yj, 1.0 + mu)
        jj = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * h)])
        out.append(h * float(np.sum(dec.epsilon * jj)) / scalars.intQLamQ)
    tail_mask = x > p.y1 + tail_window
    tail_mass = float(np.sqrt(h * np.sum(dec.epsilon[tail_mask] ** 2)))
    eps_l2 = l2_norm_uniform(dec.epsilon, h)
    tail_dominated = bool(tail_mass > 0.5 * eps_l2)
    return out[0], out[1], tail_dominated


# ---------------------------------------------------------------------------
# collision report
# ---------------------------------------------------------------------------

@dataclass
class CollisionReport:
    mu0: float
    alpha: float
    Y0: float
    complete: bool
    min_separation: float
    turning_time: float
    mu1_plus_avg: float
    mu2_plus_avg: float
    mu1_plus_fit: float
    mu2_plus_fit: float
    mu1_plus_conserved: float
    mu2_plus_conserved: float
    max_eps_h1: float
    max_w_h1: float
    final_eps_h1_window: float
    final_w_h1_window: float
    window_left_offset: float
    radiated_mass: float
    radiated_energy: float
    mass_drift_rel: float
    energy_drift_rel: float
    bracket_ratio_mu1: float
    bracket_ratio_mu2: float
    fit_noise: float
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None):
        blob = asdict(self)
        if path is not None:
            with open(path, "w") as f:
                json.dump(blob, f, indent=2, sort_keys=True)
        return blob


def _speeds_from_conservation(mass_pair: float, energy_pair: float,
                              guess: tuple) -> tuple:
    """Invert M(Q_c1)+M(Q_c2), E(Q_c1)+E(Q_c2) for (c1, c2) by 2x2 Newton."""
    intQ2 = sol.soliton_scalars().intQ2
    m_t = mass_pair / intQ2
    e_t = -7.0 * energy_pair / intQ2
    c = np.array(guess, dtype=float)
    for _ in range(60):
        c = np.maximum(c, 1e-6)
        f = np.array([c[0] ** (1 / 6) + c[1] ** (1 / 6) - m_t,
                      c[0] ** (7 / 6) + c[1] ** (7 / 6) - e_t])
        jac = np.array([[c[0] ** (-5 / 6) / 6, c[1] ** (-5 / 6) / 6],
                        [7 * c[0] ** (1 / 6) / 6, 7 * c[1] ** (1 / 6) / 6]])
        step = np.linalg.solve(jac, -f)
        c = c + step
        if np.max(np.abs(step)) < 1e-14:
            break
    return float(c[0]), float(c[1])


def defect_report(times, decs, conserved_series, mu0: float, alpha: float,
                  grid: PeriodicGrid, window_margin: float = 12.0,
                  final_fraction: float = 0.1, meta=None) -> CollisionReport:
    """Aggregate a tracked collision run into the per-run observables.

    Asymptotic speeds come from three routes: time-averaged fitted mu_j over
    the final fraction of the run, a linear fit of the fitted positions
    (corrected by the translation fields N_j), and inversion of the mass and
    energy bookkeeping of the two outgoing solitons.
    """
    times = np.asarray(times, dtype=float)
    ok = np.array([d.converged for d in decs])
    Y0 = float(np.log(alpha / mu0 ** 2))
    y = np.array([d.separation for d in decs])
    mu1 = np.array([d.params.mu1 for d in decs])
    mu2 = np.array([d.params.mu2 for d in decs])
    y1 = np.array([d.params.y1 for d in decs])
    y2 = np.array([d.params.y2 for d in decs])

    mu = mu1 - mu2
    cross = np.where((mu[:-1] < 0) & (mu[1:] >= 0))[0]
    if len(cross):
        i = cross[0]
        t_turn = float(times[i] - mu[i] * (times[i + 1] - times[i])
                       / (mu[i + 1] - mu[i]))
    else:
        t_turn = float("nan")

    n_final = max(3, int(np.ceil(final_fraction * len(times))))
    sel = slice(len(times) - n_final, None)
    mu1_avg = float(np.mean(mu1[sel]))
    mu2_avg = float(np.mean(mu2[sel]))
    fit1 = np.polyfit(times[sel], y1[sel], 1)
    fit2 = np.polyfit(times[sel], y2[sel], 1)
    mu1_fit = float(fit1[0])
    mu2_fit = float(fit2[0])
    fit_noise = float(np.std(y1[sel] - np.polyval(fit1, times[sel]))
                      / max(times[sel][-1] - times[sel][0], 1e-12))

    masses = np.array([cp.mass for cp in conserved_series])
    energies = np.array([cp.energy for cp in conserved_series])
    mass_drift = float(abs(masses[-1] - masses[0]) / abs(masses[0]))
    energy_drift = float(abs(energies[-1] - energies[0]) / abs(energies[0]))

    # remainder norms: full-line and windowed around/between the solitons
    max_eps = float(np.max([d.eps_h1 for d in decs]))
    max_w = float(np.max([d.w_h1 for d in decs]))
    d_end = decs[-1]
    left = d_end.params.y2 - window_margin
    right = d_end.params.y1 + window_margin
    final_eps_win = windowed_h1_periodic(d_end.epsilon, grid, left, right)
    final_w_win = windowed_h1_periodic(d_end.w, grid, left, right)

    # mass/energy bookkeeping for the outgoing pair
    radiated_mass = float(masses[0] - masses[-1])
    radiated_energy = float(energies[0] - energies[-1])
    eps_mass = float(grid.h * np.sum(d_end.epsilon ** 2))
    deps = irfft(1j * grid.k * rfft(d_end.epsilon), n=grid.n_modes)
    eps_energy = float(grid.h * (np.sum(deps ** 2)
                                 - 0.4 * np.sum(d_end.epsilon ** 5)))
    try:
        c1, c2 = _speeds_from_conservation(
            masses[0] - radiated_mass - eps_mass,
            energies[0] - radiated_energy - eps_energy,
            (1.0 + mu1_avg, 1.0 + mu2_avg))
        mu1_cons, mu2_cons = c1 - 1.0, c2 - 1.0
    except np.linalg.LinAlgError:
        mu1_cons = mu2_cons = float("nan")

    # monotonicity-bracket consistency: (mu+/mu0 - 1) against e^{Y0} |w|^2
    w_sq = final_w_win ** 2
    bracket1 = ((mu1_avg / mu0 - 1.0) / (np.exp(Y0) * w_sq)
                if w_sq > 0 else float("nan"))
    bracket2 = ((-mu2_avg / mu0 - 1.0) / (np.exp(Y0) * w_sq)
                if w_sq > 0 else float("nan"))

    return CollisionReport(
        mu0=mu0, alpha=alpha, Y0=Y0, complete=bool(np.all(ok)),
        min_separation=float(np.min(y)), turning_time=t_turn,
        mu1_plus_avg=mu1_avg, mu2_plus_avg=mu2_avg,
        mu1_plus_fit=mu1_fit, mu2_plus_fit=mu2_fit,
        mu1_plus_conserved=mu1_cons, mu2_plus_conserved=mu2_cons,
        max_eps_h1=max_eps, max_w_h1=max_w,
        final_eps_h1_window=final_eps_win, final_w_h1_window=final_w_win,
        window_left_offset=window_margin,
        radiated_mass=radiated_mass, radiated_energy=radiated_energy,
        mass_drift_rel=mass_drift, energy_drift_rel=energy_drift,
        bracket_ratio_mu1=float(bracket1), bracket_ratio_mu2=float(bracket2),
        fit_noise=fit_noise, meta=meta or {})
