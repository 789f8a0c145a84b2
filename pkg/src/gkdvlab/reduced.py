"""Reduced four-parameter modulation dynamics and the closed-form separation.

The ansatz parameters evolve by

    dmu_j/dt = M_j(Gamma),    dy_j/dt = mu_j - N_j(Gamma),

so that the parameter-induced part of the ansatz equation vanishes.  At
leading order the separation y(t) = y1 - y2 follows the two-body law
y'' = 2 alpha e^{-y}, solved by Y(t) = Y0 + 2 ln cosh(mu0 t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .ansatz import SolitonParams, modulation_fields
from .linop import CorrectionSet


def closed_form_Y(t, mu0: float, alpha: float):
    """(Y, Ydot) of the leading repulsive dynamics, Y0 = ln(alpha/mu0^2).

    Y = Y0 + 2 ln cosh(mu0 t) solves Y'' = 2 alpha e^{-Y} with turning point
    Y(0) = Y0, and Ydot -> +-2 mu0 at +-infinity.
    """
    if mu0 <= 0:
        raise ValueError("mu0 must be positive")
    t = np.asarray(t, dtype=float)
    Y0 = np.log(alpha / mu0 ** 2)
    u = mu0 * t
    # ln cosh without overflow
    lncosh = np.abs(u) + np.log1p(np.exp(-2.0 * np.abs(u))) - np.log(2.0)
    return Y0 + 2.0 * lncosh, 2.0 * mu0 * np.tanh(u)


def _rhs_array(vec, constants: dict, zero_second_order: bool) -> np.ndarray:
    mu1, mu2, y1, y2 = vec
    ey = np.exp(-(y1 - y2))
    y = y1 - y2
    c = constants
    if zero_second_order:
        m1, m2 = c["alpha"] * ey, -c["alpha"] * ey
        n1 = n2 = c["a"] * ey
    else:
        m1 = (c["alpha"] + c["beta"] * mu1 * y + c["delta"] * mu1) * ey
        m2 = -(c["alpha"] + c["beta"] * mu2 * y + c["delta"] * mu2) * ey
        n1 = (c["a"] + c["b1"] * mu1 * y + c["d1"] * mu1) * ey
        n2 = (c["a"] + c["b2"] * mu2 * y + c["d2"] * mu2) * ey
    return np.array([m1, m2, mu1 - n1, mu2 - n2])


def reduced_rhs(params: SolitonParams, corr: CorrectionSet,
                zero_second_order: bool = False) -> np.ndarray:
    """(dmu1, dmu2, dy1, dy2) for the ansatz parameter system."""
    return _rhs_array(params.as_array(), corr.constants, zero_second_order)


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    states: np.ndarray          # shape (n, 4): mu1, mu2, y1, y2
    invariant_H: np.ndarray     # (mu1-mu2)^2 + 4 alpha e^{-y}
    mu0: float
    alpha: float
    complete: bool = True       # False when y(t) collapsed and the run aborted

    @property
    def mu1(self):
        return self.states[:, 0]

    @property
    def mu2(self):
        return self.states[:, 1]

    @property
    def y1(self):
        return self.states[:, 2]

    @property
    def y2(self):
        return self.states[:, 3]

    @property
    def y(self):
        return self.states[:, 2] - self.states[:, 3]

    @property
    def mu(self):
        return self.states[:, 0] - self.states[:, 1]

    def params_at(self, i: int) -> SolitonParams:
        return SolitonParams.from_array(self.states[i])

    def turning_time(self) -> float:
        """Zero crossing of mu = mu1 - mu2 (linear interpolation)."""
        mu = self.mu
        sign_change = np.where(np.diff(np.sign(mu)) > 0)[0]
        if len(sign_change) == 0:
            raise ValueError("trajectory has no speed crossing")
        i = sign_change[0]
        t0, t1 = self.times[i], self.times[i + 1]
        return float(t0 - mu[i] * (t1 - t0) / (mu[i + 1] - mu[i]))

    def min_separation(self) -> float:
        return float(np.min(self.y))

    def to_csv(self, path) -> None:
        header = "t,mu1,mu2,y1,y2,y,H"
        data = np.column_stack([self.times, self.states, self.y,
                                self.invariant_H])
        np.savetxt(path, data, delimiter=",", header=header, comments="")

    def summary(self) -> dict:
        try:
            t_turn = self.turning_time()
        except ValueError:
            t_turn = float("nan")
        return {
            "mu0": self.mu0,
            "turning_time": t_turn,
            "min_separation": self.min_separation(),
            "mu1_final": float(self.mu1[-1]),
            "mu2_final": float(self.mu2[-1]),
            "H_drift_rel": float(np.max(np.abs(self.invariant_H
                                               - self.invariant_H[0]))
                                 / self.invariant_H[0]),
            "complete": self.complete,
        }


def incoming_state(mu0: float, alpha: float, extra_sep: float = 12.0):
    """Start time and parameters matching the incoming two-soliton
    configuration: separation Y0 + extra_sep before closest approach, the
    slower soliton (index 1) on the right moving left."""
    t_start = -float(np.arccosh(np.exp(extra_sep / 2.0))) / mu0
    Y, Ydot = closed_form_Y(t_start, mu0, alpha)
    half_mu = 0.5 * float(Ydot)
    params = SolitonParams(half_mu, -half_mu, 0.5 * float(Y), -0.5 * float(Y))
    return t_start, params


def integrate(g0: SolitonParams, t_span, corr: CorrectionSet,
              zero_second_order: bool = False, rtol: float = 1e-12,
              atol: float = 1e-12, n_out: int = 2001) -> ReducedTrajectory:
    """Adaptive high-order integration of the parameter system.

    Records H(t) = mu(t)^2 + 4 alpha e^{-y(t)} at each output node; aborts
    with a partial trajectory if the separation collapses.
    """
    alpha = corr.constants["alpha"]
    constants = corr.constants

    def rhs(t, vec):
        return _rhs_array(vec, constants, zero_second_order)

    def separation_floor(t, vec):
        return (vec[2] - vec[3]) - 1.0

    separation_floor.terminal = True
    separation_floor.direction = -1

    def scaling_floor(t, vec):
        return min(1.0 + vec[0], 1.0 + vec[1]) - 0.05

    scaling_floor.terminal = True
    scaling_floor.direction = -1

    t_eval = np.linspace(t_span[0], t_span[1], n_out)
    sol_ivp = solve_ivp(rhs, t_span, g0.as_array(), method="DOP853",
                        rtol=rtol, atol=atol, t_eval=t_eval, dense_output=False,
                        events=[separation_floor, scaling_floor])
    states = sol_ivp.y.T
    times = sol_ivp.t
    mu = states[:, 0] - states[:, 1]
    y = states[:, 2] - states[:, 3]
    H = mu ** 2 + 4.0 * alpha * np.exp(-y)
    mu0 = np.sqrt(max(H[0], 0.0)) / 2.0
    return ReducedTrajectory(times=times, states=states, invariant_H=H,
                             mu0=float(mu0), alpha=alpha,
                             complete=bool(sol_ivp.status == 0))


def integrate_incoming(mu0: float, corr: CorrectionSet,
                       extra_sep: float = 12.0, **kw) -> ReducedTrajectory:
    """Symmetric incoming run covering [-T, +T] with Y(+-T) = Y0 + extra_sep."""
    t_start, g0 = incoming_state(mu0, corr.constants["alpha"], extra_sep)
    return integrate(g0, (t_start, -t_start), corr, **kw)


def compare_to_closed_form(traj: ReducedTrajectory, mu0: float):
    """(sup |y - Y|, sup |mu - Ydot|) against the closed-form separation."""
    Y, Ydot = closed_form_Y(traj.times, mu0, traj.alpha)
    return (float(np.max(np.abs(traj.y - Y))),
            float(np.max(np.abs(traj.mu - Ydot))))


def asymmetry_marker(traj: ReducedTrajectory, corr: CorrectionSet,
                     probe_offset: float = 1.0) -> dict:
    """Collision asymmetry observables of the reduced dynamics.

    A time-reflection-symmetric collision would have y1(t) + y2(2 t0 - t)
    constant and (y+k) e^{-y} equal at times mirrored about the turning time
    t0, where k = 1 + d_-/b_-.  Both drifts are nonzero here because
    b1 != b2 breaks the reflection symmetry of the parameter system.
    """
    c = corr.constants
    b_minus = -0.5 * (c["b1"] - c["b2"])
    d_minus = -0.5 * (c["d1"] - c["d2"])
    k = 1.0 + d_minus / b_minus
    t0 = traj.turning_time()

    # mirrored-time probes at separation Y0 + probe_offset on each side
    Y0 = np.log(traj.alpha / traj.mu0 ** 2)
    target = Y0 + probe_offset
    before = traj.times < t0
    t1 = float(np.interp(-target, -traj.y[before], traj.times[before]))
    t2 = 2.0 * t0 - t1

    def at(tq, arr):
        return float(np.interp(tq, traj.times, arr))

    w = lambda tq: (at(tq, traj.y) + k) * np.exp(-at(tq, traj.y))
    z = lambda tq: at(tq, traj.y1) + at(2.0 * t0 - tq, traj.y2)
    return {
        "turning_time": t0,
        "k": k,
        "b_minus": b_minus,
        "d_minus": d_minus,
        "c7_drift": w(t1) - w(t2),
        "z_drift": z(t1) - z(t0),
        "probe_times": (t1, t2),
        "separation_asymmetry": at(t1, traj.y) - at(t2, traj.y),
    }
