"""Run configuration, orchestration and report generation.

Every run is driven by a RunConfig (INI file + command-line overrides),
hashed so identical configurations land in the same output directory and
reports stay traceable to their exact inputs.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import __version__
from . import soliton as sol
from .grids import GridSpec
from .linop import OperatorDiscretization, load_or_build, build_corrections
from .ansatz import SolitonParams, eval_V
from .reduced import (integrate_incoming, compare_to_closed_form,
                      closed_form_Y, asymmetry_marker)
from .solver import (PeriodicGrid, GkdvSolver, FieldState, conserved,
                     initial_two_solitons, make_sponge)
from .modulation import (track, defect_report, lyapunov_functionals,
                         translation_functionals, CollisionReport,
                         initial_guess_from_peaks)
from .util import loglog_slope


@dataclass(frozen=True)
class RunConfig:
    # [run]
    mu0: float = 0.25
    t_extra_sep: float = 12.0
    seed: int = 0
    label: str = ""
    # [grid]
    domain_length: float = 512.0
    n_modes: int = 8192
    # [scheme]
    dt: float = 1e-3
    # [sponge]
    sponge: bool = False
    sponge_width: float = 32.0
    sponge_strength: float = 4.0
    # [observers]
    obs_stride_time: float = 0.5
    # [fit]
    newton_tol: float = 1e-11
    rho: float = 1.0 / 64.0
    window_margin: float = 12.0
    # [corrections]
    corr_half_width: float = 40.0
    corr_n_points: int = 6401
    cache_dir: str = "runs/cache"
    # [output]
    out_dir: str = "runs"

    SECTIONS = {
        "run": ("mu0", "t_extra_sep", "seed", "label"),
        "grid": ("domain_length", "n_modes"),
        "scheme": ("dt",),
        "sponge": ("sponge", "sponge_width", "sponge_strength"),
        "observers": ("obs_stride_time",),
        "fit": ("newton_tol", "rho", "window_margin"),
        "corrections": ("corr_half_width", "corr_n_points", "cache_dir"),
        "output": ("out_dir",),
    }

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["config_hash"] = self.config_hash()
        d["code_version"] = __version__
        return d

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        values = {}
        known = {k for keys in cls.SECTIONS.values() for k in keys}
        for section in parser.sections():
            if section not in cls.SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls.SECTIONS[section]:
                    raise ConfigError(f"unknown key '{key}' in [{section}]")
                values[key] = raw
        del known
        return cls().with_overrides(values)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        converted = {}
        for key, raw in overrides.items():
            key = key.split(".")[-1]   # allow section.key form
            if not hasattr(self, key):
                raise ConfigError(f"unknown config key '{key}'")
            current = getattr(self, key)
            try:
                if isinstance(current, bool):
                    converted[key] = str(raw).lower() in ("1", "true", "yes", "on")
                elif isinstance(current, int):
                    converted[key] = int(raw)
                elif isinstance(current, float):
                    converted[key] = float(raw)
                else:
                    converted[key] = str(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {raw}") from exc
        return replace(self, **converted)


class ConfigError(Exception):
    pass


def corrections_for(cfg: RunConfig):
    grid = GridSpec(-cfg.corr_half_width, cfg.corr_half_width, cfg.corr_n_points)
    return load_or_build(cfg.cache_dir, grid)


def run_dir_for(cfg: RunConfig) -> str:
    name = f"run_{cfg.config_hash()}"
    if cfg.label:
        name = f"{name}_{cfg.label}"
    return os.path.join(cfg.out_dir, name)


def _write_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=float)


# ---------------------------------------------------------------------------
# collision runs
# ---------------------------------------------------------------------------

def collision_timespan(cfg: RunConfig, alpha: float):
    t_start = -float(np.arccosh(np.exp(cfg.t_extra_sep / 2.0))) / cfg.mu0
    return t_start, -t_start


def run_collision(cfg: RunConfig, corr=None, keep_fields: bool = False):
    """Full pipeline: PDE evolution, sequential modulation fits, functionals
    and the defect report; artifacts land in the config-hashed run directory.
    """
    np.random.seed(cfg.seed)   # nothing below is stochastic; recorded intent
    if corr is None:
        corr = corrections_for(cfg)
    alpha = corr.constants["alpha"]
    mu0 = cfg.mu0
    Y0 = float(np.log(alpha / mu0 ** 2))
    t_start, t_end = collision_timespan(cfg, alpha)

    grid = PeriodicGrid(cfg.domain_length, cfg.n_modes)
    state = initial_two_solitons(mu0, Y0, t_start, grid, alpha)
    sponge = (make_sponge(grid, cfg.sponge_width, cfg.sponge_strength)
              if cfg.sponge else None)
    solver = GkdvSolver(grid, cfg.dt, sponge=sponge)

    snapshots = []
    cons = []

    def observer(snap: FieldState):
        snapshots.append(snap.copy())
        cons.append(conserved(snap))

    stride = max(1, int(round(cfg.obs_stride_time / cfg.dt)))
    final = solver.evolve(state, t_end, observers=[observer], stride=stride)

    guess0 = SolitonParams(-mu0, mu0, 0.5 * grid.length + 0.5 * (Y0 + cfg.t_extra_sep),
                           0.5 * grid.length - 0.5 * (Y0 + cfg.t_extra_sep))
    decs = track(snapshots, corr, Y0, guess=guess0, tol_rel=cfg.newton_tol)
    times = np.array([s.time for s in snapshots])

    report = defect_report(times, decs, cons, mu0, alpha, grid,
                           window_margin=cfg.window_margin,
                           meta={"config": cfg.as_dict(),
                                 "scheme": {"dt": cfg.dt, "n_modes": cfg.n_modes,
                                            "domain_length": cfg.domain_length,
                                            "sponge": cfg.sponge}})

    run_dir = run_dir_for(cfg)
    os.makedirs(run_dir, exist_ok=True)
    _write_json(os.path.join(run_dir, "config.json"), cfg.as_dict())
    _write_json(os.path.join(run_dir, "report.json"), report.to_json())
    _write_track_csv(os.path.join(run_dir, "track.csv"),
                     snapshots, decs, corr, Y0, cfg)
    if keep_fields:
        np.savez_compressed(
            os.path.join(run_dir, "final_field.npz"),
            x=grid.x, u=final.values,
            meta=np.frombuffer(json.dumps(
                {"time": final.time, "length": grid.length,
                 "n_modes": grid.n_modes,
                 "conserved": [conserved(final).mass, conserved(final).energy],
                 "config_hash": cfg.config_hash()}).encode(), dtype=np.uint8))
    return report, decs, snapshots


def _write_track_csv(path, snapshots, decs, corr, Y0, cfg) -> None:
    rows = ["t,mu1,mu2,y1,y2,y,eps_h1,w_h1,F_plus,F_minus,J1,J2,converged"]
    for snap, dec in zip(snapshots, decs):
        fp, fm = lyapunov_functionals(snap, dec, corr, Y0, rho=cfg.rho)
        j1, j2, _flag = translation_functionals(snap, dec)
        p = dec.params
        rows.append(
            f"{snap.time!r},{p.mu1!r},{p.mu2!r},{p.y1!r},{p.y2!r},"
            f"{p.y!r},{dec.eps_h1!r},{dec.w_h1!r},{fp!r},{fm!r},"
            f"{j1!r},{j2!r},{int(dec.converged)}")
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")


def run_elastic_null(cfg: RunConfig, corr=None):
    """Negative control: track synthetic ansatz fields generated from the
    leading-order reduced trajectory (exactly time-reversible, hence truly
    elastic); any reported remainder is pure pipeline noise."""
    if corr is None:
        corr = corrections_for(cfg)
    alpha = corr.constants["alpha"]
    mu0 = cfg.mu0
    Y0 = float(np.log(alpha / mu0 ** 2))
    traj = integrate_incoming(mu0, corr, extra_sep=cfg.t_extra_sep, n_out=201,
                              zero_second_order=True)

    grid = PeriodicGrid(cfg.domain_length, cfg.n_modes)
    center = 0.5 * grid.length
    snapshots = []
    cons = []
    for i, t in enumerate(traj.times):
        p = traj.params_at(i)
        shifted = SolitonParams(p.mu1, p.mu2, p.y1 + center, p.y2 + center)
        u = eval_V(shifted, corr, grid.x, Y0=Y0, center=center)
        snap = FieldState(grid, u, float(t))
        snapshots.append(snap)
        cons.append(conserved(snap))
    guess0 = SolitonParams(traj.states[0, 0], traj.states[0, 1],
                           traj.states[0, 2] + center, traj.states[0, 3] + center)
    decs = track(snapshots, corr, Y0, guess=guess0, tol_rel=cfg.newton_tol)
    report = defect_report(traj.times, decs, cons, mu0, alpha, grid,
                           window_margin=cfg.window_margin,
                           meta={"config": cfg.as_dict(), "control": "elastic-null"})
    return report, decs


# ---------------------------------------------------------------------------
# reduced runs and sweeps
# ---------------------------------------------------------------------------

def run_reduced(cfg: RunConfig, corr=None):
    if corr is None:
        corr = corrections_for(cfg)
    traj = integrate_incoming(cfg.mu0, corr, extra_sep=cfg.t_extra_sep)
    sup_y, sup_mu = compare_to_closed_form(traj, cfg.mu0)
    marker = asymmetry_marker(traj, corr)
    summary = traj.summary()
    summary.update({"sup_y_minus_Y": sup_y, "sup_mu_minus_Ydot": sup_mu,
                    "asymmetry": marker, "config_hash": cfg.config_hash(),
                    "code_version": __version__})
    run_dir = run_dir_for(cfg)
    os.makedirs(run_dir, exist_ok=True)
    traj.to_csv(os.path.join(run_dir, "reduced.csv"))
    _write_json(os.path.join(run_dir, "reduced_summary.json"), summary)
    return traj, summary


@dataclass
class SweepResult:
    mu0_values: list
    reports: list                  # CollisionReport dicts
    slope_max_w: float
    slope_defect: float
    slope_speed_excess: float
    null_defect: float
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None):
        blob = {"mu0_values": self.mu0_values,
                "slope_max_w": self.slope_max_w,
                "slope_defect": self.slope_defect,
                "slope_speed_excess": self.slope_speed_excess,
                "null_defect": self.null_defect,
                "reports": self.reports, "meta": self.meta}
        if path is not None:
            _write_json(path, blob)
        return blob


def _sweep_worker(args):
    cfg_dict, mu0 = args
    cfg = RunConfig(**{k: v for k, v in cfg_dict.items()
                       if k in RunConfig.__dataclass_fields__})
    cfg = replace(cfg, mu0=mu0, label=f"mu{mu0:g}")
    report, _decs, _snaps = run_collision(cfg)
    return report.to_json()


def run_sweep(cfg: RunConfig, mu0_values, workers: int = 1) -> SweepResult:
    """Collision runs across mu0 plus the elastic-null control; fits the
    log-log slopes of the interaction and defect observables."""
    base = asdict(cfg)
    jobs = [(base, mu0) for mu0 in mu0_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_worker, jobs))
    else:
        reports = [_sweep_worker(job) for job in jobs]

    mu = np.array(mu0_values, dtype=float)
    max_w = np.array([r["max_w_h1"] for r in reports])
    defect = np.array([r["final_w_h1_window"] for r in reports])
    excess = np.array([max(r["mu1_plus_avg"] - m, 1e-12)
                       for r, m in zip(reports, mu)])
    null_report, null_decs = run_elastic_null(replace(cfg, label="null"))
    null_eps_floor = float(max(d.eps_h1 for d in null_decs))

    result = SweepResult(
        mu0_values=[float(m) for m in mu],
        reports=reports,
        slope_max_w=loglog_slope(mu, max_w),
        slope_defect=loglog_slope(mu, defect),
        slope_speed_excess=loglog_slope(mu, excess),
        null_defect=null_eps_floor,
        meta={"config": cfg.as_dict(), "workers": workers},
    )
    out = os.path.join(cfg.out_dir, f"sweep_{cfg.config_hash()}.json")
    os.makedirs(cfg.out_dir, exist_ok=True)
    result.to_json(out)
    return result


# ---------------------------------------------------------------------------
# identity / operator verification commands
# ---------------------------------------------------------------------------

def verify_identities(tol: float = 1e-8, corrupt: float = 0.0,
                      n_points: int = 12801) -> dict:
    """Identity suite plus the operator oracles; `corrupt` injects a relative
    perturbation into the probe profiles as a loud negative control."""
    checks = sol.identity_suite()
    grid = GridSpec(-40.0, 40.0, n_points)
    op = OperatorDiscretization(grid)
    x = grid.x
    scale = 1.0 + corrupt
    q = sol.eval_Q(x) * scale
    qp = sol.eval_Q_prime(x) * scale
    lamq = sol.eval_LambdaQ(x) * scale
    q52 = q ** 2.5
    operator_checks = {
        "sup |L Q'|": float(np.max(np.abs(op.apply_L(qp)))),
        "sup |L LamQ + Q|": float(np.max(np.abs(op.apply_L(lamq) + q))),
        "sup |L Q + 3 Q^4|": float(np.max(np.abs(op.apply_L(q) + 3 * q ** 4))),
        "sup |L Q^5/2 + (21/4) Q^5/2|":
            float(np.max(np.abs(op.apply_L(q52) + 5.25 * q52))),
    }
    identity_rows = {c.name: {"lhs": c.lhs * scale, "rhs": c.rhs,
                              "abs_error": abs(c.lhs * scale - c.rhs)}
                     for c in checks}
    scalars = sol.soliton_scalars()
    passed = (all(r["abs_error"] <= tol for r in identity_rows.values())
              and all(v <= 1e-6 for v in operator_checks.values()))
    return {
        "identities": identity_rows,
        "operator_checks": operator_checks,
        "constants": {"alpha": scalars.alpha, "theta_A": scalars.theta_A,
                      "beta": scalars.beta, "theta_B": scalars.theta_B},
        "tolerance": tol,
        "passed": bool(passed),
    }
