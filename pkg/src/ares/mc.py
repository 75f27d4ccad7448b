"""Monte Carlo trials, probability estimates and the two experiment drivers."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from . import kalman
from .assess import AssessmentConfig, DetectionReport, Method, _report, evaluate_kernel, sample_mass
from .core import DONE, Vec2
from .noise import perturb_positions
from .pedmodel import TRAJECTORY_HEADER, VenueArrays, World, step_kernel, trajectory_rows
from .scenario import ConfigurationError, Scenario, spawn_grid

DEFAULT_SEED = 1234
DEFAULT_HORIZON = 150.0
STUDY_E = list(range(11))
STUDY_N = [1] + [5 * 2 ** k for k in range(12)]


@dataclass(frozen=True)
class TrialSpec:
    scenario: Scenario
    method: AssessmentConfig
    E: float
    N: int
    horizon: float = DEFAULT_HORIZON
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError("N must be >= 1")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        if self.E < 0:
            raise ConfigurationError("E must be >= 0")

    @property
    def dt(self) -> float:
        return self.scenario.model.dt

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class TrialOutcome:
    indicator: int
    report: DetectionReport
    steps: int
    runtime_ms: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class ProbabilityEstimate:
    p: float
    ci_low: float
    ci_high: float
    n: int
    sigma: float

    @property
    def half_width(self) -> float:
        return 1.96 * self.sigma / math.sqrt(self.n)


# --- seeds -------------------------------------------------------------------


def derive_seed(master_seed: int, method: Method | int, R: float, E: float, N: int, trial: int) -> int:
    """Trial seed from the cell coordinates, independent of scheduling order."""
    key = [int(master_seed) & 0xFFFFFFFF, int(master_seed) >> 32 & 0xFFFFFFFF, int(method),
           int(round(R * 1000)), int(round(E * 1000)), int(N), int(trial)]
    lo, hi = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


# --- one trial ---------------------------------------------------------------


def initial_world(spec: TrialSpec) -> World:
    """Spawn grid, masses and noisy starting positions for one trial."""
    pos = spawn_grid(spec.scenario, spec.N)
    rng = np.random.default_rng(spec.seed)
    mass = sample_mass(rng, spec.N)
    pos = perturb_positions(pos, spec.E, rng)
    m = spec.scenario.model
    w = World(pos, mass=mass, pref_speed=m.pref_speed, max_speed=m.max_speed, seed=spec.seed)
    w.start_exiting_if_no_waypoints(spec.scenario.venue())
    return w


@njit(cache=True)
def trial_kernel(pos, vel, prev_vel, pref, radius, pref_speed, max_speed, phase, wp, remaining, ids, mass,
                 obst, wp_c, wp_r, wp_wait, exitl, cfg, acfg, seed, n_steps, early_exit):
    """Step and assess until the first detection (or the horizon).

    Returns (hit, turbulence, value, row, step, steps_run, px, py): the first
    detection if any, else the largest value seen.
    """
    n = pos.shape[0]
    dt = cfg[5]
    active = np.empty(n, dtype=np.bool_)
    best_v = -1.0
    best_row = -1
    best_step = 0
    bx = np.nan
    by = np.nan
    turb_any = False
    hit_any = False
    for s in range(1, n_steps + 1):
        step_kernel(pos, vel, prev_vel, pref, radius, pref_speed, max_speed, phase, wp, remaining, ids,
                    obst, wp_c, wp_r, wp_wait, exitl, cfg, seed, s)
        n_active = 0
        for i in range(n):
            active[i] = phase[i] != DONE
            if active[i]:
                n_active += 1
        if n_active == 0:
            return hit_any, turb_any, max(best_v, 0.0), best_row, best_step, s, bx, by
        hit, turb, value, row = evaluate_kernel(pos, vel, prev_vel, mass, active, acfg, dt)
        turb_any = turb_any or turb
        if hit and not hit_any:
            hit_any = True
            best_v = value
            best_row = row
            best_step = s
            bx = pos[row, 0]
            by = pos[row, 1]
            if early_exit:
                return True, turb_any, value, row, s, s, bx, by
        elif not hit_any and row >= 0 and value > best_v:
            best_v = value
            best_row = row
            best_step = s
            bx = pos[row, 0]
            by = pos[row, 1]
    return hit_any, turb_any, max(best_v, 0.0), best_row, best_step, n_steps, bx, by


def run_trial(spec: TrialSpec, *, early_exit: bool = True, trajectory=None,
              world: World | None = None) -> TrialOutcome:
    """Simulate one realisation and report whether a stampede was detected.

    ``trajectory`` may be a text stream; a CSV row per agent per step is then
    written and the run continues to the horizon.
    """
    t0 = time.perf_counter()
    w = initial_world(spec) if world is None else world.copy()
    va = VenueArrays(spec.scenario.venue())
    cfg = spec.scenario.model.to_array()
    acfg = spec.method.to_array()
    if trajectory is None:
        hit, turb, value, row, hstep, steps, px, py = trial_kernel(
            w.pos, w.vel, w.prev_vel, w.pref, w.radius, w.pref_speed, w.max_speed, w.phase, w.waypoint,
            w.remaining, w.ids, w.mass, va.obst, va.wp_c, va.wp_r, va.wp_wait, va.exitl, cfg, acfg,
            np.uint64(spec.seed), spec.n_steps, early_exit)
        if row >= 0:
            report = DetectionReport(bool(hit), bool(turb), float(value), Vec2(px, py), int(hstep), int(w.ids[row]))
        else:
            report = DetectionReport(False, bool(turb), 0.0, Vec2(math.nan, math.nan), int(hstep))
    else:
        hit, turb, value, row, hstep, steps, px, py = _run_with_dump(w, va, cfg, spec, trajectory)
        if row >= 0:
            report = DetectionReport(bool(hit), bool(turb), float(value), Vec2(px, py), int(hstep), int(w.ids[row]))
        else:
            report = DetectionReport(False, bool(turb), 0.0, Vec2(math.nan, math.nan), int(hstep))
    return TrialOutcome(int(bool(hit)), report, int(steps), (time.perf_counter() - t0) * 1e3)


def _run_with_dump(w: World, va: VenueArrays, cfg, spec: TrialSpec, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for row in trajectory_rows(w, 0):
        writer.writerow(_fmt_row(row))
    acfg = spec.method.to_array()
    first = None
    best = (False, False, 0.0, -1, 0, math.nan, math.nan)
    turb_any = False
    for s in range(1, spec.n_steps + 1):
        step_kernel(w.pos, w.vel, w.prev_vel, w.pref, w.radius, w.pref_speed, w.max_speed, w.phase, w.waypoint,
                    w.remaining, w.ids, va.obst, va.wp_c, va.wp_r, va.wp_wait, va.exitl, cfg,
                    np.uint64(spec.seed), s)
        for row in trajectory_rows(w, s):
            writer.writerow(_fmt_row(row))
        act = w.active
        if not act.any():
            break
        hit, turb, value, r = evaluate_kernel(w.pos, w.vel, w.prev_vel, w.mass, act, acfg, spec.dt)
        turb_any = turb_any or bool(turb)
        if hit and first is None:
            first = (True, turb_any, value, r, s, w.pos[r, 0], w.pos[r, 1])
        elif first is None and r >= 0 and value > best[2]:
            best = (False, turb_any, value, r, s, w.pos[r, 0], w.pos[r, 1])
    res = first if first is not None else best
    hit, _, value, r, hstep, px, py = res
    return hit, turb_any, value, r, hstep, s, px, py


def _fmt_row(row):
    return [f"{v:.6f}" if isinstance(v, float) else v for v in row]


# --- estimates ---------------------------------------------------------------


def estimate(outcomes: Sequence[int]) -> ProbabilityEstimate:
    """Mean indicator with a normal-approximation 95% interval clamped to [0, 1]."""
    x = np.asarray(outcomes, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two outcomes")
    p = float(x.mean())
    sigma = float(x.std(ddof=1))
    hw = 1.96 * sigma / math.sqrt(n)
    return ProbabilityEstimate(p, max(0.0, p - hw), min(1.0, p + hw), n, sigma)


# --- sweep -------------------------------------------------------------------

RESULT_HEADER = ["method", "R", "E", "N", "n", "p", "ci_low", "ci_high", "mean_runtime_ms"]


@dataclass(frozen=True)
class CellResult:
    method: str
    R: float | None
    E: float
    N: int
    estimate: ProbabilityEstimate | None
    mean_runtime_ms: float | None = None
    error: str = ""

    def row(self, timing: bool = False) -> list[str]:
        r = "" if self.R is None else f"{self.R:g}"
        rt = f"{self.mean_runtime_ms:.3f}" if timing and self.mean_runtime_ms is not None else ""
        if self.estimate is None:
            return [self.method, r, f"{self.E:g}", str(self.N), "0", "nan", "nan", "nan", rt]
        e = self.estimate
        return [self.method, r, f"{self.E:g}", str(self.N), str(e.n), f"{e.p:.6f}", f"{e.ci_low:.6f}",
                f"{e.ci_high:.6f}", rt]


@dataclass
class ResultTable:
    cells: list[CellResult]

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for c in self.cells:
            w.writerow(c.row(timing))
        return buf.getvalue()

    def find(self, method: str, E: float, N: int, R: float | None = None) -> CellResult:
        for c in self.cells:
            if c.method == method and c.E == E and c.N == N and (R is None or c.R == R):
                return c
        raise KeyError((method, R, E, N))


def _method_name(acfg: AssessmentConfig) -> str:
    return acfg.method.name.lower()


def _run_cell(args) -> CellResult:
    scenario, acfg, E, N, n_trials, master_seed, horizon = args
    R = acfg.R if acfg.uses_radius else None
    try:
        outcomes = []
        times = []
        for t in range(n_trials):
            seed = derive_seed(master_seed, acfg.method, acfg.R if acfg.uses_radius else 0.0, E, N, t)
            out = run_trial(TrialSpec(scenario, acfg, E, N, horizon, seed))
            outcomes.append(out.indicator)
            times.append(out.runtime_ms)
        return CellResult(_method_name(acfg), R, E, N, estimate(outcomes), float(np.mean(times)))
    except (ConfigurationError, ValueError) as exc:
        return CellResult(_method_name(acfg), R, E, N, None, None, str(exc))


def run_grid(scenario: Scenario, methods: Sequence[AssessmentConfig], E_list: Iterable[float] = STUDY_E,
             N_list: Iterable[int] = STUDY_N, n_trials: int = 1000, master_seed: int = DEFAULT_SEED,
             horizon: float = DEFAULT_HORIZON, jobs: int = 1) -> ResultTable:
    """Estimate p for every (method, E, N) cell.

    Cells are independent; with ``jobs > 1`` they run in worker processes and
    are collected in grid order, so the table does not depend on ``jobs``.
    """
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    tasks = [(scenario, m, float(E), int(N), n_trials, master_seed, horizon)
             for m in methods for E in E_list for N in N_list]
    if jobs <= 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(_run_cell, tasks))
    return ResultTable(cells)


# --- Kalman study ------------------------------------------------------------


def simulate_trajectories(scenario: Scenario, N: int, S: float, seed: int = DEFAULT_SEED,
                          E: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """True positions and velocities of every agent at every step: (steps, N, 2) each."""
    spec = TrialSpec(scenario, AssessmentConfig(), E, N, S, seed)
    w = initial_world(spec)
    va = VenueArrays(scenario.venue())
    cfg = scenario.model.to_array()
    steps = spec.n_steps
    P = np.empty((steps, N, 2))
    V = np.empty((steps, N, 2))
    for s in range(1, steps + 1):
        step_kernel(w.pos, w.vel, w.prev_vel, w.pref, w.radius, w.pref_speed, w.max_speed, w.phase, w.waypoint,
                    w.remaining, w.ids, va.obst, va.wp_c, va.wp_r, va.wp_wait, va.exitl, cfg, np.uint64(seed), s)
        P[s - 1] = w.pos
        V[s - 1] = w.vel
    return P, V


KF_HEADER = ["E", "estimated", "measured"]
ERROR_HEADER = ["agent_id", "measured", "estimated"]
KDE_HEADER = ["x", "density"]


@dataclass
class KalmanStudy:
    E: list[float]
    measured_mae: list[float]
    estimated_mae: list[float]
    errors: dict[float, tuple[np.ndarray, np.ndarray]]

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(KF_HEADER)
        for E, est, meas in zip(self.E, self.estimated_mae, self.measured_mae):
            w.writerow([f"{E:g}", f"{est:.4f}", f"{meas:.4f}"])
        return buf.getvalue()

    def errors_csv(self, E: float) -> str:
        meas, est = self.errors[E]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ERROR_HEADER)
        for i, (m, e) in enumerate(zip(meas, est)):
            w.writerow([i, f"{m:.6f}", f"{e:.6f}"])
        return buf.getvalue()

    def kde_csv(self, E: float, which: str) -> str:
        meas, est = self.errors[E]
        x, d = kalman.kde(meas if which == "measured" else est)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(KDE_HEADER)
        for a, b in zip(x, d):
            w.writerow([f"{a:.6f}", f"{b:.8f}"])
        return buf.getvalue()


def run_kf_experiment(scenario: Scenario, N: int = 10240, S: float = 150.0,
                      E_list: Iterable[float] = range(1, 11), kcfg: kalman.KalmanConfig | None = None,
                      seed: int = DEFAULT_SEED, trajectories=None) -> KalmanStudy:
    """One base simulation, then filter its noisy copies for each E."""
    if trajectories is None:
        trajectories = simulate_trajectories(scenario, N, S, seed)
    P, V = trajectories
    base = kcfg or kalman.KalmanConfig(dt=scenario.model.dt)
    E_out, meas_m, est_m, errs = [], [], [], {}
    for E in E_list:
        E = float(E)
        cfg = kalman.KalmanConfig.for_noise(E, dt=base.dt, q=base.q, vel_var=base.vel_var)
        rng = np.random.default_rng(np.random.SeedSequence([seed, int(round(E * 1000))]))
        meas, est = kalman.evaluate_filter(P, V, E, cfg, rng)
        E_out.append(E)
        meas_m.append(kalman.mae(meas))
        est_m.append(kalman.mae(est))
        errs[E] = (meas, est)
    return KalmanStudy(E_out, meas_m, est_m, errs)
