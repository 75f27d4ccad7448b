"""End-to-end acceptance checks.

Each test prints one ``PASS criterion k`` or ``FAIL criterion k`` line (see the
``verdict`` fixture) and then asserts the same condition. These are the slow
tests of the suite; together they take several minutes on one core.
"""
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from ares import kalman
from ares.assess import AssessmentConfig, Method, neighbor_density
from ares.cli import DEFAULT_METHODS, parse_methods
from ares.mc import estimate, run_grid, run_kf_experiment, simulate_trajectories
from ares.noise import rayleigh_cdf, sample_error_magnitude
from ares.pedmodel import solve_velocity, step

from oracles import min_pair_gap, random_feasible_instance, sampling_argmin

pytestmark = pytest.mark.slow

RAYLEIGH_MEAN = math.sqrt(math.pi) / 2
REFERENCE_MEASURED_MAE = [0.89, 1.76, 2.66, 3.59, 4.44, 5.30, 6.23, 7.19, 8.00, 8.83]


@pytest.fixture(scope="module")
def base_run(scenario):
    """The full-size base simulation of the filter study, timed."""
    t0 = time.perf_counter()
    P, V = simulate_trajectories(scenario, 10240, 150.0, seed=2024)
    return P, V, time.perf_counter() - t0


def test_criterion_1_density_formula(verdict):
    d22 = neighbor_density(22, 1.0)
    d29 = neighbor_density(29, 1.0)
    ok22 = abs(d22 - 7.00282) <= 1e-5 and d22 >= 7.0
    ok29 = abs(d29 - 9.23101) <= 1e-5
    ok = verdict(1, ok22 and ok29,
                 f"D(22)={d22:.6f} (target 7.00282, >=7: {d22 >= 7}); D(29)={d29:.6f} (target 9.23101, "
                 f"off by {abs(d29 - 9.23101):.1e}; 29/pi is {29 / math.pi:.7f})")
    assert ok


def test_criterion_2_measured_error_column(verdict, base_run):
    P, V, _ = base_run
    worst_table = worst_analytic = 0.0
    cols = []
    for E, ref in zip(range(1, 11), REFERENCE_MEASURED_MAE):
        rng = np.random.default_rng(E)
        # the measured error is the raw fix at the final step
        meas, _ = kalman.evaluate_filter(P[-2:], V[-2:], float(E), kalman.KalmanConfig.for_noise(E), rng)
        m = kalman.mae(meas)
        cols.append(m)
        worst_table = max(worst_table, abs(m - ref) / ref)
        worst_analytic = max(worst_analytic, abs(m - RAYLEIGH_MEAN * E) / (RAYLEIGH_MEAN * E))
    ok = verdict(2, worst_table < 0.03 and worst_analytic < 0.03,
                 f"{P.shape[1]} agents, measured MAE {[round(c, 2) for c in cols]}; worst deviation "
                 f"{worst_table:.1%} from the reference column, {worst_analytic:.1%} from 0.8862*E")
    assert ok


def test_criterion_3_rayleigh_sampler(verdict):
    rng = np.random.default_rng(3)
    worst_ks = worst_rms = 0.0
    for E in (1.0, 4.0, 10.0):
        z = sample_error_magnitude(E, rng, 1_000_000)
        worst_ks = max(worst_ks, stats.kstest(z, lambda x: rayleigh_cdf(x, E)).statistic)
        worst_rms = max(worst_rms, abs(math.sqrt(np.mean(z * z)) - E) / E)
    ok = verdict(3, worst_ks < 0.005 and worst_rms < 0.01,
                 f"KS {worst_ks:.5f} (<0.005), RMS error {worst_rms:.3%} (<1%) at 1e6 samples")
    assert ok


def test_criterion_4_confidence_intervals(verdict):
    hw = estimate([1] * 500 + [0] * 500).half_width
    coverage = {}
    for p_true in (0.1, 0.5, 0.9):
        rng = np.random.default_rng(int(p_true * 1000))
        hits = 0
        for _ in range(500):
            e = estimate((rng.random(1000) < p_true).astype(int))
            hits += e.ci_low <= p_true <= e.ci_high
        coverage[p_true] = hits / 500
    ok = verdict(4, abs(hw - 0.0310) <= 2e-4 and all(0.93 <= c <= 0.97 for c in coverage.values()),
                 f"half-width {hw:.5f}; coverage {coverage}")
    assert ok


def test_criterion_5_lone_agent(verdict, scenario):
    methods = parse_methods(DEFAULT_METHODS)
    table = run_grid(scenario, methods, range(11), [1], n_trials=100, master_seed=5)
    ps = [c.estimate.p for c in table.cells]
    ok = verdict(5, max(ps) == 0.0, f"{len(ps)} cells (9 method/R x 11 E, N=1, n=100), max p = {max(ps)}")
    assert ok


def _ordered(cells):
    """p non-increasing along the list, a rise only allowed when the intervals overlap."""
    for a, b in zip(cells, cells[1:]):
        ea, eb = a.estimate, b.estimate
        if eb.p > ea.p and eb.ci_low > ea.ci_high:
            return False
    return True


def test_criterion_6_pressure_sensitivity(verdict, scenario):
    dense = run_grid(scenario, [AssessmentConfig(Method.PRESSURE, R=1.0)], [0.0], [20], n_trials=200,
                     master_seed=6)
    p20 = dense.cells[0].estimate.p
    byR = run_grid(scenario, [AssessmentConfig(Method.PRESSURE, R=float(R)) for R in (1, 2, 3, 4)], [0.0], [80],
                   n_trials=200, master_seed=6)
    ps = [c.estimate.p for c in byR.cells]
    ok = verdict(6, p20 >= 0.9 and _ordered(byR.cells),
                 f"p(R=1, N=20, E=0) = {p20:.3f} (>=0.9); p(R=1..4, N=80) = {ps}")
    assert ok


def test_criterion_7_noise_changes_p(verdict, scenario):
    methods = parse_methods(DEFAULT_METHODS)
    N_list = [5, 10, 20, 40, 80]
    at0 = run_grid(scenario, methods, [0.0], N_list, n_trials=100, master_seed=7)
    at10 = run_grid(scenario, methods, [10.0], N_list, n_trials=100, master_seed=7)
    found = []
    biggest = None
    for c0, c10 in zip(at0.cells, at10.cells):
        e0, e10 = c0.estimate, c10.estimate
        gap = abs(e0.p - e10.p) - (e0.half_width + e10.half_width)
        if biggest is None or gap > biggest[0]:
            biggest = (gap, c0.method, c0.R, c0.N, e0.p, e10.p)
        if 0 < e0.p < 1 and gap > 0:
            found.append((c0.method, c0.R, c0.N, e0.p, e10.p))
    fractional = sum(0 < c.estimate.p < 1 for c in at0.cells)
    gap, m, R, N, p0, p10 = biggest
    ok = verdict(7, bool(found),
                 f"{len(at0.cells)} cells at E=0, {fractional} with 0<p<1, qualifying {found[:3]}; "
                 f"largest E=0 vs E=10 separation: {m} R={R} N={N} p {p0:.2f} -> {p10:.2f}")
    assert ok


def test_criterion_8_kalman_shape(verdict, scenario):
    study = run_kf_experiment(scenario, N=512, S=150.0, E_list=range(1, 11), seed=8)
    est = dict(zip(study.E, study.estimated_mae))
    meas = dict(zip(study.E, study.measured_mae))
    tail = [est[E] for E in range(4, 11)]
    spread = (max(tail) - min(tail)) / min(tail)
    lin = max(abs(meas[E] - RAYLEIGH_MEAN * E) / (RAYLEIGH_MEAN * E) for E in study.E)
    cross = [E for E in study.E if meas[E] < est[E]]
    crossover = max(cross) if cross else None
    band = all(2.0 <= v <= 4.0 for v in tail)
    ok = verdict(8, spread < 0.30 and lin < 0.03 and crossover is not None and abs(crossover - 4) <= 1 and band,
                 f"estimated {[round(v, 3) for v in study.estimated_mae]}, measured "
                 f"{[round(v, 2) for v in study.measured_mae]}; E>=4 spread {spread:.0%} (<30%), "
                 f"measured vs 0.8862E worst {lin:.1%} (<3%), crossover E={crossover} (4+-1), "
                 f"estimated in 2-4 m: {band}")
    assert ok


def test_criterion_9_simulator_properties(verdict, scenario):
    from ares.core import segments_cross
    from ares.mc import TrialSpec, initial_world

    venue = scenario.venue()
    segs = venue.obstacle_array()
    crossings = 0
    top_speed = 0.0
    sustained = 0
    w = initial_world(TrialSpec(scenario, AssessmentConfig(), 0.0, 400, 30.0, 9))
    assert min_pair_gap(w.pos, w.radius) >= 0.0
    previous = set()
    for k in range(300):
        before = w.pos.copy()
        w = step(w, venue, scenario.model, inplace=True)
        top_speed = max(top_speed, float(np.hypot(*w.vel.T).max()))
        moved = np.nonzero(np.any(before != w.pos, axis=1))[0]
        for i in moved:
            for s in segs:
                crossings += segments_cross(*before[i], *w.pos[i], *s)
        if k >= 50:
            d = np.hypot(*(w.pos[:, None] - w.pos[None]).transpose(2, 0, 1))
            gap = d - (w.radius[:, None] + w.radius[None])
            now = set(zip(*map(list, np.nonzero(np.triu(gap < -1e-3, k=1)))))
            sustained += len(now & previous)
            previous = now

    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        hps, pref = random_feasible_instance(rng)
        v = solve_velocity(hps, tuple(pref), 2.0)
        best = sampling_argmin(hps, pref, 2.0, points=1_000_000)
        worst = max(worst, float(np.hypot(*(np.asarray(v) - best))))
    ok = verdict(9, crossings == 0 and sustained == 0 and top_speed <= 2.0 + 1e-9 and worst <= 1e-2,
                 f"wall crossings {crossings}, overlaps >1e-3 m lasting 2+ steps {sustained}, "
                 f"top speed {top_speed:.3f} m/s, LP vs sampling worst gap {worst:.2e} m/s over 1000 instances")
    assert ok


def test_criterion_10_parallel_determinism(verdict, tmp_path):
    cmd = [sys.executable, "-m", "ares", "sweep", "--methods", "pressure:1,pressure:4,force,density:1",
           "--E", "0,3,10", "--N", "1,5,20", "--trials", "6", "--horizon", "30", "--seed", "10"]
    outs = []
    for jobs in (1, 8):
        path = tmp_path / f"jobs{jobs}.csv"
        r = subprocess.run(cmd + ["--jobs", str(jobs), "--out", str(path)], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append(path.read_bytes())
    ok = verdict(10, outs[0] == outs[1], f"--jobs 1 and --jobs 8 outputs identical: {outs[0] == outs[1]} "
                                         f"({len(outs[0])} bytes)")
    assert ok


def test_criterion_11_performance(verdict, scenario, base_run):
    from ares.mc import TrialSpec, initial_world
    from ares.pedmodel import VenueArrays

    w = initial_world(TrialSpec(scenario, AssessmentConfig(), 0.0, 1000, 150.0, 11))
    va = VenueArrays(scenario.venue())
    step(w, scenario.venue(), scenario.model, arrays=va)  # compile outside the timing
    w = initial_world(TrialSpec(scenario, AssessmentConfig(), 0.0, 1000, 150.0, 11))
    t0 = time.perf_counter()
    for _ in range(1500):
        step(w, None, scenario.model, inplace=True, arrays=va)
    t1000 = time.perf_counter() - t0
    t_full = base_run[2]
    ok = verdict(11, t1000 < 30.0 and t_full < 300.0,
                 f"1000 agents x 1500 steps in {t1000:.1f} s (<30 s); 10240-agent base run in {t_full:.0f} s "
                 f"(<300 s)")
    assert ok
