"""Command-line front end: ``ares simulate | sweep | kalman | convert``.

Every subcommand writes UTF-8 CSV with a header row. ``simulate`` exits with
0 when no stampede is flagged, 2 when one is, and 1 on any error; the other
subcommands exit 0 on success and 1 on error.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import geo
from .assess import AssessmentConfig, Method
from .kalman import KalmanConfig
from .mc import DEFAULT_HORIZON, DEFAULT_SEED, STUDY_E, STUDY_N, TrialSpec, run_grid, run_kf_experiment, run_trial
from .scenario import ConfigurationError, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STAMPEDE = 2

REPORT_HEADER = ["method", "R", "E", "N", "seed", "stampede", "turbulence", "max_value", "step", "time_s",
                 "agent_id", "x", "y", "lat", "lon"]
DEFAULT_METHODS = "pressure:1,pressure:2,pressure:3,pressure:4,force,density:1,density:2,density:3,density:4"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as "stampede"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# --- argument helpers --------------------------------------------------------


def parse_number_list(text: str, kind=float) -> list:
    """Comma list where ``a..b`` expands to the inclusive integer range."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise CliError(f"empty range {part!r}")
            out.extend(kind(v) for v in range(lo, hi + 1))
        else:
            try:
                out.append(kind(part))
            except ValueError:
                raise CliError(f"not a number: {part!r}") from None
    if not out:
        raise CliError("empty list")
    return out


def parse_methods(text: str) -> list[AssessmentConfig]:
    """``pressure:1,force,density:2`` -> assessment configs (R defaults to 1)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, r = part.partition(":")
        try:
            out.append(AssessmentConfig(Method.parse(name), R=float(r) if r else 1.0))
        except ValueError as exc:
            raise CliError(str(exc)) from None
    if not out:
        raise CliError("no methods given")
    return out


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("ARES_SEED")
    if env is None or env.strip() == "":
        return DEFAULT_SEED
    try:
        seed = int(env)
    except ValueError:
        raise CliError(f"ARES_SEED must be an integer, got {env!r}") from None
    if seed < 0:
        raise CliError("ARES_SEED must be non-negative")
    return seed


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "spacing", None) is not None:
        if args.spacing <= 0:
            raise CliError("--spacing must be positive")
        sc = replace(sc, spawn_spacing=args.spacing)
    return sc


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


# --- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    acfg = AssessmentConfig(Method.parse(args.method), R=args.R)
    seed = resolve_seed(args.seed)
    spec = TrialSpec(sc, acfg, args.E, args.N, args.horizon, seed)
    if args.trajectory:
        with open(args.trajectory, "w", encoding="utf-8", newline="") as fh:
            out = run_trial(spec, trajectory=fh)
    else:
        out = run_trial(spec, early_exit=not args.full)
    rep = out.report
    lat = lon = math.nan
    if rep.agent_id >= 0 and sc.geo is not None:
        lat, lon = geo.to_global(sc.geo, rep.location)
    row = [acfg.method.name.lower(), f"{acfg.R:g}" if acfg.uses_radius else "", f"{args.E:g}", args.N, seed,
           int(rep.stampede), int(rep.turbulence), f"{rep.max_value:.6g}", rep.step,
           f"{rep.step * sc.model.dt:.1f}", rep.agent_id, f"{rep.location.x:.3f}", f"{rep.location.y:.3f}",
           f"{lat:.7f}", f"{lon:.7f}"]
    fh, close = _open_out(args.report)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerow(row)
    finally:
        if close:
            fh.close()
    if rep.stampede:
        msg = (f"ALERT stampede method={row[0]} value={rep.max_value:.4g} step={rep.step} "
               f"local=({rep.location.x:.2f}, {rep.location.y:.2f})")
        if sc.geo is not None:
            msg += f" global=({lat:.7f}, {lon:.7f})"
        print(msg, file=sys.stderr)
        return EXIT_STAMPEDE
    return EXIT_OK


# --- sweep -------------------------------------------------------------------


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    methods = parse_methods(args.methods)
    E_list = parse_number_list(args.E, float)
    N_list = parse_number_list(args.N, int)
    if args.trials < 2:
        raise CliError("--trials must be at least 2")
    if args.jobs < 1:
        raise CliError("--jobs must be at least 1")
    table = run_grid(sc, methods, E_list, N_list, n_trials=args.trials, master_seed=resolve_seed(args.seed),
                     horizon=args.horizon, jobs=args.jobs)
    fh, close = _open_out(args.out)
    try:
        fh.write(table.to_csv(timing=args.timing))
    finally:
        if close:
            fh.close()
    for c in table.cells:
        if c.error:
            print(f"warning: {c.method} R={c.R} E={c.E:g} N={c.N}: {c.error}", file=sys.stderr)
        elif c.estimate is not None and c.estimate.p > args.alert_threshold:
            print(f"ALERT p={c.estimate.p:.3f} > {args.alert_threshold:g} for {c.method}"
                  f"{'' if c.R is None else f' R={c.R:g}'} E={c.E:g} N={c.N}", file=sys.stderr)
    return EXIT_OK


# --- kalman ------------------------------------------------------------------


def cmd_kalman(args) -> int:
    sc = _scenario(args)
    E_list = parse_number_list(args.E, float)
    if any(E <= 0 for E in E_list):
        raise CliError("--E values must be positive for the filter study")
    kcfg = KalmanConfig(dt=sc.model.dt, q=args.q)
    study = run_kf_experiment(sc, N=args.N, S=args.S, E_list=E_list, kcfg=kcfg, seed=resolve_seed(args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mae.csv").write_text(study.table_csv(), encoding="utf-8")
    for E in study.E:
        tag = f"E{E:g}"
        (out / f"errors_{tag}.csv").write_text(study.errors_csv(E), encoding="utf-8")
        for which in ("measured", "estimated"):
            (out / f"kde_{which}_{tag}.csv").write_text(study.kde_csv(E, which), encoding="utf-8")
    sys.stdout.write(study.table_csv())
    return EXIT_OK


# --- convert -----------------------------------------------------------------


def _convert_row(origin, row: dict, inverse: bool) -> dict:
    if inverse:
        x, y = float(row["x"]), float(row["y"])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("non-finite coordinate")
        lat, lon = geo.to_global(origin, (x, y))
        res = {"lat": f"{lat:.9f}", "lon": f"{lon:.9f}"}
        if row.get("vx", "") != "" or row.get("vy", "") != "":
            speed, bearing = geo.velocity_to_global(origin, (float(row["vx"]), float(row["vy"])))
            res.update(speed=f"{speed:.6f}", bearing=f"{bearing:.9f}")
        return res
    p = geo.to_local(origin, float(row["lat"]), float(row["lon"]))
    res = {"x": f"{p.x:.4f}", "y": f"{p.y:.4f}"}
    if row.get("speed", "") != "" or row.get("bearing", "") != "":
        v = geo.velocity_to_local(origin, float(row["speed"]), float(row["bearing"]))
        res.update(vx=f"{v.x:.6f}", vy=f"{v.y:.6f}")
    return res


def cmd_convert(args) -> int:
    if args.lat0 is None or args.lon0 is None:
        sc = load_scenario(args.scenario)
        if sc.geo is None:
            raise CliError("no origin: pass --lat0/--lon0 or use a scenario with a geo section")
        origin = sc.geo
    else:
        origin = geo.GeoOrigin(args.lat0, args.lon0, args.rotation)
    src = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8", newline="")
    try:
        reader = csv.DictReader(src)
        fields = reader.fieldnames or []
        need = ("x", "y") if args.inverse else ("lat", "lon")
        missing = [k for k in need if k not in fields]
        if missing:
            raise CliError(f"input lacks column(s) {', '.join(missing)}")
        moving = ("vx", "vy") if args.inverse else ("speed", "bearing")
        has_vel = all(k in fields for k in moving)
        produced = (["lat", "lon"] + (["speed", "bearing"] if has_vel else [])) if args.inverse \
            else (["x", "y"] + (["vx", "vy"] if has_vel else []))
        consumed = set(need) | (set(moving) if has_vel else set())
        keep = [f for f in fields if f not in consumed]
        rows, bad, total = [], 0, 0
        for row in reader:
            total += 1
            try:
                conv = _convert_row(origin, row, args.inverse)
            except (ValueError, TypeError, KeyError) as exc:
                bad += 1
                print(f"warning: line {reader.line_num}: skipped ({exc})", file=sys.stderr)
                continue
            rows.append([row.get(k, "") for k in keep] + [conv.get(k, "") for k in produced])
    finally:
        if src is not sys.stdin:
            src.close()
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keep + produced)
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    if total and bad == total:
        print("error: every row failed to convert", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ares", description="Stampede probability under GPS position noise.")
    p.add_argument("--scenario", help="scenario YAML (default: bundled bridge venue)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one trial and report any detection")
    s.add_argument("--method", default="pressure", choices=[m.name.lower() for m in Method])
    s.add_argument("--R", type=float, default=1.0, help="assessment radius in m")
    s.add_argument("--E", type=float, default=0.0, help="GPS error scale in m")
    s.add_argument("--N", type=int, default=20, help="number of agents")
    s.add_argument("--seed", type=int, help="trial seed (default: $ARES_SEED, else %d)" % DEFAULT_SEED)
    s.add_argument("--horizon", type=float, default=DEFAULT_HORIZON, help="simulated seconds")
    s.add_argument("--spacing", type=float, help="override the spawn grid spacing in m")
    s.add_argument("--full", action="store_true", help="run to the horizon even after a detection")
    s.add_argument("--trajectory", help="write a per-step trajectory CSV here (implies --full)")
    s.add_argument("--report", help="detection report CSV (default: stdout)")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="estimate p over a grid of methods, E and N")
    w.add_argument("--methods", default=DEFAULT_METHODS, help="e.g. pressure:1,force,density:2")
    w.add_argument("--E", default=",".join(str(e) for e in STUDY_E), help="list, e.g. 0..10 or 0,5,10")
    w.add_argument("--N", default=",".join(str(n) for n in STUDY_N), help="list of agent counts")
    w.add_argument("--trials", type=int, default=1000)
    w.add_argument("--horizon", type=float, default=DEFAULT_HORIZON)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--seed", type=int, help="master seed (default: $ARES_SEED, else %d)" % DEFAULT_SEED)
    w.add_argument("--spacing", type=float, help="override the spawn grid spacing in m")
    w.add_argument("--out", help="result CSV (default: stdout)")
    w.add_argument("--timing", action="store_true", help="fill the mean_runtime_ms column")
    w.add_argument("--alert-threshold", type=float, default=0.5, help="warn on cells with p above this")
    w.set_defaults(func=cmd_sweep)

    k = sub.add_parser("kalman", help="Kalman filter error study on one base simulation")
    k.add_argument("--N", type=int, default=10240)
    k.add_argument("--S", type=float, default=150.0, help="simulated seconds")
    k.add_argument("--E", default="1..10")
    k.add_argument("--q", type=float, default=1.0, help="process noise density in m^2/s^3")
    k.add_argument("--seed", type=int)
    k.add_argument("--out-dir", default="kalman_out")
    k.set_defaults(func=cmd_kalman)

    c = sub.add_parser("convert", help="lat/lon fixes to venue-local metres (or back with --inverse)")
    c.add_argument("input", nargs="?", default="-", help="CSV with lat,lon[,speed,bearing] (default: stdin)")
    c.add_argument("--lat0", type=float)
    c.add_argument("--lon0", type=float)
    c.add_argument("--rotation", type=float, default=0.0, help="venue x-axis, radians CCW from east")
    c.add_argument("--inverse", action="store_true", help="x,y[,vx,vy] in, lat,lon[,speed,bearing] out")
    c.add_argument("--out", help="output CSV (default: stdout)")
    c.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError, ConfigurationError, ValueError, OSError) as exc:
        print(f"ares {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
