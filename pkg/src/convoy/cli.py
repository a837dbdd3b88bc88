"""Command-line front end: validate scenarios, run them to artifact
directories, and render SVG charts from stored runs.

Exit codes: 0 success (for `run`: every convoying objective met), 1 parse or
usage error, 2 assumption violation or unmet objectives, 3 simulation abort.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics, presets
from .core import ScenarioConfig, ScenarioError, validate_scenario
from .plots import PALETTE, PLOT_KINDS, Chart
from .simulator import SimLog, SimulationError, run

FLOAT_FMT = "%.9g"


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    try:
        return presets.preset_path(arg)
    except KeyError:
        raise FileNotFoundError(
            f"no such file or preset: {arg!r} "
            f"(presets: {', '.join(presets.PRESET_NAMES)})")


def _load_scenario(arg: str) -> ScenarioConfig:
    return ScenarioConfig.load(_resolve_scenario(arg))


def _f(value: float) -> str:
    return FLOAT_FMT % value


def _pad3(arr: np.ndarray) -> np.ndarray:
    """Pad (.., n) coordinate arrays with zeros up to three columns."""
    if arr.shape[-1] >= 3:
        return arr[..., :3]
    pad = [(0, 0)] * (arr.ndim - 1) + [(0, 3 - arr.shape[-1])]
    return np.pad(arr, pad)


def write_trajectories_csv(log: SimLog, path: Path) -> None:
    pos = _pad3(log.pos)
    u = _pad3(log.u)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "robot_id", "x", "y", "z", "ux", "uy", "uz",
                    "delta", "n_active_rows"])
        for k in range(log.steps):
            for i, rid in enumerate(log.robot_ids):
                w.writerow([_f(log.t[k]), int(rid),
                            _f(pos[k, i, 0]), _f(pos[k, i, 1]), _f(pos[k, i, 2]),
                            _f(u[k, i, 0]), _f(u[k, i, 1]), _f(u[k, i, 2]),
                            _f(log.delta[k, i]), int(log.n_active_rows[k, i])])


def write_metrics_csv(log: SimLog, path: Path) -> None:
    xd = _pad3(log.x_d)
    orderings = metrics.ordering_series(log)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "ex", "ey", "ez", "min_pair_dist", "min_target_dist",
                    "lyapunov", "max_residual", "ordering"])
        for k in range(log.steps):
            live = log.active[k]
            centroid = _pad3(log.pos[k][live].mean(axis=0)[None, :])[0]
            e = centroid - xd[k]
            perm = orderings[k]
            w.writerow([_f(log.t[k]), _f(e[0]), _f(e[1]), _f(e[2]),
                        _f(log.min_pair[k]), _f(log.min_target[k]),
                        _f(log.lyapunov[k]), _f(log.max_residual[k]),
                        "-".join(str(i) for i in perm) if perm else ""])


def _plotdata_from_log(log: SimLog, cfg: ScenarioConfig) -> dict:
    xd = _pad3(log.x_d)
    centroids = np.array([log.pos[k][log.active[k]].mean(axis=0)
                          for k in range(log.steps)])
    return {
        "t": log.t,
        "ids": [int(i) for i in log.robot_ids],
        "pos": _pad3(log.pos),
        "u": _pad3(log.u),
        "xd": xd,
        "e": _pad3(centroids) - xd,
        "min_pair": log.min_pair,
        "orderings": metrics.ordering_series(log),
        "zeta": cfg.zeta,
        "r": cfg.r,
        "R": cfg.R,
        "obstacles": [(_pad3(np.asarray(o.center)[None, :])[0], o.radius)
                      for o in cfg.obstacles],
    }


def _plotdata_from_dir(run_dir: Path) -> dict:
    cfg = ScenarioConfig.load(run_dir / "config.json")
    rows = list(csv.DictReader(open(run_dir / "trajectories.csv", newline="",
                                    encoding="utf-8")))
    met = list(csv.DictReader(open(run_dir / "metrics.csv", newline="",
                                   encoding="utf-8")))
    if not rows or not met:
        raise ValueError("empty run artifacts")
    ids = sorted({int(r["robot_id"]) for r in rows})
    index = {rid: i for i, rid in enumerate(ids)}
    steps = len(met)
    pos = np.zeros((steps, len(ids), 3))
    u = np.zeros((steps, len(ids), 3))
    delta_t = {}
    for r in rows:
        t = float(r["t"])
        delta_t.setdefault(t, len(delta_t))
        k = delta_t[t]
        i = index[int(r["robot_id"])]
        pos[k, i] = [float(r["x"]), float(r["y"]), float(r["z"])]
        u[k, i] = [float(r["ux"]), float(r["uy"]), float(r["uz"])]
    t = np.array([float(m["t"]) for m in met])
    e = np.array([[float(m["ex"]), float(m["ey"]), float(m["ez"])] for m in met])
    # The target track is centroid - e; infer broken robots (frozen with an
    # exactly zero command) so the centroid matches the active set used when
    # the error columns were written.
    active = np.ones((steps, len(ids)), dtype=bool)
    for k in range(1, steps):
        frozen = np.all(u[k] == 0.0, axis=1) & np.all(pos[k] == pos[k - 1], axis=1)
        active[k] = ~frozen
    centroids = np.array([pos[k][active[k]].mean(axis=0) for k in range(steps)])
    xd = centroids - e
    orderings = []
    for m in met:
        text = m["ordering"]
        orderings.append(tuple(int(v) for v in text.split("-")) if text else None)
    return {
        "t": t,
        "ids": ids,
        "pos": pos,
        "u": u,
        "xd": xd,
        "e": e,
        "min_pair": np.array([float(m["min_pair_dist"]) for m in met]),
        "orderings": orderings,
        "zeta": cfg.zeta,
        "r": cfg.r,
        "R": cfg.R,
        "obstacles": [(_pad3(np.asarray(o.center)[None, :])[0], o.radius)
                      for o in cfg.obstacles],
    }


def render_kind(kind: str, data: dict) -> str:
    """Render one chart kind to SVG text."""
    t = data["t"]
    ids = data["ids"]
    if len(t) == 0:
        raise ValueError("empty log; nothing to plot")
    if kind == "trajectories":
        chart = Chart("Robot and target paths", "x [m]", "y [m]",
                      equal_axes=True)
        for i, rid in enumerate(ids):
            chart.add_series(f"robot {rid}", data["pos"][:, i, 0],
                             data["pos"][:, i, 1])
        chart.add_series("target", data["xd"][:, 0], data["xd"][:, 1],
                         color="#000000")
        for center, radius in data["obstacles"]:
            chart.add_circle(center[0], center[1], radius)
        return chart.render()
    if kind == "error":
        chart = Chart("Convoying error", "t [s]", "error [m]")
        e = data["e"]
        chart.add_series("|e|", t, np.linalg.norm(e, axis=1))
        for axis, name in enumerate("xyz"):
            chart.add_series(f"e{name}", t, e[:, axis])
        chart.add_hline(0.0, "", "#999999")
        return chart.render()
    if kind == "pairwise":
        chart = Chart("Pairwise distances", "t [s]", "distance [m]")
        pos = data["pos"]
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                d = np.linalg.norm(pos[:, a, :] - pos[:, b, :], axis=1)
                chart.add_series(f"{ids[a]}-{ids[b]}", t, d)
        chart.add_hline(data["r"], "collision radius")
        return chart.render()
    if kind == "ordering":
        chart = Chart("Adjacent ordering distances", "t [s]", "distance [m]")
        pos = data["pos"]
        index = {rid: i for i, rid in enumerate(ids)}
        final = next((o for o in reversed(data["orderings"]) if o), None)
        if final is None:
            raise ValueError("no ordering available to plot")
        for a in range(len(final)):
            b = (a + 1) % len(final)
            ia, ib = index[final[a]], index[final[b]]
            d = np.linalg.norm(pos[:, ia, :] - pos[:, ib, :], axis=1)
            chart.add_series(f"{final[a]}-{final[b]}", t, d)
        chart.add_hline(data["r"], "r")
        chart.add_hline(data["R"], "R")
        return chart.render()
    if kind == "inputs":
        chart = Chart("Commanded inputs", "t [s]", "u [m/s]")
        u = data["u"]
        for i, rid in enumerate(ids):
            color = PALETTE[i % len(PALETTE)]
            for axis in range(3):
                chart.add_series(f"robot {rid}" if axis == 0 else "", t,
                                 u[:, i, axis], color=color)
        chart.add_hline(data["zeta"], "+limit")
        chart.add_hline(-data["zeta"], "-limit")
        return chart.render()
    if kind == "clearances":
        if not data["obstacles"]:
            raise ValueError("scenario has no obstacles")
        chart = Chart("Obstacle distances", "t [s]", "distance [m]")
        pos = data["pos"]
        for k, (center, radius) in enumerate(data["obstacles"]):
            for i, rid in enumerate(ids):
                d = np.linalg.norm(pos[:, i, :] - center, axis=1)
                chart.add_series(f"robot {rid} / obstacle {k + 1}", t, d)
            chart.add_hline(radius, f"radius {k + 1}")
        return chart.render()
    raise ValueError(f"unknown plot kind {kind!r}; "
                     f"choose from {', '.join(PLOT_KINDS)}")


def write_plots(data: dict, plot_dir: Path) -> list:
    plot_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in PLOT_KINDS:
        if kind == "clearances" and not data["obstacles"]:
            continue
        svg = render_kind(kind, data)
        path = plot_dir / f"{kind}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    return written


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        cfg = _load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = validate_scenario(cfg)
    print(report.summary())
    return 0 if report.passed else 2


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.dt is not None:
        cfg.dt = args.dt
    if args.duration is not None:
        cfg.duration = args.duration
    if args.oracle_velocity:
        cfg.oracle_velocity = True

    report = validate_scenario(cfg)
    if not report.passed:
        print(report.summary(), file=sys.stderr)
        return 2

    out_base = args.out_dir or os.environ.get("CONVOY_OUT_DIR")
    out_dir = Path(out_base) if out_base else Path("runs") / (cfg.name or "scenario")
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    try:
        log = run(cfg)
    except (SimulationError, ScenarioError) as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 3
    runtime = time.perf_counter() - started
    if log.steps == 0:
        print("simulation aborted: empty log (duration shorter than one step)",
              file=sys.stderr)
        return 3

    config_bytes = cfg.to_json().encode("utf-8")
    (out_dir / "config.json").write_bytes(config_bytes)
    write_trajectories_csv(log, out_dir / "trajectories.csv")
    write_metrics_csv(log, out_dir / "metrics.csv")
    convoy_report = metrics.check_objectives(log, cfg)
    (out_dir / "report.json").write_text(
        json.dumps(convoy_report.to_dict(), indent=2) + "\n", encoding="utf-8")
    plot_paths = write_plots(_plotdata_from_log(log, cfg), out_dir / "plots")

    manifest = {
        "scenario": cfg.name,
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "artifacts": {
            "config": "config.json",
            "trajectories": "trajectories.csv",
            "metrics": "metrics.csv",
            "report": "report.json",
            "plots": [str(p.relative_to(out_dir)) for p in plot_paths],
        },
        "runtime_seconds": runtime,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    verdict = "PASS" if convoy_report.passed else "FAIL"
    print(f"{cfg.name or args.scenario}: objectives {verdict} "
          f"(e_mean {convoy_report.e_mean_final:.4f}, "
          f"min pair {convoy_report.min_pair:.4f}, runtime {runtime:.2f}s)")
    print(f"artifacts in {out_dir}")
    return 0 if convoy_report.passed else 2


def cmd_plot(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    try:
        data = _plotdata_from_dir(run_dir)
        svg = render_kind(args.kind, data)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else run_dir / "plots" / f"{args.kind}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convoy",
        description="Constraint-based multi-robot convoying of a moving target.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a scenario's assumptions")
    p_val.add_argument("scenario", help="scenario file or preset name")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="simulate a scenario and write artifacts")
    p_run.add_argument("scenario", help="scenario file or preset name")
    p_run.add_argument("--out-dir", help="artifact directory "
                       "(default: $CONVOY_OUT_DIR or runs/<name>)")
    p_run.add_argument("--dt", type=float, help="override the time step [s]")
    p_run.add_argument("--duration", type=float, help="override duration [s]")
    p_run.add_argument("--oracle-velocity", action="store_true",
                       help="feed the true target velocity to every robot")
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="re-render a chart from a stored run")
    p_plot.add_argument("run_dir", help="directory written by `convoy run`")
    p_plot.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p_plot.add_argument("--out", help="output SVG path")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
