"""Experiment runner: benchmark reproductions, lambda sweeps, and reports.

Subcommands

    example1   three-controller comparison on the two-by-two bench plant
    example2   straight-line Cartesian traverse tracked by damped least squares
    sweep      lambda grid with analytic and simulated ramp errors on a test loop
    stability  analytic-only lambda grid (characteristic roots and ramp errors)

Each run writes schema-versioned CSV files plus SVG line charts rendered back
from those CSVs, under --out, the config's out key, $MFACLAB_OUT, or
./mfaclab-runs, in that order of preference.  Reruns with the same settings
are byte-identical.  Exit codes: 0 success, 2 divergence, 3 bad config.

Config files use a single [experiment] INI section; keys mirror the command
line (id, variant, lambda, steps, tf, t0, start_fraction, goal_fraction,
seed, out) and unknown keys are rejected rather than ignored.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import closed_loop_matrix, ramp_static_error, stability_check
from .controller import BoxConstraints, Weighting
from .edlm import PseudoJacobian, RegressorWindow
from .errors import ConfigError, DivergenceError
from .kinematics import (
    TaskVector,
    default_arm,
    forward_kinematics,
    ik_solve,
    pose_to_task,
    task_jacobian,
    task_to_pose,
)
from .pathgen import (
    PathSpec,
    SegmentBoundary,
    euler_to_quat,
    generate_path,
    quat_geodesic,
    quat_to_euler,
)
from .plant import (
    VARIANTS,
    Example1Plant,
    Example1Reference,
    LTIPlant,
    RampReference,
    SimLog,
    metrics,
    simulate,
)

SUMMARY_SCHEMA = "mfaclab.summary.v1"
TRACK_SCHEMA = "mfaclab.track.v1"
SWEEP_SCHEMA = "mfaclab.sweep.v1"
STABILITY_SCHEMA = "mfaclab.stability.v1"
OUT_ENV = "MFACLAB_OUT"
DEFAULT_OUT = "mfaclab-runs"

# 20-point default grid; stops short of 1.0 where one test loop sits exactly
# on its stability boundary and verdicts would hinge on root rounding.
LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(20))

EXAMPLE1_BOX = ((-0.3, -0.5), (0.1, 0.5))
EXAMPLE2_HOME = (-math.pi / 2, 0.0, 0.0, 0.0, -math.pi / 2, 0.0)
EXAMPLE2_GOAL = (math.pi / 2, 0.0, 0.0, 0.0, math.pi / 2, 0.0)

# Named LTI test loops for sweep/stability: (output blocks, input blocks).
TEST_LOOPS = {
    "scalar": ([[0.5]], [[1.0]]),
    "unstable-scalar": ([[2.0]], [[1.0]]),
    "mimo2": ([[3.0, 0.2], [0.0, 0.5]], [[1.0, 0.0], [0.0, 1.0]]),
}

_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run settings: defaults, then config file, then flags."""

    experiment: str
    variant: str
    lam: float | None
    steps: int
    tf: float
    t0: float
    seed: int
    out: Path
    start_fraction: float
    goal_fraction: float


_VERB_TO_ID = {
    "example1": "example1",
    "example2": "example2",
    "sweep": "lambda-sweep",
    "stability": "stability",
}

_COMMON_KEYS = {"id", "out", "seed"}
_ALLOWED_KEYS = {
    "example1": _COMMON_KEYS | {"variant", "lambda", "steps"},
    "example2": _COMMON_KEYS | {"tf", "t0", "start_fraction", "goal_fraction"},
    "lambda-sweep": _COMMON_KEYS | {"variant", "lambda", "steps"},
    "stability": _COMMON_KEYS | {"variant", "lambda"},
}


def _parse_float(raw: str, key: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {raw!r}")
    return value


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None


def _load_config_file(path: Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    unknown = [s for s in parser.sections() if s != "experiment"]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    if parser.defaults():
        raise ConfigError("keys outside the [experiment] section are not allowed")
    if "experiment" not in parser:
        return {}
    return dict(parser["experiment"])


def resolve_config(verb: str, args: argparse.Namespace) -> ExperimentConfig:
    experiment = _VERB_TO_ID[verb]
    allowed = _ALLOWED_KEYS[experiment]

    merged: dict[str, str] = {}
    if args.config is not None:
        merged = _load_config_file(Path(args.config))
        unknown = sorted(set(merged) - allowed)
        if unknown:
            raise ConfigError(f"unknown config key(s) for {experiment}: {', '.join(unknown)}")
    if "id" in merged and merged["id"] != experiment:
        raise ConfigError(f"config id {merged['id']!r} does not match subcommand {verb!r}")

    if args.steps is not None:
        if "steps" not in allowed:
            raise ConfigError(f"{verb} does not take --steps")
        merged["steps"] = str(args.steps)
    if args.lam is not None:
        if "lambda" not in allowed:
            raise ConfigError(f"{verb} does not take --lambda")
        merged["lambda"] = repr(args.lam)
    if args.out is not None:
        merged["out"] = args.out

    if experiment == "example1":
        variant = merged.get("variant", "all")
        if variant not in ("all",) + VARIANTS:
            raise ConfigError(f"unknown example1 variant {variant!r}")
    elif experiment in ("lambda-sweep", "stability"):
        variant = merged.get("variant", "scalar")
        if variant not in TEST_LOOPS:
            raise ConfigError(
                f"unknown test loop {variant!r}, expected one of {sorted(TEST_LOOPS)}"
            )
    else:
        variant = ""

    lam: float | None = None
    if "lambda" in merged:
        lam = _parse_float(merged["lambda"], "lambda")
        if lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {lam}")
    elif experiment == "example1":
        lam = 0.2

    steps = _parse_int(merged["steps"], "steps") if "steps" in merged else (
        800 if experiment == "example1" else 5000
    )
    if experiment == "example1" and steps < 3:
        raise ConfigError("example1 needs steps >= 3 to cover its pinned warm-up rows")
    if experiment == "lambda-sweep" and steps < 2:
        raise ConfigError("sweep needs steps >= 2")

    tf = _parse_float(merged.get("tf", "10.0"), "tf")
    t0 = _parse_float(merged.get("t0", "0.001"), "t0")
    if tf <= 0 or t0 <= 0 or t0 > tf:
        raise ConfigError(f"need 0 < t0 <= tf, got t0={t0}, tf={tf}")
    start_fraction = _parse_float(merged.get("start_fraction", "0.0"), "start_fraction")
    goal_fraction = _parse_float(merged.get("goal_fraction", "1.0"), "goal_fraction")
    if not 0.0 <= start_fraction < goal_fraction <= 1.0:
        raise ConfigError(
            f"need 0 <= start_fraction < goal_fraction <= 1, "
            f"got {start_fraction} and {goal_fraction}"
        )
    seed = _parse_int(merged.get("seed", "0"), "seed")
    out = Path(merged.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    return ExperimentConfig(
        experiment=experiment,
        variant=variant,
        lam=lam,
        steps=steps,
        tf=tf,
        t0=t0,
        seed=seed,
        out=out,
        start_fraction=start_fraction,
        goal_fraction=goal_fraction,
    )


# --- CSV and SVG emission ---------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        # column names may embed commas (e.g. J[0,0]), so quote via csv
        csv.writer(fh, lineterminator="\n").writerow(header)
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_columns(path: Path) -> dict[str, list[float]]:
    """Reload a CSV as float columns; plots consume files, not live arrays."""
    with path.open(newline="") as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    header = rows[0]
    columns: dict[str, list[float]] = {name: [] for name in header}
    for row in rows[1:]:
        for name, cell in zip(header, row):
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            columns[name].append(value)
    return columns


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _svg_chart(
    title: str,
    x_label: str,
    y_label: str,
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    width: int = 760,
    height: int = 440,
) -> str:
    left, right, top, bottom = 64.0, 180.0, 42.0, 52.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    finite = [
        (x, y)
        for _, xs, ys in series
        for x, y in zip(xs, ys)
        if math.isfinite(x) and math.isfinite(y)
    ]
    if finite:
        xmin = min(p[0] for p in finite)
        xmax = max(p[0] for p in finite)
        ymin = min(p[1] for p in finite)
        ymax = max(p[1] for p in finite)
    else:
        xmin = ymin = 0.0
        xmax = ymax = 1.0
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax == ymin:
        pad = max(0.5, abs(ymax) * 0.1)
        ymin, ymax = ymin - pad, ymax + pad

    def sx(v: float) -> float:
        return left + (v - xmin) / (xmax - xmin) * plot_w

    def sy(v: float) -> float:
        return top + (ymax - v) / (ymax - ymin) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{left:.0f}" y="24" font-family="sans-serif" font-size="15" '
        f'font-weight="bold">{_esc(title)}</text>',
    ]
    for i in range(5):
        gx = left + plot_w * i / 4
        gy = top + plot_h * i / 4
        xv = xmin + (xmax - xmin) * i / 4
        yv = ymax - (ymax - ymin) * i / 4
        parts.append(
            f'<line x1="{gx:.2f}" y1="{top:.2f}" x2="{gx:.2f}" y2="{top + plot_h:.2f}" '
            'stroke="#dddddd"/>'
        )
        parts.append(
            f'<line x1="{left:.2f}" y1="{gy:.2f}" x2="{left + plot_w:.2f}" y2="{gy:.2f}" '
            'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{gx:.2f}" y="{top + plot_h + 18:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{xv:.5g}</text>'
        )
        parts.append(
            f'<text x="{left - 8:.2f}" y="{gy + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{yv:.5g}</text>'
        )
    parts.append(
        f'<rect x="{left:.2f}" y="{top:.2f}" width="{plot_w:.2f}" height="{plot_h:.2f}" '
        'fill="none" stroke="#333333"/>'
    )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">{_esc(x_label)}</text>'
    )
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.2f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 18 {top + plot_h / 2:.2f})">'
        f"{_esc(y_label)}</text>"
    )

    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        segments: list[list[str]] = []
        run: list[str] = []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                run.append(f"{sx(x):.2f},{sy(y):.2f}")
            elif run:
                segments.append(run)
                run = []
        if run:
            segments.append(run)
        for seg in segments:
            if len(seg) == 1:
                cx, cy = seg[0].split(",")
                parts.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
            else:
                parts.append(
                    f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" '
                    'stroke-width="1.4"/>'
                )
        lx = left + plot_w + 14
        ly = top + 10 + 16 * idx
        parts.append(
            f'<line x1="{lx:.2f}" y1="{ly:.2f}" x2="{lx + 18:.2f}" y2="{ly:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 24:.2f}" y="{ly + 4:.2f}" font-family="sans-serif" '
            f'font-size="11">{_esc(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write_chart(path: Path, title: str, x_label: str, y_label: str, series) -> None:
    path.write_text(_svg_chart(title, x_label, y_label, series))


# --- runners -----------------------------------------------------------------


def _count_violations(log: SimLog) -> int:
    if log.box is None:
        return 0
    return sum(0 if log.box.contains(r.u) else 1 for r in log.records)


def run_example1(cfg: ExperimentConfig) -> int:
    plant = Example1Plant()
    dims = plant.dims
    reference = Example1Reference()
    w = Weighting.uniform(cfg.lam, dims.My)
    seed_pjm = PseudoJacobian.constant(0.01, dims)
    box = BoxConstraints(lower=EXAMPLE1_BOX[0], upper=EXAMPLE1_BOX[1])
    init = RegressorWindow(
        dims=dims,
        k=3,
        y_history=[np.zeros(dims.My)] * 3,
        u_history=[np.zeros(dims.Mu)] * 2,
    )
    variants = VARIANTS if cfg.variant == "all" else (cfg.variant,)
    cutoff = max(1, cfg.steps // 8)
    cfg.out.mkdir(parents=True, exist_ok=True)

    status = 0
    summary_rows = []
    written: list[tuple[str, Path]] = []
    for variant in variants:
        diverged_at = 0
        try:
            log = simulate(
                plant,
                variant,
                reference,
                steps=cfg.steps,
                init=init,
                w=w,
                box=box if variant == "constrained" else None,
                pjm_seed=seed_pjm,
            )
        except DivergenceError as exc:
            log = exc.log
            diverged_at = exc.step
            status = 2
            print(f"example1 {variant}: diverged at step {exc.step}", file=sys.stderr)
        path = cfg.out / f"example1_{variant}.csv"
        with path.open("w", newline="") as fh:
            log.to_csv(fh)
        written.append((variant, path))
        if diverged_at:
            rmse = max_err = (math.nan, math.nan)
        else:
            report = metrics(log, transient_cutoff=cutoff)
            rmse, max_err = report.rmse, report.max_abs_error
        summary_rows.append(
            [variant, cfg.steps, cfg.lam, cfg.seed, *rmse, *max_err,
             _count_violations(log), diverged_at]
        )

    _write_csv(
        cfg.out / "example1_summary.csv",
        SUMMARY_SCHEMA,
        ["variant", "steps", "lambda", "seed", "rmse1", "rmse2",
         "max_err1", "max_err2", "violations", "diverged_at"],
        summary_rows,
    )

    first_cols = _read_columns(written[0][1])
    out_series = [
        ("yref1", first_cols["k"], first_cols["yref1"]),
        ("yref2", first_cols["k"], first_cols["yref2"]),
    ]
    in_series = []
    for variant, path in written:
        cols = _read_columns(path)
        out_series.append((f"y1 {variant}", cols["k"], cols["y1"]))
        out_series.append((f"y2 {variant}", cols["k"], cols["y2"]))
        in_series.append((f"u1 {variant}", cols["k"], cols["u1"]))
        in_series.append((f"u2 {variant}", cols["k"], cols["u2"]))
    pjm_names = ("Phi1[0,0]", "Phi1[1,1]", "Phi2[0,0]", "Phi2[1,1]", "Phi3[0,0]", "Phi3[1,1]")
    pjm_series = [(name, first_cols["k"], first_cols[name]) for name in pjm_names]
    _write_chart(cfg.out / "example1_outputs.svg",
                 "Bench outputs vs reference", "k", "y", out_series)
    _write_chart(cfg.out / "example1_inputs.svg",
                 "Bench inputs", "k", "u", in_series)
    _write_chart(cfg.out / "example1_pjm.svg",
                 f"Linearization diagonal entries ({written[0][0]})", "k", "value", pjm_series)
    return status


def _blend_task(a: TaskVector, b: TaskVector, fraction: float) -> TaskVector:
    """Point at `fraction` along the straight-line/geodesic arc from a to b."""
    pos = a.position + fraction * (b.position - a.position)
    qk = quat_geodesic(euler_to_quat(*a.angles), euler_to_quat(*b.angles), fraction)
    alpha, beta, gamma = quat_to_euler(qk)
    return TaskVector(
        x=float(pos[0]), y=float(pos[1]), z=float(pos[2]),
        alpha=alpha, beta=beta, gamma=gamma,
    )


def run_example2(cfg: ExperimentConfig) -> int:
    chain = default_arm()
    q = np.array(EXAMPLE2_HOME)
    frame_a = pose_to_task(forward_kinematics(chain, q))
    frame_c = pose_to_task(forward_kinematics(chain, np.array(EXAMPLE2_GOAL)))
    start, goal = frame_a, frame_c
    if cfg.start_fraction > 0.0 or cfg.goal_fraction < 1.0:
        start = _blend_task(frame_a, frame_c, cfg.start_fraction)
        goal = _blend_task(frame_a, frame_c, cfg.goal_fraction)

    rest = SegmentBoundary(0.0, 0.0, 0.0, 0.0)
    path = generate_path(
        PathSpec(start=start, goal=goal, tf=cfg.tf, T0=cfg.t0,
                 position_boundary=rest, orientation_boundary=rest)
    )

    header = (
        ["t", "x", "y", "z", "alpha", "beta", "gamma",
         "xref", "yref", "zref", "alpharef", "betaref", "gammaref",
         "pos_err", "ori_err"]
        + [f"q{i + 1}" for i in range(chain.joint_count)]
        + [f"J[{r},{c}]" for r in range(6) for c in range(chain.joint_count)]
        + ["cond", "lambda", "iters", "converged"]
    )
    rows = []
    max_pos = max_ori = max_cond = 0.0
    max_iters = 0
    all_converged = True
    for t, target in zip(path.times, path.samples):
        result = ik_solve(chain, q, task_to_pose(target))
        q = result.q
        actual = pose_to_task(forward_kinematics(chain, q))
        jac = task_jacobian(chain, q)
        lam_used = max(result.lambda_trace) if result.lambda_trace else 0.0
        rows.append(
            [t, *actual.as_array(), *target.as_array(),
             result.position_error, result.orientation_error,
             *q, *jac.flatten(),
             result.max_condition, lam_used, result.iterations, int(result.converged)]
        )
        max_pos = max(max_pos, result.position_error)
        max_ori = max(max_ori, result.orientation_error)
        max_cond = max(max_cond, result.max_condition)
        max_iters = max(max_iters, result.iterations)
        all_converged = all_converged and result.converged

    cfg.out.mkdir(parents=True, exist_ok=True)
    track_path = cfg.out / "example2_tracking.csv"
    _write_csv(track_path, TRACK_SCHEMA, header, rows)
    _write_csv(
        cfg.out / "example2_summary.csv",
        SUMMARY_SCHEMA,
        ["samples", "tf", "t0", "seed", "start_fraction", "goal_fraction",
         "max_pos_err", "max_ori_err", "max_iterations", "max_condition",
         "all_converged"],
        [[len(rows), cfg.tf, cfg.t0, cfg.seed, cfg.start_fraction, cfg.goal_fraction,
          max_pos, max_ori, max_iters, max_cond, int(all_converged)]],
    )

    cols = _read_columns(track_path)
    ts = cols["t"]
    _write_chart(
        cfg.out / "example2_pose.svg", "Tool position vs reference", "t (s)", "mm",
        [("x", ts, cols["x"]), ("y", ts, cols["y"]), ("z", ts, cols["z"]),
         ("xref", ts, cols["xref"]), ("yref", ts, cols["yref"]), ("zref", ts, cols["zref"])],
    )
    _write_chart(
        cfg.out / "example2_errors.svg", "Tracking errors", "t (s)", "error",
        [("position (mm)", ts, cols["pos_err"]), ("orientation (rad)", ts, cols["ori_err"])],
    )
    _write_chart(
        cfg.out / "example2_joints.svg", "Joint angles", "t (s)", "rad",
        [(f"q{i + 1}", ts, cols[f"q{i + 1}"]) for i in range(chain.joint_count)],
    )
    log_cond = [math.log10(c) if math.isfinite(c) and c > 0 else math.nan
                for c in cols["cond"]]
    _write_chart(
        cfg.out / "example2_condition.svg", "Jacobian conditioning", "t (s)", "log10 cond",
        [("log10 cond", ts, log_cond)],
    )
    _write_chart(
        cfg.out / "example2_solver.svg", "Solver effort", "t (s)", "count / scaled weight",
        [("iterations", ts, cols["iters"]),
         ("100 x lambda", ts, [100.0 * v for v in cols["lambda"]])],
    )
    return 0


def _test_loop(name: str) -> tuple[LTIPlant, PseudoJacobian]:
    a_blocks, b_blocks = TEST_LOOPS[name]
    plant = LTIPlant(a_blocks=[a_blocks], b_blocks=[b_blocks])
    pjm = PseudoJacobian(
        output_blocks=[np.asarray(a_blocks, dtype=float)],
        input_blocks=[np.asarray(b_blocks, dtype=float)],
    )
    return plant, pjm


def _grid(cfg: ExperimentConfig) -> tuple[float, ...]:
    return LAMBDA_GRID if cfg.lam is None else (cfg.lam,)


def run_lambda_sweep(cfg: ExperimentConfig) -> int:
    plant, pjm = _test_loop(cfg.variant)
    size = pjm.My
    reference = RampReference(size, Ts=1.0)
    init = RegressorWindow(
        dims=plant.dims, k=1,
        y_history=[np.zeros(size)], u_history=[np.zeros(size)],
    )
    rows = []
    for lam in _grid(cfg):
        w = Weighting.uniform(lam, size)
        report = stability_check(closed_loop_matrix(pjm, w))
        max_root = max((abs(r) for r in report.characteristic_roots), default=0.0)
        if report.stable:
            analytic = ramp_static_error(pjm, w, Ts=1.0)
        else:
            analytic = np.full(size, math.nan)
        try:
            log = simulate(plant, "first_order", reference, steps=cfg.steps, init=init, w=w)
            last = log.records[-1]
            simulated = last.y_ref - last.y
        except DivergenceError:
            simulated = np.full(size, math.nan)
        rows.append([lam, int(report.stable), max_root, *simulated, *analytic])

    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / f"sweep_{cfg.variant}.csv"
    header = (
        ["lambda", "stable", "max_root"]
        + [f"ess_sim{i + 1}" for i in range(size)]
        + [f"ess_analytic{i + 1}" for i in range(size)]
    )
    _write_csv(csv_path, SWEEP_SCHEMA, header, rows)

    cols = _read_columns(csv_path)
    series = []
    for i in range(size):
        series.append((f"simulated {i + 1}", cols["lambda"], cols[f"ess_sim{i + 1}"]))
        series.append((f"analytic {i + 1}", cols["lambda"], cols[f"ess_analytic{i + 1}"]))
    _write_chart(
        cfg.out / f"sweep_{cfg.variant}.svg",
        f"Ramp steady-state error vs lambda ({cfg.variant})",
        "lambda", "error", series,
    )
    return 0


def run_stability(cfg: ExperimentConfig) -> int:
    _, pjm = _test_loop(cfg.variant)
    size = pjm.My
    rows = []
    for lam in _grid(cfg):
        w = Weighting.uniform(lam, size)
        report = stability_check(closed_loop_matrix(pjm, w))
        max_root = max((abs(r) for r in report.characteristic_roots), default=0.0)
        if report.stable:
            ess = ramp_static_error(pjm, w, Ts=1.0)
        else:
            ess = np.full(size, math.nan)
        rows.append([lam, max_root, int(report.stable), *ess])

    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.out / f"stability_{cfg.variant}.csv"
    header = ["lambda", "max_root", "stable"] + [f"ess{i + 1}" for i in range(size)]
    _write_csv(csv_path, STABILITY_SCHEMA, header, rows)

    cols = _read_columns(csv_path)
    grid = cols["lambda"]
    series = [
        ("max_root", grid, cols["max_root"]),
        ("unit circle", [grid[0], grid[-1]], [1.0, 1.0]),
    ]
    for i in range(size):
        series.append((f"ramp ess {i + 1}", grid, cols[f"ess{i + 1}"]))
    _write_chart(
        cfg.out / f"stability_{cfg.variant}.svg",
        f"Characteristic root radius vs lambda ({cfg.variant})",
        "lambda", "radius / error", series,
    )
    return 0


# --- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors surface as ConfigError so exit codes stay unambiguous."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfaclab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    blurbs = {
        "example1": "three-controller comparison on the bench plant",
        "example2": "Cartesian traverse tracked by damped least squares",
        "sweep": "lambda grid with analytic and simulated ramp errors",
        "stability": "analytic-only lambda grid",
    }
    for verb, blurb in blurbs.items():
        sp = sub.add_parser(verb, help=blurb)
        sp.add_argument("--config", default=None, metavar="FILE",
                        help="INI file with an [experiment] section")
        sp.add_argument("--out", default=None, metavar="DIR",
                        help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--steps", type=int, default=None,
                        help="simulation horizon override")
        sp.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="weighting override, or single-point grid for sweeps")
    return parser


_RUNNERS = {
    "example1": run_example1,
    "example2": run_example2,
    "lambda-sweep": run_lambda_sweep,
    "stability": run_stability,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args.verb, args)
        return _RUNNERS[cfg.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"diverged at step {exc.step}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
