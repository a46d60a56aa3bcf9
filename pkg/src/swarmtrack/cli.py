"""Command-line entry point.

Four subcommands: ``run`` tracks one scenario with one or more filters;
``noise-study``, ``scaling-study`` and ``consensus-study`` reproduce the
three stock comparison studies.  Every invocation writes CSV data, rendered
figures, and a manifest into the output directory; re-running with
``--manifest`` replays the recorded options against the same resolved
configuration.

Exit codes: 0 success, 1 configuration or argument error (YAML problems are
reported with line and column), 2 runtime failure inside a tracking run
(reported with the failing frame index).
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bench import DEFAULT_TIMEOUT_S, ScalingReport, run_benchmark
from .consensus import assign_ids
from .geometry import BehindCamera, CameraIntrinsics, ObserverPose, project
from .metrics import (
    SummaryRow,
    compute_run_metrics,
    write_run_csv,
    write_summary_csv,
)
from .runner import TrackingRuntimeError, run_tracking
from .sim import (
    NoiseConfig,
    ScenarioConfig,
    ScenarioError,
    builtin_crossing_scenario,
    load_scenario,
)
from .tracking import TrackEstimate
from .motion import TrackState

FILTERS = ("kalman", "jpdaf", "gmphd")
JPDAF_SOFT_LIMIT = 10
SCALING_JPDAF_CAP = 8


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1, matching config errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_filters(value: str) -> list[str]:
    if value == "all":
        return list(FILTERS)
    filters = [f.strip() for f in value.split(",") if f.strip()]
    bad = [f for f in filters if f not in FILTERS]
    if bad:
        raise ScenarioError(f"unknown filter(s) {bad}; choose from {list(FILTERS)} or 'all'")
    return filters


def _parse_float_list(value: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"{flag} expects comma-separated numbers, got {value!r}")


def _parse_int_list(value: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"{flag} expects comma-separated integers, got {value!r}")


def _resolve_scenario(name: str, seed: int | None) -> ScenarioConfig:
    match = re.fullmatch(r"crossing(\d+)", name)
    if match:
        scenario = builtin_crossing_scenario(
            n_targets=int(match.group(1)), seed=seed if seed is not None else 0
        )
    else:
        scenario = load_scenario(name)
        if seed is not None:
            scenario.seed = seed
    return scenario


def _output_dir(args: argparse.Namespace) -> Path:
    value = args.output_dir or os.environ.get("MTT_DEFAULT_OUTPUT") or "mtt_output"
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _guard_jpdaf(filters: list[str], n_targets: int, allow_large: bool) -> None:
    if "jpdaf" in filters and n_targets > JPDAF_SOFT_LIMIT and not allow_large:
        raise ScenarioError(
            f"jpdaf with {n_targets} targets enumerates a huge event space; "
            "pass --allow-large-jpdaf to proceed"
        )


def _write_manifest(path: Path, subcommand: str, options: dict, scenario: ScenarioConfig | None) -> None:
    doc: dict = {
        "tool": "swarmtrack",
        "version": __version__,
        "subcommand": subcommand,
        "options": options,
    }
    if scenario is not None:
        doc["scenario"] = scenario.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def _apply_manifest(args: argparse.Namespace, subcommand: str) -> dict | None:
    """Load a manifest and overlay its recorded options onto args."""
    if not getattr(args, "manifest", None):
        return None
    with open(args.manifest, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or doc.get("subcommand") != subcommand:
        raise ScenarioError(
            f"manifest {args.manifest} does not describe a {subcommand!r} invocation"
        )
    for key, value in doc.get("options", {}).items():
        setattr(args, key, value)
    return doc


def preset_noise_study() -> list[tuple[str, float, NoiseConfig]]:
    """The stock noise grid: each axis varied alone, other axes ideal.

    Clutter rate 1 and 10 false positives per frame, Gaussian noise at 0.25
    and 0.75 of the reference covariance, detection probability 0.97 and
    0.80: six cells in all.
    """
    cells: list[tuple[str, float, NoiseConfig]] = []
    for level in (1.0, 10.0):
        cells.append(("clutter", level, NoiseConfig(clutter_count=level)))
    for level in (0.25, 0.75):
        cells.append(("gauss", level, NoiseConfig(meas_noise_frac=level)))
    for level in (0.97, 0.80):
        cells.append(("miss", level, NoiseConfig(detect_prob=level)))
    return cells


def _noise_cells(axis: str, levels: list[float] | None) -> list[tuple[str, float, NoiseConfig]]:
    if axis == "all":
        if levels:
            raise ScenarioError("--levels requires choosing a single --axis")
        return preset_noise_study()
    makers = {
        "clutter": lambda l: NoiseConfig(clutter_count=l),
        "gauss": lambda l: NoiseConfig(meas_noise_frac=l),
        "miss": lambda l: NoiseConfig(detect_prob=l),
    }
    defaults = {"clutter": [1.0, 10.0], "gauss": [0.25, 0.75], "miss": [0.97, 0.80]}
    if axis not in makers:
        raise ScenarioError(f"unknown axis {axis!r}; choose clutter, gauss, miss, or all")
    use = levels if levels else defaults[axis]
    return [(axis, l, makers[axis](l)) for l in use]


def _cmd_run(args: argparse.Namespace) -> int:
    manifest_doc = _apply_manifest(args, "run")
    filters = _parse_filters(args.filter)
    if manifest_doc and "scenario" in manifest_doc:
        scenario = ScenarioConfig.from_dict(manifest_doc["scenario"])
    else:
        scenario = _resolve_scenario(args.scenario, args.seed)
    _guard_jpdaf(filters, scenario.n_targets, args.allow_large_jpdaf)
    out = _output_dir(args)

    rows: list[SummaryRow] = []
    for filt in filters:
        result = run_tracking(scenario, filt)
        metrics = compute_run_metrics(result)
        write_run_csv(result, str(out / f"run_{filt}.csv"))
        if not args.no_figures:
            from . import report

            report.render_run_figure(result, str(out / f"run_{filt}.png"))
        rows.append(
            SummaryRow(
                filter_kind=filt,
                n_targets=scenario.n_targets,
                noise_axis="none",
                noise_level=None,
                rmse=metrics.mean_rmse,
                id_switches=metrics.id_switch_count,
                mean_iter_time_s=metrics.mean_iter_time_s,
            )
        )
        print(
            f"{filt}: rmse={metrics.mean_rmse:.3f}px switches={metrics.id_switch_count} "
            f"agreement={metrics.consensus_agreement:.2f} "
            f"mean_update={metrics.mean_iter_time_s * 1e3:.2f}ms"
        )
    write_summary_csv(rows, str(out / "summary.csv"))
    _write_manifest(
        out / "manifest.yaml",
        "run",
        {"filter": args.filter, "seed": args.seed, "no_figures": args.no_figures},
        scenario,
    )
    print(f"wrote {out}/summary.csv ({len(rows)} rows)")
    return 0


def _run_noise_cell(job: tuple[str, str, float, NoiseConfig, int, int]) -> tuple:
    filt, axis, level, noise, n_targets, seed = job
    scenario = builtin_crossing_scenario(n_targets=n_targets, seed=seed, noise=noise)
    metrics = compute_run_metrics(run_tracking(scenario, filt))
    return (filt, axis, level, seed, metrics)


def _cmd_noise_study(args: argparse.Namespace) -> int:
    _apply_manifest(args, "noise-study")
    filters = _parse_filters(args.filter)
    levels = _parse_float_list(args.levels, "--levels") if args.levels else None
    cells = _noise_cells(args.axis, levels)
    _guard_jpdaf(filters, args.targets, args.allow_large_jpdaf)
    out = _output_dir(args)
    base_seed = args.seed if args.seed is not None else 0

    jobs = [
        (filt, axis, level, noise, args.targets, base_seed + k)
        for filt in filters
        for axis, level, noise in cells
        for k in range(args.seeds)
    ]
    if args.parallel > 1:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            outcomes = list(pool.map(_run_noise_cell, jobs))
    else:
        outcomes = [_run_noise_cell(job) for job in jobs]

    per_run_path = out / "runs.csv"
    with open(per_run_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("filter,n_targets,noise_axis,noise_level,seed,rmse,id_switches,mean_iter_time_s\n")
        for filt, axis, level, seed, metrics in outcomes:
            fh.write(
                f"{filt},{args.targets},{axis},{level!r},{seed},{metrics.mean_rmse!r},"
                f"{metrics.id_switch_count},{metrics.mean_iter_time_s!r}\n"
            )

    rows: list[SummaryRow] = []
    for filt in filters:
        for axis, level, _noise in cells:
            cell = [m for f, a, l, _s, m in outcomes if f == filt and a == axis and l == level]
            rows.append(
                SummaryRow(
                    filter_kind=filt,
                    n_targets=args.targets,
                    noise_axis=axis,
                    noise_level=level,
                    rmse=float(np.mean([m.mean_rmse for m in cell])),
                    id_switches=float(np.mean([m.id_switch_count for m in cell])),
                    mean_iter_time_s=float(np.mean([m.mean_iter_time_s for m in cell])),
                )
            )
    write_summary_csv(rows, str(out / "summary.csv"))
    if not args.no_figures:
        from . import report

        report.render_noise_figure(rows, str(out / "noise_study.png"))
    _write_manifest(
        out / "manifest.yaml",
        "noise-study",
        {
            "axis": args.axis,
            "levels": args.levels,
            "filter": args.filter,
            "seeds": args.seeds,
            "targets": args.targets,
            "seed": base_seed,
            "parallel": args.parallel,
            "no_figures": args.no_figures,
        },
        None,
    )
    for row in rows:
        print(
            f"{row.noise_axis}={row.noise_level:g} {row.filter_kind}: "
            f"rmse={row.rmse:.3f}px switches={row.id_switches:.1f}"
        )
    print(f"wrote {out}/summary.csv ({len(rows)} rows over {len(jobs)} runs)")
    return 0


def _cmd_scaling_study(args: argparse.Namespace) -> int:
    _apply_manifest(args, "scaling-study")
    filters = _parse_filters(args.filter)
    targets = _parse_int_list(args.targets, "--targets")
    if targets != sorted(set(targets)):
        raise ScenarioError("--targets must be strictly increasing")
    out = _output_dir(args)
    base_seed = args.seed if args.seed is not None else 0

    reports: list[ScalingReport] = []
    for filt in filters:
        ns = targets
        if filt == "jpdaf" and not args.allow_large_jpdaf:
            ns = [n for n in targets if n <= SCALING_JPDAF_CAP]
            skipped = [n for n in targets if n > SCALING_JPDAF_CAP]
            if skipped:
                print(f"jpdaf: skipping N={skipped} (cap {SCALING_JPDAF_CAP}; --allow-large-jpdaf to force)")
        report_ = run_benchmark(
            filt,
            ns,
            repetitions=args.repetitions,
            seed=base_seed,
            timeout_s=args.timeout_s,
        )
        reports.append(report_)
        slope = report_.slope
        print(f"{filt}: slope={slope:.2f}" if slope is not None else f"{filt}: slope=n/a")

    with open(out / "scaling.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("filter,n_targets,mean_iter_time_s,median_iter_time_s,censored,slope\n")
        for rep in reports:
            slope = rep.slope
            for n, point in rep.points.items():
                mean = "" if point.mean_s is None else repr(point.mean_s)
                median = "" if point.median_s is None else repr(point.median_s)
                fh.write(
                    f"{rep.filter_kind},{n},{mean},{median},{int(point.censored)},"
                    f"{'' if slope is None else repr(slope)}\n"
                )
    if not args.no_figures:
        from . import report

        report.render_scaling_figure(reports, str(out / "scaling.png"))
    _write_manifest(
        out / "manifest.yaml",
        "scaling-study",
        {
            "targets": args.targets,
            "filter": args.filter,
            "timeout_s": args.timeout_s,
            "repetitions": args.repetitions,
            "seed": base_seed,
            "no_figures": args.no_figures,
        },
        None,
    )
    print(f"wrote {out}/scaling.csv")
    return 0


def _random_formation(
    rng: np.random.Generator,
    n_targets: int,
    observers: list[ObserverPose],
    intrinsics: CameraIntrinsics,
    min_separation_px: float,
    max_draws: int = 200,
) -> np.ndarray | None:
    """Random world positions visible to all observers, pairwise separated."""
    for _ in range(max_draws):
        pts = np.column_stack(
            [
                rng.uniform(-2.0, 2.0, n_targets),
                rng.uniform(-1.5, 1.5, n_targets),
                rng.uniform(4.0, 7.0, n_targets),
            ]
        )
        ok = True
        for pose in observers:
            pix = []
            for p in pts:
                try:
                    pp = project(p, pose, intrinsics)
                except BehindCamera:
                    ok = False
                    break
                if not intrinsics.contains(pp):
                    ok = False
                    break
                pix.append(pp.as_array())
            if not ok:
                break
            pix_arr = np.array(pix)
            for i in range(n_targets):
                for j in range(i):
                    if np.linalg.norm(pix_arr[i] - pix_arr[j]) < min_separation_px:
                        ok = False
            if not ok:
                break
        if ok:
            return pts
    return None


def _cmd_consensus_study(args: argparse.Namespace) -> int:
    _apply_manifest(args, "consensus-study")
    out = _output_dir(args)
    base_seed = args.seed if args.seed is not None else 0
    fracs = _parse_float_list(args.noise_fracs, "--noise-fracs")
    intrinsics = CameraIntrinsics()
    ref_std = 2.0

    from .consensus import BroadcastEntry, InitBroadcast
    from scipy.spatial.transform import Rotation

    agreement: dict[float, float] = {}
    rows: list[tuple] = []
    for frac in fracs:
        rng = np.random.default_rng(base_seed + int(frac * 1000))
        agree = 0
        total = 0
        for trial in range(args.trials):
            observers = [ObserverPose(np.zeros(3), np.eye(3))]
            for _ in range(args.observers - 1):
                offset = rng.uniform(-0.5, 0.5, 3)
                rotvec = rng.uniform(-0.08, 0.08, 3)
                observers.append(
                    ObserverPose(offset, Rotation.from_rotvec(rotvec).as_matrix())
                )
            formation = _random_formation(
                rng, args.targets, observers, intrinsics, args.separation_px
            )
            if formation is None:
                raise ScenarioError(
                    "could not draw a separated formation; lower --separation-px"
                )
            broadcast = InitBroadcast(
                BroadcastEntry(i, formation[i]) for i in range(args.targets)
            )
            noise_std = math.sqrt(frac) * ref_std
            for obs_idx, pose in enumerate(observers):
                tracks = []
                for i in range(args.targets):
                    pp = project(formation[i], pose, intrinsics)
                    u, v = pp.u, pp.v
                    if noise_std > 0.0:
                        u += rng.normal(0.0, noise_std)
                        v += rng.normal(0.0, noise_std)
                    tracks.append(TrackEstimate(i, TrackState(u, 0.0, v, 0.0)))
                result = assign_ids(tracks, broadcast, pose, intrinsics)
                for i in range(args.targets):
                    got = result.mapping[i]
                    hit = got == i
                    agree += int(hit)
                    total += 1
                    rows.append((trial, frac, obs_idx, i, got, i, int(hit)))
        agreement[frac] = agree / total if total else 1.0

    with open(out / "consensus.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("trial,noise_frac,observer,track,assigned_id,true_id,agree\n")
        for row in rows:
            trial, frac, obs_idx, track, got, want, hit = row
            fh.write(
                f"{trial},{frac!r},{obs_idx},{track},"
                f"{'' if got is None else got},{want},{hit}\n"
            )
    if not args.no_figures:
        from . import report

        report.render_consensus_figure(agreement, str(out / "consensus.png"))
    _write_manifest(
        out / "manifest.yaml",
        "consensus-study",
        {
            "observers": args.observers,
            "targets": args.targets,
            "trials": args.trials,
            "noise_fracs": args.noise_fracs,
            "separation_px": args.separation_px,
            "seed": base_seed,
            "no_figures": args.no_figures,
        },
        None,
    )
    for frac in sorted(agreement):
        print(f"noise_frac={frac:g}: agreement={agreement[frac]:.3f}")
    print(f"wrote {out}/consensus.csv")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output-dir", default=None, help="output directory (default $MTT_DEFAULT_OUTPUT or ./mtt_output)")
    parser.add_argument("--seed", type=int, default=None, help="base random seed override")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    parser.add_argument("--manifest", default=None, help="replay options recorded in a manifest file")
    parser.add_argument(
        "--allow-large-jpdaf",
        action="store_true",
        help="permit jpdaf beyond its event-explosion guard",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swarmtrack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="track one scenario", parents=[])
    p_run.add_argument("--scenario", default="crossing3", help="builtin name (crossingN) or YAML path")
    p_run.add_argument("--filter", default="all", help="kalman, jpdaf, gmphd, a comma list, or 'all'")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_noise = sub.add_parser("noise-study", help="accuracy under isolated noise axes")
    p_noise.add_argument("--axis", default="all", help="clutter, gauss, miss, or all (the stock grid)")
    p_noise.add_argument("--levels", default=None, help="comma levels for the chosen axis")
    p_noise.add_argument("--filter", default="all")
    p_noise.add_argument("--seeds", type=int, default=10, help="seeds per cell")
    p_noise.add_argument("--targets", type=int, default=3)
    p_noise.add_argument("--parallel", type=int, default=1, help="worker threads for runs")
    _add_common(p_noise)
    p_noise.set_defaults(func=_cmd_noise_study)

    p_scale = sub.add_parser("scaling-study", help="update cost versus target count")
    p_scale.add_argument("--targets", default="2,4,8,16,32", help="comma list of target counts")
    p_scale.add_argument("--filter", default="all")
    p_scale.add_argument("--timeout-s", type=float, default=DEFAULT_TIMEOUT_S)
    p_scale.add_argument("--repetitions", type=int, default=3)
    _add_common(p_scale)
    p_scale.set_defaults(func=_cmd_scaling_study)

    p_cons = sub.add_parser("consensus-study", help="identity agreement across observers")
    p_cons.add_argument("--observers", type=int, default=3)
    p_cons.add_argument("--targets", type=int, default=3)
    p_cons.add_argument("--trials", type=int, default=100)
    p_cons.add_argument("--noise-fracs", default="0,0.25", help="comma list of noise fractions")
    p_cons.add_argument("--separation-px", type=float, default=20.0, help="required pairwise pixel separation")
    _add_common(p_cons)
    p_cons.set_defaults(func=_cmd_consensus_study)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        print(f"config parse error{where}: {exc.problem or exc}", file=sys.stderr)
        return 1
    except (ScenarioError, yaml.YAMLError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TrackingRuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
