#!/usr/bin/env python3
"""Command-line front end: evaluate, trace, synthesize, plot and audit mechanisms."""

import argparse
import logging
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src import rtclm
from src.errors import (
    ClmError,
    EmptyArchive,
    KinematicFailure,
    MechanismFileError,
    MetricError,
    OptimizationError,
)
from src.kinematics.linkage_core import ParamVector, Topology, check_crank_defect, trace_bt
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target
from src.kinematics.trajectory import (
    LegLayout,
    Trajectory,
    bt_to_wt,
    find_feature_points,
    multi_wt_layout,
)
from src.metrics import performance_report
from src.models import MechanismFile, PerformanceReport, RunConfig
from src.optimization.hier_pipeline import (
    SUBTASKS,
    SWEEP_FIELDS,
    DesignRun,
    HierarchicalPipeline,
    Incumbent,
    PipelineConfig,
    one_at_a_time,
)
from src.optimization.moo import Individual, knee_points
from src.plotting import plot_archive, plot_trajectories
from src.settings import Settings, load_settings
from src.storage import (
    load_layout,
    load_mechanism,
    load_model,
    load_run_config,
    load_target,
    mechanism_file,
    read_archive_jsonl,
    read_trajectory_csv,
    write_archive_jsonl,
    write_json,
    write_manifest,
    write_model,
    write_trajectory_csv,
)

load_dotenv(override=True)

console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_OPTIMIZATION = 3

REPORT_FIELDS = ("h_s", "S", "theta1", "theta2", "I", "h_m", "h_bar", "psi2", "psi4", "mse", "fourier_distance")


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(error, (KinematicFailure, MetricError)) and not isinstance(error, ValueError):
        return EXIT_INFEASIBLE
    if isinstance(error, OptimizationError):
        return EXIT_OPTIMIZATION
    return EXIT_INPUT


def resolve_seed(seed: Optional[int]) -> int:
    """Given seed, or a fresh one from OS entropy."""
    if seed is not None:
        return seed
    return int(np.random.SeedSequence().entropy % (2**32))


def _effective_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    data = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    data.update(extra or {})
    return data


def _command_line(args: argparse.Namespace) -> str:
    parts = [args.command]
    for key, value in sorted(vars(args).items()):
        if key in ("command", "func") or value in (None, False):
            continue
        parts.append(f"--{key}={value}")
    return " ".join(parts)


def _print_report(title: str, report: PerformanceReport, reported: Optional[Dict[str, float]] = None) -> None:
    table = Table(title=title)
    table.add_column("measure", style="cyan")
    table.add_column("computed", justify="right")
    if reported:
        table.add_column("reported", justify="right")
    values = report.model_dump()
    for name in REPORT_FIELDS + ("l_s", "l_w"):
        value = values.get(name)
        if value is None:
            continue
        row = [name, f"{value:.4f}"]
        if reported:
            row.append(f"{reported[name]:.4f}" if name in reported else "")
        table.add_row(*row)
    console.print(table)


def _pipeline_config(args: argparse.Namespace, run_cfg: RunConfig, seed: int) -> PipelineConfig:
    overrides = dict(
        seed=seed,
        population=run_cfg.population,
        generations=run_cfg.generations,
        crossover_fraction=run_cfg.crossover_fraction,
        mutation_fraction=run_cfg.mutation_fraction,
        samples=run_cfg.samples,
        mse_samples=run_cfg.mse_samples,
        knee_pool=run_cfg.knee_pool,
        jobs=args.jobs or run_cfg.jobs,
    )
    if getattr(args, "population", None):
        overrides["population"] = args.population
    if getattr(args, "generations", None):
        overrides["generations"] = args.generations
    if run_cfg.full_budget or getattr(args, "full_budget", False):
        overrides.update(population=200, crossover_fraction=0.125, mutation_fraction=0.125)
    return PipelineConfig.from_settings(**overrides)


def _progress(label_width: int = 12) -> Callable[[str, int, int], None]:
    def progress(stage: str, generation: int, cap: int) -> None:
        if generation % 10 == 0 or generation == cap:
            console.print(f"  [dim]{stage:<{label_width}}[/dim] generation {generation}/{cap}")

    return progress


def _trace(params: ParamVector, mfile: Optional[MechanismFile], n: int, settings: Settings, mode: str = "primary") -> Trajectory:
    if params.topology is Topology.RTCLM:
        design = rtclm.coupling_solve(params)
        return rtclm.trace_mode(design, rtclm.ModeTag(mode), n, period=settings.period)
    return trace_bt(
        params,
        n,
        period=settings.period,
        branches=mfile.branches if mfile else None,
        direction=mfile.direction if mfile else 1,
        jump_factor=settings.branch_jump_factor,
    )


# Commands


def cmd_eval(args: argparse.Namespace) -> int:
    """Full performance report of one mechanism file."""
    settings = load_settings()
    mfile, params = load_mechanism(args.mechanism)
    target = load_target(args.target) if args.target else None
    n = args.n or settings.report_samples

    modes = ["primary"]
    if params.topology is Topology.RTCLM:
        modes = ["primary", "auxiliary"] if args.mode == "both" else [args.mode]

    reports: Dict[str, PerformanceReport] = {}
    for mode in modes:
        bt = _trace(params, mfile, n, settings, mode)
        reports[mode] = performance_report(
            bt,
            target=target,
            mse_samples=settings.mse_samples,
            n_harmonics=settings.fourier_harmonics,
        )

    if args.json:
        payload = {mode: r.model_dump() for mode, r in reports.items()}
        console.print_json(data=payload if len(payload) > 1 else next(iter(payload.values())))
    elif args.csv:
        print("mode," + ",".join(PerformanceReport.model_fields))
        for mode, r in reports.items():
            print(mode + "," + ",".join("" if v is None else f"{v:.9g}" for v in r.model_dump().values()))
    else:
        for mode, r in reports.items():
            title = f"{mfile.label or Path(args.mechanism).stem} ({params.topology.value}"
            title += f", {mode})" if params.topology is Topology.RTCLM else ")"
            _print_report(title, r, mfile.reported)
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    """Write the BT, optionally the WT and a positioned multi-leg layout."""
    started = time.perf_counter()
    settings = load_settings()
    mfile, params = load_mechanism(args.mechanism)
    out = Path(args.out)
    bt = _trace(params, mfile, args.n, settings, args.mode)
    outputs: List[Path] = [write_trajectory_csv(out / "bt.csv", bt)]

    fp = find_feature_points(bt)
    if args.wt:
        outputs.append(write_trajectory_csv(out / "wt.csv", bt_to_wt(bt, fp), phase="swing"))
    if args.layout:
        layout: LegLayout = load_layout(args.layout)
        result = multi_wt_layout(bt, fp, layout)
        for pw in result.wts:
            outputs.append(write_trajectory_csv(out / f"wt_{pw.leg}.csv", pw.wt, phase="swing"))
        outputs.append(write_json(out / "layout.json", {"dx": result.dx, "gait": layout.gait}))

    write_manifest(out, _command_line(args), _effective_config(args), outputs, time.perf_counter() - started)
    console.print(f"[green][OK][/green] wrote {len(outputs)} file(s) to {out}")
    return EXIT_OK


def _reported(inc: Incumbent) -> Dict[str, float]:
    values = dict(inc.measures)
    if inc.report is not None:
        values.update({k: v for k, v in inc.report.model_dump().items() if v is not None})
    return values


def _write_design_run(run: DesignRun, out: Path) -> List[Path]:
    outputs: List[Path] = [write_json(out / "config.json", asdict(run.config))]
    for key, inc in run.incumbents.items():
        label = f"{run.topology.value.lower()}-{key}"
        branches = [inc.branch] + [1] * (run.topology.dyad_count - 1)
        mfile = mechanism_file(inc.params, label=label, source="synth", reported=_reported(inc), branches=branches)
        outputs.append(write_model(out / f"{key}.json", mfile))
        bt = trace_bt(inc.params, run.config.samples, period=run.config.period, branches=mfile.branches)
        outputs.append(write_trajectory_csv(out / f"trace_{key}.csv", bt))
    for key, archive in run.archives.items():
        outputs.append(write_archive_jsonl(out / f"archive_{key}.jsonl", archive))
    report = {key: inc.report.model_dump() for key, inc in run.incumbents.items() if inc.report}
    outputs.append(write_json(out / "report.json", report))
    if "s1" in run.archives and len(run.archives["s1"]):
        members = [m for m in run.archives["s1"].individuals if not m.failed]
        if members:
            knee = knee_points(members, k=1)[0].objectives[:2]
            objectives = np.array([m.objectives for m in members])
            outputs.append(plot_archive(objectives, out / "front_s1.svg", SUBTASKS["s1"].objectives, tuple(knee)))
    return outputs


def cmd_synth(args: argparse.Namespace) -> int:
    """Hierarchical (or single-level) synthesis toward a target trajectory."""
    started = time.perf_counter()
    seed = resolve_seed(args.seed)
    run_cfg = load_run_config(args.config)
    cfg = _pipeline_config(args, run_cfg, seed)
    target = load_target(args.target) if args.target else cycloid_bt_target(CycloidSpec(), cfg.samples)
    topology = Topology(args.topology)
    out = Path(args.out)

    console.print(
        Panel(
            f"[bold blue]{topology.value}[/bold blue] synthesis\n"
            f"[dim]population {cfg.population}, {cfg.generations} generations, seed {seed}[/dim]",
            style="blue",
        )
    )
    pipeline = HierarchicalPipeline(topology, target, cfg, progress_callback=_progress())
    config = _effective_config(args, {"seed": seed, "pipeline": asdict(cfg)})

    if args.single_level:
        result = pipeline.run_single_level()
        outputs = [write_archive_jsonl(out / "archive_single_level.jsonl", result.archive)]
        for name, member in result.selected.items():
            inc = pipeline.attach_report(pipeline._incumbent(member.genome, SUBTASKS["s1"]))
            mfile = mechanism_file(inc.params, label=f"single-level-{name}", source="synth", reported=_reported(inc))
            outputs.append(write_model(out / f"selected_{name}.json", mfile))
    else:
        x0 = None
        if args.x0:
            _, x0 = load_mechanism(args.x0)
        run = pipeline.run(x0=x0)
        outputs = _write_design_run(run, out)
        table = Table(title="Incumbents")
        for column in ("design", "MSE (mm)", "f2", "f3", "h_s (mm)", "I (mm/s)"):
            table.add_column(column, justify="right")
        for key, inc in run.incumbents.items():
            m = inc.measures
            table.add_row(key, *(f"{m[k]:.3f}" for k in ("f1", "f2", "f3", "f4", "f5")))
        console.print(table)

    write_manifest(out, _command_line(args), config, outputs, time.perf_counter() - started, seed=seed)
    console.print(f"[green][OK][/green] design run written to {out}")
    return EXIT_OK


def cmd_rtclm(args: argparse.Namespace) -> int:
    """Stepwise seven-bar design toward crossing-height targets."""
    started = time.perf_counter()
    settings = load_settings()
    seed = resolve_seed(args.seed)
    run_cfg = load_run_config(args.config)
    cfg = rtclm.StepwiseConfig(
        population=args.population or run_cfg.population or 50,
        generations=args.generations or run_cfg.generations or 50,
        crossover_fraction=run_cfg.crossover_fraction or 2.0 / 13.0,
        mutation_fraction=run_cfg.mutation_fraction or 2.0 / 13.0,
        seed=seed,
        samples=run_cfg.samples or settings.optimization_samples,
        period=settings.period,
        jobs=args.jobs or run_cfg.jobs or settings.jobs,
    )
    targets = (args.h6, args.h4)
    out = Path(args.out)
    if rtclm.is_extrapolation(targets):
        console.print("[yellow]Targets outside the demonstrated range (h6 = 50, h4 in [220, 300]); extrapolating[/yellow]")

    result = rtclm.stepwise_optimize(targets, cfg, progress_callback=_progress())
    ev = result.evaluation
    outputs: List[Path] = []
    mfile = mechanism_file(
        result.params,
        label=f"rtclm-h4-{args.h4:g}",
        source="rtclm",
        reported={"h6": ev.h6, "h4": ev.h4, "f1": ev.f1, "f2": ev.f2},
        derived=ev.design.derived() if ev.design else None,
        targets={"h6": args.h6, "h4": args.h4},
    )
    outputs.append(write_model(out / "design.json", mfile))
    for key, archive in result.archives.items():
        outputs.append(write_archive_jsonl(out / f"archive_{key}.jsonl", archive))

    status = "ok" if result.reached else "target_unreached"
    config = _effective_config(args, {"seed": seed, "stepwise": asdict(cfg)})
    write_manifest(
        out,
        _command_line(args),
        config,
        outputs,
        time.perf_counter() - started,
        seed=seed,
        status=status,
        extrapolation=result.extrapolation,
    )

    table = Table(title="Seven-bar crossing heights")
    for column in ("height", "target (mm)", "achieved (mm)", "deviation (mm)"):
        table.add_column(column, justify="right")
    table.add_row("h6", f"{args.h6:.2f}", f"{ev.h6:.3f}", f"{abs(ev.h6 - args.h6):.3f}")
    table.add_row("h4", f"{args.h4:.2f}", f"{ev.h4:.3f}", f"{abs(ev.h4 - args.h4):.3f}")
    console.print(table)
    if not result.reached:
        console.print("[red][FAILED][/red] thresholds not reached; best-so-far written")
        return EXIT_OPTIMIZATION
    console.print(f"[green][OK][/green] design written to {out}")
    return EXIT_OK


def _archive_individuals(path: Path) -> List[Individual]:
    return [
        Individual(
            genome=np.array(rec.genome),
            objectives=np.array(rec.objectives),
            constraint_violations=np.array(rec.violations),
            rank=rec.rank,
            generation=rec.generation,
        )
        for rec in read_archive_jsonl(path)
    ]


def cmd_plot(args: argparse.Namespace) -> int:
    """Trajectory overlay from CSVs, or objective scatter from an archive."""
    inputs = [Path(p) for p in args.inputs]
    if all(p.suffix == ".csv" for p in inputs):
        curves = {p.stem: read_trajectory_csv(p) for p in inputs}
        plot_trajectories(curves, Path(args.svg), title=args.title or "Trajectories")
    elif len(inputs) == 1 and inputs[0].suffix == ".jsonl":
        members = _archive_individuals(inputs[0])
        if not members:
            raise EmptyArchive("empty archive")
        front = [m for m in members if m.rank == 0] or members
        knee = knee_points(front, k=1)[0].objectives[:2] if len(front[0].objectives) > 1 else None
        plot_archive(
            np.array([m.objectives for m in members]),
            Path(args.svg),
            knee=tuple(knee) if knee is not None else None,
            title=args.title or inputs[0].stem,
        )
    else:
        raise MechanismFileError("plot takes CSV trajectories or a single JSONL archive")
    console.print(f"[green][OK][/green] wrote {args.svg}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """One-at-a-Time sweep of one algorithm setting over subtask 1."""
    started = time.perf_counter()
    seed = resolve_seed(args.seed)
    cfg = _pipeline_config(args, load_run_config(args.config), seed)
    _, x0 = load_mechanism(args.x0)
    target = load_target(args.target) if args.target else cycloid_bt_target(CycloidSpec(), cfg.samples)
    points = one_at_a_time(x0, target, cfg, args.field, args.values)

    out = Path(args.out)
    outputs = [write_json(out / "sweep.json", [asdict(p) for p in points])]
    write_manifest(out, _command_line(args), _effective_config(args, {"seed": seed}), outputs, time.perf_counter() - started, seed=seed)

    table = Table(title=f"One-at-a-Time: {args.field}")
    for column in ("value", "MSE", "f2", "f3", "hypervolume"):
        table.add_column(column, justify="right")
    for p in points:
        table.add_row(f"{p.value:g}", *(f"{v:.3f}" for v in p.objectives), f"{p.hypervolume:.4g}")
    console.print(table)
    return EXIT_OK


def _check_one(path: Path, target: Trajectory, settings: Settings) -> Optional[Dict[str, Any]]:
    try:
        mfile = load_model(path, MechanismFile)
    except MechanismFileError:
        return None
    row: Dict[str, Any] = {
        "file": path.name,
        "label": mfile.label,
        "suspect": mfile.suspect,
        "mismatch": mfile.mismatch,
    }
    try:
        _, params = load_mechanism(path)
        defects = check_crank_defect(params, n_sweep=settings.report_samples, branches=mfile.branches)
        row["defects_ok"] = defects.ok
        bt = _trace(params, mfile, settings.report_samples, settings)
        report = performance_report(bt, target=target, mse_samples=settings.mse_samples)
        computed = report.model_dump()
        if params.topology is Topology.RTCLM:
            aux = _trace(params, mfile, settings.report_samples, settings, "auxiliary")
            computed["h6"] = report.h_m
            computed["h4"] = performance_report(aux).h_m
        row["computed"] = {k: computed[k] for k in mfile.reported if computed.get(k) is not None}
    except ClmError as e:
        row["error"] = f"{type(e).__name__}: {e}"
    row["reported"] = dict(mfile.reported)
    return row


def cmd_check(args: argparse.Namespace) -> int:
    """Defect audit and reported-vs-computed comparison over fixture files."""
    settings = load_settings()
    root = Path(args.fixtures or settings.fixtures)
    if not root.is_dir():
        raise MechanismFileError(f"Fixture directory {root} not found")
    target = cycloid_bt_target(CycloidSpec(), settings.mse_samples)

    rows = [r for r in (_check_one(p, target, settings) for p in sorted(root.glob("*.json"))) if r]
    table = Table(title=f"Fixture check ({root})")
    for column in ("file", "defects", "measure", "reported", "computed"):
        table.add_column(column)
    for row in rows:
        status = "[red]error[/red]" if "error" in row else ("[green]ok[/green]" if row.get("defects_ok") else "[yellow]defect[/yellow]")
        name = row["file"] + (" (suspect)" if row["suspect"] else "") + (" (mismatch)" if row["mismatch"] else "")
        if "error" in row:
            table.add_row(name, status, "", "", row["error"])
            continue
        for key, value in row["reported"].items():
            computed = row["computed"].get(key)
            table.add_row(name, status, key, f"{value:.3f}", "" if computed is None else f"{computed:.3f}")
            name, status = "", ""
    console.print(table)
    for row in rows:
        if row["mismatch"]:
            console.print(f"[yellow]{row['file']}[/yellow] known mismatch: {row['mismatch']}")
    if args.json:
        write_json(Path(args.json), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clm", description="Closed-chain legged mechanism design toolkit")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seeded: bool = False) -> None:
        p.add_argument("--config", type=Path, help="Run configuration JSON")
        p.add_argument("--jobs", type=int, help="Parallel evaluation workers")
        if seeded:
            p.add_argument("--seed", type=int, help="Root random seed (default: OS entropy)")

    p = sub.add_parser("eval", help="Performance report of a mechanism")
    p.add_argument("mechanism", type=Path)
    p.add_argument("--target", type=Path, help="Target file enabling MSE and Fourier distance")
    p.add_argument("--n", type=int, help="Crank samples")
    p.add_argument("--mode", choices=["primary", "auxiliary", "both"], default="primary")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="Write bench / walking trajectory CSVs")
    p.add_argument("mechanism", type=Path)
    p.add_argument("--n", type=int, default=360)
    p.add_argument("--wt", action="store_true", help="Also write the walking trajectory")
    p.add_argument("--layout", type=Path, help="Layout file for positioned multi-leg WTs")
    p.add_argument("--mode", choices=["primary", "auxiliary"], default="primary")
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth", help="Hierarchical trajectory synthesis")
    p.add_argument("--topology", default="StephensonI", choices=[t.value for t in Topology if t is not Topology.RTCLM])
    p.add_argument("--target", type=Path)
    p.add_argument("--x0", type=Path, help="Start from this mechanism instead of predesign")
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--full-budget", action="store_true", help="Population 200, fractions 1/8")
    p.add_argument("--single-level", action="store_true", help="Five-objective baseline")
    p.add_argument("--out", type=Path, required=True)
    common(p, seeded=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rtclm", help="Stepwise seven-bar design")
    p.add_argument("--h6", type=float, required=True, help="Primary-mode crossing height target (mm)")
    p.add_argument("--h4", type=float, required=True, help="Auxiliary-mode crossing height target (mm)")
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--out", type=Path, required=True)
    common(p, seeded=True)
    p.set_defaults(func=cmd_rtclm)

    p = sub.add_parser("plot", help="SVG of trajectories or an archive")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--svg", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sweep", help="One-at-a-Time sensitivity sweep")
    p.add_argument("--x0", type=Path, required=True)
    p.add_argument("--field", choices=SWEEP_FIELDS, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--target", type=Path)
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--out", type=Path, required=True)
    common(p, seeded=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="Audit fixtures against reported values")
    p.add_argument("--fixtures", type=Path, help="Fixture directory (default CLM_FIXTURES)")
    p.add_argument("--json", help="Also write the comparison to this file")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        level = logging.DEBUG if args.verbose else getattr(logging, load_settings().log_level.upper(), logging.INFO)
    except ValueError:
        level = logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    try:
        return args.func(args)
    except EmptyArchive as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_INPUT
    except (ClmError, ValueError, OSError) as e:
        code = exit_code_for(e)
        console.print(f"[red]Error ({type(e).__name__}): {e}[/red]")
        logger.debug("command failed", exc_info=True)
        return code
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted; no manifest written[/yellow]")
        return EXIT_OPTIMIZATION


if __name__ == "__main__":
    raise SystemExit(main())
