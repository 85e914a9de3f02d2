"""Command-line interface: ``sphsoil run | validate | report | preset``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from sphsoil.errors import InvalidArgumentError, ScenarioError
from sphsoil.io import check_config, dump_scenario, load_scenario, read_probes, validate_text
from sphsoil.momentum import FormulationSwitch, PoreWaterForm, StressForm
from sphsoil.report import format_report, probe_report, render_figures, write_report
from sphsoil.runner import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, run_scenario
from sphsoil.scenarios import submerged_foundation, two_side_embankment

PRESETS = {"submerged_foundation": submerged_foundation, "two_side_embankment": two_side_embankment}


def _build_parser():
    parser = argparse.ArgumentParser(prog="sphsoil", description="2D SPH solver for dry and submerged elastic soil.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write outputs")
    run.add_argument("scenario", type=Path)
    run.add_argument("-o", "--output", type=Path, default=Path("out"), help="output directory (default: out)")
    run.add_argument("--formulation", choices=("corrected", "conventional"),
                     help="pore-water pressure gradient form")
    run.add_argument("--stress-form", choices=("rho2", "rhoab"), help="symmetric stress-gradient form")
    run.add_argument("--no-kernel-correction", action="store_true", help="use raw kernel gradients")
    run.add_argument("--xi", type=float, help="damping coefficient for the loading phase")
    run.add_argument("--duration", type=float, help="loading phase length in seconds")
    run.add_argument("--no-early-exit", action="store_true", help="always run the full loading phase")
    run.add_argument("--deterministic", action="store_true", help="byte-identical outputs: manifest without wall time")
    run.add_argument("--seed", type=int, help="seed for the initial position perturbation")
    run.add_argument("--vtk", action="store_true", help="also write legacy VTK snapshots")
    run.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("scenario", type=Path)

    rep = sub.add_parser("report", help="compare the probes of a finished run with the analytic column")
    rep.add_argument("run_dir", type=Path)
    rep.add_argument("--oracle", choices=("analytic", "none"), default="analytic")
    rep.add_argument("--scenario", type=Path, help="scenario file (default: RUN_DIR/scenario.yaml)")
    rep.add_argument("--no-figures", action="store_true")

    pre = sub.add_parser("preset", help="print a built-in scenario as YAML")
    pre.add_argument("name", choices=sorted(PRESETS))
    pre.add_argument("-o", "--output", type=Path, help="write to a file instead of stdout")
    return parser


def _cmd_validate(args):
    try:
        text = args.scenario.read_text()
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    issues = validate_text(text)
    for issue in issues:
        print(issue)
    if any(i.level == "error" for i in issues):
        return EXIT_INVALID
    if not issues:
        print("ok")
    return EXIT_OK


def _apply_overrides(cfg, args):
    changes = {}
    if args.deterministic:
        changes["deterministic"] = True
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.vtk:
        changes["output"] = dataclasses.replace(cfg.output, vtk=True)
    cfg = dataclasses.replace(cfg, **changes) if changes else cfg
    f = cfg.formulation
    switches = FormulationSwitch(
        stress_form=StressForm(args.stress_form or f.stress_form),
        pwater_form=PoreWaterForm(args.formulation or f.pwater),
        kernel_correction=f.kernel_correction and not args.no_kernel_correction,
    )
    return cfg, switches


def _cmd_run(args):
    try:
        cfg = load_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    errors = [i for i in check_config(cfg) if i.level == "error"]
    if errors:
        for issue in errors:
            print(issue, file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg, switches = _apply_overrides(cfg, args)
        result = run_scenario(cfg, args.output, switches=switches, xi=args.xi, duration=args.duration,
                              early_exit=False if args.no_early_exit else None,
                              figures=False if args.no_figures else None)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    m = result.manifest
    print(f"{m['status']}: {m['steps']} steps, t = {m['t_end']:.4f} s, output in {args.output}")
    exp = m["surface_expulsion"]
    print(f"surface separation max {exp['max_separation_m']:.4e} m, uplift max {exp['max_uplift_m']:.4e} m, "
          f"expelled: {'yes' if exp['expelled'] else 'no'}")
    if m.get("probe_report"):
        print(format_report(m["probe_report"]))
    if result.status == EXIT_DIVERGED:
        print(f"error: {m['divergence']['message']}", file=sys.stderr)
    return result.status


def _cmd_report(args):
    scen = args.scenario or args.run_dir / "scenario.yaml"
    try:
        series = read_probes(args.run_dir / "probes.csv")
        cfg = load_scenario(scen) if args.oracle == "analytic" else None
    except (OSError, InvalidArgumentError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = probe_report(series, cfg, oracle=args.oracle)
    write_report(args.run_dir / "probe_report.csv", rows)
    if not args.no_figures:
        render_figures(args.run_dir, series, None, None, rows)
    print(format_report(rows))
    return EXIT_OK


def _cmd_preset(args):
    text = dump_scenario(PRESETS[args.name]())
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "validate": _cmd_validate, "report": _cmd_report, "preset": _cmd_preset}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
