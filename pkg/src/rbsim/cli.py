"""Command-line entry point: ``rbsim run`` and ``rbsim dtc``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .drive import DriveUnit, MachineParams
from .engine import run
from .errors import ProfileError, ScenarioError, SolverError, NumericalDivergenceError, PlacementError
from .profiles import emit_table, emit_timeseries
from .scenario import MODES, load_scenario
from .vehicle import VehicleParams

WAVEFORM_COLUMNS = ["time_s", "T_ref_Nm", "T_e_Nm", "flux_Wb", "i_alpha_A", "i_beta_A", "V_dc_V"]


def format_summary(report) -> str:
    lines = []
    for key in ("accel_kWh", "decel_kWh", "regen_ratio", "chopper_kWh",
                "substation_kWh", "rail_loss_kWh", "accel_J", "decel_J"):
        value = report.summary()[key]
        lines.append(f"{key}: {'absent' if value is None else f'{value:.6g}'}")
    for tr in report.trains:
        ratio = "absent" if tr.regen_ratio is None else f"{tr.regen_ratio:.4f}"
        lines.append(f"{tr.name}.regen_ratio: {ratio}")
    return "\n".join(lines)


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.dt_network:
        overrides["dt_network"] = args.dt_network
    if overrides:
        scenario = scenario.with_(**overrides)
    result = run(scenario)
    summary = format_summary(result.report)
    ledger = result.ledger
    summary += f"\nledger_residual: {ledger.relative_residual:.3e}"
    print(summary)
    if args.out or args.emit_plot_data:
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(summary + "\n")
        if args.emit_plot_data:
            (out / "timeseries.csv").write_text(emit_timeseries(result))
    return 0


def _cmd_dtc(args) -> int:
    machine = MachineParams(J=args.inertia)
    unit = DriveUnit(VehicleParams(), machine, dt=args.dt)
    rows = []
    unit.run(int(round(args.duration / args.dt)), args.vdc, omega_ref=0.0, T_load=0.0,
             torque_ref=args.torque,
             record=lambda t, tr, te, f, i, v: rows.append((t, tr, te, f, i[0], i[1], v)))
    text = emit_table(WAVEFORM_COLUMNS, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", type=Path, help="directory for summary.txt / timeseries.csv")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--dt-network", type=float)
    p.add_argument("--emit-plot-data", action="store_true",
                   help="write the full time series as timeseries.csv")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("dtc", help="torque-step run of a single DTC drive; dumps waveforms")
    p.add_argument("--torque", type=float, default=500.0, help="N*m")
    p.add_argument("--duration", type=float, default=0.5, help="s")
    p.add_argument("--dt", type=float, default=20e-6, help="s")
    p.add_argument("--vdc", type=float, default=650.0, help="V")
    p.add_argument("--inertia", type=float, default=40.0, help="kg*m^2")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_dtc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ProfileError, ScenarioError, PlacementError, SolverError,
            NumericalDivergenceError, OSError, ValueError) as exc:
        print(f"rbsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
