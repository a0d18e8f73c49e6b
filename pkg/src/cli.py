"""
Command-line front end.

    python src/cli.py simulate --config run.conf [--mode analytic|mc] [--seed N] [--out report.json]
    python src/cli.py sweep --config sweep.conf [--out table.csv]
    python src/cli.py channel-map --tau 1 --nu 0

Exit codes: 0 ok, 2 configuration or validation error, 3 runtime error.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

sys.path.insert(0, str(Path(__file__).resolve().parent))

from channel import (
    ChannelParams,
    choi_state,
    classify,
    entanglement_of_formation,
    is_physical_channel,
    taunu_to_tv,
    tv_to_taunu,
)
from errors import ConfigError, SimulationError
from gaussian_core import EPRSpec, db_to_r
from mbnla import FilterSpec
from montecarlo import expected_success_probability, run_trials, suggest_cutoff
from sim_config import SimulationSettings, load_environment, load_settings, log_level
from teleporter import (
    TeleporterConfig,
    fidelity,
    input_moments,
    output_moments,
    tv_parameters,
    unity_gain_phis,
)

logger = logging.getLogger("teleportsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
CSV_HEADER = [
    "step", "axis_value", "mean_x", "mean_y", "var_x", "var_y", "Tq", "Vq",
    "tau", "nu", "tau_err", "nu_err", "p_success", "n_accepted", "fidelity", "eof_choi",
    "warning",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return ""
    return f"{float(value):.12g}"


def _choi_eof(params: Optional[ChannelParams], r_choi: float, notes: List[str]) -> Optional[float]:
    if params is None:
        return None
    if not is_physical_channel(params):
        notes.append("non-physical channel, no Choi E_F")
        return None
    return entanglement_of_formation(choi_state(params, r_choi))


def evaluate(cfg: TeleporterConfig, spec: FilterSpec, settings: SimulationSettings) -> Dict[str, object]:
    """
    One operating point in the configured mode. Returns a row keyed by the CSV
    columns; estimator cells are None when they cannot be formed, with the
    reason in "warning".
    """
    notes: List[str] = []
    row: Dict[str, object] = {k: None for k in CSV_HEADER}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if settings.run.mode == "analytic":
            moments = output_moments(cfg)
            tv = tv_parameters(cfg)
            row["p_success"] = expected_success_probability(cfg, spec)
        else:
            batch = run_trials(cfg, spec, settings.run.n_trials, settings.run.seed,
                               resamples=settings.run.bootstrap)
            row["p_success"] = batch.p_success_hat
            row["n_accepted"] = batch.n_accepted
            est = batch.estimate
            if est is None:
                notes.append(f"only {batch.n_accepted} accepted trials, no estimators")
                moments = tv = None
            else:
                moments, tv = est.moments, est.tv
                if est.params is not None:
                    row["tau_err"], row["nu_err"] = est.tau_err, est.nu_err

        params = None
        if tv is not None:
            try:
                params = tv_to_taunu(*tv)
            except ValueError as e:
                notes.append(str(e))
        if moments is not None:
            row.update(mean_x=moments.mean_x, mean_y=moments.mean_y, var_x=moments.var_x,
                       var_y=moments.var_y, fidelity=fidelity(input_moments(cfg), moments))
        if tv is not None:
            row.update(Tq=tv.t_q, Vq=tv.v_q)
        if params is not None:
            row.update(tau=params.tau, nu=params.nu)
        row["eof_choi"] = _choi_eof(params, settings.r_choi, notes)

    for w in caught:
        notes.append(str(w.message))
    row["warning"] = "; ".join(dict.fromkeys(notes))
    return row


def _point(settings: SimulationSettings, axis: str, value: float):
    cfg, g = settings.teleporter, settings.filter.g
    if axis == "phi":
        cfg = cfg.replace(phi_x=value, phi_y=value)
    elif axis == "g":
        g = value
        cfg = cfg.replace(g=value)
    elif axis == "r_db":
        cfg = cfg.replace(epr=EPRSpec.symmetric(db_to_r(value)))
    elif axis == "efficiency":
        cfg = cfg.replace(efficiency=value)
    if settings.unity_phi and axis != "phi":
        phi_x, phi_y = unity_gain_phis(cfg)
        cfg = cfg.replace(phi_x=phi_x, phi_y=phi_y)
    if settings.cutoff_sigma is not None:
        spec = FilterSpec(g, suggest_cutoff(cfg, g, settings.cutoff_sigma))
    else:
        spec = FilterSpec(g, settings.filter.alpha_c)
    return cfg, spec


def sweep_rows(settings: SimulationSettings) -> List[Dict[str, object]]:
    if settings.sweep is None:
        raise ConfigError("no sweep section (sweep.axis, sweep.start, sweep.stop, sweep.steps)",
                          source=settings.source)
    rows = []
    for step, value in enumerate(settings.sweep.values()):
        cfg, spec = _point(settings, settings.sweep.axis, value)
        row = evaluate(cfg, spec, settings)
        row.update(step=step, axis_value=value)
        rows.append(row)
        logger.info("step %d: %s=%.6g tau=%s nu=%s", step, settings.sweep.axis, value, row["tau"], row["nu"])
    return rows


def write_csv(rows: List[Dict[str, object]], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([row["warning"] if k == "warning" else _fmt(row[k]) for k in CSV_HEADER])


def simulate_report(settings: SimulationSettings) -> Dict[str, object]:
    """Single-run report; montecarlo runs also carry the analytic values for comparison."""
    cfg = settings.teleporter
    row = evaluate(cfg, settings.filter, settings)
    report: Dict[str, object] = {
        "mode": settings.run.mode,
        "phi": [cfg.phi_x, cfg.phi_y],
        "g": settings.filter.g,
        "alpha_c": settings.filter.alpha_c,
        **{k: row[k] for k in CSV_HEADER if k not in ("step", "axis_value")},
    }
    if row["tau"] is not None:
        cls = classify(ChannelParams(row["tau"], row["nu"]))
        report["classification"] = cls.tag.value
        report["chi"] = cls.chi
    if settings.run.mode == "montecarlo":
        analytic_settings = _with_mode(settings, "analytic")
        ref = evaluate(cfg, settings.filter, analytic_settings)
        report["analytic"] = {k: ref[k] for k in ("mean_x", "mean_y", "var_x", "var_y", "Tq", "Vq", "tau", "nu", "p_success")}
    return report


def _with_mode(settings: SimulationSettings, mode: str) -> SimulationSettings:
    return replace(settings, run=replace(settings.run, mode=mode))


def channel_map_report(tau: float, nu: float, r_choi: float = 2.0) -> Dict[str, object]:
    params = ChannelParams(tau, nu)
    cls = classify(params)
    t_q, v_q = taunu_to_tv(params)
    report = {
        "tau": tau,
        "nu": nu,
        "classification": cls.tag.value,
        "chi": cls.chi,
        "physical": is_physical_channel(params),
        "Tq": t_q,
        "Vq": v_q,
        "eof_choi": None,
    }
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if report["physical"]:
            report["eof_choi"] = entanglement_of_formation(choi_state(params, r_choi))
    return report


def _print_report(report: Dict[str, object], stream) -> None:
    width = max(len(k) for k in report)
    for k, v in report.items():
        if isinstance(v, dict):
            stream.write(f"{k}:\n")
            for kk, vv in v.items():
                stream.write(f"  {kk:<{width}} {_fmt(vv) if isinstance(vv, float) else vv}\n")
        else:
            stream.write(f"{k:<{width}} {_fmt(v) if isinstance(v, float) else v}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teleportsim", description="Heralded CV teleporter channel simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="single operating point")
    p_sweep = sub.add_parser("sweep", help="one-dimensional parameter sweep to CSV")
    for p in (p_sim, p_sweep):
        p.add_argument("--config", help="config file (key-value, YAML or JSON)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--mode", choices=("analytic", "mc", "montecarlo"), help="override run.mode")
        p.add_argument("--out", help="output path")

    p_map = sub.add_parser("channel-map", help="classify a (tau, nu) pair")
    p_map.add_argument("--tau", type=float, required=True)
    p_map.add_argument("--nu", type=float, required=True)
    p_map.add_argument("--r-choi", type=float, default=2.0)
    p_map.add_argument("--out", help="write the report as JSON")
    return parser


def _load(args) -> SimulationSettings:
    overrides = {"run.seed": args.seed, "run.mode": args.mode}
    return load_settings(args.config, overrides=overrides)


def _emit_report(report, out: Optional[str]) -> None:
    _print_report(report, sys.stdout)
    if out:
        Path(out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    _emit_report(simulate_report(_load(args)), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings = _load(args)
    rows = sweep_rows(settings)
    out = args.out or (settings.sweep.output if settings.sweep else None)
    buf = io.StringIO()
    write_csv(rows, buf)
    if out:
        Path(out).write_text(buf.getvalue())
        logger.info("wrote %d rows to %s", len(rows), out)
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_channel_map(args) -> int:
    _emit_report(channel_map_report(args.tau, args.nu, args.r_choi), args.out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "channel-map": cmd_channel_map}


def main(argv=None) -> int:
    load_environment()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
