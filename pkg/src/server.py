import sys
import math
import logging
import warnings
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional

from fastmcp import Context, FastMCP

sys.path.append(str(Path(__file__).resolve().parent.parent / 'src'))

from cli import channel_map_report, simulate_report, sweep_rows
from sim_config import SWEEP_AXES, build_settings, default_config_file, load_environment, read_config

# Logging helpers
async def log_info(ctx, msg):
    if ctx is not None and hasattr(ctx, "info"):
        await ctx.info(msg)
    else:
        logging.info(msg)

async def log_warning(ctx, msg):
    if ctx is not None and hasattr(ctx, "warning"):
        await ctx.warning(msg)
    else:
        warnings.warn(msg)

async def log_error(ctx, msg):
    if ctx is not None and hasattr(ctx, "error"):
        await ctx.error(msg)
    else:
        logging.error(msg)

load_environment()

# Initialize MCP server
mcp = FastMCP("Teleporter Channel Server")

SUPPORTED_MODES = ["analytic", "montecarlo"]
MAX_TOOL_TRIALS = 5_000_000


def _clean(value):
    """JSON-safe copy: non-finite floats become None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _settings(overrides: Dict[str, Any]):
    """Defaults, then TELEPORTSIM_CONFIG_FILE, then the tool arguments."""
    path = default_config_file()
    entries = read_config(path) if path else {}
    return build_settings(entries, source=path, overrides=overrides)


def _teleporter_overrides(squeezing_db, phi, gain, efficiency, mean_x, mean_y, mode, n_trials, seed, cutoff_sigma):
    return {
        "teleporter.squeezing_db": squeezing_db,
        "teleporter.phi": "unity" if phi is None else phi,
        "teleporter.gain": gain,
        "teleporter.efficiency": efficiency,
        "teleporter.input.mean_x": mean_x,
        "teleporter.input.mean_y": mean_y,
        "run.mode": mode,
        "run.n_trials": n_trials,
        "run.seed": seed,
        "filter.cutoff_sigma": cutoff_sigma,
    }


@mcp.tool()
async def simulate_teleporter(
    squeezing_db: Annotated[float, "EPR squeezing in dB (both squeezers)."] = 3.0,
    phi: Annotated[Optional[float], "Electronic feed-forward gain; omit to solve for unity gain."] = None,
    gain: Annotated[float, "MBNLA gain g >= 1 (1 = deterministic teleporter)."] = 1.0,
    efficiency: Annotated[float, "Transmission of Bob's arm including detection, in (0, 1]."] = 1.0,
    mean_x: Annotated[float, "Input coherent amplitude <X_in>."] = 1.0,
    mean_y: Annotated[float, "Input coherent amplitude <Y_in>."] = 1.0,
    mode: Annotated[str, f"Evaluation mode, supported: {SUPPORTED_MODES}."] = "analytic",
    n_trials: Annotated[int, "Monte Carlo trials (montecarlo mode only)."] = 100_000,
    seed: Annotated[int, "Monte Carlo seed."] = 0,
    cutoff_sigma: Annotated[float, "Filter cutoff in post-filter standard deviations."] = 5.0,
    ctx: Context = None,
) -> Dict[str, Any]:
    """
    Simulates one operating point of the heralded teleporter.

    Returns:
        dict: output moments, fidelity, Tq/Vq, (tau, nu), channel class, success
        probability and the entanglement of formation of the channel's Choi state.

    Example call:
    {
        "tool": "simulate_teleporter",
        "args": {"squeezing_db": 3.0, "phi": 1.414, "gain": 1.2}
    }
    """
    await log_info(ctx, f"Simulating teleporter at {squeezing_db} dB, g={gain}, mode={mode}")
    if mode not in SUPPORTED_MODES:
        await log_warning(ctx, f"Unsupported mode: {mode}. Supported modes: {SUPPORTED_MODES}. Defaulting to {SUPPORTED_MODES[0]}")
        mode = SUPPORTED_MODES[0]
    if n_trials > MAX_TOOL_TRIALS:
        await log_warning(ctx, f"n_trials={n_trials} capped at {MAX_TOOL_TRIALS}")
        n_trials = MAX_TOOL_TRIALS
    try:
        settings = _settings(_teleporter_overrides(
            squeezing_db, phi, gain, efficiency, mean_x, mean_y, mode, n_trials, seed, cutoff_sigma))
        report = _clean(simulate_report(settings))
        await log_info(ctx, f"Channel: tau={report.get('tau')}, nu={report.get('nu')}")
        return report
    except Exception as e:
        await log_error(ctx, f"Error in teleporter simulation: {e}")
        raise


@mcp.tool()
async def map_channel(
    tau: Annotated[float, "Channel transmissivity tau > 0."],
    nu: Annotated[float, "Added noise nu >= 0 in shot-noise units."],
    r_choi: Annotated[float, "Squeezing parameter of the Choi-state TMSV."] = 2.0,
    ctx: Context = None,
) -> Dict[str, Any]:
    """
    Classifies a Gaussian channel (tau, nu) and reports its TV equivalents and
    the entanglement of formation of its Choi state.

    Example call:
    {
        "tool": "map_channel",
        "args": {"tau": 2.0, "nu": 1.0}
    }
    """
    await log_info(ctx, f"Mapping channel tau={tau}, nu={nu}")
    try:
        report = _clean(channel_map_report(tau, nu, r_choi))
        await log_info(ctx, f"Channel class: {report['classification']}")
        return report
    except Exception as e:
        await log_error(ctx, f"Error in channel mapping: {e}")
        raise


@mcp.tool()
async def sweep_channel(
    axis: Annotated[str, f"Swept parameter, supported: {list(SWEEP_AXES)}."],
    start: Annotated[float, "First axis value."],
    stop: Annotated[float, "Last axis value."],
    steps: Annotated[int, "Number of points (>= 2)."] = 11,
    squeezing_db: Annotated[float, "EPR squeezing in dB."] = 3.0,
    phi: Annotated[Optional[float], "Feed-forward gain; omit to solve for unity gain at each point."] = None,
    gain: Annotated[float, "MBNLA gain g >= 1."] = 1.0,
    efficiency: Annotated[float, "Transmission of Bob's arm in (0, 1]."] = 1.0,
    ctx: Context = None,
) -> List[Dict[str, Any]]:
    """
    Sweeps one teleporter parameter analytically and returns one row per point
    with the same columns as the CLI sweep CSV.

    Example call:
    {
        "tool": "sweep_channel",
        "args": {"axis": "g", "start": 1.0, "stop": 1.4, "steps": 5, "phi": 1.414}
    }
    """
    await log_info(ctx, f"Sweeping {axis} from {start} to {stop} in {steps} steps")
    try:
        overrides = _teleporter_overrides(squeezing_db, phi, gain, efficiency, 1.0, 1.0, "analytic", None, None, None)
        overrides.update({"sweep.axis": axis, "sweep.start": start, "sweep.stop": stop, "sweep.steps": steps})
        rows = _clean(sweep_rows(_settings(overrides)))
        flagged = sum(1 for row in rows if row["warning"])
        if flagged:
            await log_warning(ctx, f"{flagged} of {len(rows)} rows carry warnings")
        return rows
    except Exception as e:
        await log_error(ctx, f"Error in channel sweep: {e}")
        raise


if __name__ == "__main__":
    mcp.run()
