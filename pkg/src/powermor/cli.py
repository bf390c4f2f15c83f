"""Command-line front end: power flow, reduction, simulation, comparison.

Four subcommands (`pf`, `reduce`, `simulate`, `compare`) share one JSON
config passed with --config; every config field can be overridden by a
same-named flag, with precedence flag > config > default.  Outputs are
CSV/JSON files using 15-significant-digit decimal text, plus PNG figures
unless --no-plots is given, all written to the configured output directory.

Exit codes: 0 success, 2 usage/file errors, 3 power-flow divergence,
4 reduction/algorithm errors, 5 simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    OrderTooLarge,
    ParseError,
    PowermorError,
    PowerFlowDiverged,
    SimulationDiverged,
    ValidationError,
)
from .lti import (
    eig,
    format_number,
    json_round,
    simulate_linear,
    trajectory_to_csv,
)
from .metrics import mode_error_table, sweep_pair, traj_error, write_mode_table, write_sweep
from .modal import modal_reduce, save_reduced_model
from .power import (
    FaultScenario,
    SimConfig,
    build_ybus,
    fault_disturbance,
    init_generators,
    linearize_swing,
    load_admittances,
    load_network,
    reduce_to_internal_nodes,
    relative_swing_model,
    simulate_fault,
    solve_power_flow,
    write_pf_csv,
    write_swing_csv,
)
from .svdkrylov import svd_krylov_reduce, write_convergence_trace

DEFAULT_NETWORK = "data/new_england_39.json"
METHODS = ("modal-residualization", "modal-truncation", "svd-krylov")
CRITERIA = ("modulus", "re")

_TOP_KEYS = {"network_path", "output_dir", "plots", "scenario", "sim", "reduction"}
_SCENARIO_KEYS = {"faulted_bus", "t_on", "t_clear"}
_SIM_KEYS = {"dt", "horizon"}
_REDUCTION_KEYS = {"method", "r", "criterion", "channel", "tol", "max_iter", "orthogonalize"}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation.

    ``channel`` is stored 0-based as (input_index, output_index); config
    files and flags use 1-based indices.  ``scenario`` is None for a
    no-fault run.
    """

    network_path: str
    output_dir: str
    plots: bool
    scenario: FaultScenario | None
    sim: SimConfig
    method: str
    r: int
    criterion: str
    channel: tuple
    tol: float
    max_iter: int
    orthogonalize: bool


# ---------------------------------------------------------------------------
# config assembly


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValidationError(f"unknown {where} keys: {', '.join(unknown)}", field=where)


def _load_config_doc(path: str | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path}: invalid JSON: {exc}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config {path}: root must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    for key, allowed in (("scenario", _SCENARIO_KEYS), ("sim", _SIM_KEYS), ("reduction", _REDUCTION_KEYS)):
        sub = doc.get(key)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ValidationError(f"config {key!r} must be an object", field=key)
        _check_keys(sub, allowed, key)
    return doc


def _pick(flag_value, doc: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in doc and doc[key] is not None:
        return doc[key]
    return default


def _parse_channel(value) -> tuple:
    """1-based [input, output] pair (JSON list or 'i,j' flag text) -> 0-based."""
    if isinstance(value, str):
        parts = value.split(",")
    else:
        parts = list(value) if isinstance(value, (list, tuple)) else [value]
    if len(parts) != 2:
        raise ValidationError("channel must be [input_index, output_index]", field="channel")
    try:
        ch_in, ch_out = (int(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"channel indices must be integers: {value!r}", field="channel") from exc
    if ch_in < 1 or ch_out < 1:
        raise ValidationError("channel indices are 1-based and must be >= 1", field="channel")
    return (ch_in - 1, ch_out - 1)


def build_config(args: argparse.Namespace) -> RunConfig:
    doc = _load_config_doc(getattr(args, "config", None))

    scen_doc = doc.get("scenario")
    scenario_flags = [getattr(args, name, None) for name in ("faulted_bus", "t_on", "t_clear")]
    if getattr(args, "no_fault", False):
        scenario = None
    elif scen_doc is None and "scenario" in doc and not any(v is not None for v in scenario_flags):
        scenario = None
    else:
        sd = scen_doc or {}
        scenario = FaultScenario(
            faulted_bus=int(_pick(scenario_flags[0], sd, "faulted_bus", 3)),
            t_on=float(_pick(scenario_flags[1], sd, "t_on", 1.0)),
            t_clear=float(_pick(scenario_flags[2], sd, "t_clear", 1.1)),
        )

    sim_doc = doc.get("sim") or {}
    sim = SimConfig(
        dt=float(_pick(getattr(args, "dt", None), sim_doc, "dt", 0.005)),
        horizon=float(_pick(getattr(args, "horizon", None), sim_doc, "horizon", 20.0)),
    )

    red_doc = doc.get("reduction") or {}
    method = str(_pick(getattr(args, "method", None), red_doc, "method", "modal-residualization"))
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}", field="method")
    criterion = str(_pick(getattr(args, "criterion", None), red_doc, "criterion", "modulus"))
    if criterion not in CRITERIA:
        raise ValidationError(f"unknown criterion {criterion!r}; expected one of {', '.join(CRITERIA)}", field="criterion")
    r = int(_pick(getattr(args, "r", None), red_doc, "r", 10))
    if r < 1:
        raise ValidationError("r must be >= 1", field="r")
    tol = float(_pick(getattr(args, "tol", None), red_doc, "tol", 1e-6))
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    max_iter = int(_pick(getattr(args, "max_iter", None), red_doc, "max_iter", 100))
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1", field="max_iter")
    channel = _parse_channel(_pick(getattr(args, "channel", None), red_doc, "channel", [1, 1]))
    orthogonalize = bool(_pick(getattr(args, "orthogonalize", None), red_doc, "orthogonalize", True))

    cfg = RunConfig(
        network_path=str(_pick(getattr(args, "network_path", None), doc, "network_path", DEFAULT_NETWORK)),
        output_dir=str(_pick(getattr(args, "output_dir", None), doc, "output_dir", "out")),
        plots=bool(_pick(getattr(args, "plots", None), doc, "plots", True)),
        scenario=scenario,
        sim=sim,
        method=method,
        r=r,
        criterion=criterion,
        channel=channel,
        tol=tol,
        max_iter=max_iter,
        orthogonalize=orthogonalize,
    )
    _check_timing(cfg)
    return cfg


def _check_timing(cfg: RunConfig) -> None:
    """Fault times must land on the integration grid and inside the horizon."""
    if cfg.scenario is None:
        return
    if cfg.sim.horizon <= cfg.scenario.t_clear:
        raise ValidationError("horizon must exceed t_clear", field="horizon")
    for name, value in (("t_on", cfg.scenario.t_on), ("t_clear", cfg.scenario.t_clear)):
        k = round(value / cfg.sim.dt)
        if abs(k * cfg.sim.dt - value) > 1e-9 * max(1.0, abs(value)):
            raise ValidationError(
                f"{name} = {value} does not land on the dt = {cfg.sim.dt} grid", field=name
            )


def _validate_against_network(cfg: RunConfig, network) -> None:
    if cfg.scenario is not None and cfg.scenario.faulted_bus not in network.bus_ids:
        raise ValidationError(
            f"faulted_bus {cfg.scenario.faulted_bus} is not a bus of {cfg.network_path}",
            field="faulted_bus",
        )


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _operating_point(network):
    pf = solve_power_flow(network)
    gens = init_generators(network, pf)
    ybus = build_ybus(network)
    yload = load_admittances(network, pf)
    yred_pre = reduce_to_internal_nodes(ybus, gens, yload, network.bus_ids)
    return pf, gens, ybus, yload, yred_pre


def _full_model(cfg: RunConfig, network, gens, yred_pre):
    # svd-krylov needs a strictly stable model, so it works on the
    # machine-1-relative form; the modal methods use absolute angles.
    if cfg.method == "svd-krylov":
        return relative_swing_model(gens, yred_pre, network.omega_s)
    return linearize_swing(gens, yred_pre, network.omega_s)


def _check_channel(cfg: RunConfig, model) -> None:
    ch_in, ch_out = cfg.channel
    if ch_in >= model.m or ch_out >= model.p:
        raise ValidationError(
            f"channel (input {ch_in + 1}, output {ch_out + 1}) out of range for a model "
            f"with {model.m} inputs and {model.p} outputs",
            field="channel",
        )


def _do_reduce(cfg: RunConfig, full):
    """Run the configured reduction.  Returns (ReducedModel, SvdKrylovResult | None)."""
    if not 1 <= cfg.r < full.n:
        raise OrderTooLarge(f"r = {cfg.r} must satisfy 1 <= r < n = {full.n}", r=cfg.r, n=full.n)
    _check_channel(cfg, full)
    if cfg.method == "svd-krylov":
        result = svd_krylov_reduce(
            full,
            cfg.r,
            channel=cfg.channel,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            orthogonalize=cfg.orthogonalize,
        )
        return result.reduced, result
    reduced = modal_reduce(full, cfg.r, criterion=cfg.criterion, method=cfg.method)
    return reduced, None


def _disturbance(cfg: RunConfig, network, gens, ybus, yload, yred_pre, full):
    """Input samples for the full linear model and for the reduced one.

    The modal lane drives every machine with the fault-equivalent power
    pulse; the single-input svd-krylov lane restricts the pulse to the
    configured input channel on both sides so the comparison is like for
    like.
    """
    steps = int(round(cfg.sim.horizon / cfg.sim.dt))
    if cfg.scenario is None:
        u = np.zeros((steps + 1, full.m))
    else:
        yred_fault = reduce_to_internal_nodes(
            ybus, gens, yload, network.bus_ids, grounded_buses=(cfg.scenario.faulted_bus,)
        )
        u = fault_disturbance(gens, yred_pre, yred_fault, cfg.scenario, cfg.sim)
    ch_in = cfg.channel[0]
    if cfg.method == "svd-krylov":
        u_full = np.zeros_like(u)
        u_full[:, ch_in] = u[:, ch_in]
        u_reduced = u[:, [ch_in]]
    else:
        u_full = u
        u_reduced = u
    return u_full, u_reduced


def _reduced_entry(cfg: RunConfig) -> tuple:
    """(output, input) entry to inspect on the reduced model."""
    ch_in, ch_out = cfg.channel
    if cfg.method == "svd-krylov":
        return (ch_out, 0)  # reduced model has the channel input only
    return (ch_out, ch_in)


def _write_partial_swing(exc: SimulationDiverged, path: Path, ng: int) -> None:
    """Salvage the finite prefix of a blown-up run, ending with a marker row."""
    states = exc.details.get("partial_states")
    dt = exc.details.get("dt")
    if states is None or dt is None:
        return
    header = ["t"] + [f"delta_{k + 1}" for k in range(ng)] + [f"omega_{k + 1}" for k in range(ng)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(states.shape[0]):
            fh.write(",".join([format_number(k * dt)] + [format_number(v) for v in states[k]]) + "\n")
        fh.write(f"# diverged at t={format_number(exc.details.get('t', float('nan')))}\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_pf(cfg: RunConfig, network, out: Path) -> int:
    pf = solve_power_flow(network)
    write_pf_csv(network, pf, out / "pf.csv")
    print(
        f"power flow converged in {pf.iterations} iterations, "
        f"max mismatch {pf.max_mismatch:.3e} pu"
    )
    print(f"wrote {out / 'pf.csv'}")
    return 0


def cmd_reduce(cfg: RunConfig, network, out: Path) -> int:
    pf, gens, ybus, yload, yred_pre = _operating_point(network)
    full = _full_model(cfg, network, gens, yred_pre)
    reduced, result = _do_reduce(cfg, full)
    save_reduced_model(reduced, out / "reduced_model.json")
    rows = mode_error_table(full, reduced.model)
    write_mode_table(rows, out / "mode_table.csv")
    written = ["reduced_model.json", "mode_table.csv"]
    if result is not None:
        write_convergence_trace(result, out / "svd_krylov_trace.csv")
        written.append("svd_krylov_trace.csv")
        state = "converged" if result.converged else "did not converge"
        print(f"{cfg.method}: r = {reduced.model.n}, {state} after {result.iterations} iterations")
    else:
        print(f"{cfg.method}: r = {reduced.model.n} (requested {cfg.r}), criterion {cfg.criterion}")
    if cfg.plots:
        from .plots import fig_mode_map

        fig_mode_map(eig(full).eigenvalues, eig(reduced.model).eigenvalues, out / "fig_modes.png")
        written.append("fig_modes.png")
    print("wrote " + ", ".join(str(out / name) for name in written))
    return 0


def _simulate_bundle(cfg: RunConfig, network, out: Path):
    """Everything simulate and compare share: nonlinear run + both linear runs."""
    pf, gens, ybus, yload, yred_pre = _operating_point(network)
    ng = len(gens)
    try:
        sim = simulate_fault(network, gens, cfg.scenario, cfg.sim, pf=pf)
    except SimulationDiverged as exc:
        _write_partial_swing(exc, out / "traj_nonlinear.csv", ng)
        raise
    write_swing_csv(sim.trajectory, out / "traj_nonlinear.csv", ng=ng)

    full = _full_model(cfg, network, gens, yred_pre)
    reduced, result = _do_reduce(cfg, full)
    u_full, u_reduced = _disturbance(cfg, network, gens, ybus, yload, yred_pre, full)
    traj_full = simulate_linear(full, u_full, dt=cfg.sim.dt)
    traj_reduced = simulate_linear(reduced.model, u_reduced, dt=cfg.sim.dt)
    trajectory_to_csv(traj_full, out / "traj_full_lin.csv")
    trajectory_to_csv(traj_reduced, out / "traj_reduced.csv")
    return pf, gens, sim, full, reduced, result, traj_full, traj_reduced


def _sync_note(sim) -> str:
    if sim.synchronism_lost:
        return f"synchronism LOST at t = {sim.t_loss:.6g} s"
    return "synchronism preserved"


def cmd_simulate(cfg: RunConfig, network, out: Path) -> int:
    pf, gens, sim, full, reduced, result, traj_full, traj_reduced = _simulate_bundle(cfg, network, out)
    written = ["traj_nonlinear.csv", "traj_full_lin.csv", "traj_reduced.csv"]
    if cfg.plots:
        from .plots import fig_rotor_angles, fig_traj_overlay

        ch_out = cfg.channel[1]
        fig_rotor_angles(sim.trajectory, len(gens), out / "fig_rotor_angle.png")
        fig_traj_overlay(
            (traj_full, traj_reduced),
            (f"full linear (n = {full.n})", f"{cfg.method} (r = {reduced.model.n})"),
            ch_out,
            out / "fig_traj_compare.png",
            ylabel=(full.output_names or [f"y{ch_out + 1}"] * full.p)[ch_out] + " (rad)",
        )
        written += ["fig_rotor_angle.png", "fig_traj_compare.png"]
    print(f"nonlinear run: {_sync_note(sim)}; {sim.trajectory.n_samples} samples at dt = {cfg.sim.dt}")
    print("wrote " + ", ".join(str(out / name) for name in written))
    return 0


def cmd_compare(cfg: RunConfig, network, out: Path) -> int:
    pf, gens, sim, full, reduced, result, traj_full, traj_reduced = _simulate_bundle(cfg, network, out)
    write_pf_csv(network, pf, out / "pf.csv")
    save_reduced_model(reduced, out / "reduced_model.json")
    rows = mode_error_table(full, reduced.model)
    write_mode_table(rows, out / "mode_table.csv")
    written = [
        "traj_nonlinear.csv",
        "traj_full_lin.csv",
        "traj_reduced.csv",
        "pf.csv",
        "reduced_model.json",
        "mode_table.csv",
    ]
    if result is not None:
        write_convergence_trace(result, out / "svd_krylov_trace.csv")
        written.append("svd_krylov_trace.csv")

    ch_in, ch_out = cfg.channel
    sweep = sweep_pair(full, reduced.model, entry=(ch_out, ch_in), entry_reduced=_reduced_entry(cfg))
    write_sweep(sweep, out / "sweep.csv")
    written.append("sweep.csv")

    per_output = []
    names = full.output_names or tuple(f"y{k + 1}" for k in range(full.p))
    for k in range(min(full.p, reduced.model.p)):
        err = traj_error(traj_full, traj_reduced, channel=k)
        per_output.append(
            {
                "output": names[k],
                "rms": err.rms,
                "max_abs": err.max_abs,
                "time_of_max": err.time_of_max,
            }
        )
    summary = {
        "method": cfg.method,
        "r": reduced.model.n,
        "requested_r": cfg.r,
        "full_order": full.n,
        "dt": cfg.sim.dt,
        "horizon": cfg.sim.horizon,
        "max_magnitude_gap_db": sweep.max_gap_db,
        "synchronism_lost": sim.synchronism_lost,
        "outputs": per_output,
    }
    if result is not None:
        summary["converged"] = result.converged
        summary["iterations"] = result.iterations
        summary["max_interpolation_error"] = float(np.max(result.interpolation_errors))
    with open(out / "traj_error.json", "w") as fh:
        json.dump(json_round(summary), fh, indent=1)
        fh.write("\n")
    written.append("traj_error.json")

    if cfg.plots:
        from .plots import fig_mode_map, fig_rotor_angles, fig_sweep, fig_traj_overlay

        fig_rotor_angles(sim.trajectory, len(gens), out / "fig_rotor_angle.png")
        fig_traj_overlay(
            (traj_full, traj_reduced),
            (f"full linear (n = {full.n})", f"{cfg.method} (r = {reduced.model.n})"),
            ch_out,
            out / "fig_traj_compare.png",
            ylabel=names[ch_out] + " (rad)",
        )
        fig_sweep(sweep, out / "fig_sweep.png")
        fig_mode_map(eig(full).eigenvalues, eig(reduced.model).eigenvalues, out / "fig_modes.png")
        written += ["fig_rotor_angle.png", "fig_traj_compare.png", "fig_sweep.png", "fig_modes.png"]

    cmp_err = traj_error(traj_full, traj_reduced, channel=ch_out)
    print(f"nonlinear run: {_sync_note(sim)}")
    print(
        f"{cfg.method} r = {reduced.model.n}: output {names[ch_out]} rms error "
        f"{cmp_err.rms:.3e}, max |gap| {sweep.max_gap_db:.3f} dB over the sweep band"
    )
    print("wrote " + ", ".join(str(out / name) for name in written))
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--network-path", metavar="PATH", dest="network_path", help=f"network JSON (default {DEFAULT_NETWORK})")
    common.add_argument("--output-dir", metavar="DIR", dest="output_dir", help="output directory (default out)")
    common.add_argument("--plots", action=argparse.BooleanOptionalAction, default=None, help="render PNG figures (default on)")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--faulted-bus", type=int, dest="faulted_bus", help="bus grounded during the fault (default 3)")
    scen.add_argument("--t-on", type=float, dest="t_on", help="fault application time, s (default 1.0)")
    scen.add_argument("--t-clear", type=float, dest="t_clear", help="fault clearing time, s (default 1.1)")
    scen.add_argument("--no-fault", action="store_true", dest="no_fault", help="run without any fault")
    scen.add_argument("--dt", type=float, help="integration step, s (default 0.005)")
    scen.add_argument("--horizon", type=float, help="study period, s (default 20.0)")

    red = argparse.ArgumentParser(add_help=False)
    red.add_argument("--method", choices=METHODS, help="reduction method (default modal-residualization)")
    red.add_argument("--r", "-r", type=int, dest="r", help="reduced order (default 10)")
    red.add_argument("--criterion", choices=CRITERIA, help="mode-ordering criterion (default modulus)")
    red.add_argument("--channel", metavar="IN,OUT", help="1-based input,output channel (default 1,1)")
    red.add_argument("--tol", type=float, help="shift-convergence tolerance (default 1e-6)")
    red.add_argument("--max-iter", type=int, dest="max_iter", help="shift-iteration cap (default 100)")
    red.add_argument(
        "--orthogonalize",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="orthonormalize the projection basis (default on)",
    )

    parser = argparse.ArgumentParser(
        prog="powermor",
        description="Model-order reduction of multi-machine power-system models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_pf = sub.add_parser("pf", parents=[common], help="solve the power flow and export it")
    p_pf.set_defaults(func=cmd_pf)
    p_red = sub.add_parser("reduce", parents=[common, red], help="build and reduce the linear model")
    p_red.set_defaults(func=cmd_reduce)
    p_sim = sub.add_parser(
        "simulate", parents=[common, scen, red], help="simulate the fault nonlinearly and on both linear models"
    )
    p_sim.set_defaults(func=cmd_simulate)
    p_cmp = sub.add_parser(
        "compare", parents=[common, scen, red], help="full pipeline with mode, sweep, and trajectory reports"
    )
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def _fail(code: int, exc: PowermorError) -> int:
    print(f"error ({exc.code}): {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        network = load_network(cfg.network_path)
        _validate_against_network(cfg, network)
    except (ParseError, ValidationError) as exc:
        return _fail(2, exc)
    except OSError as exc:
        print(f"error (file): {exc}", file=sys.stderr)
        return 2
    try:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, network, out)
    except PowerFlowDiverged as exc:
        return _fail(3, exc)
    except SimulationDiverged as exc:
        return _fail(5, exc)
    except PowermorError as exc:
        return _fail(4, exc)


if __name__ == "__main__":
    sys.exit(main())
