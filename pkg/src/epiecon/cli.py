"""Command-line interface: simulate | evaluate | optimize | check | sweep.

All commands read one JSON configuration, write their outputs (CSV and
JSON) under the output directory, and echo the resolved configuration for
reproducibility.  Outputs are byte-deterministic: fixed float formatting,
seeds from the configuration, canonical JSON key order.

Exit codes: 0 success, 2 configuration error, 3 model runtime error,
4 optimizer infeasible start.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import epi, optimizer
from .errors import ConfigurationError, InfeasibleStart, ModelError
from .grid import TimeGrid
from .hamiltonian import (chain_rule_residual, hamiltonian_gap_profile,
                          integrated_gap, transversality_check, validate_gradient)

log = logging.getLogger("epiecon")

_FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return _FLOAT_FMT % float(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell)
                             for cell in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg, override) -> Path:
    out = Path(override) if override else Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg, out: Path) -> None:
    cfgmod.dump_config(cfg, out / "resolved_config.json")


def _print_table(rows) -> None:
    width = max(len(str(k)) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value}")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_simulate(cfg, out_dir=None) -> int:
    out = _out_dir(cfg, out_dir)
    scenario = cfgmod.build_scenario(cfg)
    log.info("simulating %d steps on %d age cells",
             scenario.time_grid.n_steps, scenario.age_grid.n_age)
    traj = scenario.simulate()
    _echo_config(cfg, out)

    da = scenario.age_grid.da
    rows = []
    for k, t in enumerate(traj.times):
        st = traj.states[k]
        rows.append([t,
                     da * st.s.values.sum(), da * st.i.values.sum(),
                     da * st.r.values.sum(), traj.N[k], traj.Xi[k], traj.K[k],
                     traj.L[k], traj.Y[k], traj.C[k], traj.D_cost[k],
                     traj.deaths_flow[k]])
    _write_csv(out / "trajectory.csv",
               ["t", "S", "I", "R", "N", "Xi", "K", "L", "Y", "C", "Dcost",
                "deaths_flow"], rows)

    snap_times = cfg["output"]["snapshot_times"]
    if snap_times:
        snap_rows = []
        for t_req in snap_times:
            k = int(np.clip(round((t_req - traj.time_grid.t0) / traj.time_grid.dt),
                            0, traj.n_steps))
            st = traj.states[k]
            for j, a in enumerate(scenario.age_grid.nodes):
                snap_rows.append([traj.times[k], a, st.s.values[j],
                                  st.i.values[j], st.r.values[j]])
        _write_csv(out / "snapshots.csv", ["t", "a", "s", "i", "r"], snap_rows)

    _print_table([
        ("steps", traj.n_steps),
        ("final N", _fmt(traj.N[-1])),
        ("final K", _fmt(traj.K[-1])),
        ("feasible", traj.feasible),
        ("outputs", str(out)),
    ])
    return 0


def _evaluation_payload(scenario, traj, report) -> dict:
    return {
        "target": scenario.obj.composite or scenario.obj.which,
        "value": report.value,
        "components": report.components,
        "feasible": report.feasible,
        "violation": report.violation,
        "tail_bound": report.tail_bound,
        "min_K": traj.min_K,
    }


def cmd_evaluate(cfg, out_dir=None) -> int:
    out = _out_dir(cfg, out_dir)
    scenario = cfgmod.build_scenario(cfg)
    traj = scenario.simulate()
    report = scenario.evaluate(traj=traj)
    _echo_config(cfg, out)
    payload = _evaluation_payload(scenario, traj, report)
    _write_json(out / "evaluation.json", payload)
    _print_table([
        ("target", payload["target"]),
        ("value", _fmt(report.value)),
        ("feasible", report.feasible),
        ("violation", _fmt(report.violation)),
        ("tail bound", "-" if report.tail_bound is None else _fmt(report.tail_bound)),
    ])
    return 0


def cmd_optimize(cfg, out_dir=None) -> int:
    out = _out_dir(cfg, out_dir)
    scenario = cfgmod.build_scenario(cfg)
    opt_cfg = cfgmod.build_optimizer_config(cfg)
    value_function = cfgmod.build_value_function(cfg, scenario) \
        if "verification" in cfg else None
    log.info("optimizing %dx%d control blocks, budget %d iterations",
             opt_cfg.n_time_blocks, opt_cfg.n_age_blocks, opt_cfg.max_iters)
    report = optimizer.optimize(scenario, opt_cfg, value_function=value_function)
    _echo_config(cfg, out)

    _write_json(out / "optim_report.json", {
        "objective_trace": list(map(float, report.objective_trace)),
        "violation_trace": list(map(float, report.violation_trace)),
        "feasible": report.feasible,
        "converged": report.converged,
        "n_iters": report.n_iters,
        "warnings": report.warnings,
        "integrated_gap_initial": report.integrated_gap_initial,
        "integrated_gap_final": report.integrated_gap_final,
        "seed": report.seed,
    })

    blocks = report.blocks
    ntb, nab = blocks.c.shape
    tg, ag = scenario.time_grid, scenario.age_grid
    rows = []
    for tb in range(ntb):
        for ab in range(nab):
            rows.append([tb, ab,
                         tg.t0 + tb * (tg.n_steps // ntb) * tg.dt,
                         ab * (ag.n_age // nab) * ag.da,
                         blocks.c[tb, ab], blocks.theta[tb, ab],
                         blocks.eta[tb, ab]])
    _write_csv(out / "best_policy.csv",
               ["t_block", "a_block", "t_start", "a_start", "c", "theta", "eta"],
               [[str(r[0]), str(r[1])] + r[2:] for r in rows])

    _print_table([
        ("iterations", report.n_iters),
        ("objective", _fmt(report.objective_trace[-1])),
        ("converged", report.converged),
        ("feasible", report.feasible),
        ("integrated gap", "-" if report.integrated_gap_final is None
         else _fmt(report.integrated_gap_final)),
    ])
    return 0


def _mckendrick_battery() -> dict:
    """Built-in transport convergence table against the aging closed form."""
    from .economy import EconParams, LinearCongestion, LinearProduction, PowerLockdown
    from .grid import AgeGrid, Field1D

    a_max, horizon = 8.0, 2.0
    mu0, mu1 = 0.08, 0.02

    def run(n_age, age_dependent):
        grid = AgeGrid(a_max=a_max, n_age=n_age)
        tg = TimeGrid.aligned(grid, n_steps=int(round(horizon * n_age / a_max)))
        a = grid.nodes
        mu = np.full(n_age, mu0) + (mu1 * a if age_dependent else 0.0)
        s0 = np.exp(-(((a - 2.5) / 1.2) ** 2))
        params = epi.EpiParams(
            mu_S=Field1D(grid, mu), mu_R=Field1D(grid, np.zeros(n_age)),
            mu_I_base=Field1D(grid, np.zeros(n_age)),
            gamma=Field1D(grid, np.zeros(n_age)),
            beta=Field1D(grid, np.zeros(n_age)),
            xi=Field1D(grid, np.zeros(n_age)),
            m=np.zeros((n_age, n_age)),
            saturation=epi.SaturationSpec(xi_cap=1.0, psi=0.0, smooth=1.0))
        econ = EconParams(alpha=Field1D.constant(grid, 0.0),
                          e=Field1D.constant(grid, 0.0), delta=0.05,
                          F=LinearProduction(a_k=0.0, a_l=0.0),
                          phi=PowerLockdown(q=1.0), D=LinearCongestion(d1=0.0))
        initial = epi.EpiState.from_arrays(grid, s0, np.zeros(n_age), np.zeros(n_age))
        policy = epi.laissez_faire_policy(grid, tg)
        traj = epi.simulate(initial, 0.0, policy, params, econ, tg)
        T = tg.t_end
        born = a - T
        if age_dependent:
            cum = mu0 * T + 0.5 * mu1 * (a**2 - born**2)
        else:
            cum = mu0 * T
        exact = np.where(born >= 0,
                         np.exp(-(((born - 2.5) / 1.2) ** 2)) * np.exp(-cum), 0.0)
        err = np.max(np.abs(traj.states[-1].s.values - exact))
        return err / np.max(np.abs(exact)), tg.dt

    table = {}
    for label, age_dep in (("constant_mu", False), ("age_dependent_mu", True)):
        errors, dts = [], []
        for n_age in (32, 64, 128):
            err, dt = run(n_age, age_dep)
            errors.append(err)
            dts.append(dt)
        if max(errors) <= 1e-12:
            order = None  # exact transport, order not measurable
        else:
            order = float(np.polyfit(np.log(dts), np.log(np.maximum(errors, 1e-300)),
                                     1)[0])
        table[label] = {"dts": dts, "max_rel_errors": errors, "order": order}
    return table


def _smooth_pair(space, rng):
    a = space.grid.nodes / space.grid.a_max
    env = np.zeros_like(a)
    inside = np.abs(a - 0.5) < 0.3
    env[inside] = np.exp(-1.0 / (1.0 - ((a[inside] - 0.5) / 0.3) ** 2))

    def triple():
        return tuple(env * sum(c * np.sin((k + 1) * np.pi * a)
                               for k, c in enumerate(rng.standard_normal(3)))
                     for _ in range(3))

    return triple(), triple()


def cmd_check(cfg, out_dir=None) -> int:
    out = _out_dir(cfg, out_dir)
    scenario = cfgmod.build_scenario(cfg)
    ver = cfg["verification"]
    rng = np.random.default_rng(ver["seed"])
    _echo_config(cfg, out)

    # adjoint identity on random smooth compactly supported pairs
    space = scenario.space
    residuals = []
    for _ in range(ver["adjoint_pairs"]):
        h, p = _smooth_pair(space, rng)
        lhs = space.inner(space.apply_A(h), p)
        rhs = space.inner(h, space.apply_A_star(p))
        residuals.append(abs(lhs - rhs) / (space.norm(h) * space.norm(p)))
    adjoint = {"n_pairs": ver["adjoint_pairs"],
               "max_rel_residual": float(max(residuals)),
               "bound_5da": 5.0 * scenario.age_grid.da}

    # chain-rule residual for the configured value function and policy,
    # with a coarse companion for the order estimate when grids allow
    v = cfgmod.build_value_function(cfg, scenario)
    grad_err = validate_gradient(
        v, [(scenario.initial.as_triple(), max(scenario.K0, 1.0))], space)
    traj = scenario.simulate()
    residual = chain_rule_residual(v, scenario.policy, traj, space, scenario.epi,
                                   scenario.econ, scenario.obj)
    chain = {"residual": float(residual), "dt": scenario.time_grid.dt,
             "gradient_check": float(grad_err)}
    n_age = cfg["grid"]["n_age"]
    n_steps = cfg["grid"]["n_steps"]
    if n_age % 2 == 0 and n_age // 2 >= 8 and n_steps % 2 == 0:
        coarse_cfg = copy.deepcopy(cfg)
        coarse_cfg["grid"]["n_age"] = n_age // 2
        coarse_cfg["grid"]["n_steps"] = n_steps // 2
        coarse = cfgmod.build_scenario(coarse_cfg)
        v_c = cfgmod.build_value_function(coarse_cfg, coarse)
        traj_c = coarse.simulate()
        res_c = chain_rule_residual(v_c, coarse.policy, traj_c, coarse.space,
                                    coarse.epi, coarse.econ, coarse.obj)
        chain["coarse_residual"] = float(res_c)
        chain["coarse_dt"] = coarse.time_grid.dt
        if abs(residual) > 0 and abs(res_c) > 0:
            chain["order"] = float(np.log2(abs(res_c) / abs(residual)))

    # Hamiltonian gap profile of the configured policy
    gaps = hamiltonian_gap_profile(v, scenario.policy, traj, space, scenario.epi,
                                   scenario.econ, scenario.obj, scenario.search)
    gap = {"min": float(gaps.min()), "max": float(gaps.max()),
           "integrated": integrated_gap(gaps, traj, scenario.obj)}

    # transversality over extended horizons (last policy row held)
    trajs = []
    for mult in ver["horizon_multipliers"]:
        n_steps_m = int(round(cfg["grid"]["n_steps"] * mult))
        tg = TimeGrid.aligned(scenario.age_grid, t0=scenario.time_grid.t0,
                              n_steps=n_steps_m)
        policy = _extend_policy(scenario.policy, tg)
        trajs.append(epi.simulate(scenario.initial, scenario.K0, policy,
                                  scenario.epi, scenario.econ, tg,
                                  scenario.n_floor_rel))
    tv = transversality_check(v, trajs, scenario.obj.rho)
    transversality = {"horizons": [float(x) for x in tv.horizons],
                      "weighted_values": [float(x) for x in tv.weighted_values],
                      "exponent": tv.exponent, "decaying": tv.decaying}

    payload = {"adjoint_identity": adjoint, "chain_rule_identity": chain,
               "hamiltonian_gap": gap, "transversality": transversality,
               "transport_convergence": _mckendrick_battery()}
    _write_json(out / "check.json", payload)

    _print_table([
        ("adjoint max residual", _fmt(adjoint["max_rel_residual"])),
        ("adjoint bound (5 da)", _fmt(adjoint["bound_5da"])),
        ("chain-rule residual", _fmt(chain["residual"])),
        ("gap min", _fmt(gap["min"])),
        ("gap integrated", _fmt(gap["integrated"])),
        ("transversality decaying", transversality["decaying"]),
    ])
    return 0


def _extend_policy(policy: epi.PolicyField, tg: TimeGrid) -> epi.PolicyField:
    def extend(values):
        need = tg.n_steps + 1
        if need <= values.shape[0]:
            return values[:need].copy()
        pad = np.repeat(values[-1:], need - values.shape[0], axis=0)
        return np.vstack([values, pad])

    ag = policy.c.age_grid
    return epi.PolicyField.from_arrays(ag, tg, extend(policy.c.values),
                                       extend(policy.theta.values),
                                       extend(policy.eta.values))


def _set_by_path(cfg: dict, path: str, value) -> None:
    keys = path.split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigurationError(f"sweep path {path!r} not found in config")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigurationError(f"sweep path {path!r} not found in config")
    node[keys[-1]] = value


def _sweep_point(args):
    cfg, overrides = args
    point = copy.deepcopy(cfg)
    for path, value in overrides:
        _set_by_path(point, path, value)
    scenario = cfgmod.build_scenario(point)
    try:
        traj = scenario.simulate()
        report = scenario.evaluate(traj=traj)
        return {"value": report.value, "feasible": report.feasible,
                "violation": report.violation, "error": None}
    except ModelError as err:
        return {"value": None, "feasible": False, "violation": None,
                "error": str(err)}


def cmd_sweep(cfg, out_dir=None, jobs=1) -> int:
    if "sweep" not in cfg:
        raise ConfigurationError("config field sweep: required for the sweep command")
    out = _out_dir(cfg, out_dir)
    _echo_config(cfg, out)
    axes = cfg["sweep"]["axes"]
    values0 = axes[0]["values"]
    values1 = axes[1]["values"] if len(axes) > 1 else [None]

    tasks = []
    for v0 in values0:
        for v1 in values1:
            overrides = [(axes[0]["path"], v0)]
            if len(axes) > 1:
                overrides.append((axes[1]["path"], v1))
            tasks.append((cfg, overrides))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]

    grid_vals = np.array([[r["value"] if r["value"] is not None else np.nan
                           for r in results[i * len(values1):(i + 1) * len(values1)]]
                          for i in range(len(values0))])

    header = [f"{axes[0]['path']}\\{axes[1]['path'] if len(axes) > 1 else ''}"]
    header += [("" if v is None else _fmt(v)) for v in values1]
    rows = [[_fmt(v0)] + [_fmt(grid_vals[i, j]) for j in range(len(values1))]
            for i, v0 in enumerate(values0)]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

    detail_rows = []
    idx = 0
    for v0 in values0:
        for v1 in values1:
            r = results[idx]
            detail_rows.append([
                _fmt(v0), "" if v1 is None else _fmt(v1),
                "" if r["value"] is None else _fmt(r["value"]),
                str(r["feasible"]),
                "" if r["violation"] is None else _fmt(r["violation"]),
                r["error"] or "",
            ])
            idx += 1
    _write_csv(out / "sweep_details.csv",
               ["axis0", "axis1", "value", "feasible", "violation", "error"],
               detail_rows)
    print(f"swept {len(tasks)} points -> {out}")
    return 0


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiecon",
        description="Age-structured epidemic-economy simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("evaluate", cmd_evaluate),
                     ("optimize", cmd_optimize), ("check", cmd_check),
                     ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory override")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes for the sweep grid")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EPIECON_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
        if args.command == "sweep":
            return args.fn(cfg, args.out, jobs=args.jobs)
        return args.fn(cfg, args.out)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except InfeasibleStart as err:
        print(f"optimizer error: {err}", file=sys.stderr)
        return 4
    except ModelError as err:
        where = "" if err.step_index is None else f" at step {err.step_index}"
        print(f"model error{where}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
