"""Command-line front end.

    hybridlag run --config run.json
    hybridlag run --model billiard-cartesian --scenario paper-c025 \
        --mode full --horizon 10 --out results/

Modes: full (one hybrid simulation), reduced (reduce at the start
momentum, simulate on the shape space, reconstruct the cyclic angle),
resequenced (rebuild the reduced system after every impact), compare
(reduced-vs-full discrepancy report), verify (invariant suite).

Every run writes run.json; its "config" object is itself a valid
configuration document, so a finished run can be reproduced with
``hybridlag run --config <out>/run.json`` (bit-identical outputs: the
pipeline contains no randomness). Exit status is 0 when the run and all
requested checks succeed; failures write error.json and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, billiard
from .errors import HybridLagError, ParseError
from .hybrid import simulate
from .io import (SCHEMA_VERSION, RunConfig, config_from_dict,
                 write_events_csv, write_json, write_trajectory_csv)
from .lagrangian import State
from .models import build_model
from .reduction import momentum_map, project, reconstruct, reduce, \
    simulate_resequenced
from .verification import run_verification

COMPARE_STATE_TOL = 1e-6
COMPARE_EVENT_TOL = 1e-8
COMPARE_CORE_RADIUS = 0.1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hybridlag",
        description="simulate time-dependent hybrid Lagrangian systems")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute one configured run")
    run_p.add_argument("--config", help="path to a JSON configuration")
    run_p.add_argument("--model", help="model id override")
    run_p.add_argument("--scenario", help="scenario id override")
    run_p.add_argument("--mode", help="mode override")
    run_p.add_argument("--horizon", type=float, help="horizon override")
    run_p.add_argument("--out", help="output directory override")
    run_p.add_argument("--seedless", action="store_true",
                       help="accepted for interface stability; runs contain "
                            "no randomness and are always deterministic")
    args = parser.parse_args(argv)

    doc = {}
    try:
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
            loaded = json.loads(text)
            # accept both a bare config and a run.json wrapper
            doc = loaded.get("config", loaded) if isinstance(loaded, dict) \
                else loaded
            if not isinstance(doc, dict):
                raise ParseError("configuration must be a JSON object")
        for key in ("model", "scenario", "mode", "out"):
            val = getattr(args, key)
            if val is not None:
                doc[key] = val
        if args.horizon is not None:
            doc["horizon"] = args.horizon
        config = config_from_dict(doc)
    except (OSError, json.JSONDecodeError, HybridLagError) as exc:
        _emit_error(doc.get("out", "."), exc)
        return 2

    try:
        return _run(config)
    except HybridLagError as exc:
        _emit_error(config.out, exc)
        return 1


def _emit_error(out_dir, exc):
    record = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "key", None) is not None:
        record["key"] = exc.key
    sys.stderr.write(json.dumps(record) + "\n")
    try:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "error.json"), record)
    except OSError:
        pass


def _params_from_config(config: RunConfig) -> billiard.BilliardParams:
    base = {}
    if config.scenario is not None:
        sc = billiard.get_scenario(config.scenario)
        base = {"c": sc.params.c, "m": sc.params.m}
    if config.c is not None:
        base["c"] = config.c
    if config.m is not None:
        base["m"] = config.m
    if config.direction_mode is not None:
        base["direction_mode"] = config.direction_mode
    if config.polar_reset_sign is not None:
        base["polar_reset_sign"] = config.polar_reset_sign
    return billiard.BilliardParams(**base)


def _initial_state(config: RunConfig, bundle) -> State:
    if config.initial_q is not None or config.initial_v is not None:
        if config.initial_q is None or config.initial_v is None:
            raise ParseError("initial_q and initial_v must be given together")
        t0 = config.initial_t if config.initial_t is not None else 0.0
        return State(t0, np.asarray(config.initial_q, float),
                     np.asarray(config.initial_v, float))
    if config.scenario is not None:
        sc = billiard.get_scenario(config.scenario)
        if config.model == "billiard-polar":
            return sc.initial_polar
        if config.model == "billiard-cartesian":
            return sc.initial_cartesian
        raise ParseError(f"scenario {config.scenario!r} applies to the "
                         f"billiard models only")
    if bundle.default_initial is not None:
        return bundle.default_initial
    raise ParseError("no initial state: give a scenario or initial_q/"
                     "initial_v")


def _run(config: RunConfig) -> int:
    os.makedirs(config.out, exist_ok=True)
    params = _params_from_config(config)
    bundle = build_model(config.model, params)
    record = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": config.to_record(),
        "model": config.model,
        "mode": config.mode,
    }
    if config.scenario:
        record["scenario"] = config.scenario

    if config.mode == "full":
        s0 = _initial_state(config, bundle)
        flow = simulate(bundle.hybrid, s0, config.horizon, config.options)
        _write_flow(config, flow, None)
        record.update(_flow_record(flow))
        write_json(os.path.join(config.out, "run.json"), record)
        return 0

    if config.mode in ("reduced", "resequenced"):
        if bundle.cyclic is None:
            raise ParseError(f"mode {config.mode!r} needs a model with a "
                             f"cyclic coordinate (billiard-polar)")
        cyc = bundle.cyclic
        s0 = _initial_state(config, bundle)
        if config.mode == "reduced":
            mu0 = momentum_map(cyc, s0)
            red = reduce(cyc, mu0)
            s0_red = cyc.project_state(s0)
            flow = simulate(red.shape, s0_red, config.horizon, config.options)
            rec = reconstruct(cyc, flow, mu0, float(s0.q[cyc.cyclic_index]))
        else:
            rec = simulate_resequenced(cyc, s0, config.horizon,
                                       config.options)
            flow = rec.reduced
        _write_flow(config, flow, rec)
        record.update(_flow_record(flow))
        record["mu_sequence"] = [mu for _, mu in rec.mu_sequence]
        record["max_momentum_residual"] = rec.max_momentum_residual
        write_json(os.path.join(config.out, "run.json"), record)
        return 0

    if config.mode == "compare":
        report = _compare(config, bundle)
        record["compare"] = report
        write_json(os.path.join(config.out, "compare.json"), report)
        write_json(os.path.join(config.out, "run.json"), record)
        return 0 if report["passed"] else 1

    if config.mode == "verify":
        if config.scenario is None:
            raise ParseError("verify mode needs a scenario")
        sc0 = billiard.get_scenario(config.scenario)
        sc = billiard.PaperScenario(sc0.scenario_id, params,
                                    sc0.initial_polar,
                                    horizon=min(config.horizon, sc0.horizon))
        checks = run_verification(sc, opts=config.options)
        passed = all(c["passed"] for c in checks)
        record["checks"] = checks
        record["passed"] = passed
        write_json(os.path.join(config.out, "verify.json"),
                   {"checks": checks, "passed": passed})
        write_json(os.path.join(config.out, "run.json"), record)
        for c in checks:
            status = "pass" if c["passed"] else "FAIL"
            print(f"{c['check']}: {status} (measured {c['measured']:.3e}, "
                  f"bound {c['bound']:.1e}) {c['detail']}")
        return 0 if passed else 1

    raise ParseError(f"unhandled mode {config.mode!r}")


def _write_flow(config, flow, rec):
    if config.write_trajectory:
        write_trajectory_csv(os.path.join(config.out, "trajectory.csv"),
                             flow, rec)
    if config.write_events:
        write_events_csv(os.path.join(config.out, "events.csv"), flow)


def _flow_record(flow):
    return {
        "termination": flow.termination,
        "n_events": len(flow.events),
        "t_final": flow.t_final,
        "event_times": [e.tau for e in flow.events],
    }


def _compare(config: RunConfig, bundle):
    """Reduced-vs-full discrepancy report for the polar billiard."""
    if bundle.cyclic is None:
        raise ParseError("compare mode needs a model with a cyclic "
                         "coordinate (billiard-polar)")
    cyc = bundle.cyclic
    s0 = _initial_state(config, bundle)
    opts = config.options
    full = simulate(cyc.full, s0, config.horizon, opts)
    projected = project(cyc, full)
    mu0 = momentum_map(cyc, s0)
    red = reduce(cyc, mu0)
    reduced = simulate(red.shape, cyc.project_state(s0), config.horizon,
                       opts)
    rec = reconstruct(cyc, reduced, mu0, float(s0.q[cyc.cyclic_index]))

    n_f, n_r = len(projected.events), len(reduced.events)
    m = min(n_f, n_r)
    event_delta = 0.0
    if m:
        event_delta = float(np.max(np.abs(projected.event_times()[:m]
                                          - reduced.event_times()[:m])))
    sup_all = 0.0
    sup_core = 0.0
    arc_sups = []
    for arc_p, arc_r in zip(projected.arcs, reduced.arcs):
        lo = max(arc_p.t_start, arc_r.t_start)
        hi = min(arc_p.t_end, arc_r.t_end)
        if hi <= lo:
            arc_sups.append(0.0)
            continue
        grid = np.linspace(lo, hi, 65)
        sup_arc = 0.0
        for t in grid:
            yp = arc_p(t)
            yr = arc_r(t)
            d = float(np.max(np.abs(yp - yr)))
            sup_arc = max(sup_arc, d)
            if yp[0] >= COMPARE_CORE_RADIUS:
                sup_core = max(sup_core, d)
        arc_sups.append(sup_arc)
        sup_all = max(sup_all, sup_arc)
    theta_delta = 0.0
    for k, ev in enumerate(reduced.events):
        if k < len(full.arcs):
            theta_full = full.arcs[k](ev.tau)[1]
            theta_delta = max(theta_delta,
                              abs(float(rec.theta[k][-1]) - float(theta_full)))
    passed = (n_f == n_r and event_delta <= COMPARE_EVENT_TOL
              and sup_core <= COMPARE_STATE_TOL)
    return {
        "passed": passed,
        "events_full": n_f,
        "events_reduced": n_r,
        "max_event_time_delta": event_delta,
        "event_time_bound": COMPARE_EVENT_TOL,
        "sup_norm_per_arc": arc_sups,
        "sup_norm_overall": sup_all,
        "sup_norm_core": sup_core,
        "core_radius": COMPARE_CORE_RADIUS,
        "state_bound": COMPARE_STATE_TOL,
        "max_theta_delta_at_events": theta_delta,
        "terminations": [full.termination, reduced.termination],
    }


if __name__ == "__main__":
    sys.exit(main())
