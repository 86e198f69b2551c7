import json
import os
import struct

import numpy as np
import pytest

import hybridlag as hl
from hybridlag import cli
from hybridlag.io import (config_from_dict, dumps_record, events_header, fmt,
                          parse_config, trajectory_header,
                          write_events_csv, write_trajectory_csv)


# ---------------------------------------------------------------------------
# number formatting
# ---------------------------------------------------------------------------

def test_fmt_round_trips_doubles(rng):
    for _ in range(200):
        bits = rng.integers(0, 2**63, dtype=np.uint64)
        x = struct.unpack("<d", struct.pack("<Q", bits))[0]
        if not np.isfinite(x):
            continue
        assert float(fmt(x)) == x


def test_dumps_record_deterministic_and_sorted():
    rec = {"b": 1.5, "a": [1, 2.25, {"z": True, "y": None}], "c": "x"}
    text1 = dumps_record(rec)
    text2 = dumps_record(dict(reversed(list(rec.items()))))
    assert text1 == text2
    assert text1.index('"a"') < text1.index('"b"') < text1.index('"c"')


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_config_minimal_defaults():
    cfg = parse_config('{"model": "billiard-cartesian", "mode": "full", '
                       '"horizon": 2.0}')
    assert cfg.options.rtol == 1e-10
    assert cfg.options.max_impacts == 10000
    assert cfg.options.min_dwell == 1e-9
    assert cfg.out == "."


def test_parse_config_unknown_key():
    with pytest.raises(hl.ParseError) as err:
        parse_config('{"model": "billiard-cartesian", "mode": "full", '
                     '"horizon": 1.0, "wavelength": 3}')
    assert err.value.key == "wavelength"


def test_parse_config_negative_tolerance():
    with pytest.raises(hl.ParseError):
        parse_config('{"model": "billiard-cartesian", "mode": "full", '
                     '"horizon": 1.0, "rtol": -1e-10}')


def test_parse_config_bad_mode_and_model():
    with pytest.raises(hl.ParseError):
        parse_config('{"model": "billiard-cartesian", "mode": "meditate", '
                     '"horizon": 1.0}')
    with pytest.raises(hl.ParseError):
        parse_config('{"model": "pinball", "mode": "full", "horizon": 1.0}')


def test_parse_config_invalid_json():
    with pytest.raises(hl.ParseError):
        parse_config("{not json")


def test_scenario_sets_parameters_and_start():
    cfg = config_from_dict({"model": "billiard-polar", "mode": "full",
                            "horizon": 1.0, "scenario": "paper-c010"})
    params = cli._params_from_config(cfg)
    assert params.c == 0.10
    bundle = hl.build_model("billiard-polar", params)
    s0 = cli._initial_state(cfg, bundle)
    assert np.allclose(s0.q, [0.5590, 1.1071], atol=0)
    assert np.allclose(s0.v, [2.8621, -3.0400], atol=0)


def test_explicit_initial_state_override():
    cfg = config_from_dict({"model": "billiard-cartesian", "mode": "full",
                            "horizon": 1.0, "initial_q": [0.1, 0.0],
                            "initial_v": [1.0, 0.5], "initial_t": 0.25})
    bundle = hl.build_model("billiard-cartesian")
    s0 = cli._initial_state(cfg, bundle)
    assert s0.t == 0.25
    assert np.allclose(s0.q, [0.1, 0.0])


# ---------------------------------------------------------------------------
# CSV schema
# ---------------------------------------------------------------------------

def test_csv_headers():
    assert trajectory_header(2) == ["t", "arc_index", "q_1", "q_2", "v_1",
                                    "v_2"]
    assert trajectory_header(1, with_theta=True) == [
        "t", "arc_index", "q_1", "v_1", "theta", "theta_dot"]
    assert events_header(2) == [
        "tau", "pre_q_1", "pre_q_2", "pre_v_1", "pre_v_2",
        "post_q_1", "post_q_2", "post_v_1", "post_v_2", "guard_residual"]


def test_csv_round_trip_values(tmp_path):
    wall, rate = hl.static_wall(1.0)
    p = hl.BilliardParams(c=0.0, wall=wall, wall_rate=rate)
    flow = hl.simulate(hl.cartesian_hybrid(p),
                       hl.State(0.0, np.zeros(2), np.array([1.0, 0.0])), 2.0)
    tp = tmp_path / "trajectory.csv"
    ep = tmp_path / "events.csv"
    write_trajectory_csv(tp, flow)
    write_events_csv(ep, flow)
    lines = tp.read_text().splitlines()
    assert lines[0] == "t,arc_index,q_1,q_2,v_1,v_2"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and first[1] == "0"
    ev_lines = ep.read_text().splitlines()
    assert len(ev_lines) == 2
    row = ev_lines[1].split(",")
    assert float(row[0]) == pytest.approx(1.0, abs=1e-9)
    # post velocity columns hold the exact reset image
    assert float(row[7]) == flow.events[0].post.v[0]


# ---------------------------------------------------------------------------
# CLI end to end
# ---------------------------------------------------------------------------

def run_cli(*argv):
    return cli.main(list(argv))


def test_cli_full_run_writes_files(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-cartesian", "--scenario",
                   "paper-c025", "--mode", "full", "--horizon", "2",
                   "--out", out)
    assert code == 0
    for name in ("trajectory.csv", "events.csv", "run.json"):
        assert os.path.exists(os.path.join(out, name))
    record = json.loads(open(os.path.join(out, "run.json")).read())
    assert record["termination"] == "horizon_reached"
    assert record["n_events"] == 3
    assert record["config"]["model"] == "billiard-cartesian"


def test_cli_full_horizon_run_reports_accumulation(tmp_path):
    # over the whole window the shrinking wall closes and impacts
    # accumulate: the run records >= 1 impact and stops with
    # zeno_suspected just short of the collapse time
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-cartesian", "--scenario",
                   "paper-c025", "--mode", "full", "--horizon", "10",
                   "--out", out)
    assert code == 0
    record = json.loads(open(os.path.join(out, "run.json")).read())
    assert record["n_events"] >= 1
    assert record["termination"] == "zeno_suspected"
    assert record["t_final"] == pytest.approx(6.9314718, abs=1e-4)


def test_cli_invalid_model_errors(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "flipper", "--mode", "full",
                   "--horizon", "1", "--out", out)
    assert code != 0
    record = json.loads(open(os.path.join(out, "error.json")).read())
    assert record["error"] == "ParseError"
    assert "flipper" in record["message"]


def test_cli_reduced_mode_outputs_theta(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-polar", "--scenario",
                   "paper-c025", "--mode", "reduced", "--horizon", "2",
                   "--out", out)
    assert code == 0
    header = open(os.path.join(out, "trajectory.csv")).readline().strip()
    assert header == "t,arc_index,q_1,v_1,theta,theta_dot"
    record = json.loads(open(os.path.join(out, "run.json")).read())
    assert "mu_sequence" in record
    assert record["mu_sequence"][0] == pytest.approx(-0.94994224, abs=1e-8)


def test_cli_reduced_csv_contents_are_consistent(tmp_path):
    # the emitted theta_dot column must satisfy the closed-form momentum
    # relation exp(-ct) mu / (m r^2) row by row, and theta must accumulate
    # its quadrature
    out = str(tmp_path / "out")
    assert run_cli("run", "--model", "billiard-polar", "--scenario",
                   "paper-c025", "--mode", "reduced", "--horizon", "2",
                   "--out", out) == 0
    record = json.loads(open(os.path.join(out, "run.json")).read())
    mu = record["mu_sequence"][0]
    rows = [line.split(",") for line in
            open(os.path.join(out, "trajectory.csv")).read().splitlines()[1:]]
    data = np.array([[float(x) for x in row] for row in rows])
    t, r, thd = data[:, 0], data[:, 2], data[:, 5]
    assert np.max(np.abs(thd - np.exp(-0.25 * t) * mu / r**2)) <= 1e-12
    theta = data[:, 4]
    # trapezoid sanity on the emitted grid (coarse bound; the stored
    # values come from finer Simpson quadrature)
    for k in range(len(t) - 1):
        if t[k + 1] <= t[k]:
            continue
        step = (t[k + 1] - t[k]) * 0.5 * (thd[k] + thd[k + 1])
        assert abs((theta[k + 1] - theta[k]) - step) <= 2e-3


def test_cli_resequenced_mode(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-polar", "--scenario",
                   "paper-c025", "--mode", "resequenced", "--horizon", "2",
                   "--out", out)
    assert code == 0
    record = json.loads(open(os.path.join(out, "run.json")).read())
    mus = record["mu_sequence"]
    assert len(mus) == record["n_events"] + 1
    assert np.allclose(mus, mus[0], atol=1e-12)


def test_cli_requires_cyclic_model_for_reduced(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-cartesian", "--scenario",
                   "paper-c025", "--mode", "reduced", "--horizon", "1",
                   "--out", out)
    assert code != 0


def test_cli_compare_mode(tmp_path):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-polar", "--scenario",
                   "paper-c025", "--mode", "compare", "--horizon", "5",
                   "--out", out)
    assert code == 0
    report = json.loads(open(os.path.join(out, "compare.json")).read())
    assert report["passed"] is True
    assert report["events_full"] == report["events_reduced"]
    assert report["max_event_time_delta"] <= 1e-8
    assert report["sup_norm_core"] <= 1e-6


def test_cli_verify_mode(tmp_path, capsys):
    out = str(tmp_path / "out")
    code = run_cli("run", "--model", "billiard-polar", "--scenario",
                   "paper-c025", "--mode", "verify", "--horizon", "3",
                   "--out", out)
    assert code == 0
    report = json.loads(open(os.path.join(out, "verify.json")).read())
    assert report["passed"] is True
    names = {c["check"] for c in report["checks"]}
    assert {"derivative_consistency", "legendre_roundtrip",
            "flow_equivalence", "hybrid_correspondence",
            "momentum_conservation", "arc_oracle_agreement",
            "chart_impact_agreement", "csv_schema"} <= names
    captured = capsys.readouterr()
    assert "momentum_conservation: pass" in captured.out


def test_cli_config_file_with_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "model": "billiard-cartesian", "mode": "full", "horizon": 5.0,
        "scenario": "paper-c025", "out": str(tmp_path / "a")}))
    code = run_cli("run", "--config", str(cfg_path), "--horizon", "2",
                   "--out", str(tmp_path / "b"))
    assert code == 0
    record = json.loads(open(tmp_path / "b" / "run.json").read())
    assert record["config"]["horizon"] == 2


def test_cli_rerun_from_run_json_is_byte_identical(tmp_path):
    out1 = str(tmp_path / "r1")
    out2 = str(tmp_path / "r2")
    assert run_cli("run", "--model", "billiard-cartesian", "--scenario",
                   "paper-c025", "--mode", "full", "--horizon", "3",
                   "--out", out1) == 0
    assert run_cli("run", "--config", os.path.join(out1, "run.json"),
                   "--out", out2) == 0
    for name in ("trajectory.csv", "events.csv"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_cli_repeated_runs_byte_identical(tmp_path):
    outs = [str(tmp_path / f"rep{i}") for i in range(2)]
    for out in outs:
        assert run_cli("run", "--model", "billiard-polar", "--scenario",
                       "paper-c010", "--mode", "full", "--horizon", "2",
                       "--out", out) == 0
    for name in ("trajectory.csv", "events.csv"):
        a = open(os.path.join(outs[0], name), "rb").read()
        b = open(os.path.join(outs[1], name), "rb").read()
        assert a == b, name
