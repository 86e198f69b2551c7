"""Serialization of runs: trajectory/event tables and run metadata.

Numbers are written with 17 significant digits so a double round-trips
losslessly; all writers are deterministic (fixed column order, sorted
JSON keys), which is what makes repeated runs byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParseError
from .hybrid import HybridFlow, SimOptions
from .reduction import ReconstructedFlow

SCHEMA_VERSION = 1


def fmt(x) -> str:
    """17-significant-digit decimal form of a float."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def trajectory_header(n: int, with_theta: bool = False):
    cols = (["t", "arc_index"]
            + [f"q_{i+1}" for i in range(n)]
            + [f"v_{i+1}" for i in range(n)])
    if with_theta:
        cols += ["theta", "theta_dot"]
    return cols


def events_header(n: int):
    return (["tau"]
            + [f"pre_q_{i+1}" for i in range(n)]
            + [f"pre_v_{i+1}" for i in range(n)]
            + [f"post_q_{i+1}" for i in range(n)]
            + [f"post_v_{i+1}" for i in range(n)]
            + ["guard_residual"])


def write_trajectory_csv(path, flow: HybridFlow,
                         recon: Optional[ReconstructedFlow] = None):
    """One row per step-grid point, tagged with its arc index. When a
    reconstruction is passed its cyclic coordinate columns are appended."""
    n = flow.arcs[0].states.shape[1] // 2
    lines = [",".join(trajectory_header(n, with_theta=recon is not None))]
    for k, arc in enumerate(flow.arcs):
        for i, t in enumerate(arc.times):
            row = [fmt(t), str(k)]
            row += [fmt(x) for x in arc.states[i]]
            if recon is not None:
                row += [fmt(recon.theta[k][i]), fmt(recon.theta_dot[k][i])]
            lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def write_events_csv(path, flow: HybridFlow):
    if flow.events:
        n = len(flow.events[0].pre.q)
    else:
        n = flow.arcs[0].states.shape[1] // 2
    lines = [",".join(events_header(n))]
    for e in flow.events:
        row = ([fmt(e.tau)]
               + [fmt(x) for x in e.pre.q] + [fmt(x) for x in e.pre.v]
               + [fmt(x) for x in e.post.q] + [fmt(x) for x in e.post.v]
               + [fmt(e.guard_residual)])
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# JSON records
# ---------------------------------------------------------------------------

def dumps_record(record: dict) -> str:
    """Deterministic JSON text: sorted keys, 17-significant-digit floats."""
    out = []
    _render(record, out, 0)
    return "".join(out)


def write_json(path, record: dict):
    _write_text(path, dumps_record(record) + "\n")


def _render(obj, out, level):
    pad = "  " * level
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f'{pad}  {json.dumps(str(k))}: ')
            _render(v, out, level + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad + "  ")
            _render(v, out, level + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt(obj))
    else:
        out.append(json.dumps(str(obj)))


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

MODES = ("full", "reduced", "resequenced", "compare", "verify")

_CONFIG_KEYS = {
    "model": str,
    "scenario": str,
    "mode": str,
    "horizon": float,
    "out": str,
    "rtol": float,
    "atol": float,
    "max_step": float,
    "event_tol": float,
    "guard_tol": float,
    "min_dwell": float,
    "max_impacts": int,
    "initial_t": float,
    "initial_q": list,
    "initial_v": list,
    "m": float,
    "c": float,
    "direction_mode": str,
    "polar_reset_sign": str,
    "write_trajectory": bool,
    "write_events": bool,
}

_POSITIVE_KEYS = ("horizon", "rtol", "atol", "max_step", "event_tol",
                  "guard_tol", "min_dwell")


@dataclass
class RunConfig:
    """Validated description of one CLI run."""

    model: str
    mode: str
    horizon: float
    scenario: Optional[str] = None
    out: str = "."
    initial_t: Optional[float] = None
    initial_q: Optional[list] = None
    initial_v: Optional[list] = None
    m: Optional[float] = None
    c: Optional[float] = None
    direction_mode: Optional[str] = None
    polar_reset_sign: Optional[str] = None
    write_trajectory: bool = True
    write_events: bool = True
    options: SimOptions = field(default_factory=SimOptions)

    def to_record(self) -> dict:
        rec = {
            "model": self.model,
            "mode": self.mode,
            "horizon": self.horizon,
            "out": self.out,
            "write_trajectory": self.write_trajectory,
            "write_events": self.write_events,
            "rtol": self.options.rtol,
            "atol": self.options.atol,
            "event_tol": self.options.event_tol,
            "guard_tol": self.options.guard_tol,
            "min_dwell": self.options.min_dwell,
            "max_impacts": self.options.max_impacts,
        }
        if np.isfinite(self.options.max_step):
            rec["max_step"] = self.options.max_step
        for key in ("scenario", "initial_t", "initial_q", "initial_v", "m",
                    "c", "direction_mode", "polar_reset_sign"):
            val = getattr(self, key)
            if val is not None:
                rec[key] = val
        return rec


def parse_config(text: str) -> RunConfig:
    """Parse a flat JSON document into a RunConfig.

    Unknown keys are rejected; values are type- and range-checked;
    defaults follow the module defaults. Raises ParseError with the
    offending key.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column "
                         f"{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("configuration must be a JSON object")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RunConfig:
    from .models import MODEL_IDS, SCENARIO_IDS

    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown configuration key {key!r}", key=key)
        want = _CONFIG_KEYS[key]
        if want is float and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            continue
        if want is int and isinstance(value, int) and not isinstance(value, bool):
            continue
        if not isinstance(value, want) or (want is not bool
                                           and isinstance(value, bool)):
            raise ParseError(f"key {key!r} expects {want.__name__}, got "
                             f"{type(value).__name__}", key=key)
    for key in ("model", "mode", "horizon"):
        if key not in doc:
            raise ParseError(f"missing required key {key!r}", key=key)
    for key in _POSITIVE_KEYS:
        if key in doc and not doc[key] > 0:
            raise ParseError(f"key {key!r} must be positive", key=key)
    if "max_impacts" in doc and doc["max_impacts"] < 1:
        raise ParseError("key 'max_impacts' must be >= 1", key="max_impacts")
    if doc["mode"] not in MODES:
        raise ParseError(f"unknown mode {doc['mode']!r}; expected one of "
                         f"{MODES}", key="mode")
    if doc["model"] not in MODEL_IDS:
        raise ParseError(f"unknown model id {doc['model']!r}; expected one "
                         f"of {MODEL_IDS}", key="model")
    if "scenario" in doc and doc["scenario"] not in SCENARIO_IDS:
        raise ParseError(f"unknown scenario id {doc['scenario']!r}; expected "
                         f"one of {SCENARIO_IDS}", key="scenario")
    if "direction_mode" in doc and doc["direction_mode"] not in (
            "co-moving", "outward"):
        raise ParseError("direction_mode must be 'co-moving' or 'outward'",
                         key="direction_mode")
    if "polar_reset_sign" in doc and doc["polar_reset_sign"] not in (
            "inward", "chart"):
        raise ParseError("polar_reset_sign must be 'inward' or 'chart'",
                         key="polar_reset_sign")
    for key in ("initial_q", "initial_v"):
        if key in doc:
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in doc[key]):
                raise ParseError(f"key {key!r} must be a list of numbers",
                                 key=key)

    opts = SimOptions()
    for attr in ("rtol", "atol", "max_step", "event_tol", "guard_tol",
                 "min_dwell", "max_impacts"):
        if attr in doc:
            setattr(opts, attr, type(getattr(opts, attr))(doc[attr]))
    return RunConfig(
        model=doc["model"], mode=doc["mode"], horizon=float(doc["horizon"]),
        scenario=doc.get("scenario"), out=doc.get("out", "."),
        initial_t=(float(doc["initial_t"]) if "initial_t" in doc else None),
        initial_q=doc.get("initial_q"), initial_v=doc.get("initial_v"),
        m=(float(doc["m"]) if "m" in doc else None),
        c=(float(doc["c"]) if "c" in doc else None),
        direction_mode=doc.get("direction_mode"),
        polar_reset_sign=doc.get("polar_reset_sign"),
        write_trajectory=doc.get("write_trajectory", True),
        write_events=doc.get("write_events", True),
        options=opts)
