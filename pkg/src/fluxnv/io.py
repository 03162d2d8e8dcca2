"""Result envelopes and their CSV / JSON / SVG writers.

JSON schema (``fluxnv.result/1``)::

    {
      "schema": "fluxnv.result/1",
      "kind": "time_trace" | "chevron" | "spectrum" | "fit" | "report" | "estimate" | "calibration",
      "config": {<resolved config, file units>},
      "axes": {<axis name>: <unit>},
      "payload": {<kind-specific arrays and scalars>},
      "provenance": {"package_version": str, "seed": int | null, "created": str | null}
    }

Floats are written with ``repr`` precision, so values round-trip exactly.
``created`` is only filled in on request; leaving it empty keeps reruns
byte-identical.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from . import __version__
from .errors import OutputError

SCHEMA_VERSION = "fluxnv.result/1"

AXES = {
    "time_trace": {"time_ns": "ns"},
    "chevron": {"detuning_ghz": "GHz", "time_ns": "ns"},
    "spectrum": {"flux_offset_mphi0": "mPhi0", "epsilon_ghz": "GHz", "frequency_ghz": "GHz"},
}


@dataclass
class ResultEnvelope:
    kind: str
    payload: Dict[str, Any]
    config: Dict[str, Any] = field(default_factory=dict)
    axes: Dict[str, str] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    schema: str = SCHEMA_VERSION

    def __post_init__(self):
        if not self.axes:
            self.axes = dict(AXES.get(self.kind, {}))
        self.provenance = {"package_version": __version__, "seed": None, "created": None, **self.provenance}

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "kind": self.kind,
            "config": self.config,
            "axes": self.axes,
            "payload": _plain(self.payload),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultEnvelope":
        if d.get("schema") != SCHEMA_VERSION:
            raise OutputError(f"unsupported result schema {d.get('schema')!r}")
        return cls(d["kind"], d["payload"], d.get("config", {}), d.get("axes", {}), d.get("provenance", {}))


def envelope(kind: str, result, config=None, seed: Optional[int] = None, created: Optional[str] = None) -> ResultEnvelope:
    """Wrap a result object (anything with ``to_dict``) or a plain dict."""
    payload = result.to_dict() if hasattr(result, "to_dict") else dict(result)
    cfg = config.to_dict() if hasattr(config, "to_dict") else (config or {})
    return ResultEnvelope(kind, payload, cfg, provenance={"seed": seed, "created": created})


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_json(env: ResultEnvelope) -> str:
    return json.dumps(env.to_dict(), sort_keys=True, indent=1) + "\n"


def read_json(path: str) -> ResultEnvelope:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise OutputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return ResultEnvelope.from_dict(data)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def _csv_rows(env: ResultEnvelope):
    p = env.payload
    if env.kind == "time_trace":
        header = ["time_ns", "p_ground", "p_qubit_excited", "p_bright", "p_dark", "p_switch"]
        return header, zip(*(p[h] for h in header))
    if env.kind == "chevron":
        header = ["detuning_ghz", "time_ns", "p_switch"]
        rows = (
            (d, t, v)
            for d, row in zip(p["detuning_ghz"], p["p_switch"])
            for t, v in zip(p["time_ns"], row)
        )
        return header, rows
    if env.kind == "spectrum":
        header = ["flux_offset_mphi0", "epsilon_ghz", "transition_index", "frequency_ghz", "weight"]
        rows = (
            (x, e, k, f, w)
            for x, e, fr, wr in zip(p["flux_offset_mphi0"], p["epsilon_ghz"], p["frequency_ghz"], p["weight"])
            for k, (f, w) in enumerate(zip(fr, wr))
        )
        return header, rows
    scalars = [(k, v) for k, v in sorted(p.items()) if not isinstance(v, (dict, list))]
    if not scalars:
        raise OutputError(f"no CSV representation for result kind {env.kind!r}")
    return ["quantity", "value"], scalars


def to_csv(env: ResultEnvelope) -> str:
    header, rows = _csv_rows(env)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def to_svg(env: ResultEnvelope) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "fluxnv"
    p = env.payload
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        if env.kind == "time_trace":
            ax.plot(p["time_ns"], p["p_switch"], color="tab:blue", lw=1.2, label="switching probability")
            ax.plot(p["time_ns"], p["p_qubit_excited"], color="tab:red", lw=0.8, label="qubit excited")
            ax.set_xlabel("hold time (ns)")
            ax.set_ylabel("probability")
            ax.legend(loc="upper right", frameon=False)
        elif env.kind == "chevron":
            mesh = ax.pcolormesh(
                np.asarray(p["time_ns"]), 1e3 * np.asarray(p["detuning_ghz"]), np.asarray(p["p_switch"]), shading="auto"
            )
            fig.colorbar(mesh, ax=ax, label="switching probability")
            ax.set_xlabel("hold time (ns)")
            ax.set_ylabel("detuning (MHz)")
        elif env.kind == "spectrum":
            x = np.asarray(p["flux_offset_mphi0"])
            f = np.asarray(p["frequency_ghz"])
            w = np.asarray(p["weight"])
            for k in range(f.shape[1]):
                ax.scatter(x, f[:, k], s=20 * w[:, k], color="k", linewidths=0)
            ax.set_xlabel("flux offset (mPhi0)")
            ax.set_ylabel("transition frequency (GHz)")
        else:
            raise OutputError(f"no SVG representation for result kind {env.kind!r}")
        buf = _io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return buf.getvalue()


WRITERS = {"json": to_json, "csv": to_csv, "svg": to_svg}


def emit(env: ResultEnvelope, fmt: str, path: Optional[str] = None) -> str:
    """Serialize ``env``; write to ``path`` if given, and return the text."""
    if fmt not in WRITERS:
        raise OutputError(f"unsupported format {fmt!r}; choose from {sorted(WRITERS)}")
    text = WRITERS[fmt](env)
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
    return text


def read_trace_csv(path: str):
    """Load a time-trace CSV written by :func:`emit`."""
    from .dynamics import TimeTrace

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    if not rows or "time_ns" not in rows[0]:
        raise OutputError(f"{path} is not a time-trace CSV")
    cols = {k: [float(r[k]) for r in rows] for k in rows[0]}
    return TimeTrace.from_dict(cols)
