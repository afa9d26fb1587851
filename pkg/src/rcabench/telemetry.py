"""Unified telemetry records, case-directory persistence and windowed queries."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

METRIC_NAMES = (
    "cpu_usage",
    "memory_usage",
    "rpc_latency_mean",
    "rpc_latency_p95",
    "request_count",
    "error_count",
    "queue_depth",
    "gc_pause",
    "net_in",
    "net_out",
    "restarts",
    "liveness",
)
CONTAINER_METRICS = ("cpu_usage", "memory_usage")

SEVERITIES = ("INFO", "WARN", "ERROR")
STATUSES = ("OK", "ERROR", "TIMEOUT")

FILES = {"metrics": "metrics.ndrec", "logs": "logs.ndrec", "traces": "traces.ndrec"}
META_FILE = "meta.rec"


def ms_round(seconds: float) -> float:
    """Quantize a timestamp to whole milliseconds (decimal seconds)."""
    return round(seconds, 3)


@dataclass(frozen=True)
class MetricPoint:
    timestamp: float
    service: str
    pod: str
    container: str
    metric: str
    value: float


@dataclass(frozen=True)
class LogRecord:
    timestamp: float
    service: str
    pod: str
    trace_id: str
    severity: str
    template_id: str
    message: str


@dataclass(frozen=True)
class Span:
    trace_id: str
    span_id: str
    parent_id: str
    service: str
    pod: str
    operation: str
    start: float
    duration_ms: float
    status: str
    http_code: int

    @property
    def timestamp(self) -> float:
        return self.start

    @property
    def end(self) -> float:
        return self.start + self.duration_ms / 1000.0


@dataclass(frozen=True)
class CaseWindows:
    """Normal window [0, normal_s) followed by fault window [normal_s, normal_s + fault_s)."""

    normal_s: float
    fault_s: float

    @property
    def normal(self) -> tuple[float, float]:
        return (0.0, float(self.normal_s))

    @property
    def fault(self) -> tuple[float, float]:
        return (float(self.normal_s), float(self.normal_s + self.fault_s))

    @property
    def full(self) -> tuple[float, float]:
        return (0.0, float(self.normal_s + self.fault_s))

    @property
    def duration(self) -> float:
        return float(self.normal_s + self.fault_s)


@dataclass
class TelemetryBundle:
    windows: CaseWindows
    metrics: list[MetricPoint] = field(default_factory=list)
    logs: list[LogRecord] = field(default_factory=list)
    spans: list[Span] = field(default_factory=list)

    def roots(self) -> list[Span]:
        return [s for s in self.spans if not s.parent_id]


MODALITIES = {"metrics": MetricPoint, "logs": LogRecord, "traces": Span}


class TelemetryError(Exception):
    pass


class UnknownFilterError(TelemetryError, KeyError):
    pass


# -- persistence -----------------------------------------------------------

def _dump_line(rec) -> str:
    return json.dumps(asdict(rec), separators=(",", ":"), ensure_ascii=False)


def persist(bundle: TelemetryBundle, case_dir: str | Path, meta: dict[str, Any] | None = None) -> list[Path]:
    """Write the three record files plus ``meta.rec``; returns the paths written."""
    case_dir = Path(case_dir)
    try:
        case_dir.mkdir(parents=True, exist_ok=True)
        out = []
        for modality, name in FILES.items():
            recs = {"metrics": bundle.metrics, "logs": bundle.logs, "traces": bundle.spans}[modality]
            path = case_dir / name
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for r in recs:
                    fh.write(_dump_line(r))
                    fh.write("\n")
            os.replace(tmp, path)
            out.append(path)
        head = {"record": "case", "normal_s": bundle.windows.normal_s, "fault_s": bundle.windows.fault_s}
        head.update(meta or {})
        meta_path = case_dir / META_FILE
        meta_path.write_text(json.dumps(head, separators=(",", ":"), sort_keys=False) + "\n", encoding="utf-8")
        out.append(meta_path)
    except OSError as exc:
        raise TelemetryError(f"storage failure under {case_dir}: {exc}") from exc
    return out


def _load(path: Path, cls) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(cls(**json.loads(line)))
    return out


def read_meta(case_dir: str | Path) -> list[dict[str, Any]]:
    path = Path(case_dir) / META_FILE
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def append_meta(case_dir: str | Path, record: dict[str, Any]) -> None:
    with open(Path(case_dir) / META_FILE, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def read_bundle(case_dir: str | Path, modalities: Iterable[str] = ("metrics", "logs", "traces")) -> TelemetryBundle:
    case_dir = Path(case_dir)
    head = read_meta(case_dir)[0]
    bundle = TelemetryBundle(CaseWindows(head["normal_s"], head["fault_s"]))
    wanted = set(modalities)
    if "metrics" in wanted:
        bundle.metrics = _load(case_dir / FILES["metrics"], MetricPoint)
    if "logs" in wanted:
        bundle.logs = _load(case_dir / FILES["logs"], LogRecord)
    if "traces" in wanted:
        bundle.spans = _load(case_dir / FILES["traces"], Span)
    return bundle


# -- queries ---------------------------------------------------------------

def _records(bundle: TelemetryBundle, modality: str) -> list:
    if modality == "metrics":
        return bundle.metrics
    if modality == "logs":
        return bundle.logs
    if modality == "traces":
        return bundle.spans
    raise TelemetryError(f"unknown modality {modality!r}")


def query_window(bundle: TelemetryBundle, window: tuple[float, float], modality: str, **filters) -> list:
    """Records with timestamp in ``[start, end)`` matching every filter.

    Output is sorted by timestamp; ties keep storage order (spans tie-break on
    trace and span id).
    """
    cls = MODALITIES.get(modality)
    if cls is None:
        raise TelemetryError(f"unknown modality {modality!r}")
    known = {f.name for f in fields(cls)}
    for k in filters:
        if k not in known:
            raise UnknownFilterError(f"{modality} records have no field {k!r}")
    lo, hi = window
    hits = [
        r for r in _records(bundle, modality)
        if lo <= r.timestamp < hi and all(getattr(r, k) == v for k, v in filters.items())
    ]
    if modality == "traces":
        hits.sort(key=lambda s: (s.start, s.trace_id, s.span_id))
    else:
        hits.sort(key=lambda r: r.timestamp)
    return hits


# -- statistics ------------------------------------------------------------

@dataclass(frozen=True)
class SeriesStats:
    n: int
    mean: float
    std: float
    p95: float


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest value (1-based)."""
    n = len(values)
    if n == 0:
        raise ValueError("percentile of empty series")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be within [0, 1]")
    # round first so q*n that should be an integer is not pushed up by fp error
    k = max(1, math.ceil(round(q * n, 9)))
    return float(np.partition(np.asarray(values, dtype=float), k - 1)[k - 1])


def series_stats(values: Sequence[float], q: float = 0.95) -> SeriesStats:
    if len(values) == 0:
        raise ValueError("statistics of empty series")
    arr = np.asarray(values, dtype=float)
    return SeriesStats(len(arr), float(arr.mean()), float(arr.std()), percentile(arr, q))
