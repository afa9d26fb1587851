"""User-impact validation, fault-pattern classification and observability audit."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .faultspace import CODE, DNS, HTTP, NETWORK, RESOURCE, TIME
from .telemetry import CaseWindows, TelemetryBundle, percentile

HAS_ANOMALY, NO_ANOMALY = "HasAnomaly", "NoAnomaly"
SUCCESS_DROP, HARD_LATENCY, ADAPTIVE_LATENCY = "success-rate-drop", "hard-latency", "adaptive-latency"
TYPE_I, TYPE_II, TYPE_III = "TypeI", "TypeII", "TypeIII"

# metrics that carry the symptom of each fault category
CATEGORY_METRICS = {
    RESOURCE: ("cpu_usage", "memory_usage"),
    NETWORK: ("rpc_latency_mean", "error_count"),
    HTTP: ("rpc_latency_mean", "error_count"),
    CODE: ("rpc_latency_mean", "error_count", "gc_pause", "cpu_usage", "memory_usage"),
    DNS: ("error_count",),
    TIME: ("error_count",),
}

# modality that must be present to diagnose each category
REQUIRED_MODALITIES = {
    NETWORK: ("traces",),
    RESOURCE: ("metrics",),
    CODE: ("logs", "traces"),
    HTTP: ("traces",),
    DNS: ("traces",),
    TIME: ("metrics", "logs", "traces"),
}


class MalformedBundleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleParams:
    z_crit: float = 2.326  # one-sided alpha = 0.01
    hard_latency_ms: float = 10_000.0
    adaptive_multiplier: float = 3.0
    n_min: int = 30
    pronounced_ratio: float = 2.0


@dataclass(frozen=True)
class ValidationVerdict:
    label: str
    triggered: tuple[str, ...]
    z: float
    p95_normal: float
    p95_fault: float
    n_normal: int
    n_fault: int
    success_normal: int
    success_fault: int
    insufficient: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": "verdict",
            "label": self.label,
            "triggered": list(self.triggered),
            "z": round(self.z, 9),
            "p95_normal": self.p95_normal,
            "p95_fault": self.p95_fault,
            "n_normal": self.n_normal,
            "n_fault": self.n_fault,
            "success_normal": self.success_normal,
            "success_fault": self.success_fault,
            "insufficient": self.insufficient,
        }


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> float:
    """Pooled z for H1: p1 > p2, with p1 = x1/n1 (normal) and p2 = x2/n2 (fault)."""
    if n1 <= 0 or n2 <= 0:
        raise ValueError("sample sizes must be positive")
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    if pooled <= 0.0 or pooled >= 1.0:
        return 0.0
    return (p1 - p2) / math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))


def _roots(bundle: TelemetryBundle, window: tuple[float, float]):
    lo, hi = window
    return [s for s in bundle.spans if not s.parent_id and lo <= s.start < hi]


def validate_case(bundle: TelemetryBundle, windows: CaseWindows | None = None,
                  params: OracleParams = OracleParams()) -> ValidationVerdict:
    windows = windows or bundle.windows
    if windows is None:
        raise MalformedBundleError("bundle has no window boundaries")
    if any(s.duration_ms < 0 for s in bundle.spans):
        raise MalformedBundleError("negative span duration")
    normal = _roots(bundle, windows.normal)
    fault = _roots(bundle, windows.fault)
    n1, n2 = len(normal), len(fault)
    x1 = sum(s.status == "OK" for s in normal)
    x2 = sum(s.status == "OK" for s in fault)
    p95n = percentile([s.duration_ms for s in normal], 0.95) if normal else 0.0
    p95f = percentile([s.duration_ms for s in fault], 0.95) if fault else 0.0
    if n1 < params.n_min or n2 < params.n_min:
        return ValidationVerdict(NO_ANOMALY, (), 0.0, p95n, p95f, n1, n2, x1, x2, insufficient=True)
    z = two_proportion_z(x1, n1, x2, n2)
    triggered = []
    if z > params.z_crit:
        triggered.append(SUCCESS_DROP)
    if p95f > params.hard_latency_ms:
        triggered.append(HARD_LATENCY)
    if p95f > params.adaptive_multiplier * p95n:
        triggered.append(ADAPTIVE_LATENCY)
    label = HAS_ANOMALY if triggered else NO_ANOMALY
    return ValidationVerdict(label, tuple(triggered), z, p95n, p95f, n1, n2, x1, x2)


# -- pattern classification ------------------------------------------------

@dataclass(frozen=True)
class PatternClass:
    cls: str
    ratios: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": "pattern",
            "class": self.cls,
            "ratios": {k: (v if math.isfinite(v) else "inf") for k, v in sorted(self.ratios.items())},
        }


def _ratio(fault: float, normal: float) -> float:
    if normal == 0.0:
        return 1.0 if fault == 0.0 else math.inf
    return fault / normal


def symptom_ratios(bundle: TelemetryBundle, category: str, windows: CaseWindows | None = None) -> dict[str, float]:
    """Per service: the largest fault/normal ratio over relevant metric means and ERROR-log counts."""
    windows = windows or bundle.windows
    wanted = set(CATEGORY_METRICS[category])
    sums: dict[tuple[str, str, int], list[float]] = defaultdict(lambda: [0.0, 0])
    n0, n1 = windows.normal
    f0, f1 = windows.fault
    services = set()
    for m in bundle.metrics:
        services.add(m.service)
        if m.metric not in wanted:
            continue
        if n0 <= m.timestamp < n1:
            w = 0
        elif f0 <= m.timestamp < f1:
            w = 1
        else:
            continue
        acc = sums[(m.service, m.metric, w)]
        acc[0] += m.value
        acc[1] += 1
    errs: dict[tuple[str, int], int] = defaultdict(int)
    for r in bundle.logs:
        services.add(r.service)
        if r.severity != "ERROR":
            continue
        if n0 <= r.timestamp < n1:
            errs[(r.service, 0)] += 1
        elif f0 <= r.timestamp < f1:
            errs[(r.service, 1)] += 1
    for s in bundle.spans:
        services.add(s.service)
    services.discard("")

    def mean(svc, metric, w):
        total, n = sums.get((svc, metric, w), (0.0, 0))
        return total / n if n else 0.0

    out = {}
    for svc in sorted(services):
        best = _ratio(errs.get((svc, 1), 0) / max(windows.fault_s, 1e-9), errs.get((svc, 0), 0) / max(windows.normal_s, 1e-9))
        for metric in wanted:
            best = max(best, _ratio(mean(svc, metric, 1), mean(svc, metric, 0)))
        out[svc] = best
    return out


def classify_ratios(ratios: dict[str, float], injected: str, threshold: float = 2.0) -> str:
    """TypeII if nothing is pronounced; TypeIII if another service's ratio strictly
    exceeds the injected one's; TypeI otherwise."""
    inj = ratios.get(injected, 1.0)
    pronounced = [s for s, r in ratios.items() if r >= threshold]
    if not pronounced:
        return TYPE_II
    if any(r > inj for s, r in ratios.items() if s != injected):
        return TYPE_III
    return TYPE_I


def classify_pattern(bundle: TelemetryBundle, injected_service: str, category: str,
                     windows: CaseWindows | None = None, params: OracleParams = OracleParams()) -> PatternClass:
    ratios = symptom_ratios(bundle, category, windows)
    ratios.setdefault(injected_service, 1.0)
    return PatternClass(classify_ratios(ratios, injected_service, params.pronounced_ratio), ratios)


# -- observability audit ---------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    modalities_ok: bool
    missing: tuple[str, ...]
    propagates: bool
    reason: str

    @property
    def complete(self) -> bool:
        return self.modalities_ok and self.propagates

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": "audit",
            "complete": self.complete,
            "modalities_ok": self.modalities_ok,
            "missing": list(self.missing),
            "propagates": self.propagates,
            "reason": self.reason,
        }


def _mean_shift_z(a: list[float], b: list[float]) -> float:
    if len(a) < 2 or len(b) < 2:
        return 0.0
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    se = math.sqrt(va / len(a) + vb / len(b))
    if se == 0.0:
        return 0.0 if np.mean(a) == np.mean(b) else math.inf
    return float((np.mean(b) - np.mean(a)) / se)


def audit_observability(bundle: TelemetryBundle, category: str, windows: CaseWindows | None = None,
                        params: OracleParams = OracleParams()) -> AuditReport:
    windows = windows or bundle.windows
    f0, f1 = windows.fault
    present = {
        "metrics": any(f0 <= m.timestamp < f1 for m in bundle.metrics),
        "logs": any(f0 <= r.timestamp < f1 for r in bundle.logs),
        "traces": any(f0 <= s.start < f1 for s in bundle.spans),
    }
    missing = tuple(m for m in REQUIRED_MODALITIES[category] if not present[m])
    normal = _roots(bundle, windows.normal)
    fault = _roots(bundle, windows.fault)
    reasons = []
    if normal and fault:
        z = two_proportion_z(sum(s.status == "OK" for s in normal), len(normal),
                             sum(s.status == "OK" for s in fault), len(fault))
        if z > params.z_crit:
            reasons.append("status")
        if _mean_shift_z([s.duration_ms for s in normal], [s.duration_ms for s in fault]) > params.z_crit:
            reasons.append("latency")
    elif normal and not fault:
        reasons.append("status")
    prop = bool(reasons)
    reason = "+".join(reasons) if prop else "no user-facing propagation"
    if missing:
        reason = f"missing {','.join(missing)}; {reason}"
    return AuditReport(not missing, missing, prop, reason)
