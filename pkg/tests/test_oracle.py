import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from rcabench.oracle import (
    MalformedBundleError,
    OracleParams,
    audit_observability,
    classify_ratios,
    two_proportion_z,
    validate_case,
)
from rcabench.telemetry import CaseWindows, LogRecord, MetricPoint, Span, TelemetryBundle

W = CaseWindows(100, 100)


def roots(n, start, dur=10.0, ok=None, status_bad="ERROR"):
    ok = n if ok is None else ok
    return [Span(f"{start}-{i}", "1", "", "A", "a-0", "home", start + i * 99.0 / n, dur,
                 "OK" if i < ok else status_bad, 200 if i < ok else 500) for i in range(n)]


def bundle(normal, fault, metrics=(), logs=()):
    return TelemetryBundle(W, list(metrics), list(logs), normal + fault)


def reference_z(x1, n1, x2, n2):
    p = (x1 + x2) / (n1 + n2)
    if p in (0, 1):
        return 0.0
    return (x1 / n1 - x2 / n2) / math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))


@settings(max_examples=300)
@given(st.integers(1, 5000), st.integers(1, 5000), st.data())
def test_z_matches_reference(n1, n2, data):
    x1 = data.draw(st.integers(0, n1))
    x2 = data.draw(st.integers(0, n2))
    assert two_proportion_z(x1, n1, x2, n2) == pytest.approx(reference_z(x1, n1, x2, n2), abs=1e-9)


def test_worked_example():
    assert two_proportion_z(990, 1000, 400, 500) == pytest.approx(13.3, abs=0.1)


@given(st.integers(1, 500), st.integers(1, 500), st.data())
def test_z_antisymmetric(n1, n2, data):
    x1 = data.draw(st.integers(0, n1))
    x2 = data.draw(st.integers(0, n2))
    assume(0 < x1 + x2 < n1 + n2)
    assert two_proportion_z(x1, n1, x2, n2) == pytest.approx(-two_proportion_z(x2, n2, x1, n1))


def test_z_rejects_empty_samples():
    with pytest.raises(ValueError):
        two_proportion_z(0, 0, 1, 1)


def test_clean_case_is_no_anomaly():
    v = validate_case(bundle(roots(200, 0), roots(200, 100)))
    assert v.label == "NoAnomaly" and v.triggered == () and v.z == 0.0


def test_success_drop_triggers():
    v = validate_case(bundle(roots(200, 0), roots(200, 100, ok=170)))
    assert v.label == "HasAnomaly" and "success-rate-drop" in v.triggered
    assert v.z > OracleParams().z_crit


def test_small_drop_does_not_trigger():
    v = validate_case(bundle(roots(200, 0), roots(200, 100, ok=199)))
    assert v.label == "NoAnomaly"


def test_adaptive_latency_triggers_on_p95_only():
    fault = roots(100, 100, dur=10.0)
    fault[:5] = roots(5, 100, dur=500.0)  # 5% slow tail sits at the P95 boundary
    v = validate_case(bundle(roots(100, 0), fault))
    assert v.label == "NoAnomaly"
    fault[:6] = roots(6, 100, dur=500.0)
    v = validate_case(bundle(roots(100, 0), fault))
    assert v.triggered == ("adaptive-latency",)


def test_hard_latency_triggers_even_without_shift():
    v = validate_case(bundle(roots(100, 0, dur=4000.0), roots(100, 100, dur=11_000.0)))
    assert "hard-latency" in v.triggered


def test_insufficient_samples():
    v = validate_case(bundle(roots(10, 0), roots(10, 100, ok=0)))
    assert v.label == "NoAnomaly" and v.insufficient


def test_malformed_bundle():
    bad = roots(40, 0)
    bad[0] = Span("x", "1", "", "A", "a-0", "home", 1.0, -5.0, "OK", 200)
    with pytest.raises(MalformedBundleError):
        validate_case(bundle(bad, roots(40, 100)))


@pytest.mark.parametrize("ratios,injected,expected", [
    ({"A": 1.0, "B": 1.5}, "B", "TypeII"),
    ({"A": 1.0, "B": 5.0}, "B", "TypeI"),
    ({"A": 5.0, "B": 5.0}, "B", "TypeI"),
    ({"A": 6.0, "B": 5.0}, "B", "TypeIII"),
    ({"A": 3.0, "B": 1.0}, "B", "TypeIII"),
    ({"A": math.inf, "B": 1.0}, "B", "TypeIII"),
    ({"A": 1.0}, "B", "TypeII"),
])
def test_classify_ratios(ratios, injected, expected):
    assert classify_ratios(ratios, injected) == expected


def test_audit_flags_missing_modalities_and_no_propagation():
    b = bundle(roots(100, 0), roots(100, 100))
    rep = audit_observability(b, "Resource")
    assert rep.missing == ("metrics",) and not rep.complete
    assert not rep.propagates


def test_audit_complete_case():
    metrics = [MetricPoint(150.0, "A", "a-0", "a-0-main", "cpu_usage", 1.0)]
    logs = [LogRecord(150.0, "A", "a-0", "t", "ERROR", "E", "x")]
    b = bundle(roots(100, 0), roots(100, 100, ok=50), metrics, logs)
    rep = audit_observability(b, "Time")
    assert rep.complete and rep.reason == "status"
