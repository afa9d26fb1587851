"""End-to-end acceptance criteria; each test records one pass/fail line."""

import math
import os
import random
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
import yaml

from rcabench import cli
from rcabench.campaign import case_seed
from rcabench.evaluation import (
    CaseResult, EvalCase, avg_k, dataset_stats, mrr, run_evaluation, scalability_run, top_k,
)
from rcabench.faultspace import FaultSpec, default_registry, make_spec, space_cardinality
from rcabench.groundtruth import resolved_service
from rcabench.oracle import classify_pattern, validate_case
from rcabench.rca import CaseInput, RandomBaseline, SimpleRCA, simple_rca
from rcabench.simengine import CaseProtocol, run_case
from rcabench.telemetry import CaseWindows, Span, TelemetryBundle, persist, read_bundle, read_meta
from rcabench.topology import count_paths, load_topology, structural_reach
from rcabench.workload import profile_from_dict

SHORT = CaseProtocol(warmup_s=30, normal_s=120, fault_s=120)
PINNED_TRAINTICKET_CARDINALITY = 6473924464450493


@pytest.fixture(scope="module")
def chain3():
    return load_topology("chain3")


@pytest.fixture(scope="module")
def trainticket():
    return load_topology("trainticket50")


# -- 1 ---------------------------------------------------------------------

def _brute_top(ranks, k):
    hits = 0
    for r in ranks:
        if r != math.inf and int(r) <= k:
            hits += 1
    return hits / len(ranks)


def _brute_avg(ranks, k):
    return sum(_brute_top(ranks, i) for i in range(1, k + 1)) / k


def _brute_mrr(ranks):
    return sum(1.0 / r for r in ranks if r != math.inf) / len(ranks)


def test_c01_metric_oracle_equivalence(criterion):
    rng = random.Random(1)
    vectors = []
    for _ in range(1000):
        n = rng.randint(1, 60)
        vectors.append([math.inf if rng.random() < 0.1 else float(rng.randint(1, 50)) for _ in range(n)])
    t0 = time.perf_counter()
    ours = []
    for v in vectors:
        res = [CaseResult(f"c{i}", "a", r) for i, r in enumerate(v)]
        ours.append([top_k(res, 1), top_k(res, 3), top_k(res, 5), avg_k(res, 3), avg_k(res, 5), mrr(res)])
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for v, got in zip(vectors, ours):
        ref = [_brute_top(v, 1), _brute_top(v, 3), _brute_top(v, 5), _brute_avg(v, 3), _brute_avg(v, 5), _brute_mrr(v)]
        worst = max(worst, max(abs(a - b) for a, b in zip(got, ref)))
    ok = worst <= 1e-12 and elapsed < 1.0
    criterion(1, ok, f"max abs diff {worst:.2e} (<= 1e-12), runtime {elapsed:.3f}s (< 1s)")
    assert ok


# -- 2 ---------------------------------------------------------------------

def _roots_bundle(n1, x1, n2, x2):
    w = CaseWindows(100.0, 100.0)
    spans = []
    for i in range(n1):
        spans.append(Span(f"n{i}", "s0", "", "A", "a-0", "home", i * (99.0 / n1), 10.0,
                          "OK" if i < x1 else "ERROR", 200 if i < x1 else 500))
    for i in range(n2):
        spans.append(Span(f"f{i}", "s0", "", "A", "a-0", "home", 100.0 + i * (99.0 / n2), 10.0,
                          "OK" if i < x2 else "ERROR", 200 if i < x2 else 500))
    return TelemetryBundle(w, [], [], spans)


def _reference_z(x1, n1, x2, n2):
    p1, p2 = np.float64(x1) / n1, np.float64(x2) / n2
    p = np.float64(x1 + x2) / (n1 + n2)
    if p in (0.0, 1.0):
        return 0.0
    return float((p1 - p2) / np.sqrt(p * (1 - p) * (1.0 / n1 + 1.0 / n2)))


def test_c02_z_test(criterion):
    rng = random.Random(2)
    worst = 0.0
    for _ in range(1000):
        n1, n2 = rng.randint(30, 400), rng.randint(30, 400)
        x1, x2 = rng.randint(0, n1), rng.randint(0, n2)
        v = validate_case(_roots_bundle(n1, x1, n2, x2))
        worst = max(worst, abs(v.z - _reference_z(x1, n1, x2, n2)))
    example = validate_case(_roots_bundle(1000, 990, 500, 400)).z
    ok = worst <= 1e-9 and abs(example - 13.3) <= 0.1
    criterion(2, ok, f"max |z - ref| {worst:.2e} (<= 1e-9), worked example z={example:.3f} (13.3 +/- 0.1)")
    assert ok


# -- 3 ---------------------------------------------------------------------

def test_c03_null_calibration(criterion, chain3):
    prof = profile_from_dict({"qps": 10})
    t0 = time.perf_counter()
    flagged = 0
    for i in range(200):
        bundle, _ = run_case(chain3, prof, SHORT, None, case_seed(3, i))
        flagged += validate_case(bundle).label == "HasAnomaly"
    elapsed = time.perf_counter() - t0
    rate = flagged / 200
    ok = rate <= 0.02 and elapsed < 120
    criterion(3, ok, f"HasAnomaly rate {rate:.3f} (<= 0.02) over 200 fault-free cases, runtime {elapsed:.1f}s (< 120s)")
    assert ok


# -- 4 ---------------------------------------------------------------------

def test_c04_type1_construction(criterion, chain3):
    reg = default_registry()
    prof = profile_from_dict({"qps": 10})
    pods = [chain3.graph.service(s).pods[0] for s in ("A", "B", "C")]
    loads = (0.5, 1, 2)
    classes, hits = [], []
    for i in range(50):
        pod = pods[i % 3]
        spec = make_spec(reg, "CPUStress", pod, SHORT.fault_window, load=loads[(i // 3) % 3], workers=1)
        bundle, _ = run_case(chain3, prof, SHORT, spec, case_seed(4, i))
        svc = resolved_service(spec, chain3.graph)
        classes.append(classify_pattern(bundle, svc, spec.category).cls)
        hits.append(simple_rca(bundle, None, chain3.graph).rank_of(svc) == 1)
    n_type1 = classes.count("TypeI")
    top1 = sum(hits) / len(hits)
    ok = n_type1 == 50 and top1 == 1.0
    criterion(4, ok, f"{n_type1}/50 TypeI, SimpleRCA Top@1 {top1:.2f} (= 1.0)")
    assert ok


# -- 5 ---------------------------------------------------------------------

def test_c05_symptom_drift_construction(criterion, chain3):
    reg = default_registry()
    prof = profile_from_dict({"qps": 10})
    faults = [
        ("HTTPResponseReplaceCode", {"code": 500}),
        ("HTTPResponseReplaceCode", {"code": 503}),
        ("HTTPResponsePatchBody", {"patch": "null_field"}),
        ("HTTPResponsePatchBody", {"patch": "wrong_type"}),
        ("HTTPResponseReplaceBody", {"body": "empty"}),
        ("HTTPResponseReplaceBody", {"body": "truncated"}),
    ]
    probs = (0.5, 0.75, 0.9, 1.0)
    classes, hits = [], []
    for i in range(50):
        ft, kw = faults[i % len(faults)]
        spec = make_spec(reg, ft, "B->C", SHORT.fault_window, probability=probs[i % len(probs)], **kw)
        bundle, _ = run_case(chain3, prof, SHORT, spec, case_seed(5, i))
        svc = resolved_service(spec, chain3.graph)
        classes.append(classify_pattern(bundle, svc, spec.category).cls)
        hits.append(simple_rca(bundle, None, chain3.graph).rank_of(svc) == 1)
    n_type3 = classes.count("TypeIII")
    top1 = sum(hits) / len(hits)
    ok = n_type3 == 50 and top1 <= 0.5
    criterion(5, ok, f"{n_type3}/50 TypeIII on the deep edge B->C, SimpleRCA Top@1 {top1:.2f} (<= 0.5)")
    assert ok


# -- 6 ---------------------------------------------------------------------

def test_c06_impact_filter_regimes(criterion, chain3, trainticket):
    reg = default_registry()
    grid = reg["CPUStress"].params[0].values
    proto = CaseProtocol()
    prof = profile_from_dict({})
    labels = {}
    for load in grid:
        spec = make_spec(reg, "CPUStress", "b-0", proto.fault_window, load=load, workers=1)
        bundle, _ = run_case(chain3, prof, proto, spec, case_seed(6, int(load * 100)))
        labels[load] = validate_case(bundle).label
    lo, hi = min(grid), max(grid)
    middle = [l for l in grid if l not in (lo, hi) and labels[l] == "HasAnomaly"]
    stress_ok = labels[lo] == "NoAnomaly" and labels[hi] == "NoAnomaly" and bool(middle)

    abort_proto = CaseProtocol(warmup_s=10, normal_s=120, fault_s=120)
    edges = reg["HTTPRequestAbort"].targets(trainticket.graph)[::4]
    has = 0
    for i, e in enumerate(edges):
        spec = make_spec(reg, "HTTPRequestAbort", e, abort_proto.fault_window, probability=1.0)
        bundle, _ = run_case(trainticket, prof, abort_proto, spec, case_seed(60, i))
        has += validate_case(bundle).label == "HasAnomaly"
    abort_rate = has / len(edges)
    ok = stress_ok and abort_rate >= 0.99
    band = ",".join(f"{l:g}" for l in middle)
    criterion(6, ok, f"CPUStress on B: load {lo:g} {labels[lo]}, load {hi:g} {labels[hi]}, HasAnomaly band {{{band}}}; "
                     f"HTTPRequestAbort(p=1.0) HasAnomaly {has}/{len(edges)} = {abort_rate:.2%} (>= 99%)")
    assert ok


# -- 7 ---------------------------------------------------------------------

DET_CONFIG = {
    "topology": "chain3",
    "seed": 11,
    "workload": {"qps": 8},
    "protocol": {"warmup_s": 20, "normal_s": 60, "fault_s": 60},
    "faults": {"sizes": {"Resource": 2, "Network": 2, "HTTP": 2, "Code": 2}, "controls": 1},
    "algorithms": ["simple_rca", "random"],
}


def _tree(root: Path, skip=("timing.tsv", "config.yaml")):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in skip}


def test_c07_determinism(criterion, tmp_path):
    cfg = tmp_path / "campaign.yaml"
    cfg.write_text(yaml.safe_dump(DET_CONFIG))
    trees = []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        for cmd in ("generate", "validate", "evaluate"):
            assert cli.main([cmd, "--config", str(cfg), "--out", out]) == 0
        trees.append(_tree(Path(out)))
    a, b = trees
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    n_files = len(a)
    ok = not differing and any(k.startswith("reports") for k in a) and any(k.endswith("traces.ndrec") for k in a)
    criterion(7, ok, f"{n_files} telemetry/report files compared, {len(differing)} differ")
    assert ok, differing[:5]


# -- 8 ---------------------------------------------------------------------

MIXED_CONFIG = {
    "topology": "chain3",
    "seed": 8,
    "workload": {"qps": 5},
    "protocol": {"warmup_s": 10, "normal_s": 60, "fault_s": 60},
    "faults": {
        "sizes": {"Resource": 20, "Network": 20, "HTTP": 20, "Code": 18, "DNS": 8, "Time": 8},
        "specs": [
            {"fault_type": "PodKill", "target": "a-0", "repeat": 2},
            {"fault_type": "PodKill", "target": "b-0", "repeat": 2},
            {"fault_type": "PodKill", "target": "c-0", "repeat": 2},
        ],
    },
}


def _starts(span: Span, fault: FaultSpec | None) -> set[int]:
    """Candidate true start times in ms; a skewed pod's stamp may or may not carry the offset."""
    start_ms = round(span.start * 1000)
    if fault is None or fault.fault_type != "TimeSkew" or span.pod != fault.target:
        return {start_ms}
    shifted = start_ms - round(fault.param_dict["offset_s"] * 1000)
    return {start_ms, shifted} if fault.start <= shifted / 1000.0 < fault.end else {start_ms}


def _tree_errors(spans, fault):
    errors = []
    by_trace = defaultdict(list)
    for s in spans:
        by_trace[s.trace_id].append(s)
    for tid, group in by_trace.items():
        ids = {s.span_id: s for s in group}
        if len(ids) != len(group):
            errors.append(f"{tid}: duplicate span ids")
        roots = [s for s in group if not s.parent_id]
        if len(roots) != 1:
            errors.append(f"{tid}: {len(roots)} roots")
        for s in group:
            if not s.parent_id:
                continue
            p = ids.get(s.parent_id)
            if p is None:
                errors.append(f"{tid}: dangling parent")
                continue
            if not any(ps <= cs and cs + s.duration_ms <= ps + p.duration_ms
                       for cs in _starts(s, fault) for ps in _starts(p, fault)):
                errors.append(f"{tid}: child outside parent")
    return errors


def test_c08_structural_invariants(criterion, tmp_path):
    cfg = tmp_path / "mixed.yaml"
    cfg.write_text(yaml.safe_dump(MIXED_CONFIG))
    out = tmp_path / "mixed"
    assert cli.main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    dirs = sorted(p for p in (out / "cases").iterdir())
    errors, root_mismatch, podkill_leaks, podkills, categories = [], 0, 0, 0, set()
    for d in dirs:
        head = read_meta(d)[0]
        fault = FaultSpec.from_dict(head["fault"]) if head["fault"] else None
        bundle = read_bundle(d)
        errors += [f"{d.name}: {e}" for e in _tree_errors(bundle.spans, fault)]
        if len(bundle.roots()) != head["arrivals"]:
            root_mismatch += 1
        if fault is None:
            continue
        categories.add(fault.category)
        if fault.fault_type == "PodKill":
            podkills += 1
            in_win = lambda t: fault.start <= t < fault.end  # noqa: E731
            podkill_leaks += sum(1 for s in bundle.spans if s.pod == fault.target and in_win(s.start))
            podkill_leaks += sum(1 for r in bundle.logs if r.pod == fault.target and in_win(r.timestamp))
            podkill_leaks += sum(1 for m in bundle.metrics if m.pod == fault.target and in_win(m.timestamp))
    ok = len(dirs) == 100 and not errors and root_mismatch == 0 and podkills > 0 and podkill_leaks == 0
    criterion(8, ok, f"{len(dirs)} cases over {len(categories)} categories: {len(errors)} malformed traces, "
                     f"{root_mismatch} root/arrival mismatches, {podkill_leaks} records from killed pods in {podkills} PodKill cases")
    assert ok, errors[:5]


# -- 9 ---------------------------------------------------------------------

def test_c09_reference_config_targets(criterion, trainticket, tmp_path):
    prof = profile_from_dict({"qps": 16.47})
    proto = CaseProtocol()
    t0 = time.perf_counter()
    bundle, meta = run_case(trainticket, prof, proto, None, seed=9)
    persist(bundle, tmp_path / "case", meta.to_dict())
    elapsed = time.perf_counter() - t0
    stats = dataset_stats([tmp_path / "case"], trainticket.graph)
    _, structural_depth = structural_reach(trainticket)
    ok = stats.coverage >= 0.80 and stats.max_depth == 7 and structural_depth == 7 and stats.qps_mean >= 16.0 \
        and elapsed < 60
    criterion(9, ok, f"coverage {stats.coverage:.2f} (>= 0.80), max depth {stats.max_depth} (= 7), "
                     f"mean QPS {stats.qps_mean:.2f}, 8-minute case generated in {elapsed:.1f}s (< 60s)")
    assert ok


# -- 10 --------------------------------------------------------------------

def _star_topology(n):
    names = [f"s{i:02d}" for i in range(n)]
    return load_topology({
        "name": f"star{n}",
        "entry_points": [names[0]],
        "services": [{"name": s, "pods": 1, "operations": ["op"]} for s in names],
        "edges": [{"caller": names[0], "callee": s, "operation": "op", "caller_operation": "op"} for s in names[1:]],
        "workflows": [{
            "name": "fan",
            "root": {"service": names[0], "operation": "op"},
            "states": [{"name": "pick", "transitions": [
                {"name": f"to_{s}", "service": s, "operation": "op"} for s in names[1:]]}],
        }],
    })


def _binom_central(n, p, level):
    pmf = [math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)]
    tail = (1 - level) / 2
    acc, lo = 0.0, 0
    while acc + pmf[lo] <= tail:
        acc += pmf[lo]
        lo += 1
    acc, hi = 0.0, n
    while acc + pmf[hi] <= tail:
        acc += pmf[hi]
        hi -= 1
    return lo / n, hi / n


def test_c10_random_baseline_calibration(criterion):
    topo = _star_topology(50)
    services = topo.graph.monitored_services
    rng = random.Random(10)
    w = CaseWindows(60.0, 60.0)
    empty = TelemetryBundle(w, [], [], [])
    cases = [EvalCase(f"c{i:04d}", "PodKill", rng.choice(services), w, None, empty) for i in range(500)]
    row = run_evaluation(cases, [RandomBaseline(seed=10)], topo.graph, breakdown=False).rows[0]
    lo, hi = _binom_central(500, 0.02, 0.99)
    h50 = sum(1.0 / k for k in range(1, 51)) / 50
    ok = len(services) == 50 and lo <= row.top1 <= hi and abs(row.mrr - h50) <= 0.2 * h50
    criterion(10, ok, f"Top@1 {row.top1:.3f} in 99% interval [{lo:.3f}, {hi:.3f}], "
                      f"MRR {row.mrr:.4f} vs H(50)/50 {h50:.4f} ({(row.mrr / h50 - 1):+.1%}, within 20%)")
    assert ok


# -- 11 --------------------------------------------------------------------

def _independent_cardinality(graph, registry):
    n_sub = 2 ** len(graph.monitored_services) - 1
    total = 0
    for ft in registry:
        size = len(ft.targets(graph))
        for p in ft.params:
            size *= n_sub if p.subset_of else len(p.values)
        total += size
    return total


def test_c11_fault_space_arithmetic(criterion, trainticket):
    reg = default_registry()
    card = space_cardinality(trainticket.graph, reg)
    independent = _independent_cardinality(trainticket.graph, reg)
    booking = count_paths(trainticket.workflow("booking"))
    ok = (isinstance(card.total, int) and card.total == PINNED_TRAINTICKET_CARDINALITY == independent
          and card.total > 10**12 and booking == 36)
    criterion(11, ok, f"cardinality {card.total} (pinned {PINNED_TRAINTICKET_CARDINALITY}, > 1e12), "
                      f"booking paths {booking} (= 36)")
    assert ok


# -- 12 --------------------------------------------------------------------

class _AffinityProbe:
    name = "simple_rca"
    requires_training = False

    def __init__(self):
        self.inner = SimpleRCA()
        self.max_cores = 0

    def rank(self, case):
        self.max_cores = max(self.max_cores, len(os.sched_getaffinity(0)))
        return self.inner.rank(case)


def test_c12_scalability_harness(criterion, chain3):
    proto = CaseProtocol(warmup_s=10, normal_s=240, fault_s=240)
    span = proto.normal_s + proto.fault_s

    def make_case(volume):
        prof = profile_from_dict({"qps": volume / span})
        bundle, _ = run_case(chain3, prof, proto, None, case_seed(12, volume))
        return CaseInput(bundle, bundle.windows, chain3.graph, None, f"v{volume}")

    probe = _AffinityProbe()
    points = scalability_run(probe, [2000, 6000, 10000, 14000, 18000], make_case, runs=3, cores=4)
    t2, t18 = points[0].seconds, points[-1].seconds
    volumes_ok = all(abs(p.traces - p.volume) <= 0.05 * p.volume for p in points)
    ok = volumes_ok and 1 <= probe.max_cores <= 4 and t18 <= 15 * t2
    curve = ", ".join(f"{p.traces}:{p.seconds * 1000:.0f}ms" for p in points)
    criterion(12, ok, f"curve [{curve}] on {probe.max_cores} core(s); time(18k)/time(2k) = {t18 / t2:.2f} (<= 15)")
    assert ok
