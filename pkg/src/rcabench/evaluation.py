"""Ranking metrics, dataset statistics and the scalability experiment."""

from __future__ import annotations

import json
import math
import os
import random
import statistics
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .rca import CaseInput, ExternalPlugin, PluginError, RcaAlgorithm
from .telemetry import CaseWindows, TelemetryBundle, read_bundle, read_meta
from .topology import ServiceGraph

INF = math.inf
KS = (1, 3, 5)


class EmptyResultsError(ValueError):
    pass


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    algorithm: str
    rank: float
    elapsed_s: float = 0.0
    fault_type: str = ""
    flag: str = ""
    load_s: float = 0.0

    def __post_init__(self):
        if not (self.rank >= 1):
            raise ValueError("rank must be >= 1 or inf")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "algorithm": self.algorithm,
            "fault_type": self.fault_type,
            "rank": self.rank if math.isfinite(self.rank) else "inf",
            "flag": self.flag,
        }


def _ranks(results) -> list[float]:
    ranks = [r.rank if isinstance(r, CaseResult) else float(r) for r in results]
    if not ranks:
        raise EmptyResultsError("no results to score")
    return ranks


def top_k(results, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    ranks = _ranks(results)
    return sum(1 for r in ranks if r <= k) / len(ranks)


def avg_k(results, k: int) -> float:
    """Mean of Top@1 .. Top@K."""
    if k < 1:
        raise ValueError("K must be >= 1")
    ranks = _ranks(results)
    return sum(top_k(ranks, i) for i in range(1, k + 1)) / k


def mrr(results) -> float:
    ranks = _ranks(results)
    return sum(0.0 if math.isinf(r) else 1.0 / r for r in ranks) / len(ranks)


@dataclass(frozen=True)
class EvalRow:
    algorithm: str
    n: int
    top1: float
    top3: float
    top5: float
    avg3: float
    avg5: float
    mrr: float
    mean_time_s: float
    flagged: int = 0
    mean_load_s: float = 0.0

    @classmethod
    def of(cls, algorithm: str, results: Sequence[CaseResult]) -> EvalRow:
        return cls(
            algorithm, len(results), top_k(results, 1), top_k(results, 3), top_k(results, 5),
            avg_k(results, 3), avg_k(results, 5), mrr(results),
            statistics.fmean(r.elapsed_s for r in results), sum(1 for r in results if r.flag),
            statistics.fmean(r.load_s for r in results),
        )


REPORT_COLUMNS = ("algorithm", "n", "top1", "top3", "top5", "avg3", "avg5", "mrr", "flagged")


@dataclass
class EvalReport:
    rows: list[EvalRow]
    breakdown: dict[tuple[str, str], EvalRow] = field(default_factory=dict)
    results: list[CaseResult] = field(default_factory=list)

    def row(self, algorithm: str) -> EvalRow:
        for r in self.rows:
            if r.algorithm == algorithm:
                return r
        raise KeyError(algorithm)

    def write(self, out_dir: str | Path) -> list[Path]:
        """Deterministic report files plus a separate timing table."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        def fmt(r: EvalRow, lead: Sequence[str]) -> str:
            vals = [str(r.n), *(f"{v:.6f}" for v in (r.top1, r.top3, r.top5, r.avg3, r.avg5, r.mrr)), str(r.flagged)]
            return "\t".join([*lead, *vals])

        report = ["\t".join(REPORT_COLUMNS)] + [fmt(r, [r.algorithm]) for r in self.rows]
        breakdown = ["\t".join(("algorithm", "fault_type") + REPORT_COLUMNS[1:])] + [
            fmt(r, [alg, ft]) for (alg, ft), r in sorted(self.breakdown.items())
        ]
        timing = ["algorithm\tn\tmean_time_s\tmean_load_s"] + [
            f"{r.algorithm}\t{r.n}\t{r.mean_time_s:.6f}\t{r.mean_load_s:.6f}" for r in self.rows
        ]
        paths = {
            "report.tsv": "\n".join(report) + "\n",
            "breakdown.tsv": "\n".join(breakdown) + "\n",
            "results.ndrec": "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.results),
            "timing.tsv": "\n".join(timing) + "\n",
        }
        out = []
        for name, text in paths.items():
            p = out_dir / name
            p.write_text(text, encoding="utf-8")
            out.append(p)
        return out


@dataclass
class EvalCase:
    case_id: str
    fault_type: str
    true_service: str
    windows: CaseWindows
    case_dir: str | None = None
    bundle: TelemetryBundle | None = None
    label: str = "HasAnomaly"


def stratified_split(cases: Sequence[EvalCase], seed: int, test_fraction: float = 0.2):
    """Per fault type, shuffle and hold out ``test_fraction`` (at least one case
    when a type has two or more)."""
    by_type: dict[str, list[EvalCase]] = defaultdict(list)
    for c in cases:
        by_type[c.fault_type].append(c)
    rng = random.Random(seed)
    train, test = [], []
    for ft in sorted(by_type):
        group = sorted(by_type[ft], key=lambda c: c.case_id)
        rng.shuffle(group)
        n_test = round(len(group) * test_fraction)
        if len(group) >= 2:
            n_test = max(1, n_test)
        test += group[:n_test]
        train += group[n_test:]
    return train, test


def run_evaluation(
    cases: Sequence[EvalCase],
    algorithms: Sequence[RcaAlgorithm],
    graph: ServiceGraph,
    split_seed: int = 0,
    test_fraction: float = 0.2,
    breakdown: bool = True,
) -> EvalReport:
    """Score algorithms on HasAnomaly cases; trainable ones train on 80% and are scored on 20%."""
    usable = [c for c in cases if c.label == "HasAnomaly"]
    if not usable:
        raise EmptyResultsError("no HasAnomaly cases to evaluate")
    train, test = stratified_split(usable, split_seed, test_fraction)
    rows, results = [], []
    per_type: dict[tuple[str, str], list[CaseResult]] = defaultdict(list)
    for algo in algorithms:
        pool = usable
        if getattr(algo, "requires_training", False):
            algo.train([_input(c, graph) for c in train])
            pool = test
        if not pool:
            raise EmptyResultsError(f"no evaluation cases left for {algo.name}")
        algo_results = []
        for c in pool:
            case_in = _input(c, graph)
            t_load = time.perf_counter()
            if not isinstance(algo, ExternalPlugin):
                case_in.load()
            load_s = time.perf_counter() - t_load
            flag = ""
            t0 = time.perf_counter()
            try:
                ranked = algo.rank(case_in)
                rank = ranked.rank_of(c.true_service)
                if not ranked.ranking:
                    flag = "empty-ranking"
            except (PluginError, OSError) as exc:
                rank, flag = INF, f"crash: {exc}"
            elapsed = time.perf_counter() - t0
            r = CaseResult(c.case_id, algo.name, rank, elapsed, c.fault_type, flag, load_s)
            algo_results.append(r)
            per_type[(algo.name, c.fault_type)].append(r)
        rows.append(EvalRow.of(algo.name, algo_results))
        results += algo_results
    bd = {k: EvalRow.of(k[0], v) for k, v in per_type.items()} if breakdown else {}
    return EvalReport(rows, bd, results)


def _input(c: EvalCase, graph: ServiceGraph) -> CaseInput:
    return CaseInput(c.bundle, c.windows, graph, c.case_dir, c.case_id)


# -- dataset statistics ----------------------------------------------------

@dataclass
class DatasetStats:
    cases: int
    services: int
    coverage: float
    qps_mean: float
    qps_max: float
    max_depth: int
    log_records: int
    traces: int
    spans: int
    metric_points: int
    duration_s: float
    fault_types: dict[str, int]

    def rows(self) -> list[tuple[str, str]]:
        out = [
            ("cases", str(self.cases)),
            ("services", str(self.services)),
            ("coverage", f"{self.coverage:.6f}"),
            ("qps_mean", f"{self.qps_mean:.6f}"),
            ("qps_max", f"{self.qps_max:.6f}"),
            ("max_depth", str(self.max_depth)),
            ("log_records", str(self.log_records)),
            ("traces", str(self.traces)),
            ("spans", str(self.spans)),
            ("metric_points", str(self.metric_points)),
            ("duration_s", f"{self.duration_s:.3f}"),
        ]
        out += [(f"fault_type:{k}", str(v)) for k, v in sorted(self.fault_types.items())]
        return out

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text("stat\tvalue\n" + "".join(f"{k}\t{v}\n" for k, v in self.rows()), encoding="utf-8")
        return path


def trace_depths(spans) -> dict[str, int]:
    """Longest root-to-leaf chain per trace, counted in edges."""
    parents: dict[str, dict[str, str]] = defaultdict(dict)
    for s in spans:
        parents[s.trace_id][s.span_id] = s.parent_id
    out = {}
    for tid, par in parents.items():
        memo: dict[str, int] = {}
        best = 0
        for sid in par:
            chain = []
            cur = sid
            while cur not in memo:
                p = par[cur]
                if not p or p not in par:
                    memo[cur] = 0
                    break
                chain.append(cur)
                cur = p
            d = memo[cur]
            for x in reversed(chain):
                d += 1
                memo[x] = d
            best = max(best, memo[sid])
        out[tid] = best
    return out


def bundle_stats(bundles: Iterable[tuple[TelemetryBundle, str]], graph: ServiceGraph) -> DatasetStats:
    n = 0
    seen: set[str] = set()
    roots = 0
    total_s = 0.0
    qps_max = 0.0
    depth = 0
    logs = spans = metrics = traces = 0
    faults: Counter = Counter()
    for bundle, fault_type in bundles:
        n += 1
        r = sum(1 for s in bundle.spans if not s.parent_id)
        roots += r
        total_s += bundle.windows.duration
        qps_max = max(qps_max, r / bundle.windows.duration)
        seen.update(s.service for s in bundle.spans if s.pod)
        d = trace_depths(bundle.spans)
        if d:
            depth = max(depth, max(d.values()))
        traces += len(d)
        logs += len(bundle.logs)
        spans += len(bundle.spans)
        metrics += len(bundle.metrics)
        faults[fault_type or "none"] += 1
    if n == 0:
        raise EmptyResultsError("no cases")
    seen &= set(graph.service_names)
    return DatasetStats(n, len(graph.services), len(seen) / len(graph.services), roots / total_s, qps_max,
                        depth, logs, traces, spans, metrics, total_s, dict(faults))


def dataset_stats(case_dirs: Sequence[str | Path], graph: ServiceGraph) -> DatasetStats:
    def gen():
        for d in case_dirs:
            head = read_meta(d)[0]
            fault = head.get("fault") or {}
            yield read_bundle(d), fault.get("fault_type", "")
    return bundle_stats(gen(), graph)


# -- scalability -----------------------------------------------------------

CORE_LIMIT = 4


def restrict_cores(limit: int = CORE_LIMIT) -> tuple[set[int] | None, set[int] | None]:
    """Pin this process to at most ``limit`` cores; returns (previous, applied)."""
    if not hasattr(os, "sched_getaffinity"):
        return None, None
    prev = os.sched_getaffinity(0)
    applied = set(sorted(prev)[:limit])
    os.sched_setaffinity(0, applied)
    return prev, applied


@dataclass(frozen=True)
class ScalabilityPoint:
    volume: int
    traces: int
    seconds: float
    runs: int
    timed_out: bool = False


def scalability_run(
    algorithm: RcaAlgorithm,
    volumes: Sequence[int],
    make_case: Callable[[int], CaseInput],
    runs: int = 3,
    cores: int = CORE_LIMIT,
    timeout_s: float = 3600.0,
) -> list[ScalabilityPoint]:
    """Median algorithm wall time per trace volume, on at most ``cores`` cores."""
    if runs < 3:
        raise ValueError("at least 3 runs per volume")
    prev, _ = restrict_cores(cores)
    points = []
    try:
        for v in sorted(volumes):
            case = make_case(v)
            bundle = case.load()
            n_traces = sum(1 for s in bundle.spans if not s.parent_id)
            times = []
            timed_out = False
            for _ in range(runs):
                t = time.perf_counter()
                algorithm.rank(case)
                dt = time.perf_counter() - t
                times.append(dt)
                if dt > timeout_s:
                    timed_out = True
                    break
            points.append(ScalabilityPoint(v, n_traces, statistics.median(times), len(times), timed_out))
    finally:
        if prev is not None:
            os.sched_setaffinity(0, prev)
    return points


def write_scalability(points: Sequence[ScalabilityPoint], path: str | Path) -> Path:
    path = Path(path)
    lines = ["volume\ttraces\tseconds\truns\ttimed_out"] + [
        f"{p.volume}\t{p.traces}\t{p.seconds:.6f}\t{p.runs}\t{int(p.timed_out)}" for p in points
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
