"""RCA algorithms: the alert-counting baseline, a random control, and plugins.

Algorithms receive a :class:`CaseInput`, which deliberately has no access to
the case label.
"""

from __future__ import annotations

import functools
import json
import random
import subprocess
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .telemetry import CaseWindows, TelemetryBundle, percentile, read_bundle
from .topology import ServiceGraph

KEYWORDS = ("ERROR", "FAIL", "EXCEPTION")


@dataclass
class CaseInput:
    bundle: TelemetryBundle | None
    windows: CaseWindows
    graph: ServiceGraph
    case_dir: str | None = None
    case_id: str = ""

    def load(self) -> TelemetryBundle:
        if self.bundle is None:
            if self.case_dir is None:
                raise ValueError("case has neither a bundle nor a directory")
            self.bundle = read_bundle(self.case_dir)
        return self.bundle


@dataclass
class AlertSet:
    metric: dict[str, int] = field(default_factory=dict)
    trace: dict[str, int] = field(default_factory=dict)
    log: dict[str, int] = field(default_factory=dict)

    def scores(self, weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> dict[str, float]:
        out: dict[str, float] = defaultdict(float)
        for w, counts in zip(weights, (self.metric, self.trace, self.log)):
            for svc, n in counts.items():
                out[svc] += w * n
        return dict(out)


@dataclass
class RankedCandidates:
    ranking: list[tuple[str, float]]
    elapsed_s: float = 0.0

    def __post_init__(self):
        names = [s for s, _ in self.ranking]
        if len(set(names)) != len(names):
            raise ValueError("duplicate services in ranking")

    @property
    def services(self) -> list[str]:
        return [s for s, _ in self.ranking]

    def rank_of(self, service: str) -> float:
        for i, (s, _) in enumerate(self.ranking, 1):
            if s == service:
                return float(i)
        return float("inf")


def order_scores(scores: dict[str, float], universe: Sequence[str] = ()) -> list[tuple[str, float]]:
    """Score descending, then name ascending; unscored members of ``universe`` get 0."""
    merged = {s: 0.0 for s in universe}
    merged.update(scores)
    return sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))


# -- alert detectors -------------------------------------------------------

def metric_alerts(bundle: TelemetryBundle, windows: CaseWindows | None = None) -> dict[str, int]:
    """Per (service, metric) series averaged over instances; threshold max(mean+3sd, P95)."""
    windows = windows or bundle.windows
    n0, n1 = windows.normal
    f0, f1 = windows.fault
    # (service, metric) -> timestamp -> [sum, count]
    acc: dict[tuple[str, str], dict[float, list]] = defaultdict(dict)
    for m in bundle.metrics:
        cell = acc[(m.service, m.metric)].get(m.timestamp)
        if cell is None:
            acc[(m.service, m.metric)][m.timestamp] = [m.value, 1]
        else:
            cell[0] += m.value
            cell[1] += 1
    out: dict[str, int] = {}
    for (svc, _metric), by_ts in acc.items():
        normal = [s / n for t, (s, n) in by_ts.items() if n0 <= t < n1]
        fault = np.array([s / n for t, (s, n) in by_ts.items() if f0 <= t < f1])
        out.setdefault(svc, 0)
        if not normal or fault.size == 0:
            continue
        arr = np.asarray(normal)
        thr = max(arr.mean() + 3 * arr.std(), percentile(arr, 0.95))
        out[svc] += int((fault > thr).sum())
    return out


def trace_alerts(bundle: TelemetryBundle, windows: CaseWindows | None = None,
                 multiplier: float = 3.0, binary: bool = False) -> dict[str, int]:
    windows = windows or bundle.windows
    n0, n1 = windows.normal
    f0, f1 = windows.fault
    normal: dict[str, list[float]] = defaultdict(list)
    fault: dict[str, list[float]] = defaultdict(list)
    for s in bundle.spans:
        if n0 <= s.start < n1:
            normal[s.service].append(s.duration_ms)
        elif f0 <= s.start < f1:
            fault[s.service].append(s.duration_ms)
    out: dict[str, int] = {}
    for svc in set(normal) | set(fault):
        out[svc] = 0
        if not normal[svc] or not fault[svc]:
            continue
        p_n = percentile(normal[svc], 0.95)
        f = np.asarray(fault[svc])
        if percentile(f, 0.95) > multiplier * p_n:
            out[svc] = 1 if binary else int((f > p_n).sum())
    return out


def _is_error(record, keywords: Sequence[str]) -> bool:
    if record.severity == "ERROR":
        return True
    msg = record.message.upper()
    return any(k.upper() in msg for k in keywords)


def log_alerts(bundle: TelemetryBundle, windows: CaseWindows | None = None,
               keywords: Sequence[str] = KEYWORDS, floor: int = 5) -> dict[str, int]:
    windows = windows or bundle.windows
    n0, n1 = windows.normal
    f0, f1 = windows.fault
    normal: dict[str, int] = defaultdict(int)
    fault: dict[str, int] = defaultdict(int)
    seen = set()
    for r in bundle.logs:
        seen.add(r.service)
        if not _is_error(r, keywords):
            continue
        if n0 <= r.timestamp < n1:
            normal[r.service] += 1
        elif f0 <= r.timestamp < f1:
            fault[r.service] += 1
    return {s: (fault[s] if fault[s] > max(floor, 2 * normal[s]) else 0) for s in seen}


def collect_alerts(bundle: TelemetryBundle, windows: CaseWindows | None = None, binary_trace: bool = False) -> AlertSet:
    return AlertSet(metric_alerts(bundle, windows), trace_alerts(bundle, windows, binary=binary_trace),
                    log_alerts(bundle, windows))


# -- algorithms ------------------------------------------------------------

class RcaAlgorithm(Protocol):
    name: str
    requires_training: bool

    def rank(self, case: CaseInput) -> RankedCandidates: ...


def simple_rca(bundle: TelemetryBundle, windows: CaseWindows | None, graph: ServiceGraph | None,
               weights: tuple[float, float, float] = (1.0, 1.0, 1.0), binary_trace: bool = False) -> RankedCandidates:
    """Rank services by total alert count across metrics, traces and logs."""
    alerts = collect_alerts(bundle, windows, binary_trace)
    universe = graph.monitored_services if graph is not None else ()
    return RankedCandidates(order_scores(alerts.scores(weights), universe))


def random_baseline(graph: ServiceGraph, seed: int) -> RankedCandidates:
    services = sorted(graph.monitored_services)
    random.Random(seed).shuffle(services)
    n = len(services)
    return RankedCandidates([(s, float(n - i)) for i, s in enumerate(services)])


@dataclass
class SimpleRCA:
    name: str = "simple_rca"
    requires_training: bool = False
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    binary_trace: bool = False

    def rank(self, case: CaseInput) -> RankedCandidates:
        return simple_rca(case.load(), case.windows, case.graph, self.weights, self.binary_trace)


@dataclass
class RandomBaseline:
    name: str = "random"
    requires_training: bool = False
    seed: int = 0

    def rank(self, case: CaseInput) -> RankedCandidates:
        # seeded per case so results do not depend on evaluation order
        return random_baseline(case.graph, hash_seed(self.seed, case.case_id))


def hash_seed(seed: int, text: str) -> int:
    h = np.random.SeedSequence([seed, *text.encode("utf-8")])
    return int(h.generate_state(1)[0])


class PluginError(RuntimeError):
    pass


class ExternalPlugin:
    """Out-of-process algorithm speaking a line protocol on stdin/stdout.

    Request (one JSON line): ``{"case_dir", "normal": [a, b], "fault": [c, d]}``.
    Reply: zero or more ``service<TAB>score`` lines terminated by a line ``.``.
    """

    requires_training = False

    def __init__(self, name: str, argv: Sequence[str], timeout_s: float = 600.0):
        self.name = name
        self.argv = list(argv)
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          text=True, bufsize=1)
        return self._proc

    def rank(self, case: CaseInput) -> RankedCandidates:
        if case.case_dir is None:
            raise PluginError("external plugins need a persisted case directory")
        proc = self._ensure()
        req = {"case_dir": str(Path(case.case_dir).resolve()), "normal": list(case.windows.normal),
               "fault": list(case.windows.fault)}
        try:
            proc.stdin.write(json.dumps(req) + "\n")
            proc.stdin.flush()
            scores: list[tuple[str, float]] = []
            while True:
                line = proc.stdout.readline()
                if line == "":
                    raise PluginError(f"plugin {self.name} exited without replying")
                line = line.rstrip("\n")
                if line == ".":
                    break
                svc, _, score = line.partition("\t")
                scores.append((svc, float(score) if score else 0.0))
        except (BrokenPipeError, ValueError) as exc:
            raise PluginError(f"plugin {self.name}: {exc}") from exc
        # honour the plugin's scores but enforce the ranking contract
        dedup: dict[str, float] = {}
        for s, v in scores:
            dedup.setdefault(s, v)
        return RankedCandidates(order_scores(dedup))

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
            self._proc = None


BUILTIN: dict[str, Callable[..., RcaAlgorithm]] = {
    "simple_rca": SimpleRCA,
    "simple_rca_binary": functools.partial(SimpleRCA, name="simple_rca_binary", binary_trace=True),
    "random": RandomBaseline,
}


def get_algorithm(name: str, plugins: dict[str, Sequence[str]] | None = None, **kwargs) -> RcaAlgorithm:
    if plugins and name in plugins:
        return ExternalPlugin(name, plugins[name])
    if name not in BUILTIN:
        raise KeyError(f"unknown algorithm {name!r}; known: {sorted(BUILTIN) + sorted(plugins or {})}")
    return BUILTIN[name](**kwargs)


def timed_rank(algo: RcaAlgorithm, case: CaseInput) -> RankedCandidates:
    t = time.perf_counter()
    out = algo.rank(case)
    out.elapsed_s = time.perf_counter() - t
    return out
