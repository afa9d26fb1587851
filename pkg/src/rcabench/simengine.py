"""Deterministic request-level simulation of a service graph under one fault.

Each arrival is executed to completion before the next one (virtual time,
single thread).  Spans are client-observed RPCs attributed to the callee, so
network and HTTP delays inflate the callee span.  Metric series are derived
afterwards from per-pod, per-second accumulators.

Three seeded streams keep the run reproducible: arrivals (numpy), per-span
draws (``random.Random``) and metric noise (numpy, consumed in full whether
or not a pod is alive).
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Any

import numpy as np

from .faultspace import FaultSpec
from .telemetry import (
    CaseWindows,
    LogRecord,
    MetricPoint,
    Span,
    TelemetryBundle,
    percentile,
)
from .topology import CallNode, Topology, WorkflowStateMachine, expand_path, path_at
from .workload import RequestArrival, WorkloadProfile, generate_arrivals

OK, ERROR, TIMEOUT = "OK", "ERROR", "TIMEOUT"

LOGIC_ERROR_PROB = {"null": 1.0, "empty": 0.6, "zero": 0.5, "negative": 0.5, "default": 0.2}


@dataclass(frozen=True)
class CaseProtocol:
    warmup_s: float = 240.0
    normal_s: float = 240.0
    fault_s: float = 240.0
    timeout_ms: float = 10_000.0
    retries: int = 0

    def __post_init__(self):
        if min(self.warmup_s, self.normal_s, self.fault_s) <= 0 or self.timeout_ms <= 0:
            raise ValueError("protocol durations and timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def windows(self) -> CaseWindows:
        return CaseWindows(self.normal_s, self.fault_s)

    @property
    def fault_window(self) -> tuple[float, float]:
        return (self.normal_s, self.normal_s + self.fault_s)


@dataclass(frozen=True)
class EngineParams:
    k_oom: float = 4.0  # stress above this multiple of capacity gets killed
    grace_s: float = 5.0
    max_inflation: float = 10.0
    latency_sigma: float = 0.25
    metric_noise: float = 0.01
    emit_metrics: bool = True
    emit_logs: bool = True
    emit_traces: bool = True
    attribute_edges_to: str = "callee"  # used by the labeler; kept here so one config drives both


@dataclass
class CaseMeta:
    case_id: str
    seed: int
    fault: dict[str, Any] | None
    warmup_s: float
    normal_s: float
    fault_s: float
    arrivals: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "seed": self.seed,
            "fault": self.fault,
            "warmup_s": self.warmup_s,
            "arrivals": self.arrivals,
        }


# -- fault effects ---------------------------------------------------------

@dataclass(frozen=True)
class StressEffect:
    load: float
    factor: float
    kill_at: float | None  # absolute time the stressor dies, None if it survives


def apply_stress(spec: FaultSpec, params: EngineParams = EngineParams()) -> StressEffect:
    """Contention from a CPU or memory stressor on one pod.

    Service time is inflated by ``1 + load`` (load in multiples of capacity).
    Above ``k_oom`` the stressor is killed after ``grace_s`` seconds.
    """
    p = spec.param_dict
    load = float(p.get("load", p.get("size", 0.0)))
    kill = spec.start + params.grace_s if load > params.k_oom else None
    return StressEffect(load, 1.0 + load, kill)


class Effects:
    """One compiled fault spec; every query is a cheap check for the current call."""

    def __init__(self, spec: FaultSpec | None, topo: Topology, params: EngineParams):
        self.spec = spec
        self.kind = spec.fault_type if spec else None
        self.t0 = spec.start if spec else math.inf
        self.t1 = spec.end if spec else -math.inf
        self.p = spec.param_dict if spec else {}
        self.target = spec.target if spec else ""
        g = topo.graph
        self.pair = self.target if "->" in self.target else None
        self.op_service, self.op_name, self.op_pod = None, None, None
        if spec and spec.fault_type.startswith("JVM") and "/" in self.target:
            self.op_service, self.op_name = self.target.split("/", 1)
            self.op_pod = g.service(self.op_service).pods[0]
        self.db_pod = None
        if self.kind in ("JVMMySQLLatency", "JVMMySQLException"):
            self.db_pod = g.service(self.pair.split("->")[0]).pods[0]
        self.stress = apply_stress(spec, params) if self.kind in ("CPUStress", "MemoryStress") else None
        self.container_pod = None
        if self.kind == "ContainerKill":
            self.container_pod = g.container_owner()[self.target][1]
        self.patterns = set(self.p.get("patterns", ()))

    def active(self, t: float) -> bool:
        return self.t0 <= t < self.t1

    # liveness
    def pod_alive(self, pod: str, t: float) -> bool:
        if pod != self.target or not self.active(t):
            return True
        if self.kind == "PodKill":
            return False
        if self.kind == "PodFailure":
            cycle = self.p["down_s"] + self.p["up_s"]
            return (t - self.t0) % cycle >= self.p["down_s"]
        return True

    def pod_serving(self, pod: str, t: float) -> bool:
        if self.container_pod == pod and self.active(t):
            return False
        return self.pod_alive(pod, t)

    def restart_times(self, pod: str) -> list[float]:
        if pod != self.target and pod != self.container_pod:
            return []
        if self.kind in ("PodKill", "ContainerKill"):
            return [self.t1]
        if self.kind == "PodFailure":
            out, cycle = [], self.p["down_s"] + self.p["up_s"]
            k = 0
            while self.t0 + k * cycle < self.t1:
                out.append(min(self.t0 + k * cycle + self.p["down_s"], self.t1))
                k += 1
            return out
        return []

    # contention
    def stress_load(self, pod: str, t: float, kind: str | None = None) -> float:
        if self.stress is None or pod != self.target or not self.active(t):
            return 0.0
        if kind is not None and self.kind != kind:
            return 0.0
        if self.stress.kill_at is not None and t >= self.stress.kill_at:
            return 0.0
        return self.stress.load

    def gc_wait(self, service: str, t: float) -> float:
        """Seconds a request arriving at ``t`` waits for the current GC pause."""
        if self.kind != "JVMGC" or service != self.target or not self.active(t):
            return 0.0
        k = math.floor((t - self.t0) / self.p["interval_s"])
        pause_end = self.t0 + k * self.p["interval_s"] + self.p["pause_ms"] / 1000.0
        return max(0.0, pause_end - t)

    def gc_ms_in_second(self, service: str, sec: int) -> float:
        if self.kind != "JVMGC" or service != self.target:
            return 0.0
        lo, hi = max(sec, self.t0), min(sec + 1, self.t1)
        if lo >= hi:
            return 0.0
        total = 0.0
        iv, pause = self.p["interval_s"], self.p["pause_ms"] / 1000.0
        k = max(0, math.floor((lo - self.t0) / iv) - 1)
        while self.t0 + k * iv < hi:
            a = self.t0 + k * iv
            b = min(a + pause, self.t1)
            total += max(0.0, min(b, hi) - max(a, lo))
            k += 1
        return total * 1000.0

    def edge_hit(self, pair: str, t: float) -> bool:
        return self.pair == pair and self.active(t)

    def op_hit(self, service: str, op: str, pod: str, t: float) -> bool:
        return self.op_service == service and self.op_name == op and pod == self.op_pod and self.active(t)

    def skew(self, pod: str, t: float) -> float:
        if self.kind == "TimeSkew" and pod == self.target and self.active(t):
            return float(self.p["offset_s"])
        return 0.0


# -- simulator -------------------------------------------------------------

class _Trace:
    __slots__ = ("trace_id", "record", "n")

    def __init__(self, trace_id: str, record: bool):
        self.trace_id = trace_id
        self.record = record
        self.n = 0

    def next_id(self) -> str:
        self.n += 1
        return f"{self.n:x}"


class Simulator:
    def __init__(self, topo: Topology, protocol: CaseProtocol, fault: FaultSpec | None,
                 seed: int, params: EngineParams = EngineParams()):
        self.topo = topo
        self.g = topo.graph
        self.protocol = protocol
        self.params = params
        self.eff = Effects(fault, topo, params)
        ss = np.random.SeedSequence(seed)
        self._arrival_seed, span_seed, noise_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
        self.rng = random.Random(span_seed)
        self.noise_rng = np.random.default_rng(noise_seed)
        self.end = protocol.normal_s + protocol.fault_s
        self.warm = protocol.warmup_s
        self.timeout = protocol.timeout_ms / 1000.0
        self.spans: list[Span | None] = []
        self.logs: list[LogRecord] = []
        self._trees: dict[tuple[str, int], CallNode] = {}
        self._workflows = {w.name: w for w in topo.workflows}
        nsec = int(math.ceil(self.warm + self.end)) + 2
        self._nsec = nsec
        self.work = defaultdict(lambda: np.zeros(nsec))
        # per (pod, second) span stats inside the recorded windows
        self.lat: dict[tuple[str, int], list[float]] = defaultdict(list)
        self.errs: dict[tuple[str, int], int] = defaultdict(int)
        self.net_in: dict[tuple[str, int], float] = defaultdict(float)
        self.net_out: dict[tuple[str, int], float] = defaultdict(float)
        self.mem_extra: dict[tuple[str, int], float] = defaultdict(float)
        self.monitored = {s.name: s.monitored for s in self.g.services}

    # helpers
    def _sec(self, t: float) -> int:
        return int(math.floor(t + self.warm))

    def _inflation(self, pod: str, cap: float, t: float) -> float:
        i = self._sec(t) - 1
        u = self.work[pod][i] / cap if i >= 0 else 0.0
        return min(self.params.max_inflation, 1.0 + u + self.eff.stress_load(pod, t))

    def _pick(self, service: str, t: float) -> str | None:
        pods = [p for p in self.g.service(service).pods if self.eff.pod_alive(p, t)]
        if not pods:
            return None
        pod = pods[0] if len(pods) == 1 else pods[self.rng.randrange(len(pods))]
        return pod if self.eff.pod_serving(pod, t) else ""

    def _log(self, tr: _Trace, service: str, pod: str, t: float, severity: str, template: str, msg: str):
        if not (tr.record and self.params.emit_logs and self.monitored.get(service, False)):
            return
        if not 0.0 <= t < self.end:
            return
        ts = t + self.eff.skew(pod, t)
        self.logs.append(LogRecord(round(ts, 3), service, pod, tr.trace_id, severity, template, msg))

    def _emit(self, tr: _Trace, idx: int, parent: str, service: str, pod: str, op: str,
              t0: float, t1: float, status: str, code: int, payload: int = 0):
        if idx < 0:
            return
        s_ms = math.floor(t0 * 1000.0)
        e_ms = max(s_ms, math.ceil(t1 * 1000.0))
        skew_ms = int(round(self.eff.skew(pod, t0) * 1000.0)) if pod else 0
        self.spans[idx] = Span(tr.trace_id, self.spans[idx], parent, service, pod, op,
                               (s_ms + skew_ms) / 1000.0, float(e_ms - s_ms), status, code)
        if pod and 0.0 <= t0 < self.end:
            key = (pod, int(math.floor(t0)))
            self.lat[key].append(float(e_ms - s_ms))
            if status != OK:
                self.errs[key] += 1
            self.net_in[key] += payload

    def _reserve(self, tr: _Trace, service: str, t0: float) -> tuple[int, str]:
        sid = tr.next_id()
        if tr.record and self.params.emit_traces and self.monitored[service] and 0.0 <= t0 < self.end:
            self.spans.append(sid)  # placeholder holding the span id until the span closes
            return len(self.spans) - 1, sid
        return -1, sid

    def _tree(self, wf: WorkflowStateMachine, path: int) -> CallNode:
        key = (wf.name, path)
        tree = self._trees.get(key)
        if tree is None:
            tree = expand_path(self.g, wf, path_at(wf, path))
            self._trees[key] = tree
        return tree

    # request execution
    def execute_request(self, arrival: RequestArrival, index: int) -> None:
        wf = self._workflows[arrival.workflow]
        tree = self._tree(wf, arrival.path)
        t = arrival.time
        tr = _Trace(f"{index:08x}", 0.0 <= t < self.end)
        root_svc = wf.root_service
        pod = self._pick(root_svc, t)
        if not pod:
            # nothing is listening at the entry point; the gateway still records the attempt
            idx, _ = self._reserve(tr, root_svc, t)
            self._emit(tr, idx, "", root_svc, "", wf.root_operation, t, t, ERROR, 503)
            return
        idx, sid = self._reserve(tr, root_svc, t)
        t_done, status, code = self._serve(tr, tree, pod, sid, t, math.inf, wf.root_latency_ms, 0)
        if status == TIMEOUT:
            status = ERROR
        self._emit(tr, idx, "", root_svc, pod, wf.root_operation, t, t_done, status, code)

    def _serve(self, tr: _Trace, node: CallNode, pod: str, span_id: str, t: float,
               deadline: float, base_ms: float, payload: int) -> tuple[float, str, int]:
        svc = node.service
        op = node.operation
        eff = self.eff
        node_spec = self.g.service(svc)
        self._log(tr, svc, pod, t, "INFO", "T_RECV", f"{op} request received")
        wait = eff.gc_wait(svc, t)
        noise = self.rng.lognormvariate(-self.params.latency_sigma ** 2 / 2, self.params.latency_sigma)
        work_s = base_ms * noise / 1000.0
        proc = work_s * self._inflation(pod, node_spec.cpu_capacity, t)
        fail_code = 0
        if eff.kind and eff.op_service == svc and eff.op_hit(svc, op, pod, t):
            if eff.kind == "JVMLatency":
                proc += eff.p["latency_ms"] / 1000.0
            elif eff.kind == "JVMCPUStress":
                extra = work_s * eff.p["cpu_count"] / node_spec.cpu_capacity
                proc += extra
                work_s += extra
            elif eff.kind == "JVMMemoryStress":
                proc += work_s * eff.p["size"] / 2.0
                if 0.0 <= t < self.end:
                    self.mem_extra[(pod, int(math.floor(t)))] = max(
                        self.mem_extra[(pod, int(math.floor(t)))], 0.05 * eff.p["size"])
            elif eff.kind == "JVMException":
                fail_code = 500
        self.work[pod][self._sec(t)] += work_s
        now = t + wait + proc / 2.0
        if fail_code:
            self._log(tr, svc, pod, now, "ERROR", "E_EXC", f"{op} threw {eff.p['exception']}")
            return now, ERROR, fail_code
        for child in node.children:
            if now >= deadline:
                return deadline, TIMEOUT, 504
            status, code = OK, 200
            for _attempt in range(self.protocol.retries + 1):
                now, status, code = self._call(tr, child, svc, pod, span_id, now,
                                               min(now + self.timeout, deadline))
                if status == OK or now >= deadline:
                    break
            if status != OK:
                if child.edge.optional:
                    self._log(tr, svc, pod, now, "WARN", "W_OPT", f"optional call {child.service}/{child.operation} failed")
                    continue
                self._log(tr, svc, pod, now, "ERROR", "E_CALL",
                          f"call to {child.service}/{child.operation} failed: {status} {code}")
                if now >= deadline:
                    return deadline, TIMEOUT, 504
                return now, ERROR, code if code >= 400 else 500
        return now + proc / 2.0, OK, 200

    def _call(self, tr: _Trace, node: CallNode, caller: str, caller_pod: str, parent_id: str,
              t: float, deadline: float) -> tuple[float, str, int]:
        eff = self.eff
        e = node.edge
        callee = node.service
        pair = e.pair
        kind = eff.kind
        hit = kind is not None and eff.edge_hit(pair, t)
        rng = self.rng

        if kind in ("DNSError", "DNSRandom") and caller == eff.target and callee in eff.patterns and eff.active(t):
            if kind == "DNSError":
                self._log(tr, caller, caller_pod, t, "ERROR", "E_DNS", f"UnknownHostException: {callee}")
                return t, ERROR, 503
            wrong = [s for s in self.g.monitored_services if s != callee]
            callee = wrong[rng.randrange(len(wrong))]
            pod = self._pick(callee, t)
            if not pod:
                self._log(tr, caller, caller_pod, t, "ERROR", "E_CONN", f"connection refused by {callee}")
                return t, ERROR, 503
            idx, _ = self._reserve(tr, callee, t)
            t1 = t + 0.001
            self._log(tr, callee, pod, t, "WARN", "W_ROUTE", f"no route for {node.operation}")
            self._emit(tr, idx, parent_id, callee, pod, node.operation, t, t1, ERROR, 404, e.payload_bytes)
            return t1, ERROR, 404

        d_req = d_resp = 0.0
        if hit:
            if kind == "NetworkPartition":
                if eff.p["direction"] in ("to", "both"):
                    self._log(tr, caller, caller_pod, t, "ERROR", "E_CONN", f"connection to {callee} failed")
                    return t, ERROR, 503
            elif kind == "HTTPRequestAbort" and rng.random() < eff.p["probability"]:
                self._log(tr, caller, caller_pod, t, "ERROR", "E_ABORT", f"request to {callee} aborted")
                return t, ERROR, 503
            elif kind == "NetworkLoss" and eff.p["direction"] in ("to", "both") and rng.random() < eff.p["percent"] / 100:
                self._log(tr, caller, caller_pod, deadline, "ERROR", "E_TIMEOUT", f"call to {callee} timed out")
                return deadline, TIMEOUT, 504
            elif kind == "NetworkDelay":
                d = eff.p["latency_ms"]
                if eff.p["jitter_ms"]:
                    d = max(0.0, d + rng.uniform(-eff.p["jitter_ms"], eff.p["jitter_ms"]))
                d /= 1000.0
                if eff.p["direction"] in ("to", "both"):
                    d_req += d
                if eff.p["direction"] in ("from", "both"):
                    d_resp += d
            elif kind == "NetworkBandwidth":
                d = e.payload_bytes * 8.0 / eff.p["rate_kbps"] / 1000.0
                if eff.p["direction"] in ("to", "both"):
                    d_req += d
                if eff.p["direction"] in ("from", "both"):
                    d_resp += d
            elif kind == "HTTPRequestDelay" and rng.random() < eff.p["probability"]:
                d_req += eff.p["delay_ms"] / 1000.0
            elif kind == "HTTPResponseDelay" and rng.random() < eff.p["probability"]:
                d_resp += eff.p["delay_ms"] / 1000.0

        if kind in ("JVMMySQLLatency", "JVMMySQLException") and e.database and caller_pod == eff.db_pod \
                and eff.edge_hit(pair, t):
            if kind == "JVMMySQLException":
                self._log(tr, caller, caller_pod, t, "ERROR", "E_SQL", f"{eff.p['exception']} on {callee}")
                return t, ERROR, 500
            d_req += eff.p["latency_ms"] / 1000.0

        t_arr = t + d_req
        pod = self._pick(callee, t_arr)
        if not pod:
            self._log(tr, caller, caller_pod, t_arr, "ERROR", "E_CONN", f"connection refused by {callee}")
            return min(t_arr, deadline), ERROR, 503

        idx, sid = self._reserve(tr, callee, t)
        if t_arr >= deadline:
            self._emit(tr, idx, parent_id, callee, pod, node.operation, t, deadline, TIMEOUT, 504, e.payload_bytes)
            return deadline, TIMEOUT, 504

        rewrite = 0
        if hit and kind in ("HTTPRequestReplacePath", "HTTPRequestReplaceMethod") and rng.random() < eff.p["probability"]:
            rewrite = 404 if kind == "HTTPRequestReplacePath" else 405
        if rewrite:
            self._log(tr, callee, pod, t_arr, "WARN", "W_HTTP", f"{rewrite} for {node.operation}")
            t_done, status, code = t_arr + 0.001, ERROR, rewrite
        else:
            t_done, status, code = self._serve(tr, node, pod, sid, t_arr, deadline, e.latency_ms, e.payload_bytes)
        if caller_pod and 0.0 <= t < self.end:
            self.net_out[(caller_pod, int(math.floor(t)))] += e.payload_bytes

        lost_resp = False
        if hit and status == OK:
            if kind == "NetworkPartition" and eff.p["direction"] == "from":
                lost_resp = True
            elif kind == "NetworkLoss" and eff.p["direction"] in ("from", "both") and rng.random() < eff.p["percent"] / 100:
                lost_resp = True
        t_recv = deadline if lost_resp else t_done + d_resp
        if lost_resp or t_recv > deadline or status == TIMEOUT:
            t_recv, status, code = deadline, TIMEOUT, 504

        caller_status, caller_code = status, code
        if hit and status == OK:
            if kind == "HTTPResponseAbort" and rng.random() < eff.p["probability"]:
                status, code = ERROR, 503
                caller_status, caller_code = status, code
            elif kind == "NetworkCorrupt" and rng.random() < eff.p["percent"] / 100:
                status, code = ERROR, 502
                caller_status, caller_code = status, code
            elif kind == "HTTPResponseReplaceCode" and rng.random() < eff.p["probability"]:
                # the callee answered normally; only what the caller sees is rewritten
                caller_status, caller_code = ERROR, eff.p["code"]
            elif kind in ("HTTPResponseReplaceBody", "HTTPResponsePatchBody") and rng.random() < eff.p["probability"]:
                self._log(tr, caller, caller_pod, t_recv, "ERROR", "E_PARSE", f"failed to parse response from {callee}")
            elif kind == "NetworkDuplicate" and rng.random() < eff.p["percent"] / 100:
                didx, _ = self._reserve(tr, callee, t)
                self._emit(tr, didx, parent_id, callee, pod, node.operation, t, t_recv, OK, 200, e.payload_bytes)
        if kind == "JVMReturn" and status == OK and eff.op_hit(callee, node.operation, pod, t_arr):
            if rng.random() < LOGIC_ERROR_PROB[eff.p["value"]]:
                self._log(tr, caller, caller_pod, t_recv, "ERROR", "E_LOGIC",
                          f"unexpected {eff.p['value']} result from {callee}/{node.operation}")
        self._emit(tr, idx, parent_id, callee, pod, node.operation, t, t_recv, status, code, e.payload_bytes)
        return t_recv, caller_status, caller_code

    # metrics
    def metrics(self) -> list[MetricPoint]:
        out: list[MetricPoint] = []
        nsec = int(math.ceil(self.end))
        series = [(s, p) for s in self.g.services if s.monitored for p in s.pods]
        noise = self.noise_rng.normal(0.0, self.params.metric_noise, size=(nsec, max(1, len(series)), 4))
        restarts = {p: sorted(self.eff.restart_times(p)) for _, p in series}
        last_p95 = {p: 0.0 for _, p in series}
        for sec in range(nsec):
            for j, (svc, pod) in enumerate(series):
                t = float(sec)
                if not self.eff.pod_alive(pod, t):
                    continue
                ts = round(t + self.eff.skew(pod, t), 3)
                key = (pod, sec)
                lats = self.lat.get(key, ())
                work = self.work[pod][self._sec(t)]
                util = work / svc.cpu_capacity
                cpu = 0.05 + util + self.eff.stress_load(pod, t, "CPUStress") + noise[sec, j, 0]
                mem = 0.30 + 0.05 * util + self.eff.stress_load(pod, t, "MemoryStress") \
                    + self.mem_extra.get(key, 0.0) + noise[sec, j, 1]
                main = svc.main_container(pod)
                containers = svc.containers[svc.pods.index(pod)]
                killed = self.eff.container_pod == pod and self.eff.active(t)
                for c in containers:
                    if killed and c == self.eff.target:
                        continue
                    if c == main:
                        cv, mv = cpu, mem
                    else:
                        cv, mv = 0.02 + 0.1 * util + noise[sec, j, 2], 0.10 + noise[sec, j, 3]
                    out.append(MetricPoint(ts, svc.name, pod, c, "cpu_usage", round(max(0.0, cv), 6)))
                    out.append(MetricPoint(ts, svc.name, pod, c, "memory_usage", round(max(0.0, mv), 6)))
                if lats:
                    mean = sum(lats) / len(lats)
                    last_p95[pod] = percentile(lats, 0.95)
                else:
                    mean = 0.0
                n_restart = sum(1 for r in restarts[pod] if r <= t)
                vals = (
                    ("rpc_latency_mean", round(mean, 6)),
                    ("rpc_latency_p95", last_p95[pod]),
                    ("request_count", float(len(lats))),
                    ("error_count", float(self.errs.get(key, 0))),
                    ("queue_depth", round(sum(lats) / 1000.0, 6)),
                    ("gc_pause", round(self.eff.gc_ms_in_second(svc.name, sec), 6)),
                    ("net_in", float(self.net_in.get(key, 0.0))),
                    ("net_out", float(self.net_out.get(key, 0.0))),
                    ("restarts", float(n_restart)),
                    ("liveness", 1.0),
                )
                for name, v in vals:
                    out.append(MetricPoint(ts, svc.name, pod, "", name, v))
        return out


def run_case(
    topo: Topology,
    profile: WorkloadProfile,
    protocol: CaseProtocol = CaseProtocol(),
    fault: FaultSpec | None = None,
    seed: int = 0,
    params: EngineParams = EngineParams(),
    case_id: str = "case",
) -> tuple[TelemetryBundle, CaseMeta]:
    """Simulate warm-up, normal and fault windows; only the last two are kept.

    Case time 0 is the start of the normal window; warm-up runs over
    ``[-warmup, 0)``.  ``profile.duration_s`` is ignored in favour of the
    protocol, and the arrival stream is seeded from ``seed``.
    """
    sim = Simulator(topo, protocol, fault, seed, params)
    prof = WorkloadProfile(profile.qps, profile.policy, sim._arrival_seed,
                           protocol.warmup_s + protocol.normal_s + protocol.fault_s, profile.workflow_mix)
    arrivals = generate_arrivals(prof, topo.top_level_workflows, start=-protocol.warmup_s)
    kept = 0
    for a in arrivals:
        rec = 0.0 <= a.time < sim.end
        sim.execute_request(a, kept if rec else -1)
        kept += rec
    spans = [s for s in sim.spans if isinstance(s, Span)]
    logs = sorted(sim.logs, key=lambda r: r.timestamp)
    bundle = TelemetryBundle(protocol.windows, sim.metrics() if params.emit_metrics else [], logs, spans)
    meta = CaseMeta(case_id, seed, fault.to_dict() if fault else None, protocol.warmup_s,
                    protocol.normal_s, protocol.fault_s, kept)
    return bundle, meta
