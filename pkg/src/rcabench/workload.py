"""Open-loop request arrivals composed from workflow execution paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .topology import WorkflowStateMachine, count_paths, path_index

REFERENCE_MEAN_QPS = 16.47
REFERENCE_MAX_QPS = 37.6


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class QpsSchedule:
    """Target request rate over time.

    kind ``constant`` uses ``rate``; ``piecewise`` uses ``steps`` as
    (start second, rate) pairs sorted by start; ``sinusoidal`` is
    ``mean * (1 + amplitude * sin(2 pi t / period))`` clipped to ``cap``.
    """

    kind: str = "constant"
    rate: float = 10.0
    steps: tuple[tuple[float, float], ...] = ()
    amplitude: float = 0.0
    period_s: float = 240.0
    cap: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if not self.rate > 0:
                raise WorkloadError("constant QPS must be positive")
        elif self.kind == "piecewise":
            if not self.steps:
                raise WorkloadError("piecewise schedule needs at least one step")
            starts = [s for s, _ in self.steps]
            if starts != sorted(starts):
                raise WorkloadError("piecewise steps must be sorted by start time")
            if any(not r > 0 for _, r in self.steps):
                raise WorkloadError("every piecewise rate must be positive")
        elif self.kind == "sinusoidal":
            if not self.rate > 0 or not 0 <= self.amplitude < 1 or not self.period_s > 0:
                raise WorkloadError("sinusoidal schedule needs rate > 0, 0 <= amplitude < 1, period > 0")
            if self.cap is not None and not self.cap > 0:
                raise WorkloadError("cap must be positive")
        else:
            raise WorkloadError(f"unknown QPS schedule kind {self.kind!r}")

    def rate_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.rate
        if self.kind == "piecewise":
            r = self.steps[0][1]
            for start, rate in self.steps:
                if t >= start:
                    r = rate
                else:
                    break
            return r
        r = self.rate * (1.0 + self.amplitude * math.sin(2 * math.pi * t / self.period_s))
        return min(r, self.cap) if self.cap is not None else r

    def max_rate(self) -> float:
        if self.kind == "constant":
            return self.rate
        if self.kind == "piecewise":
            return max(r for _, r in self.steps)
        peak = self.rate * (1.0 + self.amplitude)
        return min(peak, self.cap) if self.cap is not None else peak

    @classmethod
    def reference(cls) -> QpsSchedule:
        return cls("sinusoidal", rate=REFERENCE_MEAN_QPS, amplitude=0.5, period_s=240.0, cap=REFERENCE_MAX_QPS)


@dataclass(frozen=True)
class WorkloadProfile:
    qps: QpsSchedule = field(default_factory=QpsSchedule.reference)
    policy: str = "uniform"  # or "weighted"
    seed: int = 0
    duration_s: float = 60.0
    workflow_mix: Mapping[str, float] | None = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise WorkloadError("duration must be positive")
        if self.policy not in ("uniform", "weighted"):
            raise WorkloadError(f"unknown path policy {self.policy!r}")
        if self.workflow_mix is not None:
            if any(w < 0 for w in self.workflow_mix.values()) or sum(self.workflow_mix.values()) <= 0:
                raise WorkloadError("workflow mix weights must be nonnegative and not all zero")


@dataclass(frozen=True)
class RequestArrival:
    time: float
    workflow: str
    path: int


def profile_from_dict(doc: Mapping[str, Any] | None, **overrides) -> WorkloadProfile:
    doc = dict(doc or {})
    doc.update({k: v for k, v in overrides.items() if v is not None})
    q = doc.get("qps", "reference")
    if q == "reference":
        sched = QpsSchedule.reference()
    elif isinstance(q, (int, float)):
        sched = QpsSchedule("constant", rate=float(q))
    elif isinstance(q, Mapping):
        q = dict(q)
        if "steps" in q:
            q["steps"] = tuple((float(a), float(b)) for a, b in q["steps"])
        sched = QpsSchedule(**q)
    else:
        raise WorkloadError(f"cannot interpret qps setting {q!r}")
    return WorkloadProfile(
        qps=sched,
        policy=doc.get("policy", "uniform"),
        seed=int(doc.get("seed", 0)),
        duration_s=float(doc.get("duration_s", 60.0)),
        workflow_mix=doc.get("workflow_mix"),
    )


def _weighted_pick(wf: WorkflowStateMachine, rng: np.random.Generator) -> int:
    picks = []
    for st in wf.states:
        w = np.array([t.weight for t in st.transitions], dtype=float)
        ti = int(rng.choice(len(w), p=w / w.sum()))
        t = st.transitions[ti]
        picks.append((ti, _weighted_pick(t.sub_workflow, rng) if t.sub_workflow else 0))
    return path_index(wf, picks)


def arrival_times(schedule: QpsSchedule, start: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    """Non-homogeneous Poisson process on [start, start+duration) by thinning."""
    lam = schedule.max_rate()
    # draw candidates in batches sized to cover the window with high probability
    times: list[np.ndarray] = []
    t = start
    end = start + duration
    while t < end:
        n = max(16, int(lam * (end - t) * 1.2) + 16)
        gaps = rng.exponential(1.0 / lam, size=n)
        cand = t + np.cumsum(gaps)
        u = rng.random(n)
        t = float(cand[-1])
        cand_in = cand < end
        if schedule.kind == "constant":
            keep = cand_in
        else:
            rates = np.array([schedule.rate_at(x) for x in cand])
            keep = cand_in & (u * lam < rates)
        times.append(cand[keep])
    return np.concatenate(times) if times else np.empty(0)


def generate_arrivals(
    profile: WorkloadProfile,
    workflows: Sequence[WorkflowStateMachine],
    start: float = 0.0,
) -> list[RequestArrival]:
    if not workflows:
        raise WorkloadError("at least one workflow is required")
    rng = np.random.default_rng(profile.seed)
    times = arrival_times(profile.qps, start, profile.duration_s, rng)

    if profile.workflow_mix:
        names = [w.name for w in workflows]
        unknown = set(profile.workflow_mix) - set(names)
        if unknown:
            raise WorkloadError(f"workflow mix names unknown workflows: {sorted(unknown)}")
        mix = np.array([float(profile.workflow_mix.get(n, 0.0)) for n in names])
        mix = mix / mix.sum()
    else:
        mix = np.full(len(workflows), 1.0 / len(workflows))
    counts = [count_paths(w) for w in workflows]

    wf_idx = rng.choice(len(workflows), size=len(times), p=mix)
    out = []
    for t, wi in zip(times, wf_idx):
        wf = workflows[wi]
        if profile.policy == "uniform":
            p = int(rng.integers(counts[wi]))
        else:
            p = _weighted_pick(wf, rng)
        out.append(RequestArrival(float(t), wf.name, p))
    return out
