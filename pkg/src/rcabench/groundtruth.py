"""Hierarchical root-cause labels: Service > Pod > Container > leaf."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .faultspace import FaultSpec
from .topology import ServiceGraph

LEVELS = ("service", "pod", "container")
LEAF_KINDS = ("metric", "span", "function")

STRESS_METRIC = {"CPUStress": "cpu_usage", "MemoryStress": "memory_usage"}


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthLabel:
    case_id: str
    fault_type: str
    path: tuple[tuple[str, str], ...]  # (level, id) from service downwards

    def __post_init__(self):
        if not self.path or self.path[0][0] != "service":
            raise LabelError("a label always starts at the service level")
        for (lvl, _), expected in zip(self.path, LEVELS):
            if lvl != expected and lvl not in LEAF_KINDS:
                raise LabelError(f"unexpected level {lvl!r}")

    @property
    def service(self) -> str:
        return self.path[0][1]

    def to_dict(self) -> dict[str, Any]:
        return {"case_id": self.case_id, "fault_type": self.fault_type, "path": [list(p) for p in self.path]}

    @classmethod
    def from_dict(cls, d) -> GroundTruthLabel:
        return cls(d["case_id"], d["fault_type"], tuple((a, b) for a, b in d["path"]))


def resolved_service(spec: FaultSpec, graph: ServiceGraph, edge_side: str = "callee") -> str:
    """The service a label for ``spec`` is anchored on."""
    t = spec.target
    if "->" in t:
        caller, callee = t.split("->", 1)
        if spec.fault_type.startswith("JVMMySQL"):
            return caller  # the database itself is not monitored
        return callee if edge_side == "callee" else caller
    if "/" in t:
        return t.split("/", 1)[0]
    if graph.has_service(t):
        return t
    pods = graph.pod_owner()
    if t in pods:
        return pods[t]
    containers = graph.container_owner()
    if t in containers:
        return containers[t][0]
    raise LabelError(f"cannot resolve target {t!r}")


def derive_label(spec: FaultSpec, graph: ServiceGraph, case_id: str = "", edge_side: str = "callee") -> GroundTruthLabel:
    if edge_side not in ("callee", "caller"):
        raise LabelError("edge_side must be 'callee' or 'caller'")
    svc = resolved_service(spec, graph, edge_side)
    node = graph.service(svc)
    t = spec.target
    ft = spec.fault_type
    path: list[tuple[str, str]] = [("service", svc)]
    if ft.startswith("JVMMySQL"):
        pod = node.pods[0]
        path += [("pod", pod), ("container", node.main_container(pod)), ("span", t)]
    elif "/" in t:
        pod = node.pods[0]
        path += [("pod", pod), ("container", node.main_container(pod)), ("function", t.split("/", 1)[1])]
    elif t in graph.pod_owner():
        path.append(("pod", t))
        if ft in STRESS_METRIC:
            path += [("container", node.main_container(t)), ("metric", STRESS_METRIC[ft])]
    elif t in graph.container_owner():
        path += [("pod", graph.container_owner()[t][1]), ("container", t)]
    return GroundTruthLabel(case_id, ft, tuple(path))


def expand_ancestors(label: GroundTruthLabel) -> set[tuple[str, str]]:
    """The label and every coarser level it implies."""
    return {label.path[i] for i in range(len(label.path))}


def write_label(label: GroundTruthLabel, case_dir: str | Path) -> Path:
    path = Path(case_dir) / "label.rec"
    path.write_text(json.dumps(label.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def read_label(case_dir: str | Path) -> GroundTruthLabel:
    return GroundTruthLabel.from_dict(json.loads((Path(case_dir) / "label.rec").read_text(encoding="utf-8")))
