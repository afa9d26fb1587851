"""Service dependency graph and state-machine workflow model.

A topology document is a YAML (or JSON) mapping with four top-level keys:
``services``, ``edges``, ``workflows`` and ``entry_points``.  See
``configs/chain3.yaml`` for the smallest complete example.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterator, Mapping

import networkx as nx
import yaml

DEFAULT_CPU_CAPACITY = 2.0
DEFAULT_MEMORY_CAPACITY = 2 * 1024**3


class TopologyError(ValueError):
    """Base class for topology loading failures."""


class TopologyParseError(TopologyError):
    pass


class DanglingReferenceError(TopologyError):
    pass


class CycleError(TopologyError):
    def __init__(self, cycle: list[str], what: str = "call graph"):
        self.cycle = cycle
        super().__init__(f"cycle detected in {what}: {' -> '.join(cycle)}")


@dataclass(frozen=True)
class ServiceNode:
    name: str
    pods: tuple[str, ...]
    containers: tuple[tuple[str, ...], ...]  # containers[i] belong to pods[i]
    cpu_capacity: float = DEFAULT_CPU_CAPACITY
    memory_capacity: float = DEFAULT_MEMORY_CAPACITY
    monitored: bool = True
    operations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.pods:
            raise TopologyError(f"service {self.name!r} has no pods")
        if len(self.containers) != len(self.pods) or any(not c for c in self.containers):
            raise TopologyError(f"service {self.name!r}: every pod needs at least one container")
        if self.cpu_capacity <= 0 or self.memory_capacity <= 0:
            raise TopologyError(f"service {self.name!r}: capacities must be positive")

    def main_container(self, pod: str) -> str:
        return self.containers[self.pods.index(pod)][0]


@dataclass(frozen=True)
class CallEdge:
    caller: str
    callee: str
    operation: str
    latency_ms: float = 10.0
    payload_bytes: int = 1024
    database: bool = False
    caller_operation: str | None = None  # None: fired by every caller operation
    optional: bool = False

    @property
    def pair(self) -> str:
        return f"{self.caller}->{self.callee}"


@dataclass(frozen=True)
class Transition:
    name: str
    service: str | None = None
    operation: str | None = None
    sub_workflow: WorkflowStateMachine | None = None
    weight: float = 1.0


@dataclass(frozen=True)
class State:
    name: str
    transitions: tuple[Transition, ...]


@dataclass(frozen=True)
class WorkflowStateMachine:
    name: str
    root_service: str
    root_operation: str
    states: tuple[State, ...]
    root_latency_ms: float = 5.0


@dataclass(frozen=True)
class Choice:
    state: str
    transition: Transition
    sub: ExecutionPath | None = None


@dataclass(frozen=True)
class ExecutionPath:
    workflow: str
    index: int
    choices: tuple[Choice, ...]

    def services(self, root_service: str | None = None) -> set[str]:
        """Services invoked directly by the workflow (static downstream excluded)."""
        out = {root_service} if root_service else set()
        for c in self.choices:
            if c.transition.service:
                out.add(c.transition.service)
            if c.sub is not None:
                out |= c.sub.services(c.transition.sub_workflow.root_service)
        return out


@dataclass
class ServiceGraph:
    services: list[ServiceNode]
    edges: list[CallEdge]
    entry_points: list[str]
    name: str = "topology"
    _by_name: dict[str, ServiceNode] = field(init=False, repr=False, compare=False)
    _static: dict[tuple[str, str], list[CallEdge]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._by_name = {s.name: s for s in self.services}
        self._static = {}

    def service(self, name: str) -> ServiceNode:
        return self._by_name[name]

    def has_service(self, name: str) -> bool:
        return name in self._by_name

    @property
    def service_names(self) -> list[str]:
        return [s.name for s in self.services]

    @property
    def monitored_services(self) -> list[str]:
        return [s.name for s in self.services if s.monitored]

    def pod_owner(self) -> dict[str, str]:
        return {p: s.name for s in self.services for p in s.pods}

    def container_owner(self) -> dict[str, tuple[str, str]]:
        return {
            c: (s.name, p)
            for s in self.services
            for p, cs in zip(s.pods, s.containers)
            for c in cs
        }

    def static_calls(self, service: str, operation: str) -> list[CallEdge]:
        """Edges fired, in declaration order, when ``service`` handles ``operation``."""
        key = (service, operation)
        calls = self._static.get(key)
        if calls is None:
            calls = [
                e for e in self.edges
                if e.caller == service and e.caller_operation in (None, operation)
            ]
            self._static[key] = calls
        return calls

    def find_edge(self, caller: str, callee: str, operation: str, caller_operation: str | None = None) -> CallEdge | None:
        for e in self.edges:
            if (e.caller, e.callee, e.operation) == (caller, callee, operation) and (
                caller_operation is None or e.caller_operation in (None, caller_operation)
            ):
                return e
        return None

    def operations(self, service: str) -> list[str]:
        """Declared operations plus every operation some edge invokes on ``service``."""
        ops = list(self.service(service).operations)
        for e in self.edges:
            if e.callee == service and e.operation not in ops:
                ops.append(e.operation)
        return ops

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.service_names)
        g.add_edges_from((e.caller, e.callee) for e in self.edges)
        return g


@dataclass(frozen=True)
class Topology:
    graph: ServiceGraph
    workflows: tuple[WorkflowStateMachine, ...]

    def workflow(self, name: str) -> WorkflowStateMachine:
        for w in self.workflows:
            if w.name == name:
                return w
        raise KeyError(name)

    @property
    def top_level_workflows(self) -> list[WorkflowStateMachine]:
        """Workflows whose root is an entry point; these generate user requests."""
        entries = set(self.graph.entry_points)
        return [w for w in self.workflows if w.root_service in entries]


# -- loading ---------------------------------------------------------------

def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise TopologyParseError(f"{where}: missing required key {key!r}")
    return doc[key]


def _parse_service(raw: Mapping) -> ServiceNode:
    name = str(_require(raw, "name", "service"))
    pods_raw = raw.get("pods", 1)
    if isinstance(pods_raw, int):
        pods = tuple(f"{name.lower()}-{i}" for i in range(pods_raw))
    else:
        pods = tuple(str(p) for p in pods_raw)
    containers_raw = raw.get("containers", ["main"])
    if containers_raw and isinstance(containers_raw[0], (list, tuple)):
        containers = tuple(tuple(str(c) for c in cs) for cs in containers_raw)
    else:
        containers = tuple(tuple(f"{p}-{c}" for c in containers_raw) for p in pods)
    try:
        return ServiceNode(
            name=name,
            pods=pods,
            containers=containers,
            cpu_capacity=float(raw.get("cpu_capacity", DEFAULT_CPU_CAPACITY)),
            memory_capacity=float(raw.get("memory_capacity", DEFAULT_MEMORY_CAPACITY)),
            monitored=bool(raw.get("monitored", True)),
            operations=tuple(str(o) for o in raw.get("operations", ())),
        )
    except TypeError as exc:
        raise TopologyParseError(f"service {name!r}: {exc}") from exc


def _parse_edge(raw: Mapping) -> CallEdge:
    return CallEdge(
        caller=str(_require(raw, "caller", "edge")),
        callee=str(_require(raw, "callee", "edge")),
        operation=str(_require(raw, "operation", "edge")),
        latency_ms=float(raw.get("latency_ms", 10.0)),
        payload_bytes=int(raw.get("payload_bytes", 1024)),
        database=bool(raw.get("database", False)),
        caller_operation=raw.get("caller_operation"),
        optional=bool(raw.get("optional", False)),
    )


def _build_workflows(raw_list: list[Mapping]) -> list[WorkflowStateMachine]:
    raw_by_name: dict[str, Mapping] = {}
    for raw in raw_list:
        name = str(_require(raw, "name", "workflow"))
        if name in raw_by_name:
            raise TopologyParseError(f"duplicate workflow {name!r}")
        raw_by_name[name] = raw

    deps = nx.DiGraph()
    deps.add_nodes_from(raw_by_name)
    for name, raw in raw_by_name.items():
        for st in raw.get("states", ()):
            for tr in st.get("transitions", ()):
                sub = tr.get("sub_workflow")
                if sub is None:
                    continue
                if sub not in raw_by_name:
                    raise DanglingReferenceError(f"workflow {name!r} references unknown sub-workflow {sub!r}")
                deps.add_edge(name, sub)
    try:
        cycle = nx.find_cycle(deps)
    except nx.NetworkXNoCycle:
        pass
    else:
        raise CycleError([u for u, _ in cycle] + [cycle[0][0]], "workflow dependencies")

    built: dict[str, WorkflowStateMachine] = {}
    for name in reversed(list(nx.topological_sort(deps))):
        raw = raw_by_name[name]
        root = _require(raw, "root", f"workflow {name}")
        states = []
        for st in _require(raw, "states", f"workflow {name}"):
            sname = str(_require(st, "name", f"workflow {name} state"))
            transitions = []
            for tr in st.get("transitions", ()):
                sub = tr.get("sub_workflow")
                t = Transition(
                    name=str(_require(tr, "name", f"state {sname} transition")),
                    service=tr.get("service"),
                    operation=tr.get("operation"),
                    sub_workflow=built[sub] if sub else None,
                    weight=float(tr.get("weight", 1.0)),
                )
                if t.service is None and t.sub_workflow is None:
                    raise TopologyParseError(f"transition {t.name!r} neither calls a service nor a sub-workflow")
                if (t.service is None) != (t.operation is None):
                    raise TopologyParseError(f"transition {t.name!r}: service and operation go together")
                if t.weight < 0:
                    raise TopologyParseError(f"transition {t.name!r}: negative weight")
                transitions.append(t)
            if not transitions:
                raise TopologyParseError(f"workflow {name!r} state {sname!r} has no transitions")
            if sum(t.weight for t in transitions) <= 0:
                raise TopologyParseError(f"workflow {name!r} state {sname!r}: all weights are zero")
            states.append(State(sname, tuple(transitions)))
        built[name] = WorkflowStateMachine(
            name=name,
            root_service=str(_require(root, "service", f"workflow {name} root")),
            root_operation=str(_require(root, "operation", f"workflow {name} root")),
            states=tuple(states),
            root_latency_ms=float(root.get("latency_ms", 5.0)),
        )
    return [built[str(r["name"])] for r in raw_list]


def _validate(graph: ServiceGraph, workflows: list[WorkflowStateMachine]) -> None:
    names = graph.service_names
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise TopologyError(f"duplicate service names: {dupes}")
    pods = [p for s in graph.services for p in s.pods]
    if len(set(pods)) != len(pods):
        raise TopologyError("pod ids must be unique across services")
    for e in graph.edges:
        for end in (e.caller, e.callee):
            if not graph.has_service(end):
                raise DanglingReferenceError(f"edge {e.pair}/{e.operation} references undeclared service {end!r}")
    if not graph.entry_points:
        raise TopologyError("at least one entry point is required")
    for ep in graph.entry_points:
        if not graph.has_service(ep):
            raise DanglingReferenceError(f"entry point {ep!r} is not a declared service")
    try:
        cycle = nx.find_cycle(graph.digraph())
    except nx.NetworkXNoCycle:
        pass
    else:
        raise CycleError([u for u, _ in cycle] + [cycle[0][0]])

    used_as_sub = set()
    for wf in workflows:
        if not graph.has_service(wf.root_service):
            raise DanglingReferenceError(f"workflow {wf.name!r} root service {wf.root_service!r} is undeclared")
        for st in wf.states:
            for t in st.transitions:
                if t.service is not None:
                    if not graph.has_service(t.service):
                        raise DanglingReferenceError(f"transition {t.name!r} calls undeclared service {t.service!r}")
                    if graph.find_edge(wf.root_service, t.service, t.operation, wf.root_operation) is None:
                        raise DanglingReferenceError(
                            f"transition {t.name!r}: no edge {wf.root_service}->{t.service}/{t.operation}"
                        )
                if t.sub_workflow is not None:
                    sub = t.sub_workflow
                    used_as_sub.add(sub.name)
                    if graph.find_edge(wf.root_service, sub.root_service, sub.root_operation, wf.root_operation) is None:
                        raise DanglingReferenceError(
                            f"sub-workflow {sub.name!r}: no edge {wf.root_service}->{sub.root_service}/{sub.root_operation}"
                        )
    for wf in workflows:
        if wf.root_service not in graph.entry_points and wf.name not in used_as_sub:
            raise TopologyError(f"workflow {wf.name!r} is unreachable: root is not an entry point and it is never a sub-workflow")


def load_topology(document: str | Path | Mapping[str, Any]) -> Topology:
    """Parse and validate a topology document.

    ``document`` may be a mapping, YAML/JSON text, a file path, or the name of a
    shipped reference config (``chain3``, ``trainticket50``).
    """
    if isinstance(document, Mapping):
        doc = document
    else:
        text = _read_document(document)
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise TopologyParseError(str(exc)) from exc
        if not isinstance(doc, Mapping):
            raise TopologyParseError("topology document must be a mapping")

    for key in ("services", "edges", "entry_points"):
        _require(doc, key, "topology")
    services = [_parse_service(s) for s in doc["services"]]
    edges = [_parse_edge(e) for e in doc["edges"]]
    graph = ServiceGraph(
        services=services,
        edges=edges,
        entry_points=[str(e) for e in doc["entry_points"]],
        name=str(doc.get("name", "topology")),
    )
    workflows = _build_workflows(list(doc.get("workflows", ())))
    _validate(graph, workflows)
    return Topology(graph, tuple(workflows))


def _read_document(document: str | Path) -> str:
    if isinstance(document, Path):
        return document.read_text()
    if "\n" in document or document.lstrip().startswith("{"):
        return document
    shipped = resources.files("rcabench.configs").joinpath(f"{document}.yaml")
    if shipped.is_file():
        return shipped.read_text()
    path = Path(document)
    if path.is_file():
        return path.read_text()
    raise TopologyParseError(f"no such topology document: {document!r}")


def dump_topology(topo: Topology) -> dict[str, Any]:
    """Serialize to the document form accepted by :func:`load_topology`."""
    services = []
    for s in topo.graph.services:
        services.append({
            "name": s.name,
            "pods": list(s.pods),
            "containers": [list(cs) for cs in s.containers],
            "cpu_capacity": s.cpu_capacity,
            "memory_capacity": s.memory_capacity,
            "monitored": s.monitored,
            "operations": list(s.operations),
        })
    edges = []
    for e in topo.graph.edges:
        edges.append({
            "caller": e.caller,
            "callee": e.callee,
            "operation": e.operation,
            "latency_ms": e.latency_ms,
            "payload_bytes": e.payload_bytes,
            "database": e.database,
            "caller_operation": e.caller_operation,
            "optional": e.optional,
        })
    workflows = []
    for w in topo.workflows:
        states = []
        for st in w.states:
            trs = []
            for t in st.transitions:
                d: dict[str, Any] = {"name": t.name, "weight": t.weight}
                if t.service is not None:
                    d["service"] = t.service
                    d["operation"] = t.operation
                if t.sub_workflow is not None:
                    d["sub_workflow"] = t.sub_workflow.name
                trs.append(d)
            states.append({"name": st.name, "transitions": trs})
        workflows.append({
            "name": w.name,
            "root": {"service": w.root_service, "operation": w.root_operation, "latency_ms": w.root_latency_ms},
            "states": states,
        })
    return {
        "name": topo.graph.name,
        "services": services,
        "edges": edges,
        "entry_points": list(topo.graph.entry_points),
        "workflows": workflows,
    }


# -- execution paths -------------------------------------------------------

def _state_options(state: State) -> list[int]:
    return [count_paths(t.sub_workflow) if t.sub_workflow else 1 for t in state.transitions]


def count_paths(workflow: WorkflowStateMachine) -> int:
    """Number of distinct execution paths: product over states of the summed
    path counts of their transitions, recursing through sub-workflows."""
    total = 1
    for st in workflow.states:
        total *= sum(_state_options(st))
    return total


def _iter_paths(workflow: WorkflowStateMachine) -> Iterator[tuple[Choice, ...]]:
    def options(state: State) -> Iterator[Choice]:
        for t in state.transitions:
            if t.sub_workflow is None:
                yield Choice(state.name, t)
            else:
                for sub in enumerate_paths(t.sub_workflow):
                    yield Choice(state.name, t, sub)

    # state 0 varies slowest: depth-first in declaration order
    yield from itertools.product(*(list(options(s)) for s in workflow.states))


def enumerate_paths(workflow: WorkflowStateMachine, limit: int | None = None) -> list[ExecutionPath]:
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    paths = itertools.islice(_iter_paths(workflow), limit)
    return [ExecutionPath(workflow.name, i, choices) for i, choices in enumerate(paths)]


def path_at(workflow: WorkflowStateMachine, index: int) -> ExecutionPath:
    """The ``index``-th path of :func:`enumerate_paths`, decoded without enumerating."""
    total = count_paths(workflow)
    if not 0 <= index < total:
        raise IndexError(index)
    radices = [sum(_state_options(s)) for s in workflow.states]
    digits = []
    rem = index
    for r in reversed(radices):
        rem, d = divmod(rem, r)
        digits.append(d)
    digits.reverse()
    choices = []
    for st, d in zip(workflow.states, digits):
        for t, n in zip(st.transitions, _state_options(st)):
            if d < n:
                sub = path_at(t.sub_workflow, d) if t.sub_workflow else None
                choices.append(Choice(st.name, t, sub))
                break
            d -= n
    return ExecutionPath(workflow.name, index, tuple(choices))


def path_index(workflow: WorkflowStateMachine, picks: list[tuple[int, int]]) -> int:
    """Inverse of :func:`path_at`; ``picks`` holds (transition index, sub-path index) per state."""
    index = 0
    for st, (ti, sub_index) in zip(workflow.states, picks):
        opts = _state_options(st)
        index = index * sum(opts) + sum(opts[:ti]) + sub_index
    return index


# -- call trees ------------------------------------------------------------

@dataclass(frozen=True)
class CallNode:
    """One RPC of an expanded execution path; ``edge`` is None for the root."""

    service: str
    operation: str
    edge: CallEdge | None
    children: tuple[CallNode, ...] = ()

    def walk(self) -> Iterator[tuple[CallNode, int]]:
        stack = [(self, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            stack.extend((c, depth + 1) for c in reversed(node.children))


def _static_tree(graph: ServiceGraph, service: str, operation: str, edge: CallEdge | None) -> CallNode:
    kids = tuple(_static_tree(graph, e.callee, e.operation, e) for e in graph.static_calls(service, operation))
    return CallNode(service, operation, edge, kids)


def expand_path(graph: ServiceGraph, workflow: WorkflowStateMachine, path: ExecutionPath,
                edge: CallEdge | None = None) -> CallNode:
    """Call tree of one execution path.

    The workflow root only issues the calls chosen by its states; every other
    node fires its static edges in declaration order.
    """
    kids = []
    for choice in path.choices:
        t = choice.transition
        if t.sub_workflow is not None:
            sub = t.sub_workflow
            e = graph.find_edge(workflow.root_service, sub.root_service, sub.root_operation, workflow.root_operation)
            kids.append(expand_path(graph, sub, choice.sub, e))
        if t.service is not None:
            e = graph.find_edge(workflow.root_service, t.service, t.operation, workflow.root_operation)
            kids.append(_static_tree(graph, t.service, t.operation, e))
    return CallNode(workflow.root_service, workflow.root_operation, edge, tuple(kids))


def tree_depth(node: CallNode, graph: ServiceGraph | None = None) -> int:
    """Longest root-to-leaf path, counted in edges.

    With ``graph`` given, unmonitored nodes are skipped since they emit no span.
    """
    return max(d for n, d in node.walk() if graph is None or graph.service(n.service).monitored)


def structural_reach(topo: Topology, monitored_only: bool = True) -> tuple[set[str], int]:
    """(services touched by any top-level path, max call depth) by exhaustive expansion."""
    seen: set[str] = set()
    depth = 0
    for wf in topo.top_level_workflows:
        for path in enumerate_paths(wf):
            tree = expand_path(topo.graph, wf, path)
            depth = max(depth, tree_depth(tree, topo.graph if monitored_only else None))
            seen.update(n.service for n, _ in tree.walk())
    if monitored_only:
        seen &= set(topo.graph.monitored_services)
    return seen, depth
