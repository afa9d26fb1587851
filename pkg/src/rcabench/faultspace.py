"""Fault types, discretized parameter grids, and stratified campaign planning.

Every fault type has a target kind and a list of parameter grids.  The
configuration space of a type on a given graph is ``targets x grid_1 x ...``
and is addressed by a single integer index (mixed radix, target slowest), so
sampling never materialises the space.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .topology import ServiceGraph

RESOURCE, NETWORK, HTTP, CODE, DNS, TIME = "Resource", "Network", "HTTP", "Code", "DNS", "Time"
CATEGORIES = (RESOURCE, NETWORK, HTTP, CODE, DNS, TIME)

TARGET_KINDS = ("service", "pod", "container", "edge", "operation")


class FaultSpaceError(ValueError):
    pass


class StratumExhaustedError(FaultSpaceError):
    pass


class InvalidSpecError(FaultSpaceError):
    pass


# -- grids -----------------------------------------------------------------

@dataclass(frozen=True)
class ValueGrid:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise FaultSpaceError("parameter grids must be nonempty")

    @property
    def size(self) -> int:
        return len(self.values)

    def value_at(self, index: int):
        return self.values[index]

    def contains(self, value) -> bool:
        return value in self.values


@dataclass(frozen=True)
class SubsetGrid:
    """All nonempty subsets of ``universe``; index i encodes bitmask i + 1."""

    universe: tuple[str, ...]

    def __post_init__(self):
        if not self.universe:
            raise FaultSpaceError("subset grid over an empty universe")

    @property
    def size(self) -> int:
        return (1 << len(self.universe)) - 1

    def value_at(self, index: int) -> tuple[str, ...]:
        mask = index + 1
        return tuple(u for i, u in enumerate(self.universe) if mask >> i & 1)

    def contains(self, value) -> bool:
        vals = tuple(value)
        return bool(vals) and len(set(vals)) == len(vals) and set(vals) <= set(self.universe) and list(vals) == [
            u for u in self.universe if u in set(vals)
        ]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    values: tuple = ()
    subset_of: str | None = None  # "monitored_services"

    def grid(self, graph: ServiceGraph):
        if self.subset_of == "monitored_services":
            return SubsetGrid(tuple(graph.monitored_services))
        if self.subset_of is not None:
            raise FaultSpaceError(f"unknown subset universe {self.subset_of!r}")
        return ValueGrid(tuple(self.values))


# -- targets ---------------------------------------------------------------

def _pods(g: ServiceGraph) -> list[str]:
    return [p for s in g.services if s.monitored for p in s.pods]


def _containers(g: ServiceGraph) -> list[str]:
    return [c for s in g.services if s.monitored for cs in s.containers for c in cs]


def _services(g: ServiceGraph) -> list[str]:
    return list(g.monitored_services)


def _app_edges(g: ServiceGraph) -> list[str]:
    out: list[str] = []
    for e in g.edges:
        if g.service(e.callee).monitored and g.service(e.caller).monitored and e.pair not in out:
            out.append(e.pair)
    return out


def _db_edges(g: ServiceGraph) -> list[str]:
    out: list[str] = []
    for e in g.edges:
        if e.database and not g.service(e.callee).monitored and g.service(e.caller).monitored and e.pair not in out:
            out.append(e.pair)
    return out


def _operations(g: ServiceGraph) -> list[str]:
    return [f"{s}/{op}" for s in g.monitored_services for op in g.operations(s)]


SCOPES = {
    "pod": _pods,
    "container": _containers,
    "service": _services,
    "edge": _app_edges,
    "db_edge": _db_edges,
    "operation": _operations,
}
SCOPE_KIND = {"pod": "pod", "container": "container", "service": "service", "edge": "edge",
              "db_edge": "edge", "operation": "operation"}


@dataclass(frozen=True)
class FaultType:
    name: str
    category: str
    short_name: str  # name as grouped under its category
    scope: str
    params: tuple[ParamSpec, ...] = ()

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise FaultSpaceError(f"unknown category {self.category!r}")
        if self.scope not in SCOPES:
            raise FaultSpaceError(f"unknown target scope {self.scope!r}")

    @property
    def target_kind(self) -> str:
        return SCOPE_KIND[self.scope]

    def targets(self, graph: ServiceGraph) -> list[str]:
        return SCOPES[self.scope](graph)

    def grids(self, graph: ServiceGraph) -> list:
        return [p.grid(graph) for p in self.params]

    def cardinality(self, graph: ServiceGraph) -> int:
        n = len(self.targets(graph))
        for g in self.grids(graph):
            n *= g.size
        return n


def _p(name, *values) -> ParamSpec:
    return ParamSpec(name, tuple(values))


PROB = _p("probability", 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)
DELAY_MS = _p("latency_ms", 10, 50, 100, 250, 500, 1000, 2000, 5000)
PCT = (1, 5, 10, 25, 50, 75, 90, 100)
CORRELATION = _p("correlation", 0, 25, 50, 75, 100)
DIRECTION = _p("direction", "to", "from", "both")
LOADS = (0.25, 0.5, 1, 2, 4, 8)


def _default_types() -> list[FaultType]:
    return [
        FaultType("PodKill", RESOURCE, "PodKill", "pod"),
        FaultType("PodFailure", RESOURCE, "PodFailure", "pod",
                  (_p("down_s", 5, 15, 30, 60), _p("up_s", 10, 30))),
        FaultType("ContainerKill", RESOURCE, "ContainerKill", "container"),
        FaultType("MemoryStress", RESOURCE, "MemoryStress", "pod",
                  (_p("size", *LOADS), _p("workers", 1, 2, 4))),
        FaultType("CPUStress", RESOURCE, "CPUStress", "pod",
                  (_p("load", *LOADS), _p("workers", 1, 2, 4, 8))),
        FaultType("NetworkDelay", NETWORK, "Delay", "edge",
                  (DELAY_MS, _p("jitter_ms", 0, 10, 50), CORRELATION, DIRECTION)),
        FaultType("NetworkLoss", NETWORK, "Loss", "edge", (_p("percent", *PCT), CORRELATION, DIRECTION)),
        FaultType("NetworkDuplicate", NETWORK, "Duplicate", "edge", (_p("percent", *PCT), CORRELATION, DIRECTION)),
        FaultType("NetworkCorrupt", NETWORK, "Corrupt", "edge", (_p("percent", *PCT), CORRELATION, DIRECTION)),
        FaultType("NetworkBandwidth", NETWORK, "Bandwidth", "edge",
                  (_p("rate_kbps", 1, 10, 100, 1000, 10000), _p("buffer_kb", 1, 10, 100), DIRECTION)),
        FaultType("NetworkPartition", NETWORK, "Partition", "edge", (DIRECTION,)),
        FaultType("HTTPRequestAbort", HTTP, "ReqAbort", "edge", (PROB,)),
        FaultType("HTTPResponseAbort", HTTP, "RespAbort", "edge", (PROB,)),
        FaultType("HTTPRequestDelay", HTTP, "ReqDelay", "edge", (_p("delay_ms", *DELAY_MS.values), PROB)),
        FaultType("HTTPResponseDelay", HTTP, "RespDelay", "edge", (_p("delay_ms", *DELAY_MS.values), PROB)),
        FaultType("HTTPResponseReplaceBody", HTTP, "RespReplaceBody", "edge",
                  (_p("body", "empty", "random", "truncated"), PROB)),
        FaultType("HTTPResponsePatchBody", HTTP, "RespPatchBody", "edge",
                  (_p("patch", "null_field", "wrong_type", "extra_field"), PROB)),
        FaultType("HTTPRequestReplacePath", HTTP, "ReqReplacePath", "edge",
                  (_p("path", "/", "/invalid", "/api/v1/unknown"), PROB)),
        FaultType("HTTPRequestReplaceMethod", HTTP, "ReqReplaceMethod", "edge",
                  (_p("method", "GET", "POST", "PUT", "DELETE", "PATCH"), PROB)),
        FaultType("HTTPResponseReplaceCode", HTTP, "RespReplaceCode", "edge",
                  (_p("code", 400, 403, 404, 500, 502, 503), PROB)),
        FaultType("JVMLatency", CODE, "Latency", "operation", (DELAY_MS,)),
        FaultType("JVMReturn", CODE, "Return", "operation",
                  (_p("value", "null", "empty", "zero", "negative", "default"),)),
        FaultType("JVMException", CODE, "Exception", "operation",
                  (_p("exception", "RuntimeException", "IOException", "NullPointerException", "IllegalStateException"),)),
        FaultType("JVMGC", CODE, "GC", "service", (_p("pause_ms", 50, 200, 500, 1000, 2000), _p("interval_s", 1, 5, 10))),
        FaultType("JVMCPUStress", CODE, "CPUStress", "operation", (_p("cpu_count", 1, 2, 4, 8),)),
        FaultType("JVMMemoryStress", CODE, "MemoryStress", "operation",
                  (_p("mem_type", "heap", "stack"), _p("size", *LOADS))),
        FaultType("JVMMySQLLatency", CODE, "MySQLLatency", "db_edge", (DELAY_MS,)),
        FaultType("JVMMySQLException", CODE, "MySQLException", "db_edge",
                  (_p("exception", "SQLException", "SQLTimeoutException"),)),
        FaultType("DNSError", DNS, "DNSError", "service", (ParamSpec("patterns", subset_of="monitored_services"),)),
        FaultType("DNSRandom", DNS, "DNSRandom", "service", (ParamSpec("patterns", subset_of="monitored_services"),)),
        FaultType("TimeSkew", TIME, "TimeSkew", "pod", (_p("offset_s", -300, -60, -5, 5, 60, 300),)),
    ]


class Registry:
    """Ordered collection of fault types keyed by name."""

    def __init__(self, types: Iterable[FaultType]):
        self._types: dict[str, FaultType] = {}
        for t in types:
            if t.name in self._types:
                raise FaultSpaceError(f"fault type {t.name!r} registered twice")
            self._types[t.name] = t

    def __iter__(self) -> Iterator[FaultType]:
        return iter(self._types.values())

    def __len__(self) -> int:
        return len(self._types)

    def __contains__(self, name) -> bool:
        return name in self._types

    def __getitem__(self, name: str) -> FaultType:
        try:
            return self._types[name]
        except KeyError:
            raise FaultSpaceError(f"unknown fault type {name!r}") from None

    def names(self) -> list[str]:
        return list(self._types)

    def by_category(self) -> dict[str, list[FaultType]]:
        out: dict[str, list[FaultType]] = {c: [] for c in CATEGORIES}
        for t in self:
            out[t.category].append(t)
        return out

    def with_overrides(self, overrides: Mapping[str, Mapping[str, Sequence]] | None) -> Registry:
        """Copy with some parameter grids replaced, e.g. ``{"CPUStress": {"load": [2, 4]}}``."""
        if not overrides:
            return self
        types = []
        for t in self:
            ov = overrides.get(t.name)
            if ov:
                unknown = set(ov) - {p.name for p in t.params}
                if unknown:
                    raise FaultSpaceError(f"{t.name}: no parameters named {sorted(unknown)}")
                params = tuple(ParamSpec(p.name, tuple(ov[p.name])) if p.name in ov else p for p in t.params)
                t = FaultType(t.name, t.category, t.short_name, t.scope, params)
            types.append(t)
        unknown = set(overrides) - set(self._types)
        if unknown:
            raise FaultSpaceError(f"overrides name unknown fault types {sorted(unknown)}")
        return Registry(types)


def default_registry() -> Registry:
    return Registry(_default_types())


# -- specs -----------------------------------------------------------------

@dataclass(frozen=True)
class FaultSpec:
    fault_type: str
    category: str
    target: str
    params: tuple[tuple[str, Any], ...]
    start: float
    end: float

    @property
    def param_dict(self) -> dict[str, Any]:
        return dict(self.params)

    def key(self) -> tuple:
        """Identity of the configuration, independent of the schedule."""
        return (self.fault_type, self.target, tuple((k, _hashable(v)) for k, v in self.params))

    def to_dict(self) -> dict[str, Any]:
        return {
            "fault_type": self.fault_type,
            "category": self.category,
            "target": self.target,
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params},
            "start": self.start,
            "end": self.end,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> FaultSpec:
        return cls(
            fault_type=d["fault_type"],
            category=d["category"],
            target=d["target"],
            params=tuple((k, _hashable(v)) for k, v in dict(d.get("params", {})).items()),
            start=float(d["start"]),
            end=float(d["end"]),
        )

    @classmethod
    def from_line(cls, line: str) -> FaultSpec:
        return cls.from_dict(json.loads(line))

    @property
    def target_service(self) -> str:
        """Service that owns the target (edge: callee side, operation: its service)."""
        if "->" in self.target:
            return self.target.split("->", 1)[1]
        if "/" in self.target:
            return self.target.split("/", 1)[0]
        return self.target


def _hashable(v):
    return tuple(v) if isinstance(v, list) else v


def spec_at(ft: FaultType, graph: ServiceGraph, index: int, window: tuple[float, float],
            _cache: dict | None = None) -> FaultSpec:
    """Decode a configuration index of ``ft`` (target varies slowest)."""
    if _cache is not None and ft.name in _cache:
        targets, grids = _cache[ft.name]
    else:
        targets, grids = ft.targets(graph), ft.grids(graph)
        if _cache is not None:
            _cache[ft.name] = (targets, grids)
    digits = []
    rem = index
    for g in reversed(grids):
        rem, d = divmod(rem, g.size)
        digits.append(d)
    digits.reverse()
    if not 0 <= rem < len(targets):
        raise IndexError(index)
    params = tuple((p.name, g.value_at(d)) for p, g, d in zip(ft.params, grids, digits))
    return FaultSpec(ft.name, ft.category, targets[rem], params, float(window[0]), float(window[1]))


def make_spec(registry: Registry, fault_type: str, target: str, window: tuple[float, float], **params) -> FaultSpec:
    ft = registry[fault_type]
    ordered = []
    for p in ft.params:
        if p.name not in params:
            raise InvalidSpecError(f"{fault_type}: missing parameter {p.name!r}")
        ordered.append((p.name, _hashable(params.pop(p.name))))
    if params:
        raise InvalidSpecError(f"{fault_type}: unexpected parameters {sorted(params)}")
    return FaultSpec(fault_type, ft.category, target, tuple(ordered), float(window[0]), float(window[1]))


def validate_spec(spec: FaultSpec, graph: ServiceGraph, registry: Registry) -> None:
    ft = registry[spec.fault_type]
    if spec.category != ft.category:
        raise InvalidSpecError(f"{spec.fault_type} belongs to {ft.category}, not {spec.category}")
    if spec.target not in ft.targets(graph):
        raise InvalidSpecError(f"{spec.fault_type}: {spec.target!r} is not a valid {ft.target_kind} target")
    names = [k for k, _ in spec.params]
    if names != [p.name for p in ft.params]:
        raise InvalidSpecError(f"{spec.fault_type}: parameters {names} do not match schema")
    for (k, v), g in zip(spec.params, ft.grids(graph)):
        if not g.contains(v):
            raise InvalidSpecError(f"{spec.fault_type}: {k}={v!r} is off-grid")
    if not spec.end > spec.start:
        raise InvalidSpecError("injection window must have positive length")


# -- cardinality & planning ------------------------------------------------

@dataclass(frozen=True)
class Cardinality:
    per_type: dict[str, int]
    per_category: dict[str, int]
    total: int


def space_cardinality(graph: ServiceGraph, registry: Registry | None = None) -> Cardinality:
    registry = registry or default_registry()
    per_type = {t.name: t.cardinality(graph) for t in registry}
    per_cat = {c: 0 for c in CATEGORIES}
    for t in registry:
        per_cat[t.category] += per_type[t.name]
    return Cardinality(per_type, per_cat, sum(per_type.values()))


@dataclass
class FaultSpacePlan:
    sizes: dict[str, int]
    seed: int = 0
    exclusions: set = field(default_factory=set)  # FaultSpec.key() tuples
    window: tuple[float, float] = (240.0, 480.0)
    types: list[str] | None = None  # restrict strata to these fault types

    def __post_init__(self):
        for cat, n in self.sizes.items():
            if cat not in CATEGORIES:
                raise FaultSpaceError(f"unknown category {cat!r}")
            if n < 0:
                raise FaultSpaceError("stratum sizes must be >= 0")


ENUMERATE_BELOW = 20000


def plan_campaign(plan: FaultSpacePlan, graph: ServiceGraph, registry: Registry | None = None) -> list[FaultSpec]:
    """Uniform sampling without replacement inside each category stratum.

    Strata are processed in canonical category order with one seeded RNG, so
    the output depends only on (plan, graph, registry).
    """
    registry = registry or default_registry()
    if plan.types is not None:
        for name in plan.types:
            registry[name]
    rng = random.Random(plan.seed)
    cache: dict = {}
    out: list[FaultSpec] = []
    for cat in CATEGORIES:
        want = plan.sizes.get(cat, 0)
        if want == 0:
            continue
        types = [t for t in registry.by_category()[cat] if plan.types is None or t.name in plan.types]
        cards = [t.cardinality(graph) for t in types]
        total = sum(cards)
        names = {t.name for t in types}
        excluded = {k for k in plan.exclusions if k[0] in names}
        available = total - len(excluded)
        if want > available:
            raise StratumExhaustedError(
                f"stratum {cat}: requested {want}, only {available} configurations available"
            )

        def decode(i: int) -> FaultSpec:
            for t, c in zip(types, cards):
                if i < c:
                    return spec_at(t, graph, i, plan.window, cache)
                i -= c
            raise IndexError(i)

        if total <= ENUMERATE_BELOW or want * 2 > available:
            pool = [s for s in (decode(i) for i in range(total)) if s.key() not in excluded]
            out.extend(rng.sample(pool, want))
            continue
        seen = set(excluded)
        picked = 0
        while picked < want:
            spec = decode(rng.randrange(total))
            k = spec.key()
            if k in seen:
                continue
            seen.add(k)
            out.append(spec)
            picked += 1
    return out


def write_specs(specs: Iterable[FaultSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in specs:
            fh.write(s.to_line() + "\n")


def read_specs(path) -> list[FaultSpec]:
    with open(path, encoding="utf-8") as fh:
        return [FaultSpec.from_line(line) for line in fh if line.strip()]
