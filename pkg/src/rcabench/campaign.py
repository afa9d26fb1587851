"""Campaign pipeline: plan -> generate -> validate -> evaluate, plus stats and audits.

Campaign directory layout::

    <out>/config.yaml            resolved campaign config
    <out>/plan.ndrec             one planned case per line
    <out>/cases/<case_id>/       metrics.ndrec logs.ndrec traces.ndrec meta.rec label.rec
    <out>/validation/            summary.tsv exclusions.ndrec missing.tsv
    <out>/reports/               report.tsv breakdown.tsv results.ndrec timing.tsv
    <out>/stats.tsv  <out>/audit.tsv  <out>/scalability.tsv
"""

from __future__ import annotations

import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .evaluation import (
    EvalCase,
    EvalReport,
    EmptyResultsError,
    ScalabilityPoint,
    dataset_stats,
    run_evaluation,
    scalability_run,
    write_scalability,
)
from .faultspace import (
    CATEGORIES,
    FaultSpaceError,
    FaultSpacePlan,
    FaultSpec,
    Registry,
    default_registry,
    make_spec,
    plan_campaign,
    validate_spec,
)
from .groundtruth import derive_label, read_label, resolved_service, write_label
from .oracle import OracleParams, audit_observability, classify_pattern, validate_case
from .rca import CaseInput, ExternalPlugin, get_algorithm
from .simengine import CaseProtocol, EngineParams, run_case
from .telemetry import FILES, META_FILE, CaseWindows, persist, read_bundle, read_meta
from .topology import Topology, TopologyError, load_topology
from .workload import WorkloadError, WorkloadProfile, profile_from_dict

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    topology: str = "chain3"
    seed: int = 0
    out: str = "campaign"
    workload: dict[str, Any] = field(default_factory=dict)
    protocol: dict[str, Any] = field(default_factory=dict)
    engine: dict[str, Any] = field(default_factory=dict)
    faults: dict[str, Any] = field(default_factory=dict)
    oracle: dict[str, Any] = field(default_factory=dict)
    algorithms: list[str] = field(default_factory=lambda: ["simple_rca", "random"])
    plugins: dict[str, list[str]] = field(default_factory=dict)
    evaluation: dict[str, Any] = field(default_factory=dict)
    labels: dict[str, Any] = field(default_factory=dict)

    # resolved views; each raises ConfigError on bad input
    def load_topology(self) -> Topology:
        try:
            return _topology(self.topology)
        except TopologyError as exc:
            raise ConfigError(f"topology: {exc}") from exc

    def profile(self) -> WorkloadProfile:
        try:
            return profile_from_dict(self.workload)
        except (WorkloadError, TypeError) as exc:
            raise ConfigError(f"workload: {exc}") from exc

    def case_protocol(self) -> CaseProtocol:
        try:
            return CaseProtocol(**self.protocol)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"protocol: {exc}") from exc

    def engine_params(self) -> EngineParams:
        try:
            return EngineParams(**self.engine)
        except TypeError as exc:
            raise ConfigError(f"engine: {exc}") from exc

    def oracle_params(self) -> OracleParams:
        try:
            return OracleParams(**self.oracle)
        except TypeError as exc:
            raise ConfigError(f"oracle: {exc}") from exc

    def registry(self) -> Registry:
        try:
            return default_registry().with_overrides(self.faults.get("registry"))
        except FaultSpaceError as exc:
            raise ConfigError(f"faults.registry: {exc}") from exc

    @property
    def edge_side(self) -> str:
        return self.labels.get("edge_side", "callee")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@lru_cache(maxsize=8)
def _topology(ref: str) -> Topology:
    return load_topology(Path(ref) if Path(ref).suffix in (".yaml", ".yml", ".json") else ref)


def load_config(source: str | Path | Mapping[str, Any] | None = None, **overrides) -> CampaignConfig:
    if source is None:
        doc: dict[str, Any] = {}
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        try:
            doc = yaml.safe_load(Path(source).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("campaign config must be a mapping")
    known = {f.name for f in fields(CampaignConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    cfg = CampaignConfig(**doc)
    # validate every section eagerly
    cfg.load_topology()
    cfg.profile()
    cfg.case_protocol()
    cfg.engine_params()
    cfg.oracle_params()
    cfg.registry()
    for name in cfg.algorithms:
        try:
            get_algorithm(name, cfg.plugins)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    sizes = cfg.faults.get("sizes", {})
    for cat in sizes:
        if cat not in CATEGORIES:
            raise ConfigError(f"faults.sizes: unknown category {cat!r}")
    if cfg.edge_side not in ("callee", "caller"):
        raise ConfigError("labels.edge_side must be callee or caller")
    return cfg


# -- planning --------------------------------------------------------------

@dataclass(frozen=True)
class PlannedCase:
    case_id: str
    seed: int
    fault: FaultSpec | None

    def to_dict(self) -> dict[str, Any]:
        return {"case_id": self.case_id, "seed": self.seed, "fault": self.fault.to_dict() if self.fault else None}


def case_seed(global_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1)[0]) & 0x7FFFFFFF


def read_exclusions(path: str | Path) -> set:
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.add(FaultSpec.from_line(line).key())
    return out


def plan(cfg: CampaignConfig) -> list[PlannedCase]:
    topo = cfg.load_topology()
    registry = cfg.registry()
    proto = cfg.case_protocol()
    f = cfg.faults
    window = tuple(f.get("window", proto.fault_window))
    exclusions = set()
    if f.get("exclusions"):
        try:
            exclusions = read_exclusions(f["exclusions"])
        except OSError as exc:
            raise ConfigError(f"faults.exclusions: {exc}") from exc
    specs: list[FaultSpec] = []
    sizes = {k: int(v) for k, v in f.get("sizes", {}).items()}
    if sizes:
        try:
            specs += plan_campaign(
                FaultSpacePlan(sizes, seed=int(f.get("seed", cfg.seed)), exclusions=exclusions,
                               window=window, types=f.get("types")),
                topo.graph, registry)
        except FaultSpaceError as exc:
            raise ConfigError(f"faults: {exc}") from exc
    for raw in f.get("specs", ()):
        raw = dict(raw)
        try:
            spec = make_spec(registry, raw.pop("fault_type"), raw.pop("target"),
                             tuple(raw.pop("window", window)), **raw.pop("params", {}))
            validate_spec(spec, topo.graph, registry)
        except (KeyError, FaultSpaceError) as exc:
            raise ConfigError(f"faults.specs: {exc}") from exc
        specs += [spec] * int(raw.pop("repeat", 1))
    cases = [PlannedCase(f"c{i:04d}", case_seed(cfg.seed, i), s) for i, s in enumerate(specs)]
    for j in range(int(f.get("controls", 0))):
        i = len(cases)
        cases.append(PlannedCase(f"c{i:04d}", case_seed(cfg.seed, i), None))
    return cases


# -- generate --------------------------------------------------------------

@dataclass
class StageResult:
    done: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 2 if self.failed else 0


def _case_complete(d: Path) -> bool:
    return all((d / n).is_file() for n in (*FILES.values(), META_FILE, "label.rec"))


def _generate_one(cfg: CampaignConfig, pc: PlannedCase, out: str) -> str:
    topo = cfg.load_topology()
    params = cfg.engine_params()
    bundle, meta = run_case(topo, cfg.profile(), cfg.case_protocol(), pc.fault, pc.seed, params, pc.case_id)
    cases = Path(out) / "cases"
    tmp = cases / f".tmp-{pc.case_id}"
    if tmp.exists():
        shutil.rmtree(tmp)
    persist(bundle, tmp, meta.to_dict())
    if pc.fault is not None:
        write_label(derive_label(pc.fault, topo.graph, pc.case_id, cfg.edge_side), tmp)
    else:
        (tmp / "label.rec").write_text("", encoding="utf-8")
    final = cases / pc.case_id
    if final.exists():
        shutil.rmtree(final)
    tmp.rename(final)
    return pc.case_id


def generate(cfg: CampaignConfig, jobs: int = 1, resume: bool = True) -> StageResult:
    out = Path(cfg.out)
    (out / "cases").mkdir(parents=True, exist_ok=True)
    cases = plan(cfg)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
    (out / "plan.ndrec").write_text("".join(json.dumps(c.to_dict(), separators=(",", ":")) + "\n" for c in cases),
                                    encoding="utf-8")
    res = StageResult()
    todo = []
    for pc in cases:
        if resume and _case_complete(out / "cases" / pc.case_id):
            res.skipped.append(pc.case_id)
        else:
            todo.append(pc)
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pc.case_id: pool.submit(_generate_one, cfg, pc, str(out)) for pc in todo}
            for cid, fut in futs.items():
                try:
                    res.done.append(fut.result())
                except Exception as exc:  # isolate per-case failures
                    log.error("case %s failed: %s", cid, exc)
                    res.failed[cid] = repr(exc)
    else:
        for pc in todo:
            try:
                res.done.append(_generate_one(cfg, pc, str(out)))
            except Exception as exc:
                log.error("case %s failed: %s", pc.case_id, exc)
                res.failed[pc.case_id] = repr(exc)
    if res.failed:
        (out / "failures.ndrec").write_text(
            "".join(json.dumps({"case_id": k, "error": v}) + "\n" for k, v in sorted(res.failed.items())),
            encoding="utf-8")
    return res


# -- validate --------------------------------------------------------------

def case_dirs(out: str | Path) -> list[Path]:
    root = Path(out) / "cases"
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))


def _fault_of(head: dict) -> FaultSpec | None:
    return FaultSpec.from_dict(head["fault"]) if head.get("fault") else None


def validate(cfg: CampaignConfig, out: str | Path | None = None) -> StageResult:
    out = Path(out or cfg.out)
    dirs = case_dirs(out)
    if not dirs:
        raise EmptyResultsError(f"no cases under {out}")
    topo = cfg.load_topology()
    oparams = cfg.oracle_params()
    res = StageResult()
    counts: dict[str, list[int]] = {}
    specs = []
    for d in dirs:
        if not _case_complete(d):
            res.failed[d.name] = "missing files"
            continue
        records = read_meta(d)
        head = records[0]
        bundle = read_bundle(d)
        verdict = validate_case(bundle, bundle.windows, oparams)
        lines = [head, verdict.to_dict()]
        spec = _fault_of(head)
        if spec is not None:
            injected = resolved_service(spec, topo.graph, cfg.edge_side)
            lines.append(classify_pattern(bundle, injected, spec.category, bundle.windows, oparams).to_dict())
            specs.append(spec)
        (d / META_FILE).write_text("".join(json.dumps(r, separators=(",", ":")) + "\n" for r in lines),
                                   encoding="utf-8")
        key = spec.fault_type if spec else "none"
        c = counts.setdefault(key, [0, 0])
        c[0 if verdict.label == "HasAnomaly" else 1] += 1
        res.done.append(d.name)
    vdir = out / "validation"
    vdir.mkdir(exist_ok=True)
    rows = ["fault_type\tHasAnomaly\tNoAnomaly"] + [f"{k}\t{v[0]}\t{v[1]}" for k, v in sorted(counts.items())]
    (vdir / "summary.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (vdir / "exclusions.ndrec").write_text("".join(s.to_line() + "\n" for s in specs), encoding="utf-8")
    (vdir / "missing.tsv").write_text("case_id\treason\n" + "".join(f"{k}\t{v}\n" for k, v in sorted(res.failed.items())),
                                      encoding="utf-8")
    return res


def verdict_of(case_dir: Path) -> dict | None:
    for r in read_meta(case_dir):
        if r.get("record") == "verdict":
            return r
    return None


# -- evaluate --------------------------------------------------------------

def evaluate(cfg: CampaignConfig, out: str | Path | None = None, algorithms: Sequence[str] | None = None) -> EvalReport:
    out = Path(out or cfg.out)
    topo = cfg.load_topology()
    names = list(algorithms or cfg.algorithms)
    algos = []
    for n in names:
        try:
            algos.append(get_algorithm(n, cfg.plugins))
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    cases = []
    for d in case_dirs(out):
        if not _case_complete(d):
            continue
        v = verdict_of(d)
        head = read_meta(d)[0]
        spec = _fault_of(head)
        if v is None or spec is None:
            continue
        label = read_label(d)
        cases.append(EvalCase(d.name, spec.fault_type, label.service, CaseWindows(head["normal_s"], head["fault_s"]),
                              str(d), None, v["label"]))
    ev = cfg.evaluation
    try:
        report = run_evaluation(cases, algos, topo.graph, int(ev.get("split_seed", cfg.seed)),
                                float(ev.get("test_fraction", 0.2)))
    finally:
        for a in algos:
            if isinstance(a, ExternalPlugin):
                a.close()
    report.write(out / "reports")
    return report


# -- stats / audit / scalability --------------------------------------------

def stats(cfg: CampaignConfig, out: str | Path | None = None):
    out = Path(out or cfg.out)
    dirs = [d for d in case_dirs(out) if _case_complete(d)]
    if not dirs:
        raise EmptyResultsError(f"no cases under {out}")
    st = dataset_stats(dirs, cfg.load_topology().graph)
    st.write(out / "stats.tsv")
    return st


def audit(cfg: CampaignConfig, out: str | Path | None = None) -> list[dict]:
    out = Path(out or cfg.out)
    rows = []
    for d in case_dirs(out):
        if not _case_complete(d):
            continue
        spec = _fault_of(read_meta(d)[0])
        if spec is None:
            continue
        rep = audit_observability(read_bundle(d), spec.category, None, cfg.oracle_params())
        rows.append({"case_id": d.name, "fault_type": spec.fault_type, **rep.to_dict()})
    lines = ["case_id\tfault_type\tcomplete\tmodalities_ok\tpropagates\treason"] + [
        f"{r['case_id']}\t{r['fault_type']}\t{int(r['complete'])}\t{int(r['modalities_ok'])}\t{int(r['propagates'])}\t{r['reason']}"
        for r in rows
    ]
    (out / "audit.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


DEFAULT_VOLUMES = (2000, 6000, 10000, 14000, 18000)


def scalability(cfg: CampaignConfig, algorithm: str = "simple_rca", volumes: Sequence[int] = DEFAULT_VOLUMES,
                runs: int = 3, out: str | Path | None = None) -> list[ScalabilityPoint]:
    """Trace volume is reached by scaling a constant QPS over the protocol's windows."""
    topo = cfg.load_topology()
    proto = cfg.case_protocol()
    base = cfg.profile()
    params = cfg.engine_params()
    span = proto.normal_s + proto.fault_s

    def make_case(volume: int) -> CaseInput:
        prof = profile_from_dict({"qps": volume / span, "policy": base.policy})
        bundle, _ = run_case(topo, prof, proto, None, case_seed(cfg.seed, volume), params)
        return CaseInput(bundle, bundle.windows, topo.graph, None, f"volume-{volume}")

    algo = get_algorithm(algorithm, cfg.plugins)
    pts = scalability_run(algo, volumes, make_case, runs)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scalability(pts, out / "scalability.tsv")
    return pts
