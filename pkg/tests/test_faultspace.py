import pytest
from hypothesis import given, settings, strategies as st

from rcabench.faultspace import (
    CATEGORIES,
    FaultSpaceError,
    FaultSpacePlan,
    FaultSpec,
    InvalidSpecError,
    StratumExhaustedError,
    SubsetGrid,
    default_registry,
    make_spec,
    plan_campaign,
    read_specs,
    space_cardinality,
    spec_at,
    validate_spec,
    write_specs,
)
from rcabench.topology import load_topology

CHAIN3 = load_topology("chain3").graph
TT = load_topology("trainticket50").graph
REG = default_registry()


def test_registry_shape():
    assert len(REG) == 31
    cats = REG.by_category()
    assert set(cats) == set(CATEGORIES)
    assert all(cats[c] for c in CATEGORIES)


def test_chain3_cardinality_by_hand():
    # pods a-0 b-0 c-0, containers one each, edges A->B B->C, no db edges,
    # operations A/home B/b_op C/c_op C/op1, three monitored services
    card = space_cardinality(CHAIN3, REG)
    p, c, s, e, ops = 3, 3, 3, 2, 4
    assert card.per_type["PodKill"] == p
    assert card.per_type["PodFailure"] == p * 4 * 2
    assert card.per_type["ContainerKill"] == c
    assert card.per_type["CPUStress"] == p * 6 * 4
    assert card.per_type["NetworkDelay"] == e * 8 * 3 * 5 * 3
    assert card.per_type["HTTPRequestAbort"] == e * 6
    assert card.per_type["JVMLatency"] == ops * 8
    assert card.per_type["JVMMySQLLatency"] == 0
    assert card.per_type["DNSError"] == s * (2**3 - 1)
    assert card.per_type["TimeSkew"] == p * 6
    assert card.total == sum(card.per_type.values()) == sum(card.per_category.values()) == 2385


def test_trainticket_cardinality_is_exact_integer():
    card = space_cardinality(TT, REG)
    assert isinstance(card.total, int)
    n = len(TT.monitored_services)
    dns = 2 * n * (2**n - 1)
    assert card.per_category["DNS"] == dns
    assert card.total > 10**12
    assert card.total == 6473924464450493


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(REG.names()), st.data())
def test_spec_at_roundtrip_and_valid(name, data):
    ft = REG[name]
    card = ft.cardinality(CHAIN3)
    if card == 0:
        return
    i = data.draw(st.integers(0, card - 1))
    spec = spec_at(ft, CHAIN3, i, (240.0, 480.0))
    validate_spec(spec, CHAIN3, REG)
    assert FaultSpec.from_line(spec.to_line()) == spec
    with pytest.raises(IndexError):
        spec_at(ft, CHAIN3, card, (240.0, 480.0))


def test_spec_at_is_a_bijection_on_small_types():
    for name in ("CPUStress", "NetworkLoss", "DNSRandom"):
        ft = REG[name]
        keys = {spec_at(ft, CHAIN3, i, (0, 1)).key() for i in range(ft.cardinality(CHAIN3))}
        assert len(keys) == ft.cardinality(CHAIN3)


def test_subset_grid_encoding():
    g = SubsetGrid(("a", "b", "c"))
    assert g.size == 7
    assert [g.value_at(i) for i in range(7)] == [
        ("a",), ("b",), ("a", "b"), ("c",), ("a", "c"), ("b", "c"), ("a", "b", "c")]
    assert g.contains(("a", "c")) and not g.contains(("c", "a")) and not g.contains(())


def test_make_and_validate_spec_errors():
    w = (240, 480)
    with pytest.raises(InvalidSpecError):
        make_spec(REG, "CPUStress", "b-0", w, load=2)
    with pytest.raises(InvalidSpecError):
        make_spec(REG, "PodKill", "b-0", w, extra=1)
    with pytest.raises(FaultSpaceError):
        make_spec(REG, "NoSuchFault", "b-0", w)
    with pytest.raises(InvalidSpecError):
        validate_spec(make_spec(REG, "CPUStress", "b-0", w, load=3, workers=1), CHAIN3, REG)
    with pytest.raises(InvalidSpecError):
        validate_spec(make_spec(REG, "PodKill", "nope-0", w), CHAIN3, REG)
    with pytest.raises(InvalidSpecError):
        validate_spec(make_spec(REG, "PodKill", "b-0", (5, 5)), CHAIN3, REG)


def test_edge_targets_are_monitored_pairs():
    targets = REG["NetworkDelay"].targets(TT)
    monitored = set(TT.monitored_services)
    assert targets and len(set(targets)) == len(targets)
    for t in targets:
        a, b = t.split("->")
        assert a in monitored and b in monitored
    for t in REG["JVMMySQLLatency"].targets(TT):
        assert t.split("->")[1] == "mysql"


def test_plan_is_stratified_unique_and_seeded():
    plan = FaultSpacePlan({"Resource": 30, "Network": 30, "DNS": 5}, seed=3)
    a = plan_campaign(plan, CHAIN3, REG)
    b = plan_campaign(plan, CHAIN3, REG)
    assert a == b
    assert len({s.key() for s in a}) == len(a) == 65
    assert [s.category for s in a].count("Network") == 30
    c = plan_campaign(FaultSpacePlan({"Resource": 30, "Network": 30, "DNS": 5}, seed=4), CHAIN3, REG)
    assert c != a


def test_plan_respects_exclusions_and_exhaustion():
    dns_total = space_cardinality(CHAIN3, REG).per_category["DNS"]
    first = plan_campaign(FaultSpacePlan({"DNS": dns_total - 2}, seed=0), CHAIN3, REG)
    rest = plan_campaign(FaultSpacePlan({"DNS": 2}, seed=1, exclusions={s.key() for s in first}), CHAIN3, REG)
    assert not {s.key() for s in rest} & {s.key() for s in first}
    with pytest.raises(StratumExhaustedError):
        plan_campaign(FaultSpacePlan({"DNS": 3}, exclusions={s.key() for s in first}), CHAIN3, REG)


def test_rejection_sampling_on_large_strata():
    specs = plan_campaign(FaultSpacePlan({"Network": 40, "DNS": 40}, seed=9), TT, REG)
    assert len({s.key() for s in specs}) == 80
    for s in specs:
        validate_spec(s, TT, REG)


def test_plan_type_restriction_and_overrides():
    reg = REG.with_overrides({"CPUStress": {"load": [2, 4]}})
    assert reg["CPUStress"].cardinality(CHAIN3) == 3 * 2 * 4
    specs = plan_campaign(FaultSpacePlan({"Resource": 5}, types=["CPUStress"]), CHAIN3, reg)
    assert {s.fault_type for s in specs} == {"CPUStress"}
    assert {s.param_dict["load"] for s in specs} <= {2, 4}
    with pytest.raises(FaultSpaceError):
        REG.with_overrides({"CPUStress": {"bogus": [1]}})


def test_spec_file_roundtrip(tmp_path):
    specs = plan_campaign(FaultSpacePlan({c: 2 for c in CATEGORIES}, seed=1), CHAIN3, REG)
    write_specs(specs, tmp_path / "s.ndrec")
    assert read_specs(tmp_path / "s.ndrec") == specs

