import json
import subprocess
import sys

import pytest
import yaml

from rcabench import campaign, cli
from rcabench.campaign import ConfigError, load_config, plan

SMALL = {
    "topology": "chain3",
    "seed": 2,
    "workload": {"qps": 5},
    "protocol": {"warmup_s": 10, "normal_s": 40, "fault_s": 40},
    "faults": {
        "sizes": {"Resource": 1, "HTTP": 1},
        "specs": [{"fault_type": "HTTPRequestAbort", "target": "A->B", "params": {"probability": 1.0}}],
        "controls": 1,
    },
    "algorithms": ["simple_rca", "random"],
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def test_plan_is_deterministic_with_controls():
    cfg = load_config(SMALL)
    a, b = plan(cfg), plan(cfg)
    assert a == b and len(a) == 4
    assert [c.case_id for c in a] == ["c0000", "c0001", "c0002", "c0003"]
    assert a[2].fault.fault_type == "HTTPRequestAbort" and a[3].fault is None
    assert len({c.seed for c in a}) == 4


@pytest.mark.parametrize("bad", [
    {"nonsense": 1},
    {"topology": "no-such-topology"},
    {"workload": {"qps": "lots"}},
    {"protocol": {"normal_s": -1}},
    {"algorithms": ["magic"]},
    {"faults": {"sizes": {"Weather": 3}}},
    {"labels": {"edge_side": "middle"}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        load_config({**SMALL, **bad})


def test_full_pipeline(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["generate", "--config", str(config), "--out", str(out)]) == 0
    cases = sorted(p.name for p in (out / "cases").iterdir())
    assert cases == ["c0000", "c0001", "c0002", "c0003"]
    # later stages fall back to the stored config
    assert cli.main(["validate", "--out", str(out)]) == 0
    summary = (out / "validation" / "summary.tsv").read_text().splitlines()
    assert summary[0] == "fault_type\tHasAnomaly\tNoAnomaly"
    assert "HTTPRequestAbort\t1\t0" in summary
    assert len((out / "validation" / "exclusions.ndrec").read_text().splitlines()) == 3
    meta = [json.loads(x) for x in (out / "cases" / "c0002" / "meta.rec").read_text().splitlines()]
    assert [m["record"] for m in meta] == ["case", "verdict", "pattern"]
    assert cli.main(["evaluate", "--out", str(out)]) == 0
    report = (out / "reports" / "report.tsv").read_text().splitlines()
    assert report[0].startswith("algorithm\tn\ttop1") and len(report) == 3
    assert cli.main(["stats", "--out", str(out)]) == 0
    assert "coverage" in (out / "stats.tsv").read_text()
    assert cli.main(["audit", "--out", str(out)]) == 0
    assert len((out / "audit.tsv").read_text().splitlines()) == 4
    assert cli.main(["scalability", "--out", str(out), "--volumes", "100,200", "--runs", "3"]) == 0
    assert len((out / "scalability.tsv").read_text().splitlines()) == 3
    capsys.readouterr()


def test_resume_skips_complete_cases(config, tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(["generate", "--config", str(config), "--out", str(out)])
    before = (out / "cases" / "c0001" / "traces.ndrec").stat().st_mtime_ns
    (out / "cases" / "c0002" / "label.rec").unlink()
    capsys.readouterr()
    assert cli.main(["generate", "--config", str(config), "--out", str(out)]) == 0
    assert "generated 1, skipped 3" in capsys.readouterr().out
    assert (out / "cases" / "c0001" / "traces.ndrec").stat().st_mtime_ns == before
    assert (out / "cases" / "c0002" / "label.rec").exists()


def test_partial_failure_exit_code(config, tmp_path, monkeypatch):
    real = campaign._generate_one

    def flaky(cfg, pc, out):
        if pc.case_id == "c0001":
            raise RuntimeError("simulated crash")
        return real(cfg, pc, out)

    monkeypatch.setattr(campaign, "_generate_one", flaky)
    out = tmp_path / "run"
    assert cli.main(["generate", "--config", str(config), "--out", str(out)]) == 2
    failures = [json.loads(x) for x in (out / "failures.ndrec").read_text().splitlines()]
    assert [f["case_id"] for f in failures] == ["c0001"]
    assert not (out / "cases" / "c0001").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({**SMALL, "algorithms": ["magic"]}))
    assert cli.main(["generate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "config error" in capsys.readouterr().err


def test_empty_evaluation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({**SMALL, "faults": {"controls": 1}}))
    out = tmp_path / "run"
    assert cli.main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["validate", "--out", str(out)]) == 0
    assert cli.main(["evaluate", "--out", str(out)]) == 3
    assert cli.main(["validate", "--out", str(tmp_path / "nothing"), "--config", str(cfg)]) == 3
    capsys.readouterr()


def test_parallel_generation_matches_serial(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["generate", "--config", str(config), "--out", str(a)]) == 0
    assert cli.main(["generate", "--config", str(config), "--out", str(b), "--jobs", "2"]) == 0
    for case in ("c0000", "c0003"):
        for name in ("traces.ndrec", "metrics.ndrec", "meta.rec", "label.rec"):
            assert (a / "cases" / case / name).read_bytes() == (b / "cases" / case / name).read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rcabench", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate" in res.stdout


def test_seed_override_changes_plan():
    assert plan(load_config(SMALL, seed=99))[0].seed != plan(load_config(SMALL))[0].seed
