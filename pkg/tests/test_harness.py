import csv
import json

import pytest

from rmtlab import cli, harness, locallaw
from rmtlab.errors import ConfigError

SMALL = {
    "locallaw": {"energy_count": 3, "eta_min": 0.2, "eta_max": 1.0},
    "entrywise": {},
    "delocalization": {},
    "ladder": {"eta_min": 0.2},
    "gaps": {"bootstrap": 10, "tolerance": 0.3},
    "correlation": {},
    "flow_equivalence": {"moment_draws": 2000},
    "deviation": {"ns": [100], "xis": [2.0], "replicas": 500},
    "continuity": {},
    "admissibility": {},
}


def _cfg(kind, n=60, seeds=(0, 1, 2), **params):
    ens = {"kind": "wigner", "n": n, "law": {"kind": "student_t", "tail_index": 3.0}}
    return {"kind": kind, "ensemble": ens, "seeds": list(seeds), "params": {**SMALL[kind], **params}}


def _write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize("kind", harness.KINDS)
def test_each_kind_runs(kind, tmp_path):
    man = harness.run(_cfg(kind), str(tmp_path / kind))
    assert man.status == "ok", man.tasks
    assert man.passed in (True, False)
    assert man.exit_code in (harness.EXIT_PASS, harness.EXIT_FAIL)
    on_disk = {p.name for p in (tmp_path / kind).iterdir()}
    assert on_disk == set(man.files) | {"manifest.json"}


def test_determinism_and_workers(tmp_path, monkeypatch):
    raw = _cfg("entrywise")
    a = harness.run(raw, str(tmp_path / "a"))
    b = harness.run(raw, str(tmp_path / "b"))
    monkeypatch.setenv(harness.WORKERS_ENV, "2")
    c = harness.run(raw, str(tmp_path / "c"))
    for name in a.files:
        assert a.files[name]["sha256"] == b.files[name]["sha256"] == c.files[name]["sha256"], name


def test_bad_worker_env(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        harness.worker_count()
    monkeypatch.setenv(harness.WORKERS_ENV, "0")
    with pytest.raises(ConfigError):
        harness.worker_count()


def test_config_hash_ignores_output_and_name():
    a = harness.ExperimentConfig.from_dict({**_cfg("gaps"), "output": "x", "name": "one"})
    b = harness.ExperimentConfig.from_dict(_cfg("gaps"))
    assert a.hash == b.hash
    c = harness.ExperimentConfig.from_dict(_cfg("gaps", seeds=(0, 1)))
    assert c.hash != a.hash


def test_seed_range_form():
    raw = {**_cfg("continuity"), "seeds": {"start": 5, "count": 3}}
    assert harness.ExperimentConfig.from_dict(raw).seeds == [5, 6, 7]


def test_config_errors_exit_2(tmp_path, capsys):
    raw = _cfg("locallaw")
    raw["ensemble"]["n"] = 1
    raw["params"]["bogus"] = 1
    assert cli.main(["run", str(_write(tmp_path, raw))]) == harness.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "ensemble/n" in err
    raw["ensemble"]["n"] = 40
    assert cli.main(["run", str(_write(tmp_path, raw))]) == harness.EXIT_CONFIG
    assert "params/bogus" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.json")]) == harness.EXIT_CONFIG


def test_yaml_config_and_report(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text("kind: continuity\nensemble: {kind: goe, n: 30}\nseeds: [4]\n")
    out = tmp_path / "run"
    assert cli.main(["run", str(p), "-o", str(out)]) == harness.EXIT_PASS
    capsys.readouterr()
    assert cli.main(["report", str(out / "manifest.json")]) == 0
    text = capsys.readouterr().out
    assert "status: ok" in text and "MODIFIED" not in text
    (out / "continuity.csv").write_text("tampered")
    assert "MODIFIED OR MISSING" in harness.report(out)


def test_continuity_single_seed(tmp_path):
    raw = {"kind": "continuity", "ensemble": {"kind": "goe", "n": 50}, "seeds": [0]}
    man = harness.run(raw, str(tmp_path / "c"))
    assert man.passed and man.exit_code == 0
    data = [f for f, m in man.files.items() if m["kind"] == "csv"]
    assert len(data) == 1


def test_locallaw_csv_rows(tmp_path):
    man = harness.run(_cfg("locallaw", n=40, seeds=(0, 1)), str(tmp_path / "l"))
    rows = _read_csv(tmp_path / "l" / "locallaw.csv")
    grid = locallaw.build_grid(40, 0.5, 3, "explicit", 0.2, 1.0)
    assert man.status == "ok" and len(rows) == len(grid) * 2
    assert {r["seed"] for r in rows} == {"0", "1"}


def test_rerun_removes_orphans(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / "stale.csv").write_text("old")
    harness.run(_cfg("continuity"), str(out))
    assert not (out / "stale.csv").exists()


def test_sweep(tmp_path, capsys):
    p = _write(tmp_path, _cfg("continuity", n=20, seeds=(0,)))
    root = tmp_path / "sw"
    code = cli.main(["sweep", str(p), "--axis", "N", "--values", "20,30,40", "-o", str(root)])
    assert code == harness.EXIT_PASS
    rows = _read_csv(root / "sweep_summary.csv")
    assert [r["value"] for r in rows] == ["20", "30", "40"]
    assert len({r["config_hash"] for r in rows}) == 3
    assert (root / "N=30" / "manifest.json").exists()
    mans = harness.sweep(p, "params.eta", [0.02, 0.05], str(tmp_path / "sw2"))
    assert len(mans) == 2


def test_sweep_errors(tmp_path):
    p = _write(tmp_path, _cfg("continuity", n=20, seeds=(0,)))
    with pytest.raises(ConfigError):
        harness.sweep(p, "N", [], str(tmp_path / "x"))
    with pytest.raises(ConfigError):
        harness.sweep(p, "params.nothing", [1], str(tmp_path / "x"))
    with pytest.raises(ConfigError):
        harness.sweep(p, "profile", [1], str(tmp_path / "x"))
    assert cli.main(["sweep", str(p), "--axis", "bogus", "--values", "1"]) == harness.EXIT_CONFIG


def test_failed_task_gives_partial(tmp_path, monkeypatch):
    real = harness.TASKS["continuity"]

    def flaky(cfg, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(cfg, seed)

    monkeypatch.setitem(harness.TASKS, "continuity", flaky)
    man = harness.run(_cfg("continuity"), str(tmp_path / "p"))
    assert man.status == "partial" and man.exit_code == harness.EXIT_PARTIAL
    assert [t["status"] for t in man.tasks] == ["ok", "failed", "ok"]


def test_undersized_gap_ensemble_is_reported(tmp_path):
    man = harness.run(_cfg("gaps", tolerance=0.05), str(tmp_path / "g"))
    assert man.passed is None and man.status == "partial"
    assert "InsufficientReplicasError" in man.summary["aggregation_error"]
