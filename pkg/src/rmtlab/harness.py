"""Experiment configuration, orchestration and persistence.

A run is a pure function of its config: seed-level tasks execute on a
bounded process pool (``RMT_WORKERS``, default 1), results are merged in
seed order, and every artifact is listed with its SHA-256 in
``manifest.json``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import jsonschema
import numpy as np
import yaml

from . import __version__, _canon, bounds_lab, constants, dynamics, labels, locallaw, spectral_stats
from .ensemble import EntryLaw, make_profile, sample_goe, sample_matrix
from .errors import ConfigError

KINDS = ("locallaw", "entrywise", "delocalization", "ladder", "gaps", "correlation", "flow_equivalence",
         "deviation", "continuity", "admissibility")
WORKERS_ENV = "RMT_WORKERS"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3

_LAW_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "rademacher", "student_t", "sym_pareto"]},
        "tail_index": {"type": ["number", "null"], "exclusiveMinimum": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "name": {"type": "string"},
        "ensemble": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["goe", "wigner"]},
                "n": {"type": "integer", "minimum": 2},
                "law": _LAW_SCHEMA,
                "profile": {"enum": ["flat", "sinkhorn_periodic", "detuned_periodic"]},
                "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "c1": {"type": "number", "exclusiveMinimum": 0},
                "C1": {"type": "number", "exclusiveMinimum": 0},
                "C2": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number"},
            },
            "required": ["n"],
            "additionalProperties": False,
        },
        "seeds": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                {"type": "object",
                 "properties": {"start": {"type": "integer", "minimum": 0},
                                "count": {"type": "integer", "minimum": 1}},
                 "required": ["count"], "additionalProperties": False},
            ]
        },
        "params": {"type": "object"},
        "output": {"type": "string"},
    },
    "required": ["kind", "ensemble", "seeds"],
    "additionalProperties": False,
}

# Per-kind parameter defaults; unknown keys are rejected.
DEFAULT_PARAMS = {
    "locallaw": {"kappa": 0.5, "energy_count": 7, "eta_min_mode": "explicit", "eta_min": None,
                 "eta_max": 5.0, "coverage_required": 0.99, "seed_fraction": 0.9, "diagonal": False},
    "entrywise": {"z_real": [0.0], "z_imag": [0.05], "bound": constants.ENTRY_BOUND, "seed_fraction": 0.9},
    "delocalization": {"kappa": constants.DELOC_KAPPA, "xi": constants.DELOC_XI, "C": constants.DELOC_C,
                       "seed_fraction": 0.95},
    "ladder": {"kappa": 0.5, "energy": 0.0, "eta_min": None, "C": constants.LADDER_C, "xi": constants.LADDER_XI},
    "gaps": {"reference": "goe", "reference_seed_offset": 1_000_000, "kappa": 0.25, "tolerance": 0.05,
             "confidence": 0.95, "bootstrap": 200, "unfolding": "ensemble", "bins": 80},
    "correlation": {"reference": "goe", "reference_seed_offset": 1_000_000, "kappa": 0.25, "k": 1, "E": 0.0,
                    "radius": 2.0, "tolerance": 3.0},
    "flow_equivalence": {"t": None, "delta": 0.5, "alpha": 0.01, "moment_times": [0.01, 0.1, 1.0],
                         "moment_law": {"kind": "student_t", "tail_index": 5.0}, "moment_draws": 100_000},
    "deviation": {"ns": [500, 1000, 2000], "xis": [2.0, 3.0], "forms": list(bounds_lab.FORMS),
                  "nu": constants.NU, "replicas": 100_000},
    "continuity": {"E": 0.0, "eta": 0.01, "eta_prime": 0.002},
    "admissibility": {"r_min": 4, "required_rate": 0.95},
}


# --------------------------------------------------------------------------
# config


def _expand_seeds(seeds) -> list:
    if isinstance(seeds, dict):
        start = int(seeds.get("start", 0))
        return list(range(start, start + int(seeds["count"])))
    return [int(s) for s in seeds]


@dataclass
class ExperimentConfig:
    kind: str
    ensemble: dict
    seeds: list
    params: dict = field(default_factory=dict)
    output: Optional[str] = None
    name: str = ""

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.path))
        field_errors = [("/".join(str(p) for p in e.path) or "<root>", e.message) for e in errors]
        if not field_errors:
            kind = raw["kind"]
            unknown = sorted(set(raw.get("params", {})) - set(DEFAULT_PARAMS[kind]))
            field_errors += [(f"params/{k}", f"unknown parameter for kind {kind!r}") for k in unknown]
            ens = raw["ensemble"]
            if ens.get("kind", "wigner") == "wigner" and "law" not in ens:
                field_errors.append(("ensemble/law", "wigner ensembles need an entry law"))
        if field_errors:
            raise ConfigError("invalid experiment config: " + "; ".join(f"{p}: {m}" for p, m in field_errors),
                              field_errors)
        ens = {"kind": "wigner", "profile": "flat", "eps": 0.5, "c1": 0.5, "C1": 2.0, "C2": 8.0,
               "amplitude": 0.0, "law": None}
        ens.update(copy.deepcopy(raw["ensemble"]))
        if ens["kind"] == "goe":
            ens["law"] = {"kind": "gaussian", "tail_index": None}
            ens["profile"] = "flat"
        else:
            ens["law"] = {"kind": ens["law"]["kind"], "tail_index": ens["law"].get("tail_index")}
        params = copy.deepcopy(DEFAULT_PARAMS[raw["kind"]])
        params.update(copy.deepcopy(raw.get("params", {})))
        return cls(raw["kind"], ens, _expand_seeds(raw["seeds"]), params, raw.get("output"), raw.get("name", ""))

    def canonical(self) -> dict:
        """Everything that determines the numbers; the output location is excluded."""
        return {"kind": self.kind, "ensemble": self.ensemble, "seeds": list(self.seeds), "params": self.params}

    @property
    def hash(self) -> str:
        return _canon.content_hash(self.canonical())

    def to_dict(self) -> dict:
        d = self.canonical()
        d["name"] = self.name
        if self.output is not None:
            d["output"] = self.output
        return d

    # ensemble helpers ------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.ensemble["n"])

    @property
    def law(self) -> EntryLaw:
        law = self.ensemble["law"]
        return EntryLaw(law["kind"], law.get("tail_index"))

    def profile(self, n: Optional[int] = None):
        e = self.ensemble
        return make_profile(n or self.n, e["profile"], e["eps"], e["amplitude"], c1=e["c1"], C1=e["C1"], C2=e["C2"])

    def sample(self, seed: int, n: Optional[int] = None):
        if self.ensemble["kind"] == "goe":
            return sample_goe(n or self.n, seed)
        return sample_matrix(self.profile(n), self.law, seed)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", [("<file>", str(exc))]) from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}", [("<file>", str(exc))]) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", [("<root>", "not a mapping")])
    cfg = ExperimentConfig.from_dict(raw)
    if cfg.output is not None and not os.path.isabs(cfg.output):
        cfg.output = str((path.parent / cfg.output).resolve())
    return cfg


# --------------------------------------------------------------------------
# seed-level tasks (module level so they pickle)


def _task_locallaw(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    grid = locallaw.build_grid(cfg.n, p["kappa"], p["energy_count"], p["eta_min_mode"], p["eta_min"], p["eta_max"])
    rep = locallaw.verify_local_law(cfg.sample(seed), grid, constants.LOCAL_LAW, eps=cfg.ensemble["eps"],
                                    coverage_required=p["coverage_required"], diagonal=p["diagonal"])
    rows = [{"seed": seed, **r} for r in rep.rows]
    return {"rows": rows, "summary": {"seed": seed, "coverage": rep.coverage, "passed": rep.passed,
                                      "max_abs_mN_minus_msc": rep.summary()["max_abs_mN_minus_msc"]}}


def _task_entrywise(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    smp = cfg.sample(seed)
    lab = labels.label_of(smp, cfg.ensemble["eps"])
    z = np.asarray(p["z_real"], dtype=float) + 1j * np.asarray(p["z_imag"], dtype=float)
    res = locallaw.verify_entrywise(smp, lab, z, bound_G=p["bound"])
    rows = [{"seed": seed, "deviant_count": res["deviant_count"], "deviant_cap": res["deviant_cap"], **r}
            for r in res["points"]]
    ok = all(r["bounded"] for r in res["points"])
    return {"rows": rows, "summary": {"seed": seed, "bounded": ok, "deviant_ok": res["deviant_ok"],
                                      "passed": ok and res["deviant_ok"]}}


def _task_delocalization(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    res = locallaw.verify_delocalization(cfg.sample(seed), p["kappa"], p["xi"], p["C"])
    row = {"seed": seed, **res, "edge_exceeds_bulk": bool(max(res["edge_top"], res["edge_bottom"]) > res["bulk_max"])}
    return {"rows": [row], "summary": {"seed": seed, "passed": res["passed"]}}


def _task_ladder(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    smp = cfg.sample(seed)
    lab = labels.label_of(smp, cfg.ensemble["eps"])
    grid = locallaw.build_grid(cfg.n, p["kappa"], 1, "explicit", p["eta_min"])
    res = locallaw.multiscale_ladder_diagnostic(smp, lab, grid, p["C"], p["xi"], energy=p["energy"])
    rows = [{"seed": seed, **r} for r in res["rows"]]
    return {"rows": rows, "summary": {"seed": seed, "all_covered": res["all_covered"],
                                      "continuity_violations": res["continuity_violations"],
                                      "passed": res["continuity_violations"] == 0}}


def _task_continuity(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    cc = bounds_lab.check_continuity(cfg.sample(seed), p["E"], p["eta"], p["eta_prime"])
    d = cc.to_dict()
    return {"rows": [{"seed": seed, **{k: v for k, v in d.items() if not isinstance(v, (list, dict))}}],
            "summary": {"seed": seed, "passed": cc.passed}, "json": {"seed": seed, **d}}


def _task_admissibility(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    prof = cfg.profile()
    lab = labels.sample_h_distributed_label(prof, cfg.law, seed, eps=cfg.ensemble["eps"], strict=False)
    cls = labels.classify(lab)
    verdict = labels.admissibility(lab, p["r_min"], cls)
    row = {"seed": seed, "deviant_count": int(cls.deviant.size),
           "deviant_cap": labels.deviant_cap(cfg.n, cfg.ensemble["eps"]),
           "largest_component": cls.largest_component, "b_count": lab.b_count, "verdict": verdict,
           "deviant_ok": bool(cls.deviant.size < labels.deviant_cap(cfg.n, cfg.ensemble["eps"]))}
    return {"rows": [row], "summary": {"seed": seed, "verdict": verdict, "passed": row["deviant_ok"]}}


def _reference(cfg: ExperimentConfig) -> ExperimentConfig:
    ref = cfg.params["reference"]
    ens = {"kind": "goe", "n": cfg.n} if ref == "goe" else {**ref, "n": cfg.n}
    off = int(cfg.params["reference_seed_offset"])
    return ExperimentConfig.from_dict({"kind": cfg.kind, "ensemble": ens, "seeds": [s + off for s in cfg.seeds]})


def _task_spectrum(cfg: ExperimentConfig, seed: int) -> dict:
    ref = _reference(cfg)
    off = int(cfg.params["reference_seed_offset"])
    a = spectral_stats.eigendecompose(cfg.sample(seed))
    b = spectral_stats.eigendecompose(ref.sample(seed + off))
    return {"spectra": (a.eigenvalues, b.eigenvalues), "summary": {"seed": seed, "passed": True}}


def _task_flow(cfg: ExperimentConfig, seed: int) -> dict:
    p = cfg.params
    t = p["t"] if p["t"] is not None else cfg.n ** (p["delta"] - 1.0)
    fa, fb = dynamics.flow_pair(cfg.profile(), cfg.law, t, seed)
    return {"rows": [{"seed": seed, "construction": "ou", **fa}, {"seed": seed, "construction": "split", **fb}],
            "summary": {"seed": seed, "passed": True}}


TASKS: dict = {
    "locallaw": _task_locallaw,
    "entrywise": _task_entrywise,
    "delocalization": _task_delocalization,
    "ladder": _task_ladder,
    "continuity": _task_continuity,
    "admissibility": _task_admissibility,
    "gaps": _task_spectrum,
    "correlation": _task_spectrum,
    "flow_equivalence": _task_flow,
}


def _run_task(args):
    cfg_dict, seed = args
    cfg = ExperimentConfig(**cfg_dict)
    try:
        return seed, "ok", TASKS[cfg.kind](cfg, seed), None
    except Exception as exc:  # recorded per task, the run continues
        return seed, "failed", None, f"{type(exc).__name__}: {exc}"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}",
                          [(WORKERS_ENV, "not an integer")]) from exc
    if w < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1", [(WORKERS_ENV, "must be >= 1")])
    return w


def _execute(cfg: ExperimentConfig, seeds: Sequence[int]) -> list:
    d = {"kind": cfg.kind, "ensemble": cfg.ensemble, "seeds": list(cfg.seeds), "params": cfg.params,
         "output": cfg.output, "name": cfg.name}
    jobs = [(d, s) for s in seeds]
    workers = min(worker_count(), max(len(jobs), 1))
    if workers == 1:
        results = [_run_task(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, jobs))
    return sorted(results, key=lambda r: seeds.index(r[0]))


# --------------------------------------------------------------------------
# writing


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict)):
        return _canon.canonical_json(v)
    return v


def rows_to_csv(rows: Sequence[dict], config_hash: str, columns: Optional[Sequence[str]] = None) -> str:
    cols = list(columns) if columns else []
    if not cols:
        for r in rows:
            cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in cols})
    return buf.getvalue()


class _Writer:
    def __init__(self, out: Path, config_hash: str):
        self.out = out
        self.hash = config_hash
        self.files: dict = {}

    def text(self, name: str, content: str, kind: str):
        path = self.out / name
        path.write_text(content, encoding="utf-8")
        self.files[name] = {"kind": kind, "sha256": hashlib.sha256(content.encode("utf-8")).hexdigest(),
                            "bytes": len(content.encode("utf-8"))}

    def csv(self, name: str, rows, columns=None):
        self.text(name, rows_to_csv(rows, self.hash, columns), "csv")

    def json(self, name: str, obj):
        self.text(name, _canon.dumps({"config_hash": self.hash, **obj}), "json")


# --------------------------------------------------------------------------
# aggregation per kind; each returns (passed, summary)


def _fraction(summaries, key="passed"):
    vals = [bool(s[key]) for s in summaries]
    return sum(vals) / len(vals) if vals else 0.0


def _agg_rows(cfg, w, results, name, columns=None):
    rows = [r for _, st, res, _ in results if st == "ok" for r in res["rows"]]
    w.csv(name, rows, columns)
    return [res["summary"] for _, st, res, _ in results if st == "ok"]


def _agg_locallaw(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "locallaw.csv", ["seed"] + list(locallaw.CSV_COLUMNS) + ["entry_scope"])
    frac = _fraction(sums)
    out = {"constants": constants.LOCAL_LAW.to_dict(), "seed_pass_fraction": frac, "per_seed": sums}
    return frac >= cfg.params["seed_fraction"], out


def _agg_entrywise(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "entrywise.csv")
    frac = _fraction(sums, "bounded")
    dev = _fraction(sums, "deviant_ok")
    out = {"bound": cfg.params["bound"], "bounded_fraction": frac, "deviant_ok_fraction": dev, "per_seed": sums}
    return frac >= cfg.params["seed_fraction"] and dev == 1.0, out


def _agg_delocalization(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "delocalization.csv")
    rows = [r for _, st, res, _ in results if st == "ok" for r in res["rows"]]
    frac = _fraction(sums)
    edge = float(np.mean([r["edge_exceeds_bulk"] for r in rows])) if rows else 0.0
    out = {"C": cfg.params["C"], "xi": cfg.params["xi"], "bulk_pass_fraction": frac, "edge_exceeds_bulk_fraction": edge}
    return frac >= cfg.params["seed_fraction"], out


def _agg_ladder(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "ladder.csv")
    return all(s["passed"] for s in sums), {"per_seed": sums}


def _agg_continuity(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "continuity.csv")
    w.json("continuity.json", {"checks": [res["json"] for _, st, res, _ in results if st == "ok"]})
    return all(s["passed"] for s in sums), {"per_seed": sums}


def _agg_admissibility(cfg, w, results):
    sums = _agg_rows(cfg, w, results, "admissibility.csv")
    n = len(sums)
    counts = {v: sum(1 for s in sums if s["verdict"] == v) for v in labels.VERDICTS}
    rates = {}
    for v, k in counts.items():
        lo, hi = labels._clopper_pearson(k, n)
        rates[v] = {"count": k, "rate": k / n, "ci_low": lo, "ci_high": hi}
    dev_rate = _fraction(sums)
    out = {"rates": rates, "deviant_ok_rate": dev_rate, "r": labels.connection_radius(cfg.n, cfg.params["r_min"])}
    return dev_rate >= cfg.params["required_rate"], out


def _spectra(results):
    a = [spectral_stats.SpectrumSummary(res["spectra"][0], seed) for seed, st, res, _ in results if st == "ok"]
    b = [spectral_stats.SpectrumSummary(res["spectra"][1], seed) for seed, st, res, _ in results if st == "ok"]
    return a, b


def _agg_gaps(cfg, w, results):
    p = cfg.params
    a, b = _spectra(results)
    vc = spectral_stats.CompareConfig("gap_ks", p["kappa"], p["tolerance"], p["confidence"], p["bootstrap"],
                                      seed=cfg.seeds[0], unfolding=p["unfolding"])
    v = spectral_stats.compare_ensembles(a, b, config=vc)
    ga = np.concatenate(spectral_stats.pooled_gaps(a, p["kappa"], p["unfolding"]))
    gb = np.concatenate(spectral_stats.pooled_gaps(b, p["kappa"], p["unfolding"]))
    w.text("gaps_A.csv", f"# config_hash={w.hash}\n" + spectral_stats.gap_histogram_csv(ga, p["bins"]), "csv")
    w.text("gaps_B.csv", f"# config_hash={w.hash}\n" + spectral_stats.gap_histogram_csv(gb, p["bins"]), "csv")
    w.json("verdict.json", v.to_dict())
    return v.passed and v.magnitude < p["tolerance"], {"ks_distance": v.magnitude, **v.details}


def _agg_correlation(cfg, w, results):
    p = cfg.params
    a, b = _spectra(results)
    F = {"family": "smooth_bump", "k": p["k"], "radius": p["radius"]}
    vc = spectral_stats.CompareConfig("correlation_diff", p["kappa"], p["tolerance"], seed=cfg.seeds[0],
                                      k=p["k"], E=p["E"], F=F)
    v = spectral_stats.compare_ensembles(a, b, config=vc)
    fn = spectral_stats.bump_from_dict(F)
    oa = spectral_stats.correlation_observable(a, p["k"], p["E"], fn, p["kappa"])
    ob = spectral_stats.correlation_observable(b, p["k"], p["E"], fn, p["kappa"])
    w.csv("observables.csv", [{"ensemble": lab, **o.to_dict()} for lab, o in (("A", oa), ("B", ob))])
    w.json("verdict.json", v.to_dict())
    return v.passed, {"difference": v.magnitude, "standard_errors": v.details["standard_errors"]}


def _agg_flow(cfg, w, results):
    p = cfg.params
    rows = [r for _, st, res, _ in results if st == "ok" for r in res["rows"]]
    w.csv("flow_functionals.csv", rows)
    ou = {k: [r[k] for r in rows if r["construction"] == "ou"] for k in dynamics.FUNCTIONALS}
    sp = {k: [r[k] for r in rows if r["construction"] == "split"] for k in dynamics.FUNCTIONALS}
    law_ks = dynamics.equality_in_law(ou, sp, p["alpha"])
    ml = p["moment_law"]
    mom = dynamics.second_moment_check(cfg.profile(), EntryLaw(ml["kind"], ml.get("tail_index")), p["moment_times"],
                                       np.arange(p["moment_draws"]) + cfg.seeds[0])
    mrows = [m.to_dict() for m in mom]
    w.csv("second_moments.csv", mrows)
    t = p["t"] if p["t"] is not None else cfg.n ** (p["delta"] - 1.0)
    out = {"t": t, "s": dynamics.divisible_s(cfg.profile().r, t), "equality_in_law": law_ks,
           "moments_passed": all(m["passed"] for m in mrows)}
    return law_ks["passed"] and out["moments_passed"], out


def _run_deviation(cfg, w):
    p = cfg.params
    reps = bounds_lab.deviation_sweep(p["ns"], p["xis"], p["nu"], cfg.law, cfg.ensemble["eps"], cfg.seeds[0],
                                      p["replicas"], p["forms"])
    w.csv("tails.csv", [row for r in reps for row in r.csv_rows()])
    w.json("tail_reports.json", {"reports": [r.to_dict() for r in reps]})
    passed = all(r.passed for r in reps)
    return passed, {"cells": len(reps), "exceeded": [(r.form, r.n, r.exceeded_xis) for r in reps if not r.passed],
                    "comparable_cells": sum(r.comparable_cells for r in reps)}


AGGREGATORS: dict = {
    "locallaw": _agg_locallaw,
    "entrywise": _agg_entrywise,
    "delocalization": _agg_delocalization,
    "ladder": _agg_ladder,
    "continuity": _agg_continuity,
    "admissibility": _agg_admissibility,
    "gaps": _agg_gaps,
    "correlation": _agg_correlation,
    "flow_equivalence": _agg_flow,
}


# --------------------------------------------------------------------------
# run / sweep / report


@dataclass
class RunManifest:
    config_hash: str
    version: str
    kind: str
    status: str
    passed: Optional[bool]
    tasks: list
    wall_clock: float
    files: dict
    summary: dict
    output: str

    @property
    def exit_code(self) -> int:
        if self.status == "failed":
            return EXIT_PARTIAL
        if self.status == "partial":
            return EXIT_PARTIAL
        return EXIT_PASS if self.passed else EXIT_FAIL

    def to_dict(self) -> dict:
        return {"schema": "rmtlab.manifest/1", "config_hash": self.config_hash, "version": self.version,
                "kind": self.kind, "status": self.status, "passed": self.passed, "tasks": self.tasks,
                "wall_clock_seconds": self.wall_clock, "files": self.files, "summary": self.summary}

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        if d.get("schema") != "rmtlab.manifest/1":
            raise ConfigError(f"{path} is not an rmtlab manifest", [("schema", "unexpected value")])
        return cls(d["config_hash"], d["version"], d["kind"], d["status"], d["passed"], d["tasks"],
                   d["wall_clock_seconds"], d["files"], d["summary"], str(path.parent))


def default_output(cfg: ExperimentConfig) -> str:
    return os.path.join("runs", f"{cfg.kind}-{cfg.hash[:12]}")


def run(config, output: Optional[str] = None) -> RunManifest:
    """Execute one experiment and write its artifacts plus ``manifest.json``."""
    cfg = config if isinstance(config, ExperimentConfig) else (
        ExperimentConfig.from_dict(config) if isinstance(config, dict) else load_config(config))
    out = Path(output or cfg.output or default_output(cfg))
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.iterdir():  # no orphans from earlier runs
        if stale.is_file():
            stale.unlink()
    t0 = time.perf_counter()
    w = _Writer(out, cfg.hash)
    w.json("config.json", {"config": cfg.canonical(), "name": cfg.name})
    tasks = []
    if cfg.kind == "deviation":
        try:
            passed, summary = _run_deviation(cfg, w)
            tasks.append({"seed": cfg.seeds[0], "status": "ok"})
        except Exception as exc:
            passed, summary = None, {}
            tasks.append({"seed": cfg.seeds[0], "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
    else:
        results = _execute(cfg, cfg.seeds)
        tasks = [{"seed": s, "status": st, **({"error": err} if err else {})} for s, st, _, err in results]
        ok = [r for r in results if r[1] == "ok"]
        if ok:
            try:
                passed, summary = AGGREGATORS[cfg.kind](cfg, w, results)
            except Exception as exc:
                passed, summary = None, {"aggregation_error": f"{type(exc).__name__}: {exc}"}
        else:
            passed, summary = None, {}
    n_failed = sum(1 for t in tasks if t["status"] != "ok")
    status = "ok" if n_failed == 0 and passed is not None else ("failed" if n_failed == len(tasks) else "partial")
    w.json("summary.json", {"passed": passed, "summary": summary})
    man = RunManifest(cfg.hash, __version__, cfg.kind, status, None if passed is None else bool(passed), tasks,
                      time.perf_counter() - t0, dict(sorted(w.files.items())), summary, str(out))
    (out / "manifest.json").write_text(_canon.dumps(man.to_dict()), encoding="utf-8")
    return man


def _set_axis(raw: dict, axis: str, value):
    """Set a numeric field by name: ``N``/``n``, ``eps``, other ensemble keys, or ``params.<key>``."""
    raw = copy.deepcopy(raw)
    key = "n" if axis in ("N", "n") else axis
    if key.startswith("params."):
        pk = key.split(".", 1)[1]
        params = raw.setdefault("params", {})
        if pk not in DEFAULT_PARAMS[raw["kind"]]:
            raise ConfigError(f"sweep axis {axis!r} not found", [("axis", "unknown parameter")])
        params[pk] = value
    elif key in SCHEMA["properties"]["ensemble"]["properties"]:
        if key in ("kind", "law", "profile"):
            raise ConfigError(f"sweep axis {axis!r} is not numeric", [("axis", "not numeric")])
        raw["ensemble"][key] = int(value) if key == "n" else float(value)
    elif key in DEFAULT_PARAMS[raw["kind"]]:
        raw.setdefault("params", {})[key] = value
    else:
        raise ConfigError(f"sweep axis {axis!r} not found", [("axis", "unknown field")])
    return raw


def sweep(config_path, axis: str, values: Sequence, output: Optional[str] = None) -> list:
    """One run per value; seeds are shared; writes a merged ``sweep_summary.csv``."""
    if not values:
        raise ConfigError("sweep needs at least one value", [("values", "empty")])
    path = Path(config_path)
    raw = json.loads(path.read_text()) if path.suffix == ".json" else yaml.safe_load(path.read_text())
    base = ExperimentConfig.from_dict(raw)
    root = Path(output or (base.output and str(path.parent / base.output)) or default_output(base))
    manifests = []
    rows = []
    for v in values:
        sub = ExperimentConfig.from_dict(_set_axis(raw, axis, v))
        man = run(sub, str(root / f"{axis}={v}"))
        manifests.append(man)
        flat = {k: val for k, val in man.summary.items() if isinstance(val, (int, float, str, bool)) or val is None}
        rows.append({"axis": axis, "value": v, "config_hash": man.config_hash, "status": man.status,
                     "passed": man.passed, **flat})
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep_summary.csv").write_text(rows_to_csv(rows, base.hash), encoding="utf-8")
    return manifests


def report(manifest_path) -> str:
    """Human-readable summary of a manifest; verifies file hashes."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    man = RunManifest.load(path)
    lines = [f"kind: {man.kind}", f"config_hash: {man.config_hash}", f"version: {man.version}",
             f"status: {man.status}", f"passed: {man.passed}", f"wall_clock_seconds: {man.wall_clock:.2f}",
             f"tasks: {sum(t['status'] == 'ok' for t in man.tasks)}/{len(man.tasks)} ok"]
    for t in man.tasks:
        if t["status"] != "ok":
            lines.append(f"  seed {t['seed']}: {t['status']} ({t.get('error', '')})")
    lines.append("files:")
    for name, meta in man.files.items():
        f = path.parent / name
        ok = f.exists() and hashlib.sha256(f.read_bytes()).hexdigest() == meta["sha256"]
        lines.append(f"  {name}  {meta['bytes']} bytes  {'ok' if ok else 'MODIFIED OR MISSING'}")
    lines.append("summary:")
    for k, v in man.summary.items():
        if isinstance(v, (int, float, str, bool)) or v is None:
            lines.append(f"  {k}: {v}")
    return "\n".join(lines)
