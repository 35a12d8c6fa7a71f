"""Desk-scale acceptance runs.

Each test prints one ``criterion k: PASS|FAIL ...`` line to the terminal
(pytest capture is bypassed) and asserts the criterion at its stated
tolerance. Seeds are disjoint from the calibration seeds in ``constants``.
"""

import math

import numpy as np
import pytest
from scipy import linalg, stats

from conftest import spectra_1000
from rmtlab import bounds_lab, constants, dynamics, labels, locallaw
from rmtlab import resolvent as rv
from rmtlab import spectral_stats as ss
from rmtlab.ensemble import EntryLaw, entry_draws, ks_to_semicircle, make_profile, sample_goe, sample_matrix
from rmtlab.harness import DEFAULT_PARAMS

pytestmark = pytest.mark.slow

T26 = EntryLaw("student_t", 2.6)


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
        return ok
    return emit


def _heavy(n, seed, eps=0.5, law=T26):
    return sample_matrix(make_profile(n, "flat", eps=eps), law, seed)


_EIGS_2000 = {}


def _eigs_2000(kind, seed):
    key = (kind, seed)
    if key not in _EIGS_2000:
        smp = sample_goe(2000, seed) if kind == "goe" else _heavy(2000, seed)
        _EIGS_2000[key] = linalg.eigvalsh(smp.entries, check_finite=False)
    return _EIGS_2000[key]


def test_criterion_01_exact_identities(verdict):
    rng = np.random.default_rng(2024)
    worst = {}
    bound_ok = True
    for n in (10, 50, 200):
        for inst in range(50):
            smp = sample_goe(n, 40_000 + inst) if inst % 2 else _heavy(n, 40_000 + inst)
            z = complex(rng.uniform(-2.5, 2.5), 10 ** rng.uniform(-2, 0))
            i = int(rng.integers(n))
            fr = rv.resolvent(smp, z)
            t = rv.schur_terms(smp, i, z)
            res = {
                "ward": fr.ward_error(),
                "schur": rv.schur_complement_residual(smp, z, i),
                "expansion": rv.expansion_residual(smp, z, i),
                "minor": rv.minor_identity_residual(smp, z, i),
                "resolvent": rv.shift_identity_residual(smp, z, z + 0.1j),
                "decomposition": t.decomposition_residual,
                "self_consistent": t.self_consistent_residual,
            }
            for k, v in res.items():
                worst[k] = max(worst.get(k, 0.0), v)
            bound_ok &= fr.bound_ok()
    ok = max(worst.values()) < 1e-8 and bound_ok
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    assert verdict(1, ok, f"{detail} bound_ok={bound_ok}")


def test_criterion_02_continuity(verdict):
    rng = np.random.default_rng(7)
    n, bad, worst = 200, 0, -math.inf
    for k in range(100):
        smp = sample_goe(n, 41_000 + k) if k % 2 else _heavy(n, 41_000 + k)
        E = rng.uniform(-2.5, 2.5)
        eta = 10 ** rng.uniform(-3, 0)
        etap = eta * rng.uniform(0.0, 3.0)
        cc = bounds_lab.check_continuity(smp, E, eta, etap)
        bad += cc.violations + cc.ratio_violations
        worst = max(worst, cc.max_violation)
    assert verdict(2, bad == 0, f"violations={bad} over 100 triples, max(lhs - rhs)={worst:.2e}")


def test_criterion_03_global_semicircle(verdict):
    counts = {}
    for kind in ("goe", "t26"):
        ks = [ks_to_semicircle(_eigs_2000(kind, s)) for s in range(20)]
        counts[kind] = (sum(d < 0.05 for d in ks), max(ks))
    ok = all(c >= 19 for c, _ in counts.values())
    detail = " ".join(f"{k}: {c}/20 below 0.05 (max {m:.4f})" for k, (c, m) in counts.items())
    assert verdict(3, ok, detail)


def test_criterion_04_local_law_envelope(verdict):
    n = 2000
    grid = locallaw.build_grid(n, 0.5, 7, "explicit", 20.0 / n, 5.0)
    cov = []
    for s in range(20):
        sr = rv.SpectralResolvent(_eigs_2000("t26", s), np.empty((0, 0)))
        rep = locallaw.verify_local_law(sr, grid, constants.LOCAL_LAW, spectral=sr,
                                        eps=0.5, diagonal=False)
        cov.append(rep.coverage)
    good = sum(c >= 0.99 for c in cov)
    assert verdict(4, good >= 18, f"{good}/20 seeds with coverage >= 0.99 (min coverage {min(cov):.4f}, "
                                  f"{len(grid)} grid points, constants {constants.LOCAL_LAW.to_dict()})")


def test_criterion_05_entrywise_split(verdict):
    n, eps = 2000, 1.0
    freq = labels.admissibility_frequency(make_profile(n, "flat", eps=eps), EntryLaw("student_t", 3.2), 100,
                                          42_000, eps=eps, r_min=4)
    cap = freq["deviant_cap"]
    small = sum(d < cap for d in freq["deviant_sizes"])
    bounded, worst = 0, 0.0
    for s in range(20):
        g = rv.SpectralResolvent.of(_heavy(n, 43_000 + s)).full(constants.ENTRY_Z)
        m = float(np.abs(g).max())
        worst = max(worst, m)
        bounded += m < constants.ENTRY_BOUND
    ok = small >= 95 and bounded >= 18
    assert verdict(5, ok, f"|D| < {cap:.0f} in {small}/100 labels (t(3.2), eps=1, max |D| "
                          f"{max(freq['deviant_sizes'])}, admissible {freq['rates']['admissible']['count']}/100); "
                          f"max|G| < {constants.ENTRY_BOUND} in {bounded}/20 (t(2.6), eps=0.5, worst {worst:.2f})")


def test_criterion_06_delocalization(verdict):
    n = 1000
    below = {}
    edge_wins = 0
    for kind in ("goe", "t26"):
        below[kind] = 0
        for s in range(20):
            smp = sample_goe(n, 44_000 + s) if kind == "goe" else _heavy(n, 44_000 + s)
            d = locallaw.verify_delocalization(smp, constants.DELOC_KAPPA, constants.DELOC_XI, constants.DELOC_C)
            below[kind] += d["passed"]
            if kind == "t26":
                edge_wins += d["edge_top"] > d["bulk_max"]
    ok = all(b >= 19 for b in below.values()) and edge_wins >= 16
    assert verdict(6, ok, f"bulk below C={constants.DELOC_C}: goe {below['goe']}/20, t(2.6) {below['t26']}/20; "
                          f"edge > bulk in {edge_wins}/20 heavy-tailed seeds")


def test_criterion_07_gap_universality(verdict):
    a = [ss.SpectrumSummary(r, seed=i) for i, r in enumerate(spectra_1000("t26")[:200])]
    b = [ss.SpectrumSummary(r, seed=i) for i, r in enumerate(spectra_1000("goe")[:200])]
    v = ss.compare_ensembles(a, b, config=ss.CompareConfig("gap_ks", unfolding="ensemble", bootstrap=200))
    sc = ss.compare_ensembles(a, b, config=ss.CompareConfig("gap_ks", unfolding="semicircle", bootstrap=0))
    d = v.details
    ok = d["ks_distance"] < 0.05
    assert verdict(7, ok, f"KS={d['ks_distance']:.4f} (bootstrap 95% upper {d['ci_high']:.4f}, "
                          f"{d['gaps_A']} vs {d['gaps_B']} gaps, ensemble unfolding); "
                          f"semicircle unfolding KS={sc.magnitude:.4f}")


def test_criterion_08_correlation_universality(verdict):
    v = ss.compare_ensembles([ss.SpectrumSummary(r) for r in spectra_1000("t26")],
                             [ss.SpectrumSummary(r) for r in spectra_1000("goe")],
                             config=ss.CompareConfig("correlation_diff"))
    d = v.details
    ok = d["standard_errors"] < 3.0
    assert verdict(8, ok, f"|A - B| = {d['difference']:.4f} = {d['standard_errors']:.2f} pooled SE "
                          f"(t(2.6) ratio {d['A']['density_ratio']:.4f}, GOE ratio {d['B']['density_ratio']:.4f}, "
                          f"500 replicas each)")


def test_criterion_09_flow_equivalence(verdict):
    n = 500
    prof = make_profile(n, "flat", eps=0.5)
    seeds = np.arange(100_000) + 45_000
    mom = dynamics.second_moment_check(prof, EntryLaw("student_t", 5.0), (0.01, 0.1, 1.0), seeds)
    mom_ok = all(abs(m.z) < 3.0 for m in mom)
    diag = dynamics.second_moment_check(prof, T26, (0.01, 0.1, 1.0), seeds)
    t = n ** (DEFAULT_PARAMS["flow_equivalence"]["delta"] - 1.0)
    ou = {k: [] for k in dynamics.FUNCTIONALS}
    sp = {k: [] for k in dynamics.FUNCTIONALS}
    for s in range(200):
        fa, fb = dynamics.flow_pair(prof, T26, t, 46_000 + s)
        for k in dynamics.FUNCTIONALS:
            ou[k].append(fa[k])
            sp[k].append(fb[k])
    law = dynamics.equality_in_law(ou, sp, 0.01)
    ok = mom_ok and law["passed"]
    pv = ", ".join(f"{k} p={law[k]['p_value']:.3f}" for k in dynamics.FUNCTIONALS)
    assert verdict(9, ok, f"t(5) moment |z| max {max(abs(m.z) for m in mom):.2f}; "
                          f"t(2.6) moment |z| max {max(abs(m.z) for m in diag):.2f} (diagnostic only); "
                          f"t={t:.4f}: {pv}")


def test_criterion_10_tail_bounds(verdict):
    p = DEFAULT_PARAMS["deviation"]
    reps = bounds_lab.deviation_sweep(p["ns"], p["xis"], p["nu"], T26, 0.5, 47_000, p["replicas"], p["forms"])
    ok = all(r.passed for r in reps)
    nonzero = sum(1 for r in reps for row in r.rows if row["empirical_tail"] > 0)
    cells = sum(len(r.rows) for r in reps)
    assert verdict(10, ok, f"{cells} cells (N in {p['ns']}, xi in {p['xis']}, {len(p['forms'])} forms), "
                           f"exceeded {[(r.form, r.n) for r in reps if not r.passed]}, "
                           f"cells with a nonzero empirical tail: {nonzero}")


def test_criterion_11_resampling_consistency(verdict):
    n, eps = 1000, 0.5
    prof = make_profile(n, "detuned_periodic", eps=eps, amplitude=0.3)
    positions = [(0, 0), (0, 1), (3, 500), (17, 999), (998, 999)]
    seeds = np.arange(100_000)
    pvals = []
    for i, j in positions:
        two = labels.two_stage_entry_draws(T26, prof.s[i, j], n, eps, seeds, i, j)
        direct = entry_draws(T26, prof.s[i, j], seeds + 1_000_000, i, j)
        pvals.append(stats.ks_2samp(two, direct).pvalue)
    ok = min(pvals) >= 0.01
    assert verdict(11, ok, "KS p-values " + ", ".join(f"{p:.3f}" for p in pvals))
