import math

import numpy as np
import pytest
from scipy import linalg

from rmtlab import constants, locallaw as ll
from rmtlab.ensemble import EntryLaw, make_profile, sample_goe, sample_matrix
from rmtlab.errors import EmptyDomainError
from rmtlab.labels import ABLabel, label_of
from rmtlab.resolvent import SpectralResolvent, m_sc, resolvent

T26 = EntryLaw("student_t", 2.6)


def _eigs_only(sample):
    return SpectralResolvent(linalg.eigvalsh(sample.entries), np.empty((0, 0)))


def test_grid_energies_and_ladder():
    g = ll.build_grid(1000, 0.5, 7)
    assert g.energies.min() == pytest.approx(-1.5) and g.energies.max() == pytest.approx(1.5)
    assert ll.ladder_factor(1000) == pytest.approx(1.02096, abs=1e-5)
    assert np.all(np.diff(g.etas) < 0)
    assert g.etas[0] == 5.0 and g.etas[-1] > 20.0 / 1000
    assert len(g) == 7 * g.etas.size
    ratios = g.etas[:-1] / g.etas[1:]
    assert np.allclose(ratios, ll.ladder_factor(1000))


def test_phi_n_and_empty_domain():
    ln = math.log(1000)
    assert ll.phi_n(1000) == pytest.approx(ln ** (8 * math.log(ln)) / 1000, rel=1e-12)
    assert ll.phi_n(1000) > 5
    with pytest.raises(EmptyDomainError):
        ll.build_grid(1000, 0.5, 3, eta_min_mode="phi_N")
    with pytest.raises(ValueError):
        ll.build_grid(1000, 0.5, 3, eta_min_mode="explicit", eta_min=10.0)


def test_rung_count_matches_grid():
    n = 2000
    g = ll.build_grid(n, 0.5, 1)
    expected = math.ceil(math.log(5.0 * n / 20) / math.log(1 + math.log(n) ** -2))
    assert g.etas.size == expected == ll.rung_count(n, 20 / n)


def test_zero_matrix_fails_law():
    g = ll.build_grid(10, 0.5, 1, eta_min=0.5, factor=2.0)
    z = 1j
    err = abs(-1 / z - m_sc(z))
    assert err == pytest.approx(1 - (math.sqrt(5) - 1) / 2, abs=1e-12)
    rep = ll.verify_local_law(np.zeros((10, 10)), g, constants.LOCAL_LAW, eps=0.5)
    assert rep.passed is False


def test_goe_global_scale():
    smp = sample_goe(2000, 0)
    g = ll.build_grid(2000, 0.5, 1, eta_min=0.9, eta_max=1.0 + 1e-12, factor=1.5)
    rep = ll.verify_local_law(smp, g, spectral=_eigs_only(smp), diagonal=False)
    assert rep.rows[0]["abs_mN_minus_msc"] < 0.05
    assert rep.rows[0]["max_abs_G"] is None


def test_small_eta_error_exceeds_large_eta_error():
    n, hits = 2000, 0
    env = constants.LOCAL_LAW
    for s in range(20):
        sr = _eigs_only(sample_matrix(make_profile(n, "flat", eps=0.5), T26, s))
        lo, hi = 10.0 / n * 1j, 1.0j
        e_lo, e_hi = abs(sr.m_N(lo) - m_sc(lo)), abs(sr.m_N(hi) - m_sc(hi))
        assert e_lo <= env(n, 10.0 / n, 0.5) and e_hi <= env(n, 1.0, 0.5)
        hits += e_lo > e_hi
    assert hits >= 19


def test_report_columns_and_csv(heavy_sample):
    g = ll.build_grid(60, 0.5, 3, eta_min=0.5, factor=1.5)
    rep = ll.verify_local_law(heavy_sample, g, constants.LOCAL_LAW, label=label_of(heavy_sample),
                              entry_points=2)
    assert len(rep.rows) == len(g)
    header = rep.to_csv().splitlines()[0].split(",")
    assert header == list(ll.CSV_COLUMNS)
    scopes = [r["entry_scope"] for r in rep.rows]
    assert scopes.count("full") == 2
    assert rep.coverage is not None and 0 <= rep.coverage <= 1
    s = rep.summary()
    assert s["points"] == len(g) and s["constants"]["C"] == constants.LOCAL_LAW.C


def test_full_scope_entries_match_dense(heavy_sample):
    g = ll.build_grid(60, 0.5, 1, eta_min=0.5, eta_max=1.0, factor=1.9)
    rep = ll.verify_local_law(heavy_sample, g, entry_points=1)
    z = complex(rep.rows[0]["E"], rep.rows[0]["eta"])
    G = resolvent(heavy_sample, z).G
    assert rep.rows[0]["max_abs_G"] == pytest.approx(np.abs(G).max(), rel=1e-10)


def test_lipschitz_bound_on_random_pairs(heavy_sample):
    sr = SpectralResolvent.of(heavy_sample)
    rng = np.random.default_rng(1)
    for _ in range(50):
        z1 = complex(rng.uniform(-2, 2), rng.uniform(0.01, 2))
        z2 = complex(rng.uniform(-2, 2), rng.uniform(0.01, 2))
        assert abs(sr.m_N(z1) - sr.m_N(z2)) <= ll.lipschitz_bound(z1, z2) * (1 + 1e-12)


def test_grid_refinement_changes_supremum_within_lipschitz():
    smp = sample_goe(300, 2)
    sr = SpectralResolvent.of(smp)
    eta = 0.2
    coarse = np.linspace(-1.5, 1.5, 31)
    fine = np.linspace(-1.5, 1.5, 61)
    sup = lambda E: np.max(np.abs(sr.m_N(E + 1j * eta) - m_sc(E + 1j * eta)))  # noqa: E731
    step = coarse[1] - coarse[0]
    lip = step / eta ** 2 + np.max(np.abs(np.diff(m_sc(fine + 1j * eta)))) * 2
    assert abs(sup(fine) - sup(coarse)) <= lip


def test_median_error_increases_at_small_eta():
    n = 500
    for law in (None, T26):
        lo, hi = [], []
        for s in range(15):
            smp = sample_goe(n, s) if law is None else sample_matrix(make_profile(n, "flat", eps=0.5), law, s)
            sr = _eigs_only(smp)
            lo.append(abs(sr.m_N(5j / n) - m_sc(5j / n)))
            hi.append(abs(sr.m_N(1j) - m_sc(1j)))
        assert np.median(lo) > np.median(hi)


def test_fit_envelope_covers_points():
    n = np.array([500, 1000, 2000])
    eta = np.array([0.1, 0.05, 0.01])
    err = np.array([0.02, 0.03, 0.05])
    c = ll.fit_envelope(n, eta, 0.5, err)
    assert np.all(err <= c(n, eta, 0.5) * (1 + 1e-12))
    assert any(np.isclose(err, c(n, eta, 0.5)))


def test_entrywise_all_a_covers_every_index():
    smp = sample_goe(40, 0)
    out = ll.verify_entrywise(smp, ABLabel.all_a(40, 0.5), [0.05j], constants.LOCAL_LAW, bound_G=5.0)
    assert out["all_typical"] and out["typical_count"] == 40
    assert out["points"][0]["max_deviant_entry_err"] == 0.0
    G = resolvent(smp, 0.05j).G
    assert out["points"][0]["max_typical_entry_err"] == pytest.approx(
        np.abs(G - m_sc(0.05j) * np.eye(40)).max(), rel=1e-9)


def test_entrywise_heavy_tail_bounded_and_split():
    n, bounded, split, seeds = 1000, 0, 0, 8
    for s in range(seeds):
        smp = sample_matrix(make_profile(n, "flat", eps=0.5), T26, s)
        out = ll.verify_entrywise(smp, label_of(smp), [0.05j], bound_G=10.0)
        p = out["points"][0]
        bounded += p["max_abs_G_deviant"] < 10.0
        split += p["median_typical_entry_err"] < p["median_deviant_entry_err"]
        assert out["deviant_ok"]
    assert bounded == seeds
    assert split >= 0.9 * seeds


def test_delocalization_n1_and_goe():
    one = ll.verify_delocalization(np.array([[0.3]]), kappa=0.5)
    assert one["edge_top"] == 1.0 and one["bulk_count"] == 1
    smp = sample_goe(1000, 3)
    out = ll.verify_delocalization(smp, 0.5, 0.5, C=6.0)
    assert out["passed"] and out["bulk_max"] < 6.0


def test_ladder_first_rung_and_rung_count():
    n = 400
    smp = sample_goe(n, 1)
    g = ll.build_grid(n, 0.5, 1)
    out = ll.multiscale_ladder_diagnostic(smp, label_of(smp), g, constants.LADDER_C, constants.LADDER_XI, energy=0.0)
    assert out["rungs"] == ll.rung_count(n, 20 / n)
    first = out["rows"][0]
    assert first["eta"] == 5.0 and first["max_typical_v"] <= 3 / 5.0 < 1
    assert out["continuity_violations"] == 0


def test_ladder_envelope_heavy_tail_seeds():
    n, ok = 1000, 0
    g = ll.build_grid(n, 0.5, 1)
    for s in range(10):
        smp = sample_matrix(make_profile(n, "flat", eps=0.5), T26, 40_000 + s)
        out = ll.multiscale_ladder_diagnostic(smp, label_of(smp), g, constants.LADDER_C, constants.LADDER_XI)
        ok += out["all_covered"]
        assert out["continuity_violations"] == 0
    assert ok >= 9
