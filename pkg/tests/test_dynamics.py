import math

import numpy as np
import pytest
from scipy import integrate, linalg, optimize, stats

from rmtlab import dynamics as dy
from rmtlab.ensemble import EntryLaw, entry_draws, make_profile, sample_goe, sample_matrix, semicircle_density
from rmtlab.errors import ConvergenceError


def _quad_quantile(level):
    cdf = lambda x: integrate.quad(semicircle_density, -2.0, x, epsabs=1e-14)[0]  # noqa: E731
    return optimize.brentq(lambda x: cdf(x) - level, -2.0, 2.0, xtol=1e-14)


def test_classical_locations_examples():
    cl = dy.classical_locations(4)
    assert cl.gamma[1] == pytest.approx(0.0, abs=1e-13)
    assert cl.gamma[3] == 2.0
    assert cl.gamma[0] == pytest.approx(_quad_quantile(0.25), abs=1e-10)
    assert cl.gamma[0] == pytest.approx(-0.80795, abs=1e-5)


def test_classical_locations_monotone_and_accurate():
    from rmtlab.ensemble import semicircle_cdf
    n = 501
    g = dy.classical_locations(n).gamma
    assert np.all(np.diff(g) > 0)
    assert np.max(np.abs(semicircle_cdf(g[:-1]) - np.arange(1, n) / n)) < 1e-10
    csv = dy.classical_locations(3).to_csv().splitlines()
    assert csv[0] == "i,gamma,gamma_s" and len(csv) == 4


def test_ou_small_step_is_identity():
    smp = sample_matrix(make_profile(20, "flat"), EntryLaw("student_t", 3.0), 1)
    out = dy.ou_evolve(dy.FlowState.start(smp), 1e-14, 0)
    assert np.max(np.abs(out.matrix.entries - smp.entries)) < 1e-6
    assert np.array_equal(out.matrix.entries, out.matrix.entries.T)
    assert out.t == pytest.approx(1e-14)
    with pytest.raises(ValueError):
        dy.ou_evolve(dy.FlowState.start(smp), 0.0, 0)


def test_ou_matches_entry_draws():
    prof = make_profile(15, "sinkhorn_periodic", amplitude=0.2)
    smp = sample_matrix(prof, EntryLaw("gaussian"), 2)
    out = dy.ou_evolve(dy.FlowState.start(smp), 0.3, 9).matrix
    d = dy.ou_entry_draws(smp.entries[3, 8], prof.s[3, 8], 15, 0.3, [9], 3, 8)
    assert out.entries[3, 8] == d[0]


def test_ou_long_time_law_is_gaussian():
    n, s = 100, 0.01
    seeds = np.arange(100_000)
    h0 = entry_draws(EntryLaw("student_t", 2.6), s, seeds, 0, 1)
    ht = dy.ou_entry_draws(h0, s, n, 60.0, seeds, 0, 1)
    assert stats.kstest(ht, stats.norm(scale=math.sqrt(s)).cdf).pvalue > 0.01


def test_second_moment_conserved():
    prof = make_profile(100, "flat")
    rows = dy.second_moment_check(prof, EntryLaw("student_t", 5.0), (0.01, 0.1, 1.0), np.arange(50_000))
    assert len(rows) == 6
    for r in rows:
        assert abs(r.z) < 3, r.to_dict()


def test_ou_variance_bookkeeping_closed_form():
    s, n = 0.004, 250
    for t in (0.01, 0.1, 1.0):
        theta = 1.0 / (2 * n * s)
        assert math.exp(-2 * theta * t) * s + s * (1 - math.exp(-t / (n * s))) == pytest.approx(s, rel=1e-14)


def test_divisible_s_formula():
    assert dy.divisible_s(1.0, 0.3) == pytest.approx((1 - math.exp(-0.3)) / 2, rel=1e-14)
    t = 1e-6
    assert dy.divisible_s(1.3, t) == pytest.approx(t / 2, rel=1e-5)


def test_h1_noise_flat_profile():
    n, t = 10, 0.4
    var = dy.h1_noise_variance(make_profile(n, "flat"), t)
    assert var[0, 1] == pytest.approx((1 - math.exp(-t)) / 2 / n, rel=1e-12)
    assert var[2, 2] == pytest.approx(0.0, abs=1e-16)


def test_split_second_moments_add_up():
    prof = make_profile(30, "sinkhorn_periodic", amplitude=0.4)
    n, t = 30, 0.2
    var = dy.h1_noise_variance(prof, t)
    assert np.all(var >= -1e-18)
    s = dy.divisible_s(prof.r, t)
    goe_var = s * (1 + np.eye(n)) / n
    total = np.exp(-t / (n * prof.s)) * prof.s + var + goe_var
    assert np.allclose(total, prof.s, rtol=1e-12, atol=0)


def test_split_rejects_bad_t_and_composes():
    smp = sample_matrix(make_profile(20, "flat"), EntryLaw("gaussian"), 0)
    with pytest.raises(ValueError):
        dy.gaussian_divisible_split(smp, 0.0, 1)
    dec = dy.gaussian_divisible_split(smp, 0.1, 1)
    with pytest.raises(ValueError):
        dec.compose()
    h = dec.compose(goe_seed=4).entries
    assert np.allclose(h, dec.h1.entries + math.sqrt(dec.s) * sample_goe(20, 4).entries)


def test_free_convolution_point_mass():
    s = 0.25
    fc = dy.free_convolution_density(np.zeros(1), s, eta=1e-6)
    x = np.array([-0.6, 0.0, 0.4])
    ref = np.sqrt(4 * s - x * x) / (2 * math.pi * s)
    dens = np.interp(x, fc.energies, fc.density)
    assert np.allclose(dens, ref, rtol=1e-3)
    q = dy.free_convolution_quantiles(np.zeros(1), s, 10)
    assert q[4] == pytest.approx(0.0, abs=2e-3)
    assert fc.max_residual < 1e-12


def test_free_convolution_small_s_recovers_base():
    base = np.array([-1.0, 0.0, 1.0])
    q = dy.free_convolution_quantiles(base, 1e-4, 3)
    assert np.allclose(q, base, atol=0.03)


def test_free_convolution_fixed_point_residual():
    base = dy.classical_locations(200).gamma
    z = np.linspace(-1.5, 1.5, 7) + 1e-3j
    m = dy.solve_free_convolution(base, 0.1, z)
    mb = np.mean(1.0 / (base[None, :] - (z + 0.1 * m)[:, None]), axis=1)
    assert np.max(np.abs(m - mb)) < 1e-12
    assert np.all(m.imag > 0)
    with pytest.raises(ConvergenceError):
        dy.solve_free_convolution(base, 0.1, z, tol=0.0, max_iter=3)


def test_free_convolution_against_monte_carlo_histogram():
    n, s = 1000, 0.04
    base = linalg.eigvalsh(sample_goe(n, 77).entries)
    fc = dy.free_convolution_density(base, s)
    pred = float(np.interp(0.0, fc.energies, fc.density))
    w = 0.1
    hits = 0
    reps = 100
    for r in range(reps):
        lam = linalg.eigvalsh(np.diag(base) + math.sqrt(s) * sample_goe(n, 10_000 + r).entries)
        hits += np.count_nonzero(np.abs(lam) < w)
    emp = hits / (reps * n * 2 * w)
    assert emp == pytest.approx(pred, rel=0.02)


def test_spectral_functionals():
    f = dy.spectral_functionals([-1.0, 0.0, 3.0])
    assert f["median_eigenvalue"] == 0.0 and f["max_abs_eigenvalue"] == 3.0
    assert f["im_m_N_i"] == pytest.approx(np.mean(1 / (np.array([-1.0, 0, 3]) - 1j)).imag)


def test_equality_in_law_small():
    prof = make_profile(100, "flat", eps=0.5)
    law = EntryLaw("student_t", 3.0)
    t = 100 ** -0.5
    ou = {k: [] for k in dy.FUNCTIONALS}
    sp = {k: [] for k in dy.FUNCTIONALS}
    for seed in range(150):
        a, b = dy.flow_pair(prof, law, t, seed)
        for k in dy.FUNCTIONALS:
            ou[k].append(a[k])
            sp[k].append(b[k])
    res = dy.equality_in_law(ou, sp)
    assert res["passed"], res
