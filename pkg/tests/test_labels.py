import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rmtlab import _rng, labels
from rmtlab.ensemble import EntryLaw, WignerSample, make_profile, sample_matrix
from rmtlab.errors import DimensionMismatchError, ResamplingUnsupportedError, UndefinedThresholdError
from rmtlab.labels import ABLabel


def _wrap(h, eps=1.0):
    n = h.shape[0]
    return WignerSample(make_profile(n, "flat", eps=eps), h, 0, EntryLaw("gaussian"))


def test_thresholds():
    assert labels.label_threshold(1024, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert labels.label_threshold(10_000, 0.5) == pytest.approx(0.630957344, abs=1e-9)
    assert labels.deviant_cap(1000, 1.0) == pytest.approx(707.9458, abs=1e-4)
    assert labels.connection_radius(1000) == 2
    assert labels.connection_radius(1000, 4) == 4
    with pytest.raises(UndefinedThresholdError):
        labels.connection_radius(2)


def test_label_of_threshold_examples():
    h = np.zeros((1024, 1024))
    h[0, 1] = h[1, 0] = 0.6
    h[2, 3] = h[3, 2] = 0.4
    lab = labels.label_of(_wrap(h))
    assert lab.bits[0, 1] and lab.bits[1, 0]
    assert not lab.bits[2, 3]
    assert lab.b_count == 1
    assert labels.label_of(_wrap(np.zeros((5, 5)))) == ABLabel.all_a(5, 1.0)


def test_classify_examples():
    c = labels.classify(ABLabel.all_a(6, 1.0))
    assert c.deviant.size == 0 and c.typical.size == 6
    c = labels.classify(ABLabel.from_pairs(6, 1.0, [(0, 1)]))
    assert c.deviant.tolist() == [0, 1] and c.components == [[0, 1]]
    c = labels.classify(ABLabel.from_pairs(6, 1.0, [(0, 1), (1, 2)]))
    assert c.components == [[0, 1, 2]]
    c = labels.classify(ABLabel.from_pairs(6, 1.0, [(4, 4)]))
    assert c.deviant.tolist() == [4] and c.components == [[4]]


def test_admissibility_examples():
    assert labels.admissibility(ABLabel.all_a(50, 1.0)) == "admissible"
    assert labels.admissibility(ABLabel.from_pairs(1000, 1.0, [(0, 1)])) == "connected_inadmissible"
    assert labels.admissibility(ABLabel.from_pairs(1000, 1.0, [(0, 1)]), r_min=4) == "admissible"
    # 708 deviant indices as 354 disjoint pairs
    pairs = [(2 * k, 2 * k + 1) for k in range(354)]
    lab = ABLabel.from_pairs(1000, 1.0, pairs)
    assert labels.admissibility(lab, r_min=4) == "deviant_inadmissible"
    lab707 = ABLabel.from_pairs(1000, 1.0, pairs[:353] + [(706, 706)])
    assert labels.classify(lab707).deviant.size == 707
    assert labels.admissibility(lab707, r_min=4) == "admissible"
    assert labels.admissibility(lab) == "both"


def test_rle_roundtrip():
    lab = ABLabel.from_pairs(9, 0.5, [(0, 0), (2, 5), (8, 8), (3, 4)])
    assert ABLabel.from_dict(lab.to_dict()) == lab
    assert ABLabel.from_dict(ABLabel.all_a(4, 0.5).to_dict()) == ABLabel.all_a(4, 0.5)
    d = lab.to_dict()
    d["runs"] = d["runs"][:-1]
    with pytest.raises(DimensionMismatchError):
        ABLabel.from_dict(d)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 25), seed=st.integers(0, 10 ** 6))
def test_rle_roundtrip_property(n, seed):
    rng = np.random.default_rng(seed)
    b = rng.random((n, n)) < 0.2
    b = np.triu(b) | np.triu(b, 1).T
    lab = ABLabel(n, b, 0.7)
    assert ABLabel.from_dict(lab.to_dict()) == lab


@pytest.mark.parametrize("law", [EntryLaw("gaussian"), EntryLaw("student_t", 2.6), EntryLaw("sym_pareto", 3.0)])
def test_big_probability_closed_form_vs_quadrature(law):
    n, eps = 1000, 0.5
    thr = labels.label_threshold(n, eps)
    for v in (1.0 / n, 2.0 / n):
        closed = float(labels.big_probability(law, thr, v))
        quad = labels.big_probability_quad(law, thr, v)
        assert closed == pytest.approx(quad, rel=1e-8, abs=1e-300)


def test_h_distributed_label_frequency():
    n, eps = 1000, 0.5
    law = EntryLaw("student_t", 2.6)
    prof = make_profile(n, "flat", eps=eps)
    q = labels.big_probability_quad(law, labels.label_threshold(n, eps), 1.0 / n)
    # only the (0, 1) entry matters; draw its label bit for many seeds directly
    seeds = np.arange(200_000)
    u = _rng.bits_to_uniform(_rng.Stream(seeds, _rng.TAG_LABEL, 0, 1).words(0))
    freq = np.mean(u < q)
    se = math.sqrt(q * (1 - q) / seeds.size)
    assert abs(freq - q) < 3 * se + 1e-12
    lab = labels.sample_h_distributed_label(prof, law, 0)
    assert lab.bits[0, 1] == (u[0] < q)


def test_expected_b_count_bound():
    n, eps = 500, 0.5
    law = EntryLaw("student_t", 2.6)
    prof = make_profile(n, "flat", eps=eps)
    counts = [labels.sample_h_distributed_label(prof, law, s).b_count for s in range(100)]
    assert np.mean(counts) <= prof.C2 * n ** (1 - eps / 10)


def test_rademacher_label_is_degenerate():
    prof = make_profile(100, "flat", eps=0.5)
    with pytest.raises(ResamplingUnsupportedError):
        labels.sample_h_distributed_label(prof, EntryLaw("rademacher"), 0)
    lab = labels.sample_h_distributed_label(prof, EntryLaw("rademacher"), 0, strict=False)
    assert lab.b_count == 0


def test_conditional_draws_respect_threshold():
    n, eps = 1000, 0.5
    law = EntryLaw("student_t", 2.6).with_variance(1.0 / n)
    thr = labels.label_threshold(n, eps)
    cl = labels.conditional_laws(law, thr)
    st_ = _rng.Stream(np.arange(1_000_000), _rng.TAG_AUX, 0, 0)
    a = cl.draw_a(st_)
    b = cl.draw_b(st_.sub(3))
    assert np.all(np.abs(a) <= thr)
    assert np.all(np.abs(b) > thr)
    bnd = cl.amenable_bounds(n, eps, 8.0)
    assert abs(a.mean()) <= bnd["mean_a"]
    assert cl.a_moments()[0] == 0.0
    assert abs(cl.a_moments()[1] - 1.0 / n) <= bnd["second_a"]
    assert 1 - cl.p <= bnd["one_minus_p"]
    assert np.mean(a * a) == pytest.approx(cl.a_moments()[1], rel=0.01)


def test_conditioned_matrix_respects_label():
    n = 200
    prof = make_profile(n, "flat", eps=0.5)
    law = EntryLaw("student_t", 2.6)
    lab = labels.sample_h_distributed_label(prof, law, 3)
    smp = labels.sample_conditioned_matrix(prof, law, lab, 9)
    assert labels.label_of(smp) == lab
    allb = ABLabel(n, np.ones((n, n), dtype=bool), 0.5)
    smp = labels.sample_conditioned_matrix(prof, law, allb, 1)
    assert np.all(np.abs(smp.entries) > lab.threshold)
    with pytest.raises(DimensionMismatchError):
        labels.sample_conditioned_matrix(prof, law, ABLabel.all_a(5, 0.5), 0)


def test_two_stage_matches_direct_law():
    n, eps = 1000, 0.5
    law = EntryLaw("student_t", 2.6)
    seeds = np.arange(50_000)
    two = labels.two_stage_entry_draws(law, 1.0 / n, n, eps, seeds, 0, 1)
    res = stats.kstest(two, lambda v: law.cdf(v, 1.0 / n))
    assert res.pvalue > 0.01


def test_admissibility_frequency_bounded_law():
    prof = make_profile(200, "flat", eps=1.0)
    out = labels.admissibility_frequency(prof, EntryLaw("rademacher"), 5, 0, r_min=4)
    assert out["rates"]["admissible"]["rate"] == 1.0
    assert len(out["deviant_sizes"]) == 5


def test_deviant_rate_decreases_with_n():
    law = EntryLaw("student_t", 2.6)
    means = []
    for n in (250, 500, 1000):
        prof = make_profile(n, "flat", eps=0.5)
        out = labels.admissibility_frequency(prof, law, 20, 1, r_min=4)
        means.append(np.mean(out["deviant_sizes"]) / n)
    assert means[0] > means[1] > means[2]
