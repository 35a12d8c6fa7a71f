"""AB labels: amenable/big entry classification and label-conditioned resampling.

An entry is *amenable* (A) when ``|h_ij| <= N^(-eps/10)`` and *big* (B)
otherwise. Index ``i`` is *deviant* if some ``j`` (possibly ``j == i``) makes
``(i, j)`` big, and *typical* otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, stats

from . import _rng
from .ensemble import EntryLaw, VarianceProfile, WignerSample
from .errors import (
    DegenerateConditioningError,
    DimensionMismatchError,
    ResamplingUnsupportedError,
    UndefinedThresholdError,
)

VERDICTS = ("admissible", "deviant_inadmissible", "connected_inadmissible", "both")

# rejection rounds for the a-law before switching to inverse-CDF restriction
_A_ROUNDS = 32


def label_threshold(n: int, eps: float) -> float:
    """``N^(-eps/10)``."""
    return float(n) ** (-eps / 10.0)


def deviant_cap(n: int, eps: float) -> float:
    """``N^(1 - eps/20)``: the deviant count at which a label is inadmissible."""
    return float(n) ** (1.0 - eps / 20.0)


def connection_radius(n: int, r_min: Optional[int] = None) -> int:
    """``r = ceil(ln ln N)``, raised to ``r_min`` when given."""
    if n <= math.e:
        raise UndefinedThresholdError(f"ceil(log log N) needs N > e, got N = {n}")
    r = math.ceil(math.log(math.log(n)))
    return max(r, int(r_min)) if r_min is not None else r


# --------------------------------------------------------------------------
# label container


@dataclass(eq=False)
class ABLabel:
    """Symmetric boolean array, ``True`` marking a big (B) entry."""

    n: int
    bits: np.ndarray
    eps: float

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.n, self.n):
            raise DimensionMismatchError(f"label bits have shape {self.bits.shape}, expected ({self.n}, {self.n})")
        if not np.array_equal(self.bits, self.bits.T):
            raise ValueError("AB label must be symmetric")

    @property
    def threshold(self) -> float:
        return label_threshold(self.n, self.eps)

    @property
    def b_count(self) -> int:
        """Number of B entries in the upper triangle (diagonal included)."""
        return int(np.triu(self.bits).sum())

    def __eq__(self, other):
        return (isinstance(other, ABLabel) and self.n == other.n and self.eps == other.eps
                and np.array_equal(self.bits, other.bits))

    @classmethod
    def all_a(cls, n: int, eps: float) -> "ABLabel":
        return cls(n, np.zeros((n, n), dtype=bool), eps)

    @classmethod
    def from_pairs(cls, n: int, eps: float, pairs) -> "ABLabel":
        bits = np.zeros((n, n), dtype=bool)
        for i, j in pairs:
            bits[i, j] = bits[j, i] = True
        return cls(n, bits, eps)

    def to_dict(self) -> dict:
        """Run-length encoding of the row-major upper triangle, first run is A."""
        rows, cols = np.triu_indices(self.n)
        flat = self.bits[rows, cols].astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        edges = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(edges).tolist()
        if flat.size and flat[0]:
            runs = [0] + runs
        return {"schema": "rmtlab.label/1", "n": self.n, "eps": self.eps,
                "encoding": "rle-upper-rowmajor", "runs": [int(r) for r in runs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ABLabel":
        n = int(d["n"])
        if d.get("encoding") != "rle-upper-rowmajor":
            raise ValueError(f"unsupported label encoding {d.get('encoding')!r}")
        runs = np.asarray(d["runs"], dtype=np.int64)
        values = np.arange(runs.size) % 2 == 1
        flat = np.repeat(values, runs)
        rows, cols = np.triu_indices(n)
        if flat.size != rows.size:
            raise DimensionMismatchError(f"RLE covers {flat.size} entries, expected {rows.size}")
        bits = np.zeros((n, n), dtype=bool)
        bits[rows, cols] = flat
        bits[cols, rows] = flat
        return cls(n, bits, float(d["eps"]))


def label_of(sample: WignerSample, eps: Optional[float] = None) -> ABLabel:
    """The AB label of a matrix: B exactly where ``|h_ij| > N^(-eps/10)``."""
    eps = sample.profile.eps if eps is None else eps
    thr = label_threshold(sample.n, eps)
    return ABLabel(sample.n, np.abs(sample.entries) > thr, eps)


# --------------------------------------------------------------------------
# conditional laws


def big_probability(law: EntryLaw, threshold: float, variance=None):
    """``1 - p = P[|X| >= threshold]`` from the closed-form tail."""
    if variance is None or np.ndim(variance) == 0:
        return law.abs_sf(threshold, variance)
    # profiles carry few distinct variances; evaluate the tail once per value
    uniq, inv = np.unique(np.asarray(variance, dtype=np.float64), return_inverse=True)
    return np.asarray(law.abs_sf(threshold, uniq))[inv].reshape(np.shape(variance))


def big_probability_quad(law: EntryLaw, threshold: float, variance=None) -> float:
    """``1 - p`` by adaptive quadrature of the density (independent of :func:`big_probability`)."""
    sigma = math.sqrt(law.target_variance if variance is None else float(variance))
    if not law.has_density:
        raise ValueError("quadrature needs a law with a density")
    f = lambda x: float(law.pdf(x, sigma * sigma))  # noqa: E731
    tail, _ = integrate.quad(f, threshold, np.inf, epsabs=0.0, epsrel=1e-11, limit=500)
    return 2.0 * tail


@dataclass
class ConditionalLaws:
    """The law of ``h`` conditioned on ``|h| < threshold`` (a-law) or ``|h| >= threshold`` (b-law).

    Methods accept an array of variances so one object serves a whole
    variance profile; scalar attributes refer to ``base.target_variance``.
    """

    base: EntryLaw
    threshold: float
    p: float = field(init=False)

    def __post_init__(self):
        self.p = float(1.0 - self.q_at())
        if not (0.0 < self.p < 1.0):
            raise DegenerateConditioningError(
                f"P[|X| < {self.threshold:.6g}] = {self.p} is not strictly inside (0, 1)"
            )

    def q_at(self, variance=None):
        return big_probability(self.base, self.threshold, variance)

    def check_variances(self, variance):
        q = np.asarray(self.q_at(variance))
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            raise DegenerateConditioningError("conditioning on an event of probability zero or one")

    def draw_a(self, stream: _rng.Stream, variance=None) -> np.ndarray:
        """Draws with ``|a| <= threshold``: rejection from the base law, then inverse CDF."""
        sigma = np.broadcast_to(self.base._sigma(variance), stream.shape).ravel()
        out = np.empty(stream.size)
        pending = np.arange(stream.size)
        for k in range(_A_ROUNDS):
            if not pending.size:
                break
            x = self.base.std_draw(stream.take(pending).sub(k)) * sigma[pending]
            ok = np.abs(x) <= self.threshold
            out[pending[ok]] = x[ok]
            pending = pending[~ok]
        if pending.size:
            sub = stream.take(pending).sub(_A_ROUNDS)
            bits = sub.words(0)
            u = _rng.bits_to_uniform(bits)
            sg = sigma[pending]
            q = self.base.std_abs_sf(self.threshold / sg)
            mag = sg * self.base.std_abs_isf(q + u * (1.0 - q))
            out[pending] = _rng.bits_to_sign(bits) * np.minimum(mag, self.threshold)
        return out.reshape(stream.shape)

    def draw_b(self, stream: _rng.Stream, variance=None) -> np.ndarray:
        """Draws with ``|b| > threshold`` by inverse-CDF restriction of the tail."""
        sigma = np.broadcast_to(self.base._sigma(variance), stream.shape).ravel()
        bits = stream.words(0)
        u = _rng.bits_to_uniform(bits)
        q = self.base.std_abs_sf(self.threshold / sigma)
        mag = sigma * self.base.std_abs_isf(u * q)
        # the label is B iff |h| > threshold, so keep draws strictly above it
        mag = np.maximum(mag, np.nextafter(self.threshold, np.inf))
        return (_rng.bits_to_sign(bits) * mag).reshape(stream.shape)

    def a_moments(self, variance=None) -> tuple:
        """``(E a, E a^2)`` by quadrature; ``E a = 0`` for every symmetric base law."""
        s = self.base.target_variance if variance is None else float(variance)
        p = 1.0 - float(self.q_at(s))
        f = lambda x: x * x * float(self.base.pdf(x, s))  # noqa: E731
        second, _ = integrate.quad(f, 0.0, self.threshold, epsabs=0.0, epsrel=1e-11, limit=200)
        return 0.0, 2.0 * second / p

    def amenable_bounds(self, n: int, eps: float, C2: float) -> dict:
        """Bounds ``C2 N^(-1-eps/10)`` times 1, 2, 3 for ``1 - p``, ``|E a|`` and ``|E a^2 - s|``."""
        base = C2 * n ** (-1.0 - eps / 10.0)
        return {"one_minus_p": base, "mean_a": 2.0 * base, "second_a": 3.0 * base}


def conditional_laws(law: EntryLaw, threshold: float) -> ConditionalLaws:
    if not threshold > 0:
        raise DegenerateConditioningError("threshold must be positive")
    return ConditionalLaws(law, float(threshold))


# --------------------------------------------------------------------------
# label sampling and conditioned matrices


def sample_h_distributed_label(profile: VarianceProfile, law: EntryLaw, seed: int,
                               eps: Optional[float] = None, strict: bool = True) -> ABLabel:
    """Independent upper-triangular labels with ``P[B] = P[|h_ij| >= N^(-eps/10)]``.

    With ``strict`` (the default) a degenerate ``p_ij`` in ``{0, 1}`` raises,
    since conditioned resampling is then undefined. ``strict=False`` still
    draws the label, which is all that admissibility statistics need.
    """
    eps = profile.eps if eps is None else eps
    n = profile.n
    thr = label_threshold(n, eps)
    rows, cols = _rng.upper_indices(n)
    q = big_probability(law, thr, profile.s[rows, cols])
    if strict and (np.any(q <= 0.0) or np.any(q >= 1.0)):
        raise ResamplingUnsupportedError(
            "p_ij must lie strictly inside (0, 1); the law has no mass on one side of the threshold"
        )
    u = _rng.bits_to_uniform(_rng.Stream(seed, _rng.TAG_LABEL, rows, cols).words(0))
    flat = u < q
    bits = np.zeros((n, n), dtype=bool)
    bits[rows, cols] = flat
    bits[cols, rows] = flat
    return ABLabel(n, bits, eps)


def sample_conditioned_matrix(profile: VarianceProfile, law: EntryLaw, label: ABLabel,
                              seed: int) -> WignerSample:
    """An L-distributed matrix: a-law draws on A entries, b-law draws on B entries."""
    if label.n != profile.n:
        raise DimensionMismatchError(f"label is {label.n}x{label.n}, profile is {profile.n}x{profile.n}")
    law.check_moment_order(profile.eps)
    n = profile.n
    cl = conditional_laws(law.with_variance(1.0), label.threshold)
    rows, cols = _rng.upper_indices(n)
    var = profile.s[rows, cols]
    cl.check_variances(var)
    big = label.bits[rows, cols]
    stream = _rng.Stream(seed, _rng.TAG_CONDITIONED, rows, cols)
    values = np.empty(rows.size)
    ia, ib = np.flatnonzero(~big), np.flatnonzero(big)
    values[ia] = cl.draw_a(stream.take(ia), var[ia])
    values[ib] = cl.draw_b(stream.take(ib).sub(1 << 12), var[ib])
    out = WignerSample(profile, _rng.symmetric_from_upper(n, rows, cols, values), int(seed), law, label=label)
    out.meta["ensemble"] = "conditioned"
    return out


def two_stage_entry_draws(law: EntryLaw, variance: float, n: int, eps: float, seeds, i: int, j: int):
    """Sampling by label then conditional draw, for one entry and many seeds."""
    thr = label_threshold(n, eps)
    cl = conditional_laws(law.with_variance(variance), thr)
    seeds = np.asarray(seeds)
    u = _rng.bits_to_uniform(_rng.Stream(seeds, _rng.TAG_LABEL, i, j).words(0))
    big = u < (1.0 - cl.p)
    stream = _rng.Stream(seeds, _rng.TAG_CONDITIONED, i, j)
    out = np.empty(seeds.size)
    ia, ib = np.flatnonzero(~big), np.flatnonzero(big)
    out[ia] = cl.draw_a(stream.take(ia))
    out[ib] = cl.draw_b(stream.take(ib).sub(1 << 12))
    return out


# --------------------------------------------------------------------------
# classification


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class IndexClassification:
    n: int
    deviant: np.ndarray
    typical: np.ndarray
    components: list

    @property
    def largest_component(self) -> int:
        return max((len(c) for c in self.components), default=0)

    def to_dict(self) -> dict:
        return {"deviant": [int(i) for i in self.deviant],
                "components": [[int(i) for i in c] for c in self.components]}


def classify(label: ABLabel) -> IndexClassification:
    """Deviant/typical split and connected components of the linked graph."""
    bits = label.bits
    deviant_mask = bits.any(axis=1)
    uf = _UnionFind(label.n)
    ii, jj = np.nonzero(np.triu(bits, 1))
    for a, b in zip(ii.tolist(), jj.tolist()):
        uf.union(a, b)
    groups: dict = {}
    for i in np.flatnonzero(deviant_mask).tolist():
        groups.setdefault(uf.find(i), []).append(i)
    components = sorted(groups.values(), key=lambda c: c[0])
    return IndexClassification(label.n, np.flatnonzero(deviant_mask), np.flatnonzero(~deviant_mask),
                               components)


def admissibility(label: ABLabel, r_min: Optional[int] = None,
                  classification: Optional[IndexClassification] = None) -> str:
    """``admissible``, ``deviant_inadmissible``, ``connected_inadmissible`` or ``both``."""
    r = connection_radius(label.n, r_min)
    cls = classify(label) if classification is None else classification
    dev = cls.deviant.size >= deviant_cap(label.n, label.eps)
    con = cls.largest_component >= r
    if dev and con:
        return "both"
    if dev:
        return "deviant_inadmissible"
    if con:
        return "connected_inadmissible"
    return "admissible"


def _clopper_pearson(k, n, level=0.95):
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def admissibility_frequency(profile: VarianceProfile, law: EntryLaw, trials: int, seed: int,
                            eps: Optional[float] = None, r_min: Optional[int] = None,
                            level: float = 0.95) -> dict:
    """Monte Carlo verdict rates over H-distributed labels, with Clopper-Pearson intervals.

    Besides the four exclusive verdicts, ``deviant_inadmissible_any`` and
    ``connected_inadmissible_any`` count each event including overlaps.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    counts = dict.fromkeys(VERDICTS, 0)
    deviant_sizes = []
    for t in range(trials):
        lab = sample_h_distributed_label(profile, law, _trial_seed(seed, t), eps=eps, strict=False)
        cls = classify(lab)
        deviant_sizes.append(int(cls.deviant.size))
        counts[admissibility(lab, r_min, cls)] += 1
    counts["deviant_inadmissible_any"] = counts["deviant_inadmissible"] + counts["both"]
    counts["connected_inadmissible_any"] = counts["connected_inadmissible"] + counts["both"]
    rates = {}
    for key, k in counts.items():
        lo, hi = _clopper_pearson(k, trials, level)
        rates[key] = {"count": k, "rate": k / trials, "ci_low": lo, "ci_high": hi}
    e = profile.eps if eps is None else eps
    return {"n": profile.n, "trials": trials, "eps": e, "r": connection_radius(profile.n, r_min),
            "deviant_cap": deviant_cap(profile.n, e), "rates": rates,
            "deviant_sizes": deviant_sizes}


def _trial_seed(seed: int, t: int) -> int:
    return int(_rng.hash_bits(seed, _rng.TAG_AUX, t, 0x1ABE1))
