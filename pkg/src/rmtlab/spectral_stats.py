"""Eigenvalue statistics: spectra, bulk gaps, correlation observables and
two-ensemble comparisons."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from . import _canon
from .ensemble import EntryLaw, WignerSample, make_profile, sample_goe, sample_matrix, semicircle_density
from .errors import (ConvergenceError, DegenerateEstimatorError, DimensionMismatchError, EmptyDomainError,
                     InsufficientReplicasError)

DEFAULT_KAPPA = 0.25
MAX_K = 3


# --------------------------------------------------------------------------
# spectra


@dataclass
class SpectrumSummary:
    eigenvalues: np.ndarray
    seed: Optional[int] = None
    ensemble: dict = field(default_factory=dict)
    trace: Optional[float] = None
    eigenvectors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def validate(self, trace_tol: float = 1e-8) -> "SpectrumSummary":
        lam = self.eigenvalues
        if lam.ndim != 1 or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be a finite 1-d array")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be ascending")
        if self.trace is not None and abs(lam.sum() - self.trace) > trace_tol * max(1.0, abs(self.trace)):
            raise ValueError("sum of eigenvalues does not match the trace")
        return self

    def to_dict(self) -> dict:
        return {"schema": "rmtlab.spectrum/1", "n": self.n, "seed": self.seed, "ensemble": self.ensemble,
                "trace": self.trace, "eigenvalues": self.eigenvalues.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumSummary":
        return cls(np.array(d["eigenvalues"]), d.get("seed"), dict(d.get("ensemble") or {}),
                   d.get("trace")).validate()


def _descriptor(sample) -> dict:
    if not isinstance(sample, WignerSample):
        return {"ensemble": "matrix"}
    return {"ensemble": sample.meta.get("ensemble", "wigner"), "law": sample.law.to_dict(), "n": sample.n,
            "profile": sample.profile.kind, "time": sample.time}


def eigendecompose(sample, vectors: bool = False, check: bool = True) -> SpectrumSummary:
    """Ascending spectrum of a real symmetric matrix, eigenvectors on request.

    With ``check``, the trace identity is verified and, when eigenvectors are
    computed, so are ``||HV - V diag(lam)||_max <= 1e-8 ||H||_max N`` and
    ``||V^T V - I||_max <= 1e-10``.
    """
    h = sample.entries if isinstance(sample, WignerSample) else np.asarray(sample, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {h.shape}")
    if not np.allclose(h, h.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(h).max(initial=0.0)))):
        raise ValueError("matrix is not symmetric")
    try:
        if vectors:
            lam, vec = linalg.eigh(h, check_finite=False)
        else:
            lam, vec = linalg.eigvalsh(h, check_finite=False), None
    except linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    n = h.shape[0]
    out = SpectrumSummary(lam, getattr(sample, "seed", None), _descriptor(sample), float(np.trace(h)), vec)
    if check:
        try:
            out.validate()
        except ValueError as exc:
            raise ConvergenceError(str(exc)) from exc
        if vec is not None:
            hmax = float(np.abs(h).max(initial=0.0))
            if np.abs(h @ vec - vec * lam).max(initial=0.0) > 1e-8 * max(hmax, 1e-300) * n:
                raise ConvergenceError("eigen-reconstruction check failed")
            if np.abs(vec.T @ vec - np.eye(n)).max(initial=0.0) > 1e-10:
                raise ConvergenceError("eigenvectors are not orthonormal")
    return out


# --------------------------------------------------------------------------
# gaps


@dataclass
class GapSample:
    index: int
    offsets: tuple
    values: np.ndarray


def bulk_indices(n: int, kappa: float = DEFAULT_KAPPA, offsets: Sequence[int] = (1,)) -> np.ndarray:
    """0-based ``i`` with ``kappa N <= i + 1 <= (1 - kappa) N`` and every ``i + j`` in range."""
    lo = max(int(math.ceil(kappa * n)) - 1, -min(min(offsets), 0))
    hi = min(int(math.floor((1.0 - kappa) * n)) - 1, n - 1 - max(max(offsets), 0))
    return np.arange(lo, hi + 1) if hi >= lo else np.arange(0)


def iter_gap_samples(spec: SpectrumSummary, kappa: float = DEFAULT_KAPPA,
                     offsets: Sequence[int] = (1,)) -> Iterator[GapSample]:
    lam = spec.eigenvalues
    n = spec.n
    offs = tuple(int(j) for j in offsets)
    for i in bulk_indices(n, kappa, offs):
        yield GapSample(int(i), offs, n * (lam[i] - lam[i + np.array(offs)]))


@dataclass
class GapStatistics:
    n: int
    kappa: float
    offsets: tuple
    indices: np.ndarray
    raw: np.ndarray          # N (lambda_i - lambda_{i+j}), shape (bulk, len(offsets))
    rescaled: np.ndarray     # N rho_sc(mid) (lambda_{i+1} - lambda_i), nearest gaps

    def samples(self) -> Iterator[GapSample]:
        for i, row in zip(self.indices, self.raw):
            yield GapSample(int(i), self.offsets, row)


def gap_statistics(spec: SpectrumSummary, kappa: float = DEFAULT_KAPPA,
                   offsets: Sequence[int] = (1,), density: Optional[Callable] = None) -> GapStatistics:
    """Bulk gap samples plus the locally rescaled nearest-neighbour gaps.

    Each nearest gap is multiplied by ``N rho(midpoint)``, with ``rho`` the
    semicircle density unless ``density`` is given, so the rescaled gaps
    have mean close to one.
    """
    offs = tuple(int(j) for j in offsets)
    if not offs or 0 in offs:
        raise ValueError("offsets must be nonzero")
    lam = spec.eigenvalues
    n = spec.n
    idx = bulk_indices(n, kappa, offs)
    near = bulk_indices(n, kappa, (1,))
    if idx.size == 0 or near.size == 0:
        raise EmptyDomainError(f"empty bulk window for N = {n}, kappa = {kappa}")
    raw = n * (lam[idx, None] - lam[idx[:, None] + np.array(offs)[None, :]])
    gaps = lam[near + 1] - lam[near]
    rho = (density or semicircle_density)(0.5 * (lam[near + 1] + lam[near]))
    return GapStatistics(n, kappa, offs, idx, raw, n * rho * gaps)


class EnsembleDensity:
    """Smoothed mean eigenvalue density of an ensemble.

    Pooled eigenvalues are binned on ``[-lim, lim]`` and smoothed with a
    Gaussian kernel of width ``bandwidth``; the bandwidth should sit well
    above the mean spacing ``1 / N`` and well below the macroscopic scale.
    """

    def __init__(self, spectra: Sequence[SpectrumSummary], bandwidth: float = 0.05, lim: float = 3.0,
                 bins: int = 1200):
        from scipy.ndimage import gaussian_filter1d
        lam = np.concatenate([np.asarray(getattr(s, "eigenvalues", s)) for s in spectra])
        edges = np.linspace(-lim, lim, bins + 1)
        width = edges[1] - edges[0]
        counts, _ = np.histogram(lam, edges)
        self.grid = 0.5 * (edges[1:] + edges[:-1])
        self.values = gaussian_filter1d(counts.astype(np.float64), bandwidth / width, mode="constant") / (
            lam.size * width)
        self.bandwidth = float(bandwidth)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)


UNFOLDINGS = ("semicircle", "ensemble")


def pooled_gaps(spectra: Sequence[SpectrumSummary], kappa: float = DEFAULT_KAPPA,
                unfolding: str = "semicircle", bandwidth: float = 0.05) -> list:
    """Per-replica rescaled nearest-gap arrays (kept separate for the replica bootstrap).

    ``unfolding="ensemble"`` rescales by the ensemble's own smoothed mean
    density instead of the semicircle, which removes finite-N differences in
    the global density and leaves only local gap fluctuations.
    """
    if unfolding not in UNFOLDINGS:
        raise ValueError(f"unknown unfolding {unfolding!r}")
    spectra = list(spectra)
    dens = EnsembleDensity(spectra, bandwidth) if unfolding == "ensemble" else None
    return [gap_statistics(s, kappa, density=dens).rescaled for s in spectra]


def gap_histogram_csv(gaps: np.ndarray, bins=50, upper: float = 4.0) -> str:
    counts, edges = np.histogram(np.asarray(gaps), bins=bins, range=(0.0, upper))
    width = np.diff(edges)
    dens = counts / max(counts.sum(), 1) / width
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "count", "density"])
    for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, dens):
        w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(d))])
    return buf.getvalue()


# --------------------------------------------------------------------------
# test functions


def _psi(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    a = _psi(t)
    return a / (a + _psi(1.0 - np.asarray(t, dtype=np.float64)))


class SmoothBump:
    """Product of 1-d smooth bumps, ``F(a) = prod_r phi((a_r - c_r) / radius)``.

    ``phi`` is 1 on ``|x| <= plateau`` and 0 on ``|x| >= 1``. With
    ``normalized`` each factor integrates to one.
    """

    def __init__(self, radius: float = 2.0, k: int = 1, centers: Optional[Sequence[float]] = None,
                 plateau: float = 0.25, normalized: bool = True):
        if radius <= 0 or not 0 <= plateau < 1:
            raise ValueError("need radius > 0 and 0 <= plateau < 1")
        self.radius = float(radius)
        self.k = int(k)
        self.centers = np.zeros(self.k) if centers is None else np.asarray(centers, dtype=np.float64)
        if self.centers.shape != (self.k,):
            raise ValueError("centers must have length k")
        self.plateau = float(plateau)
        self.normalized = bool(normalized)
        self._norm = self._unit_integral() * self.radius if normalized else 1.0

    def _profile(self, x):
        ax = np.abs(x)
        return smooth_step((1.0 - ax) / (1.0 - self.plateau))

    def _unit_integral(self) -> float:
        from scipy.integrate import quad
        val, _ = quad(lambda x: float(self._profile(np.array([x]))[0]), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13,
                      points=[-self.plateau, self.plateau])
        return val

    @property
    def support_radius(self) -> float:
        return float(np.max(np.abs(self.centers)) + self.radius)

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.shape[-1] != self.k:
            raise DimensionMismatchError(f"expected {self.k} coordinates, got {a.shape[-1]}")
        vals = self._profile((a - self.centers) / self.radius) / self._norm
        return np.prod(vals, axis=-1)

    def to_dict(self) -> dict:
        return {"family": "smooth_bump", "k": self.k, "radius": self.radius, "centers": self.centers.tolist(),
                "plateau": self.plateau, "normalized": self.normalized}


class ZeroFunction:
    def __init__(self, k: int = 1):
        self.k = int(k)

    support_radius = 0.0

    def __call__(self, a):
        return np.zeros(np.asarray(a).shape[:-1])

    def to_dict(self) -> dict:
        return {"family": "zero", "k": self.k}


def bump_from_dict(d: dict):
    fam = d.get("family", "smooth_bump")
    if fam == "zero":
        return ZeroFunction(d.get("k", 1))
    if fam == "smooth_bump":
        return SmoothBump(d.get("radius", 2.0), d.get("k", 1), d.get("centers"), d.get("plateau", 0.25),
                          d.get("normalized", True))
    raise ValueError(f"unknown test function family {fam!r}")


# --------------------------------------------------------------------------
# correlation observables


@dataclass
class CorrelationObservable:
    k: int
    E: float
    F: dict
    estimate: float
    stderr: float
    replicas: int
    rho: float
    values: Optional[np.ndarray] = None

    @property
    def density_ratio(self) -> float:
        """``estimate / rho^k``; close to 1 when the local density matches ``rho``."""
        return self.estimate / self.rho ** self.k

    def to_dict(self) -> dict:
        return {"k": self.k, "E": self.E, "F": self.F, "estimate": self.estimate, "stderr": self.stderr,
                "replicas": self.replicas, "rho": self.rho, "density_ratio": self.density_ratio}


def _falling(n: int, k: int) -> float:
    return float(math.prod(range(n - k + 1, n + 1)))


def _tuple_sum(x: np.ndarray, k: int, F) -> float:
    """Sum of ``F`` over ordered k-tuples of distinct entries of ``x``."""
    m = x.size
    if m < k:
        return 0.0
    if k == 1:
        return float(np.sum(F(x[:, None])))
    idx = np.array(list(itertools.permutations(range(m), k)), dtype=np.intp)
    return float(np.sum(F(x[idx])))


def _as_rows(spectra) -> Iterator[np.ndarray]:
    if isinstance(spectra, np.ndarray):
        arr = np.atleast_2d(spectra)
        for row in arr:
            yield row
        return
    for s in spectra:
        yield s.eigenvalues if isinstance(s, SpectrumSummary) else np.asarray(s, dtype=np.float64)


def correlation_observable(spectra, k: int, E: float, F, kappa: float = DEFAULT_KAPPA,
                           rho: Optional[float] = None, window: bool = True, slack: float = 1e-9,
                           keep_values: bool = True) -> CorrelationObservable:
    """Unbiased estimate of ``int F(a) p^(k)(E + a / (N rho)) da`` from replicas.

    Per replica the statistic is ``(N rho)^k / (N)_k`` times the sum of
    ``F(N rho (lambda_{i_1} - E), ...)`` over ordered k-tuples of distinct
    indices; its mean over replicas is the estimate. With ``window`` only
    eigenvalues within ``support_radius / (N rho) + slack`` of ``E`` enter
    the scan, which leaves the sum unchanged.
    """
    k = int(k)
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be in 1..{MAX_K}")
    if getattr(F, "k", k) != k:
        raise DimensionMismatchError("test function arity does not match k")
    if not kappa - 2.0 <= E <= 2.0 - kappa:
        raise ValueError(f"E = {E} outside the bulk [kappa - 2, 2 - kappa]")
    rho = float(semicircle_density(E)) if rho is None else float(rho)
    R = float(F.support_radius)
    vals = []
    n_seen = None
    for lam in _as_rows(spectra):
        n = lam.size
        if n_seen is None:
            n_seen = n
            if 2.0 * R > n:
                raise DegenerateEstimatorError(
                    f"support radius {R} spans about {2 * R:.0f} eigenvalues, more than N = {n}")
        elif n != n_seen:
            raise DimensionMismatchError("replicas must share N")
        if n < k:
            raise ValueError("need N >= k")
        scale = n * rho
        x = scale * (lam - E)
        if window:
            x = x[np.abs(lam - E) <= R / scale + slack]
        vals.append(scale ** k / _falling(n, k) * _tuple_sum(x, k, F))
    if not vals:
        raise InsufficientReplicasError("no replicas")
    v = np.asarray(vals)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return CorrelationObservable(k, float(E), F.to_dict(), float(v.mean()), se, int(v.size), rho,
                                 v if keep_values else None)


def observables_to_csv(obs: Sequence[CorrelationObservable], label: str = "") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "k", "E", "estimate", "stderr", "replicas", "rho", "density_ratio", "F"])
    for o in obs:
        w.writerow([label, o.k, repr(o.E), repr(o.estimate), repr(o.stderr), o.replicas, repr(o.rho),
                    repr(o.density_ratio), _canon.canonical_json(o.F)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# ensembles and comparison


@dataclass
class EnsembleSpec:
    """Seeded family of matrices: ``kind`` is ``goe`` or ``wigner``."""

    n: int
    seeds: Sequence[int]
    kind: str = "goe"
    law: Optional[EntryLaw] = None
    profile: str = "flat"
    eps: float = 0.5
    amplitude: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("goe", "wigner"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind == "wigner" and self.law is None:
            raise ValueError("wigner ensembles need an entry law")
        self.seeds = [int(s) for s in self.seeds]

    def sample(self, seed: int) -> WignerSample:
        if self.kind == "goe":
            return sample_goe(self.n, seed)
        prof = make_profile(self.n, self.profile, self.eps, self.amplitude)
        return sample_matrix(prof, self.law, seed)

    def spectra(self) -> Iterator[SpectrumSummary]:
        for s in self.seeds:
            yield eigendecompose(self.sample(s))

    def to_dict(self) -> dict:
        return {"name": self.name or self.kind, "kind": self.kind, "n": self.n, "seeds": list(self.seeds),
                "law": self.law.to_dict() if self.law is not None else None, "profile": self.profile,
                "eps": self.eps, "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        law = EntryLaw.from_dict(d["law"]) if d.get("law") else None
        return cls(int(d["n"]), d["seeds"], d.get("kind", "goe"), law, d.get("profile", "flat"),
                   float(d.get("eps", 0.5)), float(d.get("amplitude", 0.0)), d.get("name", ""))


@dataclass
class CompareConfig:
    statistic: str = "gap_ks"
    kappa: float = DEFAULT_KAPPA
    tolerance: Optional[float] = None   # KS distance for gap_ks, pooled SEs for correlation_diff
    confidence: float = 0.95
    bootstrap: int = 200
    seed: int = 0
    unfolding: str = "ensemble"
    k: int = 1
    E: float = 0.0
    F: dict = field(default_factory=lambda: {"family": "smooth_bump", "k": 1, "radius": 2.0})

    def __post_init__(self):
        if self.statistic not in ("gap_ks", "correlation_diff"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.tolerance is None:
            self.tolerance = 0.05 if self.statistic == "gap_ks" else 3.0
        if self.unfolding not in UNFOLDINGS:
            raise ValueError(f"unknown unfolding {self.unfolding!r}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "kappa": self.kappa, "tolerance": self.tolerance,
                "confidence": self.confidence, "bootstrap": self.bootstrap, "seed": self.seed, "unfolding": self.unfolding, "k": self.k,
                "E": self.E, "F": self.F}


@dataclass
class Verdict:
    statistic: str
    passed: bool
    magnitude: float
    details: dict
    provenance: dict

    def to_dict(self) -> dict:
        return {"schema": "rmtlab.verdict/1", "statistic": self.statistic, "passed": self.passed,
                "magnitude": self.magnitude, "details": self.details, "provenance": self.provenance}

    def to_json(self) -> str:
        return _canon.dumps(self.to_dict())


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def ks_critical_value(n: int, m: int, alpha: float) -> float:
    """Asymptotic two-sample KS critical value ``c(alpha) sqrt((n + m) / (n m))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def _spectra_of(x) -> list:
    if isinstance(x, EnsembleSpec):
        return list(x.spectra())
    return list(x)


def _provenance(a, b, cfg: CompareConfig) -> dict:
    def desc(x):
        if isinstance(x, EnsembleSpec):
            return x.to_dict()
        return {"seeds": [getattr(s, "seed", None) for s in x]}
    return {"A": desc(a), "B": desc(b), "config": cfg.to_dict(), "config_hash": _canon.content_hash(cfg.to_dict())}


def compare_ensembles(a, b, statistic: Optional[str] = None, config: Optional[CompareConfig] = None) -> Verdict:
    """Gap or correlation comparison of two ensembles.

    ``a`` and ``b`` are :class:`EnsembleSpec` descriptors or sequences of
    :class:`SpectrumSummary`. ``gap_ks`` reports the two-sample KS distance
    of rescaled bulk gaps with a replica-bootstrap interval and passes when
    the upper end lies below ``tolerance``. ``correlation_diff`` passes when
    ``|A - B| < tolerance`` pooled standard errors.
    """
    cfg = config or CompareConfig(statistic or "gap_ks")
    if statistic is not None and statistic != cfg.statistic:
        raise ValueError("statistic and config.statistic disagree")
    sa, sb = _spectra_of(a), _spectra_of(b)
    if len(sa) < 2 or len(sb) < 2:
        raise InsufficientReplicasError("need at least two replicas per ensemble")
    if sa[0].n != sb[0].n:
        raise DimensionMismatchError("ensembles must share N")
    prov = _provenance(a if isinstance(a, EnsembleSpec) else sa, b if isinstance(b, EnsembleSpec) else sb, cfg)
    if cfg.statistic == "gap_ks":
        return _compare_gaps(sa, sb, cfg, prov)
    return _compare_correlation(sa, sb, cfg, prov)


def _compare_gaps(sa, sb, cfg: CompareConfig, prov) -> Verdict:
    ga, gb = pooled_gaps(sa, cfg.kappa, cfg.unfolding), pooled_gaps(sb, cfg.kappa, cfg.unfolding)
    xa, xb = np.concatenate(ga), np.concatenate(gb)
    alpha = 1.0 - cfg.confidence
    crit = ks_critical_value(xa.size, xb.size, alpha)
    if crit >= cfg.tolerance:
        raise InsufficientReplicasError(
            f"KS critical value {crit:.4f} at confidence {cfg.confidence} is not below tolerance {cfg.tolerance}")
    d = ks_distance(xa, xb)
    rng = np.random.default_rng(cfg.seed)
    boots = np.empty(cfg.bootstrap)
    for r in range(cfg.bootstrap):
        ia = rng.integers(0, len(ga), len(ga))
        ib = rng.integers(0, len(gb), len(gb))
        boots[r] = ks_distance(np.concatenate([ga[i] for i in ia]), np.concatenate([gb[i] for i in ib]))
    lo, hi = (np.quantile(boots, [alpha / 2, 1 - alpha / 2]) if cfg.bootstrap else (d, d))
    details = {"ks_distance": d, "ci_low": float(lo), "ci_high": float(hi), "critical_value": crit,
               "gaps_A": int(xa.size), "gaps_B": int(xb.size), "replicas_A": len(ga), "replicas_B": len(gb),
               "mean_gap_A": float(xa.mean()), "mean_gap_B": float(xb.mean()), "tolerance": cfg.tolerance,
               "unfolding": cfg.unfolding}
    return Verdict("gap_ks", bool(hi < cfg.tolerance), d, details, prov)


def _compare_correlation(sa, sb, cfg: CompareConfig, prov) -> Verdict:
    F = bump_from_dict(cfg.F)
    oa = correlation_observable(sa, cfg.k, cfg.E, F, cfg.kappa)
    ob = correlation_observable(sb, cfg.k, cfg.E, F, cfg.kappa)
    diff = abs(oa.estimate - ob.estimate)
    se = math.sqrt(oa.stderr ** 2 + ob.stderr ** 2)
    ratio = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    details = {"A": oa.to_dict(), "B": ob.to_dict(), "difference": diff, "pooled_stderr": se,
               "standard_errors": ratio, "tolerance": cfg.tolerance}
    return Verdict("correlation_diff", bool(ratio < cfg.tolerance), diff, details, prov)
