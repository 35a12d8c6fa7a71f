"""Entry laws, variance profiles and reproducible generalized Wigner samples.

A generalized Wigner matrix is a real symmetric matrix with independent
centred entries whose variances ``s_ij`` satisfy

* ``c1 < N s_ij < C1`` for every entry,
* ``|sum_j s_ij - 1| < C1 N^-eps`` for every row,
* ``E|h_ij sqrt(N)|^(2 + eps) < C2``.

Entries are drawn from counter-based streams (see :mod:`rmtlab._rng`), so a
sample depends only on ``(profile, law, seed)``.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from . import _rng
from .errors import (
    ConstraintViolationError,
    MomentAssumptionError,
    ProfileConstructionError,
)

LAW_KINDS = ("gaussian", "rademacher", "student_t", "sym_pareto")
HEAVY_KINDS = ("student_t", "sym_pareto")
PROFILE_KINDS = ("flat", "sinkhorn_periodic", "detuned_periodic")

DEFAULT_C1 = 0.5
DEFAULT_BIG_C1 = 2.0
DEFAULT_C2 = 8.0


# --------------------------------------------------------------------------
# entry laws


@dataclass(frozen=True)
class EntryLaw:
    """A centred symmetric scalar law, standardised to ``target_variance``.

    ``student_t`` is a scaled Student t with ``tail_index`` degrees of freedom.
    ``sym_pareto`` is a symmetrised Pareto type II (Lomax) law with tail
    exponent ``tail_index``; unlike the classical Pareto law it has a positive
    density on the whole line, which the label resampling needs.
    """

    kind: str = "gaussian"
    tail_index: Optional[float] = None
    target_variance: float = 1.0

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}; expected one of {LAW_KINDS}")
        if self.target_variance < 0:
            raise ValueError("target_variance must be nonnegative")
        if self.kind in HEAVY_KINDS:
            if self.tail_index is None or not self.tail_index > 2.0:
                raise MomentAssumptionError(
                    f"{self.kind} needs tail_index > 2 for a finite variance, got {self.tail_index}"
                )

    @property
    def is_heavy(self) -> bool:
        return self.kind in HEAVY_KINDS

    @property
    def has_density(self) -> bool:
        return self.kind != "rademacher"

    def with_variance(self, variance: float) -> "EntryLaw":
        return EntryLaw(self.kind, self.tail_index, float(variance))

    def check_moment_order(self, eps: float) -> None:
        """Raise unless the (2 + eps)-th moment is finite."""
        if self.is_heavy and not self.tail_index > 2.0 + eps:
            raise MomentAssumptionError(
                f"tail_index {self.tail_index} <= 2 + eps = {2.0 + eps}: "
                "the (2 + eps)-th moment of the entries is infinite"
            )

    # -- standardised (unit variance) building blocks ----------------------

    @property
    def _scale(self) -> float:
        nu = self.tail_index
        if self.kind == "student_t":
            return math.sqrt((nu - 2.0) / nu)
        if self.kind == "sym_pareto":
            return math.sqrt((nu - 1.0) * (nu - 2.0) / 2.0)
        return 1.0

    def std_abs_sf(self, x):
        """``P(|Z| >= x)`` for the unit-variance version ``Z``."""
        x = np.abs(np.asarray(x, dtype=np.float64))
        if self.kind == "gaussian":
            return special.erfc(x / math.sqrt(2.0))
        if self.kind == "student_t":
            return 2.0 * special.stdtr(self.tail_index, -x / self._scale)
        if self.kind == "sym_pareto":
            return (1.0 + x / self._scale) ** (-self.tail_index)
        return np.where(x <= 1.0, 1.0, 0.0)

    def std_abs_isf(self, v):
        """Inverse of :meth:`std_abs_sf` for ``v`` in (0, 1]."""
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "gaussian":
            return -special.ndtri(0.5 * v)
        if self.kind == "student_t":
            return -self._scale * special.stdtrit(self.tail_index, 0.5 * v)
        if self.kind == "sym_pareto":
            return self._scale * np.expm1(-np.log(v) / self.tail_index)
        return np.ones_like(v)

    def std_pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "gaussian":
            return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if self.kind == "student_t":
            nu, c = self.tail_index, self._scale
            y = x / c
            logc = (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
                    - 0.5 * math.log(nu * math.pi))
            return np.exp(logc - (nu + 1) / 2 * np.log1p(y * y / nu)) / c
        if self.kind == "sym_pareto":
            a, b = self.tail_index, self._scale
            return a / (2.0 * b) * (1.0 + np.abs(x) / b) ** (-a - 1.0)
        raise ValueError("rademacher law has no density")

    def std_abs_moment(self, p: float) -> float:
        """``E|Z|^p`` in closed form (``inf`` when it diverges)."""
        if self.kind == "gaussian":
            return 2.0 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        if self.kind == "rademacher":
            return 1.0
        nu = self.tail_index
        if p >= nu:
            return math.inf
        if self.kind == "student_t":
            log_m = (p / 2 * math.log(nu) + special.gammaln((p + 1) / 2)
                     + special.gammaln((nu - p) / 2) - 0.5 * math.log(math.pi)
                     - special.gammaln(nu / 2))
            return self._scale ** p * math.exp(log_m)
        # E Y^p = a B(p + 1, a - p) for Lomax(a)
        log_m = (math.log(nu) + special.gammaln(p + 1) + special.gammaln(nu - p)
                 - special.gammaln(nu + 1))
        return self._scale ** p * math.exp(log_m)

    # -- public law at a given variance ------------------------------------

    def _sigma(self, variance):
        v = self.target_variance if variance is None else variance
        return np.sqrt(np.asarray(v, dtype=np.float64))

    def abs_sf(self, x, variance=None):
        """``P(|X| >= x)`` where ``Var X = variance`` (default ``target_variance``)."""
        sigma = self._sigma(variance)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > 0, np.asarray(x, dtype=np.float64) / np.where(sigma > 0, sigma, 1.0), np.inf)
        return self.std_abs_sf(z)

    def pdf(self, x, variance=None):
        sigma = self._sigma(variance)
        return self.std_pdf(np.asarray(x) / sigma) / sigma

    def cdf(self, x, variance=None):
        x = np.asarray(x, dtype=np.float64)
        tail = 0.5 * self.abs_sf(np.abs(x), variance)
        if self.kind == "rademacher":
            sigma = self._sigma(variance)
            return np.where(x < -sigma, 0.0, np.where(x < sigma, 0.5, 1.0))
        return np.where(x < 0, tail, 1.0 - tail)

    def abs_moment(self, p: float, variance=None) -> float:
        sigma = float(self._sigma(variance))
        return sigma ** p * self.std_abs_moment(p)

    def std_draw(self, stream: _rng.Stream) -> np.ndarray:
        """Unit-variance draws, one per key of ``stream`` (flat)."""
        if self.kind == "student_t":
            return self._bailey_polar(stream)
        bits = stream.words(0)
        return _rng.bits_to_sign(bits) * self.std_abs_isf(_rng.bits_to_uniform(bits))

    def _bailey_polar(self, stream):
        # Bailey's polar method; rejected keys retry on their next pair of words
        nu = self.tail_index
        out = np.empty(stream.size)
        pending = np.arange(stream.size)
        k = 0
        while pending.size:
            u = 2.0 * _rng.bits_to_uniform(stream.words(2 * k, pending)) - 1.0
            v = 2.0 * _rng.bits_to_uniform(stream.words(2 * k + 1, pending)) - 1.0
            w = u * u + v * v
            ok = (w <= 1.0) & (w > 0.0)
            wk = w[ok]
            out[pending[ok]] = u[ok] * np.sqrt(nu * np.expm1(-(2.0 / nu) * np.log(wk)) / wk)
            pending = pending[~ok]
            k += 1
        return out * self._scale

    def draw(self, stream: _rng.Stream, variance=None) -> np.ndarray:
        return (self.std_draw(stream) * np.broadcast_to(self._sigma(variance), stream.shape).ravel()
                ).reshape(stream.shape)

    def sample(self, size, rng: np.random.Generator, variance=None):
        keys = rng.integers(0, 2 ** 63, size=size, dtype=np.int64)
        return self.draw(_rng.Stream(keys, _rng.TAG_AUX, 0, 0), variance)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tail_index": self.tail_index,
                "target_variance": self.target_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "EntryLaw":
        return cls(d["kind"], d.get("tail_index"), float(d.get("target_variance", 1.0)))


# --------------------------------------------------------------------------
# variance profiles


@dataclass(eq=False)
class VarianceProfile:
    n: int
    s: np.ndarray
    eps: float
    c1: float = DEFAULT_C1
    C1: float = DEFAULT_BIG_C1
    C2: float = DEFAULT_C2
    kind: str = "custom"
    amplitude: float = 0.0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.s.shape != (self.n, self.n):
            raise ValueError(f"s has shape {self.s.shape}, expected ({self.n}, {self.n})")

    @property
    def t(self) -> np.ndarray:
        """Row-sum defects ``t_i = sum_j s_ij - 1``."""
        return self.s.sum(axis=1) - 1.0

    @property
    def r(self) -> float:
        """``N min_ij s_ij``."""
        return float(self.n * self.s.min())

    def validate(self) -> "VarianceProfile":
        if not np.array_equal(self.s, self.s.T):
            raise ConstraintViolationError("variance profile is not exactly symmetric")
        if not (0 < self.eps <= 1):
            raise ConstraintViolationError(f"eps must lie in (0, 1], got {self.eps}")
        if not (0 < self.c1 < 1 < self.C1) or not self.C2 > 1:
            raise ConstraintViolationError("constants must satisfy 0 < c1 < 1 < C1 and C2 > 1")
        ns = self.n * self.s
        bad = np.argwhere(~((ns > self.c1) & (ns < self.C1)))
        if bad.size:
            i, j = (int(x) for x in bad[0])
            raise ConstraintViolationError(
                f"N*s[{i},{j}] = {ns[i, j]:.6g} outside ({self.c1}, {self.C1})", index=(i, j)
            )
        bound = self.C1 * self.n ** (-self.eps)
        rows = np.flatnonzero(~(np.abs(self.t) < bound))
        if rows.size:
            i = int(rows[0])
            raise ConstraintViolationError(
                f"|t_{i}| = {abs(self.t[i]):.3g} >= C1 N^-eps = {bound:.3g}", index=(i,)
            )
        return self

    def to_dict(self, embed: bool = False) -> dict:
        d = {"n": self.n, "eps": self.eps, "c1": self.c1, "C1": self.C1, "C2": self.C2,
             "kind": self.kind, "amplitude": self.amplitude}
        if embed or self.kind == "custom":
            d["s"] = encode_matrix(self.s)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VarianceProfile":
        consts = {k: d[k] for k in ("c1", "C1", "C2") if k in d}
        if "s" in d:
            return cls(int(d["n"]), decode_matrix(d["s"]), float(d["eps"]), kind=d.get("kind", "custom"),
                       amplitude=float(d.get("amplitude", 0.0)), **consts)
        if d["kind"] == "goe":
            return goe_profile(int(d["n"]))
        return make_profile(int(d["n"]), d["kind"], float(d["eps"]), float(d.get("amplitude", 0.0)),
                            **consts)


def _symmetric_scaling(kernel, tol=1e-12, max_iter=10_000):
    n = kernel.shape[0]
    d = np.ones(n) / math.sqrt(max(kernel.sum(axis=1).mean(), 1e-300))
    for _ in range(max_iter):
        d = np.sqrt(d / (kernel @ d))
        s = d[:, None] * kernel * d[None, :]
        s = np.triu(s) + np.triu(s, 1).T
        if np.max(np.abs(s.sum(axis=1) - 1.0)) <= tol:
            return s
    raise ProfileConstructionError(
        f"symmetric row normalisation did not reach tolerance {tol} in {max_iter} iterations"
    )


def make_profile(n: int, kind: str = "flat", eps: float = 0.5, amplitude: float = 0.0, *,
                 c1: float = DEFAULT_C1, C1: float = DEFAULT_BIG_C1, C2: float = DEFAULT_C2,
                 max_iter: int = 10_000) -> VarianceProfile:
    """Build and validate a variance profile.

    ``flat`` gives ``s_ij = 1/n``. ``sinkhorn_periodic`` starts from
    ``1 + amplitude cos(2 pi (i + j) / n)`` (1-based indices) and rescales it
    symmetrically until every row sums to one within 1e-12.
    ``detuned_periodic`` keeps nonzero row defects
    ``t_i = (amplitude/2) N^-eps cos(2 pi i / n)`` for exercising the
    ``m_sc t_i`` term.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if kind == "flat":
        s = np.full((n, n), 1.0 / n)
    elif kind == "sinkhorn_periodic":
        if not (0 <= amplitude < 1):
            raise ValueError("amplitude must lie in [0, 1)")
        idx = np.arange(1, n + 1)
        kernel = 1.0 + amplitude * np.cos(2.0 * math.pi * (idx[:, None] + idx[None, :]) / n)
        s = _symmetric_scaling(kernel, max_iter=max_iter)
    elif kind == "detuned_periodic":
        if not (0 <= amplitude < 1):
            raise ValueError("amplitude must lie in [0, 1)")
        c = np.cos(2.0 * math.pi * np.arange(1, n + 1) / n) if n > 1 else np.zeros(1)
        delta = 0.5 * amplitude * n ** (-eps) * c
        s = (1.0 + delta[:, None] + delta[None, :]) / n
        s = np.triu(s) + np.triu(s, 1).T
    else:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    prof = VarianceProfile(n, s, eps, c1, C1, C2, kind=kind, amplitude=amplitude)
    return prof.validate()


def goe_profile(n: int, eps: float = 0.5) -> VarianceProfile:
    """Variance profile of GOE_N: 2/N on the diagonal, 1/N elsewhere.

    ``N s_ii = 2`` sits on the default ``C1 = 2``, so the GOE profile uses
    ``C1 = 3``.
    """
    s = np.full((n, n), 1.0 / n)
    np.fill_diagonal(s, 2.0 / n)
    return VarianceProfile(n, s, eps, DEFAULT_C1, 3.0, DEFAULT_C2, kind="goe").validate()


# --------------------------------------------------------------------------
# samples


@dataclass(eq=False)
class WignerSample:
    profile: VarianceProfile
    entries: np.ndarray
    seed: int
    law: EntryLaw
    label: Optional[object] = None
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.profile.n

    def to_dict(self, embed_matrix: bool = False) -> dict:
        d = {
            "schema": "rmtlab.sample/1",
            "seed": int(self.seed),
            "time": self.time,
            "law": self.law.to_dict(),
            "profile": self.profile.to_dict(),
            "ensemble": self.meta.get("ensemble", "wigner"),
        }
        if embed_matrix:
            d["matrix"] = encode_matrix(self.entries)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WignerSample":
        profile = VarianceProfile.from_dict(d["profile"])
        law = EntryLaw.from_dict(d["law"])
        if "matrix" in d:
            entries = decode_matrix(d["matrix"])
            out = cls(profile, entries, int(d["seed"]), law, time=float(d.get("time", 0.0)))
            out.meta["ensemble"] = d.get("ensemble", "wigner")
            return out
        if d.get("ensemble") == "goe":
            return sample_goe(profile.n, int(d["seed"]))
        if d.get("time", 0.0):
            raise ValueError("flow checkpoints cannot be regenerated from a seed; embed the matrix")
        return sample_matrix(profile, law, int(d["seed"]))


def encode_matrix(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"encoding": "base64-f64-rowmajor", "shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_matrix(d: dict) -> np.ndarray:
    if d.get("encoding") != "base64-f64-rowmajor":
        raise ValueError(f"unsupported matrix encoding {d.get('encoding')!r}")
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def entry_draws(law: EntryLaw, variance, seed, i, j, tag=_rng.TAG_ENTRY):
    """Value of entry ``(i, j)`` (``i <= j``) for each seed, without building matrices.

    ``sample_matrix(profile, law, s).entries[i, j] == entry_draws(law, profile.s[i, j], s, i, j)``.
    """
    return law.draw(_rng.Stream(seed, tag, i, j), variance)


def sample_matrix(profile: VarianceProfile, law: EntryLaw, seed: int) -> WignerSample:
    """Draw one generalized Wigner matrix with ``Var h_ij = s_ij``."""
    law.check_moment_order(profile.eps)
    n = profile.n
    rows, cols = _rng.upper_indices(n)
    values = law.draw(_rng.Stream(seed, _rng.TAG_ENTRY, rows, cols), profile.s[rows, cols])
    return WignerSample(profile, _rng.symmetric_from_upper(n, rows, cols, values), int(seed), law)


def sample_goe(n: int, seed: int) -> WignerSample:
    """GOE_N: Gaussian entries, variance 2/N on the diagonal and 1/N off it."""
    if n < 1:
        raise ValueError("n must be >= 1")
    profile = goe_profile(n)
    rows, cols = _rng.upper_indices(n)
    law = EntryLaw("gaussian")
    values = law.draw(_rng.Stream(seed, _rng.TAG_GOE, rows, cols), profile.s[rows, cols])
    out = WignerSample(profile, _rng.symmetric_from_upper(n, rows, cols, values), int(seed), law)
    out.meta["ensemble"] = "goe"
    return out


# --------------------------------------------------------------------------
# semicircle


def semicircle_density(x):
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) < 2.0
    out = np.where(inside, np.sqrt(np.clip(4.0 - x * x, 0.0, None)), 0.0) / (2.0 * math.pi)
    return out if out.ndim else float(out)


def semicircle_cdf(x):
    x = np.clip(np.asarray(x, dtype=np.float64), -2.0, 2.0)
    out = 0.5 + (x * np.sqrt(4.0 - x * x) / 4.0 + np.arcsin(x / 2.0)) / math.pi
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def ks_to_semicircle(eigenvalues) -> float:
    """Kolmogorov distance between an empirical spectrum and the semicircle CDF."""
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    n = lam.size
    cdf = semicircle_cdf(lam)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))
