"""Matrix Ornstein-Uhlenbeck flow, Gaussian-divisible decomposition and
classical eigenvalue locations (semicircle and its free convolutions).

Each entry follows ``dh = N^-1/2 dB - (2 N s_ij)^-1 h dt``; its exact
transition over a step ``dt`` is

    h -> exp(-dt/(2 N s)) h + Normal(0, s (1 - exp(-dt/(N s)))),

so second moments ``s_ij`` are preserved at every time.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from . import _rng
from .ensemble import EntryLaw, VarianceProfile, WignerSample, sample_goe, semicircle_cdf
from .errors import ConvergenceError

_GAUSS = EntryLaw("gaussian")


@dataclass(eq=False)
class FlowState:
    t: float
    matrix: WignerSample
    profile: VarianceProfile

    @classmethod
    def start(cls, sample: WignerSample) -> "FlowState":
        return cls(float(sample.time), sample, sample.profile)


def ou_transition(h, s, n: int, dt: float, noise):
    """Exact OU step given standard normal ``noise`` (same shape as ``h``)."""
    ns = n * np.asarray(s, dtype=np.float64)
    decay = np.exp(-dt / (2.0 * ns))
    var = np.asarray(s) * -np.expm1(-dt / ns)
    return decay * h + np.sqrt(var) * noise


def ou_evolve(state: FlowState, dt: float, seed: int) -> FlowState:
    """Advance every upper-triangular entry by the exact OU kernel; symmetric output."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    prof = state.profile
    n = prof.n
    rows, cols = _rng.upper_indices(n)
    noise = _GAUSS.draw(_rng.Stream(seed, _rng.TAG_OU, rows, cols))
    h = state.matrix.entries[rows, cols]
    new = ou_transition(h, prof.s[rows, cols], n, dt, noise)
    t = state.t + dt
    out = WignerSample(prof, _rng.symmetric_from_upper(n, rows, cols, new), state.matrix.seed,
                       state.matrix.law, time=t)
    out.meta.update(state.matrix.meta)
    out.meta["ensemble"] = "flow"
    out.meta.setdefault("flow_seeds", [])
    out.meta["flow_seeds"] = list(out.meta["flow_seeds"]) + [int(seed)]
    return FlowState(t, out, prof)


def ou_entry_draws(h0, s: float, n: int, dt: float, seeds, i: int, j: int):
    """One entry evolved by ``dt`` for many seeds; matches :func:`ou_evolve` entrywise."""
    noise = _GAUSS.draw(_rng.Stream(np.asarray(seeds), _rng.TAG_OU, i, j))
    return ou_transition(np.asarray(h0, dtype=np.float64), s, n, dt, noise)


# --------------------------------------------------------------------------
# Gaussian-divisible decomposition


def divisible_s(r: float, t: float) -> float:
    """Size of the GOE component: ``r (1 - exp(-t/r)) / 2``."""
    return -r * math.expm1(-t / r) / 2.0


def h1_noise_variance(profile: VarianceProfile, t: float) -> np.ndarray:
    """Entrywise variance of the Gaussian noise inside ``H_t^(1)``.

    ``[N s_ij (1 - e^{-t/(N s_ij)}) - r ((1 + 1_{i=j})/2)(1 - e^{-t/r})] / N``.
    """
    n = profile.n
    ns = n * profile.s
    r = profile.r
    delta = np.eye(n)
    return (-ns * np.expm1(-t / ns) + r * (1.0 + delta) / 2.0 * math.expm1(-t / r)) / n


@dataclass(eq=False)
class DivisibleDecomposition:
    t: float
    h1: WignerSample
    s: float
    r: float
    goe: Optional[WignerSample] = None

    def compose(self, goe_seed: Optional[int] = None) -> WignerSample:
        """``H_t^(1) + sqrt(s) GOE``."""
        goe = self.goe if goe_seed is None else sample_goe(self.h1.n, goe_seed)
        if goe is None:
            raise ValueError("no GOE part attached; pass goe_seed")
        out = WignerSample(self.h1.profile, self.h1.entries + math.sqrt(self.s) * goe.entries,
                           self.h1.seed, self.h1.law, time=self.t)
        out.meta["ensemble"] = "split"
        return out


def gaussian_divisible_split(sample: WignerSample, t: float, seed: int,
                             goe_seed: Optional[int] = None) -> DivisibleDecomposition:
    """Write the OU-evolved matrix, in law, as ``H_t^(1) + sqrt(s) GOE``.

    ``h1_ij = e^{-t/(2 N s_ij)} h_ij + Normal(0, noise_ij)`` with the noise
    variance of :func:`h1_noise_variance`; ``s = r (1 - e^{-t/r})/2`` with
    ``r = N min s_ij``. Second moments then add up to ``s_ij`` exactly.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    prof = sample.profile
    n = prof.n
    var = h1_noise_variance(prof, t)
    tol = 1e-15 * np.max(prof.s)
    if np.any(var < -tol):
        i, j = (int(x) for x in np.argwhere(var < -tol)[0])
        raise ValueError(f"negative h1 noise variance {var[i, j]:.3g} at ({i}, {j}); "
                         "the profile does not satisfy r = N min s_ij")
    var = np.clip(var, 0.0, None)
    rows, cols = _rng.upper_indices(n)
    noise = _GAUSS.draw(_rng.Stream(seed, _rng.TAG_SPLIT, rows, cols))
    h = sample.entries[rows, cols]
    ns = n * prof.s[rows, cols]
    new = np.exp(-t / (2.0 * ns)) * h + np.sqrt(var[rows, cols]) * noise
    h1 = WignerSample(prof, _rng.symmetric_from_upper(n, rows, cols, new), sample.seed, sample.law, time=t)
    h1.meta["ensemble"] = "h1"
    r = prof.r
    goe = sample_goe(n, goe_seed) if goe_seed is not None else None
    return DivisibleDecomposition(t, h1, divisible_s(r, t), r, goe)


# --------------------------------------------------------------------------
# classical locations


@dataclass
class ClassicalLocations:
    gamma: np.ndarray
    gamma_s: Optional[np.ndarray] = None
    s: Optional[float] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "gamma", "gamma_s"])
        for k, g in enumerate(self.gamma, start=1):
            gs = "" if self.gamma_s is None else repr(float(self.gamma_s[k - 1]))
            w.writerow([k, repr(float(g)), gs])
        return buf.getvalue()


def classical_locations(n: int, gamma_s: Optional[np.ndarray] = None, s: Optional[float] = None,
                        xtol: float = 1e-14) -> ClassicalLocations:
    """``gamma_i`` solving ``F_sc(gamma_i) = i/N`` for ``i = 1..N`` by bracketed root finding."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(n)
    for i in range(1, n + 1):
        level = i / n
        if level >= 1.0:
            out[i - 1] = 2.0
            continue
        out[i - 1] = optimize.brentq(lambda x: semicircle_cdf(x) - level, -2.0, 2.0, xtol=xtol, rtol=1e-15)
    return ClassicalLocations(out, gamma_s, s)


# --------------------------------------------------------------------------
# free convolution with a semicircle


@dataclass
class FreeConvolution:
    energies: np.ndarray
    m: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    eta: float
    s: float
    max_residual: float
    mass: float

    def quantiles(self, levels, level_tol: Optional[float] = None) -> np.ndarray:
        """Left-continuous inverse CDF, ``inf{x : F(x) >= level - level_tol}``.

        ``level_tol`` absorbs the mass that the finite ``eta`` smears into
        spectral gaps and the quadrature error at square-root edges, so
        quantiles at the boundary between separated components (and at
        level 1) land on the component edge. The default is twice the
        measured mass defect ``|1 - mass|``, and at least ``1e-5``.
        """
        if level_tol is None:
            level_tol = max(1e-5, 2.0 * abs(1.0 - self.mass))
        levels = np.atleast_1d(np.asarray(levels, dtype=np.float64))
        c = np.maximum.accumulate(self.cdf)
        E = self.energies
        target = np.clip(levels - level_tol, 0.0, None)
        k = np.searchsorted(c, target, side="left")
        k = np.clip(k, 1, c.size - 1)
        c0, c1 = c[k - 1], c[k]
        w = np.where(c1 > c0, (target - c0) / np.where(c1 > c0, c1 - c0, 1.0), 1.0)
        return E[k - 1] + np.clip(w, 0.0, 1.0) * (E[k] - E[k - 1])


def _m_base(lam, w):
    d = 1.0 / (lam[None, :] - w[:, None])
    return d.mean(axis=1), (d * d).mean(axis=1)


def solve_free_convolution(base_spectrum, s: float, z, tol: float = 1e-12, max_iter: int = 200,
                           eta_start: float = 10.0, steps: int = 12) -> np.ndarray:
    """Solve ``m = m_base(z + s m)`` for each ``z`` by damped Newton with eta continuation.

    Starting high in the upper half plane (where ``m ~ -1/z``), eta is
    lowered geometrically to the target, reusing the previous solution as
    the initial guess.
    """
    lam = np.asarray(base_spectrum, dtype=np.float64)
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if not s > 0:
        raise ValueError("s must be positive")
    if np.any(z.imag <= 0):
        raise ValueError("need Im z > 0")
    eta_t = z.imag
    levels = np.exp(np.linspace(0.0, 1.0, steps)[:, None] * (np.log(eta_t) - math.log(eta_start))[None, :]) * eta_start
    levels = np.maximum(levels, eta_t[None, :])
    zz = z.real + 1j * levels[0]
    m = -1.0 / zz
    for lev in levels:
        zz = z.real + 1j * lev
        m = _newton(lam, s, zz, m, tol, max_iter)
    return m


def _newton(lam, s, z, m, tol, max_iter):
    res = None
    for _ in range(max_iter):
        mb, dmb = _m_base(lam, z + s * m)
        f = m - mb
        res = np.abs(f)
        if np.all(res < tol * np.maximum(1.0, np.abs(m))):
            return m
        step = f / (1.0 - s * dmb)
        new = m - step
        # damping: keep Im m > 0 and do not let the residual grow
        bad = new.imag <= 0
        lam_step = np.ones(m.shape)
        for _k in range(30):
            if not bad.any():
                break
            lam_step[bad] *= 0.5
            new = m - lam_step * step
            bad = new.imag <= 0
        mb2, _ = _m_base(lam, z + s * new)
        worse = np.abs(new - mb2) > res
        if worse.any():
            half = m - 0.5 * lam_step * step
            new = np.where(worse & (half.imag > 0), half, new)
        m = new
    mb, _ = _m_base(lam, z + s * m)
    res = np.abs(m - mb)
    if np.all(res < tol * np.maximum(1.0, np.abs(m))):
        return m
    raise ConvergenceError(f"free convolution fixed point not reached (max residual {res.max():.3g})",
                           last_iterate=m)


def free_convolution_density(base_spectrum, s: float, eta: float = 1e-6, grid_points: Optional[int] = None,
                             margin: float = 0.05, tol: float = 1e-12) -> FreeConvolution:
    """Density ``Im m / pi`` of ``base (+) semicircle(s)`` on an energy grid at height ``eta``."""
    lam = np.asarray(base_spectrum, dtype=np.float64)
    r = 2.0 * math.sqrt(s)
    lo, hi = lam.min() - r - margin, lam.max() + r + margin
    if grid_points is None:
        step = min(0.002, math.sqrt(s) / 20.0)
        grid_points = int(math.ceil((hi - lo) / step)) + 1
    E = np.linspace(lo, hi, grid_points)
    m = solve_free_convolution(lam, s, E + 1j * eta, tol=tol)
    mb, _ = _m_base(lam, E + 1j * eta + s * m)
    resid = float(np.max(np.abs(m - mb)))
    rho = np.clip(m.imag, 0.0, None) / math.pi
    cdf = integrate.cumulative_trapezoid(rho, E, initial=0.0)
    mass = float(cdf[-1])
    return FreeConvolution(E, m, rho, cdf / mass, eta, s, resid, mass)


def free_convolution_quantiles(base_spectrum, s: float, n: int, eta: float = 1e-6,
                               grid_points: Optional[int] = None) -> np.ndarray:
    """``gamma_i^(s)`` for ``i = 1..n``: quantiles ``i/n`` of ``base (+) semicircle(s)``."""
    fc = free_convolution_density(base_spectrum, s, eta, grid_points)
    return fc.quantiles(np.arange(1, n + 1) / n)


# --------------------------------------------------------------------------
# flow equivalence checks


@dataclass
class MomentRow:
    t: float
    i: int
    j: int
    s: float
    mean_square: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.mean_square - self.s) / self.stderr if self.stderr > 0 else 0.0

    def to_dict(self) -> dict:
        return {"t": self.t, "i": self.i, "j": self.j, "s": self.s, "mean_square": self.mean_square,
                "stderr": self.stderr, "z": self.z, "passed": abs(self.z) < 3.0}


def second_moment_check(profile: VarianceProfile, law: EntryLaw, times=(0.01, 0.1, 1.0), seeds=None,
                        pairs=((0, 1), (0, 0))) -> list:
    """Monte Carlo ``E h_ij(t)^2`` for entries started from the ensemble law.

    Each seed draws ``h_ij(0)`` from ``law`` with variance ``s_ij`` and
    applies one exact OU step of length ``t``. The standard error is only
    meaningful when the law has a finite fourth moment.
    """
    from .ensemble import entry_draws
    seeds = np.arange(100_000) if seeds is None else np.asarray(seeds)
    n = profile.n
    rows = []
    for t in times:
        for (i, j) in pairs:
            i, j = min(i, j), max(i, j)
            s = float(profile.s[i, j])
            h0 = entry_draws(law, s, seeds, i, j)
            ht = ou_entry_draws(h0, s, n, float(t), seeds, i, j)
            sq = ht * ht
            rows.append(MomentRow(float(t), i, j, s, float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))))
    return rows


FUNCTIONALS = ("im_m_N_i", "median_eigenvalue", "max_abs_eigenvalue")


def spectral_functionals(eigenvalues) -> dict:
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    return {"im_m_N_i": float(np.mean(1.0 / (lam - 1j)).imag),
            "median_eigenvalue": float(np.median(lam)),
            "max_abs_eigenvalue": float(np.max(np.abs(lam)))}


def flow_pair(profile: VarianceProfile, law: EntryLaw, t: float, seed: int) -> tuple:
    """Spectral functionals of one OU replica and one split replica.

    Both start from independent ensemble draws: the OU side uses matrix seed
    ``2 seed``, the split side ``2 seed + 1``; the GOE part of the split uses
    its own seed stream.
    """
    from scipy import linalg
    from .ensemble import sample_matrix
    a = sample_matrix(profile, law, 2 * seed)
    ou = ou_evolve(FlowState.start(a), t, seed).matrix
    b = sample_matrix(profile, law, 2 * seed + 1)
    split = gaussian_divisible_split(b, t, seed, goe_seed=seed).compose()
    fa = spectral_functionals(linalg.eigvalsh(ou.entries, check_finite=False))
    fb = spectral_functionals(linalg.eigvalsh(split.entries, check_finite=False))
    return fa, fb


def equality_in_law(ou_values: dict, split_values: dict, alpha: float = 0.01) -> dict:
    """Two-sample KS test per functional; passes when every p-value is at least ``alpha``."""
    from scipy import stats
    out = {}
    for name in FUNCTIONALS:
        res = stats.ks_2samp(np.asarray(ou_values[name]), np.asarray(split_values[name]))
        out[name] = {"ks_distance": float(res.statistic), "p_value": float(res.pvalue),
                     "passed": bool(res.pvalue >= alpha)}
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict))
    return out
