"""Empirical checks of the weak local semicircle law, entrywise resolvent bounds,
eigenvector delocalization and the multiscale eta ladder.

All per-point work runs off one eigendecomposition of the sample (see
:class:`rmtlab.resolvent.SpectralResolvent`); the dense solver in
:mod:`rmtlab.resolvent` is the reference used in the tests.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import bounds_lab
from .errors import EmptyDomainError, UndefinedThresholdError
from .labels import ABLabel, classify, deviant_cap
from .resolvent import SpectralResolvent, gamma_from_diagonal, m_sc

CSV_COLUMNS = ("E", "eta", "abs_mN_minus_msc", "max_typical_entry_err", "max_abs_G", "deviant_count")

# fit grids for the envelope C (log N)^xi ((N eta)^-1/2 + N^(-c eps))
XI_GRID = (0.0, 0.5, 1.0, 1.5, 2.0)
C_EXP_GRID = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)


def phi_n(n: int) -> float:
    """``(log N)^(8 log log N) / N``, the smallest admissible ``eta``."""
    if n <= math.e:
        raise UndefinedThresholdError(f"log log N needs N > e, got {n}")
    ln = math.log(n)
    return math.exp(8.0 * math.log(ln) * math.log(ln)) / n


def ladder_factor(n: int) -> float:
    return 1.0 + math.log(n) ** -2


def rung_count(n: int, eta_min: float, eta_max: float = 5.0) -> int:
    """Number of rungs ``eta_max f^-k`` strictly above ``eta_min``."""
    f = ladder_factor(n)
    return int(math.ceil(math.log(eta_max / eta_min) / math.log(f) - 1e-12))


@dataclass
class SpectralDomainGrid:
    n: int
    kappa: float
    energies: np.ndarray
    etas: np.ndarray
    ladder_factor: float
    eta_min: float
    mode: str = "explicit"

    @property
    def points(self) -> np.ndarray:
        """All ``E + i eta`` (energy-major), as a flat complex array."""
        return (self.energies[:, None] + 1j * self.etas[None, :]).ravel()

    def __len__(self) -> int:
        return self.energies.size * self.etas.size

    def to_dict(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "energies": self.energies.tolist(),
                "eta_max": float(self.etas[0]), "eta_min": self.eta_min, "rungs": int(self.etas.size),
                "ladder_factor": self.ladder_factor, "mode": self.mode}


def build_grid(n: int, kappa: float = 0.5, energy_count: int = 5, eta_min_mode: str = "explicit",
               eta_min: Optional[float] = None, eta_max: float = 5.0,
               factor: Optional[float] = None) -> SpectralDomainGrid:
    """Energies evenly spread on ``[kappa - 2, 2 - kappa]`` and a geometric eta ladder.

    ``eta`` runs down from ``eta_max`` by the factor ``1 + (log N)^-2`` and
    keeps every rung strictly above ``eta_min``. In ``phi_N`` mode
    ``eta_min`` defaults to ``phi_N`` and may not go below it; since
    ``phi_N`` exceeds 5 for every ``N`` below about ``10^11``, that mode
    raises :class:`EmptyDomainError` at desk scale. ``explicit`` mode takes
    ``eta_min`` as given (default ``20/N``). ``factor`` overrides the ladder
    factor, which is useful for coarse grids.
    """
    if not (0 < kappa < 1):
        raise ValueError("kappa must lie in (0, 1)")
    if energy_count < 1:
        raise ValueError("energy_count must be >= 1")
    if eta_min_mode == "phi_N":
        phi = phi_n(n)
        if eta_min is not None and eta_min < phi:
            raise ValueError(f"eta_min = {eta_min} is below phi_N = {phi:.6g}")
        eta_min = phi if eta_min is None else eta_min
        if eta_min >= eta_max:
            raise EmptyDomainError(f"phi_N = {phi:.6g} >= eta_max = {eta_max}: the spectral domain is empty")
    elif eta_min_mode == "explicit":
        eta_min = 20.0 / n if eta_min is None else float(eta_min)
        if not (0 < eta_min < eta_max):
            raise ValueError("need 0 < eta_min < eta_max")
    else:
        raise ValueError(f"unknown eta_min_mode {eta_min_mode!r}")
    f = ladder_factor(n) if factor is None else float(factor)
    if not f > 1:
        raise ValueError("ladder factor must exceed 1")
    k = rung_count(n, eta_min, eta_max) if factor is None else int(
        math.ceil(math.log(eta_max / eta_min) / math.log(f) - 1e-12))
    etas = eta_max * f ** -np.arange(k, dtype=np.float64)
    etas = etas[etas > eta_min]
    energies = (np.array([0.0]) if energy_count == 1
                else np.linspace(kappa - 2.0, 2.0 - kappa, energy_count))
    return SpectralDomainGrid(n, kappa, energies, etas, f, float(eta_min), eta_min_mode)


# --------------------------------------------------------------------------
# envelopes


@dataclass
class EnvelopeConstants:
    """``C (log N)^xi ((N eta)^-1/2 + N^(-c eps))``."""

    C: float
    xi: float
    c: float

    def __call__(self, n, eta, eps):
        n = np.asarray(n, dtype=np.float64)
        return self.C * np.log(n) ** self.xi * ((n * eta) ** -0.5 + n ** (-self.c * eps))

    def to_dict(self) -> dict:
        return {"C": self.C, "xi": self.xi, "c": self.c}


def fit_envelope(n, eta, eps, err, xi_grid=XI_GRID, c_grid=C_EXP_GRID) -> EnvelopeConstants:
    """Tightest envelope covering every calibration point.

    For each ``(xi, c)`` on the grid, ``C`` is the smallest value covering all
    points; the pair with the smallest mean log envelope wins.
    """
    n, eta, eps, err = (np.asarray(a, dtype=np.float64) for a in np.broadcast_arrays(n, eta, eps, err))
    best = None
    for xi in xi_grid:
        for c in c_grid:
            shape = EnvelopeConstants(1.0, xi, c)(n, eta, eps)
            C = float(np.max(err / shape))
            score = float(np.mean(np.log(C * shape)))
            if best is None or score < best[0]:
                best = (score, EnvelopeConstants(C, xi, c))
    return best[1]


def ladder_envelope(C: float, xi: float, n: int, eta, eps: float):
    """``C (log N)^(3 xi) ((N eta)^-1/2 + N^(-eps/20))``."""
    return C * math.log(n) ** (3.0 * xi) * ((n * np.asarray(eta)) ** -0.5 + n ** (-eps / 20.0))


def lipschitz_bound(z1, z2) -> float:
    """``|m_N(z1) - m_N(z2)| <= |z1 - z2| / (Im z1 Im z2)`` for any symmetric matrix."""
    return abs(z1 - z2) / (z1.imag * z2.imag)


# --------------------------------------------------------------------------
# local law


@dataclass
class LocalLawReport:
    n: int
    eps: float
    rows: list
    constants: Optional[EnvelopeConstants] = None
    coverage: Optional[float] = None
    passed: Optional[bool] = None
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def to_csv(self, extra_columns: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        cols = list(CSV_COLUMNS) + [c for c in extra_columns if c not in CSV_COLUMNS]
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
        return buf.getvalue()

    def summary(self) -> dict:
        err = self.column("abs_mN_minus_msc")
        return {"n": self.n, "eps": self.eps, "seed": self.seed, "points": len(self.rows),
                "max_abs_mN_minus_msc": float(err.max()) if err.size else None,
                "constants": self.constants.to_dict() if self.constants else None,
                "coverage": self.coverage, "passed": self.passed, **self.meta}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _spectral(sample, spectral):
    return SpectralResolvent.of(sample) if spectral is None else spectral


def verify_local_law(sample, grid: SpectralDomainGrid, constants: Optional[EnvelopeConstants] = None,
                     label: Optional[ABLabel] = None, spectral: Optional[SpectralResolvent] = None,
                     coverage_required: float = 0.99, eps: Optional[float] = None,
                     entry_points: int = 0, diagonal: bool = True) -> LocalLawReport:
    """Per-grid-point ``|m_N - m_sc|`` plus diagonal resolvent diagnostics.

    ``max_typical_entry_err`` and ``max_abs_G`` use the diagonal of ``G`` at
    every point; the full matrix (off-diagonal entries included) is formed
    only at ``entry_points`` evenly spaced grid points, which are marked
    ``entry_scope = full``. With ``constants``, the verdict is coverage of the
    envelope at ``>= coverage_required`` of the points. ``diagonal=False``
    skips the ``G_ii`` columns, which dominate the cost at large ``N``.
    """
    n = getattr(sample, "n", None) or np.asarray(sample).shape[0]
    if grid.n != n:
        raise ValueError(f"grid built for N = {grid.n}, sample has N = {n}")
    eps = eps if eps is not None else getattr(getattr(sample, "profile", None), "eps", None)
    sr = _spectral(sample, spectral)
    z = grid.points
    mn = sr.m_N(z)
    ms = m_sc(z)
    diag = sr.diag(z) if diagonal else None
    typical = np.arange(n)
    dev_count = 0
    if label is not None:
        cls = classify(label)
        typical, dev_count = cls.typical, int(cls.deviant.size)
    full_at = set(np.linspace(0, z.size - 1, entry_points).round().astype(int).tolist()) if entry_points else set()
    rows = []
    for k, zk in enumerate(z):
        scope = "diag" if diagonal else "none"
        typ_err = max_abs = None
        if k in full_at:
            g = sr.full(zk)
            gt = g[typical] - np.where(typical[:, None] == np.arange(n)[None, :], ms[k], 0.0)
            typ_err = float(np.max(np.abs(gt), initial=0.0))
            max_abs = float(np.max(np.abs(g)))
            scope = "full"
        elif diagonal:
            dk = diag[:, k]
            typ_err = float(np.max(np.abs(dk[typical] - ms[k]), initial=0.0))
            max_abs = float(np.max(np.abs(dk)))
        rows.append({"E": float(zk.real), "eta": float(zk.imag), "abs_mN_minus_msc": float(abs(mn[k] - ms[k])),
                     "max_typical_entry_err": typ_err, "max_abs_G": max_abs, "deviant_count": dev_count,
                     "entry_scope": scope})
    rep = LocalLawReport(n, eps, rows, constants, seed=getattr(sample, "seed", None))
    if constants is not None:
        err = rep.column("abs_mN_minus_msc")
        env = constants(n, rep.column("eta"), eps)
        rep.coverage = float(np.mean(err <= env))
        rep.passed = rep.coverage >= coverage_required
    return rep


# --------------------------------------------------------------------------
# entrywise split


def verify_entrywise(sample, label: ABLabel, z_points, constants: Optional[EnvelopeConstants] = None,
                     bound_G: Optional[float] = None, spectral: Optional[SpectralResolvent] = None) -> dict:
    """Boundedness of all entries, typical-row accuracy and the deviant count.

    For each ``z``: ``max_abs_G`` over all pairs, ``max_abs_G_deviant`` over
    deviant x deviant pairs, and for typical ``i`` (resp. deviant ``i``) the
    row error ``max_j |G_ij - 1_{i=j} m_sc|``. Row errors are summarised by
    their maximum and their median; the typical set is much larger than the
    deviant set, so only the medians compare like with like.
    """
    n = label.n
    sr = _spectral(sample, spectral)
    cls = classify(label)
    cap = deviant_cap(n, label.eps)
    eps = label.eps
    rows = []
    for z in np.atleast_1d(np.asarray(z_points, dtype=np.complex128)):
        g = sr.full(z)
        ms = m_sc(z)
        err = np.abs(g - ms * np.eye(n))
        row_err = err.max(axis=1)
        dd = cls.deviant
        r = {"E": float(z.real), "eta": float(z.imag),
             "max_abs_G": float(np.abs(g).max()),
             "max_abs_G_deviant": float(np.abs(g[np.ix_(dd, dd)]).max()) if dd.size else 0.0,
             "max_typical_entry_err": float(row_err[cls.typical].max()) if cls.typical.size else 0.0,
             "max_deviant_entry_err": float(row_err[dd].max()) if dd.size else 0.0,
             "median_typical_entry_err": float(np.median(row_err[cls.typical])) if cls.typical.size else 0.0,
             "median_deviant_entry_err": float(np.median(row_err[dd])) if dd.size else 0.0}
        if constants is not None:
            r["typical_envelope"] = float(constants(n, z.imag, eps))
            r["typical_covered"] = bool(r["max_typical_entry_err"] <= r["typical_envelope"])
        if bound_G is not None:
            r["bounded"] = bool(r["max_abs_G"] < bound_G)
        rows.append(r)
    return {"n": n, "eps": eps, "deviant_count": int(cls.deviant.size), "deviant_cap": cap,
            "deviant_ok": bool(cls.deviant.size < cap), "typical_count": int(cls.typical.size),
            "all_typical": bool(cls.deviant.size == 0), "points": rows}


# --------------------------------------------------------------------------
# delocalization


def verify_delocalization(sample, kappa: float = 0.5, xi: float = 0.5, C: Optional[float] = None,
                          spectral: Optional[SpectralResolvent] = None) -> dict:
    """``sqrt(N) ||v||_inf / (log N)^xi`` for bulk eigenvectors and for the top edge.

    Returns the bulk maximum, the statistic of the eigenvector of the largest
    eigenvalue, and (with ``C``) whether the bulk maximum stays below ``C``.
    """
    sr = _spectral(sample, spectral)
    n = sr.n
    stat = math.sqrt(n) * np.max(np.abs(sr.V), axis=0)
    scale = math.log(n) ** xi if n > 1 else 1.0
    bulk = (sr.lam >= kappa - 2.0) & (sr.lam <= 2.0 - kappa)
    bulk_stat = float(stat[bulk].max() / scale) if bulk.any() else float("nan")
    out = {"n": n, "kappa": kappa, "xi": xi, "bulk_count": int(bulk.sum()), "bulk_max": bulk_stat,
           "edge_top": float(stat[-1] / scale), "edge_bottom": float(stat[0] / scale),
           "top_eigenvalue": float(sr.lam[-1])}
    if C is not None:
        out["C"] = C
        out["passed"] = bool(bulk.any() and bulk_stat < C)
    return out


# --------------------------------------------------------------------------
# multiscale ladder


def multiscale_ladder_diagnostic(sample, label: ABLabel, grid: SpectralDomainGrid, C: float, xi: float,
                                 energy: Optional[float] = None, spectral: Optional[SpectralResolvent] = None,
                                 s: Optional[np.ndarray] = None) -> dict:
    """Walk the eta ladder from the top rung down at a fixed energy.

    Per rung: ``max_{i typical} |v_i|``, ``max_i |Gamma_i|`` (all indices,
    then typical and deviant separately), the envelope
    ``C (log N)^(3 xi) ((N eta)^-1/2 + N^(-eps/20))`` and whether it covers
    the typical ``|v_i|``. Consecutive rungs are checked against the
    diagonal continuity inequalities from :mod:`rmtlab.bounds_lab`.
    """
    sr = _spectral(sample, spectral)
    n = sr.n
    eps = label.eps
    E = float(grid.energies[grid.energies.size // 2]) if energy is None else float(energy)
    s = sample.profile.s if s is None else s
    cls = classify(label)
    z = E + 1j * grid.etas
    diag = sr.diag(z)
    ms = m_sc(z)
    rows = []
    for k in range(z.size):
        v = diag[:, k] - ms[k]
        gam = np.abs(gamma_from_diagonal(diag[:, k], z[k], s))
        vt = float(np.max(np.abs(v[cls.typical]), initial=0.0))
        env = float(ladder_envelope(C, xi, n, grid.etas[k], eps))
        r = {"rung": k, "E": E, "eta": float(grid.etas[k]), "max_typical_v": vt,
             "max_gamma": float(gam.max()),
             "max_typical_gamma": float(np.max(gam[cls.typical], initial=0.0)),
             "max_deviant_gamma": float(np.max(gam[cls.deviant], initial=0.0)),
             "envelope": env, "covered": bool(vt <= env)}
        if k > 0:
            eta_lo, eta_hi = grid.etas[k], grid.etas[k - 1]
            cc = bounds_lab.continuity_from_frames(diag[:, k], diag[:, k - 1], E, eta_lo, eta_hi - eta_lo)
            r["continuity_violations"] = cc.violations + cc.ratio_violations
        else:
            r["continuity_violations"] = 0
        rows.append(r)
    return {"n": n, "E": E, "rungs": len(rows), "all_covered": all(r["covered"] for r in rows),
            "continuity_violations": int(sum(r["continuity_violations"] for r in rows)), "rows": rows}
