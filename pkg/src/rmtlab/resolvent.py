"""Resolvents ``G(z) = (H - z)^-1``, minors, and the exact identities they satisfy.

Two evaluation routes are provided. :func:`resolvent` and :func:`minor` use
dense complex-symmetric solves and serve as the reference. The
:class:`SpectralResolvent` fast path reuses one eigendecomposition for many
spectral parameters and is checked against the reference in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import SingularStabilityError

# --------------------------------------------------------------------------
# semicircle Stieltjes transform


def m_sc(z):
    """Stieltjes transform of the semicircle law.

    The root of ``m^2 + z m + 1 = 0`` with positive imaginary part. The
    product of the two roots is 1, so the root of larger modulus is computed
    first and inverted, which avoids cancellation for large ``|z|``.

    Parameters
    ----------
    z : complex or array of complex
        Spectral parameter(s) with ``Im z > 0``.

    Returns
    -------
    complex or ndarray
    """
    zz = np.asarray(z, dtype=np.complex128)
    if np.any(zz.imag <= 0):
        raise ValueError("m_sc needs Im z > 0")
    sq = np.sqrt(zz * zz - 4.0)
    r1 = (-zz + sq) / 2.0
    r2 = (-zz - sq) / 2.0
    big = np.where(np.abs(r1) >= np.abs(r2), r1, r2)
    m = 1.0 / big
    # near the edges both roots have modulus ~1; keep the one in the upper half plane
    other = big
    m = np.where(m.imag > 0, m, other)
    return m if m.ndim else complex(m)


def _entries(sample) -> np.ndarray:
    h = getattr(sample, "entries", sample)
    return np.asarray(h, dtype=np.float64)


def _check_z(z) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"spectral parameter needs Im z > 0, got {z}")
    return z


# --------------------------------------------------------------------------
# frames


@dataclass(eq=False)
class ResolventFrame:
    """``G(z)`` of a (possibly reduced) symmetric matrix.

    ``indices`` lists the original row indices kept; it is ``arange(N)`` for
    a full resolvent and the complement of the removed set for a minor.
    """

    z: complex
    G: np.ndarray
    m_N: complex
    m_sc: complex
    indices: np.ndarray
    source: Optional[object] = field(default=None, repr=False)

    @property
    def eta(self) -> float:
        return self.z.imag

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def ward_error(self) -> float:
        """Max relative violation of ``sum_k |G_jk|^2 = Im G_jj / eta``."""
        lhs = np.sum(np.abs(self.G) ** 2, axis=1)
        rhs = self.G.diagonal().imag / self.eta
        return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))

    def bound_ok(self) -> bool:
        """Strict ``|G_ij| < 1/eta`` for every entry."""
        return bool(np.max(np.abs(self.G)) < 1.0 / self.eta)

    def trace_error(self) -> float:
        return abs(self.m_N - np.trace(self.G) / self.n)

    def msc_residual(self) -> float:
        return abs(self.m_sc ** 2 + self.z * self.m_sc + 1.0)

    def to_dict(self, entries: Sequence = (), full: bool = False, size_limit: int = 200) -> dict:
        """JSON view: ``m_N`` and ``diag(G)``; full ``G`` only when ``full`` and ``n <= size_limit``."""
        def c(x):
            return [float(np.real(x)), float(np.imag(x))]
        d = {"schema": "rmtlab.frame/1", "z": c(self.z), "m_N": c(self.m_N), "m_sc": c(self.m_sc),
             "indices": [int(i) for i in self.indices],
             "diag": [c(g) for g in self.G.diagonal()],
             "entries": [{"i": int(i), "j": int(j), "G": c(self.G[i, j])} for i, j in entries]}
        if full:
            if self.n > size_limit:
                raise ValueError(f"full G export of a {self.n}x{self.n} frame exceeds size_limit={size_limit}")
            d["G_real"] = self.G.real.tolist()
            d["G_imag"] = self.G.imag.tolist()
        return d


def _dense_resolvent(h: np.ndarray, z: complex) -> np.ndarray:
    n = h.shape[0]
    a = h.astype(np.complex128) - z * np.eye(n)
    g = linalg.solve(a, np.eye(n, dtype=np.complex128), assume_a="sym", check_finite=False)
    if not np.all(np.isfinite(g)):
        raise np.linalg.LinAlgError("resolvent solve produced non-finite values")
    # symmetric in exact arithmetic; symmetrise away rounding
    return 0.5 * (g + g.T)


def resolvent(sample, z) -> ResolventFrame:
    """Full resolvent by a dense complex-symmetric solve."""
    z = _check_z(z)
    h = _entries(sample)
    g = _dense_resolvent(h, z)
    n = h.shape[0]
    return ResolventFrame(z, g, complex(np.trace(g) / n), m_sc(z), np.arange(n), sample)


def minor(sample, removed, z) -> ResolventFrame:
    """Resolvent ``G^(S)`` of ``H`` with rows and columns in ``removed`` deleted."""
    z = _check_z(z)
    h = _entries(sample)
    n = h.shape[0]
    removed = np.unique(np.asarray(list(removed), dtype=np.int64))
    if removed.size and (removed.min() < 0 or removed.max() >= n):
        raise IndexError("removed index out of range")
    keep = np.setdiff1d(np.arange(n), removed)
    if keep.size == 0:
        raise ValueError("cannot remove every index")
    g = _dense_resolvent(h[np.ix_(keep, keep)], z)
    return ResolventFrame(z, g, complex(np.trace(g) / keep.size), m_sc(z), keep, sample)


def embed_minor(frame: ResolventFrame, n: int) -> np.ndarray:
    """Place a minor into an ``n x n`` array with NaN on removed rows/columns."""
    out = np.full((n, n), np.nan + 0j)
    out[np.ix_(frame.indices, frame.indices)] = frame.G
    return out


# --------------------------------------------------------------------------
# identity residuals (all relative, so they read the same at any scale)


def _rel(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def schur_complement_residual(sample, z, i: int) -> float:
    """``1/G_ii`` against ``h_ii - z - sum_{j,k != i} h_ij G^(i)_jk h_ki``."""
    h = _entries(sample)
    g = resolvent(h, z).G
    mi = minor(h, [i], z)
    hi = h[i, mi.indices]
    rhs = h[i, i] - complex(z) - hi @ mi.G @ hi
    return _rel(1.0 / g[i, i], rhs)


def expansion_residual(sample, z, i: int) -> float:
    """``G_ij`` against ``-G_ii sum_{k != i} h_ik G^(i)_kj`` over all ``j != i``."""
    h = _entries(sample)
    g = resolvent(h, z).G
    mi = minor(h, [i], z)
    rhs = -g[i, i] * (h[i, mi.indices] @ mi.G)
    return _rel(g[i, mi.indices], rhs)


def minor_identity_residual(sample, z, i: int) -> float:
    """``G_kj`` against ``G^(i)_kj + G_ki G_ij / G_ii`` over all ``k, j != i``."""
    h = _entries(sample)
    g = resolvent(h, z).G
    mi = minor(h, [i], z)
    keep = mi.indices
    rhs = mi.G + np.outer(g[keep, i], g[i, keep]) / g[i, i]
    return _rel(g[np.ix_(keep, keep)], rhs)


def resolvent_identity_residual(a: np.ndarray, b: np.ndarray) -> float:
    """``A^-1 - B^-1`` against ``A^-1 (B - A) B^-1``."""
    ai = np.linalg.inv(a)
    bi = np.linalg.inv(b)
    return _rel(ai - bi, ai @ (b - a) @ bi)


def shift_identity_residual(sample, z1, z2) -> float:
    """Resolvent identity for ``A = H - z1``, ``B = H - z2``."""
    h = _entries(sample).astype(np.complex128)
    n = h.shape[0]
    return resolvent_identity_residual(h - complex(z1) * np.eye(n), h - complex(z2) * np.eye(n))


# --------------------------------------------------------------------------
# Schur decomposition of the diagonal entries


@dataclass
class SchurTerms:
    """Pieces of ``sum_{j,k != i} h_ij G^(i)_jk h_ki`` for one index ``i``.

    ``gamma`` uses ``t_i`` (the row defect over all ``j``), while
    ``gamma_exact`` uses ``sum_{j != i} s_ij - 1`` and makes
    ``self_consistent_residual`` vanish to rounding. ``bookkeeping`` is the
    difference between the two readings of the self-consistent equation;
    it equals ``-m^2 s_ii (v_i + m)`` and is ``O(1/N)``.
    """

    i: int
    z: complex
    m: complex
    F: complex
    E: complex
    D: complex
    M: complex
    h_ii: float
    t_i: float
    sigma_i: float
    v_i: complex
    quadratic: complex
    decomposition_residual: float
    self_consistent_residual: float
    bookkeeping: complex

    @property
    def gamma(self) -> complex:
        return self.F + self.E + self.D - self.h_ii + self.m * self.t_i

    @property
    def gamma_exact(self) -> complex:
        return self.F + self.E + self.D - self.h_ii + self.m * (self.sigma_i - 1.0)

    def to_dict(self) -> dict:
        out = {}
        for k in ("F", "E", "D", "M", "v_i", "quadratic", "bookkeeping", "z", "m"):
            v = getattr(self, k)
            out[k] = [float(np.real(v)), float(np.imag(v))]
        g = self.gamma
        out.update(i=self.i, h_ii=self.h_ii, t_i=self.t_i, sigma_i=self.sigma_i,
                   gamma=[g.real, g.imag], decomposition_residual=self.decomposition_residual,
                   self_consistent_residual=self.self_consistent_residual)
        return out


def _variances(sample, s):
    if s is not None:
        return np.asarray(s, dtype=np.float64)
    prof = getattr(sample, "profile", None)
    if prof is None:
        raise ValueError("a variance profile is needed for a bare matrix")
    return prof.s


def schur_terms(sample, i: int, z, s=None) -> SchurTerms:
    """Decompose the quadratic form of the Schur complement formula at index ``i``.

    Parameters
    ----------
    sample : WignerSample or ndarray
        The matrix; a bare array needs ``s``.
    i : int
        Row index (0-based).
    z : complex
        Spectral parameter, ``Im z > 0``.
    s : ndarray, optional
        Variance profile overriding ``sample.profile.s``.
    """
    h = _entries(sample)
    n = h.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for N = {n}")
    z = _check_z(z)
    s = _variances(sample, s)
    m = m_sc(z)
    g = resolvent(h, z).G
    mi = minor(h, [i], z)
    keep = mi.indices
    gi = mi.G
    hi = h[i, keep]
    si = s[i, keep]
    gd_minor = gi.diagonal()
    gd = g.diagonal()[keep]
    quad = hi @ gi @ hi
    diag_part = np.sum(hi * hi * gd_minor)
    F = quad - diag_part
    E = np.sum((hi * hi - si) * gd_minor)
    D = np.sum(si * (gd_minor - gd))
    M = np.sum(si * (gd - m))
    sigma = float(si.sum())
    t_i = float(s[i].sum() - 1.0)
    recon = F + E + D + M + m * sigma
    v = g[i, i] - m
    lhs = v / (1.0 + v / m) - m * m * M
    gamma_exact = F + E + D - h[i, i] + m * (sigma - 1.0)
    gamma = F + E + D - h[i, i] + m * t_i
    # the same equation read with sum over all j and t_i
    lhs_all = v / (1.0 + v / m) - m * m * (M + s[i, i] * v)
    bookkeeping = lhs_all - m * m * gamma
    # scale by the pieces, not their sum, which may cancel to zero
    terms = abs(F) + abs(E) + abs(D) + abs(M) + abs(m * sigma)
    scale = max(abs(lhs), abs(m * m * gamma_exact), 1e-300)
    return SchurTerms(
        i=i, z=z, m=m, F=complex(F), E=complex(E), D=complex(D), M=complex(M), h_ii=float(h[i, i]),
        t_i=t_i, sigma_i=sigma, v_i=complex(v), quadratic=complex(quad),
        decomposition_residual=abs(quad - recon) / max(abs(quad), terms, 1e-300),
        self_consistent_residual=abs(lhs - m * m * gamma_exact) / scale,
        bookkeeping=complex(bookkeeping),
    )


def gamma_from_diagonal(diag_g: np.ndarray, z, s: np.ndarray):
    """``Gamma_i`` for every index from ``diag(G)`` alone.

    Rearranges the exact self-consistent equation
    ``v_i/(1 + v_i/m) - m^2 sum_{j != i} s_ij v_j = m^2 Gamma_exact_i``
    and adds ``m s_ii`` to move from ``sum_{j != i} s_ij - 1`` to ``t_i``.
    Agrees with :func:`schur_terms` (which builds each minor) to rounding.
    """
    m = m_sc(z)
    v = np.asarray(diag_g) - m
    sv = s @ v - s.diagonal() * v
    gamma_exact = (v / (1.0 + v / m)) / (m * m) - sv
    return gamma_exact + m * s.diagonal()


# --------------------------------------------------------------------------
# stability operator


def stability_norm(profile, z, indices=None, kappa: float = 0.25, s=None) -> float:
    """``||(I - m_sc^2 S~)^-1||_inf`` with ``S~`` the profile restricted to ``indices``.

    Parameters
    ----------
    profile : VarianceProfile or None
        Supplies ``s`` unless ``s`` is given.
    z : complex
        Bulk spectral parameter, ``Re z`` in ``(kappa - 2, 2 - kappa)``.
    indices : array of int, optional
        Index subset (default: all).
    """
    z = _check_z(z)
    if not (kappa - 2.0 < z.real < 2.0 - kappa):
        raise ValueError(f"Re z = {z.real} outside the bulk ({kappa - 2}, {2 - kappa})")
    s = profile.s if s is None else np.asarray(s)
    if indices is not None:
        idx = np.asarray(indices)
        s = s[np.ix_(idx, idx)]
    m = m_sc(z)
    a = np.eye(s.shape[0]) - (m * m) * s
    try:
        lu = linalg.lu_factor(a, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularStabilityError(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14):
        raise SingularStabilityError("I - m^2 S is numerically singular")
    inv = linalg.lu_solve(lu, np.eye(s.shape[0], dtype=np.complex128))
    return float(np.max(np.sum(np.abs(inv), axis=1)))


def flat_stability_norm(n: int, z) -> float:
    """Closed form of :func:`stability_norm` for ``s_ij = 1/n``.

    With ``S = J/n`` the inverse is ``I + c J/n`` where ``c = m^2/(1 - m^2)``,
    so each row sums to ``|1 + c/n| + (n - 1)|c|/n``. For ``Re m^2 < 0``
    this is ``1 + |c|(n - 2)/n``, which tends to ``1 + |c|`` only as ``n`` grows.
    """
    m = m_sc(z)
    c = m * m / (1.0 - m * m)
    return float(abs(1.0 + c / n) + (n - 1) * abs(c) / n)


# --------------------------------------------------------------------------
# spectral fast path


class SpectralResolvent:
    """Resolvent entries from one eigendecomposition ``H = V diag(lam) V^T``."""

    def __init__(self, eigenvalues: np.ndarray, eigenvectors: np.ndarray):
        self.lam = np.asarray(eigenvalues, dtype=np.float64)
        self.V = np.asarray(eigenvectors, dtype=np.float64)
        self._V2 = None

    @classmethod
    def of(cls, sample) -> "SpectralResolvent":
        lam, vec = linalg.eigh(_entries(sample), check_finite=False)
        return cls(lam, vec)

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def V2(self) -> np.ndarray:
        if self._V2 is None:
            self._V2 = self.V * self.V
        return self._V2

    def m_N(self, z):
        zz = np.asarray(z, dtype=np.complex128)
        out = np.mean(1.0 / (self.lam[:, None] - zz.ravel()[None, :]), axis=0).reshape(zz.shape)
        return out if out.ndim else complex(out)

    def diag(self, z) -> np.ndarray:
        """``G_ii(z)`` for all ``i``; ``z`` may be an array, giving shape ``(N, len(z))``."""
        zz = np.atleast_1d(np.asarray(z, dtype=np.complex128))
        w = 1.0 / (self.lam[:, None] - zz[None, :])
        out = self.V2 @ w.real + 1j * (self.V2 @ w.imag)
        return out[:, 0] if np.ndim(z) == 0 else out

    def full(self, z) -> np.ndarray:
        z = _check_z(z)
        w = 1.0 / (self.lam - z)
        a = self.V * w.real
        b = self.V * w.imag
        return a @ self.V.T + 1j * (b @ self.V.T)

    def rows(self, z, idx) -> np.ndarray:
        z = _check_z(z)
        w = 1.0 / (self.lam - z)
        vi = self.V[np.asarray(idx)]
        return (vi * w.real) @ self.V.T + 1j * ((vi * w.imag) @ self.V.T)

    def frame(self, z, source=None) -> ResolventFrame:
        g = self.full(z)
        return ResolventFrame(complex(z), g, complex(np.trace(g) / self.n), m_sc(z), np.arange(self.n), source)
