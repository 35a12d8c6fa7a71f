"""Monte Carlo checks of large-deviation bounds and exact resolvent-continuity inequalities.

Large deviations
    For centred-ish variables ``X_j`` with ``E|X_j|^p <= (q^2/N)(C/q)^p`` and
    ``|E X_j| <= C' N^(-1-delta)``, linear, diagonal, quadratic and bilinear
    forms exceed ``(log N)^xi`` (or ``(log N)^(2 xi)``) times a scale with
    probability at most ``exp(-nu (log N)^xi)``. ``nu`` is existential; it
    is calibrated once on Gaussian inputs (:func:`calibrate_nu`) and then
    frozen.

Continuity
    With ``z = E + i eta`` and ``z' = z + i eta'``,
    ``|G'_jk - G_jk| <= (eta'/(2 eta)) (|Im G'_jj| + |Im G_kk|)`` and the
    diagonal ratio ``min/max`` of ``|G_jj|, |G'_jj|`` exceeds ``1 - eta'/eta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from . import _rng
from .ensemble import EntryLaw
from .errors import PreflightError
from .resolvent import resolvent

FORMS = ("linear", "diagonal", "quadratic", "bilinear")
PREFLIGHT_ORDERS = (2, 4, 8)


# --------------------------------------------------------------------------
# continuity (exact inequalities)


@dataclass
class ContinuityCheck:
    E: float
    eta: float
    eta_prime: float
    max_violation: float
    violations: int
    ratio_violations: int
    min_ratio_margin: float
    pairs: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.ratio_violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def continuity_from_frames(g: np.ndarray, gp: np.ndarray, E: float, eta: float, eta_prime: float,
                           slack: float = 1e-9) -> ContinuityCheck:
    """Evaluate both inequalities from ``G(E + i eta)`` and ``G(E + i (eta + eta'))``.

    ``g`` and ``gp`` may be full matrices or 1-d diagonals; in the latter case
    only the ``j == k`` instances are checked. ``eta' == 0`` is handled as the
    trivially tight case (the ratio bound is then read as ``>=``).
    """
    g = np.asarray(g)
    gp = np.asarray(gp)
    if g.ndim == 1:
        lhs = np.abs(gp - g)
        rhs = (eta_prime / (2.0 * eta)) * (np.abs(gp.imag) + np.abs(g.imag))
        dg, dgp = g, gp
    else:
        lhs = np.abs(gp - g)
        rhs = (eta_prime / (2.0 * eta)) * (np.abs(gp.diagonal().imag)[:, None]
                                            + np.abs(g.diagonal().imag)[None, :])
        dg, dgp = g.diagonal(), gp.diagonal()
    excess = lhs - rhs - slack * (1.0 + rhs)
    a, b = np.abs(dg), np.abs(dgp)
    ratio = np.minimum(a, b) / np.maximum(a, b)
    floor = 1.0 - eta_prime / eta
    if eta_prime > 0:
        bad_ratio = ~(ratio > floor - slack)
    else:
        bad_ratio = ~(ratio >= floor - slack)
    return ContinuityCheck(
        E=float(E), eta=float(eta), eta_prime=float(eta_prime),
        max_violation=float(np.max(lhs - rhs)), violations=int(np.count_nonzero(excess > 0)),
        ratio_violations=int(np.count_nonzero(bad_ratio)), min_ratio_margin=float(np.min(ratio - floor)),
        pairs=int(lhs.size),
    )


def check_continuity(sample, E: float, eta: float, eta_prime: float, slack: float = 1e-9) -> ContinuityCheck:
    """Continuity check with dense resolvents at ``E + i eta`` and ``E + i (eta + eta')``."""
    if not (eta > 0 and eta_prime >= 0):
        raise ValueError("need eta > 0 and eta_prime >= 0")
    g = resolvent(sample, complex(E, eta)).G
    gp = g if eta_prime == 0 else resolvent(sample, complex(E, eta + eta_prime)).G
    return continuity_from_frames(g, gp, E, eta, eta_prime, slack)


# --------------------------------------------------------------------------
# large deviations: configuration and input laws


@dataclass
class DeviationCheckConfig:
    n: int
    q: float
    xi: float = 2.0
    delta: float = 0.5
    C: float = 2.0
    C_prime: float = 2.0
    form: str = "linear"
    replicas: int = 100_000
    nu: Optional[float] = None
    xis: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}; expected one of {FORMS}")
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        if not (self.C > 1 and self.C_prime > 1):
            raise ValueError("C and C' must exceed 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def xi_list(self) -> list:
        return sorted(set([float(self.xi)] + [float(x) for x in self.xis]))

    def xi_in_stated_range(self, xi: float) -> bool:
        """Whether ``2 <= xi <= log log N`` (the stated range; at desk scale it is nearly empty)."""
        return 2.0 <= xi <= math.log(self.log_n)


@dataclass
class DeviationLaw:
    """Input variables ``X_j``: an entry law at variance ``variance``, optionally truncated to ``|x| <= cut``."""

    law: EntryLaw
    variance: float
    cut: Optional[float] = None

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        sigma = math.sqrt(self.variance)
        out = self._raw(rng, shape) * sigma
        if self.cut is None:
            return out
        bad = np.abs(out) > self.cut
        while bad.any():
            out[bad] = self._raw(rng, int(bad.sum())) * sigma
            bad = np.abs(out) > self.cut
        return out

    def _raw(self, rng, shape):
        kind, nu = self.law.kind, self.law.tail_index
        if kind == "gaussian":
            return rng.standard_normal(shape)
        if kind == "rademacher":
            return rng.choice(np.array([-1.0, 1.0]), size=shape)
        if kind == "student_t":
            return rng.standard_t(nu, size=shape) * self.law._scale
        u = rng.random(shape)
        sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        return sign * self.law.std_abs_isf(1.0 - u)

    def abs_moment(self, p: float) -> float:
        """Exact ``E|X|^p`` (quadrature for the truncated law)."""
        if self.cut is None:
            return self.law.abs_moment(p, self.variance)
        if not self.law.has_density:
            return self.law.abs_moment(p, self.variance) if math.sqrt(self.variance) <= self.cut else 0.0
        f = lambda x: x ** p * float(self.law.pdf(x, self.variance))  # noqa: E731
        num, _ = integrate.quad(f, 0.0, self.cut, epsabs=0.0, epsrel=1e-11, limit=200)
        den = 1.0 - float(self.law.abs_sf(self.cut, self.variance))
        return 2.0 * num / den

    def mean(self) -> float:
        return 0.0  # every provided law (and its symmetric truncation) is symmetric

    def second_moment(self) -> float:
        return self.abs_moment(2.0)


def moment_template(cfg: DeviationCheckConfig, p: float) -> float:
    """``(q^2/N)(C/q)^p``."""
    return cfg.q ** 2 / cfg.n * (cfg.C / cfg.q) ** p


def preflight(cfg: DeviationCheckConfig, dlaw: DeviationLaw, seed: int, samples: int = 200_000,
              orders: Sequence[float] = PREFLIGHT_ORDERS) -> dict:
    """Spot-check the moment template at ``p`` in ``orders`` and the mean condition.

    Both the exact moment and a Monte Carlo estimate must sit below the
    template; the mean must satisfy ``|E X| <= C' N^(-1-delta)``.
    """
    rng = _rng.generator(seed, _rng.TAG_AUX)
    x = dlaw.sample(rng, samples)
    rows = []
    for p in orders:
        bound = moment_template(cfg, p)
        exact = dlaw.abs_moment(p)
        emp = float(np.mean(np.abs(x) ** p))
        rows.append({"p": p, "exact": exact, "empirical": emp, "template": bound,
                     "ok": bool(exact <= bound and emp <= bound)})
    mean_bound = cfg.C_prime * cfg.n ** (-1.0 - cfg.delta)
    mean_ok = abs(dlaw.mean()) <= mean_bound
    report = {"moments": rows, "mean": dlaw.mean(), "mean_bound": mean_bound, "mean_ok": mean_ok}
    failed = [r["p"] for r in rows if not r["ok"]]
    if failed or not mean_ok:
        raise PreflightError(f"moment template violated at p in {failed} (mean ok: {mean_ok})")
    return report


# --------------------------------------------------------------------------
# thresholds and statistics


def threshold(cfg: DeviationCheckConfig, R, xi: float) -> float:
    """Deviation threshold of the configured form at exponent ``xi``."""
    L = cfg.log_n
    n = cfg.n
    R = np.asarray(R, dtype=np.float64)
    a = cfg.C_prime * n ** (-cfg.delta)
    b = 5.0 * cfg.C_prime ** 2 * n ** (-cfg.delta)
    if cfg.form == "linear":
        return L ** xi * ((a + 1.0 / cfg.q) * np.max(np.abs(R)) + math.sqrt(np.sum(R * R) / n))
    if cfg.form == "diagonal":
        return L ** xi * (b + 1.0 / cfg.q) * np.max(np.abs(R))
    if cfg.form == "quadratic":
        off = R[~np.eye(n, dtype=bool)]
        return L ** (2 * xi) * ((b + 1.0 / cfg.q) * np.max(np.abs(off), initial=0.0)
                                + math.sqrt(np.sum(off * off)) / n)
    return L ** (2 * xi) * ((b + 2.0 / cfg.q) * np.max(np.abs(R)) + math.sqrt(np.sum(R * R)) / n)


def tail_bound(cfg: DeviationCheckConfig, nu: float, xi: float) -> float:
    return math.exp(-nu * cfg.log_n ** xi)


def _constant_offdiag(R):
    n = R.shape[0]
    off = R[~np.eye(n, dtype=bool)]
    return off.size > 0 and np.all(off == off[0]), (off[0] if off.size else 0.0)


def _statistic(form: str, R: np.ndarray, X: np.ndarray, Y: Optional[np.ndarray], s: float) -> np.ndarray:
    """Form values for each row of ``X`` (and ``Y``)."""
    if form == "linear":
        return X @ R
    if form == "diagonal":
        return (X * X - s) @ R
    if form == "quadratic":
        const, c = _constant_offdiag(R)
        if const:
            tot = X.sum(axis=1)
            return c * (tot * tot - np.sum(X * X, axis=1))
        full = np.einsum("ri,ri->r", X @ R, X)
        return full - np.sum(X * X * R.diagonal(), axis=1)
    const, c = _constant_offdiag(R)
    if const and np.all(R.diagonal() == c):
        return c * X.sum(axis=1) * Y.sum(axis=1)
    return np.einsum("ri,ri->r", X @ R, Y)


@dataclass
class TailReport:
    form: str
    n: int
    replicas: int
    nu: float
    rows: list
    preflight: dict
    max_abs: float

    @property
    def exceeded_xis(self) -> list:
        return [r["xi"] for r in self.rows if r["exceeded"]]

    @property
    def largest_exceeding_xi(self) -> Optional[float]:
        ex = self.exceeded_xis
        return max(ex) if ex else None

    @property
    def comparable_cells(self) -> int:
        return sum(1 for r in self.rows if r["comparable"])

    @property
    def passed(self) -> bool:
        return not self.exceeded_xis

    def to_dict(self) -> dict:
        return {"form": self.form, "n": self.n, "replicas": self.replicas, "nu": self.nu,
                "rows": self.rows, "preflight": self.preflight, "max_abs": self.max_abs,
                "passed": self.passed, "largest_exceeding_xi": self.largest_exceeding_xi}

    def csv_rows(self) -> list:
        return [{"form": self.form, "n": self.n, "xi": r["xi"], "threshold": r["threshold"],
                 "empirical_tail": r["empirical_tail"], "bound": r["bound"],
                 "replicas": self.replicas, "comparable": int(r["comparable"]),
                 "exceeded": int(r["exceeded"])} for r in self.rows]


def _monte_carlo(cfg, R, dlaw_x, dlaw_y, seed, chunk=None):
    n = cfg.n
    if chunk is None:
        chunk = max(1, min(cfg.replicas, 4_000_000 // n))
    rng_x = _rng.generator(seed, _rng.TAG_AUX + (1 << 20))
    rng_y = _rng.generator(seed, _rng.TAG_AUX + (2 << 20))
    s = dlaw_x.second_moment() if cfg.form == "diagonal" else 0.0
    out = np.empty(cfg.replicas)
    done = 0
    while done < cfg.replicas:
        m = min(chunk, cfg.replicas - done)
        X = dlaw_x.sample(rng_x, (m, n))
        Y = dlaw_y.sample(rng_y, (m, n)) if cfg.form == "bilinear" else None
        out[done:done + m] = _statistic(cfg.form, R, X, Y, s)
        done += m
    return np.abs(out)


def _check_form(cfg, R, dlaw_x, dlaw_y, seed, nu, run_preflight=True, values=None):
    R = np.asarray(R, dtype=np.float64)
    expected = (cfg.n,) if cfg.form in ("linear", "diagonal") else (cfg.n, cfg.n)
    if R.shape != expected:
        raise ValueError(f"R has shape {R.shape}, expected {expected} for the {cfg.form} form")
    pf = preflight(cfg, dlaw_x, seed) if run_preflight else {}
    if run_preflight and dlaw_y is not None and cfg.form == "bilinear":
        pf = {"X": pf, "Y": preflight(cfg, dlaw_y, seed + 1)}
    nu = cfg.nu if nu is None else nu
    if nu is None:
        raise ValueError("nu must be given (calibrate it with calibrate_nu)")
    vals = _monte_carlo(cfg, R, dlaw_x, dlaw_y, seed) if values is None else values
    rows = []
    for xi in cfg.xi_list:
        thr = float(threshold(cfg, R, xi))
        # a positive threshold is needed for a meaningful event; R == 0 gives a zero form
        hits = int(np.count_nonzero(vals >= thr)) if thr > 0 else int(np.count_nonzero(vals > 0))
        emp = hits / cfg.replicas
        bound = tail_bound(cfg, nu, xi)
        rows.append({"xi": xi, "threshold": thr, "empirical_tail": emp, "bound": bound,
                     "comparable": bool(bound > 10.0 / cfg.replicas), "exceeded": bool(emp > bound),
                     "xi_in_stated_range": cfg.xi_in_stated_range(xi)})
    return TailReport(cfg.form, cfg.n, cfg.replicas, float(nu), rows, pf, float(np.max(vals, initial=0.0)))


def check_linear_form(config: DeviationCheckConfig, R, law: DeviationLaw, seed: int,
                      nu: Optional[float] = None) -> TailReport:
    """Tail of ``|sum_j R_j X_j|``; ``config.form`` must be ``linear`` or ``diagonal``."""
    if config.form not in ("linear", "diagonal"):
        raise ValueError("check_linear_form handles the linear and diagonal forms")
    return _check_form(config, R, law, None, seed, nu)


def check_quadratic_form(config: DeviationCheckConfig, R, law: DeviationLaw, seed: int,
                         nu: Optional[float] = None) -> TailReport:
    """Tail of ``|sum_{i != j} X_i R_ij X_j|``."""
    if config.form != "quadratic":
        raise ValueError("check_quadratic_form needs form='quadratic'")
    return _check_form(config, R, law, None, seed, nu)


def check_bilinear_form(config: DeviationCheckConfig, R, law_x: DeviationLaw, law_y: DeviationLaw,
                        seed: int, nu: Optional[float] = None) -> TailReport:
    """Tail of ``|sum_{i,j} X_i R_ij Y_j|`` with independent ``X`` and ``Y``.

    Passing the same object for both laws is rejected: the bound needs two
    independent families, and a shared object invites sharing a stream.
    """
    if config.form != "bilinear":
        raise ValueError("check_bilinear_form needs form='bilinear'")
    if law_x is law_y:
        raise ValueError("X and Y must be independent families; pass two distinct law objects")
    return _check_form(config, R, law_x, law_y, seed, nu)


# --------------------------------------------------------------------------
# calibration of nu


def calibrate_nu(ns: Sequence[int], xis: Sequence[float], seed: int, replicas: int = 20_000,
                 q_of_n=None, forms: Sequence[str] = FORMS, **cfg_kwargs) -> dict:
    """Largest ``nu`` with ``exp(-nu (log N)^xi) >= empirical tail`` on Gaussian inputs.

    Uses small ``xi`` where Gaussian tails are measurable; cells with zero hits
    do not constrain ``nu``. Returns the frozen ``nu`` and the cell table.
    """
    q_of_n = q_of_n or (lambda n: n ** 0.05)
    cells = []
    for n in ns:
        dl_x = DeviationLaw(EntryLaw("gaussian"), 1.0 / n)
        dl_y = DeviationLaw(EntryLaw("gaussian"), 1.0 / n)
        for form in forms:
            R = standard_R(form, n)
            cfg = DeviationCheckConfig(n, q_of_n(n), xi=float(xis[0]), xis=tuple(xis), form=form,
                                       replicas=replicas, nu=1.0, **cfg_kwargs)
            vals = _monte_carlo(cfg, R, dl_x, dl_y, seed)
            for xi in cfg.xi_list:
                thr = float(threshold(cfg, R, xi))
                emp = np.count_nonzero(vals >= thr) / replicas
                nu_cell = -math.log(emp) / cfg.log_n ** xi if emp > 0 else math.inf
                cells.append({"n": n, "form": form, "xi": xi, "threshold": thr, "empirical_tail": emp,
                              "nu_max": nu_cell})
    finite = [c["nu_max"] for c in cells if math.isfinite(c["nu_max"])]
    if not finite:
        raise ValueError("no calibration cell had a nonzero tail; lower xi or raise replicas")
    return {"nu": min(finite), "cells": cells, "replicas": replicas}


def standard_R(form: str, n: int) -> np.ndarray:
    """Coefficient arrays used by the sweep: all ones (off-diagonal ones for ``quadratic``)."""
    if form in ("linear", "diagonal"):
        return np.ones(n)
    R = np.ones((n, n))
    if form == "quadratic":
        np.fill_diagonal(R, 0.0)
    return R


def deviation_sweep(ns: Sequence[int], xis: Sequence[float], nu: float, law: Optional[EntryLaw] = None,
                    eps: float = 0.5, seed: int = 0, replicas: int = 100_000, forms: Sequence[str] = FORMS,
                    **cfg_kwargs) -> list:
    """Tail reports over ``ns x forms`` with ``xis`` evaluated on each cell.

    Inputs are ``law`` at variance ``1/N`` truncated to ``|x| <= N^(-eps/10)``
    with ``q = N^(eps/10)``, matching the amenable entries of a labelled
    matrix. The default law is Student t with 2.6 degrees of freedom.
    """
    law = law or EntryLaw("student_t", 2.6)
    out = []
    for k, n in enumerate(ns):
        q = n ** (eps / 10.0)
        dl_x = DeviationLaw(law, 1.0 / n, cut=1.0 / q)
        dl_y = DeviationLaw(law, 1.0 / n, cut=1.0 / q)
        for f, form in enumerate(forms):
            cfg = DeviationCheckConfig(n, q, xi=float(xis[0]), xis=tuple(xis), form=form, replicas=replicas,
                                       nu=nu, **cfg_kwargs)
            R = standard_R(form, n)
            cell_seed = seed + 1000 * k + 10 * f
            if form == "bilinear":
                out.append(check_bilinear_form(cfg, R, dl_x, dl_y, cell_seed))
            elif form == "quadratic":
                out.append(check_quadratic_form(cfg, R, dl_x, cell_seed))
            else:
                out.append(check_linear_form(cfg, R, dl_x, cell_seed))
    return out
