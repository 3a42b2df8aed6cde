"""Norm bounds on the minimisers of a polynomial with positive definite leading form.

With lower bounds ``c_j`` on ``f_j`` over the unit ``p``-sphere, every
minimiser of ``f`` (integer or continuous) has ``||x||_p <= R`` where ``R`` is
the largest nonnegative root of ``q(t) = sum_j c_j t^j``.  The ``c_j`` come
from cheap coefficient estimates or from SOS programs; larger is better.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize

from .poly import Monomial, Polynomial, homogeneous_components, one_norm
from .sdpsolve import SdpOptions
from .sosprog import SosError, nie_bound, sphere_gram_degree, sphere_min_bound

log = logging.getLogger(__name__)

ROOT_TOL = 1e-9
IMAG_TOL = 1e-8
MAX_ORTHANT_DIM = 16


class Provenance(str, Enum):
    COEFFICIENT_NORM = "CoefficientNorm"
    MONOMIAL_REFINED = "MonomialRefined"
    SPHERE_SOS = "SphereSos"
    NIE_BOUND = "NieBound"
    MAX = "Max"


class Definiteness(str, Enum):
    CERTIFIED_POSITIVE = "CertifiedPositive"
    CERTIFIED_NOT_PSD = "CertifiedNotPsd"
    UNDECIDED = "Undecided"


class NormBoundError(ValueError):
    """Raised for inputs the pipeline cannot handle (odd or zero degree, bad p)."""

    def __init__(self, message: str, status: str = "InvalidInput"):
        super().__init__(message)
        self.status = status


# ---------------------------------------------------------------------------
# algebraic bounds


def cj_coefficient_norm(fj: Polynomial) -> float:
    return -one_norm(fj)


def monomial_sphere_maximizer(alpha: Sequence[int], p: float) -> np.ndarray:
    """Nonnegative maximiser of ``x^alpha`` on the unit ``p``-sphere."""
    a = np.asarray(alpha, dtype=float)
    total = a.sum()
    if total <= 0:
        raise ValueError("alpha must be nonzero")
    if p < 1:
        raise ValueError("p must be >= 1")
    if math.isinf(p):
        return np.ones_like(a)
    return (a / total) ** (1.0 / p)


def monomial_sphere_max(alpha: Sequence[int], p: float) -> float:
    """``max x^alpha`` over the unit ``p``-sphere (1 for the empty monomial)."""
    if sum(alpha) == 0:
        return 1.0
    x = monomial_sphere_maximizer(alpha, p)
    return float(np.prod(x ** np.asarray(alpha, dtype=float)))


def cj_monomial_refined(fj: Polynomial, p: float) -> float:
    return math.fsum(-abs(c) * monomial_sphere_max(a, p) for a, c in fj.items())


def cj_sphere_sos(fj: Polynomial, p: int, k: int, opts: SdpOptions | None = None) -> float | None:
    """Certified sphere bound, or None if the solve did not succeed.

    The certificate residual ``r`` satisfies ``|r(x)| <= ||r||_1`` on the unit
    sphere, so subtracting its 1-norm keeps the bound valid despite rounding.
    """
    try:
        res = sphere_min_bound(fj, p, k, opts)
    except SosError:
        return None
    if not res.ok or not math.isfinite(res.value):
        return None
    return res.value - sum(res.residual_l1)


def _power_sum_range(n: int, d: int, p: float) -> tuple[float, float]:
    """min and max of ``sum_i x_i^d`` over the unit ``p``-sphere (``d`` even)."""
    small = n ** (1.0 - d / p)
    return (min(1.0, small), max(1.0, small))


def cd_nie(fd: Polynomial, p: int, opts: SdpOptions | None = None) -> float | None:
    """Sphere bound on ``f_d`` from ``f_d >= gamma * sum_i x_i^d``."""
    try:
        res = nie_bound(fd, opts)
    except SosError:
        return None
    if not res.ok or not math.isfinite(res.value):
        return None
    # on the unit p-sphere every monomial of degree d is bounded by 1 in absolute value
    gamma = res.value - sum(res.residual_l1)
    lo, hi = _power_sum_range(fd.n, fd.degree, p)
    return gamma * (lo if gamma >= 0 else hi)


@dataclass
class CjEntry:
    j: int
    value: float
    provenance: Provenance
    candidates: dict[str, float] = field(default_factory=dict)


@dataclass
class CjVector:
    p: float
    entries: list[CjEntry]

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    def to_dict(self) -> dict:
        return {"p": self.p, "entries": [
            {"j": e.j, "value": e.value, "provenance": e.provenance.value, "candidates": e.candidates}
            for e in self.entries]}


def _pick(j: int, cands: dict[Provenance, float | None]) -> CjEntry:
    valid = {k: v for k, v in cands.items() if v is not None and math.isfinite(v)}
    best = max(valid, key=lambda k: valid[k])
    return CjEntry(j, valid[best], best, {k.value: v for k, v in valid.items()})


def best_cj(f: Polynomial, p: int, k: int | None = None, sos: bool = True,
            opts: SdpOptions | None = None, cd: CjEntry | None = None) -> CjVector:
    """Entry-wise best of all available bounds for ``j = 1..d``.

    ``cd`` may carry a leading-form bound computed elsewhere (the escalation
    loop); it is then reused rather than recomputed.
    """
    comps = homogeneous_components(f)
    d = len(comps) - 1
    if k is None:
        k = d + 2
    use_sos = sos and p % 2 == 0 and p >= 2
    entries = []
    for j in range(1, d + 1):
        fj = comps[j]
        if j == d and cd is not None:
            entries.append(cd)
            continue
        if fj.is_zero():
            entries.append(CjEntry(j, 0.0, Provenance.COEFFICIENT_NORM,
                                   {Provenance.COEFFICIENT_NORM.value: 0.0}))
            continue
        cands: dict[Provenance, float | None] = {
            Provenance.COEFFICIENT_NORM: cj_coefficient_norm(fj),
            Provenance.MONOMIAL_REFINED: cj_monomial_refined(fj, p),
        }
        if use_sos:
            cands[Provenance.SPHERE_SOS] = cj_sphere_sos(fj, p, k, opts)
            if j == d and j % 2 == 0:
                cands[Provenance.NIE_BOUND] = cd_nie(fj, p, opts)
        entries.append(_pick(j, cands))
    return CjVector(p, entries)


# ---------------------------------------------------------------------------
# radii


def largest_nonneg_root(c: Sequence[float]) -> float:
    """Largest nonnegative root of ``q(t) = sum_{j>=1} c_j t^j`` (``c[0]`` is ``c_1``)."""
    c = np.asarray(c, dtype=float)
    if c.size == 0 or c[-1] <= 0:
        raise ValueError("leading coefficient c_d must be positive")
    # q(t)/t has coefficients c_1..c_d; numpy wants highest degree first
    coeffs = c[::-1]
    if coeffs.size == 1:
        return 0.0
    roots = np.roots(coeffs)
    best = 0.0
    for z in roots:
        if abs(z.imag) > IMAG_TOL * max(1.0, abs(z.real)) and abs(z.imag) > 1e-6 * max(1.0, abs(z.real)):
            continue
        t = z.real
        if t <= 0:
            continue
        # one Newton step on q(t)/t
        val = np.polyval(coeffs, t)
        der = np.polyval(np.polyder(coeffs), t)
        if der != 0 and abs(z.imag) <= IMAG_TOL * max(1.0, abs(t)):
            t_new = t - val / der
            if t_new > 0 and abs(t_new - t) < 1e-3 * max(1.0, t):
                t = t_new
        best = max(best, float(t))
    return best


def marshall_radius(f: Polynomial, c_d: float) -> float:
    if c_d <= 0:
        raise ValueError("c_d must be positive")
    d = f.degree
    mid = math.fsum(abs(c) for a, c in f.items() if 0 < sum(a) < d)
    return max(1.0, mid / c_d)


@dataclass
class OrthantBound:
    tau: tuple[int, ...]
    c: list[float]
    R: float

    def to_dict(self) -> dict:
        return {"tau": list(self.tau), "c": self.c, "R": self.R}


def _sign(alpha: Monomial, tau: Sequence[int]) -> int:
    s = 1
    for a, t in zip(alpha, tau):
        if a % 2 and t < 0:
            s = -s
    return s


def orthant_radii(f: Polynomial, p: float, c_d: float) -> list[OrthantBound]:
    """Per-orthant radii using only the coefficients that are negative there."""
    if c_d <= 0:
        raise ValueError("c_d must be positive")
    if f.n > MAX_ORTHANT_DIM:
        raise ValueError(f"orthant enumeration limited to n <= {MAX_ORTHANT_DIM}")
    comps = homogeneous_components(f)
    d = len(comps) - 1
    out = []
    for tau in itertools.product((1, -1), repeat=f.n):
        cs = []
        for j in range(1, d):
            cs.append(math.fsum(-max(0.0, -c * _sign(a, tau)) * monomial_sphere_max(a, p)
                                for a, c in comps[j].items()))
        cs.append(c_d)
        out.append(OrthantBound(tuple(tau), cs, largest_nonneg_root(cs)))
    return out


# ---------------------------------------------------------------------------
# negativity witnesses


def sphere_samples(n: int, p: float, count: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((count, n))
    norms = np.linalg.norm(x, ord=p, axis=1)
    return x / norms[:, None]


def find_negative_witness(fd: Polynomial, p: float, samples: int = 4000, starts: int = 8,
                          seed: int = 0) -> np.ndarray | None:
    """Look for ``x`` on the unit sphere with ``f_d(x) < 0``; None if none found."""
    rng = np.random.default_rng(seed)
    pts = sphere_samples(fd.n, p, samples, rng)
    vals = fd.evaluate_many(pts)
    order = np.argsort(vals)
    if vals[order[0]] < 0 and fd(pts[order[0]]) < 0:
        return pts[order[0]]

    def obj(x):
        nrm = np.linalg.norm(x, ord=p)
        if nrm == 0:
            return 0.0
        return fd(x / nrm)

    for i in order[:starts]:
        res = optimize.minimize(obj, pts[i], method="BFGS", options={"maxiter": 200})
        x = res.x / np.linalg.norm(res.x, ord=p)
        if fd(x) < 0:
            return x
    return None


# ---------------------------------------------------------------------------
# the pipeline


@dataclass
class NormBoundReport:
    p: int
    d: int
    definite: Definiteness
    c: CjVector | None = None
    R: float | None = None
    R_lit: float | None = None
    R_norm1: float | None = None
    witness: list[float] | None = None
    k_used: int | None = None
    orthants: list[OrthantBound] = field(default_factory=list)

    @property
    def box_radius(self) -> int | None:
        return None if self.R is None else int(math.floor(self.R + ROOT_TOL))

    @property
    def c_d(self) -> float | None:
        return None if self.c is None else self.c.entries[-1].value

    def to_dict(self) -> dict:
        return {
            "schema": "intpolymin.normbound/1",
            "status": self.definite.value,
            "p": self.p,
            "d": self.d,
            "k_used": self.k_used,
            "c": None if self.c is None else self.c.to_dict(),
            "R": self.R,
            "R_lit": self.R_lit,
            "R_norm1": self.R_norm1,
            "box_radius": self.box_radius,
            "witness": self.witness,
            "orthants": [o.to_dict() for o in self.orthants],
        }


def certify_leading_form(fd: Polynomial, p: int, k_max: int,
                         opts: SdpOptions | None = None) -> tuple[CjEntry, int]:
    """Escalate the multiplier degree until the sphere bound on ``f_d`` is positive.

    Levels whose Gram basis coincides with an already solved one are skipped.
    Returns the best entry found and the last level tried.
    """
    d = fd.degree
    cands: dict[Provenance, float | None] = {
        Provenance.COEFFICIENT_NORM: cj_coefficient_norm(fd),
        Provenance.MONOMIAL_REFINED: cj_monomial_refined(fd, p),
    }
    if d % 2 == 0:
        cands[Provenance.NIE_BOUND] = cd_nie(fd, p, opts)
    entry = _pick(d, cands)
    last_D = None
    k_used = 0
    for k in range(k_max + 1):
        if entry.value > 0:
            break
        D = sphere_gram_degree(d, p, k)
        if D == last_D:
            continue
        last_D = D
        k_used = k
        val = cj_sphere_sos(fd, p, k, opts)
        if val is not None:
            cands[Provenance.SPHERE_SOS] = max(val, cands.get(Provenance.SPHERE_SOS) or -math.inf)
            entry = _pick(d, cands)
    return entry, k_used


def compute_norm_bound(f: Polynomial, p: int = 2, k_max: int | None = None,
                       cj_level: int | None = None, orthants: bool = False, sos: bool = True,
                       opts: SdpOptions | None = None, witness_seed: int = 0) -> NormBoundReport:
    """Certify the leading form and compute the radius ``R`` (plus ``R_lit``).

    ``k_max`` defaults to ``d + 2``; ``cj_level`` (multiplier degree for the
    lower-order sphere programs) defaults to ``k_max``.
    """
    if f.is_zero() or f.degree == 0:
        raise NormBoundError("constant polynomial: every point is a minimiser", "Constant")
    d = f.degree
    if d % 2:
        raise NormBoundError(f"odd degree {d}: f is unbounded below and has no minimisers", "OddDegree")
    if p < 2 or p % 2:
        raise NormBoundError("p must be an even integer >= 2")
    if k_max is None:
        k_max = d + 2
    if cj_level is None:
        cj_level = k_max
    fd = homogeneous_components(f)[d]

    witness = find_negative_witness(fd, p, seed=witness_seed)
    if witness is not None:
        return NormBoundReport(p, d, Definiteness.CERTIFIED_NOT_PSD, witness=[float(v) for v in witness])

    entry, k_used = certify_leading_form(fd, p, k_max, opts) if sos else (
        _pick(d, {Provenance.MONOMIAL_REFINED: cj_monomial_refined(fd, p)}), 0)
    if entry.value <= 0:
        log.info("leading form not certified up to k=%d (best c_d=%.3g)", k_max, entry.value)
        return NormBoundReport(p, d, Definiteness.UNDECIDED, k_used=k_used,
                               c=CjVector(p, [entry]))

    if sos and (Provenance.SPHERE_SOS.value not in entry.candidates or k_used < cj_level):
        # certification may stop early; refine c_d at the requested level
        val = cj_sphere_sos(fd, p, cj_level, opts)
        if val is not None:
            cands = {Provenance(k): v for k, v in entry.candidates.items()}
            cands[Provenance.SPHERE_SOS] = max(val, cands.get(Provenance.SPHERE_SOS, -math.inf))
            entry = _pick(d, cands)
    cvec = best_cj(f, p, cj_level, sos=sos, opts=opts, cd=entry)
    c_d = entry.value
    R = largest_nonneg_root(cvec.values)
    comps = homogeneous_components(f)
    c_norm1 = [cj_coefficient_norm(comps[j]) for j in range(1, d)] + [c_d]
    report = NormBoundReport(
        p, d, Definiteness.CERTIFIED_POSITIVE, c=cvec, R=R,
        R_lit=marshall_radius(f, c_d), R_norm1=largest_nonneg_root(c_norm1), k_used=k_used,
    )
    if orthants and f.n <= MAX_ORTHANT_DIM:
        report.orthants = orthant_radii(f, p, c_d)
    return report
