"""Underestimators from cone(h) and the SOS programs that fit them.

A member of cone(h) is ``g = sum_{alpha in J} b_alpha (X - h)^(2 alpha)`` with
``b_alpha >= 0`` for ``alpha != 0``.  It is minimised over the reals at ``h`` and
over the integers at ``round(h)``, and it is coordinate-wise monotone on
either side of ``h``, which is what branch and bound exploits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import Monomial, Polynomial, monomials_up_to, shifted_monomial, translate
from .sdpsolve import SdpOptions, SdpStatus
from .sosprog import SosBound, SosError, SosProgram, gram_polynomial, solve_program

log = logging.getLogger(__name__)

DELTA_SAFETY = 1e-6
EXACT = "exact"


def round_half_away(x) -> np.ndarray:
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def shift_weights(h: Sequence[float], J: Sequence[Monomial]) -> dict[Monomial, float]:
    d = np.asarray(round_half_away(h), dtype=float) - np.asarray(h, dtype=float)
    return {a: float(np.prod(d ** (2 * np.asarray(a, dtype=float)))) for a in J}


@dataclass
class Underestimator:
    h: np.ndarray
    b: dict[Monomial, float]
    kind: str = "Glob"
    z: float | None = None
    sigma_degree: int | None = None

    @property
    def n(self) -> int:
        return len(self.h)

    @property
    def J(self) -> list[Monomial]:
        return list(self.b)

    @property
    def w(self) -> dict[Monomial, float]:
        return shift_weights(self.h, self.J)

    @property
    def degree(self) -> int:
        used = [2 * sum(a) for a, c in self.b.items() if c != 0.0]
        return max(used, default=0)

    def value_at_round(self) -> float:
        w = self.w
        return math.fsum(self.b[a] * w[a] for a in self.b)

    def __call__(self, x) -> float:
        return eval_g(self, x)

    def evaluate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        sq = (pts - self.h) ** 2
        out = np.zeros(pts.shape[0])
        for a, c in self.b.items():
            out += c * np.prod(sq ** np.asarray(a, dtype=float), axis=1)
        return out

    def polynomial(self) -> Polynomial:
        g = Polynomial.zero(self.n)
        for a, c in self.b.items():
            g = g + shifted_monomial(self.h, a) * c
        return g

    def to_dict(self) -> dict:
        w = self.w
        return {
            "kind": self.kind,
            "h": [float(v) for v in self.h],
            "terms": [{"alpha": list(a), "b": c, "w": w[a]} for a, c in self.b.items()],
            "z": self.z,
            "sigma_degree": self.sigma_degree,
            "bound": self.value_at_round(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Underestimator":
        return cls(
            h=np.asarray(data["h"], dtype=float),
            b={tuple(t["alpha"]): float(t["b"]) for t in data["terms"]},
            kind=data.get("kind", "Glob"),
            z=data.get("z"),
            sigma_degree=data.get("sigma_degree"),
        )


def eval_g(g: Underestimator, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValueError(f"expected a point of dimension {g.n}")
    sq = (x - g.h) ** 2
    return math.fsum(c * float(np.prod(sq ** np.asarray(a, dtype=float))) for a, c in g.b.items())


@dataclass
class UnderestimateResult:
    g: Underestimator | None
    lower_bound: float
    status: SdpStatus
    safety: float = DELTA_SAFETY
    sigma: Polynomial | None = None
    z: float | None = None
    sos: SosBound | None = field(default=None, repr=False)
    # the programs are solved for f divided by this factor, so solver
    # tolerances apply to bounds measured in units of it
    objective_scale: float = 1.0

    @property
    def ok(self) -> bool:
        return self.status == SdpStatus.OPTIMAL and self.g is not None

    def to_dict(self) -> dict:
        return {
            "schema": "intpolymin.underestimator/1",
            "status": self.status.value,
            "lower_bound": self.lower_bound,
            "safety": self.safety,
            "z": self.z,
            "g": None if self.g is None else self.g.to_dict(),
        }


def default_J(f: Polynomial) -> list[Monomial]:
    return monomials_up_to(f.n, f.degree // 2)


def _build(f: Polynomial, h, J, sigma_deg: int | None, z: float | None) -> SosProgram:
    """The GLOB program, or SLS when ``sigma_deg`` is given.

    Both are set up in the coordinates ``Y = X - h`` where the shifted
    monomials are plain monomials, with ``f`` divided by its largest
    coefficient there.  Either change leaves the programs equivalent and keeps
    the SDP well scaled when ``h`` is far from the origin.
    """
    if f.is_zero() or f.degree % 2:
        raise SosError("f must have even positive degree")
    h = np.asarray(h, dtype=float)
    n = f.n
    J = list(J) if J is not None else default_J(f)
    w = shift_weights(h, J)
    fh = translate(f, h)
    scale = _balancing_scale(fh)
    fh = _scale_vars(fh, scale)
    kappa = max(abs(c) for c in fh.terms.values())
    F = fh * (1.0 / kappa)
    sp = SosProgram(n)
    terms: dict[str, Polynomial] = {}
    names = {}
    for a in J:
        name = "b" + "_".join(map(str, a))
        names[a] = name
        sp.add_var(name, nonneg=any(a))
        sp.objective[name] = w[a] / scale ** (2 * sum(a))
        terms[name] = -Polynomial.monomial(tuple(2 * v for v in a))
    deg = max(F.degree, 2 * max(sum(a) for a in J))
    if sigma_deg is not None:
        # sigma = sum_beta s_beta Y^beta is SOS; main constraint gets -sigma * (z - F)
        zf = Polynomial.constant(n, float(z) / kappa) - F
        sig_terms = {}
        for beta in monomials_up_to(n, sigma_deg):
            name = "s" + "_".join(map(str, beta))
            sp.add_var(name)
            mono = Polynomial.monomial(beta)
            terms[name] = -(mono * zf)
            sig_terms[name] = mono
        deg = max(deg, F.degree + sigma_deg)
        sp.add_sos(F, terms, basis=(tuple(monomials_up_to(n, deg // 2)),), name="main")
        sp.add_sos(Polynomial.zero(n), sig_terms,
                   basis=(tuple(monomials_up_to(n, sigma_deg // 2)),), name="sigma")
    else:
        sp.add_sos(F, terms, basis=(tuple(monomials_up_to(n, deg // 2)),), name="main")
    sp._names = names  # type: ignore[attr-defined]
    sp._kappa = kappa  # type: ignore[attr-defined]
    sp._scale = scale  # type: ignore[attr-defined]
    return sp


def _balancing_scale(fh: Polynomial) -> float:
    """``s`` making the quadratic and top-degree parts of ``fh(sW)`` comparable."""
    d = fh.degree
    if d <= 2:
        return 1.0
    top = max(abs(c) for a, c in fh.items() if sum(a) == d)
    quad = max((abs(c) for a, c in fh.items() if sum(a) == 2), default=0.0)
    if quad <= 0.0 or top <= 0.0:
        return 1.0
    return float((quad / top) ** (1.0 / (d - 2)))


def _scale_vars(f: Polynomial, s: float) -> Polynomial:
    return Polynomial(f.n, {a: c * s ** sum(a) for a, c in f.items()})


def _result(sp: SosProgram, sol: SosBound, h, kind: str, safety: float,
            z: float | None = None, sigma_deg: int | None = None) -> UnderestimateResult:
    if not sol.ok:
        return UnderestimateResult(None, -math.inf, sol.status, safety, z=z, sos=sol,
                                   objective_scale=sp._kappa)  # type: ignore[attr-defined]
    names = sp._names  # type: ignore[attr-defined]
    kappa = sp._kappa  # type: ignore[attr-defined]
    scale = sp._scale  # type: ignore[attr-defined]
    b = {}
    for a, name in names.items():
        v = kappa * sol.variables[name] / scale ** (2 * sum(a))
        b[a] = max(v, 0.0) if any(a) else v
    g = Underestimator(np.asarray(h, dtype=float), b, kind, z, sigma_deg)
    sigma = None
    if sigma_deg is not None:
        sig_w = gram_polynomial(sp.constraints[1].basis[0], sol.grams[1][0], sp.n)
        sig_y = _scale_vars(sig_w, 1.0 / scale)
        sigma = translate(sig_y, -np.asarray(h, dtype=float))
    return UnderestimateResult(g, g.value_at_round() - safety, sol.status, safety, sigma, z, sol,
                               objective_scale=kappa)


def solve_glob(f: Polynomial, h, J: Sequence[Monomial] | None = None,
               safety: float = DELTA_SAFETY, opts: SdpOptions | None = None) -> UnderestimateResult:
    """Best global underestimator in cone(h) at ``round(h)``."""
    sp = _build(f, h, J, None, None)
    return _result(sp, solve_program(sp, opts), h, "Glob", safety)


def solve_sls(f: Polynomial, h, z: float | None = None, k: int = 2,
              J: Sequence[Monomial] | None = None, safety: float = DELTA_SAFETY,
              opts: SdpOptions | None = None) -> UnderestimateResult:
    """Underestimator valid on the sublevel set ``{f <= z}``.

    ``k`` is the degree of the SOS multiplier; ``z`` defaults to ``f(round(h))``.
    A negative ``k`` drops the multiplier and reproduces :func:`solve_glob`.
    """
    q = round_half_away(h)
    fq = f(q.astype(float))
    if z is None:
        z = fq
    elif z < fq - 1e-12 * max(1.0, abs(fq)):
        raise ValueError(f"z={z} is below f(round(h))={fq}; the sublevel set may miss every integer")
    if k < 0:
        res = solve_glob(f, h, J, safety, opts)
        res.z = z
        return res
    if k % 2:
        raise ValueError("multiplier degree must be even")
    sp = _build(f, h, J, k, z)
    return _result(sp, solve_program(sp, opts), h, "Sls", safety, z, k)


# ---------------------------------------------------------------------------
# choice of the shift point


def _grad_hess(f: Polynomial, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    step = 1e-4 * np.maximum(1.0, np.abs(x))
    pts = [x]
    for i in range(n):
        e = np.zeros(n)
        e[i] = step[i]
        pts += [x + e, x - e]
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step[i]
            ej[j] = step[j]
            pts += [x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej]
    v = f.evaluate_many(np.array(pts))
    f0 = v[0]
    g = np.empty(n)
    H = np.empty((n, n))
    for i in range(n):
        fp, fm = v[1 + 2 * i], v[2 + 2 * i]
        g[i] = (fp - fm) / (2 * step[i])
        H[i, i] = (fp - 2 * f0 + fm) / step[i] ** 2
    k = 1 + 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            pp, pm, mp, mm = v[k:k + 4]
            k += 4
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * step[i] * step[j])
    return g, H


def _fd_grad(f: Polynomial, x: np.ndarray) -> np.ndarray:
    n = x.size
    step = 1e-6 * np.maximum(1.0, np.abs(x))
    pts = np.repeat(x[None, :], 2 * n, axis=0)
    for i in range(n):
        pts[2 * i, i] += step[i]
        pts[2 * i + 1, i] -= step[i]
    v = f.evaluate_many(pts)
    return (v[0::2] - v[1::2]) / (2 * step)


def local_descent(f: Polynomial, x0, max_iter: int = 100, gtol: float = 1e-10) -> np.ndarray:
    """Damped Newton with finite-difference derivatives and backtracking."""
    x = np.asarray(x0, dtype=float).copy()
    fx = f(x)
    for _ in range(max_iter):
        g = _fd_grad(f, x)
        if np.linalg.norm(g) <= gtol * max(1.0, abs(fx)):
            break
        _, H = _grad_hess(f, x)
        w, V = np.linalg.eigh(H)
        # shift the Hessian to be safely positive definite
        w = np.maximum(np.abs(w), 1e-8 * max(1.0, np.abs(w).max()))
        step = -(V @ ((V.T @ g) / w))
        t = 1.0
        for _ in range(40):
            cand = x + t * step
            fc = f(cand)
            if fc <= fx + 1e-4 * t * (g @ step):
                break
            t *= 0.5
        else:
            break
        x, fx = cand, fc
        if np.linalg.norm(t * step) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            break
    return x


def choose_h(f: Polynomial, R: float | None = None, starts: int = 20, seed: int = 0) -> np.ndarray:
    """Approximate continuous minimiser of ``f`` by multistart local descent.

    Starts are the origin plus ``starts - 1`` uniform points in ``[-R, R]^n``.
    """
    n = f.n
    box = 10.0 if R is None or not math.isfinite(R) else max(float(R), 1.0)
    rng = np.random.default_rng(seed)
    inits = [np.zeros(n)] + [rng.uniform(-box, box, n) for _ in range(starts - 1)]
    best, best_val = None, math.inf
    for x0 in inits:
        x = local_descent(f, x0)
        v = f(x)
        if v < best_val:
            best, best_val = x, v
    return best


def quality_ratio(f: Polynomial, h, bound: float, x_star) -> float | str:
    """``(g(round h) - f(h)) / (f(x*) - f(h))``; ``EXACT`` when the denominator vanishes."""
    fh = f(np.asarray(h, dtype=float))
    den = f(np.asarray(x_star, dtype=float)) - fh
    if abs(den) <= 1e-12:
        return EXACT
    q = (bound - fh) / den
    eps = 1e-6
    if q < -eps or q > 1 + eps:
        log.info("quality ratio %.6g outside [0, 1]", q)
    return float(q)
