"""Depth-first branch and bound over the integer points of a p-norm ball.

Subproblems fix a prefix ``r`` of the coordinates.  With an underestimator
``g`` from cone(h) the slice ``t -> g(r, t, round(h_{m+2}), ...)`` bounds every
point of the subtree whose next coordinate is ``t`` and is unimodal around
``h_{m+1}``, so the surviving range of ``t`` is an interval found by binary
search.  Brute force enumeration and a continuous relaxation (an SOS lower
bound per node) serve as baselines.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .poly import Polynomial, fix_prefix
from .sdpsolve import SdpOptions
from .sosprog import SosError, unconstrained_lower_bound
from .underest import DELTA_SAFETY, Underestimator, round_half_away

log = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 10_000_000


class Strategy(str, Enum):
    GLOB = "UnderestimatorGlob"
    SLS = "UnderestimatorSls"
    CR = "ContinuousRelaxation"
    BF = "BruteForce"

    @classmethod
    def from_name(cls, name: str) -> "Strategy":
        table = {"glob": cls.GLOB, "sls": cls.SLS, "cr": cls.CR, "bf": cls.BF}
        try:
            return table[name.lower()]
        except KeyError:
            return cls(name)


class BnbError(ValueError):
    pass


@dataclass(frozen=True)
class Subproblem:
    m: int
    r: tuple[int, ...]


@dataclass(frozen=True)
class PrunedRange:
    """Subtrees with first coordinates ``(*prefix, t)`` for ``lo <= t <= hi``."""

    prefix: tuple[int, ...]
    lo: int
    hi: int


@dataclass
class BnbOptions:
    safety: float = DELTA_SAFETY
    time_limit: float | None = 300.0
    record_pruned: bool = False
    sdp: SdpOptions | None = None


@dataclass
class BnbResult:
    x_star: tuple[int, ...]
    u: float
    strategy: Strategy
    status: str = "Optimal"
    nodes_expanded: int = 0
    g_evals: int = 0
    pruned: int = 0
    elapsed: float = 0.0
    max_endpoint_evals: int = 0
    endpoint_budget_ok: bool = True
    sos_failures: int = 0
    pruned_ranges: list[PrunedRange] = field(default_factory=list, repr=False)

    @property
    def solved(self) -> bool:
        return self.status == "Optimal"

    def to_dict(self) -> dict:
        return {
            "schema": "intpolymin.bnb/1",
            "strategy": self.strategy.value,
            "status": self.status,
            "x_star": list(self.x_star),
            "u": self.u,
            "nodes": self.nodes_expanded,
            "prunes": self.pruned,
            "g_evals": self.g_evals,
            "wall_time": self.elapsed,
        }


def ball_slack(R: float, p: float, r: Sequence[int]) -> int:
    """``floor((R^p - sum |r_i|^p)^(1/p))``, or -1 if ``r`` lies outside the ball."""
    rest = R ** p - math.fsum(abs(v) ** p for v in r)
    if rest < -1e-9 * max(1.0, R ** p):
        return -1
    rest = max(rest, 0.0)
    L = rest ** (1.0 / p)
    return int(math.floor(L + 1e-9 * max(1.0, L)))


def endpoint_budget(L: int) -> int:
    return (math.ceil(math.log2(L)) if L > 0 else 0) + 2


@dataclass
class IntervalSearch:
    interval: tuple[int, int] | None
    evals: int
    left_evals: int = 0
    right_evals: int = 0


def prune_interval(g_slice: Callable[[int], float], h_k: float, L: int, u: float) -> IntervalSearch:
    """Smallest and largest ``t`` in ``[-L, L]`` with ``g_slice(t) <= u``.

    ``g_slice`` must be nonincreasing up to ``h_k`` and nondecreasing after it.
    Evaluation counts per endpoint exclude the shared evaluation at the
    clamped centre.
    """
    c = int(min(max(int(round_half_away(h_k)), -L), L))
    if g_slice(c) > u:
        return IntervalSearch(None, 1)

    def search(inner: int, outer: int) -> tuple[int, int]:
        # inner is known feasible; find the last feasible point towards outer
        if inner == outer:
            return inner, 0
        count = 1
        if g_slice(outer) <= u:
            return outer, count
        lo, hi = inner, outer
        while abs(hi - lo) > 1:
            mid = (lo + hi) // 2
            count += 1
            if g_slice(mid) <= u:
                lo = mid
            else:
                hi = mid
        return lo, count

    L2, right = search(c, L)
    L1, left = search(c, -L)
    return IntervalSearch((L1, L2), 1 + left + right, left, right)


def _ordered_children(lo: int, hi: int, h_k: float) -> list[int]:
    """Children in push order: the one closest to ``h_k`` is pushed last (popped first)."""
    ts = sorted(range(lo, hi + 1), key=lambda t: (abs(t - h_k), t))
    return ts[::-1]


def _check_inputs(f: Polynomial, h, R: float, p: float):
    if not (math.isfinite(R) and R >= 0):
        raise BnbError(f"invalid radius {R}")
    if len(h) != f.n:
        raise BnbError("shift point has the wrong dimension")
    if p <= 0:
        raise BnbError("p must be positive")


def minimize(f: Polynomial, h, R: float, p: float, g: Underestimator | None = None,
             strategy: Strategy | str | None = None, opts: BnbOptions | None = None) -> BnbResult:
    """Exact integer minimiser of ``f`` inside ``||x||_p <= R``.

    With ``g`` given the search prunes with the cone(h) slices; with strategy
    CR it bounds every subproblem by an unconstrained SOS relaxation instead.
    """
    opts = opts or BnbOptions()
    h = np.asarray(h, dtype=float)
    _check_inputs(f, h, R, p)
    if strategy is None:
        strategy = Strategy.CR if g is None else (Strategy.SLS if g.kind == "Sls" else Strategy.GLOB)
    strategy = Strategy.from_name(strategy) if isinstance(strategy, str) else strategy
    if strategy == Strategy.BF:
        return brute_force(f, R, p)
    if strategy in (Strategy.GLOB, Strategy.SLS) and g is None:
        raise BnbError("underestimator strategies need g")
    if g is not None and g.n != f.n:
        raise BnbError("underestimator has the wrong dimension")

    n = f.n
    delta = opts.safety
    hr = round_half_away(h)
    x_star = tuple(int(v) for v in hr)
    u = f(np.asarray(x_star, dtype=float))
    res = BnbResult(x_star, u, strategy)
    t0 = time.perf_counter()
    stack: list[Subproblem] = [Subproblem(0, ())]
    hr_f = hr.astype(float)

    while stack:
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            res.status = "TimeLimit"
            break
        sub = stack.pop()
        res.nodes_expanded += 1
        m, r = sub.m, sub.r
        if m == n:
            val = f(np.asarray(r, dtype=float))
            if val < u:
                u, x_star = val, r
            continue
        L = ball_slack(R, p, r)
        if L < 0:
            continue

        if strategy == Strategy.CR:
            lb = cr_bound(sub, f, opts.sdp)
            if lb is None:
                res.sos_failures += 1
                lb = -math.inf
            if lb - delta > u:
                res.pruned += 1
                if opts.record_pruned:
                    res.pruned_ranges.append(_node_range(r, L))
                continue
            lo, hi = -L, L
        else:
            point = np.concatenate([np.asarray(r, dtype=float), hr_f[m:]])

            def g_slice(t: int, point=point, m=m) -> float:
                res.g_evals += 1
                point[m] = t
                return g(point)

            # prune on the slice minimum, a safe stand-in for the test at round(h_{m+1})
            if g_slice(int(hr[m])) - delta > u:
                res.pruned += 1
                if opts.record_pruned:
                    res.pruned_ranges.append(_node_range(r, L))
                continue
            found = prune_interval(lambda t: g_slice(t) - delta, float(h[m]), L, u)
            res.max_endpoint_evals = max(res.max_endpoint_evals, found.left_evals, found.right_evals)
            if L > 0 and max(found.left_evals, found.right_evals) > endpoint_budget(L):
                res.endpoint_budget_ok = False
            if found.interval is None:
                res.pruned += 1
                if opts.record_pruned:
                    res.pruned_ranges.append(PrunedRange(r, -L, L))
                continue
            lo, hi = found.interval
            if opts.record_pruned:
                if lo > -L:
                    res.pruned_ranges.append(PrunedRange(r, -L, lo - 1))
                if hi < L:
                    res.pruned_ranges.append(PrunedRange(r, hi + 1, L))
        for t in _ordered_children(lo, hi, float(h[m])):
            stack.append(Subproblem(m + 1, r + (t,)))

    res.elapsed = time.perf_counter() - t0
    res.x_star = tuple(int(v) for v in x_star)
    res.u = f(np.asarray(res.x_star, dtype=float))
    return res


def _node_range(r: tuple[int, ...], L: int) -> PrunedRange:
    if not r:
        return PrunedRange((), -L, L)
    return PrunedRange(r[:-1], r[-1], r[-1])


def cr_bound(sub: Subproblem, f: Polynomial, opts: SdpOptions | None = None) -> float | None:
    """SOS lower bound on ``f`` with the prefix fixed; None when the solve fails."""
    if sub.m == f.n:
        return f(np.asarray(sub.r, dtype=float))
    fr = fix_prefix(f, sub.r)
    if fr.is_zero():
        return 0.0
    if fr.degree == 0:
        return fr.coefficient((0,) * fr.n)
    try:
        out = unconstrained_lower_bound(fr, opts)
    except SosError:
        return None
    if not out.ok:
        return None
    return out.value


# ---------------------------------------------------------------------------
# brute force


def lattice_ball(R: float, p: float, n: int, prefix: Sequence[int] = (), cap: int = BRUTE_FORCE_CAP) -> np.ndarray:
    """All integer points ``x`` with ``||x||_p <= R`` and the given leading coordinates."""
    m = len(prefix)
    pts = np.asarray([list(prefix)], dtype=np.int64).reshape(1, m)
    for _ in range(m, n):
        used = np.sum(np.abs(pts.astype(float)) ** p, axis=1)
        rest = np.maximum(R ** p - used, 0.0)
        Ls = np.floor(rest ** (1.0 / p) + 1e-9 * np.maximum(1.0, rest ** (1.0 / p))).astype(np.int64)
        Ls[used > R ** p * (1 + 1e-9) + 1e-9] = -1
        counts = 2 * Ls + 1
        counts[Ls < 0] = 0
        total = int(counts.sum())
        if total > cap:
            raise BnbError(f"lattice point count exceeds the cap of {cap}")
        rep = np.repeat(pts, counts, axis=0)
        starts = np.repeat(-Ls, counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pts = np.hstack([rep, (starts + offsets)[:, None]])
    return pts


def _point_key(x: Sequence[int]):
    return (sum(abs(v) for v in x), tuple(x))


def brute_force(f: Polynomial, R: float, p: float, cap: int = BRUTE_FORCE_CAP,
                batch: int = 1_000_000) -> BnbResult:
    """Exact minimum over the lattice points of the ``p``-ball of radius ``R``."""
    if not (math.isfinite(R) and R >= 0):
        raise BnbError(f"invalid radius {R}")
    t0 = time.perf_counter()
    pts = lattice_ball(R, p, f.n, cap=cap)
    vals = np.empty(len(pts))
    for s in range(0, len(pts), batch):
        vals[s:s + batch] = f.evaluate_many(pts[s:s + batch].astype(float))
    vmin = vals.min()
    near = np.nonzero(vals <= vmin + 1e-9 * (1.0 + abs(vmin)))[0]
    best = None
    for i in near:
        x = tuple(int(v) for v in pts[i])
        v = f(np.asarray(x, dtype=float))
        if best is None or v < best[0] or (v == best[0] and _point_key(x) < _point_key(best[1])):
            best = (v, x)
    return BnbResult(best[1], best[0], Strategy.BF, nodes_expanded=len(pts),
                     elapsed=time.perf_counter() - t0)
