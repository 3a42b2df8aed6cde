"""Sum-of-squares programs and their compilation to block SDPs.

An :class:`SosProgram` maximises a linear form in scalar decision variables
subject to constraints of the form ``a_0 + sum_i y_i a_i`` being a sum of
squares.  A constraint may also carry a ``modulo`` polynomial ``g``; it then
asks for ``a_0 + sum_i y_i a_i + q g`` to be SOS for some free polynomial
``q``.  That case is handled by working in the quotient ring: Gram bases are
restricted to standard monomials (not divisible by the leading monomial of
``g``) and coefficients are matched after reduction to normal form.

Compilation produces the moment side of the program as an LMI in the format
of :mod:`intpolymin.sdpsolve`.  Equalities coming from free decision variables
are removed by a null-space parameterisation.  The solver's dual matrices on
the moment blocks are the Gram matrices of the SOS certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg as sla

from .poly import (
    Monomial,
    Polynomial,
    component,
    grlex_key,
    homogeneous_components,
    is_homogeneous,
    monomials_of_degree,
    monomials_up_to,
)
from .sdpsolve import SdpBlock, SdpOptions, SdpProblem, SdpSolution, SdpStatus, solve

IDENTITY_TOL = 1e-6


class SosError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quotient arithmetic modulo a single polynomial


class Reducer:
    """Normal forms modulo the principal ideal generated by ``g``.

    ``g`` is a single polynomial, hence a Groebner basis for any term order;
    graded lex is used so reduction never raises the degree.
    """

    def __init__(self, g: Polynomial | None):
        self.g = g
        if g is None:
            self.lead = None
            return
        if g.is_zero() or g.degree == 0:
            raise SosError("modulus must be a nonconstant polynomial")
        self.lead = max(g.terms, key=grlex_key)
        lc = g.coefficient(self.lead)
        self.tail = [(b, -c / lc) for b, c in g.items() if b != self.lead]
        self.lc = lc
        self._memo: dict[Monomial, dict[Monomial, float]] = {}

    def is_standard(self, alpha: Monomial) -> bool:
        if self.lead is None:
            return True
        return any(a < l for a, l in zip(alpha, self.lead))

    def monomial_nf(self, alpha: Monomial) -> dict[Monomial, float]:
        if self.is_standard(alpha):
            return {alpha: 1.0}
        hit = self._memo.get(alpha)
        if hit is not None:
            return hit
        rest = tuple(a - l for a, l in zip(alpha, self.lead))
        out: dict[Monomial, float] = {}
        for beta, c in self.tail:
            shifted = tuple(r + b for r, b in zip(rest, beta))
            for gamma, v in self.monomial_nf(shifted).items():
                out[gamma] = out.get(gamma, 0.0) + c * v
        out = {k: v for k, v in out.items() if v != 0.0}
        self._memo[alpha] = out
        return out

    def nf_terms(self, terms: Mapping[Monomial, float]) -> dict[Monomial, float]:
        out: dict[Monomial, float] = {}
        for alpha, c in terms.items():
            for gamma, v in self.monomial_nf(alpha).items():
                out[gamma] = out.get(gamma, 0.0) + c * v
        return out

    def divide(self, f: Polynomial) -> tuple[Polynomial, Polynomial]:
        """``f = q g + r`` with ``r`` in normal form."""
        if self.lead is None:
            return Polynomial.zero(f.n), f
        rem = dict(f.terms)
        quot: dict[Monomial, float] = {}
        while True:
            cands = [a for a, c in rem.items() if c != 0.0 and not self.is_standard(a)]
            if not cands:
                break
            alpha = max(cands, key=grlex_key)
            c = rem.pop(alpha) / self.lc
            shift = tuple(a - l for a, l in zip(alpha, self.lead))
            quot[shift] = quot.get(shift, 0.0) + c
            for beta, gc in self.g.items():
                if beta == self.lead:
                    continue
                key = tuple(s + b for s, b in zip(shift, beta))
                rem[key] = rem.get(key, 0.0) - c * gc
        return Polynomial(f.n, quot), Polynomial(f.n, rem)


# ---------------------------------------------------------------------------
# program description


@dataclass(frozen=True)
class SosConstraint:
    """``const + sum_v y_v * terms[v] (+ q * modulo)`` must be SOS.

    ``basis`` lists Gram blocks; the certificate is block diagonal over them.
    """

    const: Polynomial
    terms: Mapping[str, Polynomial]
    basis: tuple[tuple[Monomial, ...], ...]
    modulo: Polynomial | None = None
    name: str = ""

    def evaluate(self, values: Mapping[str, float]) -> Polynomial:
        p = self.const
        for v, a in self.terms.items():
            p = p + a * float(values[v])
        return p


@dataclass
class SosProgram:
    """``max objective . y`` subject to SOS constraints; see module docstring."""

    n: int
    variables: list[str] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    constraints: list[SosConstraint] = field(default_factory=list)
    nonneg: set[str] = field(default_factory=set)

    def add_var(self, name: str, nonneg: bool = False) -> str:
        if name in self.variables:
            raise SosError(f"duplicate variable {name!r}")
        self.variables.append(name)
        if nonneg:
            self.nonneg.add(name)
        return name

    def add_sos(self, const: Polynomial, terms: Mapping[str, Polynomial] | None = None,
                basis=None, modulo: Polynomial | None = None, name: str = "") -> SosConstraint:
        terms = dict(terms or {})
        for v in terms:
            if v not in self.variables:
                raise SosError(f"undeclared variable {v!r}")
        if basis is None:
            basis = (tuple(default_basis(const, terms.values(), self.n)),)
        basis = tuple(tuple(tuple(a) for a in blk) for blk in basis if len(blk))
        con = SosConstraint(const, terms, basis, modulo, name)
        self.constraints.append(con)
        return con

    def validate(self):
        for con in self.constraints:
            deg = _max_degree([con.const, *con.terms.values()])
            if con.modulo is None and deg >= 0 and deg % 2:
                raise SosError(f"constraint {con.name or '?'} has odd degree {deg}")
        for v in self.objective:
            if v not in self.variables:
                raise SosError(f"objective uses undeclared variable {v!r}")


def _max_degree(polys) -> int:
    degs = [p.degree for p in polys if not p.is_zero()]
    return max(degs) if degs else -1


def default_basis(const: Polynomial, others, n: int) -> list[Monomial]:
    deg = _max_degree([const, *others])
    if deg < 0:
        return [(0,) * n]
    if deg % 2:
        raise SosError(f"SOS constraint of odd degree {deg}")
    return monomials_up_to(n, deg // 2)


# ---------------------------------------------------------------------------
# compilation


@dataclass
class _ConLayout:
    support: list[Monomial]
    index: dict[Monomial, int]
    offset: int
    reducer: Reducer
    # per Gram block: tensor (len(support), s, s) so that M(z) = sum_g z_g B[g]
    gram_tensors: list[np.ndarray]
    expr_const: np.ndarray
    expr_terms: dict[str, np.ndarray]


@dataclass
class CompiledSos:
    program: SosProgram
    sdp: SdpProblem | None
    layouts: list[_ConLayout]
    w0: np.ndarray
    null: np.ndarray
    value_offset: float
    a0: np.ndarray
    gram_block_index: list[list[int]]
    lp_block_index: dict[str, int]
    early_status: SdpStatus | None = None
    block_sizes: list[int] = field(default_factory=list)

    def sos_value_from_sdp(self, sdp_objective: float) -> float:
        return self.value_offset - sdp_objective


def _vec(layout_index: dict[Monomial, int], size: int, terms: Mapping[Monomial, float]) -> np.ndarray:
    v = np.zeros(size)
    for a, c in terms.items():
        v[layout_index[a]] += c
    return v


def compile_program(sp: SosProgram) -> CompiledSos:
    """Moment-side LMI for ``sp``; see :class:`CompiledSos`."""
    sp.validate()
    layouts: list[_ConLayout] = []
    offset = 0
    for con in sp.constraints:
        red = Reducer(con.modulo)
        for blk in con.basis:
            for a in blk:
                if not red.is_standard(a):
                    raise SosError(f"basis monomial {a} is not standard modulo the constraint ideal")
        prods: list[list[list[dict]]] = []
        support: set[Monomial] = set()
        for blk in con.basis:
            rows = []
            for i, a in enumerate(blk):
                row = []
                for j, b in enumerate(blk):
                    if j < i:
                        row.append(None)
                        continue
                    nf = red.monomial_nf(tuple(x + y for x, y in zip(a, b)))
                    support.update(nf)
                    row.append(nf)
                rows.append(row)
            prods.append(rows)
        expr_nf = {"": red.nf_terms(con.const.terms)}
        for v, a in con.terms.items():
            expr_nf[v] = red.nf_terms(a.terms)
        for t in expr_nf.values():
            support.update(k for k, c in t.items() if c != 0.0)
        supp = sorted(support, key=grlex_key)
        index = {a: i for i, a in enumerate(supp)}
        tensors = []
        for blk, rows in zip(con.basis, prods):
            s = len(blk)
            B = np.zeros((len(supp), s, s))
            for i in range(s):
                for j in range(i, s):
                    for gamma, c in rows[i][j].items():
                        B[index[gamma], i, j] += c
                        if i != j:
                            B[index[gamma], j, i] += c
            tensors.append(B)
        layouts.append(_ConLayout(
            support=supp, index=index, offset=offset, reducer=red, gram_tensors=tensors,
            expr_const=_vec(index, len(supp), expr_nf[""]),
            expr_terms={v: _vec(index, len(supp), expr_nf[v]) for v in con.terms},
        ))
        offset += len(supp)
    nw = offset

    def stacked(var: str | None) -> np.ndarray:
        out = np.zeros(nw)
        for lay in layouts:
            vec = lay.expr_const if var is None else lay.expr_terms.get(var)
            if vec is not None:
                out[lay.offset:lay.offset + len(lay.support)] = vec
        return out

    a0 = stacked(None)
    free = [v for v in sp.variables if v not in sp.nonneg]
    nonneg = [v for v in sp.variables if v in sp.nonneg]
    b = {v: float(sp.objective.get(v, 0.0)) for v in sp.variables}

    # equalities b_v + <a_v, w> = 0 for free variables
    if free:
        E = np.stack([stacked(v) for v in free])
        e = -np.array([b[v] for v in free])
        w0, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.linalg.norm(E @ w0 - e) > 1e-9 * (1.0 + np.linalg.norm(e)):
            return CompiledSos(sp, None, layouts, w0, np.zeros((nw, 0)), 0.0, a0, [], {},
                               early_status=SdpStatus.INFEASIBLE)
        null = sla.null_space(E, rcond=1e-12)
    else:
        w0 = np.zeros(nw)
        null = np.eye(nw)

    blocks: list[SdpBlock] = []
    gram_index: list[list[int]] = []
    for lay in layouts:
        sl = slice(lay.offset, lay.offset + len(lay.support))
        idx = []
        for B in lay.gram_tensors:
            const = np.tensordot(w0[sl], B, axes=1)
            coeffs = np.tensordot(null[sl].T, B, axes=1)
            idx.append(len(blocks))
            blocks.append(SdpBlock(const, coeffs))
        gram_index.append(idx)
    lp_index = {}
    for v in nonneg:
        av = stacked(v)
        lp_index[v] = len(blocks)
        blocks.append(SdpBlock(np.array([[-b[v] - av @ w0]]), (-(null.T @ av)).reshape(-1, 1, 1)))

    objective = -(null.T @ a0)
    # drop LMI variables that no block sees
    used = np.zeros(null.shape[1], dtype=bool)
    if null.shape[1]:
        for blk in blocks:
            used |= np.abs(blk.coeffs).reshape(null.shape[1], -1).max(axis=1) > 1e-12
    early = None
    if np.any(np.abs(objective[~used]) > 1e-12):
        early = SdpStatus.UNBOUNDED
    if not np.all(used):
        null = null[:, used]
        objective = objective[used]
        blocks = [SdpBlock(blk.const, blk.coeffs[used]) for blk in blocks]
    sdp = SdpProblem(objective, tuple(blocks)) if null.shape[1] and blocks else None
    if sdp is None and early is None:
        # nothing left to optimise: the constant LMI is either satisfied or not
        psd = all(np.linalg.eigvalsh(blk.const).min() >= -1e-12 for blk in blocks)
        early = SdpStatus.OPTIMAL if psd else SdpStatus.INFEASIBLE
    comp = CompiledSos(sp, sdp, layouts, w0, null, float(a0 @ w0), a0, gram_index, lp_index,
                       early_status=early)
    comp.block_sizes = [blk.const.shape[0] for blk in blocks]
    return comp


def compile(sp: SosProgram) -> SdpProblem:
    """The LMI of ``sp``'s moment side (see :func:`compile_program`)."""
    c = compile_program(sp)
    if c.sdp is None:
        raise SosError(f"program reduces to a trivial SDP ({c.early_status})")
    return c.sdp


# ---------------------------------------------------------------------------
# solutions


@dataclass
class SosBound:
    value: float
    status: SdpStatus
    variables: dict[str, float] = field(default_factory=dict)
    grams: list[list[np.ndarray]] = field(default_factory=list)
    bases: list[tuple[tuple[Monomial, ...], ...]] = field(default_factory=list)
    multipliers: list[Polynomial | None] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    residual_l1: list[float] = field(default_factory=list)
    sdp: SdpSolution | None = None
    level: int | None = None

    @property
    def ok(self) -> bool:
        return self.status == SdpStatus.OPTIMAL

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


_SWAP = {SdpStatus.UNBOUNDED: SdpStatus.INFEASIBLE, SdpStatus.INFEASIBLE: SdpStatus.UNBOUNDED}


def gram_polynomial(basis: Sequence[Monomial], Q: np.ndarray, n: int) -> Polynomial:
    terms: dict[Monomial, float] = {}
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            key = tuple(x + y for x, y in zip(a, b))
            terms[key] = terms.get(key, 0.0) + Q[i, j]
    return Polynomial(n, terms)


def solve_program(sp: SosProgram, opts: SdpOptions | None = None) -> SosBound:
    comp = compile_program(sp)
    if comp.early_status is not None and comp.early_status != SdpStatus.OPTIMAL:
        return SosBound(value=math.nan, status=_SWAP.get(comp.early_status, comp.early_status))
    if comp.sdp is None:
        sol = None
        duals = [np.zeros((k, k)) for k in comp.block_sizes]
        status = SdpStatus.OPTIMAL
    else:
        sol = solve(comp.sdp, opts)
        status = _SWAP.get(sol.status, sol.status)
        duals = sol.dual_matrices
    if status != SdpStatus.OPTIMAL:
        return SosBound(value=math.nan, status=status, sdp=sol)

    values: dict[str, float] = {}
    for v, k in comp.lp_block_index.items():
        values[v] = float(duals[k][0, 0])
    grams = [[duals[k] for k in idx] for idx in comp.gram_block_index]

    # free variables from the coefficient identities, jointly over constraints
    free = [v for v in sp.variables if v not in sp.nonneg]
    rows_lhs, rows_rhs = [], []
    for lay, G in zip(comp.layouts, grams):
        gram_coeffs = sum(np.tensordot(B, Q, axes=([1, 2], [0, 1])) for B, Q in zip(lay.gram_tensors, G))
        rhs = gram_coeffs - lay.expr_const
        for v in sp.nonneg:
            if v in lay.expr_terms:
                rhs = rhs - values[v] * lay.expr_terms[v]
        lhs = np.zeros((len(lay.support), len(free)))
        for j, v in enumerate(free):
            if v in lay.expr_terms:
                lhs[:, j] = lay.expr_terms[v]
        rows_lhs.append(lhs)
        rows_rhs.append(rhs)
    if free:
        sol_free, *_ = np.linalg.lstsq(np.vstack(rows_lhs), np.concatenate(rows_rhs), rcond=None)
        values.update({v: float(x) for v, x in zip(free, sol_free)})

    multipliers: list[Polynomial | None] = []
    residuals, residual_l1 = [], []
    for con, lay, G in zip(sp.constraints, comp.layouts, grams):
        expr = con.evaluate(values)
        sigma = Polynomial.zero(sp.n)
        for blk, Q in zip(con.basis, G):
            sigma = sigma + gram_polynomial(blk, Q, sp.n)
        q, r = lay.reducer.divide(expr - sigma)
        multipliers.append(q if con.modulo is not None else None)
        residuals.append(max((abs(c) for c in r.terms.values()), default=0.0))
        residual_l1.append(math.fsum(abs(c) for c in r.terms.values()))

    value = sum(sp.objective.get(v, 0.0) * values[v] for v in sp.variables)
    return SosBound(value=float(value), status=status, variables=values, grams=grams,
                    bases=[con.basis for con in sp.constraints], multipliers=multipliers,
                    residuals=residuals, residual_l1=residual_l1, sdp=sol)


# ---------------------------------------------------------------------------
# named programs


def unconstrained_lower_bound(f: Polynomial, opts: SdpOptions | None = None) -> SosBound:
    """``max y  s.t.  f - y`` is SOS."""
    if f.is_zero():
        return SosBound(value=0.0, status=SdpStatus.OPTIMAL, variables={"y": 0.0})
    if f.degree % 2:
        raise SosError(f"odd degree {f.degree}: f is unbounded below")
    sp = SosProgram(f.n)
    sp.add_var("y")
    sp.objective = {"y": 1.0}
    sp.add_sos(f, {"y": Polynomial.constant(f.n, -1.0)}, name="f - y")
    return solve_program(sp, opts)


def sphere_polynomial(n: int, p: int) -> Polynomial:
    """``sum_i X_i^p``."""
    terms = {}
    for i in range(n):
        a = [0] * n
        a[i] = p
        terms[tuple(a)] = 1.0
    return Polynomial(n, terms)


def sphere_gram_degree(j: int, p: int, k: int) -> int:
    """Half degree of the Gram basis used for multiplier degree ``k``."""
    return max(j, k + p) // 2


def sphere_min_bound(fj: Polynomial, p: int, k: int, opts: SdpOptions | None = None) -> SosBound:
    """Lower bound on ``min f_j`` over the unit ``p``-sphere with a free multiplier
    of degree at most ``k`` on ``1 - sum_i X_i^p``."""
    if p < 2 or p % 2:
        raise SosError("p must be an even integer >= 2")
    if k < 0:
        raise SosError("multiplier degree must be nonnegative")
    n = fj.n
    j = 0 if fj.is_zero() else fj.degree
    g = Polynomial.constant(n, 1.0) - sphere_polynomial(n, p)
    red = Reducer(g)
    D = sphere_gram_degree(j, p, k)
    basis = [a for a in monomials_up_to(n, D) if red.is_standard(a)]
    homogeneous = is_homogeneous(fj)
    if homogeneous and j % 2 == 0:
        blocks = (tuple(a for a in basis if sum(a) % 2 == 0), tuple(a for a in basis if sum(a) % 2))
    else:
        blocks = (tuple(basis),)
    sp = SosProgram(n)
    sp.add_var("y")
    sp.objective = {"y": 1.0}
    sp.add_sos(fj, {"y": Polynomial.constant(n, -1.0)}, basis=blocks, modulo=g, name="sphere")
    out = solve_program(sp, opts)
    out.level = k
    return out


def nie_bound(fd: Polynomial, opts: SdpOptions | None = None) -> SosBound:
    """``max gamma  s.t.  f_d - gamma * sum_i X_i^d`` is SOS (``f_d`` homogeneous, ``d`` even)."""
    if fd.is_zero():
        raise SosError("zero form")
    d = fd.degree
    if d % 2 or not is_homogeneous(fd):
        raise SosError("need a homogeneous form of even degree")
    n = fd.n
    sp = SosProgram(n)
    sp.add_var("gamma")
    sp.objective = {"gamma": 1.0}
    sp.add_sos(fd, {"gamma": -sphere_polynomial(n, d)},
               basis=(tuple(monomials_of_degree(n, d // 2)),), name="nie")
    return solve_program(sp, opts)


def convergence_sweep(fj: Polynomial, p: int, k_list: Sequence[int],
                      opts: SdpOptions | None = None) -> list[SosBound]:
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise SosError("k_list must be increasing")
    return [sphere_min_bound(fj, p, k, opts) for k in k_list]


__all__ = [
    "Reducer", "SosBound", "SosConstraint", "SosError", "SosProgram", "CompiledSos",
    "compile", "compile_program", "solve_program", "unconstrained_lower_bound",
    "sphere_min_bound", "nie_bound", "convergence_sweep", "sphere_polynomial",
    "gram_polynomial", "component", "homogeneous_components",
]
