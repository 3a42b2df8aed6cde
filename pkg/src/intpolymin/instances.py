"""Seeded random instances with coefficients uniform on (-1, 1).

The generator is xoshiro256** seeded through SplitMix64, written out here so
that instance files are reproducible bit for bit on any platform.  Uniform
reals take the top 53 bits of a draw.  Coefficients are drawn in graded-lex
order of the exponents, and whole instances are redrawn until every pure
power of top degree has a positive coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

from .poly import Polynomial, monomials_up_to

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** 1.0."""

    def __init__(self, seed: int):
        state = seed & MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def unit(self) -> float:
        """Uniform on [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def symmetric(self) -> float:
        """Uniform on the open interval (-1, 1)."""
        while True:
            u = self.unit()
            if u != 0.0:
                return 2.0 * u - 1.0


@dataclass(frozen=True)
class InstanceSpec:
    n: int
    d: int
    seed: int

    @property
    def ident(self) -> str:
        return f"n{self.n}-d{self.d}-s{self.seed}"


def satisfies_condition_a(f: Polynomial, d: int) -> bool:
    for i in range(f.n):
        a = [0] * f.n
        a[i] = d
        if not f.coefficient(tuple(a)) > 0:
            return False
    return True


def generate_instance(spec: InstanceSpec, max_tries: int = 100_000) -> Polynomial:
    if spec.d < 0 or spec.d % 2:
        raise ValueError("d must be even and nonnegative")
    if spec.n < 1:
        raise ValueError("n must be positive")
    rng = Xoshiro256(spec.seed)
    basis = monomials_up_to(spec.n, spec.d)
    for _ in range(max_tries):
        f = Polynomial(spec.n, {a: rng.symmetric() for a in basis})
        if satisfies_condition_a(f, spec.d):
            return f
    raise RuntimeError("no instance satisfying the pure-power condition found")
