"""Shared scanners for seeded instances."""

from functools import lru_cache

from intpolymin.bounds import Definiteness, compute_norm_bound
from intpolymin.instances import InstanceSpec, generate_instance


@lru_cache(maxsize=None)
def certified(n: int, d: int, count: int, p: int = 2, max_seed: int = 5000):
    """First ``count`` seeds whose leading form is certified, with their reports."""
    out = []
    for seed in range(max_seed):
        f = generate_instance(InstanceSpec(n, d, seed))
        rep = compute_norm_bound(f, p)
        if rep.definite == Definiteness.CERTIFIED_POSITIVE:
            out.append((seed, f, rep))
            if len(out) == count:
                break
    return tuple(out)
