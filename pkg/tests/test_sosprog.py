import numpy as np
import pytest

from intpolymin.bounds import sphere_samples
from intpolymin.instances import InstanceSpec, generate_instance
from intpolymin.poly import Polynomial, component, homogeneous_components, parse
from intpolymin.sdpsolve import SdpOptions, SdpStatus, solve
from intpolymin.sosprog import (
    SosError, SosProgram, compile, convergence_sweep, gram_polynomial, nie_bound,
    solve_program, sphere_min_bound, sphere_polynomial, unconstrained_lower_bound,
)

GAP = SdpOptions().gap_tol


def one_var_program(text):
    f = parse(text, 1)
    sp = SosProgram(1)
    sp.add_var("y1")
    sp.objective = {"y1": 1.0}
    sp.add_sos(f, {"y1": Polynomial.constant(1, -1.0)})
    return sp


@pytest.mark.parametrize("text, value", [
    ("x1^2", 0.0),
    ("x1^2 - 2*x1 + 1 + 3", 3.0),
    ("x1^4 - 2*x1^2 + 1", 0.0),
])
def test_compile_examples(text, value):
    sp = one_var_program(text)
    prob = compile(sp)
    assert prob.num_vars >= 1
    out = solve_program(sp)
    assert out.ok
    assert abs(out.value - value) < 1e-6
    assert out.max_residual <= 1e-6


def test_certificate_identity():
    f = parse("x1^4 - 2*x1^2*x2 + 3*x2^2 + x1 + 1", 2)
    out = unconstrained_lower_bound(f)
    assert out.ok
    sigma = Polynomial.zero(2)
    for blk, Q in zip(out.bases[0], out.grams[0]):
        assert np.linalg.eigvalsh(Q).min() >= -1e-8
        sigma = sigma + gram_polynomial(blk, Q, 2)
    diff = f - out.value - sigma
    assert max((abs(c) for c in diff.terms.values()), default=0.0) <= 1e-6


def test_unconstrained_examples(univariate):
    assert abs(unconstrained_lower_bound(parse("x1^2 + x2^2 + 1", 2)).value - 1) < 1e-6
    assert abs(unconstrained_lower_bound(parse("x1^2 - x1 + 0.25", 2)).value) < 1e-6
    out = unconstrained_lower_bound(univariate)
    f_h = univariate([0.3])
    assert out.ok and -1e-4 <= out.value <= f_h + 1e-6
    with pytest.raises(SosError):
        unconstrained_lower_bound(parse("x1^3", 1))


def test_motzkin_is_not_reported_optimal():
    motzkin = parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2)
    assert unconstrained_lower_bound(motzkin).status != SdpStatus.OPTIMAL


def test_infeasible_program():
    # -x1^2 - y is never SOS
    sp = SosProgram(1)
    sp.add_var("y", nonneg=True)
    sp.objective = {"y": 1.0}
    sp.add_sos(parse("-x1^2", 1), {"y": Polynomial.constant(1, -1.0)})
    assert solve_program(sp).status == SdpStatus.INFEASIBLE


def test_sphere_examples(variety, diophantine):
    assert abs(sphere_min_bound(parse("x1^2 + x2^2", 2), 2, 2).value - 1) < 1e-6
    out = sphere_min_bound(component(variety, 2), 2, 4)
    assert abs(out.value + 2.0) < 0.05
    out = sphere_min_bound(component(diophantine, 6), 6, 8)
    assert abs(out.value - 2.59) < 0.1
    assert out.multipliers[0] is not None


def test_nie_examples():
    assert abs(nie_bound(parse("x1^4 + x2^4 + x3^4", 3)).value - 1) < 1e-6
    assert nie_bound(parse("x1^4 + x2^4 + x1^2*x2^2", 2)).value >= 1 - 1e-6
    assert nie_bound(parse("x1^2 + 4*x1*x2 + x2^2", 2)).value <= -1 + 1e-6
    with pytest.raises(SosError):
        nie_bound(parse("x1^3", 1))


def test_sweep_constant_on_sphere():
    for out in convergence_sweep(sphere_polynomial(3, 2), 2, [2, 4, 6]):
        assert abs(out.value - 1) < 1e-6


def test_sweep_diophantine_f1(diophantine):
    a, b = convergence_sweep(component(diophantine, 1), 6, [6, 8])
    assert b.value >= a.value - 10 * GAP
    assert abs(b.value + 60.49) < 0.5


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_sweep_random_form(seed):
    f4 = homogeneous_components(generate_instance(InstanceSpec(2, 4, seed)))[4]
    outs = convergence_sweep(f4, 2, [2, 4, 6])
    vals = [o.value for o in outs if o.ok]
    assert len(vals) == 3
    assert all(b >= a - 10 * GAP for a, b in zip(vals, vals[1:]))
    X = sphere_samples(2, 2, 10_000, np.random.default_rng(seed))
    assert vals[-1] <= f4.evaluate_many(X).min() + 1e-6


def test_sweep_requires_increasing():
    with pytest.raises(SosError):
        convergence_sweep(sphere_polynomial(2, 2), 2, [4, 2])


@pytest.mark.parametrize("seed", range(5))
def test_soundness_by_sampling(seed):
    f = generate_instance(InstanceSpec(2, 4, seed))
    rng = np.random.default_rng(seed)
    for j, fj in enumerate(homogeneous_components(f)):
        if j == 0 or fj.is_zero():
            continue
        out = sphere_min_bound(fj, 2, 4)
        assert out.ok
        X = sphere_samples(2, 2, 10_000, rng)
        assert fj.evaluate_many(X).min() >= out.value - 1e-6
    out = unconstrained_lower_bound(f)
    if out.ok:
        X = rng.uniform(-5, 5, size=(10_000, 2))
        assert f.evaluate_many(X).min() >= out.value - 1e-6
