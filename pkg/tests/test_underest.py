import json
import math

import numpy as np
import pytest

from intpolymin.poly import parse
from intpolymin.sdpsolve import SdpOptions
from intpolymin.underest import (
    DELTA_SAFETY, EXACT, Underestimator, choose_h, eval_g, quality_ratio, round_half_away,
    solve_glob, solve_sls,
)
from intpolymin.bnb import brute_force

from helpers import certified

GAP = SdpOptions().gap_tol


def test_round_half_away():
    assert list(round_half_away([0.5, -0.5, 1.5, -2.5, 0.49])) == [1, -1, 2, -3, 0]


def test_choose_h(univariate):
    assert np.allclose(choose_h(parse("x1^2 - 0.6*x1 + x2^2 + 3.4*x2", 2)), [0.3, -1.7], atol=1e-6)
    assert abs(choose_h(univariate, 3.0)[0] - 0.3) < 1e-3
    assert abs(choose_h(parse("x1^4", 1))[0]) < 1e-2


def test_choose_h_stationary(univariate):
    h = choose_h(univariate, 3.0)
    step = 1e-6
    grad = (univariate(h + step) - univariate(h - step)) / (2 * step)
    assert abs(grad) <= 1e-6


def test_glob_univariate(univariate):
    res = solve_glob(univariate, [0.3])
    assert res.ok
    assert abs(res.lower_bound - 0.07) < 0.02
    big = [b for a, b in res.g.b.items() if sum(a) >= 2]
    assert all(b < 1e-6 for b in big)
    assert res.g.degree <= univariate.degree


def test_sls_univariate(univariate):
    res = solve_sls(univariate, [0.3], z=univariate([0.0]), k=2)
    assert res.ok
    assert abs(res.lower_bound - 2.84) < 0.05
    assert res.g.degree <= univariate.degree + 2


def test_trivial_cases():
    f = parse("x1^2 - x1 + 0.25", 1)
    assert abs(solve_glob(f, [0.5]).lower_bound - 0.25) < 1e-5
    assert solve_sls(f, [0.5]).lower_bound <= 0.25 + 1e-9
    g = parse("x1^2 + x2^2 + 1", 2)
    res = solve_glob(g, [0.0, 0.0])
    assert abs(res.lower_bound - 1) < 1e-5
    assert all(w == 0 for a, w in res.g.w.items() if any(a))


def test_sls_rejects_low_z(univariate):
    with pytest.raises(ValueError):
        solve_sls(univariate, [0.3], z=0.0)


def test_sls_without_multiplier_is_glob(univariate):
    a = solve_glob(univariate, [0.3])
    b = solve_sls(univariate, [0.3], k=-1)
    assert abs(a.lower_bound - b.lower_bound) <= 10 * GAP * a.objective_scale


def test_eval_g():
    g = Underestimator(np.array([0.5]), {(0,): 1.5, (1,): 2.0}, "Glob")
    assert eval_g(g, [0.5]) == 1.5
    g = Underestimator(np.array([0.5]), {(1,): 2.0}, "Glob")
    assert eval_g(g, [2.0]) == 4.5
    assert math.isclose(g.polynomial()([2.0]), 4.5)


def test_serialization(univariate):
    res = solve_sls(univariate, [0.3])
    data = json.loads(json.dumps(res.to_dict()))
    g = Underestimator.from_dict(data["g"])
    assert np.allclose(g.h, res.g.h)
    assert g.b == pytest.approx(res.g.b)
    assert g.value_at_round() == pytest.approx(res.g.value_at_round())


def test_quality_ratio(univariate):
    fh = univariate([0.3])
    sls = solve_sls(univariate, [0.3])
    glob = solve_glob(univariate, [0.3])
    assert abs(quality_ratio(univariate, [0.3], sls.lower_bound, [0]) - 1.0) < 0.02
    ref = (0.07 - fh) / (univariate([0.0]) - fh)
    assert abs(quality_ratio(univariate, [0.3], glob.lower_bound, [0]) - ref) < 0.01
    assert quality_ratio(univariate, [0.3], fh, [0]) == 0
    assert quality_ratio(parse("x1^2", 1), [0.0], 0.0, [0]) == EXACT


# ---------------------------------------------------------------------------
# properties over certified random instances


def fitted(n, d, count):
    out = []
    for seed, f, rep in certified(n, d, count):
        h = choose_h(f, rep.R)
        out.append((seed, f, rep, h, solve_glob(f, h), solve_sls(f, h)))
    return out


@pytest.fixture(scope="module")
def fits_24():
    return fitted(2, 4, 10)


def test_glob_underestimates(fits_24):
    rng = np.random.default_rng(1)
    for _, f, rep, h, glob, _ in fits_24:
        assert glob.ok
        B = max(rep.R, 1.0)
        X = rng.uniform(-B, B, size=(10_000, f.n))
        assert np.all(f.evaluate_many(X) - glob.g.evaluate_many(X) >= -1e-6 * glob.objective_scale)


def test_sls_underestimates_on_sublevel(fits_24):
    rng = np.random.default_rng(2)
    for _, f, rep, h, _, sls in fits_24:
        assert sls.ok
        B = max(rep.R, 1.0)
        X = rng.uniform(-B, B, size=(10_000, f.n))
        fv = f.evaluate_many(X)
        keep = fv <= sls.z
        assert np.all(fv[keep] - sls.g.evaluate_many(X[keep]) >= -1e-6 * sls.objective_scale)


def test_dominance(fits_24):
    for _, _, _, _, glob, sls in fits_24:
        slack = 10 * GAP * max(glob.objective_scale, sls.objective_scale)
        assert sls.lower_bound >= glob.lower_bound - slack


def test_validity_against_brute_force(fits_24):
    for _, f, rep, _, glob, sls in fits_24:
        u = brute_force(f, rep.R, 2).u
        assert glob.lower_bound <= u
        assert sls.lower_bound <= u


def test_coordinate_monotonicity(fits_24):
    t = np.arange(-10, 11, dtype=float)
    for _, f, _, h, glob, sls in fits_24:
        for g in (glob.g, sls.g):
            q = round_half_away(g.h).astype(float)
            for k in range(f.n):
                for other in range(-3, 4):
                    X = np.tile(q + other, (len(t), 1))
                    X[:, k] = t
                    v = g.evaluate_many(X)
                    c = int(np.argmin(np.abs(t - g.h[k])))
                    tol = 1e-9 * (1 + np.abs(v).max())
                    assert np.all(np.diff(v[:c + 1]) <= tol)
                    assert np.all(np.diff(v[c:]) >= -tol)


def test_g_minimised_at_round_h(fits_24):
    for _, f, _, _, glob, _ in fits_24:
        q = round_half_away(glob.g.h)
        grid = np.array(np.meshgrid(*[np.arange(v - 3, v + 4) for v in q])).reshape(f.n, -1).T
        vals = glob.g.evaluate_many(grid.astype(float))
        assert vals.min() >= glob.g.value_at_round() - 1e-9 * (1 + abs(glob.g.value_at_round()))
        assert glob.lower_bound == pytest.approx(glob.g.value_at_round() - DELTA_SAFETY)
