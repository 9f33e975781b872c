import numpy as np
import pytest

from dirac_nehari.errors import GridTooSmallError
from dirac_nehari.nehari import maximize_on_halfspace
from dirac_nehari.oracles import (
    GridSpec,
    ToyProblem,
    brute_force_halfspace_max,
    fd_gradient,
    nehari_verdicts,
    random_toy,
    scalar_ground_state_oracle,
    single_mode_ground_check,
)

NO_U = np.zeros(0)

# frozen output of the brute-force oracle (grid step 1e-3, Nelder-Mead polish)
FROZEN_METRIC = np.array([
    [1.2, -0.2, 0.1, 0.0],
    [-0.2, 1.3, -0.1, -0.2],
    [0.1, -0.1, 1.3, 0.0],
    [0.0, -0.2, 0.0, 1.3],
])
FROZEN_V = np.array([0.3, 1.0, -0.5, 0.8])
FROZEN_G = np.array([0.05273568, 0.58083776, -0.29041888, 0.4646702])
FROZEN_VALUE = 0.17928270594588663


def _frozen_toy():
    return ToyProblem([-1.5, 0.8, 1.0, 1.7], p=3.0, weight=1.3, metric=FROZEN_METRIC)


def test_oracle_quartic_example():
    toy = ToyProblem([1.0, -1.0])
    o = brute_force_halfspace_max(toy, np.array([1.0, 0.0]))
    assert o.t == pytest.approx(1.0, abs=1e-3)
    assert np.abs(o.w).max() <= 1e-3
    assert o.grid_t == pytest.approx(1.0, abs=1e-3)


def test_oracle_weighted_scalar():
    toy = ToyProblem([1.0, -1.0], weight=2.0)
    o = brute_force_halfspace_max(toy, np.array([1.0, 0.0]))
    assert o.t == pytest.approx(2**-0.5, abs=1e-3)


def test_oracle_without_nonlinearity_hits_boundary():
    toy = ToyProblem([1.0, -1.0], weight=0.0)
    with pytest.raises(GridTooSmallError):
        brute_force_halfspace_max(toy, np.array([1.0, 0.0]))


def test_oracle_is_deterministic():
    a = brute_force_halfspace_max(_frozen_toy(), FROZEN_V)
    b = brute_force_halfspace_max(_frozen_toy(), FROZEN_V)
    np.testing.assert_array_equal(a.g, b.g)
    assert a.value == b.value


def test_oracle_frozen_value_and_solver_agreement():
    toy = _frozen_toy()
    o = brute_force_halfspace_max(toy, FROZEN_V)
    np.testing.assert_allclose(o.g, FROZEN_G, atol=1e-7)
    assert o.value == pytest.approx(FROZEN_VALUE, abs=1e-12)
    res = maximize_on_halfspace(toy.context(), NO_U, FROZEN_V)
    assert np.abs(res.g - FROZEN_G).max() <= 1e-2
    assert res.energy == pytest.approx(FROZEN_VALUE, abs=1e-9)


def test_oracle_reports_levels_and_gap():
    o = brute_force_halfspace_max(_frozen_toy(), FROZEN_V, GridSpec(step=1e-3))
    assert o.levels[-1] == pytest.approx(1e-3)
    assert o.runner_up_gap > 0


def test_fd_gradient_quadratic():
    g = fd_gradient(lambda x: 0.5 * 3.0 * x[0] ** 2, np.array([1.0]))
    assert g[0] == pytest.approx(3.0, abs=1e-9)


@pytest.mark.parametrize("step", [1e-9, 0.1])
def test_fd_gradient_step_range(step):
    with pytest.raises(ValueError):
        fd_gradient(lambda x: x @ x, np.ones(2), step)


def test_fd_gradient_nan():
    with pytest.raises(FloatingPointError):
        fd_gradient(lambda x: np.nan, np.ones(2))


def test_scalar_oracle_values():
    t, e = scalar_ground_state_oracle(0.5, 1.0, 3.0)
    assert t == pytest.approx(np.sqrt(0.5), rel=1e-15)
    assert e == pytest.approx(np.pi / 8, rel=1e-15)
    for p in (1.5, 2.0, 4.0):
        assert scalar_ground_state_oracle(2.0, 2.0, p)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        scalar_ground_state_oracle(-1.0, 1.0, 3.0)


def test_scalar_oracle_exponent_limit_monotone():
    ps = [1.5, 1.2, 1.1, 1.05]
    above = [scalar_ground_state_oracle(2.0, 1.0, p)[0] for p in ps]
    below = [scalar_ground_state_oracle(0.5, 1.0, p)[0] for p in ps]
    assert all(b > a for a, b in zip(above, above[1:]))
    assert all(b < a for a, b in zip(below, below[1:]))


def test_scalar_oracle_against_one_dimensional_minimization():
    from scipy.optimize import minimize_scalar

    lam, b, p = 0.5, 1.0, 3.0
    # circle-integrated E2 of a constant-modulus mode of amplitude t, negated
    res = minimize_scalar(lambda t: -2 * np.pi * (0.5 * lam * t * t - b * t ** (p + 1) / (p + 1)),
                          bounds=(0.0, 3.0), method="bounded", options={"xatol": 1e-12})
    t, e = scalar_ground_state_oracle(lam, b, p)
    assert res.x == pytest.approx(t, abs=1e-6)
    assert -res.fun == pytest.approx(e, rel=1e-12)


def test_verdicts_flag_trivial_and_corrupted_points():
    toy = ToyProblem([-1.0, 1.0, 2.0])
    ctx = toy.context()
    trivial = nehari_verdicts(ctx, NO_U, np.array([0.5, 0.0, 0.0]))
    assert not {v.name: v for v in trivial}["nonzero_plus"].passed
    res = maximize_on_halfspace(ctx, NO_U, np.array([0.0, 1.0, 0.5]))
    good = nehari_verdicts(ctx, NO_U, res.g)
    assert all(v.passed for v in good)
    bad = res.g.copy()
    bad[0] = 10 * max(abs(bad[0]), 1.0)
    names = {v.name: v for v in nehari_verdicts(ctx, NO_U, bad)}
    assert not names["minus_le_plus"].passed


def test_random_toys_are_valid():
    rng = np.random.default_rng(0)
    for _ in range(20):
        toy = random_toy(rng)
        assert toy.dim <= 8
        assert (toy.eigenvalues < 0).sum() in (1, 2, 3)
        assert (toy.eigenvalues > 0).any()


def test_single_mode_is_lowest_among_sampled_directions():
    best, ref = single_mode_ground_check(k_max=4, samples=120, seed=1)
    assert ref == pytest.approx(np.pi / 8, rel=1e-10)
    assert best >= ref - 1e-10
