import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_nehari.errors import DegenerateDirectionError
from dirac_nehari.nehari import (
    MaximizerOptions,
    MinimizeOptions,
    maximize_on_halfspace,
    minimize_reduced,
    nehari_residuals,
    reduced_energy,
    reduced_gradient,
)
from dirac_nehari.oracles import ToyProblem, fd_gradient, nehari_verdicts, random_toy

NO_U = np.zeros(0)


def test_two_dim_quartic_example():
    toy = ToyProblem([-1.0, 1.0])
    res = maximize_on_halfspace(toy.context(), NO_U, np.array([0.0, 1.0]))
    np.testing.assert_allclose(res.g, [0.0, 1.0], atol=1e-12)
    assert res.t == pytest.approx(1.0, abs=1e-12)
    assert res.energy == pytest.approx(0.25, abs=1e-12)
    assert res.converged


def test_weighted_scalar_closed_form():
    toy = ToyProblem([-1.0, 1.0], weight=2.0)
    res = maximize_on_halfspace(toy.context(), NO_U, np.array([0.0, 3.0]))
    assert res.t == pytest.approx(2**-0.5, abs=1e-12)


def test_degenerate_direction():
    toy = ToyProblem([-1.0, 1.0])
    with pytest.raises(DegenerateDirectionError):
        maximize_on_halfspace(toy.context(), NO_U, np.array([1.0, 0.0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0), shift=st.floats(-3, 3))
def test_ray_invariance_and_idempotence(seed, scale, shift):
    rng = np.random.default_rng(seed)
    toy = random_toy(rng)
    ctx = toy.context()
    v = rng.standard_normal(toy.dim)
    base = maximize_on_halfspace(ctx, NO_U, v)
    model = base.model
    a = model.coords(v).real
    a[model.index_plus] *= scale
    a[model.index_nonpositive] += shift
    moved = maximize_on_halfspace(ctx, NO_U, model.ambient(a))
    assert np.abs(moved.g - base.g).max() <= 1e-8
    again = maximize_on_halfspace(ctx, NO_U, base.g)
    assert np.abs(again.g - base.g).max() <= 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_maximizer_satisfies_nehari_invariants(seed):
    rng = np.random.default_rng(seed)
    toy = random_toy(rng)
    ctx = toy.context()
    res = maximize_on_halfspace(ctx, NO_U, rng.standard_normal(toy.dim), MaximizerOptions(tol=1e-11))
    failed = [v.name for v in nehari_verdicts(ctx, NO_U, res.g) if not v.passed]
    assert not failed


def test_odd_equivariance_is_exact():
    rng = np.random.default_rng(11)
    toy = random_toy(rng, dim=6, n_minus=2)
    ctx = toy.context()
    v = rng.standard_normal(6)
    a = maximize_on_halfspace(ctx, NO_U, v)
    b = maximize_on_halfspace(ctx, NO_U, -v)
    np.testing.assert_array_equal(a.g, -b.g)


def test_multistart_spread_small():
    rng = np.random.default_rng(12)
    toy = random_toy(rng, dim=7, n_minus=3)
    res = maximize_on_halfspace(toy.context(), NO_U, rng.standard_normal(7), MaximizerOptions(multistart=5))
    assert res.multistart_distance <= 1e-6


def test_alternating_path_matches_warm_newton():
    rng = np.random.default_rng(13)
    toy = random_toy(rng, dim=5, n_minus=2)
    ctx = toy.context()
    v = rng.standard_normal(5)
    cold = maximize_on_halfspace(ctx, NO_U, v)
    warm = maximize_on_halfspace(ctx, NO_U, v, warm_start=cold.g * 1.01)
    assert cold.method == "alternating" and warm.method == "newton"
    np.testing.assert_allclose(warm.g, cold.g, atol=1e-10)


def _coupled():
    return ToyProblem([-2.0, -1.0, 0.5, 1.0, 3.0], p=3.0, coupling=0.5, u_dim=2)


def test_reduced_gradient_matches_fd():
    toy = _coupled()
    ctx = toy.context()
    rng = np.random.default_rng(14)
    u = 0.4 * rng.standard_normal(2)
    v = rng.standard_normal(5)
    rg = reduced_gradient(ctx, u, v)
    fu = fd_gradient(lambda z: reduced_energy(ctx, z, v), u)
    fv = fd_gradient(lambda z: reduced_energy(ctx, u, z), v)
    assert np.linalg.norm(rg.grad_u - fu) <= 1e-4 * np.linalg.norm(fu)
    assert np.linalg.norm(rg.grad_v - fv) <= 1e-4 * np.linalg.norm(fv)


def test_minimizer_converges_on_coupled_toy():
    toy = _coupled()
    ctx = toy.context()
    rng = np.random.default_rng(0)
    res = minimize_reduced(ctx, 0.3 * rng.standard_normal(2), rng.standard_normal(5))
    assert res.converged and res.status == "converged"
    assert res.iterations < 200
    # ground state: u = 0 and the lowest positive mode lam = 1/2 at t^2 = lam, energy lam^2 / 4
    assert res.point.energy == pytest.approx(0.0625, rel=1e-10)
    assert np.abs(res.point.u).max() < 1e-8
    energies = [r["energy"] for r in res.trace]
    slack = 1e-14 * max(abs(energies[0]), 1.0)
    assert all(b <= a + slack for a, b in zip(energies, energies[1:]))
    assert res.point.is_member(1e-8)


def test_minimizer_records_trace_keys():
    toy = ToyProblem([-1.0, 1.0, 2.0])
    res = minimize_reduced(toy.context(), NO_U, np.array([0.1, 1.0, 0.5]), MinimizeOptions(max_iter=3))
    assert set(res.trace[0]) == {"iter", "energy", "r_scalar", "r_minus", "grad_u", "grad_v", "step"}


def test_iteration_cap_reports_max_iter():
    toy = _coupled()
    rng = np.random.default_rng(1)
    res = minimize_reduced(toy.context(), rng.standard_normal(2), rng.standard_normal(5), MinimizeOptions(max_iter=1))
    assert not res.converged and res.status == "max_iter"


def test_nehari_residuals_vanish_at_maximizer():
    toy = _coupled()
    ctx = toy.context()
    u = np.array([0.2, -0.1])
    res = maximize_on_halfspace(ctx, u, np.array([0.3, 0.1, 1.0, 0.2, 0.4]))
    r_s, r_m = nehari_residuals(ctx, u, res.g)
    assert abs(r_s) < 1e-9 and r_m < 1e-9
