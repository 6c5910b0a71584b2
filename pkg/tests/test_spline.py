import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kandkd.spline import SplineDomainError, SplineGrid, basis_derivatives, basis_values, local_basis
from oracles import basis_oracle, hat_oracle, max_rel_error

grids = st.builds(
    SplineGrid,
    domain_lo=st.floats(-5, 0),
    domain_hi=st.floats(0.5, 5),
    grid_size=st.integers(1, 60),
    order=st.integers(0, 4),
)


def test_knot_layout():
    g = SplineGrid(-3, 3, 50, 3)
    assert g.knots.size == 50 + 2 * 3 + 1
    assert g.n_basis == 53
    assert np.allclose(np.diff(g.knots), 6 / 50)
    assert g.knots[3] == -3 and np.isclose(g.knots[-4], 3)


@pytest.mark.parametrize("kw", [dict(domain_lo=1, domain_hi=1), dict(grid_size=0), dict(order=-1)])
def test_invalid_grid(kw):
    with pytest.raises(SplineDomainError):
        SplineGrid(**kw)


def test_degree_zero_is_cell_indicator():
    out = basis_values(SplineGrid(0, 1, 4, 0), 0.3)
    assert out.tolist() == [0.0, 1.0, 0.0, 0.0]


def test_linear_matches_hat_functions():
    g = SplineGrid(0, 1, 2, 1)
    for x in (0.5, 0.0, 0.3, 0.77, 1.0):
        np.testing.assert_allclose(basis_values(g, x), hat_oracle(0, 1, 2, x), atol=1e-15)
    assert basis_values(g, 0.5).tolist() == [0.0, 1.0, 0.0]


@pytest.mark.parametrize("g,k", [(5, 3), (50, 1), (3, 2), (7, 4), (1, 0)])
def test_matches_recursive_cox_de_boor(g, k):
    grid = SplineGrid(-3, 3, g, k)
    for x in np.linspace(-3, 3, 37)[1:-1] + 1e-3:
        np.testing.assert_allclose(basis_values(grid, x), basis_oracle(-3, 3, g, k, x), atol=1e-12)


def test_clamps_outside_domain():
    g = SplineGrid(-3, 3, 5, 3)
    np.testing.assert_array_equal(basis_values(g, 10.0), basis_values(g, 3.0))
    np.testing.assert_array_equal(basis_values(g, -7.5), basis_values(g, -3.0))
    assert not basis_derivatives(g, 10.0).any()


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    g = SplineGrid()
    with pytest.raises(SplineDomainError):
        basis_values(g, bad)
    with pytest.raises(SplineDomainError):
        basis_derivatives(g, bad)


@settings(max_examples=200, deadline=None)
@given(grids, st.floats(0, 1))
def test_partition_nonnegativity_local_support(grid, frac):
    x = grid.domain_lo + frac * (grid.domain_hi - grid.domain_lo)
    b = basis_values(grid, x)
    assert b.shape == (grid.n_basis,)
    assert abs(b.sum() - 1.0) <= 1e-12
    assert (b >= 0).all()
    assert np.count_nonzero(b) <= grid.order + 1


@settings(max_examples=100, deadline=None)
@given(grids.filter(lambda g: g.order >= 1), st.floats(0.01, 0.99))
def test_derivatives_sum_to_zero(grid, frac):
    x = grid.domain_lo + frac * (grid.domain_hi - grid.domain_lo)
    assert abs(basis_derivatives(grid, x).sum()) <= 1e-9 / grid.spacing


def test_degree_zero_derivative_is_zero():
    assert not basis_derivatives(SplineGrid(0, 1, 4, 0), 0.3).any()


def test_derivatives_match_finite_differences(rng):
    for _ in range(30):
        k = int(rng.integers(1, 5))
        g = SplineGrid(-3, 3, int(rng.integers(1, 30)), k)
        x = rng.uniform(-2.9, 2.9)
        # keep the stencil off the knots where K <= 1 derivatives jump
        if np.min(np.abs(g.knots - x)) < 1e-4:
            continue
        step = 1e-5
        fd = (basis_values(g, x + step) - basis_values(g, x - step)) / (2 * step)
        assert max_rel_error(basis_derivatives(g, x), fd) <= 1e-4


def test_local_basis_batched_agrees_with_scalar(rng):
    g = SplineGrid(-2, 2, 8, 3)
    xs = rng.uniform(-3, 3, size=(4, 5))
    first, vals = local_basis(g, xs)
    for idx in np.ndindex(xs.shape):
        dense = np.zeros(g.n_basis)
        dense[first[idx] : first[idx] + 4] = vals[idx]
        np.testing.assert_allclose(dense, basis_values(g, xs[idx]), atol=1e-15)
