import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathmv.errors import ConfigurationError, GridDomainError
from pathmv.grid import (
    AffinePathView,
    DiscretePath,
    TimeGrid,
    make_grid,
    path_eval,
    path_sup_norm,
)


def test_grid_fields():
    g = make_grid(2.0, 8)
    assert g.horizon == 2.0
    assert g.n_steps == 8
    assert g.step == 0.25
    assert g.knot(0) == 0.0
    assert g.knot(8) == 2.0


def test_last_knot_is_horizon_exactly():
    g = make_grid(0.3, 3)
    assert g.knot(3) == 0.3
    for horizon in (0.1, 0.7, 1.0 / 3.0, 2.31):
        for m in (3, 7, 10, 64):
            assert make_grid(horizon, m).knot(m) == horizon


@pytest.mark.parametrize("horizon,steps", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, -2)])
def test_bad_grid_rejected(horizon, steps):
    with pytest.raises(ConfigurationError):
        make_grid(horizon, steps)


def test_non_integer_steps_rejected():
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 2.5)


def test_locate_exact_and_interior():
    g = make_grid(1.0, 4)
    assert g.locate(0.25) == (1, True)
    k, exact = g.locate(0.3)
    assert k == 1 and not exact
    assert g.locate(1.0) == (4, True)
    with pytest.raises(GridDomainError):
        g.locate(1.5)
    with pytest.raises(GridDomainError):
        g.locate(-0.1)


def test_refine():
    g = make_grid(1.0, 4)
    f = g.refine(3)
    assert f.n_steps == 12
    assert f.horizon == g.horizon
    assert g.refine(1) == g
    with pytest.raises(ConfigurationError):
        g.refine(0)


def test_grid_equality_and_hash():
    assert make_grid(1.0, 4) == make_grid(1.0, 4)
    assert make_grid(1.0, 4) != make_grid(1.0, 8)
    assert hash(make_grid(1.0, 4)) == hash(make_grid(1.0, 4))


def test_two_knot_interpolation_example():
    path = DiscretePath(make_grid(1.0, 1), [0.0, 1.0])
    assert path_eval(path, 0.5) == 0.5


def test_clamp_beyond_last_recorded_knot():
    # three recorded knots on a five-step grid; beyond t=2 the value freezes
    path = DiscretePath(make_grid(5.0, 5), [0.0, 2.0, -1.0])
    assert path_eval(path, 4.0) == -1.0
    assert path_eval(path, 2.0) == -1.0
    assert path_eval(path, 5.0) == -1.0
    assert path_eval(path, 1.5) == 0.5


def test_single_knot_path_is_constant():
    path = DiscretePath(make_grid(1.0, 4), [3.5])
    for t in (0.0, 0.1, 0.62, 1.0):
        assert path_eval(path, t) == 3.5


def test_exact_knot_returns_stored_value_bitwise():
    rng = np.random.default_rng(7)
    grid = make_grid(0.7, 9)
    values = rng.normal(size=(10, 2))
    view = AffinePathView(DiscretePath(grid, values))
    for m in range(10):
        assert np.array_equal(view.eval(grid.knot(m)), values[m])


def test_eval_outside_domain_raises():
    path = DiscretePath(make_grid(1.0, 2), [0.0, 1.0, 2.0])
    with pytest.raises(GridDomainError):
        path_eval(path, -0.01)
    with pytest.raises(GridDomainError):
        path_eval(path, 1.01)


def test_path_length_validation():
    g = make_grid(1.0, 2)
    with pytest.raises(GridDomainError):
        DiscretePath(g, [])
    with pytest.raises(GridDomainError):
        DiscretePath(g, [0.0, 1.0, 2.0, 3.0])


def test_sup_norm_examples():
    assert path_sup_norm(DiscretePath(make_grid(1.0, 2), [1.0, -3.0, 2.0])) == 3.0
    path = DiscretePath(make_grid(1.0, 1), [[0.0, 0.0], [3.0, 4.0]])
    assert path_sup_norm(path) == 5.0


def test_sup_norm_matches_dense_sampling(rng):
    for _ in range(25):
        m = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        grid = make_grid(float(rng.uniform(0.5, 2.0)), m)
        values = rng.normal(size=(m + 1, d))
        view = AffinePathView(DiscretePath(grid, values))
        dense = np.union1d(np.linspace(0.0, grid.horizon, 1201), grid.knots)
        sampled = view.eval(dense)
        dense_sup = np.linalg.norm(np.atleast_2d(sampled.T).T, axis=-1).max()
        assert abs(dense_sup - view.sup_norm()) <= 1e-12


@given(
    st.integers(min_value=1, max_value=10),
    st.integers(min_value=0, max_value=10 ** 6),
    st.integers(min_value=0, max_value=2 ** 32 - 1),
)
def test_convex_hull_property(m, t_frac, seed):
    rng = np.random.default_rng(seed)
    grid = make_grid(1.0, m)
    values = rng.normal(size=(m + 1, 2)) * 10.0
    view = AffinePathView(DiscretePath(grid, values))
    t = grid.horizon * t_frac / 10 ** 6
    out = view.eval(t)
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    assert np.all(out >= lo) and np.all(out <= hi)


def test_vectorized_eval_matches_scalar(rng):
    grid = make_grid(1.3, 6)
    values = rng.normal(size=(7, 3))
    view = AffinePathView(DiscretePath(grid, values))
    ts = rng.uniform(0.0, 1.3, size=40)
    batch = view.eval(ts)
    for t, row in zip(ts, batch):
        assert np.array_equal(view.eval(t), row)


def test_affine_blend_weight_on_earlier_knot():
    # weight (t_{k+1} - t) / h multiplies the earlier knot's value
    grid = make_grid(1.0, 4)
    values = np.array([0.0, 10.0, -4.0, 6.0, 1.0])
    view = AffinePathView(DiscretePath(grid, values))
    t = 0.3
    k = 1
    w = (grid.knot(k + 1) - t) / grid.step
    expected = w * values[k] + (1.0 - w) * values[k + 1]
    assert abs(view.eval(t) - expected) <= 1e-15


def test_path_eval_accepts_views_and_paths():
    path = DiscretePath(make_grid(1.0, 1), [0.0, 2.0])
    assert path_eval(path, 0.25) == path_eval(AffinePathView(path), 0.25) == 0.5


def test_sup_norm_accepts_raw_arrays():
    assert path_sup_norm(np.array([1.0, -3.0, 2.0])) == 3.0
    assert path_sup_norm(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0
