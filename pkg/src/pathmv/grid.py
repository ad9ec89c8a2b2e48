"""Uniform time grids and piecewise-affine sample paths.

Simulations in this package store one state per grid knot.  Continuous-time
queries go through a causal interpolation rule: affine between consecutive
recorded knots, frozen at the last recorded value from there to the horizon.
Knot times are computed multiplicatively from the step size, never by
repeated addition, and the final knot is pinned to the horizon so boundary
queries are exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, GridDomainError

__all__ = [
    "TimeGrid",
    "DiscretePath",
    "AffinePathView",
    "make_grid",
    "path_eval",
    "path_sup_norm",
]


class TimeGrid:
    """Uniform grid of ``n_steps`` equal steps on ``[0, horizon]``.

    Attributes:
        horizon: Right endpoint of the time interval, strictly positive.
        n_steps: Number of steps; the grid has ``n_steps + 1`` knots.
        step: Step size ``horizon / n_steps``.
        knots: Read-only float64 array of the ``n_steps + 1`` knot times.
    """

    __slots__ = ("horizon", "n_steps", "step", "knots")

    def __init__(self, horizon, n_steps):
        horizon = float(horizon)
        if not np.isfinite(horizon) or horizon <= 0.0:
            raise ConfigurationError(
                "horizon must be a positive finite real, got %r" % horizon
            )
        if int(n_steps) != n_steps or int(n_steps) < 1:
            raise ConfigurationError(
                "n_steps must be a positive integer, got %r" % (n_steps,)
            )
        self.horizon = horizon
        self.n_steps = int(n_steps)
        self.step = horizon / self.n_steps
        knots = self.step * np.arange(self.n_steps + 1, dtype=np.float64)
        # Pin the endpoint: n_steps * (horizon / n_steps) can be one ulp off.
        knots[-1] = horizon
        knots.setflags(write=False)
        self.knots = knots

    def knot(self, m):
        """Return the time of knot ``m`` as a float."""
        m = int(m)
        if m < 0 or m > self.n_steps:
            raise GridDomainError(
                "knot index %d outside 0..%d" % (m, self.n_steps)
            )
        return float(self.knots[m])

    def locate(self, t):
        """Map a time to its grid position.

        Args:
            t: Time in ``[0, horizon]``.

        Returns:
            A pair ``(k, exact)``.  When ``exact`` is True, ``t`` equals
            knot ``k`` bit for bit.  Otherwise ``t`` lies strictly inside
            the interval ``(knots[k], knots[k + 1])``.

        Raises:
            GridDomainError: If ``t`` is outside ``[0, horizon]`` or NaN.
        """
        t = float(t)
        if not (0.0 <= t <= self.horizon):
            raise GridDomainError(
                "time %r outside [0, %r]" % (t, self.horizon)
            )
        if t >= self.knots[-1]:
            return self.n_steps, True
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        if t == self.knots[k]:
            return k, True
        return k, False

    def refine(self, factor):
        """Return the grid with the same horizon and ``factor`` times the steps."""
        factor = int(factor)
        if factor < 1:
            raise ConfigurationError("refinement factor must be >= 1, got %d" % factor)
        return TimeGrid(self.horizon, self.n_steps * factor)

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.horizon == other.horizon and self.n_steps == other.n_steps

    def __hash__(self):
        return hash((self.horizon, self.n_steps))

    def __repr__(self):
        return "TimeGrid(horizon=%r, n_steps=%d)" % (self.horizon, self.n_steps)


def make_grid(horizon, n_steps):
    """Build a :class:`TimeGrid` on ``[0, horizon]`` with ``n_steps`` steps.

    Raises:
        ConfigurationError: If ``horizon`` is not positive or ``n_steps < 1``.
    """
    return TimeGrid(horizon, n_steps)


class DiscretePath:
    """Knot-indexed states of one trajectory, possibly ending before the horizon.

    Args:
        grid: The :class:`TimeGrid` the knots refer to.
        values: Array of shape ``(m + 1, d)`` (or ``(m + 1,)`` for ``d = 1``)
            holding the states at knots ``0..m`` with ``m <= grid.n_steps``.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise GridDomainError(
                "path values must be 1-D or 2-D, got ndim=%d" % arr.ndim
            )
        if arr.shape[0] < 1 or arr.shape[0] > grid.n_steps + 1:
            raise GridDomainError(
                "path holds %d knots, expected between 1 and %d"
                % (arr.shape[0], grid.n_steps + 1)
            )
        self.grid = grid
        self.values = arr

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def last_index(self):
        """Index of the last recorded knot."""
        return self.values.shape[0] - 1

    def view(self):
        """Return the piecewise-affine view of this path."""
        return AffinePathView(self)

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return "DiscretePath(last_index=%d, dim=%d, %r)" % (
            self.last_index,
            self.dim,
            self.grid,
        )


class AffinePathView:
    """Continuous-time view of a :class:`DiscretePath` on ``[0, horizon]``.

    Evaluation returns the stored state exactly at every recorded knot, the
    affine blend strictly between consecutive knots, and the last recorded
    state on ``[t_m, horizon]``.  A single-knot path evaluates to its only
    state everywhere.
    """

    __slots__ = ("path",)

    def __init__(self, path):
        self.path = path

    @property
    def grid(self):
        return self.path.grid

    @property
    def values(self):
        return self.path.values

    @property
    def last_index(self):
        return self.path.last_index

    @property
    def dim(self):
        return self.path.dim

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Evaluate the view at a scalar time or a 1-D array of times.

        Returns:
            Array of shape ``(d,)`` for scalar ``t``, else ``(len(t), d)``.

        Raises:
            GridDomainError: If any time is outside ``[0, horizon]``.
        """
        return _affine_eval(self.grid, self.path.values, t)

    def sup_norm(self):
        """Largest Euclidean norm the view attains, equal to the knot maximum."""
        return path_sup_norm(self.path)


def _affine_eval(grid, values, t):
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = t_arr.ndim == 0
    tq = np.atleast_1d(t_arr)
    if tq.ndim != 1:
        raise GridDomainError("evaluation times must be scalar or 1-D")
    ok = (tq >= 0.0) & (tq <= grid.horizon)
    if not np.all(ok):
        bad = tq[~ok][0]
        raise GridDomainError(
            "time %r outside [0, %r]" % (float(bad), grid.horizon)
        )
    knots = grid.knots
    m_last = values.shape[0] - 1
    out = np.empty((tq.size, values.shape[1]), dtype=np.float64)
    frozen = tq >= knots[m_last]
    out[frozen] = values[m_last]
    inside = ~frozen
    if np.any(inside):
        ts = tq[inside]
        k = np.searchsorted(knots, ts, side="right") - 1
        # Clipping guards the convex-hull invariant against one-ulp spill
        # when knot differences round away from the exact step.
        w = np.clip((knots[k + 1] - ts) / grid.step, 0.0, 1.0)
        blend = w[:, None] * values[k] + (1.0 - w)[:, None] * values[k + 1]
        # The blend weight at a knot can be one ulp away from 1; knot hits
        # must return the stored state exactly.
        exact = ts == knots[k]
        if np.any(exact):
            blend[exact] = values[k[exact]]
        out[inside] = blend
    if scalar:
        return out[0]
    return out


def path_eval(path, t):
    """Evaluate the piecewise-affine interpolation of a path at time(s) ``t``.

    Args:
        path: A :class:`DiscretePath` or :class:`AffinePathView`.
        t: Scalar time or 1-D array of times in ``[0, horizon]``.

    Returns:
        Point(s) in ``R^d``: shape ``(d,)`` for scalar ``t``, else ``(len(t), d)``.
    """
    if isinstance(path, AffinePathView):
        path = path.path
    return _affine_eval(path.grid, path.values, t)


def path_sup_norm(path):
    """Sup norm of the interpolated path, computed as the knot maximum.

    The affine blend of two points never leaves their segment, so the
    supremum over continuous time of the Euclidean norm is attained at a
    recorded knot; this function takes the maximum over knots directly.

    Args:
        path: A :class:`DiscretePath`, :class:`AffinePathView`, or a raw
            array of knot values with shape ``(m + 1, d)`` or ``(m + 1,)``.
    """
    if isinstance(path, AffinePathView):
        path = path.path
    if isinstance(path, DiscretePath):
        arr = path.values
    else:
        arr = np.asarray(path, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
    if arr.shape[0] < 1:
        raise GridDomainError("cannot take the sup norm of an empty path")
    norms = np.sqrt(np.einsum("kd,kd->k", arr, arr))
    return float(norms.max())
