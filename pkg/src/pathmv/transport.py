"""Empirical measures, affine mixtures of them, and Wasserstein distances.

An ensemble column (all particles at one knot) is an empirical measure with
uniform weights.  Between knots, the measure path is interpolated by convex
mixture, with the weight on the earlier knot decaying affinely across the
step.  Distances between equal-size empirical measures are computed exactly
through an assignment solver, with the sorted quantile pairing as the 1-D
specialization, plus the closed-form distance to a point mass at the origin.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import ndtri

from .errors import (
    DomainError,
    GridDomainError,
    ResourceLimitError,
    UnsupportedInputError,
)

__all__ = [
    "ASSIGNMENT_CAP",
    "EmpiricalMeasure",
    "MixtureMeasure",
    "MeasurePathView",
    "mixture_at",
    "mixture_sample",
    "wasserstein_1d",
    "wasserstein_assignment",
    "optimal_pairing",
    "wasserstein_to_dirac0",
    "wasserstein_1d_gaussian",
    "d_p_sup",
    "adjacent_knot_slack",
]

ASSIGNMENT_CAP = 4096
"""Largest atom count handed to the exact assignment solver by default."""


def _check_order(p):
    p = float(p)
    if not np.isfinite(p) or p < 1.0:
        raise DomainError("distance order p must satisfy p >= 1, got %r" % p)
    return p


def _atoms(obj):
    if isinstance(obj, EmpiricalMeasure):
        return obj.atoms
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DomainError("atoms must form a 1-D or 2-D array, got ndim=%d" % arr.ndim)
    if arr.shape[0] == 0:
        raise DomainError("a measure needs at least one atom")
    return arr


class EmpiricalMeasure:
    """Uniformly weighted atoms, typically one ensemble column.

    Args:
        atoms: Array of shape ``(N, d)``, or ``(N,)`` for ``d = 1``.  All
            entries must be finite.
    """

    __slots__ = ("atoms",)

    def __init__(self, atoms):
        arr = _atoms(atoms)
        if not np.isfinite(arr).all():
            raise DomainError("empirical measure atoms must all be finite")
        self.atoms = arr

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    def mean(self):
        """Barycenter of the atoms, shape ``(d,)``."""
        return self.atoms.mean(axis=0)

    def moment_p(self, p):
        """Average p-th power of the Euclidean atom norm."""
        p = _check_order(p)
        norms = np.sqrt(np.einsum("nd,nd->n", self.atoms, self.atoms))
        return float(np.mean(norms**p))

    def __repr__(self):
        return "EmpiricalMeasure(n_atoms=%d, dim=%d)" % (self.n_atoms, self.dim)


class MixtureMeasure:
    """Convex combination ``lam * left + (1 - lam) * right`` of two measures.

    ``lam`` is the weight on ``left``.  Moments are evaluated through the
    exact convex-combination identity, never by sampling.
    """

    __slots__ = ("left", "right", "lam")

    def __init__(self, left, right, lam):
        lam = float(lam)
        if not (0.0 <= lam <= 1.0):
            raise DomainError("mixture weight must lie in [0, 1], got %r" % lam)
        if left.dim != right.dim:
            raise UnsupportedInputError(
                "mixture components must share a dimension, got %d and %d"
                % (left.dim, right.dim)
            )
        self.left = left
        self.right = right
        self.lam = lam

    @property
    def dim(self):
        return self.left.dim

    def mean(self):
        return self.lam * self.left.mean() + (1.0 - self.lam) * self.right.mean()

    def moment_p(self, p):
        """Exact mixture moment ``lam * m_p(left) + (1 - lam) * m_p(right)``."""
        return self.lam * self.left.moment_p(p) + (1.0 - self.lam) * self.right.moment_p(p)

    def __repr__(self):
        return "MixtureMeasure(lam=%r, left=%r, right=%r)" % (
            self.lam,
            self.left,
            self.right,
        )


class MeasurePathView:
    """Knot-indexed empirical measures with mixture interpolation in between.

    Args:
        grid: The :class:`~pathmv.grid.TimeGrid` the knots refer to.
        measures: Sequence of :class:`EmpiricalMeasure`, one per knot up to
            some index ``m <= grid.n_steps``.
    """

    __slots__ = ("grid", "measures")

    def __init__(self, grid, measures):
        measures = list(measures)
        if not measures:
            raise GridDomainError("a measure path needs at least one knot")
        if len(measures) > grid.n_steps + 1:
            raise GridDomainError(
                "measure path holds %d knots, grid only has %d"
                % (len(measures), grid.n_steps + 1)
            )
        dim = measures[0].dim
        for mk in measures:
            if mk.dim != dim:
                raise UnsupportedInputError("all knot measures must share a dimension")
        self.grid = grid
        self.measures = measures

    @classmethod
    def from_states(cls, grid, states, last_index=None):
        """Wrap ensemble states of shape ``(N, K, d)`` as a measure path.

        Args:
            states: Particle states, one row per particle, one column per knot.
            last_index: Final knot to include; defaults to all columns.
        """
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 3:
            raise DomainError("states must have shape (N, K, d)")
        upto = states.shape[1] - 1 if last_index is None else int(last_index)
        cols = [EmpiricalMeasure(states[:, k, :]) for k in range(upto + 1)]
        return cls(grid, cols)

    @property
    def last_index(self):
        return len(self.measures) - 1

    @property
    def dim(self):
        return self.measures[0].dim

    def __len__(self):
        return len(self.measures)

    def at(self, t):
        """Measure at time ``t``: pure at knots, mixture strictly inside steps.

        Returns the final recorded measure for every ``t`` at or beyond its
        knot, mirroring the path interpolation clamp.

        Raises:
            GridDomainError: If ``t`` is outside ``[0, horizon]``.
        """
        t = float(t)
        grid = self.grid
        if not (0.0 <= t <= grid.horizon):
            raise GridDomainError("time %r outside [0, %r]" % (t, grid.horizon))
        m = self.last_index
        if t >= grid.knots[m]:
            return self.measures[m]
        k, exact = grid.locate(t)
        if exact:
            return self.measures[k]
        lam = (grid.knots[k + 1] - t) / grid.step
        lam = min(max(lam, 0.0), 1.0)
        return MixtureMeasure(self.measures[k], self.measures[k + 1], lam)


def mixture_at(view, t):
    """Evaluate a :class:`MeasurePathView` at time ``t``; see its ``at``."""
    return view.at(t)


def mixture_sample(mix, u, atom_indices):
    """Draw from a mixture by thresholding uniforms, with pinned atom indices.

    Each draw takes the ``atom_indices[i]``-th atom of the left component
    when ``u[i] < lam`` and of the right component otherwise.  Feeding two
    mixtures of the same component pair the same ``(u, atom_indices)``
    realizes the coupling behind the mixture continuity bound: draws differ
    only when ``u`` falls between the two weights.

    Args:
        mix: A :class:`MixtureMeasure`.
        u: Scalar or array of uniforms in ``[0, 1)``.
        atom_indices: Scalar or array of integer atom indices, broadcast
            against ``u``; must be valid for both components.

    Returns:
        Array of shape ``(d,)`` for scalar input, else ``(n, d)``.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    idx = np.asarray(atom_indices, dtype=np.intp)
    scalar = u_arr.ndim == 0 and idx.ndim == 0
    u_arr, idx = np.broadcast_arrays(np.atleast_1d(u_arr), np.atleast_1d(idx))
    if np.any((u_arr < 0.0) | (u_arr >= 1.0)):
        raise DomainError("uniforms must lie in [0, 1)")
    bound = min(mix.left.n_atoms, mix.right.n_atoms)
    if np.any((idx < 0) | (idx >= bound)):
        raise DomainError("atom index out of range for the mixture components")
    take_left = u_arr < mix.lam
    out = np.where(
        take_left[:, None], mix.left.atoms[idx], mix.right.atoms[idx]
    )
    if scalar:
        return out[0]
    return out


def wasserstein_1d(a, b, p):
    """Order-p distance between two equal-size 1-D samples via order statistics.

    Sorting both samples and pairing by rank is the optimal coupling on the
    line, so this equals the assignment value at a fraction of the cost.

    Raises:
        UnsupportedInputError: If sizes differ or the data is not 1-D.
        DomainError: If a sample is empty or ``p < 1``.
    """
    p = _check_order(p)
    xa = _atoms(a)
    xb = _atoms(b)
    if xa.shape[1] != 1 or xb.shape[1] != 1:
        raise UnsupportedInputError("wasserstein_1d handles 1-D samples only")
    if xa.shape[0] != xb.shape[0]:
        raise UnsupportedInputError(
            "sample sizes differ (%d vs %d); unequal sizes are not supported"
            % (xa.shape[0], xb.shape[0])
        )
    sa = np.sort(xa[:, 0])
    sb = np.sort(xb[:, 0])
    return float(np.mean(np.abs(sa - sb) ** p) ** (1.0 / p))


def _paired_cost(xa, xb, p):
    if xa.shape[0] != xb.shape[0]:
        raise UnsupportedInputError(
            "atom counts differ (%d vs %d); unequal counts are not supported"
            % (xa.shape[0], xb.shape[0])
        )
    if xa.shape[1] != xb.shape[1]:
        raise UnsupportedInputError(
            "atom dimensions differ (%d vs %d)" % (xa.shape[1], xb.shape[1])
        )
    return cdist(xa, xb, "euclidean") ** p


def wasserstein_assignment(a, b, p, cap=ASSIGNMENT_CAP):
    """Exact order-p distance between equal-size uniform empirical measures.

    Builds the ``|a_i - b_j|^p`` cost matrix and solves the assignment
    problem exactly; for uniform weights the optimal coupling is a
    permutation, so the assignment value is the distance.

    Args:
        a: Atoms of the first measure, ``(N, d)`` array or
            :class:`EmpiricalMeasure`.
        b: Atoms of the second measure, same size and dimension.
        p: Distance order, ``p >= 1``.
        cap: Largest ``N`` handed to the cubic solver.  Above the cap, 1-D
            inputs fall back to the sorted quantile pairing (same value);
            higher dimensions raise :class:`~pathmv.errors.ResourceLimitError`.

    Returns:
        ``((1/N) min over pairings of the summed costs) ** (1/p)``.
    """
    p = _check_order(p)
    xa = _atoms(a)
    xb = _atoms(b)
    n = xa.shape[0]
    if n > cap:
        if xa.shape[1] == 1 and xb.shape[1] == 1:
            return wasserstein_1d(xa, xb, p)
        raise ResourceLimitError(
            "assignment with N=%d exceeds the cap of %d and has no 1-D fallback"
            % (n, cap)
        )
    cost = _paired_cost(xa, xb, p)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return (total / n) ** (1.0 / p)


def optimal_pairing(a, b, p, cap=ASSIGNMENT_CAP):
    """Return the cost-minimizing permutation pairing ``a[i]`` with ``b[perm[i]]``.

    Ties between equally cheap pairings are broken by the solver; only the
    paired cost is guaranteed, not the permutation itself.

    Raises:
        ResourceLimitError: If the atom count exceeds ``cap``.
    """
    p = _check_order(p)
    xa = _atoms(a)
    xb = _atoms(b)
    if xa.shape[0] > cap:
        raise ResourceLimitError(
            "pairing with N=%d exceeds the cap of %d" % (xa.shape[0], cap)
        )
    cost = _paired_cost(xa, xb, p)
    _, cols = linear_sum_assignment(cost)
    return cols


def wasserstein_to_dirac0(measure, p):
    """Order-p distance to the point mass at the origin.

    The only coupling with a point mass is deterministic, so the distance is
    the p-th root of the p-th moment.  Mixture moments use the exact convex
    combination of the component moments.

    Args:
        measure: :class:`EmpiricalMeasure`, :class:`MixtureMeasure`, or raw
            atom array.
    """
    p = _check_order(p)
    if isinstance(measure, (EmpiricalMeasure, MixtureMeasure)):
        return float(measure.moment_p(p) ** (1.0 / p))
    return float(EmpiricalMeasure(measure).moment_p(p) ** (1.0 / p))


_GAUSS_CELL_CACHE = {}


def _gauss_cell_nodes(n, nodes):
    key = (n, nodes)
    cached = _GAUSS_CELL_CACHE.get(key)
    if cached is None:
        gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
        # Map the nodes into every rank cell ((i - 1)/n, i/n).
        offsets = (np.arange(n, dtype=np.float64)[:, None] + 0.5 + 0.5 * gl_x) / n
        cached = (ndtri(offsets), gl_w / (2.0 * n))
        _GAUSS_CELL_CACHE[key] = cached
    return cached


def wasserstein_1d_gaussian(a, mean, std, p=2.0, nodes=16):
    """Order-p distance from a 1-D sample to a normal law, by quantile quadrature.

    The optimal coupling on the line matches quantile functions, so the
    p-th power distance is the integral over ``u in (0, 1)`` of
    ``|quantile_sample(u) - quantile_normal(u)|^p``.  The sample quantile is
    constant on each rank cell, and the normal quantile is integrated with a
    fixed Gauss-Legendre rule per cell.  Node positions depend only on the
    sample size, so repeated calls at the same size reuse them.

    Args:
        a: 1-D sample.
        mean: Mean of the normal law.
        std: Standard deviation, strictly positive.
        p: Distance order, ``p >= 1``.
        nodes: Quadrature nodes per rank cell.

    Returns:
        The estimated distance; exact up to the quadrature error in the two
        tail cells, which shrinks as the sample grows.
    """
    p = _check_order(p)
    std = float(std)
    if not np.isfinite(std) or std <= 0.0:
        raise DomainError("std must be positive and finite, got %r" % std)
    xa = _atoms(a)
    if xa.shape[1] != 1:
        raise UnsupportedInputError("wasserstein_1d_gaussian handles 1-D samples only")
    sa = np.sort(xa[:, 0])
    z, w = _gauss_cell_nodes(sa.size, int(nodes))
    gaps = np.abs(sa[:, None] - (mean + std * z)) ** p
    return float((gaps @ w).sum() ** (1.0 / p))


def d_p_sup(left, right, p):
    """Largest knot-wise distance between two measure paths on a shared grid.

    Evaluates the exact assignment distance at every common knot and takes
    the maximum.  Between knots both paths are mixtures of their endpoint
    measures, so the knot maximum controls the continuous supremum up to the
    adjacent-knot mixture slack, which :func:`adjacent_knot_slack` reports
    separately rather than folding in.

    Raises:
        GridDomainError: If the grids or recorded lengths differ.
    """
    if left.grid != right.grid:
        raise GridDomainError("measure paths live on different grids")
    if left.last_index != right.last_index:
        raise GridDomainError(
            "measure paths record different knot counts (%d vs %d)"
            % (left.last_index + 1, right.last_index + 1)
        )
    best = 0.0
    for mu_k, nu_k in zip(left.measures, right.measures):
        best = max(best, wasserstein_assignment(mu_k, nu_k, p))
    return best


def adjacent_knot_slack(view, p):
    """Largest distance between consecutive knot measures of one path.

    Inside a step the interpolated measure is a mixture of its endpoints,
    and its distance to either endpoint is bounded by the mixture-weight
    root times this quantity; harness reports carry it alongside knot-wise
    suprema so the interpolation gap is visible.
    """
    best = 0.0
    for mu_k, mu_next in zip(view.measures[:-1], view.measures[1:]):
        best = max(best, wasserstein_assignment(mu_k, mu_next, p))
    return best
