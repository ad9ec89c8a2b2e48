"""Coefficient-model contract and the built-in synthetic models.

A coefficient model supplies the drift and diffusion fields the particle
stepper consumes.  The reference signature is per particle and pure:
``drift(t, path, measures)`` reads one particle's path view plus the shared
measure-path view and returns a vector.  For speed a model may also
override the knot-column hooks, which evaluate every particle at once and
carry running integrals forward one step at a time.  The base class routes
the column hooks through the per-particle functions, so the two routes must
agree; the test suite holds them to that.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    AccumulatorSyncError,
    ConfigurationError,
    DomainError,
    GridDomainError,
)
from .grid import AffinePathView, DiscretePath
from .transport import MeasurePathView

__all__ = [
    "TrapezoidAccumulator",
    "trapezoid_update",
    "CoefficientModel",
    "MeanFieldOUParams",
    "MeanFieldOU",
    "ou_drift",
    "integral_drift",
    "IntegralDriftModel",
    "ConstantCoefficientModel",
    "InitialLaw",
    "DiracInitial",
    "GaussianInitial",
]


class TrapezoidAccumulator:
    """Running trapezoid integral of a knot-indexed sequence.

    After recording ``g_0 .. g_m`` with step ``h``, the value equals
    ``(h/2) * (g_0 + g_m) + h * (g_1 + ... + g_{m-1})``; after the first
    record it is 0 (no interval yet).  Summands may be scalars or arrays,
    for instance one integrand value per particle.

    Attributes:
        value: Current integral value (scalar or array).
        last: Most recently recorded summand.
        count: Number of summands recorded so far.
    """

    __slots__ = ("value", "last", "count")

    def __init__(self):
        self.value = 0.0
        self.last = None
        self.count = 0

    def record(self, g_new, h):
        """Fold in the summand for the next knot; returns self."""
        h = float(h)
        if not np.isfinite(h) or h <= 0.0:
            raise DomainError("trapezoid step must be positive, got %r" % h)
        g_new = np.array(g_new, dtype=np.float64, copy=True)
        if g_new.ndim == 0:
            g_new = float(g_new)
        if self.count > 0:
            self.value = self.value + 0.5 * h * (self.last + g_new)
        self.last = g_new
        self.count += 1
        return self

    def copy(self):
        dup = TrapezoidAccumulator()
        dup.value = np.copy(self.value) if isinstance(self.value, np.ndarray) else self.value
        dup.last = np.copy(self.last) if isinstance(self.last, np.ndarray) else self.last
        dup.count = self.count
        return dup

    def __repr__(self):
        return "TrapezoidAccumulator(count=%d)" % self.count


def trapezoid_update(acc, g_new, h):
    """Record the next summand into ``acc`` and return it.

    The composed value after recording ``g_0 .. g_m`` matches the closed
    trapezoid form with endpoint weights ``h/2`` and interior weights ``h``.
    """
    return acc.record(g_new, h)


class InitialLaw:
    """Initial draw specified as a transform of per-particle standard normals.

    The stepper draws ``n_normals`` standard normals per particle from a
    dedicated counter-based stream and maps them through :meth:`transform`,
    so particle ``i``'s initial state never depends on the ensemble size.
    """

    n_normals = 0
    dim = 1

    def transform(self, z):
        """Map normals of shape ``(n, n_normals)`` to states ``(n, dim)``."""
        raise NotImplementedError


class DiracInitial(InitialLaw):
    """Every particle starts at the same point."""

    n_normals = 0

    def __init__(self, point):
        point = np.asarray(point, dtype=np.float64).reshape(-1)
        if point.size < 1 or not np.isfinite(point).all():
            raise ConfigurationError("initial point must be finite and non-empty")
        self.point = point
        self.dim = point.size

    def transform(self, z):
        n = z.shape[0]
        return np.tile(self.point, (n, 1))


class GaussianInitial(InitialLaw):
    """Independent Gaussian coordinates with given mean and spread.

    Args:
        mean: Mean vector, shape ``(d,)`` (scalars are treated as 1-D).
        std: Scalar or per-coordinate standard deviation, nonnegative.
    """

    def __init__(self, mean, std):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        std = np.broadcast_to(np.asarray(std, dtype=np.float64), mean.shape).copy()
        if not (np.isfinite(mean).all() and np.isfinite(std).all()):
            raise ConfigurationError("initial mean and std must be finite")
        if (std < 0.0).any():
            raise ConfigurationError("initial std must be nonnegative")
        self.mean = mean
        self.std = std
        self.dim = mean.size
        self.n_normals = mean.size

    def transform(self, z):
        return self.mean + self.std * z


class CoefficientModel:
    """Drift and diffusion supplier for the particle stepper.

    Subclasses define the per-particle pure functions :meth:`drift` and
    :meth:`diffusion`.  Models whose evaluation benefits from batching or
    running integrals additionally override the column hooks; the defaults
    here fall back to the per-particle route, which keeps any override
    checkable against it.

    Attributes:
        model_id: Short name used in reports, serialized headers, and the
            CLI model registry.
        dim: State dimension.
        noise_dim: Number of driving noise coordinates.
        gamma: Hölder exponent of the drift's time dependence, in (0, 1].
        lipschitz_const: Documented Lipschitz constant of the drift in its
            path argument, or None when not stated.
    """

    model_id = "abstract"
    dim = 1
    noise_dim = 1
    gamma = 1.0
    lipschitz_const = None

    def drift(self, t, path, measures):
        """Drift vector ``(dim,)`` for one particle; pure in its arguments."""
        raise NotImplementedError

    def diffusion(self, t, path, measures):
        """Diffusion matrix ``(dim, noise_dim)`` for one particle."""
        raise NotImplementedError

    def default_initial(self):
        """Initial law used when a simulation does not specify one."""
        return DiracInitial(np.zeros(self.dim))

    def validate_grid(self, grid):
        """Reject grids this model cannot run on; no-op by default.

        Models with structural grid requirements (a delay that must land
        on knots, say) override this; the stepper calls it once up front.
        """

    # Column route.  ``states`` has shape (N, n_steps + 1, dim) with columns
    # 0..m populated; every particle must read the same frozen columns.

    def make_accumulators(self, states0, grid):
        """Create the running per-particle state, covering knot 0.

        Returns None for stateless models.  Whatever is returned is owned by
        the stepper and handed back to the other column hooks unchanged.
        """
        return None

    def advance_accumulators(self, m_new, grid, states, accumulators):
        """Fold knot ``m_new`` into the running state, once per step barrier."""
        return accumulators

    def drift_at_knot(self, m, grid, states, accumulators):
        """Drift rows ``(N, dim)`` for all particles at knot ``m``."""
        return self._per_particle(self.drift, m, grid, states)

    def diffusion_at_knot(self, m, grid, states, accumulators):
        """Diffusion blocks ``(N, dim, noise_dim)`` for all particles at knot ``m``."""
        return self._per_particle(self.diffusion, m, grid, states)

    def _per_particle(self, fn, m, grid, states):
        t = grid.knot(m)
        measures = MeasurePathView.from_states(grid, states, m)
        rows = [
            np.asarray(
                fn(t, AffinePathView(DiscretePath(grid, states[i, : m + 1])), measures),
                dtype=np.float64,
            )
            for i in range(states.shape[0])
        ]
        return np.stack(rows, axis=0)

    def __repr__(self):
        return "%s(id=%r, dim=%d, noise_dim=%d)" % (
            type(self).__name__,
            self.model_id,
            self.dim,
            self.noise_dim,
        )


class MeanFieldOUParams:
    """Parameters of the linear mean-field model used as the analytic oracle.

    The dynamics are ``dX = (a X + c E[X] + forcing(t)) dt + (s + s_lin X) dB``
    in one dimension.  The base model has constant diffusion ``s``; the two
    extensions keep the moment equations closed while enriching the
    dynamics: ``s_lin`` adds state-proportional noise and ``forcing_amp``
    adds the deterministic drive ``amp * sin(2 pi freq t)``.  Defaults
    switch both extensions off.
    """

    def __init__(self, a=-1.0, c=0.5, s=0.3, s_lin=0.0, forcing_amp=0.0, forcing_freq=1.0):
        vals = [float(v) for v in (a, c, s, s_lin, forcing_amp, forcing_freq)]
        if not all(np.isfinite(v) for v in vals):
            raise ConfigurationError("mean-field OU parameters must be finite")
        if vals[2] < 0.0:
            raise ConfigurationError("diffusion level s must be nonnegative")
        self.a, self.c, self.s, self.s_lin, self.forcing_amp, self.forcing_freq = vals

    def forcing(self, t):
        if self.forcing_amp == 0.0:
            return 0.0
        return self.forcing_amp * np.sin(2.0 * np.pi * self.forcing_freq * t)

    def as_dict(self):
        return {
            "a": self.a,
            "c": self.c,
            "s": self.s,
            "s_lin": self.s_lin,
            "forcing_amp": self.forcing_amp,
            "forcing_freq": self.forcing_freq,
        }

    def __repr__(self):
        return "MeanFieldOUParams(%s)" % ", ".join(
            "%s=%r" % kv for kv in self.as_dict().items()
        )


def ou_drift(t, path, measures, params):
    """Linear mean-field drift ``a x(t) + c mean(measure at t) + forcing(t)``."""
    x = path.eval(t)
    mean = measures.at(t).mean()
    return params.a * x + params.c * mean + params.forcing(float(t))


class MeanFieldOU(CoefficientModel):
    """One-dimensional linear mean-field model with closed moment equations.

    The drift is Lipschitz in the path and measure arguments with constant
    ``|a| + |c|``; its time dependence comes only from the forcing term, so
    the Hölder exponent is 1.
    """

    dim = 1
    noise_dim = 1
    gamma = 1.0
    model_id = "mean-field-ou"

    def __init__(self, params=None):
        self.params = params if params is not None else MeanFieldOUParams()
        self.lipschitz_const = abs(self.params.a) + abs(self.params.c)

    def default_initial(self):
        return GaussianInitial([1.0], 0.5)

    def drift(self, t, path, measures):
        return ou_drift(t, path, measures, self.params)

    def diffusion(self, t, path, measures):
        level = self.params.s + self.params.s_lin * path.eval(t)[0]
        return np.array([[level]])

    def drift_at_knot(self, m, grid, states, accumulators):
        p = self.params
        x = states[:, m, :]
        mean = x.mean(axis=0)
        return p.a * x + p.c * mean + p.forcing(grid.knot(m))

    def diffusion_at_knot(self, m, grid, states, accumulators):
        p = self.params
        level = p.s + p.s_lin * states[:, m, :]
        return level[:, :, None]


def integral_drift(t_m, path, measures, phi, accumulator):
    """Drift equal to the running integral of the empirical mean of ``phi``.

    The integral of the mean of ``phi`` over the measure path, discretized
    by the trapezoid rule on the knots up to ``t_m``, is exactly the
    accumulator value once one summand per knot has been recorded.

    Args:
        t_m: A grid knot time.
        path: The particle's path view (unused; the drift is common to all
            particles, kept in the signature for contract uniformity).
        measures: Measure-path view whose grid defines the knots.
        phi: Vectorized map of atom blocks ``(n, d) -> (n, d)``.
        accumulator: :class:`TrapezoidAccumulator` holding mean-phi summands
            for knots ``0..m``.

    Raises:
        AccumulatorSyncError: If the accumulator has not recorded exactly
            one summand per knot up to ``t_m``.
        GridDomainError: If ``t_m`` is not a knot of the measure grid.
    """
    grid = measures.grid
    m, exact = grid.locate(t_m)
    if not exact:
        raise GridDomainError("integral drift is defined at grid knots, got t=%r" % t_m)
    if accumulator.count != m + 1:
        raise AccumulatorSyncError(
            "running integral recorded %d knots but time %r is knot %d"
            % (accumulator.count, t_m, m)
        )
    return _integral_value(accumulator.value, measures.dim)


def _integral_value(value, dim):
    # Before the second record the accumulator value is the scalar 0.0 even
    # for vector summands; widen it to the drift dimension.
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    return arr.reshape(-1)


class IntegralDriftModel(CoefficientModel):
    """Drift given by the time integral of the ensemble mean of ``phi``.

    The per-particle route recomputes the trapezoid sum from the stored
    measure path, while the column route carries it in an accumulator
    updated once per step; the two must agree to rounding.  The diffusion
    is the constant level ``s`` on each coordinate independently.
    """

    gamma = 1.0
    model_id = "integral-drift"

    def __init__(self, phi=None, s=0.3, dim=1):
        self.phi = phi if phi is not None else (lambda blocks: blocks)
        self.dim = int(dim)
        self.noise_dim = self.dim
        s = float(s)
        if not np.isfinite(s) or s < 0.0:
            raise ConfigurationError("diffusion level s must be nonnegative, got %r" % s)
        self.s = s

    def default_initial(self):
        return GaussianInitial(np.zeros(self.dim), 1.0)

    def _mean_phi(self, measure):
        return np.asarray(self.phi(measure.atoms), dtype=np.float64).mean(axis=0)

    def drift(self, t, path, measures):
        grid = measures.grid
        m, exact = grid.locate(t)
        if not exact:
            raise GridDomainError(
                "integral drift is defined at grid knots, got t=%r" % t
            )
        acc = TrapezoidAccumulator()
        for k in range(min(m, measures.last_index) + 1):
            acc.record(self._mean_phi(measures.measures[k]), grid.step)
        return _integral_value(acc.value, self.dim)

    def diffusion(self, t, path, measures):
        return self.s * np.eye(self.dim)

    def make_accumulators(self, states0, grid):
        acc = TrapezoidAccumulator()
        acc.record(self._mean_phi_states(states0), grid.step)
        return acc

    def advance_accumulators(self, m_new, grid, states, accumulators):
        accumulators.record(self._mean_phi_states(states[:, m_new, :]), grid.step)
        return accumulators

    def _mean_phi_states(self, column):
        return np.asarray(self.phi(column), dtype=np.float64).mean(axis=0)

    def drift_at_knot(self, m, grid, states, accumulators):
        if accumulators is None or accumulators.count != m + 1:
            have = 0 if accumulators is None else accumulators.count
            raise AccumulatorSyncError(
                "running integral recorded %d knots at step %d" % (have, m)
            )
        row = _integral_value(accumulators.value, self.dim)
        return np.broadcast_to(row, (states.shape[0], self.dim))

    def diffusion_at_knot(self, m, grid, states, accumulators):
        n = states.shape[0]
        return np.broadcast_to(self.s * np.eye(self.dim), (n, self.dim, self.dim))


class ConstantCoefficientModel(CoefficientModel):
    """Constant drift vector and diffusion matrix; the exactness workhorse.

    With zero coefficients the stepper must reproduce the initial column
    everywhere; with constant drift it is exact in the step size; with the
    identity diffusion the ensemble reproduces summed driver increments.
    """

    gamma = 1.0
    lipschitz_const = 0.0
    model_id = "constant"

    def __init__(self, drift=(0.0,), diffusion=None):
        vec = np.asarray(drift, dtype=np.float64).reshape(-1)
        self.dim = vec.size
        if diffusion is None:
            mat = np.zeros((self.dim, self.dim))
        else:
            mat = np.asarray(diffusion, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != self.dim:
                raise ConfigurationError(
                    "diffusion must be a matrix with %d rows" % self.dim
                )
        if not (np.isfinite(vec).all() and np.isfinite(mat).all()):
            raise ConfigurationError("constant coefficients must be finite")
        self.noise_dim = mat.shape[1]
        self.drift_vec = vec
        self.diffusion_mat = mat

    def drift(self, t, path, measures):
        return self.drift_vec.copy()

    def diffusion(self, t, path, measures):
        return self.diffusion_mat.copy()

    def drift_at_knot(self, m, grid, states, accumulators):
        n = states.shape[0]
        return np.broadcast_to(self.drift_vec, (n, self.dim))

    def diffusion_at_knot(self, m, grid, states, accumulators):
        n = states.shape[0]
        return np.broadcast_to(self.diffusion_mat, (n, self.dim, self.noise_dim))
