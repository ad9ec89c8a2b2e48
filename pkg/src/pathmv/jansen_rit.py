"""Delayed three-population neural mass model in mean-field form.

The state is the vector of three population potentials.  Each population
leaks toward zero with its own time constant, receives an external input
current, and is driven by the sigmoid firing rates of the other
populations, evaluated on the population law a fixed delay in the past.
The synaptic gain is modulated by a running integral of a bounded
functional of the particle's own past, which makes the drift genuinely
path-dependent on both arguments.

Before time reaches the delay, the lagged law is the point mass at the
origin: the system starts from rest with an identically zero history.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .coefficients import CoefficientModel, DiracInitial, TrapezoidAccumulator
from .errors import AccumulatorSyncError, ConfigurationError, GridDomainError
from .transport import EmpiricalMeasure, MeasurePathView, MixtureMeasure

__all__ = [
    "JansenRitParams",
    "JansenRitModel",
    "sigmoid_S",
    "jansen_rit_drift",
    "jansen_rit_diffusion",
]

# Off-diagonal coupling entries that may be nonzero: the first population
# talks to the other two and they talk back, but populations two and three
# never couple directly.
_ALLOWED_COUPLING = ((0, 1), (0, 2), (1, 0), (2, 0))


def sigmoid_S(v, vm, r, v0):
    """Logistic firing-rate curve ``vm / (1 + exp(r * (v0 - v)))``.

    Saturates at ``vm``, crosses ``vm / 2`` at ``v0``, and has maximal
    slope ``vm * r / 4`` there; the global Lipschitz constant is the same
    ``vm * r / 4``.  Vectorized over ``v``.
    """
    return vm * expit(r * (np.asarray(v, dtype=float) - v0))


def _default_phi(values):
    """Default excitability functional: first coordinate clipped to [-1, 1]."""
    return np.clip(np.asarray(values, dtype=float)[..., 0], -1.0, 1.0)


def _as_time_fn(value, what):
    if callable(value):
        return value, None
    try:
        const = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError("%s must be a number or a callable of time" % what)
    return (lambda t, c=const: c), const


class JansenRitParams:
    """Parameter bundle for the three-population model.

    The numeric defaults are plain working choices for desk-scale runs,
    picked to keep the dynamics stable and visibly coupled; nothing
    downstream depends on their exact values.

    Args:
        tau_12: Shared leak time constant of populations one and two.
        tau_3: Leak time constant of the third population.
        coupling: Nonnegative 3x3 gain matrix.  Unless ``enforce_pattern``
            is disabled, entries outside the allowed sparsity pattern
            (populations two and three do not couple directly) must be zero.
        epsilon: Gain of the excitability modulation, ``>= 0``.
        vm: Firing-rate ceiling, ``> 0``.
        r: Sigmoid steepness, ``> 0``.
        v0: Sigmoid midpoint potential, must satisfy ``0 < v0 < vm``.
        delay: Interaction lag, ``>= 0``; checked against the time grid
            when a model is bound to one.
        inputs: Three external input currents, each a float or a callable
            of time.
        noise_levels: Three diagonal noise intensities, each a float or a
            callable of time; these should be Lipschitz in time.
        phi: Bounded Lipschitz functional of the state, mapping an array
            of shape ``(..., 3)`` to shape ``(...)``.  Defaults to the
            first coordinate clipped to ``[-1, 1]``.
        phi_bound: Documented sup bound of ``phi``.
        phi_lipschitz: Documented Lipschitz constant of ``phi``.
        enforce_pattern: Validate the coupling sparsity pattern.
    """

    def __init__(
        self,
        tau_12=0.25,
        tau_3=0.5,
        coupling=None,
        epsilon=0.05,
        vm=5.0,
        r=0.56,
        v0=3.0,
        delay=0.0,
        inputs=(0.0, 1.0, 0.5),
        noise_levels=(0.05, 0.10, 0.05),
        phi=None,
        phi_bound=1.0,
        phi_lipschitz=1.0,
        enforce_pattern=True,
    ):
        if tau_12 <= 0.0 or tau_3 <= 0.0:
            raise ConfigurationError("leak time constants must be positive")
        if vm <= 0.0 or r <= 0.0:
            raise ConfigurationError("vm and r must be positive")
        if not 0.0 < v0 < vm:
            raise ConfigurationError(
                "sigmoid midpoint v0=%r must lie strictly between 0 and vm=%r" % (v0, vm)
            )
        if epsilon < 0.0:
            raise ConfigurationError("epsilon must be nonnegative")
        if delay < 0.0:
            raise ConfigurationError("delay must be nonnegative")
        if coupling is None:
            coupling = np.array([[0.0, 3.0, 2.0], [4.0, 0.0, 0.0], [1.5, 0.0, 0.0]])
        coupling = np.asarray(coupling, dtype=float)
        if coupling.shape != (3, 3):
            raise ConfigurationError("coupling must be a 3x3 matrix")
        if np.any(coupling < 0.0):
            raise ConfigurationError("coupling entries must be nonnegative")
        if enforce_pattern:
            for j in range(3):
                for k in range(3):
                    if j != k and (j, k) not in _ALLOWED_COUPLING and coupling[j, k] != 0.0:
                        raise ConfigurationError(
                            "coupling[%d, %d] must be zero: populations two and "
                            "three do not couple directly" % (j, k)
                        )
                if coupling[j, j] != 0.0:
                    raise ConfigurationError("coupling[%d, %d] must be zero" % (j, j))
        if len(inputs) != 3 or len(noise_levels) != 3:
            raise ConfigurationError("inputs and noise_levels must have three entries")
        if phi_bound < 0.0 or phi_lipschitz < 0.0:
            raise ConfigurationError("phi_bound and phi_lipschitz must be nonnegative")

        self.tau_12 = float(tau_12)
        self.tau_3 = float(tau_3)
        self.coupling = coupling
        self.epsilon = float(epsilon)
        self.vm = float(vm)
        self.r = float(r)
        self.v0 = float(v0)
        self.delay = float(delay)
        self.phi = _default_phi if phi is None else phi
        self.phi_bound = float(phi_bound)
        self.phi_lipschitz = float(phi_lipschitz)
        self.enforce_pattern = bool(enforce_pattern)

        self._input_fns = []
        self._input_consts = []
        for j, v in enumerate(inputs):
            fn, const = _as_time_fn(v, "inputs[%d]" % j)
            self._input_fns.append(fn)
            self._input_consts.append(const)
        self._noise_fns = []
        self._noise_consts = []
        for j, v in enumerate(noise_levels):
            fn, const = _as_time_fn(v, "noise_levels[%d]" % j)
            self._noise_fns.append(fn)
            self._noise_consts.append(const)

    @property
    def taus(self):
        """Leak time constants as a vector ``(tau_12, tau_12, tau_3)``."""
        return np.array([self.tau_12, self.tau_12, self.tau_3])

    def input_at(self, t):
        """External input vector at time ``t``, shape ``(3,)``."""
        return np.array([fn(t) for fn in self._input_fns], dtype=float)

    def noise_at(self, t):
        """Diagonal noise intensities at time ``t``, shape ``(3,)``."""
        return np.array([fn(t) for fn in self._noise_fns], dtype=float)

    def rate(self, v):
        """Firing rate of a potential array under these sigmoid parameters."""
        return sigmoid_S(v, self.vm, self.r, self.v0)

    def as_dict(self):
        """Plain-type snapshot of the parameters, for report metadata."""

        def scalar_or_tag(consts, fns):
            out = []
            for c, fn in zip(consts, fns):
                out.append(c if c is not None else "callable:%s" % getattr(fn, "__name__", "anon"))
            return out

        return {
            "tau_12": self.tau_12,
            "tau_3": self.tau_3,
            "coupling": self.coupling.tolist(),
            "epsilon": self.epsilon,
            "vm": self.vm,
            "r": self.r,
            "v0": self.v0,
            "delay": self.delay,
            "inputs": scalar_or_tag(self._input_consts, self._input_fns),
            "noise_levels": scalar_or_tag(self._noise_consts, self._noise_fns),
        }


def _mean_rates(measure, params):
    """Mean firing rate per coordinate under a (possibly mixed) measure."""
    if isinstance(measure, MixtureMeasure):
        left = _mean_rates(measure.left, params)
        right = _mean_rates(measure.right, params)
        return measure.lam * left + (1.0 - measure.lam) * right
    if isinstance(measure, EmpiricalMeasure):
        atoms = measure.atoms
    else:
        atoms = np.asarray(measure, dtype=float)
    return params.rate(atoms).mean(axis=0)


class JansenRitModel(CoefficientModel):
    """Coefficient model for the delayed three-population system."""

    model_id = "jansen-rit"
    dim = 3
    noise_dim = 3
    gamma = 1.0

    def __init__(self, params=None, allow_offgrid_delay=False):
        self.params = params if params is not None else JansenRitParams()
        self.allow_offgrid_delay = bool(allow_offgrid_delay)

    def default_initial(self):
        """Rest at the origin, matching the identically zero history."""
        return DiracInitial(np.zeros(3))

    def validate_grid(self, grid):
        p = self.params
        if p.delay >= grid.horizon:
            raise ConfigurationError(
                "delay %r must be smaller than the horizon %r" % (p.delay, grid.horizon)
            )
        self.delay_steps(grid)

    def delay_steps(self, grid):
        """Delay expressed in grid steps, or ``None`` for off-grid lookup.

        A delay that is a knot multiple (up to 1e-9 relative slack) snaps
        to the integer step count.  Anything else is rejected unless the
        model was built with ``allow_offgrid_delay``, in which case the
        lagged law is read from the interpolated measure path instead.
        """
        d = self.params.delay
        if d == 0.0:
            return 0
        ratio = d / grid.step
        k = round(ratio)
        if abs(ratio - k) <= 1e-9 * max(1.0, abs(ratio)):
            return int(k)
        if self.allow_offgrid_delay:
            return None
        raise ConfigurationError(
            "delay %r is not a whole number of grid steps (step %r); snap it "
            "to the grid or enable allow_offgrid_delay" % (d, grid.step)
        )

    def drift_lipschitz_bound(self, horizon):
        """Documented joint Lipschitz bound in (path, measure path).

        Combines the leak term, the sensitivity of the excitability
        integral to the own path, and the sensitivity of the mean rates to
        the lagged law, each bounded by sup norms of the ingredients; a
        factor two absorbs the coordinate bookkeeping.
        """
        p = self.params
        row_sum = float(np.abs(p.coupling).sum(axis=1).max())
        leak = 1.0 / min(p.tau_12, p.tau_3)
        own_path = p.epsilon * horizon * p.phi_lipschitz * row_sum * p.vm
        lagged = (1.0 + p.epsilon * p.phi_bound * horizon) * row_sum * p.vm * p.r / 4.0
        return 2.0 * (leak + own_path + lagged)

    def _excitability_integral(self, values, h):
        """Trapezoid integral of ``phi`` along recorded knot values."""
        g = np.asarray(self.params.phi(values), dtype=float)
        if g.shape[0] == 1:
            return np.zeros(g.shape[1:])
        return h * (g.sum(axis=0) - 0.5 * (g[0] + g[-1]))

    def _lagged_rates(self, m, grid, column_lookup, measures=None):
        """Mean rate vector of the law lagged by the delay at knot ``m``.

        ``column_lookup`` maps a knot index to the atom block at that knot;
        ``measures`` is only needed for off-grid delays.
        """
        p = self.params
        ds = self.delay_steps(grid)
        if ds is None:
            td = grid.knot(m) - p.delay
            if td <= 0.0:
                return np.full(3, float(p.rate(0.0)))
            return _mean_rates(measures.at(td), p)
        if m <= ds:
            return np.full(3, float(p.rate(0.0)))
        return _mean_rates(column_lookup(m - ds), p)

    def drift(self, t, path, measures, accumulator=None):
        """Per-particle drift at a grid knot.

        ``accumulator`` may carry the running excitability integral; when
        omitted the integral is recomputed from the recorded path, which
        costs one pass over its knots.
        """
        grid = measures.grid
        m, exact = grid.locate(t)
        if not exact:
            raise GridDomainError("drift is defined at grid knots; %r is not one" % (t,))
        if path.last_index < m:
            raise GridDomainError(
                "path records %d knots but the drift time is knot %d"
                % (path.last_index + 1, m)
            )
        p = self.params
        x = np.asarray(path.values[m], dtype=float)
        if accumulator is not None:
            if accumulator.count != m + 1:
                raise AccumulatorSyncError(
                    "excitability integral recorded %d knots but time %r is knot %d"
                    % (accumulator.count, t, m)
                )
            integral = float(np.asarray(accumulator.value))
        else:
            integral = float(self._excitability_integral(path.values[: m + 1], grid.step))
        rates = self._lagged_rates(
            m, grid, lambda k: measures.measures[k], measures=measures
        )
        gain = 1.0 + p.epsilon * integral
        return -x / p.taus + gain * (p.coupling @ rates) + p.input_at(t)

    def diffusion(self, t, path, measures):
        return np.diag(self.params.noise_at(t))

    def make_accumulators(self, states0, grid):
        acc = TrapezoidAccumulator()
        acc.record(self.params.phi(states0), grid.step)
        return acc

    def advance_accumulators(self, m_new, grid, states, accumulators):
        accumulators.record(self.params.phi(states[:, m_new, :]), grid.step)
        return accumulators

    def drift_at_knot(self, m, grid, states, accumulators):
        if accumulators is None or accumulators.count != m + 1:
            have = None if accumulators is None else accumulators.count
            raise AccumulatorSyncError(
                "excitability integral recorded %r knots but the step is at knot %d"
                % (have, m)
            )
        p = self.params
        n = states.shape[0]
        integral = np.asarray(accumulators.value, dtype=float)
        if integral.ndim == 0:
            integral = np.full(n, float(integral))
        view = None
        if self.delay_steps(grid) is None:
            view = MeasurePathView.from_states(grid, states, m)
        rates = self._lagged_rates(m, grid, lambda k: states[:, k, :], measures=view)
        gain = 1.0 + p.epsilon * integral
        inter = p.coupling @ rates
        return -states[:, m, :] / p.taus + gain[:, None] * inter[None, :] + p.input_at(grid.knot(m))

    def diffusion_at_knot(self, m, grid, states, accumulators):
        diag = np.diag(self.params.noise_at(grid.knot(m)))
        return np.broadcast_to(diag, (states.shape[0], 3, 3))


def jansen_rit_drift(t, path, measures, params, accumulator=None, allow_offgrid_delay=False):
    """Drift of the delayed three-population model for a single particle.

    Evaluates at a grid knot of ``measures.grid``.  When ``accumulator``
    is supplied it must hold the excitability integral recorded through
    that knot; otherwise the integral is recomputed from the path.
    """
    model = JansenRitModel(params, allow_offgrid_delay=allow_offgrid_delay)
    return model.drift(t, path, measures, accumulator=accumulator)


def jansen_rit_diffusion(t, params):
    """Diagonal noise matrix ``diag(f_1(t), f_2(t), f_3(t))``."""
    return np.diag(params.noise_at(t))
