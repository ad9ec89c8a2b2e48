"""Regularized planar chemotaxis model with an exponential-memory drift.

Particles diffuse with identity noise and drift along two terms: a closed
form field coming from the initial chemical concentration, and a memory
integral that aggregates an attractive smoothed kernel against the whole
empirical history with exponential decay in elapsed time.  The kernel is
regularized in time so that it is bounded and vanishes at zero lag, which
keeps the drift globally bounded.

The initial concentration is an isotropic Gaussian bump
``c_0(y) = A * exp(-|y|^2 / (2 * width^2))``; convolving its gradient with
the regularized heat kernel gives the closed form used by ``ks_b0``.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .coefficients import CoefficientModel, GaussianInitial
from .errors import ConfigurationError, DomainError, GridDomainError, InternalConsistencyError

__all__ = [
    "KellerSegelParams",
    "KellerSegelModel",
    "ks_kernel",
    "ks_b0",
    "ks_memory_drift",
    "ks_kernel_bound",
    "ks_b0_sup",
    "drift_sup_bound",
]


class KellerSegelParams:
    """Parameter bundle for the regularized chemotaxis model.

    Args:
        epsilon: Time regularization of the interaction kernel, ``> 0``.
        chi: Chemotactic sensitivity, ``> 0``.
        lam: Exponential decay rate of the memory, ``> 0``.
        amplitude: Peak height ``A`` of the initial concentration bump.
        width: Standard-deviation width of the initial bump.
        initial_std: Spread of the default Gaussian initial particle law;
            a working choice, not forced by the dynamics.
    """

    def __init__(self, epsilon=0.1, chi=1.0, lam=1.0, amplitude=1.0, width=1.0, initial_std=0.75):
        for name, value in (
            ("epsilon", epsilon),
            ("chi", chi),
            ("lam", lam),
            ("amplitude", amplitude),
            ("width", width),
            ("initial_std", initial_std),
        ):
            if not value > 0.0:
                raise ConfigurationError("%s must be positive, got %r" % (name, value))
        self.epsilon = float(epsilon)
        self.chi = float(chi)
        self.lam = float(lam)
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.initial_std = float(initial_std)

    def as_dict(self):
        """Plain-type snapshot of the parameters, for report metadata."""
        return {
            "epsilon": self.epsilon,
            "chi": self.chi,
            "lam": self.lam,
            "amplitude": self.amplitude,
            "width": self.width,
            "initial_std": self.initial_std,
        }


def ks_kernel(t, x, epsilon):
    """Regularized attractive kernel at lag ``t``, vectorized over ``x``.

    Returns ``-x * exp(-|x|^2 / (2 t)) / (2 pi (t + epsilon)^2)`` for
    ``t > 0`` and exactly zero at ``t = 0``; the zero-lag limit of the
    expression is zero as well, so the cutoff is a continuous extension.
    """
    if t < 0.0:
        raise DomainError("kernel lag must be nonnegative, got %r" % (t,))
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError("kernel positions must have two coordinates")
    if t == 0.0:
        return np.zeros_like(x)
    sq = np.einsum("...d,...d->...", x, x)
    scale = np.exp(-sq / (2.0 * t)) / (2.0 * np.pi * (t + epsilon) ** 2)
    return -x * scale[..., None]


def ks_b0(t, x, params):
    """Drift from the initial concentration bump, vectorized over ``x``.

    Closed form of the convolution of the bump gradient with the
    regularized heat kernel:
    ``-chi * exp(-lam t) * (t / (t + eps)) * A * w^2 / (w^2 + t)^2
    * x * exp(-|x|^2 / (2 (w^2 + t)))``; identically zero at ``t = 0``.
    """
    if t < 0.0:
        raise DomainError("time must be nonnegative, got %r" % (t,))
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError("positions must have two coordinates")
    if t == 0.0:
        return np.zeros_like(x)
    p = params
    var = p.width ** 2 + t
    front = (
        p.chi
        * np.exp(-p.lam * t)
        * (t / (t + p.epsilon))
        * p.amplitude
        * p.width ** 2
        / var ** 2
    )
    sq = np.einsum("...d,...d->...", x, x)
    return -front * x * np.exp(-sq / (2.0 * var))[..., None]


def _memory_weights(m, grid, params):
    """Trapezoid prefactors for the memory integral at knot ``m``.

    Returns ``(pref, inv2dt)`` over history knots ``0..m-1``; the ``k = m``
    endpoint drops because the kernel vanishes at zero lag.  ``pref``
    folds the quadrature weight, the exponential decay, the kernel
    normalization, and the sensitivity ``chi``; the empirical ``1/N``
    factor is left to the caller.
    """
    h = grid.step
    dt = grid.knots[m] - grid.knots[:m]
    w = np.full(m, h)
    w[0] = 0.5 * h
    pref = params.chi * w * np.exp(-params.lam * dt) / (2.0 * np.pi * (dt + params.epsilon) ** 2)
    return pref, 1.0 / (2.0 * dt)


def ks_memory_drift(t_m, x, history, params):
    """Memory drift of one particle against a recorded ensemble history.

    Trapezoid-in-time, empirical-mean-in-space discretization of the
    exponentially decayed kernel integral:
    ``chi * sum_k w_k * exp(-lam (t_m - t_k)) * mean_j K(t_m - t_k,
    x - Y_j(t_k))`` over knots ``k < m``.  Costs one kernel evaluation per
    (history knot, particle) pair.

    Args:
        t_m: Evaluation time, must be a knot of ``history.grid``.
        x: Position of the particle, shape ``(2,)``.
        history: Ensemble-like object with ``grid`` and a state block
            ``states`` of shape ``(N, K, 2)`` recording knots ``0..m``.
        params: Model parameters.
    """
    grid = history.grid
    m, exact = grid.locate(t_m)
    if not exact:
        raise GridDomainError("memory drift is defined at grid knots; %r is not one" % (t_m,))
    states = np.asarray(history.states, dtype=float)
    if states.ndim != 3 or states.shape[2] != 2:
        raise DomainError("history states must have shape (particles, knots, 2)")
    if states.shape[1] < m + 1:
        raise InternalConsistencyError(
            "history records %d knots but the drift time is knot %d" % (states.shape[1], m)
        )
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise DomainError("position must be a single planar point of shape (2,)")
    if m == 0:
        return np.zeros(2)
    h = grid.step
    out = np.zeros(2)
    for k in range(m):
        dt = grid.knots[m] - grid.knots[k]
        w = 0.5 * h if k == 0 else h
        kern = ks_kernel(dt, x[None, :] - states[:, k, :], params.epsilon)
        out += w * np.exp(-params.lam * dt) * kern.mean(axis=0)
    return params.chi * out


def ks_kernel_bound(epsilon):
    """Sharp sup bound of the kernel norm over all lags and positions.

    At fixed lag the norm peaks at ``|x| = sqrt(t)``; maximizing the
    resulting ``sqrt(t) / (t + epsilon)^2`` profile over lags puts the
    peak at ``t = epsilon / 3``.
    """
    t_star = epsilon / 3.0
    return np.exp(-0.5) * np.sqrt(t_star) / (2.0 * np.pi * (t_star + epsilon) ** 2)


def ks_b0_sup(t, params):
    """Sup over positions of the initial-bump drift norm at time ``t``."""
    if t <= 0.0:
        return 0.0
    p = params
    var = p.width ** 2 + t
    return (
        p.chi
        * np.exp(-p.lam * t)
        * (t / (t + p.epsilon))
        * p.amplitude
        * p.width ** 2
        * np.exp(-0.5)
        / var ** 1.5
    )


def drift_sup_bound(params, horizon):
    """Bound on the total drift norm over ``[0, horizon]``.

    The memory part is bounded by ``chi * C_eps / lam`` for every
    trapezoid discretization, because the discrete decay weights sum below
    the full exponential integral ``1 / lam``.
    """
    ts = np.linspace(0.0, horizon, 2049)
    b0_max = max(ks_b0_sup(float(t), params) for t in ts)
    return b0_max + params.chi * ks_kernel_bound(params.epsilon) / params.lam


class KellerSegelModel(CoefficientModel):
    """Coefficient model for the regularized chemotaxis system."""

    model_id = "keller-segel"
    dim = 2
    noise_dim = 2
    gamma = 1.0

    def __init__(self, params=None):
        self.params = params if params is not None else KellerSegelParams()

    def default_initial(self):
        return GaussianInitial(np.zeros(2), self.params.initial_std)

    def drift(self, t, path, measures):
        """Per-particle drift at a grid knot: initial-bump field plus memory."""
        grid = measures.grid
        m, exact = grid.locate(t)
        if not exact:
            raise GridDomainError("drift is defined at grid knots; %r is not one" % (t,))
        if path.last_index < m:
            raise GridDomainError(
                "path records %d knots but the drift time is knot %d"
                % (path.last_index + 1, m)
            )
        if len(measures.measures) < m + 1:
            raise InternalConsistencyError(
                "measure path records %d knots but the drift time is knot %d"
                % (len(measures.measures), m)
            )
        x = np.asarray(path.values[m], dtype=float)
        out = ks_b0(t, x, self.params)
        if m == 0:
            return out
        h = grid.step
        for k in range(m):
            dt = grid.knots[m] - grid.knots[k]
            w = 0.5 * h if k == 0 else h
            kern = ks_kernel(dt, x[None, :] - measures.measures[k].atoms, self.params.epsilon)
            out = out + self.params.chi * w * np.exp(-self.params.lam * dt) * kern.mean(axis=0)
        return out

    def diffusion(self, t, path, measures):
        return np.eye(2)

    def drift_at_knot(self, m, grid, states, accumulators):
        x = np.ascontiguousarray(states[:, m, :])
        out = ks_b0(grid.knot(m), x, self.params)
        if m == 0:
            return out
        pref, inv2dt = _memory_weights(m, grid, self.params)
        mem = kernels.ks_memory_sum(
            x, np.ascontiguousarray(states), m, pref / states.shape[0], inv2dt
        )
        return out + mem

    def diffusion_at_knot(self, m, grid, states, accumulators):
        return np.broadcast_to(np.eye(2), (states.shape[0], 2, 2))
