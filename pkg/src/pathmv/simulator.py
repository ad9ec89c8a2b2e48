"""Particle stepper for path-dependent mean-field dynamics.

The scheme is explicit Euler on a uniform grid: every particle advances
with drift and diffusion read from the frozen knot columns, so the update
is bulk-synchronous and the empirical measure each particle sees is the
same regardless of evaluation order or worker count.

Noise comes from a counter-based generator keyed by ``(seed, replicate,
particle)``: any increment can be regenerated in isolation, streams do not
depend on the particle count, and a coarse grid's increments are exact
block sums of the refined grid's, which is what makes coupled
coarse-versus-fine runs differ only by discretization.
"""

from __future__ import annotations

import struct

import numpy as np
from numpy.random import Generator, Philox

from . import kernels
from .errors import (
    ConfigurationError,
    DomainError,
    GridDomainError,
    LineageMismatchError,
    SimulationDivergedError,
    UnsupportedInputError,
)
from .grid import AffinePathView, DiscretePath, make_grid
from .transport import EmpiricalMeasure, MeasurePathView

__all__ = [
    "BrownianDriver",
    "ParticleEnsemble",
    "euler_step",
    "simulate",
    "continuous_eval",
    "coupled_pair",
    "strong_error",
    "path_modulus",
    "ensemble_sup_moment",
    "save_ensemble",
    "load_ensemble",
    "save_ensemble_csv",
    "load_ensemble_csv",
]

_TWO63 = 1 << 63
_TWO64 = 1 << 64


class BrownianDriver:
    """Reproducible Brownian increments on a grid, one stream per particle.

    Each particle owns a counter-based stream whose key mixes the seed, the
    replicate index, and a purpose tag (increments versus initial draws),
    with the particle index in the counter block.  Draws are therefore a
    pure function of ``(seed, replicate, particle, step)``: independent of
    how many particles run, of evaluation order, and of the worker count.

    ``subdivision`` generates the underlying normals at a grid refined by
    that factor and emits their block sums, so a driver on a coarse grid
    with subdivision ``R`` and a driver on the ``R``-fold refined grid with
    subdivision one describe the same Brownian path, increment for
    increment, to the last bit.
    """

    def __init__(self, seed, noise_dim, grid, subdivision=1, replicate=0):
        seed = int(seed)
        if not 0 <= seed < _TWO64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")
        replicate = int(replicate)
        if not 0 <= replicate < _TWO63:
            raise ConfigurationError("replicate must lie in [0, 2**63)")
        noise_dim = int(noise_dim)
        if noise_dim < 1:
            raise ConfigurationError("noise_dim must be at least 1")
        subdivision = int(subdivision)
        if subdivision < 1:
            raise ConfigurationError("subdivision must be at least 1")
        self.seed = seed
        self.replicate = replicate
        self.noise_dim = noise_dim
        self.grid = grid
        self.subdivision = subdivision
        self.fine_grid = grid.refine(subdivision)

    def _stream(self, particle, tag):
        particle = int(particle)
        if not 0 <= particle < _TWO64:
            raise ConfigurationError("particle index must fit in an unsigned 64-bit integer")
        key = np.array([self.seed, (self.replicate << 1) | tag], dtype=np.uint64)
        counter = np.array([0, 0, particle, 0], dtype=np.uint64)
        return Generator(Philox(key=key, counter=counter))

    def increments(self, particle):
        """Brownian increments over the grid steps, shape ``(n_steps, noise_dim)``."""
        raw = self._stream(particle, tag=0).standard_normal(
            (self.fine_grid.n_steps, self.noise_dim)
        )
        raw *= np.sqrt(self.fine_grid.step)
        if self.subdivision == 1:
            return raw
        return raw.reshape(self.grid.n_steps, self.subdivision, self.noise_dim).sum(axis=1)

    def increments_matrix(self, n_particles):
        """Increments for particles ``0..n_particles-1``, shape ``(N, n_steps, q)``."""
        out = np.empty((n_particles, self.grid.n_steps, self.noise_dim))
        for i in range(n_particles):
            out[i] = self.increments(i)
        return out

    def initial_normals(self, n_particles, count):
        """Standard normals for the initial draw, shape ``(N, count)``.

        Comes from a stream separate from the increments, so the initial
        condition does not shift when the grid resolution changes.
        """
        out = np.empty((n_particles, count))
        for i in range(n_particles):
            out[i] = self._stream(i, tag=1).standard_normal(count)
        return out

    def __repr__(self):
        return "BrownianDriver(seed=%d, replicate=%d, noise_dim=%d, grid=%r, subdivision=%d)" % (
            self.seed,
            self.replicate,
            self.noise_dim,
            self.grid,
            self.subdivision,
        )


class ParticleEnsemble:
    """State block of a particle system over a grid.

    ``states`` has shape ``(n_particles, n_steps + 1, dim)``; column ``m``
    holds every particle at knot ``m``.  ``filled`` marks the last knot
    with valid data, so a partially advanced ensemble is a first-class
    object that :func:`euler_step` can continue.
    """

    __slots__ = ("grid", "states", "model_id", "seed", "replicate", "filled")

    def __init__(self, grid, states, model_id, seed, replicate=0, filled=None):
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 3:
            raise DomainError("states must have shape (particles, knots, dim)")
        if states.shape[0] < 1:
            raise DomainError("ensemble needs at least one particle")
        if states.shape[1] != grid.n_steps + 1:
            raise GridDomainError(
                "states record %d knots but the grid has %d"
                % (states.shape[1], grid.n_steps + 1)
            )
        if filled is None:
            filled = grid.n_steps
        filled = int(filled)
        if not 0 <= filled <= grid.n_steps:
            raise GridDomainError("filled=%d outside 0..%d" % (filled, grid.n_steps))
        self.grid = grid
        self.states = states
        self.model_id = str(model_id)
        self.seed = int(seed)
        self.replicate = int(replicate)
        self.filled = filled

    @property
    def n_particles(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[2]

    @property
    def n_steps(self):
        return self.grid.n_steps

    @property
    def is_complete(self):
        return self.filled == self.grid.n_steps

    def path(self, particle):
        """Recorded path of one particle as a :class:`DiscretePath`."""
        return DiscretePath(self.grid, self.states[particle, : self.filled + 1])

    def view(self, particle):
        """Interpolated view of one particle's recorded path."""
        return AffinePathView(self.path(particle))

    def measure_at_knot(self, m):
        """Empirical measure of the column at knot ``m``."""
        if not 0 <= m <= self.filled:
            raise GridDomainError("knot %d not recorded; ensemble is filled to %d" % (m, self.filled))
        return EmpiricalMeasure(self.states[:, m, :])

    def measure_path(self):
        """Interpolated empirical-measure path over the recorded knots."""
        return MeasurePathView.from_states(self.grid, self.states, self.filled)

    def __repr__(self):
        return "ParticleEnsemble(model=%r, n=%d, steps=%d, dim=%d, filled=%d, seed=%d, replicate=%d)" % (
            self.model_id,
            self.n_particles,
            self.n_steps,
            self.dim,
            self.filled,
            self.seed,
            self.replicate,
        )


def _advance_one(states, m, grid, model, accumulators, db):
    """Write column ``m + 1`` from column data at ``m``; returns accumulators."""
    b = np.asarray(model.drift_at_knot(m, grid, states, accumulators), dtype=np.float64)
    sig = np.asarray(model.diffusion_at_knot(m, grid, states, accumulators), dtype=np.float64)
    n, d = states.shape[0], states.shape[2]
    if b.shape != (n, d):
        raise DomainError("drift rows have shape %r, expected %r" % (b.shape, (n, d)))
    if sig.ndim != 3 or sig.shape[0] != n or sig.shape[1] != d:
        raise DomainError("diffusion blocks must have shape (particles, dim, noise_dim)")
    if sig.shape[2] == 1:
        noise = sig[:, :, 0] * db
    else:
        noise = np.einsum("ndq,nq->nd", sig, db)
    # overflow here is a divergence, reported below through the exception
    with np.errstate(over="ignore", invalid="ignore"):
        states[:, m + 1, :] = states[:, m, :] + grid.step * b + noise
    col = states[:, m + 1, :]
    finite = np.isfinite(col).all(axis=1)
    if not finite.all():
        bad = int(np.nonzero(~finite)[0][0])
        raise SimulationDivergedError(model.model_id, bad, m + 1)
    return model.advance_accumulators(m + 1, grid, states, accumulators)


def _replay_accumulators(model, grid, states, upto):
    acc = model.make_accumulators(states[:, 0, :], grid)
    for k in range(1, upto + 1):
        acc = model.advance_accumulators(k, grid, states, acc)
    return acc


def euler_step(ensemble, model, driver):
    """Advance a partially filled ensemble by one knot, in place.

    Self-contained: the model's running state is replayed from the
    recorded columns before stepping, which costs a pass over the history.
    Loops that advance many knots should use :func:`simulate` instead,
    which carries the running state across steps.
    """
    if ensemble.filled >= ensemble.n_steps:
        raise GridDomainError("ensemble is already complete")
    if model.model_id != ensemble.model_id:
        raise LineageMismatchError(
            "model %r cannot advance an ensemble built by %r" % (model.model_id, ensemble.model_id)
        )
    if driver.grid != ensemble.grid:
        raise LineageMismatchError("driver grid %r does not match ensemble grid %r" % (driver.grid, ensemble.grid))
    if driver.noise_dim != model.noise_dim:
        raise LineageMismatchError(
            "driver carries %d noise coordinates but the model needs %d"
            % (driver.noise_dim, model.noise_dim)
        )
    if (driver.seed, driver.replicate) != (ensemble.seed, ensemble.replicate):
        raise LineageMismatchError("driver seed or replicate does not match the ensemble")
    m = ensemble.filled
    acc = _replay_accumulators(model, ensemble.grid, ensemble.states, m)
    db = np.stack([driver.increments(i)[m] for i in range(ensemble.n_particles)])
    _advance_one(ensemble.states, m, ensemble.grid, model, acc, db)
    ensemble.filled = m + 1
    return ensemble


def simulate(model, grid, n_particles, seed, initial=None, replicate=0, subdivision=1, driver=None):
    """Run the full particle system and return the complete ensemble.

    Args:
        model: Coefficient model to integrate.
        grid: Time grid to step over.
        n_particles: Number of interacting particles.
        seed: Base seed of the noise streams.
        initial: Initial law; defaults to the model's own.
        replicate: Replicate index salted into the noise streams, letting
            repeated experiments share code paths but not randomness.
        subdivision: Generate noise at this refinement of ``grid`` and
            consume block sums; used to couple runs across resolutions.
        driver: Explicit driver to draw from; overrides ``seed``,
            ``replicate``, and ``subdivision`` and must live on ``grid``.
    """
    n_particles = int(n_particles)
    if n_particles < 1:
        raise ConfigurationError("n_particles must be at least 1")
    model.validate_grid(grid)
    if driver is None:
        driver = BrownianDriver(seed, model.noise_dim, grid, subdivision=subdivision, replicate=replicate)
    else:
        if driver.grid != grid:
            raise LineageMismatchError("driver grid %r does not match %r" % (driver.grid, grid))
        if driver.noise_dim != model.noise_dim:
            raise LineageMismatchError(
                "driver carries %d noise coordinates but the model needs %d"
                % (driver.noise_dim, model.noise_dim)
            )
    law = initial if initial is not None else model.default_initial()
    if law.dim != model.dim:
        raise ConfigurationError(
            "initial law has dimension %d but the model state has %d" % (law.dim, model.dim)
        )
    states = np.empty((n_particles, grid.n_steps + 1, model.dim))
    if law.n_normals:
        z = driver.initial_normals(n_particles, law.n_normals)
    else:
        z = np.empty((n_particles, 0))
    states[:, 0, :] = np.asarray(law.transform(z), dtype=np.float64).reshape(n_particles, model.dim)
    finite = np.isfinite(states[:, 0, :]).all(axis=1)
    if not finite.all():
        raise SimulationDivergedError(model.model_id, int(np.nonzero(~finite)[0][0]), 0)
    acc = model.make_accumulators(states[:, 0, :], grid)
    db = driver.increments_matrix(n_particles)
    for m in range(grid.n_steps):
        acc = _advance_one(states, m, grid, model, acc, db[:, m, :])
    return ParticleEnsemble(grid, states, model.model_id, driver.seed, driver.replicate)


def continuous_eval(ensemble, particle, t):
    """Interpolated state of one particle at time ``t`` (scalar or array)."""
    return ensemble.view(particle).eval(t)


def coupled_pair(model, grid, refinement, n_particles, seed, initial=None, replicate=0):
    """Coarse and ``refinement``-fold fine runs on one Brownian path.

    Both runs draw the same underlying noise and the same initial states;
    the coarse run consumes block sums of the fine increments, so the two
    ensembles differ only through the discretization.
    """
    refinement = int(refinement)
    if refinement < 2:
        raise ConfigurationError("refinement must be at least 2")
    coarse = simulate(
        model, grid, n_particles, seed, initial=initial, replicate=replicate, subdivision=refinement
    )
    fine = simulate(
        model, grid.refine(refinement), n_particles, seed, initial=initial, replicate=replicate
    )
    return coarse, fine


def _check_pair(coarse, fine):
    """Validate that ``fine`` refines ``coarse`` on one lineage; returns the ratio."""
    if coarse.model_id != fine.model_id:
        raise LineageMismatchError(
            "model mismatch: %r versus %r" % (coarse.model_id, fine.model_id)
        )
    if coarse.n_particles != fine.n_particles:
        raise LineageMismatchError(
            "particle count mismatch: %d versus %d" % (coarse.n_particles, fine.n_particles)
        )
    if coarse.dim != fine.dim:
        raise LineageMismatchError("dimension mismatch: %d versus %d" % (coarse.dim, fine.dim))
    if (coarse.seed, coarse.replicate) != (fine.seed, fine.replicate):
        raise LineageMismatchError("seed or replicate mismatch; runs are not coupled")
    if coarse.grid.horizon != fine.grid.horizon:
        raise LineageMismatchError(
            "horizon mismatch: %r versus %r" % (coarse.grid.horizon, fine.grid.horizon)
        )
    if fine.n_steps % coarse.n_steps != 0:
        raise LineageMismatchError(
            "fine grid with %d steps does not refine coarse grid with %d"
            % (fine.n_steps, coarse.n_steps)
        )
    if not (coarse.is_complete and fine.is_complete):
        raise DomainError("both ensembles must be fully advanced")
    return fine.n_steps // coarse.n_steps


def _moment_with_stderr(per_particle, p):
    """``(E[D^p])^(1/p)`` and its delta-method standard error."""
    powered = per_particle ** p
    u = float(powered.mean())
    n = powered.shape[0]
    se_u = float(powered.std(ddof=1)) / np.sqrt(n) if n > 1 else 0.0
    if u == 0.0:
        return 0.0, 0.0
    est = u ** (1.0 / p)
    return est, float(se_u * est / (p * u))


def strong_error(coarse, fine, p=2.0):
    """Monte Carlo strong error between coupled runs at the coarse knots.

    Returns ``((E[max_m |fine(t_m) - coarse(t_m)|^p])^(1/p), stderr)``
    with the maximum over coarse knots and the expectation over particles;
    the standard error propagates the particle scatter of the per-particle
    maxima through the outer root.
    """
    if p < 1.0:
        raise DomainError("order p must be at least 1, got %r" % (p,))
    stride = _check_pair(coarse, fine)
    diff = fine.states[:, ::stride, :] - coarse.states
    sq = np.einsum("nmd,nmd->nm", diff, diff)
    per_particle = np.sqrt(sq.max(axis=1))
    return _moment_with_stderr(per_particle, p)


def path_modulus(ensemble, p=2.0, fine=None):
    """Largest one-step path excursion, in the same p-th-moment form.

    By default measures knot-to-knot increments of the recorded paths.
    When a coupled fine run is supplied, each coarse step's excursion is
    instead sampled at the interior fine knots, giving a sharper in-step
    reading of the same quantity.
    """
    if p < 1.0:
        raise DomainError("order p must be at least 1, got %r" % (p,))
    if ensemble.n_steps < 2:
        raise GridDomainError("modulus needs at least two steps, got %d" % ensemble.n_steps)
    if fine is None:
        if not ensemble.is_complete:
            raise DomainError("ensemble must be fully advanced")
        inc = ensemble.states[:, 1:, :] - ensemble.states[:, :-1, :]
        sq = np.einsum("nmd,nmd->nm", inc, inc)
        per_particle = np.sqrt(sq.max(axis=1))
        return _moment_with_stderr(per_particle, p)
    stride = _check_pair(ensemble, fine)
    m_coarse = ensemble.n_steps
    idx = np.arange(m_coarse)[:, None] * stride + np.arange(stride + 1)[None, :]
    windows = fine.states[:, idx, :]
    ref = ensemble.states[:, :-1, None, :]
    diff = windows - ref
    sq = np.einsum("nmjd,nmjd->nmj", diff, diff)
    per_particle = np.sqrt(sq.max(axis=(1, 2)))
    return _moment_with_stderr(per_particle, p)


def ensemble_sup_moment(ensemble, p=2.0):
    """``(E[sup_m |X(t_m)|^p])^(1/p)`` over the recorded knots, with stderr."""
    if p < 1.0:
        raise DomainError("order p must be at least 1, got %r" % (p,))
    block = np.ascontiguousarray(ensemble.states[:, : ensemble.filled + 1, :])
    per_particle = kernels.knot_sup_norms(block)
    return _moment_with_stderr(per_particle, p)


_MAGIC = b"PMVE"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQdQQQ")


def save_ensemble(ensemble, path):
    """Write the ensemble to a columnar binary file.

    Header carries particle count, step count, dimension, horizon, seed,
    replicate, fill level, and the model id; the payload is the float64
    state block in knot-major order, so one knot's column is contiguous.
    """
    model_bytes = ensemble.model_id.encode("utf-8")
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        ensemble.n_particles,
        ensemble.n_steps,
        ensemble.dim,
        ensemble.grid.horizon,
        ensemble.seed,
        ensemble.replicate,
        ensemble.filled,
    )
    payload = np.ascontiguousarray(ensemble.states.transpose(1, 0, 2)).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<I", len(model_bytes)))
        fh.write(model_bytes)
        fh.write(payload.tobytes())


def load_ensemble(path):
    """Read an ensemble written by :func:`save_ensemble`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size + 4 or blob[:4] != _MAGIC:
        raise UnsupportedInputError("not an ensemble file: bad magic")
    magic, version, n, m, d, horizon, seed, replicate, filled = _HEADER.unpack_from(blob, 0)
    if version != _VERSION:
        raise UnsupportedInputError("unsupported ensemble file version %d" % version)
    off = _HEADER.size
    (id_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    model_id = blob[off : off + id_len].decode("utf-8")
    off += id_len
    expected = (m + 1) * n * d * 8
    if len(blob) - off != expected:
        raise DomainError(
            "ensemble payload has %d bytes, expected %d" % (len(blob) - off, expected)
        )
    payload = np.frombuffer(blob, dtype="<f8", offset=off).reshape(m + 1, n, d)
    states = np.ascontiguousarray(payload.transpose(1, 0, 2))
    return ParticleEnsemble(make_grid(horizon, m), states, model_id, seed, replicate, filled)


def save_ensemble_csv(ensemble, path):
    """Write the ensemble as a readable CSV, one row per (particle, knot).

    Metadata rides in leading comment lines; values are printed with
    ``repr`` so float64 round-trips exactly.  Meant for small runs.
    """
    lines = [
        "# pathmv ensemble",
        "# model: %s" % ensemble.model_id,
        "# seed: %d" % ensemble.seed,
        "# replicate: %d" % ensemble.replicate,
        "# horizon: %s" % repr(ensemble.grid.horizon),
        "# n_steps: %d" % ensemble.n_steps,
        "# n_particles: %d" % ensemble.n_particles,
        "# dim: %d" % ensemble.dim,
        "# filled: %d" % ensemble.filled,
        "particle,knot,time," + ",".join("x%d" % c for c in range(ensemble.dim)),
    ]
    for i in range(ensemble.n_particles):
        for m in range(ensemble.filled + 1):
            coords = ",".join(repr(float(v)) for v in ensemble.states[i, m, :])
            lines.append("%d,%d,%s,%s" % (i, m, repr(float(ensemble.grid.knot(m))), coords))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_ensemble_csv(path):
    """Read an ensemble written by :func:`save_ensemble_csv`."""
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# ") and ":" in line:
                key, _, value = line[2:].partition(":")
                meta[key.strip()] = value.strip()
            elif line and not line.startswith("#") and not line.startswith("particle,"):
                rows.append(line.split(","))
    try:
        n = int(meta["n_particles"])
        m = int(meta["n_steps"])
        d = int(meta["dim"])
        grid = make_grid(float(meta["horizon"]), m)
        filled = int(meta["filled"])
    except KeyError as exc:
        raise DomainError("ensemble CSV is missing metadata field %s" % exc)
    states = np.zeros((n, m + 1, d))
    for parts in rows:
        i, k = int(parts[0]), int(parts[1])
        states[i, k, :] = [float(v) for v in parts[3 : 3 + d]]
    return ParticleEnsemble(
        grid, states, meta.get("model", ""), int(meta.get("seed", 0)), int(meta.get("replicate", 0)), filled
    )
