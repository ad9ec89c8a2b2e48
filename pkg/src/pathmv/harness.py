"""Experiment harness: configured studies with reproducible reports.

Each study turns an :class:`ExperimentConfig` into a :class:`StudyReport`
holding per-cell estimates, an ordered metadata footer, and a verdict.
Reports serialize to CSV (exact ``repr`` floats, comment-line footer) and
to an SVG plot; both outputs are byte-deterministic for a fixed config and
seed, regardless of thread count, so reruns can be diffed directly.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np
from scipy import stats

from .coefficients import (
    ConstantCoefficientModel,
    DiracInitial,
    GaussianInitial,
    IntegralDriftModel,
    MeanFieldOU,
    MeanFieldOUParams,
)
from .errors import ConfigurationError, DomainError, SimulationDivergedError
from .grid import make_grid
from .jansen_rit import JansenRitModel, JansenRitParams
from .keller_segel import KellerSegelModel, KellerSegelParams
from .simulator import (
    coupled_pair,
    ensemble_sup_moment,
    path_modulus,
    simulate,
    strong_error,
)
from .transport import adjacent_knot_slack, wasserstein_1d_gaussian

__all__ = [
    "ExperimentConfig",
    "StudyReport",
    "build_model",
    "build_initial",
    "default_config",
    "ou_moment_curves",
    "fit_loglog_slope",
    "run_rate_study",
    "run_chaos_study",
    "run_moment_oracle",
    "run_modulus_study",
    "run_moment_stability",
    "run_study",
    "emit_report",
    "write_report_csv",
    "write_report_plot",
    "report_to_csv_text",
    "parse_report_csv",
]

_KINDS = ("rate", "chaos", "oracle", "modulus", "moment")


class ExperimentConfig:
    """Validated description of one study.

    Shared fields apply to every kind; the rest are per kind: ``rate``
    sweeps grid sizes with a coupled fine run, ``chaos`` sweeps particle
    counts against the analytic marginal law, ``oracle`` checks terminal
    moments at one size, ``modulus`` and ``moment`` sweep grid sizes on a
    single run each.

    Args:
        kind: One of ``rate``, ``chaos``, ``oracle``, ``modulus``,
            ``moment``.
        model: Registry name of the coefficient model.
        params: Keyword overrides for the model's parameter bundle.
        horizon: Terminal time of every grid in the study.
        p: Moment order of the error functionals; at least 2.
        seed: Base seed; replicate indices salt it per repetition.
        replications: Independent repetitions per cell.
        label: Stem of emitted files; defaults to the kind.
        initial: Optional initial-law spec, ``{"kind": "point", "point":
            [...]}`` or ``{"kind": "gaussian", "mean": [...], "std": ...}``.
        m_values: Strictly increasing step counts (rate, modulus, moment).
        n_particles: Ensemble size (rate, oracle, modulus, moment).
        refinement: Fine-over-coarse step ratio for rate cells.
        slope_band: Optional ``(lo, hi)`` acceptance band for the rate
            slope; without it the study reports without a verdict.
        reference_slope: Optional slope drawn on the plot for comparison.
        n_values: Strictly increasing particle counts (chaos).
        m_steps: Fixed step count (chaos, oracle).
        reference: Reference law for chaos distances; only ``analytic``
            is available.
        quantile_nodes: Gauss-Legendre nodes per rank cell in the
            analytic-distance quadrature.
    """

    def __init__(
        self,
        kind,
        model="mean-field-ou",
        params=None,
        horizon=1.0,
        p=2.0,
        seed=1031,
        replications=1,
        label=None,
        initial=None,
        m_values=None,
        n_particles=1000,
        refinement=2,
        slope_band=None,
        reference_slope=None,
        n_values=None,
        m_steps=256,
        reference="analytic",
        quantile_nodes=16,
    ):
        if kind not in _KINDS:
            raise ConfigurationError("unknown study kind %r" % (kind,))
        self.kind = kind
        self.model = str(model)
        self.params = dict(params) if params else {}
        self.horizon = float(horizon)
        if not self.horizon > 0.0:
            raise ConfigurationError("horizon must be positive")
        self.p = float(p)
        if self.p < 2.0:
            raise ConfigurationError("moment order p must be at least 2, got %r" % (p,))
        self.seed = int(seed)
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        self.replications = int(replications)
        if self.replications < 1:
            raise ConfigurationError("replications must be at least 1")
        self.label = str(label) if label is not None else kind
        self.initial = dict(initial) if initial else None

        self.m_values = None
        self.n_values = None
        if kind in ("rate", "modulus", "moment"):
            if not m_values:
                raise ConfigurationError("%s study needs m_values" % kind)
            self.m_values = [int(m) for m in m_values]
            if any(m < 1 for m in self.m_values):
                raise ConfigurationError("m_values must be positive")
            if any(b <= a for a, b in zip(self.m_values, self.m_values[1:])):
                raise ConfigurationError("m_values must be strictly increasing")
            if len(self.m_values) < 2:
                raise ConfigurationError("need at least two m_values")
        if kind == "chaos":
            if not n_values:
                raise ConfigurationError("chaos study needs n_values")
            self.n_values = [int(n) for n in n_values]
            if any(n < 2 for n in self.n_values):
                raise ConfigurationError("n_values must be at least 2")
            if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
                raise ConfigurationError("n_values must be strictly increasing")
        self.n_particles = int(n_particles)
        if self.n_particles < 1:
            raise ConfigurationError("n_particles must be positive")
        self.refinement = int(refinement)
        if self.refinement < 2:
            raise ConfigurationError("refinement must be at least 2")
        self.slope_band = None
        if slope_band is not None:
            lo, hi = (float(v) for v in slope_band)
            if not lo < hi:
                raise ConfigurationError("slope_band must be an increasing pair")
            self.slope_band = (lo, hi)
        self.reference_slope = None if reference_slope is None else float(reference_slope)
        self.m_steps = int(m_steps)
        if self.m_steps < 1:
            raise ConfigurationError("m_steps must be positive")
        self.reference = str(reference)
        if kind == "chaos" and self.reference != "analytic":
            raise ConfigurationError(
                "reference %r is not available; only the analytic marginal law is"
                % (reference,)
            )
        self.quantile_nodes = int(quantile_nodes)
        if self.quantile_nodes < 2:
            raise ConfigurationError("quantile_nodes must be at least 2")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ConfigurationError("config is missing the study kind")
        try:
            return cls(kind, **data)
        except TypeError as exc:
            raise ConfigurationError("bad config field: %s" % exc)

    def to_dict(self):
        """Fully resolved plain-type snapshot; hashing and footers use it."""
        out = {
            "kind": self.kind,
            "model": self.model,
            "params": self.params,
            "horizon": self.horizon,
            "p": self.p,
            "seed": self.seed,
            "replications": self.replications,
            "label": self.label,
            "initial": self.initial,
        }
        if self.kind in ("rate", "modulus", "moment"):
            out["m_values"] = self.m_values
            out["n_particles"] = self.n_particles
        if self.kind == "rate":
            out["refinement"] = self.refinement
            out["slope_band"] = list(self.slope_band) if self.slope_band else None
            out["reference_slope"] = self.reference_slope
        if self.kind == "chaos":
            out["n_values"] = self.n_values
            out["m_steps"] = self.m_steps
            out["reference"] = self.reference
            out["quantile_nodes"] = self.quantile_nodes
            out["reference_slope"] = self.reference_slope
        if self.kind == "oracle":
            out["m_steps"] = self.m_steps
            out["n_particles"] = self.n_particles
        return out

    def sha1(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()


def build_model(name, params=None):
    """Instantiate a registry model from plain-type parameter overrides."""
    params = dict(params) if params else {}
    if name == "mean-field-ou":
        return MeanFieldOU(MeanFieldOUParams(**params))
    if name == "integral-drift":
        return IntegralDriftModel(**params)
    if name == "constant":
        return ConstantCoefficientModel(**params)
    if name == "jansen-rit":
        allow = params.pop("allow_offgrid_delay", False)
        return JansenRitModel(JansenRitParams(**params), allow_offgrid_delay=allow)
    if name == "keller-segel":
        return KellerSegelModel(KellerSegelParams(**params))
    raise ConfigurationError("unknown model %r" % (name,))


def build_initial(spec, model):
    """Initial law from a config spec, or the model default when absent."""
    if spec is None:
        return model.default_initial()
    kind = spec.get("kind")
    if kind == "point":
        return DiracInitial(spec["point"])
    if kind == "gaussian":
        return GaussianInitial(spec["mean"], spec["std"])
    raise ConfigurationError("unknown initial-law kind %r" % (kind,))


def _params_snapshot(model):
    params = getattr(model, "params", None)
    if params is not None and hasattr(params, "as_dict"):
        return params.as_dict()
    if isinstance(model, ConstantCoefficientModel):
        return {
            "drift": model.drift_vec.tolist(),
            "diffusion": model.diffusion_mat.tolist(),
        }
    if isinstance(model, IntegralDriftModel):
        return {"s": model.s, "dim": model.dim}
    return {"model_id": model.model_id}


def _params_sha1(model):
    blob = json.dumps(_params_snapshot(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()


class StudyReport:
    """Result of one study: rows, ordered footer metadata, and a verdict.

    ``rows`` holds ``(key, estimate, stderr, n_reps)`` tuples; ``footer``
    is an ordered list of ``(key, value)`` string pairs appended to the
    CSV as comments.  ``passed`` is True/False for studies with an
    acceptance rule and None for report-only studies.  ``fit`` optionally
    carries plot data (fitted slope line and axis labels).
    """

    def __init__(self, kind, label, model_id, config, rows, footer, passed=None, fit=None):
        self.kind = kind
        self.label = label
        self.model_id = model_id
        self.config = config
        self.rows = list(rows)
        self.footer = list(footer)
        self.passed = passed
        self.fit = fit

    def footer_value(self, key, default=None):
        for k, v in self.footer:
            if k == key:
                return v
        return default


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv_text(report):
    """Render the report as CSV text: header, rows, then comment footer."""
    lines = ["key,estimate,stderr,n_reps"]
    for key, est, se, reps in report.rows:
        lines.append("%s,%s,%s,%d" % (key, repr(float(est)), repr(float(se)), reps))
    for key, value in report.footer:
        lines.append("# %s: %s" % (key, value))
    return "\n".join(lines) + "\n"


def write_report_csv(report, path):
    text = report_to_csv_text(report)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def parse_report_csv(path):
    """Read back a report CSV; returns (rows, footer dict)."""
    rows = []
    footer = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line == "key,estimate,stderr,n_reps":
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition(":")
                footer[key.strip()] = value.strip()
                continue
            key, est, se, reps = line.split(",")
            rows.append((key, float(est), float(se), int(reps)))
    return rows, footer


def write_report_plot(report, path):
    """Render the study as a deterministic SVG errorbar plot."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    from matplotlib import pyplot as plt

    fit = report.fit or {}
    xs, ys, ses = [], [], []
    for (key, est, se, _), x in zip(report.rows, fit.get("x", [])):
        if np.isfinite(est) and est > 0.0:
            xs.append(x)
            ys.append(est)
            ses.append(se)
    with plt.rc_context({"svg.hashsalt": "pathmv"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        if xs:
            ax.errorbar(xs, ys, yerr=ses, fmt="o", capsize=3, label="estimate")
            ax.set_xscale("log")
            ax.set_yscale("log")
            slope = fit.get("slope")
            intercept = fit.get("intercept")
            if slope is not None and intercept is not None:
                grid_x = np.array([min(xs), max(xs)])
                ax.plot(
                    grid_x,
                    np.exp(intercept) * grid_x ** slope,
                    "-",
                    label="fit slope %.3f" % slope,
                )
            ref = fit.get("reference_slope")
            if ref is not None:
                anchor_x, anchor_y = xs[0], ys[0]
                grid_x = np.array([min(xs), max(xs)])
                ax.plot(
                    grid_x,
                    anchor_y * (grid_x / anchor_x) ** ref,
                    "--",
                    label="reference slope %.2f" % ref,
                )
            ax.legend()
        ax.set_xlabel(fit.get("xlabel", "cell"))
        ax.set_ylabel(fit.get("ylabel", "estimate"))
        ax.set_title("%s (%s)" % (report.label, report.model_id))
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def emit_report(report, out_dir, formats=("csv", "plot")):
    """Write the report files into ``out_dir``; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if "csv" in formats:
        paths.append(write_report_csv(report, os.path.join(out_dir, report.label + ".csv")))
    if "plot" in formats and report.rows:
        paths.append(write_report_plot(report, os.path.join(out_dir, report.label + ".svg")))
    return paths


def _ols_loglog(xs, ys):
    """OLS fit of log y on log x: (slope, intercept, 95% half-width)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    n = lx.size
    mx, my = lx.mean(), ly.mean()
    sxx = float(((lx - mx) ** 2).sum())
    if sxx == 0.0:
        raise DomainError("log-log fit needs distinct x values")
    slope = float(((lx - mx) * (ly - my)).sum() / sxx)
    intercept = my - slope * mx
    resid = ly - (intercept + slope * lx)
    ssr = float((resid ** 2).sum())
    if n > 2 and ssr > 0.0:
        se = math.sqrt(ssr / (n - 2) / sxx)
        half = float(stats.t.ppf(0.975, n - 2)) * se
    else:
        half = 0.0
    return slope, float(intercept), half


def fit_loglog_slope(points):
    """Fitted log-log slope with a 95 percent half-width.

    ``points`` is a sequence of ``(x, error)`` or ``(x, error, stderr)``
    tuples; at least three are needed and both coordinates must be
    strictly positive.
    """
    pts = list(points)
    if len(pts) < 3:
        raise DomainError("slope fit needs at least three points, got %d" % len(pts))
    xs = [float(pt[0]) for pt in pts]
    ys = [float(pt[1]) for pt in pts]
    if any(not np.isfinite(v) or v <= 0.0 for v in xs + ys):
        raise DomainError("slope fit needs strictly positive finite coordinates")
    slope, _, half = _ols_loglog(xs, ys)
    return slope, half


def _initial_moments(law):
    if isinstance(law, GaussianInitial):
        if law.mean.size != 1:
            raise ConfigurationError("moment curves cover one-dimensional laws only")
        return float(law.mean[0]), float(law.std[0]) ** 2
    if isinstance(law, DiracInitial):
        if law.point.size != 1:
            raise ConfigurationError("moment curves cover one-dimensional laws only")
        return float(law.point[0]), 0.0
    raise ConfigurationError("moment curves need a Gaussian or point initial law")


def ou_moment_curves(params, law, times):
    """Mean and variance of the linear mean-field model along ``times``.

    Uses the closed-form solution when the noise is additive and there is
    no forcing; otherwise integrates the closed moment system with a
    high-order adaptive scheme.  Returns ``(means, variances)``.
    """
    m0, v0 = _initial_moments(law)
    times = np.asarray(times, dtype=float)
    a, c, s = params.a, params.c, params.s
    if params.s_lin == 0.0 and params.forcing_amp == 0.0:
        k = a + c
        means = m0 * np.exp(k * times)
        if a != 0.0:
            growth = np.exp(2.0 * a * times)
            variances = v0 * growth + s * s * (growth - 1.0) / (2.0 * a)
        else:
            variances = v0 + s * s * times
        return means, variances

    from scipy.integrate import solve_ivp

    def rhs(t, y):
        m, u = y
        f = params.forcing(t)
        dm = (a + c) * m + f
        du = (
            (2.0 * a + params.s_lin ** 2) * u
            + 2.0 * (c * m + f + s * params.s_lin) * m
            + s * s
        )
        return (dm, du)

    t_end = float(times[-1])
    if t_end == 0.0:
        return np.full_like(times, m0), np.full_like(times, v0)
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        (m0, v0 + m0 * m0),
        method="DOP853",
        t_eval=times,
        rtol=1e-11,
        atol=1e-13,
    )
    if not sol.success:
        raise DomainError("moment integration failed: %s" % sol.message)
    means = sol.y[0]
    variances = sol.y[1] - means ** 2
    return means, variances


def _cell_stats(values, fallback_se):
    values = np.asarray(values, dtype=float)
    est = float(values.mean())
    if values.size > 1:
        se = float(values.std(ddof=1)) / math.sqrt(values.size)
    else:
        se = float(fallback_se)
    return est, se


def _base_footer(config, model):
    return [
        ("kind", config.kind),
        ("model", model.model_id),
        ("seed", str(config.seed)),
        ("p", repr(config.p)),
        ("horizon", repr(config.horizon)),
        ("replications", str(config.replications)),
        ("config_sha1", config.sha1()),
        ("params_sha1", _params_sha1(model)),
        ("params", json.dumps(_params_snapshot(model), sort_keys=True)),
    ]


def _monotone_window(estimates):
    """Smallest start index from which the estimates strictly decrease."""
    n = len(estimates)
    start = n - 1
    while start > 0 and estimates[start - 1] > estimates[start]:
        start -= 1
    return start


def run_rate_study(config):
    """Strong-error sweep over grid sizes with a coupled fine reference.

    Each cell runs ``replications`` coupled pairs at one step count and
    averages the strong errors; the slope of log error against log step
    comes from the widest monotone tail of the cells.  A divergence marks
    the cell and the report instead of aborting the sweep.
    """
    if config.kind != "rate":
        raise ConfigurationError("run_rate_study needs a rate config")
    if len(config.m_values) < 4:
        raise ConfigurationError("rate study needs at least four m_values")
    model = build_model(config.model, config.params)
    law = build_initial(config.initial, model)
    rows = []
    estimates = []
    diverged = []
    for m_steps in config.m_values:
        grid = make_grid(config.horizon, m_steps)
        errs = []
        last_se = 0.0
        try:
            for rep in range(config.replications):
                coarse, fine = coupled_pair(
                    model,
                    grid,
                    config.refinement,
                    config.n_particles,
                    config.seed,
                    initial=law,
                    replicate=rep,
                )
                err, last_se = strong_error(coarse, fine, config.p)
                errs.append(err)
            est, se = _cell_stats(errs, last_se)
        except SimulationDivergedError:
            est, se = float("nan"), float("nan")
            diverged.append(m_steps)
        rows.append((str(m_steps), est, se, config.replications))
        estimates.append(est)
    hs = [config.horizon / m for m in config.m_values]
    finite = [i for i, e in enumerate(estimates) if np.isfinite(e)]
    footer = _base_footer(config, model)
    footer.append(("refinement", str(config.refinement)))
    footer.append(("n_particles", str(config.n_particles)))
    if diverged:
        footer.append(("diverged_cells", " ".join(str(m) for m in diverged)))
    fit = {
        "x": hs,
        "xlabel": "step size",
        "ylabel": "strong error (p=%g)" % config.p,
        "reference_slope": config.reference_slope,
    }
    passed = None
    if diverged:
        footer.append(("verdict", "diverged"))
        passed = False
    elif all(estimates[i] == 0.0 for i in finite):
        footer.append(("fit", "degenerate"))
        footer.append(("verdict", "degenerate: all errors vanish"))
    else:
        usable = [i for i in finite if estimates[i] > 0.0]
        window = usable[_monotone_window([estimates[i] for i in usable]) :]
        if len(window) < 3:
            window = usable
            footer.append(("fit_window_note", "no monotone tail; fitted all cells"))
        footer.append(
            ("fit_window", "M=%s..%s" % (config.m_values[window[0]], config.m_values[window[-1]]))
        )
        xs = [hs[i] for i in window]
        ys = [estimates[i] for i in window]
        slope, intercept, half = _ols_loglog(xs, ys)
        fit["slope"] = slope
        fit["intercept"] = intercept
        footer.append(("slope", repr(slope)))
        footer.append(("slope_half_width", repr(half)))
        if config.slope_band is not None:
            lo, hi = config.slope_band
            passed = lo <= slope <= hi
            footer.append(("slope_band", "%s..%s" % (repr(lo), repr(hi))))
            footer.append(("verdict", "pass" if passed else "fail"))
        else:
            footer.append(("verdict", "report-only"))
    return StudyReport(
        "rate", config.label, model.model_id, config.to_dict(), rows, footer, passed, fit
    )


def run_chaos_study(config):
    """Particle-count sweep of the sup-over-knots distance to the law.

    For each ensemble size the study simulates the interacting system on a
    fixed fine grid and measures, per replication, the largest
    one-dimensional transport distance between a knot's empirical measure
    and the analytic Gaussian marginal at that knot.  The verdict asserts
    strict decrease of the averages in the particle count; the fitted
    slope in ``N`` is reported but carries no assertion.
    """
    if config.kind != "chaos":
        raise ConfigurationError("run_chaos_study needs a chaos config")
    if len(config.n_values) < 4:
        raise ConfigurationError("chaos study needs at least four n_values")
    if config.model != "mean-field-ou":
        raise ConfigurationError("the analytic reference covers the mean-field-ou model only")
    model = build_model(config.model, config.params)
    if model.params.s_lin != 0.0:
        raise ConfigurationError("the analytic reference needs additive noise (s_lin = 0)")
    law = build_initial(config.initial, model)
    grid = make_grid(config.horizon, config.m_steps)
    means, variances = ou_moment_curves(model.params, law, grid.knots)
    stds = np.sqrt(np.maximum(variances, 0.0))
    rows = []
    estimates = []
    slack_value = None
    for n in config.n_values:
        sups = []
        for rep in range(config.replications):
            ens = simulate(model, grid, n, config.seed, initial=law, replicate=rep)
            cols = ens.states[:, :, 0]
            worst = 0.0
            for m in range(grid.n_steps + 1):
                w = wasserstein_1d_gaussian(
                    cols[:, m], means[m], stds[m], config.p, config.quantile_nodes
                )
                if w > worst:
                    worst = w
            sups.append(worst)
            if n == config.n_values[-1] and rep == config.replications - 1:
                slack_value = adjacent_knot_slack(ens.measure_path(), config.p)
        est, se = _cell_stats(sups, 0.0)
        rows.append((str(n), est, se, config.replications))
        estimates.append(est)
    footer = _base_footer(config, model)
    footer.append(("m_steps", str(config.m_steps)))
    footer.append(("reference", "analytic gaussian marginals from the moment equations"))
    footer.append(("quantile_nodes", str(config.quantile_nodes)))
    if slack_value is not None:
        footer.append(("adjacent_knot_slack", repr(float(slack_value))))
    decreasing = all(b < a for a, b in zip(estimates, estimates[1:]))
    slope, intercept, half = _ols_loglog(config.n_values, estimates)
    footer.append(("slope_in_n", repr(slope)))
    footer.append(("slope_in_n_half_width", repr(half)))
    footer.append(("monotone_decrease", "yes" if decreasing else "no"))
    footer.append(("verdict", "pass" if decreasing else "fail"))
    fit = {
        "x": [float(n) for n in config.n_values],
        "xlabel": "particles",
        "ylabel": "sup-knot distance (p=%g)" % config.p,
        "slope": slope,
        "intercept": intercept,
        "reference_slope": config.reference_slope,
    }
    return StudyReport(
        "chaos", config.label, model.model_id, config.to_dict(), rows, footer, decreasing, fit
    )


def run_moment_oracle(config):
    """Terminal mean and variance of one run against the moment equations."""
    if config.kind != "oracle":
        raise ConfigurationError("run_moment_oracle needs an oracle config")
    if config.model != "mean-field-ou":
        raise ConfigurationError("the moment oracle covers the mean-field-ou model only")
    model = build_model(config.model, config.params)
    law = build_initial(config.initial, model)
    grid = make_grid(config.horizon, config.m_steps)
    means, variances = ou_moment_curves(model.params, law, np.array([0.0, config.horizon]))
    target_mean, target_var = float(means[-1]), float(variances[-1])
    ens = simulate(model, grid, config.n_particles, config.seed, initial=law)
    x = ens.states[:, -1, 0]
    n = x.size
    est_mean = float(x.mean())
    se_mean = float(x.std(ddof=1)) / math.sqrt(n)
    est_var = float(x.var(ddof=1))
    se_var = est_var * math.sqrt(2.0 / (n - 1))
    z_mean = abs(est_mean - target_mean) / se_mean if se_mean else float("inf")
    z_var = abs(est_var - target_var) / se_var if se_var else float("inf")
    passed = z_mean <= 3.0 and z_var <= 3.0
    rows = [
        ("mean", est_mean, se_mean, 1),
        ("variance", est_var, se_var, 1),
    ]
    footer = _base_footer(config, model)
    footer.append(("m_steps", str(config.m_steps)))
    footer.append(("n_particles", str(config.n_particles)))
    footer.append(("target_mean", repr(target_mean)))
    footer.append(("target_variance", repr(target_var)))
    footer.append(("z_mean", repr(z_mean)))
    footer.append(("z_variance", repr(z_var)))
    footer.append(("verdict", "pass" if passed else "fail"))
    return StudyReport(
        "oracle", config.label, model.model_id, config.to_dict(), rows, footer, passed, None
    )


def run_modulus_study(config):
    """One-step path excursions across grid sizes against sqrt(h log h).

    Reports, per step count, the ratio of the p-th-moment largest one-step
    excursion to ``sqrt(h |log h|)``; the verdict requires every ratio to
    stay within a factor three of the coarsest grid's, which pins the
    step-modulus scaling without asserting a constant.
    """
    if config.kind != "modulus":
        raise ConfigurationError("run_modulus_study needs a modulus config")
    model = build_model(config.model, config.params)
    law = build_initial(config.initial, model)
    rows = []
    ratios = []
    for m_steps in config.m_values:
        grid = make_grid(config.horizon, m_steps)
        h = grid.step
        denom = math.sqrt(h * abs(math.log(h)))
        if denom == 0.0:
            raise ConfigurationError(
                "step %r makes sqrt(h |log h|) vanish; change m_values" % h
            )
        vals = []
        last_se = 0.0
        for rep in range(config.replications):
            ens = simulate(
                model, grid, config.n_particles, config.seed, initial=law, replicate=rep
            )
            v, last_se = path_modulus(ens, config.p)
            vals.append(v / denom)
        est, se = _cell_stats(vals, last_se / denom)
        rows.append((str(m_steps), est, se, config.replications))
        ratios.append(est)
    worst = max(ratios)
    bound = 3.0 * ratios[0]
    passed = worst <= bound
    footer = _base_footer(config, model)
    footer.append(("n_particles", str(config.n_particles)))
    footer.append(("estimate", "max one-step excursion over sqrt(h |log h|)"))
    footer.append(("coarsest_ratio", repr(ratios[0])))
    footer.append(("worst_ratio", repr(worst)))
    footer.append(("bound", repr(bound)))
    footer.append(("verdict", "pass" if passed else "fail"))
    fit = {
        "x": [config.horizon / m for m in config.m_values],
        "xlabel": "step size",
        "ylabel": "normalized one-step excursion",
    }
    return StudyReport(
        "modulus", config.label, model.model_id, config.to_dict(), rows, footer, passed, fit
    )


def run_moment_stability(config):
    """Sup-over-knots moment estimates across grid sizes.

    The verdict requires the largest estimate to stay below twice the
    smallest, confirming that refining the grid does not inflate the
    simulated paths.
    """
    if config.kind != "moment":
        raise ConfigurationError("run_moment_stability needs a moment config")
    model = build_model(config.model, config.params)
    law = build_initial(config.initial, model)
    rows = []
    estimates = []
    for m_steps in config.m_values:
        grid = make_grid(config.horizon, m_steps)
        vals = []
        last_se = 0.0
        for rep in range(config.replications):
            ens = simulate(
                model, grid, config.n_particles, config.seed, initial=law, replicate=rep
            )
            v, last_se = ensemble_sup_moment(ens, config.p)
            vals.append(v)
        est, se = _cell_stats(vals, last_se)
        rows.append((str(m_steps), est, se, config.replications))
        estimates.append(est)
    low, high = min(estimates), max(estimates)
    passed = high < 2.0 * low
    footer = _base_footer(config, model)
    footer.append(("n_particles", str(config.n_particles)))
    footer.append(("estimate", "sup-knot p-norm of the state"))
    footer.append(("min_estimate", repr(low)))
    footer.append(("max_estimate", repr(high)))
    footer.append(("spread_factor", repr(high / low if low else float("inf"))))
    footer.append(("verdict", "pass" if passed else "fail"))
    fit = {
        "x": [float(m) for m in config.m_values],
        "xlabel": "steps",
        "ylabel": "sup-knot moment (p=%g)" % config.p,
    }
    return StudyReport(
        "moment", config.label, model.model_id, config.to_dict(), rows, footer, passed, fit
    )


_RUNNERS = {
    "rate": run_rate_study,
    "chaos": run_chaos_study,
    "oracle": run_moment_oracle,
    "modulus": run_modulus_study,
    "moment": run_moment_stability,
}


def run_study(config):
    """Dispatch a config to its study runner."""
    return _RUNNERS[config.kind](config)


def default_config(kind, variant=None):
    """Built-in study configurations at desk scale.

    These are the parameterizations the acceptance checks run; the CLI
    uses them when no config file is given.  ``rate`` has two variants:
    ``diffusion`` (state-proportional noise, expecting the square-root
    slope) and ``control`` (deterministic forced drift, expecting the
    first-order slope).
    """
    if kind == "rate":
        if variant in (None, "diffusion"):
            return ExperimentConfig(
                "rate",
                model="mean-field-ou",
                params={"a": -1.0, "c": 0.5, "s": 0.1, "s_lin": 0.4},
                m_values=[16, 32, 64, 128, 256, 512],
                n_particles=1000,
                replications=64,
                refinement=2,
                slope_band=(0.40, 0.60),
                reference_slope=0.5,
                seed=1031,
                label="rate_diffusion",
            )
        if variant == "control":
            return ExperimentConfig(
                "rate",
                model="mean-field-ou",
                params={"a": -1.0, "c": 0.5, "s": 0.0, "s_lin": 0.0, "forcing_amp": 1.0},
                initial={"kind": "gaussian", "mean": [1.0], "std": 0.5},
                m_values=[16, 32, 64, 128, 256, 512],
                n_particles=1000,
                replications=64,
                refinement=2,
                slope_band=(0.85, 1.15),
                reference_slope=1.0,
                seed=1031,
                label="rate_control",
            )
        raise ConfigurationError("unknown rate variant %r" % (variant,))
    if variant is not None:
        raise ConfigurationError("variants exist for the rate study only")
    if kind == "chaos":
        return ExperimentConfig(
            "chaos",
            model="mean-field-ou",
            params={"a": -1.0, "c": 0.5, "s": 0.3},
            initial={"kind": "gaussian", "mean": [1.0], "std": 0.5},
            n_values=[50, 200, 800, 6400],
            m_steps=512,
            replications=32,
            reference_slope=-0.5,
            seed=2063,
            label="chaos",
        )
    if kind == "oracle":
        return ExperimentConfig(
            "oracle",
            model="mean-field-ou",
            params={"a": -1.0, "c": 0.5, "s": 0.3},
            initial={"kind": "gaussian", "mean": [1.0], "std": 0.5},
            m_steps=256,
            n_particles=10000,
            seed=4127,
            label="oracle",
        )
    if kind == "modulus":
        return ExperimentConfig(
            "modulus",
            model="constant",
            params={"drift": [0.0], "diffusion": [[1.0]]},
            initial={"kind": "point", "point": [0.0]},
            m_values=[16, 32, 64, 128, 256, 512],
            n_particles=2000,
            replications=8,
            seed=8219,
            label="modulus",
        )
    if kind == "moment":
        return ExperimentConfig(
            "moment",
            model="mean-field-ou",
            params={"a": -1.0, "c": 0.5, "s": 0.3},
            initial={"kind": "gaussian", "mean": [1.0], "std": 0.5},
            m_values=[8, 16, 32, 64, 128, 256],
            n_particles=2000,
            replications=8,
            seed=16417,
            label="moment",
        )
    raise ConfigurationError("unknown study kind %r" % (kind,))
