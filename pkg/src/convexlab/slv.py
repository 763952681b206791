"""Particle calibration of the Bernoulli-mixing stochastic local-vol model.

From the horizon t2 on, the spot diffuses with volatility
``sigma0 * Y / sqrt(E[Y^2 | S_t])`` where Y is a two-point random level drawn
at t2.  The conditional expectation is estimated from an interacting particle
cloud by Nadaraya-Watson regression in log spot; freezing the estimated
leverage then makes the squared VIX at t2 a two-atom law while the associated
local volatility stays flat at sigma0.

The weak solution of the mixing SDE may not be unique; everything reported
here is a property of this concrete scheme (particle count, step size,
Gaussian kernel, Silverman bandwidth) and is seed-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngSpec
from .vix import ConvexOrderReport, Vix2Distribution, convex_order_report

BANDWIDTH_FLOOR = 1e-4  # log-spot; below it the regressor is degenerate
MIN_PARTICLES = 1000


@dataclass(frozen=True)
class BernoulliSpec:
    """Two-point mixing variable: y_minus with probability q_minus, else y_plus.

    The ratio y_plus/y_minus is capped (default 3), the regime in which the
    mixing SDE is known to admit a weak solution.
    """

    y_minus: float
    y_plus: float
    q_minus: float
    ratio_cap: float = 3.0

    def __post_init__(self):
        if not 0 < self.y_minus <= self.y_plus:
            raise ValueError("levels must satisfy 0 < y_minus <= y_plus")
        if not 0 < self.q_minus < 1:
            raise ValueError("q_minus must lie in (0, 1)")
        if self.y_plus / self.y_minus > self.ratio_cap:
            raise ValueError("y_plus/y_minus exceeds the configured cap")

    @property
    def q_plus(self) -> float:
        return 1.0 - self.q_minus

    @property
    def mean_sq(self) -> float:
        """Unconditional second moment of the mixing level."""
        return self.q_minus * self.y_minus**2 + self.q_plus * self.y_plus**2


@dataclass(frozen=True)
class ParticleSystem:
    """Particle cloud: positive spots with their mixing labels at one time."""

    log_spots: np.ndarray
    labels: np.ndarray
    time: float
    spec: BernoulliSpec

    @property
    def n(self) -> int:
        return self.log_spots.size

    @property
    def spots(self) -> np.ndarray:
        return np.exp(self.log_spots)

    def label_frequency(self) -> float:
        """Empirical probability of the low label."""
        return float(np.mean(self.labels == self.spec.y_minus))


def init_particles(n: int, s_start, spec: BernoulliSpec,
                   rng: RngSpec) -> ParticleSystem:
    """Initial cloud: spots at s_start (scalar or per-particle array), labels
    drawn i.i.d. from the two-point law.  Requires n >= 1000 so the kernel
    regression has enough data."""
    if n < MIN_PARTICLES:
        raise ValueError(f"at least {MIN_PARTICLES} particles are required "
                         "for kernel estimation")
    s_start = np.asarray(s_start, dtype=float)
    if np.any(s_start <= 0):
        raise ValueError("starting spots must be positive")
    log_spots = (np.full(n, math.log(float(s_start)))
                 if s_start.ndim == 0 else np.log(s_start))
    if log_spots.size != n:
        raise ValueError("s_start array must have one entry per particle")
    gen = rng.generator()
    labels = np.where(gen.random(n) < spec.q_minus, spec.y_minus, spec.y_plus)
    return ParticleSystem(log_spots=log_spots, labels=labels, time=0.0,
                          spec=spec)


@dataclass(frozen=True)
class LeverageCurve:
    """Estimated E[Y^2 | log spot] on a grid, linear in between and flat
    beyond the ends.  Values are kernel-weighted averages of the squared
    labels, hence stay inside [y_minus^2, y_plus^2] without clamping."""

    x_grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __call__(self, logx) -> np.ndarray:
        return np.interp(logx, self.x_grid, self.values)


def silverman_bandwidth(log_spots: np.ndarray) -> float:
    """Rule-of-thumb kernel width 1.06 * std * n^(-1/5)."""
    return float(1.06 * log_spots.std() * log_spots.size ** (-0.2))


def estimate_leverage(particles: ParticleSystem, x_grid=None,
                      bandwidth: float | None = None) -> LeverageCurve:
    """Nadaraya-Watson regression of squared labels on log spot.

    Gaussian kernel with Silverman bandwidth by default.  When the spots
    carry no information (dispersion below the bandwidth floor) the curve is
    the constant empirical second moment, which is the exact conditional
    expectation of an undispersed cloud.  Kernel support is truncated at six
    bandwidths; grid nodes beyond the data take the nearest estimated value.
    """
    y2 = particles.labels**2
    x = particles.log_spots
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if x_grid is None:
        pad = max(3.0 * bandwidth, 1e-3)
        x_grid = np.linspace(x.min() - pad, x.max() + pad, 201)
    x_grid = np.asarray(x_grid, dtype=float)
    if bandwidth < BANDWIDTH_FLOOR:
        return LeverageCurve(x_grid=x_grid,
                             values=np.full(x_grid.size, float(y2.mean())),
                             bandwidth=0.0)
    order = np.argsort(x)
    xs = x[order]
    ys = y2[order]
    lo = np.searchsorted(xs, x_grid - 6.0 * bandwidth)
    hi = np.searchsorted(xs, x_grid + 6.0 * bandwidth)
    values = np.full(x_grid.size, np.nan)
    for i in range(x_grid.size):
        seg = slice(lo[i], hi[i])
        if lo[i] >= hi[i]:
            continue
        k = np.exp(-0.5 * ((xs[seg] - x_grid[i]) / bandwidth) ** 2)
        den = k.sum()
        if den > 0:
            values[i] = np.dot(k, ys[seg]) / den
    ok = np.flatnonzero(~np.isnan(values))
    if ok.size == 0:
        values[:] = float(y2.mean())
    else:
        values[: ok[0]] = values[ok[0]]
        values[ok[-1] + 1:] = values[ok[-1]]
        for j in range(ok[0] + 1, ok[-1]):
            if np.isnan(values[j]):
                values[j] = values[j - 1]
    return LeverageCurve(x_grid=x_grid, values=values,
                         bandwidth=float(bandwidth))


def step_particles(particles: ParticleSystem, dt: float, sigma0: float,
                   curve: LeverageCurve, rng: RngSpec) -> ParticleSystem:
    """One log-Euler step of every particle under the frozen leverage curve.

    Per-particle volatility is sigma0 * label / sqrt(F(log spot)); the
    instantaneous variances therefore stay within
    [sigma0^2 y_minus^2/y_plus^2, sigma0^2 y_plus^2/y_minus^2].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = curve(particles.log_spots)
    var = sigma0**2 * particles.labels**2 / f
    z = rng.generator().standard_normal(particles.n)
    log_spots = particles.log_spots - 0.5 * var * dt + np.sqrt(var * dt) * z
    return ParticleSystem(log_spots=log_spots, labels=particles.labels,
                          time=particles.time + dt, spec=particles.spec)


@dataclass(frozen=True)
class LeverageSurface:
    """Frozen leverage estimates on a (time, log-spot) grid.

    Evaluation is linear in time between estimation times (flat beyond the
    ends) and linear in log spot; the time interpolation keeps the frozen
    surface aligned with the evolving cloud between calibration steps.
    """

    times: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    spec: BernoulliSpec
    sigma0: float
    bandwidths: np.ndarray

    def value_at(self, t: float, logx) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.times.size - 2) if self.times.size > 1 else 0
        if self.times.size == 1:
            row = self.values[0]
        else:
            h = self.times[k + 1] - self.times[k]
            w = np.clip((t - self.times[k]) / h, 0.0, 1.0) if h > 0 else 0.0
            row = (1.0 - w) * self.values[k] + w * self.values[k + 1]
        return np.interp(logx, self.x_grid, row)


@dataclass(frozen=True)
class CalibrationResult:
    """Leverage surface plus the final cloud and a per-step history summary."""

    surface: LeverageSurface
    particles: ParticleSystem
    history: dict


def run_calibration(start: float, horizon: float, dt: float, n: int,
                    spec: BernoulliSpec, sigma0: float, s_start,
                    rng: RngSpec, tau: float | None = None) -> CalibrationResult:
    """Alternate leverage estimation and particle advancement on [start, horizon].

    `s_start` may be a scalar (all particles at one spot) or an array of
    starting spots, e.g. exact mixture samples when composing with a
    pre-horizon model.  The step size is shrunk so the grid lands exactly on
    the horizon.  When `tau` is given, the horizon must exceed start + tau so
    a VIX window fits inside the calibrated surface.
    """
    if horizon <= start:
        raise ValueError("horizon must exceed start")
    if tau is not None and horizon <= start + tau:
        raise ValueError("horizon must exceed start + tau")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = max(int(math.ceil((horizon - start) / dt)), 1)
    times = np.linspace(start, horizon, n_steps + 1)

    particles = init_particles(n, s_start, spec, rng.substream(0))
    particles = ParticleSystem(particles.log_spots, particles.labels,
                               float(start), spec)

    center = float(np.median(particles.log_spots))
    spread = float(particles.log_spots.max() - particles.log_spots.min())
    half = (8.0 * sigma0 * (spec.y_plus / spec.y_minus)
            * math.sqrt(horizon - start) + 0.5 * spread + 0.05)
    x_grid = np.linspace(center - half, center + half, 241)

    values = np.empty((n_steps + 1, x_grid.size))
    bandwidths = np.empty(n_steps + 1)
    hist_mean = np.empty(n_steps + 1)
    hist_std = np.empty(n_steps + 1)
    for k in range(n_steps + 1):
        curve = estimate_leverage(particles, x_grid)
        values[k] = curve.values
        bandwidths[k] = curve.bandwidth
        hist_mean[k] = float(particles.spots.mean())
        hist_std[k] = float(particles.log_spots.std())
        if k < n_steps:
            particles = step_particles(particles, times[k + 1] - times[k],
                                       sigma0, curve, rng.substream(1, k))
    surface = LeverageSurface(times=times, x_grid=x_grid, values=values,
                              spec=spec, sigma0=float(sigma0),
                              bandwidths=bandwidths)
    history = {"times": times, "spot_mean": hist_mean, "logspot_std": hist_std,
               "f_min": float(values.min()), "f_max": float(values.max())}
    return CalibrationResult(surface=surface, particles=particles,
                             history=history)


@dataclass(frozen=True)
class FlatnessReport:
    """Binned conditional instantaneous variance against the flat target.

    Bins cover the interior quantile range of the cloud; `rel_devs` holds
    the per-bin relative deviation of E[sigma0^2 Y^2 / F(S) | S in bin]
    from sigma0^2.
    """

    bin_edges: np.ndarray
    bin_means: np.ndarray
    rel_devs: np.ndarray
    max_abs_rel_dev: float
    target: float


def flatness_report(particles: ParticleSystem, curve_or_surface, sigma0: float,
                    n_bins: int = 20, q_lo: float = 0.05,
                    q_hi: float = 0.95) -> FlatnessReport:
    """Check that the calibrated instantaneous variance is flat across spot bins."""
    x = particles.log_spots
    if isinstance(curve_or_surface, LeverageSurface):
        f = curve_or_surface.value_at(particles.time, x)
    else:
        f = curve_or_surface(x)
    v = sigma0**2 * particles.labels**2 / f
    lo, hi = np.quantile(x, [q_lo, q_hi])
    edges = np.linspace(lo, hi, n_bins + 1)
    inside = (x >= lo) & (x <= hi)
    which = np.clip(np.searchsorted(edges, x[inside], side="right") - 1,
                    0, n_bins - 1)
    v_in = v[inside]
    means = np.empty(n_bins)
    for b in range(n_bins):
        sel = which == b
        means[b] = float(v_in[sel].mean()) if np.any(sel) else sigma0**2
    rel = means / sigma0**2 - 1.0
    return FlatnessReport(bin_edges=edges, bin_means=means, rel_devs=rel,
                          max_abs_rel_dev=float(np.max(np.abs(rel))),
                          target=sigma0**2)


@dataclass(frozen=True)
class SlvVix2Result:
    """Per-label window factors and the two-atom squared-VIX law at t2.

    The squared VIX conditional on (spot, label) is sigma0^2 * label^2 times
    the label's window-averaged reciprocal leverage; `factor_minus/plus` hold
    those factors with their Monte Carlo errors.
    """

    factor_minus: float
    factor_plus: float
    se_minus: float
    se_plus: float
    distribution: Vix2Distribution


def _label_factor(surface, s, y, sigma0, T, tau, inner_paths, n_steps, rng):
    gen = rng.generator()
    ts = np.linspace(T, T + tau, n_steps + 1)
    L = np.full(inner_paths, math.log(s))
    f = surface.value_at(ts[0], L)
    inv = 1.0 / f
    acc = np.zeros(inner_paths)
    span = 0.0
    for i in range(n_steps):
        h = ts[i + 1] - ts[i]
        var = sigma0**2 * y**2 / f
        z = gen.standard_normal(inner_paths)
        L = L - 0.5 * var * h + np.sqrt(var * h) * z
        f = surface.value_at(ts[i + 1], L)
        inv_next = 1.0 / f
        acc += 0.5 * (inv + inv_next) * h
        span += h
        inv = inv_next
    vals = acc / span
    se = float(vals.std(ddof=1) / math.sqrt(inner_paths)) if inner_paths > 1 else 0.0
    return float(vals.mean()), se


def slv_vix2(surface: LeverageSurface, s: float, spec: BernoulliSpec,
             sigma0: float, T: float, tau: float, inner_paths: int,
             n_steps: int, rng: RngSpec) -> SlvVix2Result:
    """Two-atom squared-VIX law at the mixing time, conditional on spot s.

    Only T equal to the calibration start is supported: there the
    conditioning information reduces to (spot, label).  For each label an
    inner simulation under the frozen surface accumulates the
    window-averaged reciprocal leverage; both window factors lie strictly
    inside (1/y_plus^2, 1/y_minus^2).
    """
    if abs(T - float(surface.times[0])) > 1e-12:
        raise ValueError("T must equal the calibration start time")
    if T + tau > surface.times[-1] + 1e-12:
        raise ValueError("calibrated surface does not cover the VIX window")
    if s <= 0:
        raise ValueError("s must be positive")
    fm, sem = _label_factor(surface, s, spec.y_minus, sigma0, T, tau,
                            inner_paths, n_steps, rng.substream(0))
    fp, sep = _label_factor(surface, s, spec.y_plus, sigma0, T, tau,
                            inner_paths, n_steps, rng.substream(1))
    values = np.array([sigma0**2 * spec.y_minus**2 * fm,
                       sigma0**2 * spec.y_plus**2 * fp])
    ses = np.array([sigma0**2 * spec.y_minus**2 * sem,
                    sigma0**2 * spec.y_plus**2 * sep])
    weights = np.array([spec.q_minus, spec.q_plus])
    dist = Vix2Distribution(values=values, weights=weights, std_errors=ses,
                            provenance="slv-two-point")
    return SlvVix2Result(factor_minus=fm, factor_plus=fp, se_minus=sem,
                         se_plus=sep, distribution=dist)


def preserved_order_report(vix2_slv: Vix2Distribution, sigma0: float,
                           n_strikes: int = 21) -> ConvexOrderReport:
    """Compare the mixing model's squared-VIX law against its flat local-vol
    counterpart (a point mass at sigma0^2).

    A verdict of "preserved" means the stochastic law dominates in convex
    order, i.e. no inversion at this maturity.
    """
    loc = Vix2Distribution.point_mass(sigma0**2, provenance="loc-quadrature")
    return convex_order_report(vix2_slv, loc, n_strikes)
