"""Volatility paths, finite mixture models, and closed-form lognormal pricing.

A :class:`MixtureModel` draws one piecewise-constant volatility trajectory out
of finitely many, independently of the driving Brownian motion.  Conditional
on the drawn path, the spot is lognormal with the path's cumulative variance,
which makes marginal densities, call prices, and the squared VIX available in
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

VIX_WINDOW = 30.0 / 365.0  # 30-day window, in years

# Dominance ties between cumulative variances are exact in piecewise-linear
# arithmetic; the tolerance only absorbs float rounding.
DOMINANCE_REL_TOL = 1e-12


def norm_cdf(x):
    """Standard normal CDF via the erf-based `scipy.special.ndtr`.

    Accurate to full double precision (|error| < 1e-15), well below the
    1e-12 budget assumed by the pricing routines.
    """
    return ndtr(x)


def _as_readonly(a, dtype=float) -> np.ndarray:
    out = np.asarray(a, dtype=dtype).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class VolPath:
    """A piecewise-constant volatility trajectory.

    Parameters
    ----------
    breaks : array_like
        Segment start times in years.  Must start at 0 and be strictly
        increasing; segment i covers [breaks[i], breaks[i+1]) and the last
        segment extends right-open to infinity (the model horizon caps it).
    levels : array_like
        Volatility (per sqrt-year) on each segment; one level per break,
        all strictly positive.
    """

    breaks: np.ndarray
    levels: np.ndarray

    def __init__(self, breaks, levels):
        breaks = _as_readonly(breaks)
        levels = _as_readonly(levels)
        if breaks.ndim != 1 or breaks.size == 0:
            raise ValueError("breaks must be a non-empty 1-d array")
        if breaks[0] != 0.0:
            raise ValueError("breaks must start at 0")
        if breaks.size > 1 and not np.all(np.diff(breaks) > 0):
            raise ValueError("breaks must be strictly increasing")
        if levels.shape != breaks.shape:
            raise ValueError("levels must have one entry per break")
        if not np.all(np.isfinite(levels)) or np.any(levels <= 0):
            raise ValueError("levels must be finite and strictly positive")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "levels", levels)

    def level_at(self, t: float, side: str = "right") -> float:
        """Volatility at time t; right-continuous by default.

        ``side="left"`` returns the limit from the left, which differs from
        the right value exactly at a break.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        if side == "right":
            i = int(np.searchsorted(self.breaks, t, side="right")) - 1
        elif side == "left":
            i = max(int(np.searchsorted(self.breaks, t, side="left")) - 1, 0)
        else:
            raise ValueError("side must be 'left' or 'right'")
        return float(self.levels[i])

    def cumulative_variance(self, t: float) -> float:
        """Integrated squared volatility over [0, t], exact and piecewise linear."""
        return cumulative_variance(self, t)


def cumulative_variance(path: VolPath, t: float) -> float:
    """Integral of the squared path level over [0, t].

    Nonnegative, nondecreasing and piecewise linear in t with slope equal
    to the squared level of the active segment.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    ends = np.append(path.breaks[1:], np.inf)
    overlap = np.clip(np.minimum(ends, t) - path.breaks, 0.0, None)
    return float(np.dot(path.levels**2, overlap))


@dataclass(frozen=True)
class MixtureModel:
    """Finite mixture of volatility paths with a common deterministic prefix.

    Parameters
    ----------
    paths : sequence of VolPath
        The admissible trajectories (at least one; two or more for a
        non-degenerate mixture).
    weights : array_like
        Strictly positive path probabilities.  They are expected to sum to
        one; `validate_model` reports a violation rather than the
        constructor rejecting it.
    sigma0 : float
        Common volatility level before the switch time.
    t1 : float
        Switch time: every path equals sigma0 on [0, t1).
    tau : float, optional
        VIX window in years (30/365 by default).  The model horizon is
        t2 = t1 + tau.
    s0 : float, optional
        Initial spot (1.0 by default).
    """

    paths: tuple
    weights: np.ndarray
    sigma0: float
    t1: float
    tau: float = VIX_WINDOW
    s0: float = 1.0

    def __init__(self, paths, weights, sigma0, t1, tau=VIX_WINDOW, s0=1.0):
        paths = tuple(paths)
        weights = _as_readonly(weights)
        if len(paths) == 0:
            raise ValueError("at least one path is required")
        if weights.shape != (len(paths),):
            raise ValueError("one weight per path is required")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and strictly positive")
        if sigma0 <= 0 or t1 <= 0 or tau <= 0 or s0 <= 0:
            raise ValueError("sigma0, t1, tau and s0 must be positive")
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma0", float(sigma0))
        object.__setattr__(self, "t1", float(t1))
        object.__setattr__(self, "tau", float(tau))
        object.__setattr__(self, "s0", float(s0))

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def t2(self) -> float:
        """Model horizon t1 + tau."""
        return self.t1 + self.tau

    @property
    def v_lo(self) -> float:
        """Smallest volatility level across all paths."""
        return float(min(p.levels.min() for p in self.paths))

    @property
    def v_hi(self) -> float:
        """Largest volatility level across all paths."""
        return float(max(p.levels.max() for p in self.paths))

    def break_times(self) -> np.ndarray:
        """Merged, sorted path breakpoints within [0, t2)."""
        merged = np.unique(np.concatenate([p.breaks for p in self.paths]))
        return merged[merged < self.t2]

    def levels_at(self, t: float, side: str = "right") -> np.ndarray:
        return np.array([p.level_at(t, side) for p in self.paths])

    def cumulative_variances(self, t: float) -> np.ndarray:
        return np.array([cumulative_variance(p, t) for p in self.paths])


def two_path_switch_model(sigma0, sigma_hi, sigma_lo, t1, tau=VIX_WINDOW,
                          s0=1.0) -> MixtureModel:
    """Equal-weight two-path model: sigma0 before t1, then sigma_hi or sigma_lo."""
    hi = VolPath([0.0, t1], [sigma0, sigma_hi])
    lo = VolPath([0.0, t1], [sigma0, sigma_lo])
    return MixtureModel([hi, lo], [0.5, 0.5], sigma0, t1, tau, s0)


@dataclass(frozen=True)
class DominantSet:
    """Paths achieving the largest cumulative variance at a given time.

    `sigma_bar_sq` is the weight-averaged squared level over the dominant
    paths; it is the large-spot limit of the mixture local variance.
    """

    t: float
    indices: tuple
    mass: float
    sigma_bar_sq: float


def dominant_set(model: MixtureModel, t: float, tol: float | None = None) -> DominantSet:
    """Indices within `tol` of the maximal cumulative variance at time t.

    `tol` defaults to 1e-12 times the maximal cumulative variance: ties of
    the exact piecewise-linear arithmetic are exact, so the tolerance only
    guards float rounding.
    """
    if t < 0 or t >= model.t2:
        raise ValueError("t must lie in [0, t2)")
    sig = model.cumulative_variances(t)
    top = float(sig.max())
    if tol is None:
        tol = DOMINANCE_REL_TOL * top
    idx = np.flatnonzero(sig >= top - tol)
    mass = float(model.weights[idx].sum())
    lv = model.levels_at(t)[idx]
    sbar = float(np.dot(model.weights[idx], lv**2) / mass)
    return DominantSet(t=float(t), indices=tuple(int(i) for i in idx),
                       mass=mass, sigma_bar_sq=sbar)


def log_lognormal_density(s0: float, total_var: float, x) -> np.ndarray:
    """Log of the driftless lognormal marginal density with mean s0."""
    if total_var <= 0:
        raise ValueError("total_var must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    sd = math.sqrt(total_var)
    z = np.log(x / s0) / sd + 0.5 * sd
    return -np.log(x) - 0.5 * math.log(2.0 * math.pi * total_var) - 0.5 * z * z


def lognormal_density(s0: float, total_var: float, x):
    """Marginal density of a driftless lognormal spot with variance total_var."""
    out = np.exp(log_lognormal_density(s0, total_var, x))
    return float(out) if np.isscalar(x) else out


def bs_call(s0: float, strike: float, total_var: float) -> float:
    """Undiscounted Black-Scholes call price with total variance `total_var`."""
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    if strike < 0:
        raise ValueError("strike must be nonnegative")
    if total_var < 0:
        raise ValueError("total_var must be nonnegative")
    if strike == 0.0:
        return float(s0)
    if total_var == 0.0:
        return float(max(s0 - strike, 0.0))
    sd = math.sqrt(total_var)
    d1 = (math.log(s0 / strike) + 0.5 * total_var) / sd
    return float(s0 * norm_cdf(d1) - strike * norm_cdf(d1 - sd))


def mixture_call(model: MixtureModel, t: float, strike: float) -> float:
    """Weight-averaged call price over the conditional lognormal marginals."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    sig = model.cumulative_variances(t)
    prices = [bs_call(model.s0, strike, v) for v in sig]
    return float(np.dot(model.weights, prices))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of `validate_model`: empty `failures` means the model is valid."""

    passed: bool
    failures: tuple = field(default_factory=tuple)
    notes: tuple = field(default_factory=tuple)


def validate_model(model: MixtureModel) -> ValidationReport:
    """Check the mixture-model invariants and report every violation.

    Hard failures: fewer than two paths, weights not summing to one, a path
    deviating from sigma0 before t1, and a degenerate switch (no pair of
    paths separating on the first segment after t1).  The short-switch
    regime t1 < tau is reported as a note only, since it is a property of
    the maturity sweep rather than of the model itself.
    """
    failures = []
    notes = []
    if model.n_paths < 2:
        failures.append("mixture must contain at least two paths")
    wsum = float(model.weights.sum())
    if abs(wsum - 1.0) > 1e-12:
        failures.append(f"weights sum to {wsum!r}, expected 1 within 1e-12")
    for n, p in enumerate(model.paths):
        pre = p.levels[p.breaks < model.t1]
        if pre.size == 0 or np.any(pre != model.sigma0):
            failures.append(f"path {n} deviates from sigma0 on [0, t1)")
    post = model.levels_at(model.t1)
    if model.n_paths >= 2 and np.unique(post).size < 2:
        failures.append(
            "degenerate switch: all paths share the same level on the first "
            "segment after t1")
    if not model.t1 < model.tau:
        notes.append(
            "t1 >= tau: the VIX window of short maturities near t1 does not "
            "always straddle the switch")
    return ValidationReport(passed=not failures, failures=tuple(failures),
                            notes=tuple(notes))
