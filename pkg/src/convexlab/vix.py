"""Squared-VIX laws and the convex-order comparison engine.

For maturities before the switch time the stochastic model's squared VIX is
a known constant, while the local-vol counterpart is the conditional average
forward variance applied to the (lognormal) spot at maturity.  The outer
expectation over the spot is done by Gauss-Hermite quadrature; the inner
conditional expectations by Monte Carlo on the local-vol surface.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import lognormal_quadrature, simulate_locvol
from .models import MixtureModel, dominant_set
from .rng import RngSpec

Z_99 = 2.576  # two-sided 99% normal quantile used for every significance call


@dataclass(frozen=True)
class ForwardVarianceCurve:
    """Estimates of the expected average forward variance given the spot.

    One entry per outer quadrature node: spot node, Monte Carlo estimate,
    its standard error, and the inner sample size.
    """

    x_nodes: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    inner_paths: int
    maturity: float
    window: float


@dataclass(frozen=True)
class Vix2Distribution:
    """Atomized law of a squared VIX.

    `std_errors` carries the Monte Carlo uncertainty of each atom value
    (zero for closed-form atoms).  Atom errors are treated as independent
    when pooling, which matches the per-node stream separation used to
    produce them.
    """

    values: np.ndarray
    weights: np.ndarray
    std_errors: np.ndarray
    provenance: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.std_errors, dtype=float)
        if v.shape != w.shape or v.shape != s.shape:
            raise ValueError("values, weights and std_errors must align")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if np.any(v < 0):
            raise ValueError("squared-VIX values must be nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "std_errors", s)

    @classmethod
    def point_mass(cls, value: float, provenance: str = "stoch-constant"):
        return cls(np.array([value]), np.array([1.0]), np.array([0.0]),
                   provenance)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def mean_se(self) -> float:
        return float(math.sqrt(np.dot(self.weights**2, self.std_errors**2)))

    def call(self, strike: float):
        """Expected call payoff on the atoms and its delta-method error."""
        pay = np.maximum(self.values - strike, 0.0)
        price = float(np.dot(self.weights, pay))
        active = self.values > strike
        se = math.sqrt(float(np.dot((self.weights * active)**2,
                                    self.std_errors**2)))
        return price, se

    def sqrt_mean(self):
        """Expected square root (the VIX future) with delta-method error."""
        roots = np.sqrt(self.values)
        v = float(np.dot(self.weights, roots))
        with np.errstate(divide="ignore"):
            d = np.where(self.values > 0, 0.5 / np.sqrt(self.values), 0.0)
        se = math.sqrt(float(np.dot((self.weights * d)**2, self.std_errors**2)))
        return v, se


def vix2_stoch_constant(model: MixtureModel, T: float) -> float:
    """The constant squared VIX of the mixture model for maturities before t1.

    Before the switch the filtration reveals nothing about the path draw, so
    the squared VIX equals the weight-averaged window variance, computed
    exactly from the piecewise-constant paths.  Raises for T >= t1, where the
    independence argument fails.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T >= model.t1:
        raise ValueError("T must precede t1: beyond the switch the squared "
                         "VIX is no longer deterministic")
    if T + model.tau > model.t2 + 1e-12:
        raise ValueError("VIX window exceeds the model horizon")
    win = (model.cumulative_variances(T + model.tau)
           - model.cumulative_variances(T)) / model.tau
    return float(np.dot(model.weights, win))


def _dominance_knots(model, a, b):
    """Times in [a, b] where the dominant set can change: path breaks plus
    pairwise crossings of the (piecewise linear) cumulative variances."""
    knots = {a, b}
    bounds = np.append(model.break_times(), model.t2)
    for x in bounds:
        if a < x < b:
            knots.add(float(x))
    ordered = np.array(sorted(knots))
    for lo, hi in zip(ordered[:-1], ordered[1:]):
        sig = model.cumulative_variances(lo)
        lv2 = model.levels_at(lo)**2
        n = model.n_paths
        for i in range(n):
            for j in range(i + 1, n):
                dl = lv2[j] - lv2[i]
                if dl == 0.0:
                    continue
                t_cross = lo + (sig[i] - sig[j]) / dl
                if lo < t_cross < hi:
                    knots.add(float(t_cross))
    return np.array(sorted(knots))


def forward_variance_limit(model: MixtureModel, T: float) -> float:
    """Window average of the dominant-path variance: the large-spot limit of
    the expected average forward variance.

    Exact piecewise integration: between consecutive knots the dominant set
    and the levels are constant.  Always at least `vix2_stoch_constant`.
    """
    if T < 0 or T + model.tau > model.t2 + 1e-12:
        raise ValueError("window [T, T+tau] must fit inside [0, t2]")
    hi = min(T + model.tau, model.t2 * (1.0 - 1e-15))
    knots = _dominance_knots(model, T, hi)
    total = 0.0
    for lo, up in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (lo + up)
        total += dominant_set(model, mid).sigma_bar_sq * (up - lo)
    return total / (knots[-1] - knots[0]) if knots.size > 1 else \
        dominant_set(model, T).sigma_bar_sq


def psi_at(surface, T: float, x: float, inner_paths: int, n_steps: int,
           rng: RngSpec):
    """Conditional average forward variance at spot x, with standard error.

    Simulates the local-vol model from (T, x) over one VIX window and
    averages the accumulated time-averaged variance.
    """
    model = surface.model
    ens = simulate_locvol(surface, T, x, T + model.tau, n_steps, inner_paths,
                          rng)
    vals = ens.avg_variance
    se = float(vals.std(ddof=1) / math.sqrt(inner_paths)) if inner_paths > 1 else 0.0
    return float(vals.mean()), se


def vix2_loc_distribution(surface, T: float, n_quad_nodes: int,
                          inner_paths: int, n_steps: int, rng: RngSpec,
                          threads: int = 1):
    """Atomized law of the local-vol squared VIX at maturity T < t1.

    The spot at T is lognormal because every path shares the sigma0 prefix,
    so the outer expectation is Gauss-Hermite quadrature over its law; each
    node owns an independent substream for its inner simulation.

    Returns
    -------
    (Vix2Distribution, ForwardVarianceCurve)
    """
    model = surface.model
    if not 0 < T < model.t1:
        raise ValueError("T must lie in (0, t1)")
    nodes, weights = lognormal_quadrature(model.sigma0**2 * T, n_quad_nodes,
                                          model.s0)

    def work(j):
        return psi_at(surface, T, nodes[j], inner_paths, n_steps,
                      rng.substream(j))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_quad_nodes)))
    else:
        results = [work(j) for j in range(n_quad_nodes)]
    est = np.array([r[0] for r in results])
    ses = np.array([r[1] for r in results])
    curve = ForwardVarianceCurve(x_nodes=nodes, estimates=est, std_errors=ses,
                                 inner_paths=inner_paths, maturity=float(T),
                                 window=model.tau)
    dist = Vix2Distribution(values=est, weights=weights, std_errors=ses,
                            provenance="loc-quadrature")
    return dist, curve


@dataclass(frozen=True)
class VixFuturesComparison:
    """VIX futures under the stochastic and local-vol laws.

    `gap` is stochastic minus local; under an inversion of convex ordering
    it is strictly positive.
    """

    future_stoch: float
    future_loc: float
    se_stoch: float
    se_loc: float
    gap: float
    gap_se: float
    ci99: tuple


def vix_futures(dist_stoch: Vix2Distribution,
                dist_loc: Vix2Distribution) -> VixFuturesComparison:
    """Atom-weighted square-root means of both laws and the gap's 99% CI."""
    fs, ses = dist_stoch.sqrt_mean()
    fl, sel = dist_loc.sqrt_mean()
    gap = fs - fl
    gse = math.hypot(ses, sel)
    return VixFuturesComparison(future_stoch=fs, future_loc=fl, se_stoch=ses,
                                se_loc=sel, gap=gap, gap_se=gse,
                                ci99=(gap - Z_99 * gse, gap + Z_99 * gse))


@dataclass(frozen=True)
class ConvexOrderReport:
    """Call-price comparison of two squared-VIX laws on a strike grid.

    Gaps are local minus stochastic: ``E[(loc-K)+] - E[(stoch-K)+]``.
    Verdicts: "inverted" when the local law dominates in convex order,
    "preserved" when the stochastic law dominates, "equal" for identical
    laws, "non-rankable" for significant gaps of both signs (or a mean
    mismatch), "inconclusive" when nothing is significant at 99%.
    """

    strikes: np.ndarray
    gaps: np.ndarray
    gap_ses: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    mean_gap: float
    mean_gap_se: float
    futures_gap: float
    futures_gap_se: float
    verdict: str
    notes: tuple = field(default_factory=tuple)


def _pooled_quantile(values, weights, q):
    order = np.argsort(values)
    v = values[order]
    w = weights[order]
    cdf = np.cumsum(w) / w.sum()
    i = int(np.searchsorted(cdf, q, side="left"))
    return float(v[min(i, v.size - 1)])


def convex_order_report(dist_stoch: Vix2Distribution,
                        dist_loc: Vix2Distribution,
                        n_strikes: int = 21,
                        mean_atol: float = 5e-4) -> ConvexOrderReport:
    """Compare the two laws by call prices on a quantile-spanning strike grid.

    Call payoffs generate the convex order for laws with equal means, so the
    means are tested first; a significant mismatch makes the laws
    non-rankable.  For Monte Carlo atoms the mean gate is
    ``max(3 pooled SE, mean_atol)``: the floor absorbs the scheme's
    discretization bias, which the pooled error does not see.  Exact atoms
    (zero standard errors) are gated and compared exactly.  Significance is
    one z at 99% (2.576).
    """
    if n_strikes < 1:
        raise ValueError("n_strikes must be positive")
    pooled_v = np.concatenate([dist_stoch.values, dist_loc.values])
    pooled_w = np.concatenate([dist_stoch.weights * 0.5,
                               dist_loc.weights * 0.5])
    lo = _pooled_quantile(pooled_v, pooled_w, 0.01)
    hi = _pooled_quantile(pooled_v, pooled_w, 0.99)
    strikes = (np.linspace(lo, hi, n_strikes) if hi > lo
               else np.array([lo]))

    gaps = np.empty(strikes.size)
    ses = np.empty(strikes.size)
    for i, k in enumerate(strikes):
        ps, es = dist_stoch.call(k)
        pl, el = dist_loc.call(k)
        gaps[i] = pl - ps
        ses[i] = math.hypot(es, el)

    mean_gap = dist_loc.mean() - dist_stoch.mean()
    mean_se = math.hypot(dist_stoch.mean_se(), dist_loc.mean_se())
    fut = vix_futures(dist_stoch, dist_loc)

    scale = max(abs(dist_stoch.mean()), abs(dist_loc.mean()), 1e-300)
    atol = 1e-12 * scale
    notes = []

    def significant(g, s):
        if s > 0:
            return abs(g) > Z_99 * s
        return abs(g) > atol

    comparable = (abs(mean_gap) <= max(3.0 * mean_se, mean_atol)
                  if mean_se > 0 else abs(mean_gap) <= atol)
    if not comparable:
        notes.append("not comparable: means differ beyond 3 pooled SE")
        verdict = "non-rankable"
    else:
        pos = any(g > 0 and significant(g, s) for g, s in zip(gaps, ses))
        neg = any(g < 0 and significant(g, s) for g, s in zip(gaps, ses))
        if np.all(np.abs(gaps) <= atol) and abs(mean_gap) <= atol:
            verdict = "equal"
        elif pos and neg:
            verdict = "non-rankable"
        elif pos:
            verdict = "inverted"
        elif neg:
            verdict = "preserved"
        else:
            verdict = "inconclusive"

    return ConvexOrderReport(
        strikes=strikes, gaps=gaps, gap_ses=ses,
        ci_lo=gaps - Z_99 * ses, ci_hi=gaps + Z_99 * ses,
        mean_gap=mean_gap, mean_gap_se=mean_se,
        futures_gap=fut.gap, futures_gap_se=fut.gap_se,
        verdict=verdict, notes=tuple(notes))
