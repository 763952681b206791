"""Exact mixture local variance and gridded surfaces for simulation.

The local variance of a mixture model is a density-weighted average of the
squared path levels.  The weights are ratios of lognormal densities that
span hundreds of orders of magnitude in the spot tails, so everything is
evaluated in log space with max-subtraction; raw densities are never formed.
"""

from __future__ import annotations

import math

import numpy as np

from .models import MixtureModel, dominant_set


def _log_posterior_terms(model, sig, levels, L):
    """log(weight * marginal density) per path, up to terms common to all paths.

    `sig` and `levels` are per-path cumulative variances and levels, `L` the
    log-moneyness array ln(x/s0).
    """
    L = np.asarray(L, dtype=float)
    sd = np.sqrt(sig)
    z = L[None, :] / sd[:, None] + 0.5 * sd[:, None]
    return (np.log(model.weights)[:, None]
            - 0.5 * np.log(sig)[:, None] - 0.5 * z * z)


def _posteriors(model, t, L, side="right"):
    """Posterior path probabilities given spot s0*exp(L) at time t, shape (N, len(L))."""
    sig = model.cumulative_variances(t)
    if np.any(sig <= 0):
        raise ValueError("t must be positive so every marginal is non-degenerate")
    levels = model.levels_at(t, side)
    a = _log_posterior_terms(model, sig, levels, L)
    a -= a.max(axis=0, keepdims=True)
    w = np.exp(a)
    return w / w.sum(axis=0, keepdims=True), levels


def mixture_weights(model: MixtureModel, t: float, x: float) -> np.ndarray:
    """Density ratio weights of every path at (t, x).

    Entry n is the conditional density of path n over the mixture density;
    the weight-weighted sum over paths equals one.  Stable for |ln x| up to
    several hundred (log-space evaluation with max-subtraction).
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if not 0 < t < model.t2:
        raise ValueError("t must lie in (0, t2)")
    L = np.array([math.log(x / model.s0)])
    post, _ = _posteriors(model, t, L)
    return post[:, 0] / model.weights


def local_variance(model: MixtureModel, t: float, x: float,
                   side: str = "right") -> float:
    """Exact mixture local variance at time t and spot x.

    The value lies in the convex hull of the squared path levels at t.
    ``side="left"`` evaluates with the levels in force just before t, which
    differs from the default right-continuous value exactly at a path break.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if not 0 < t < model.t2 and not (side == "left" and t == model.t2):
        raise ValueError("t must lie in (0, t2)")
    L = np.array([math.log(x / model.s0)])
    post, levels = _posteriors(model, t, L, side)
    return float(np.dot(post[:, 0], levels**2))


def _check_common_prefix(model):
    for p in model.paths:
        pre = p.levels[p.breaks < model.t1]
        if pre.size == 0 or np.any(pre != model.sigma0):
            raise ValueError(
                "surface construction requires every path to equal sigma0 "
                "before t1")


class _Block:
    """Bilinear patch of the surface over one segment [t_lo, t_hi).

    Within a segment every path level is constant, so the local variance is
    smooth in (t, ln x); values at t_hi are limits from the left.  `limits`
    holds the large-|ln x| limit per time node, used for flat extrapolation
    beyond the log-moneyness grid (held piecewise constant in t).
    """

    __slots__ = ("t_lo", "t_hi", "t_nodes", "values", "limits")

    def __init__(self, t_lo, t_hi, t_nodes, values, limits):
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.t_nodes = t_nodes
        self.values = values
        self.limits = limits

    def eval(self, t, L, logx_grid):
        if self.t_nodes.size == 1:
            row = self.values[0]
            lim = self.limits[0]
        else:
            j = int(np.searchsorted(self.t_nodes, t, side="right")) - 1
            j = min(max(j, 0), self.t_nodes.size - 2)
            h = self.t_nodes[j + 1] - self.t_nodes[j]
            w = (t - self.t_nodes[j]) / h if h > 0 else 0.0
            row = (1.0 - w) * self.values[j] + w * self.values[j + 1]
            lim = self.limits[j]
        out = np.interp(L, logx_grid, row)
        outside = (L < logx_grid[0]) | (L > logx_grid[-1])
        if np.any(outside):
            out = np.where(outside, lim, out)
        return out


class LocalVolSurface:
    """Gridded local variance with bilinear interpolation inside segments.

    Node values are exact; interpolation is bilinear in (t, ln x) within each
    constant-level segment of the paths (so the jump of the local variance at
    a path break is represented exactly), and flat in ln x beyond the grid,
    extrapolating to the dominant-path limit at that time.

    Immutable after construction; concurrent reads are safe.
    """

    def __init__(self, model, blocks, logx_grid):
        self.model = model
        self._blocks = blocks
        self.logx_grid = logx_grid
        self._starts = np.array([b.t_lo for b in blocks])
        self.horizon = blocks[-1].t_hi

    @property
    def time_boundaries(self) -> np.ndarray:
        """Segment boundaries; simulation grids must not straddle them."""
        return np.append(self._starts, self.horizon)

    def _block_index(self, t, side):
        if side == "right":
            if t >= self.horizon:
                if t == self.horizon:
                    return len(self._blocks) - 1
                raise ValueError("t beyond surface horizon")
            k = int(np.searchsorted(self._starts, t, side="right")) - 1
        else:
            k = int(np.searchsorted(self._starts, t, side="left")) - 1
        if k < 0 or t > self.horizon:
            raise ValueError("t outside surface domain")
        return min(k, len(self._blocks) - 1)

    def variance_logx(self, t: float, L, side: str = "right") -> np.ndarray:
        """Interpolated local variance at time t over log-moneyness array L."""
        b = self._blocks[self._block_index(t, side)]
        return b.eval(t, np.asarray(L, dtype=float), self.logx_grid)

    def variance(self, t: float, x, side: str = "right"):
        x = np.asarray(x, dtype=float)
        out = self.variance_logx(t, np.log(x / self.model.s0), side)
        return float(out) if x.ndim == 0 else out

    def node_times(self) -> np.ndarray:
        """All time nodes, block by block (boundary times appear twice)."""
        return np.concatenate([b.t_nodes for b in self._blocks])

    def rows(self):
        """Yield (t, x, value) over the full grid, row-major in (t, x)."""
        xs = self.model.s0 * np.exp(self.logx_grid)
        for b in self._blocks:
            for j, t in enumerate(b.t_nodes):
                for x, v in zip(xs, b.values[j]):
                    yield float(t), float(x), float(v)

    def write_csv(self, path):
        """Export the grid as (t, x, sigma_loc_sq) rows with 17 significant digits."""
        with open(path, "w", newline="\n") as fh:
            fh.write("t,x,sigma_loc_sq\n")
            for t, x, v in self.rows():
                fh.write(f"{t:.17g},{x:.17g},{v:.17g}\n")


class ExactLocalVol:
    """Exact local-variance evaluator with the surface interface.

    Slower than the gridded surface but free of interpolation error; used
    for validation runs.
    """

    def __init__(self, model):
        _check_common_prefix(model)
        self.model = model
        self.horizon = model.t2
        b = model.break_times()
        self.time_boundaries = np.append(b, model.t2)

    def variance_logx(self, t, L, side="right"):
        L = np.asarray(L, dtype=float)
        model = self.model
        if (t < model.t1 and side == "right") or (t <= model.t1 and side == "left"):
            return np.full(L.shape, model.sigma0**2)
        post, levels = _posteriors(model, t, L, side)
        return np.einsum("n,nm->m", levels**2, post)

    def variance(self, t, x, side="right"):
        x = np.asarray(x, dtype=float)
        out = self.variance_logx(t, np.log(x / self.model.s0), side)
        return float(out) if x.ndim == 0 else out


def default_logx_grid(model: MixtureModel, n_nodes: int = 1153) -> np.ndarray:
    """Log-moneyness grid wide enough for simulation starts and tail probes."""
    sig_max = float(model.cumulative_variances(model.t2).max())
    half_width = 10.0 * math.sqrt(sig_max) + 8.0 * model.v_hi * math.sqrt(model.t2)
    return np.linspace(-half_width, half_width, n_nodes)


def default_time_grid(model: MixtureModel, logx_halfwidth: float | None = None,
                      growth: float = 1.05, n_uniform: int = 32) -> np.ndarray:
    """Time nodes geometrically clustered toward each segment start.

    Just after a level change the path weights at log-moneyness L transit on
    a timescale proportional to 1/L^2 (the squared cumulative variances
    separate linearly in elapsed time); the first node offset matches that
    scale at the far edge of the log grid and offsets grow geometrically,
    with a uniform overlay for the smooth remainder of the segment.
    """
    if logx_halfwidth is None:
        logx_halfwidth = float(np.max(np.abs(default_logx_grid(model))))
    bounds = np.append(model.break_times(), model.t2)
    lv2 = np.array([[p.level_at(t)**2 for p in model.paths]
                    for t in bounds[:-1]])
    spread = max(float((lv2.max(axis=1) - lv2.min(axis=1)).max()), 1e-12)
    nodes = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        span = hi - lo
        if hi <= model.t1:
            nodes.append(np.array([lo + 0.5 * span]))
            continue
        sig_lo = float(model.cumulative_variances(lo).min())
        scale = 2.0 * sig_lo**2 / (spread * logx_halfwidth**2)
        d0 = min(max(0.25 * scale, 1e-7 * span), 0.25 * span)
        offs = [d0]
        while offs[-1] * growth < span:
            offs.append(offs[-1] * growth)
        geo = lo + np.array(offs)
        uni = lo + span * np.arange(1, n_uniform) / n_uniform
        nodes.append(np.unique(np.concatenate([geo, uni])))
    return np.unique(np.concatenate(nodes))


def surface_grid(model: MixtureModel, t_grid=None, logx_grid=None) -> LocalVolSurface:
    """Build a gridded local-variance surface with node-exact values.

    Parameters
    ----------
    model : MixtureModel
        Mixture with a common sigma0 prefix before t1.
    t_grid : array_like, optional
        Interior time nodes in (0, t2); segment boundaries are always added,
        with one-sided values on each side of a break.  Defaults to
        `default_time_grid`.
    logx_grid : array_like, optional
        Increasing log-moneyness nodes; defaults to `default_logx_grid`.
    """
    _check_common_prefix(model)
    if t_grid is None:
        t_grid = default_time_grid(model)
    if logx_grid is None:
        logx_grid = default_logx_grid(model)
    t_grid = np.asarray(t_grid, dtype=float)
    logx_grid = np.asarray(logx_grid, dtype=float)
    if t_grid.size == 0 or logx_grid.size == 0:
        raise ValueError("grids must be non-empty")
    if np.any(np.diff(logx_grid) <= 0) or (t_grid.size > 1 and np.any(np.diff(np.sort(t_grid)) < 0)):
        raise ValueError("grids must be increasing")
    if np.any((t_grid <= 0) | (t_grid >= model.t2)):
        raise ValueError("t_grid must lie inside (0, t2)")

    bounds = np.append(model.break_times(), model.t2)
    blocks = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        inner = t_grid[(t_grid > lo) & (t_grid < hi)]
        t_nodes = np.unique(np.concatenate([[lo], np.sort(inner), [hi]]))
        if hi <= model.t1:
            # common prefix: constant sigma0^2, no density evaluation needed
            values = np.full((t_nodes.size, logx_grid.size), model.sigma0**2)
            limits = np.full(t_nodes.size, model.sigma0**2)
        else:
            values = np.empty((t_nodes.size, logx_grid.size))
            limits = np.empty(t_nodes.size)
            for j, t in enumerate(t_nodes):
                side = "left" if t == hi else "right"
                if t == 0.0:
                    values[j] = model.sigma0**2
                    limits[j] = model.sigma0**2
                    continue
                post, levels = _posteriors(model, t, logx_grid, side)
                values[j] = np.einsum("n,nm->m", levels**2, post)
                probe = min(t, model.t2 * (1 - 1e-15))
                ds = dominant_set(model, probe)
                lv = np.array([model.paths[i].level_at(t, side)
                               for i in ds.indices])
                limits[j] = float(np.dot(
                    model.weights[list(ds.indices)], lv**2) / ds.mass)
        blocks.append(_Block(lo, hi, t_nodes, values, limits))
    return LocalVolSurface(model, blocks, logx_grid)
