"""Independent oracle routines used to freeze expected test values.

Everything here is deliberately written against different primitives than
the library (math.erf instead of scipy.special.ndtr, direct quadrature,
naive density formulas) so the two sides cannot share a bug.
"""

import math

import numpy as np


def oracle_norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def oracle_bs_call(s0: float, strike: float, total_var: float) -> float:
    if strike == 0.0:
        return s0
    if total_var == 0.0:
        return max(s0 - strike, 0.0)
    sd = math.sqrt(total_var)
    d1 = (math.log(s0 / strike) + 0.5 * total_var) / sd
    return s0 * oracle_norm_cdf(d1) - strike * oracle_norm_cdf(d1 - sd)


def oracle_lognormal_pdf(s0: float, total_var: float, x: float) -> float:
    sd = math.sqrt(total_var)
    z = math.log(x / s0) / sd + 0.5 * sd
    return math.exp(-0.5 * z * z) / (x * math.sqrt(2.0 * math.pi * total_var))


def oracle_segment_variance(breaks, levels, t: float) -> float:
    """Hand-summed piecewise integral of squared levels over [0, t]."""
    total = 0.0
    for i, b in enumerate(breaks):
        end = breaks[i + 1] if i + 1 < len(breaks) else math.inf
        overlap = max(min(end, t) - b, 0.0)
        total += levels[i] ** 2 * overlap
    return total


def weighted_sample_se(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / math.sqrt(values.size))
