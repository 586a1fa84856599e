"""Independent reference implementations used only by the tests.

None of these import the package code they check.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def euler_period(a, x0, W, dt=1e-6):
    """Explicit Euler for dx/dz = -a x - W on [0, 1], level floored at zero.

    Vectorized over cases. Returns (end, served, waste), where served and
    waste are accumulated from the integrand while stock is positive.
    """
    a = np.asarray(a, dtype=np.float64).copy()
    x = np.asarray(x0, dtype=np.float64).copy()
    W = np.asarray(W, dtype=np.float64).copy()
    served = np.zeros_like(x)
    waste = np.zeros_like(x)
    steps = int(round(1.0 / dt))
    for _ in range(steps):
        out_orders = W * dt
        out_decay = a * x * dt
        total = out_orders + out_decay
        # partial last step: scale both flows to what is left
        frac = np.where(total > x, np.divide(x, total, out=np.zeros_like(x), where=total > 0), 1.0)
        served += out_orders * frac
        waste += out_decay * frac
        x = x - total * frac
    return x, served, waste


def smoothed_target_fraction(a, j, delta, q):
    """Smoothed actor target with exact rational arithmetic."""
    a = [Fraction(v) for v in a]
    total = sum(a)
    a = [v / total for v in a]
    delta, q = Fraction(delta), Fraction(q)
    t = [max(v + delta / (q * (abs(j - k) + 1)), Fraction(0)) for k, v in enumerate(a)]
    s = sum(t)
    if s == 0:
        return [Fraction(1, len(t))] * len(t)
    return [v / s for v in t]


def dense_forward(weights, biases, activations, X):
    """Plain loop-free matrix-product forward pass."""
    h = np.asarray(X, dtype=np.float64)
    for W, b, act in zip(weights, biases, activations):
        z = h.dot(W) + b
        if act == "tanh":
            h = np.tanh(z)
        elif act == "relu":
            h = z * (z > 0)
        else:
            h = z
    return h


def percentile_linear(values, pct):
    """Linear interpolation between order statistics at rank pct/100 * (n-1)."""
    s = sorted(values)
    r = pct / 100.0 * (len(s) - 1)
    lo = int(np.floor(r))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (r - lo) * (s[hi] - s[lo])
