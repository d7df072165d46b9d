"""Smooth (C-infinity) transition functions with analytic derivatives.

The step is the usual ``exp(-1/x)`` gluing, written as a logistic in
``z = 1/(1-x) - 1/x`` so that it evaluates without overflow and its
derivatives follow from Faa di Bruno's formula.
"""

import numpy as np
from scipy.special import expit


def smooth_step(x, nderiv=0):
    """Return the step s(x) (0 for x <= 0, 1 for x >= 1) and derivatives.

    Returns a list ``[s, s', ..., s^(nderiv)]`` of arrays (nderiv <= 3).
    """
    if nderiv > 3:
        raise ValueError("at most three derivatives are available")
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        z = 1.0 / (1.0 - xi) - 1.0 / xi
        L = expit(z)
        s = np.where(x >= 1.0, 1.0, np.where(inside, L, 0.0))
        out = [s]
        if nderiv == 0:
            return out
        l1 = L * expit(-z)                      # L(1 - L)
        l2 = l1 * (1.0 - 2.0 * L)
        l3 = l1 * (1.0 - 6.0 * L + 6.0 * L * L)
        z1 = 1.0 / (1.0 - xi) ** 2 + 1.0 / xi ** 2
        z2 = 2.0 / (1.0 - xi) ** 3 - 2.0 / xi ** 3
        z3 = 6.0 / (1.0 - xi) ** 4 + 6.0 / xi ** 4
        derivs = [
            l1 * z1,
            l2 * z1 ** 2 + l1 * z2,
            l3 * z1 ** 3 + 3.0 * l2 * z1 * z2 + l1 * z3,
        ]
    live = inside & (l1 > 0.0)
    for d in derivs[:nderiv]:
        out.append(np.where(live & np.isfinite(d), d, 0.0))
    return out


def ramp(r, r0, r1, nderiv=0):
    """Smooth transition in r: 0 for r <= r0, 1 for r >= r1 (r1 > r0)."""
    width = r1 - r0
    vals = smooth_step((np.asarray(r, dtype=float) - r0) / width, nderiv)
    return [v / width ** k for k, v in enumerate(vals)]


def cutoff(r, r0, r1, nderiv=0):
    """Smooth cutoff: 1 for r <= r0, 0 for r >= r1."""
    vals = ramp(r, r0, r1, nderiv)
    return [1.0 - vals[0]] + [-v for v in vals[1:]]
