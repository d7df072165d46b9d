"""Schwarzschild geometry: coordinate maps, chart metrics and the null frame.

Conventions
-----------
Signature (-,+,+,+), geometric units G = c = 1.  ``F = 1 - 2M/r``.

* ``rectangular``: coordinates (t, x) with x = r*omega and t the static time
  (equal to the static time for r > 5M/2, which is where these closed forms
  are used).  In this chart det g = -1.
* ``rectangular_regge_wheeler``: coordinates (t, x*) with x* = r* omega.
  Only defined where r* > 0, i.e. r > 3M.
* ``boyer_lindquist_tilde``: the static polar chart (t~, r, theta, phi).

``M = 0`` is accepted everywhere as the Minkowski surrogate (F = 1, r* = r).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from ._smooth import ramp
from .errors import ConstructionError, ConvergenceError, DomainError

__all__ = [
    "ChartTag",
    "SpacetimePoint",
    "MetricAtPoint",
    "NullFrameAtPoint",
    "FrameComponents",
    "MuProfile",
    "RadialBlend",
    "check_mass",
    "lapse",
    "tortoise_of_r",
    "tortoise_of_delta",
    "r_of_tortoise",
    "delta_of_tortoise",
    "metric_inverse_at",
    "metric_lower_at",
    "regge_wheeler_jacobian",
    "mu_interior",
    "null_frame_at",
    "lower_index",
    "frame_decompose",
    "rtilde_blend",
    "angular_pair",
]


class ChartTag(str, Enum):
    boyer_lindquist_tilde = "boyer_lindquist_tilde"
    rectangular = "rectangular"
    rectangular_regge_wheeler = "rectangular_regge_wheeler"


def check_mass(M, allow_flat=True):
    M = float(M)
    if not np.isfinite(M) or M < 0 or (M == 0 and not allow_flat):
        raise DomainError(f"mass must be positive, got {M}")
    return M


def lapse(M, r):
    """F(r) = 1 - 2M/r."""
    return 1.0 - 2.0 * M / np.asarray(r, dtype=float)


# ---------------------------------------------------------------------------
# tortoise coordinate
# ---------------------------------------------------------------------------

def tortoise_of_delta(M, dr):
    """Tortoise coordinate as a function of dr = r - 2M (> 0).

    Using dr instead of r keeps full relative precision next to the horizon.
    """
    M = check_mass(M)
    dr = np.asarray(dr, dtype=float)
    if np.any(dr <= 0):
        raise DomainError("tortoise coordinate needs r > 2M")
    if M == 0:
        return dr.copy() if dr.ndim else float(dr)
    out = dr + 2.0 * M + 2.0 * M * np.log(dr / M) - 3.0 * M
    return out if out.ndim else float(out)


def tortoise_of_r(M, r):
    """r* = r + 2M log((r - 2M)/M) - 3M, so that r*(3M) = 0."""
    M = check_mass(M)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 2.0 * M):
        raise DomainError("tortoise coordinate needs r > 2M")
    return tortoise_of_delta(M, r - 2.0 * M)


def _newton_log(c, tol=1e-15, maxiter=60):
    """Solve x + log(x) = c for x > 0, returned as y = log(x).

    f(y) = e^y + y - c is convex and increasing, so Newton converges from
    any start (after the first step the iterates decrease monotonically).
    """
    c = np.asarray(c, dtype=float)
    y = np.where(c < 1.0, c, np.log(np.maximum(c, 1.0)))
    done = np.zeros(c.shape, dtype=bool)
    for _ in range(maxiter):
        ey = np.exp(y)
        step = (ey + y - c) / (ey + 1.0)
        y = y - step
        done = np.abs(step) <= tol * np.maximum(1.0, np.abs(y))
        if np.all(done):
            return y
    # bracketing fallback for whatever did not settle
    for idx in zip(*np.nonzero(~done)) if c.ndim else [()]:
        ci = float(c[idx])
        lo, hi = min(ci, 0.0) - 1.0, max(np.log(abs(ci) + 1.0), ci) + 1.0
        try:
            y[idx] = brentq(lambda v: np.exp(v) + v - ci, lo, hi, xtol=1e-15, rtol=4e-16)
        except ValueError as exc:  # pragma: no cover - f is monotone, bracket is valid
            raise ConvergenceError(f"inverse tortoise failed for c={ci}") from exc
    return y


def delta_of_tortoise(M, rstar):
    """Inverse tortoise map returning dr = r - 2M (accurate near the horizon)."""
    M = check_mass(M)
    rstar = np.asarray(rstar, dtype=float)
    if M == 0:
        out = rstar.copy()
    else:
        # with x = dr/(2M):  x + log x = (r* + M)/(2M) - log 2
        c = (rstar + M) / (2.0 * M) - np.log(2.0)
        out = 2.0 * M * np.exp(_newton_log(c))
    return out if out.ndim else float(out)


def r_of_tortoise(M, rstar):
    """Areal radius r > 2M with tortoise_of_r(r) = rstar."""
    M = check_mass(M)
    return 2.0 * M + delta_of_tortoise(M, rstar)


# ---------------------------------------------------------------------------
# points and metrics
# ---------------------------------------------------------------------------

def _unit(omega):
    omega = np.asarray(omega, dtype=float).reshape(3)
    n = np.linalg.norm(omega)
    if not np.isfinite(n) or n == 0:
        raise DomainError("omega must be a nonzero 3-vector")
    return omega / n


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    r: float
    omega: np.ndarray
    rstar: float = float("nan")

    @classmethod
    def make(cls, M, t, r, omega=(0.0, 0.0, 1.0)):
        om = _unit(omega)
        rs = tortoise_of_r(M, r) if r > 2 * M else float("nan")
        return cls(float(t), float(r), om, float(rs))

    @property
    def x(self):
        return self.r * self.omega


@dataclass(frozen=True)
class MetricAtPoint:
    inv: np.ndarray
    det: float
    chart: ChartTag

    def is_lorentzian(self):
        ev = np.linalg.eigvalsh(self.inv)
        return int(np.sum(ev < 0)) == 1 and int(np.sum(ev > 0)) == 3


def _rect_inverse(M, r, omega):
    F = 1.0 - 2.0 * M / r
    P = np.outer(omega, omega)
    g = np.zeros((4, 4))
    g[0, 0] = -1.0 / F
    g[1:, 1:] = F * P + np.eye(3) - P
    return g


def metric_lower_at(M, r, omega):
    """Covariant rectangular metric g_{alpha beta} at (r, omega)."""
    M = check_mass(M)
    om = _unit(omega)
    F = 1.0 - 2.0 * M / r
    P = np.outer(om, om)
    g = np.zeros((4, 4))
    g[0, 0] = -F
    g[1:, 1:] = P / F + np.eye(3) - P
    return g


def regge_wheeler_jacobian(M, r, omega):
    """Spatial Jacobian d x*/d x of x* = r*(r) omega."""
    om = _unit(omega)
    rs = tortoise_of_r(M, r)
    F = 1.0 - 2.0 * M / r
    P = np.outer(om, om)
    return (rs / r) * (np.eye(3) - P) + P / F


def metric_inverse_at(M, p, chart=ChartTag.rectangular):
    """Inverse metric g^{alpha beta} at p in the requested chart."""
    M = check_mass(M)
    chart = ChartTag(chart)
    r, om = float(p.r), _unit(p.omega)
    if r <= 2.0 * M:
        raise DomainError("exterior charts need r > 2M")
    F = 1.0 - 2.0 * M / r
    if chart is ChartTag.rectangular:
        if M > 0 and r <= 2.5 * M:
            raise DomainError("rectangular closed forms are used for r > 5M/2")
        inv = _rect_inverse(M, r, om)
    elif chart is ChartTag.rectangular_regge_wheeler:
        rs = tortoise_of_r(M, r)
        if rs <= 0:
            raise DomainError("the Regge-Wheeler rectangular chart needs r* > 0 (r > 3M)")
        P = np.outer(om, om)
        inv = np.zeros((4, 4))
        inv[0, 0] = -1.0 / F
        inv[1:, 1:] = P / F + (rs / r) ** 2 * (np.eye(3) - P)
    else:
        sin2 = max(1.0 - om[2] ** 2, 0.0)
        if sin2 == 0.0:
            raise DomainError("polar chart is singular on the axis")
        inv = np.diag([-1.0 / F, F, 1.0 / r ** 2, 1.0 / (r ** 2 * sin2)])
    det = 1.0 / np.linalg.det(inv)
    return MetricAtPoint(inv=inv, det=float(det), chart=chart)


# ---------------------------------------------------------------------------
# the interior time function mu(r)
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class MuProfile:
    """mu(r) with mu' = (1 - s)/F + s c, s a smooth cutoff equal to 1 below r_a.

    Then mu = r* for r >= 5M/2 and mu is affine with slope c below r_a, so
    the slices t = t~ + r* - mu(r) are spacelike across the horizon provided
    0 < c F < 2, and mu >= r* whenever c <= 1/F on (2M, 5M/2], i.e. c <= 5.
    """

    M: float
    r_e: float
    c: float
    r_a: float

    @property
    def r_b(self):
        return 2.5 * self.M

    def _sigma(self, r, nderiv=0):
        vals = ramp(r, self.r_a, self.r_b, nderiv)
        return [1.0 - vals[0]] + [-v for v in vals[1:]]

    def _excess(self, r):
        """integral over [r, 5M/2] of s (1/F - c), defined for r >= r_a."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        half = 0.5 * (self.r_b - r)
        s = r[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
        sig = self._sigma(s)[0]
        F = 1.0 - 2.0 * self.M / s
        return (half[:, None] * _GL_W[None, :] * sig * (1.0 / F - self.c)).sum(axis=1)

    def mu(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        far = r >= self.r_b
        mid = (r >= self.r_a) & ~far
        low = r < self.r_a
        if far.any():
            out[far] = tortoise_of_r(self.M, r[far])
        if mid.any():
            out[mid] = tortoise_of_r(self.M, r[mid]) + self._excess(r[mid])
        if low.any():
            mu_a = tortoise_of_r(self.M, self.r_a) + self._excess(self.r_a)[0]
            out[low] = mu_a - self.c * (self.r_a - r[low])
        return float(out[0]) if scalar else out

    def derivs(self, r):
        """Return (mu', mu'') at r."""
        r = np.asarray(r, dtype=float)
        F = 1.0 - 2.0 * self.M / r
        Fp = 2.0 * self.M / r ** 2
        sig, sig1 = self._sigma(r, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            invF = np.where(sig < 1.0, 1.0 / F, 0.0)
            invF2 = np.where(sig < 1.0, Fp / F ** 2, 0.0)
        d1 = (1.0 - sig) * invF + sig * self.c
        d2 = -sig1 * invF - (1.0 - sig) * invF2 + sig1 * self.c
        return d1, d2

    def check(self, n=10_000):
        r = np.linspace(self.r_e, self.r_b, n)
        d1, _ = self.derivs(r)
        F = 1.0 - 2.0 * self.M / r
        if not (d1.min() > 0 and (2.0 - F * d1).min() > 0):
            raise ConstructionError("mu profile violates the spacelike-slice conditions")
        ext = r[r > 2.0 * self.M]
        if ext.size and np.any(self.mu(ext) < tortoise_of_r(self.M, ext) - 1e-12):
            raise ConstructionError("mu profile falls below r*")
        return float(d1.min()), float((2.0 - F * d1).min())


def mu_interior(M, r_e=None, c=4.0, r_a=None):
    """Build and validate the interior time profile mu(r)."""
    M = check_mass(M, allow_flat=False)
    r_e = 1.9 * M if r_e is None else float(r_e)
    r_a = 2.2 * M if r_a is None else float(r_a)
    if not r_e < 2 * M:
        raise DomainError("r_e must lie inside the horizon")
    if not 2 * M < r_a < 2.5 * M:
        raise DomainError("r_a must lie in (2M, 5M/2)")
    if not 0 < c <= 5.0:
        raise ConstructionError("slope c must lie in (0, 5] so that mu >= r*")
    prof = MuProfile(M=M, r_e=r_e, c=float(c), r_a=r_a)
    prof.check()
    return prof


# ---------------------------------------------------------------------------
# null frame
# ---------------------------------------------------------------------------

def angular_pair(omega):
    """Deterministic orthonormal pair (A, B) tangent to the sphere at omega.

    A is Gram-Schmidt of the coordinate axis where |omega_k| is smallest,
    B = omega x A.
    """
    om = _unit(omega)
    k = int(np.argmin(np.abs(om)))
    e = np.zeros(3)
    e[k] = 1.0
    A = e - np.dot(om, e) * om
    A /= np.linalg.norm(A)
    B = np.cross(om, A)
    return A, B


@dataclass(frozen=True)
class NullFrameAtPoint:
    L: np.ndarray
    Lbar: np.ndarray
    A: np.ndarray
    B: np.ndarray
    L_low: np.ndarray
    Lbar_low: np.ndarray

    def vectors(self):
        """Frame in the order (Lbar, L, A, B)."""
        return [self.Lbar, self.L, self.A, self.B]


def null_frame_at(M, p):
    """L = dt + d_{r*}, Lbar = dt - d_{r*}, with d_{r*} = F omega^i d_i."""
    M = check_mass(M)
    r = float(p.r)
    if r <= 2.0 * M:
        raise DomainError("null frame needs r > 2M")
    om = _unit(p.omega)
    F = 1.0 - 2.0 * M / r
    A3, B3 = angular_pair(om)
    L = np.concatenate([[1.0], F * om])
    Lb = np.concatenate([[1.0], -F * om])
    A = np.concatenate([[0.0], A3])
    B = np.concatenate([[0.0], B3])
    L_low = np.concatenate([[-F], om])
    Lb_low = np.concatenate([[-F], -om])
    return NullFrameAtPoint(L, Lb, A, B, L_low, Lb_low)


def lower_index(M, p, U):
    """U_alpha = g_{alpha beta} U^beta in the rectangular chart."""
    return metric_lower_at(M, p.r, p.omega) @ np.asarray(U, dtype=float)


_TANG = ("L", "A", "B")


@dataclass(frozen=True)
class FrameComponents:
    """Components of a symmetric 2-tensor in the frame {Lbar, L, A, B}.

    hLL is h^{Lbar Lbar}; hLT[T] is h^{Lbar T}; hUT[(U, T)] is h^{UT}.
    """

    hLL: float
    hLT: dict
    hUT: dict
    frame: NullFrameAtPoint = field(repr=False)

    def reconstruct(self):
        fr = self.frame
        vec = {"L": fr.L, "A": fr.A, "B": fr.B}
        h = self.hLL * np.outer(fr.Lbar, fr.Lbar)
        for T in _TANG:
            h += self.hLT[T] * (np.outer(fr.Lbar, vec[T]) + np.outer(vec[T], fr.Lbar))
            for U in _TANG:
                h += self.hUT[(U, T)] * np.outer(vec[U], vec[T])
        return h


def frame_decompose(M, p, h):
    """Expand h^{alpha beta} in the null frame using the dual co-frame."""
    h = np.asarray(h, dtype=float)
    if h.shape != (4, 4):
        raise DomainError("h must be 4x4")
    fr = null_frame_at(M, p)
    F = 1.0 - 2.0 * M / p.r
    gLLb = -2.0 * F
    # dual basis: theta^Lbar(Lbar) = 1, theta^Lbar(L) = 0, etc.
    dual = {
        "Lbar": fr.L_low / gLLb,
        "L": fr.Lbar_low / gLLb,
        "A": np.concatenate([[0.0], fr.A[1:]]),
        "B": np.concatenate([[0.0], fr.B[1:]]),
    }
    comp = lambda a, b: float(dual[a] @ h @ dual[b])
    hLL = comp("Lbar", "Lbar")
    hLT = {T: comp("Lbar", T) for T in _TANG}
    hUT = {(U, T): comp(U, T) for U in _TANG for T in _TANG}
    return FrameComponents(hLL=hLL, hLT=hLT, hUT=hUT, frame=fr)


# ---------------------------------------------------------------------------
# blended radial coordinate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialBlend:
    """r~(r) = (1 - s) r + s r*, s a smooth ramp on [R1, 2 R1]."""

    M: float
    R1: float

    def _rstar_where_blended(self, r):
        out = np.zeros_like(r)
        live = r >= self.R1
        out[live] = tortoise_of_r(self.M, r[live])
        return out

    def value(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s = ramp(r, self.R1, 2 * self.R1)[0]
        return (1.0 - s) * r + s * self._rstar_where_blended(r)

    def deriv(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s, s1 = ramp(r, self.R1, 2 * self.R1, 1)
        F = 1.0 - 2.0 * self.M / r
        rstar = self._rstar_where_blended(r)
        return (1.0 - s) + s / F + s1 * (rstar - r)

    def check(self, n=20_000):
        r = np.linspace(max(2.0 * self.M * 1.001, 1e-3), 4 * self.R1, n)
        d = self.deriv(r)
        if d.min() <= 0:
            raise ConstructionError("blend r~ is not strictly increasing")
        return float(d.min())


def rtilde_blend(M, R1):
    M = check_mass(M)
    if R1 < 6 * M:
        raise DomainError("R1 must be at least 6M")
    blend = RadialBlend(M=M, R1=float(R1))
    blend.check()
    return blend
