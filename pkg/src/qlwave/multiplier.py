"""Multiplier calculus: energy-momentum tensor, deformation bulk terms,
the concrete multiplier (X, q, m) used for local energy decay on
Schwarzschild, its positivity audit and divergence-identity checks.

Radial quantities are written in the interior chart (t~, r) in which the
inverse metric is

    g^{tt} = -G,  g^{tr} = B,  g^{rr} = F,  angular part r^{-2},

with G = 2 mu' - F mu'^2 and B = 1 - F mu'.  For r >= 5M/2 this is the
static chart (mu = r*, G = 1/F, B = 0).
"""

from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from ._smooth import cutoff, ramp
from .errors import ConstructionError, DomainError, SignatureError, StencilError
from .geometry import MetricAtPoint, MuProfile, check_mass, mu_interior, tortoise_of_r
from .perturbation import schwarzschild_inverse, schwarzschild_inverse_derivs

__all__ = [
    "stress_energy",
    "SchwarzschildField",
    "PerturbedField",
    "RadialField",
    "KillingField",
    "TimeRadialField",
    "TangentialField",
    "SumField",
    "deformation_bulk",
    "radial_closed_form",
    "tangential_closed_form",
    "farfield_f",
    "MultiplierSpec",
    "default_spec",
    "bulk_matrix",
    "posS_weight",
    "QuadraticFormSample",
    "AuditReport",
    "positivity_audit",
    "full_bulk",
    "BoundaryTermReport",
    "boundary_terms",
    "divergence_identity_check",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


# ---------------------------------------------------------------------------
# energy-momentum tensor
# ---------------------------------------------------------------------------

def stress_energy(g, du):
    """Q_ab = du_a du_b - 1/2 g_ab (g^{cd} du_c du_d)."""
    ginv = g.inv if isinstance(g, MetricAtPoint) else np.asarray(g, dtype=float)
    ev = np.linalg.eigvalsh(ginv)
    if not (np.sum(ev < 0) == 1 and np.sum(ev > 0) == 3):
        raise SignatureError("metric is not Lorentzian")
    du = np.asarray(du, dtype=float)
    glow = np.linalg.inv(ginv)
    return np.outer(du, du) - 0.5 * glow * float(du @ ginv @ du)


# ---------------------------------------------------------------------------
# metric fields with derivatives (rectangular chart)
# ---------------------------------------------------------------------------

class SchwarzschildField:
    """g_S in rectangular coordinates with analytic first derivatives."""

    def __init__(self, M=1.0):
        self.M = check_mass(M)

    def at(self, t, x):
        ginv = schwarzschild_inverse(self.M, x)
        return ginv, schwarzschild_inverse_derivs(self.M, x), np.zeros(4)


class PerturbedField:
    """g = g_S + h with user-supplied h(t, x) and dh(t, x) = d_mu h^{ab}."""

    def __init__(self, M, h, dh):
        self.M = check_mass(M)
        self.h, self.dh = h, dh

    def at(self, t, x):
        ginv = schwarzschild_inverse(self.M, x) + np.asarray(self.h(t, x))
        dg = schwarzschild_inverse_derivs(self.M, x) + np.asarray(self.dh(t, x))
        glow = np.linalg.inv(ginv)
        dlog = -0.5 * np.einsum("mn,amn->a", glow, dg)
        return ginv, dg, dlog


# ---------------------------------------------------------------------------
# vector fields (rectangular components and Jacobians)
# ---------------------------------------------------------------------------

class VectorField:
    """Base class: ``value(t, x)`` gives X^b and ``jac(t, x)`` gives d_c X^b as [c, b]."""

    def value(self, t, x):
        raise NotImplementedError

    def jac(self, t, x):
        raise NotImplementedError

    def __add__(self, other):
        return SumField([self, other])


class RadialField(VectorField):
    """X = b(r) omega^i d_i."""

    def __init__(self, b, db):
        self.b, self.db = b, db

    def value(self, t, x):
        r = np.linalg.norm(x)
        return np.concatenate([[0.0], self.b(r) * np.asarray(x) / r])

    def jac(self, t, x):
        r = np.linalg.norm(x)
        om = np.asarray(x) / r
        b, db = self.b(r), self.db(r)
        J = np.zeros((4, 4))
        J[1:, 1:] = db * np.outer(om, om) + (b / r) * (np.eye(3) - np.outer(om, om))
        return J


class KillingField(VectorField):
    """X = C d_t."""

    def __init__(self, C=1.0):
        self.C = C

    def value(self, t, x):
        return np.array([self.C, 0.0, 0.0, 0.0])

    def jac(self, t, x):
        return np.zeros((4, 4))


class TimeRadialField(VectorField):
    """X = c(r) d_t."""

    def __init__(self, c, dc):
        self.c, self.dc = c, dc

    def value(self, t, x):
        return np.array([self.c(np.linalg.norm(x)), 0.0, 0.0, 0.0])

    def jac(self, t, x):
        r = np.linalg.norm(x)
        J = np.zeros((4, 4))
        J[1:, 0] = self.dc(r) * np.asarray(x) / r
        return J


class TangentialField(VectorField):
    """Y = f(rho) d_t with rho = t - r*."""

    def __init__(self, M, f, df):
        self.M, self.f, self.df = M, f, df

    def _rho(self, t, x):
        r = np.linalg.norm(x)
        return t - tortoise_of_r(self.M, r), r

    def value(self, t, x):
        rho, _ = self._rho(t, x)
        return np.array([self.f(rho), 0.0, 0.0, 0.0])

    def jac(self, t, x):
        rho, r = self._rho(t, x)
        F = 1.0 - 2.0 * self.M / r
        d = self.df(rho)
        J = np.zeros((4, 4))
        J[0, 0] = d
        J[1:, 0] = -d * np.asarray(x) / (r * F)
        return J


class SumField(VectorField):
    def __init__(self, parts):
        self.parts = list(parts)

    def value(self, t, x):
        return sum(p.value(t, x) for p in self.parts)

    def jac(self, t, x):
        return sum(p.jac(t, x) for p in self.parts)


def deformation_bulk(metric, X, t, x, du):
    """Q[g, X] = pi^{ab} du_a du_b - (div X) g^{ab} du_a du_b, generic form.

    ``metric`` provides ``at(t, x) -> (g^{ab}, d_c g^{ab}, d_c log sqrt|g|)``.
    """
    if not isinstance(X, VectorField):
        raise DomainError(f"unsupported vector field {type(X).__name__}")
    ginv, dg, dlog = metric.at(t, x)
    du = np.asarray(du, dtype=float)
    Xv, J = X.value(t, x), X.jac(t, x)
    lag = float(du @ ginv @ du)
    t1 = -float(np.einsum("c,cab,a,b->", Xv, dg, du, du)) - float(Xv @ dlog) * lag
    t2 = 2.0 * float(du @ ginv @ J @ du)
    t3 = -float(np.trace(J)) * lag
    return t1 + t2 + t3


def _split_du(x, du):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    om = x / r
    du = np.asarray(du, dtype=float)
    ur = float(om @ du[1:])
    ang = float(du[1:] @ du[1:]) - ur * ur
    return r, ur, ang


def radial_closed_form(M, a, da, x, du):
    """Q[g_S, a F d_r] = 2(a/r)(1-3M/r)|angular|^2 + 2 a' F^2 u_r^2 - F r^{-2}(r^2 a)' (du.du)."""
    r, ur, ang = _split_du(x, du)
    F = 1.0 - 2.0 * M / r
    lag = -du[0] ** 2 / F + F * ur * ur + ang
    return 2 * a / r * (1 - 3 * M / r) * ang + 2 * da * F * F * ur * ur - F * (da + 2 * a / r) * lag


def tangential_closed_form(M, fprime_rho, x, du):
    """Q[g_S, f(rho) d_t] = -f'(rho) (F^{-1}((d_t + d_r*)u)^2 + |angular|^2)."""
    r, ur, ang = _split_du(x, du)
    F = 1.0 - 2.0 * M / r
    return -fprime_rho * ((du[0] + F * ur) ** 2 / F + ang)


# ---------------------------------------------------------------------------
# far-field weight
# ---------------------------------------------------------------------------

def farfield_f(delta, r, J=200, tol=None, nderiv=1):
    """Partial sums of f(r) = sum_j 2^{-delta j} r/(r + 2^j) and derivatives.

    Returns a dict with ``f``, ``fprime`` (and ``fsecond`` when nderiv >= 2)
    plus ``tail_bound`` = 2^{-delta J}/(1 - 2^{-delta}), which bounds the
    truncation error of f.  Raises ConvergenceError-like DomainError when
    the tail bound exceeds ``tol``.
    """
    if not 0 < delta <= 0.5:
        raise DomainError("delta must lie in (0, 1/2]")
    if J < 40:
        raise DomainError("truncation J must be at least 40")
    tail = 2.0 ** (-delta * J) / (1.0 - 2.0 ** (-delta))
    if tol is not None and tail > tol:
        raise DomainError(f"tail bound {tail:.3e} exceeds tolerance {tol:.3e}")
    r = np.asarray(r, dtype=float)
    j = np.arange(J)
    w = 2.0 ** (-delta * j)
    s = 2.0 ** j
    rr = r[..., None]
    out = {
        "f": (w * rr / (rr + s)).sum(-1),
        "fprime": (w * s / (rr + s) ** 2).sum(-1),
        "tail_bound": tail,
    }
    if nderiv >= 2:
        out["fsecond"] = (-2.0 * w * s / (rr + s) ** 3).sum(-1)
    return out


# ---------------------------------------------------------------------------
# the multiplier specification
# ---------------------------------------------------------------------------

def _inv_powers(terms, r, n):
    """Derivatives 0..n of sum c r^{-p} for (c, p) in terms."""
    r = np.asarray(r, dtype=float)
    out = []
    for k in range(n + 1):
        acc = np.zeros_like(r)
        for c, p in terms:
            fac = 1.0
            for i in range(k):
                fac *= -(p + i)
            acc = acc + c * fac * r ** (-p - k)
        out.append(acc)
    return out


@dataclass(frozen=True)
class MultiplierSpec:
    """Parameters of the multiplier X = X1 + X2 + C K + delta2 X4, q, m.

    * X1 = a(r) F d_r (static chart), a = (1 - a_root M/r)(1 + sum b_k (M/r)^k).
    * X2 = -x2_amp chi(r) d_r in the interior chart, chi = 1 below x2_r0, 0 above 5M/2.
    * X4 = chi_{R1} f(r) d_r with the far-field weight f.
    * q = q~ + delta2 chi_{R1} f/r, where q~ is the standard choice
      (1/2) F r^{-2}(r^2 a)' - delta1 (r - 3M)^2/r^4 for r >= q_blend[1]
      and is continued inward so that r^2 <m, dr> - (1/2) r^2 F q' is
      increasing (slope q_kappa near the horizon).
    * m = m_amp chi(r) dt~ near the horizon.

    Lengths are in units of M; q_kappa and m_amp scale as 1/M.
    """

    M: float = 1.0
    a_coeffs: tuple = (-0.588, 40.0, -100.0, 156.5)
    a_root: float = 3.0
    C_K: float = 4.0
    delta1: float = 2.0 ** -6
    delta2: float = 2.0 ** -9
    delta: float = 0.1
    R1: float = 20.0
    farfield_J: int = 200
    r_e: float = 1.9
    mu_slope: float = 4.0
    mu_ra: float = 2.1
    x2_amp: float = 0.05
    x2_r0: float = 2.1
    q_kappa: float = 0.02
    q_blend: tuple = (2.5, 2.8)
    m_amp: float = 1e-4
    m_r0: float = 1.9

    def __post_init__(self):
        check_mass(self.M, allow_flat=False)
        if self.C_K < 0 or self.delta2 < 0:
            raise DomainError("C_K and delta2 must be nonnegative")
        if not 0 < self.delta <= 0.5:
            raise DomainError("delta must lie in (0, 1/2]")
        if not (self.r_e < 2.0 < self.x2_r0 < 2.5 and self.m_r0 < 2.5):
            raise DomainError("near-horizon cutoffs must sit in (r_e, 5M/2)")
        if not 2.0 < self.q_blend[0] < self.q_blend[1]:
            raise DomainError("q blend window must lie outside the horizon")
        if self.R1 < 6.0:
            raise DomainError("R1 must be at least 6M")

    # -- helpers --------------------------------------------------------
    def with_(self, **kw):
        d = asdict(self)
        d.update(kw)
        return MultiplierSpec(**d)

    @property
    def mu(self) -> MuProfile:
        return mu_interior(self.M, self.r_e * self.M, self.mu_slope, self.mu_ra * self.M)

    def a(self, r, n=1):
        """a and its first n derivatives."""
        M = self.M
        terms = [(1.0, 0)]
        for k, b in enumerate(self.a_coeffs, start=1):
            terms.append((b * M ** k, k))
        # multiply by (1 - a_root M / r)
        full = list(terms) + [(-self.a_root * M * c, p + 1) for c, p in terms]
        return _inv_powers(full, r, n)

    def _farfield(self, r, n):
        """delta2 chi_{R1} f and delta2 chi_{R1} f / r with derivatives (up to n)."""
        M, R1 = self.M, self.R1 * self.M
        r = np.asarray(r, dtype=float)
        chi = ramp(r, R1, 2 * R1, 2)
        ff = farfield_f(self.delta, r / M, self.farfield_J, nderiv=2)
        f = [ff["f"], ff["fprime"] / M, ff["fsecond"] / M ** 2]
        X4 = [
            chi[0] * f[0],
            chi[1] * f[0] + chi[0] * f[1],
        ]
        g = [f[0] / r, f[1] / r - f[0] / r ** 2, f[2] / r - 2 * f[1] / r ** 2 + 2 * f[0] / r ** 3]
        q2 = [
            chi[0] * g[0],
            chi[1] * g[0] + chi[0] * g[1],
            chi[2] * g[0] + 2 * chi[1] * g[1] + chi[0] * g[2],
        ]
        d2 = self.delta2
        return [d2 * v for v in X4], [d2 * v for v in q2[: n + 1]]

    def q_far(self, r, n=2):
        """(1/2) F r^{-2}(r^2 a)' - delta1 (r-3M)^2/r^4 and derivatives 0..n."""
        M = self.M
        r = np.asarray(r, dtype=float)
        a0, a1, a2, a3 = self.a(r, 3)
        F, F1, F2 = 1 - 2 * M / r, 2 * M / r ** 2, -4 * M / r ** 3
        P = a1 + 2 * a0 / r
        P1 = a2 + 2 * a1 / r - 2 * a0 / r ** 2
        P2 = a3 + 2 * a2 / r - 4 * a1 / r ** 2 + 4 * a0 / r ** 3
        d = _inv_powers([(1.0, 2), (-6.0 * M, 3), (9.0 * M * M, 4)], r, 2)
        q = [0.5 * F * P, 0.5 * (F1 * P + F * P1), 0.5 * (F2 * P + 2 * F1 * P1 + F * P2)]
        return [q[k] - self.delta1 * d[k] for k in range(n + 1)]

    def _qprime_inner(self, r):
        s0, s1 = (v * self.M for v in self.q_blend)
        s = ramp(r, s0, s1)[0]
        return s * self.q_far(r, 1)[1] - (1 - s) * 2 * self.q_kappa / (self.M * r)

    def _q_tilde(self, r, n=2):
        M = self.M
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s0, s1 = (v * M for v in self.q_blend)
        kap = self.q_kappa / M
        qf = self.q_far(r, 2)
        s, s_1 = ramp(r, s0, s1, 1)
        q1 = s * qf[1] - (1 - s) * 2 * kap / r
        q2 = s_1 * qf[1] + s * qf[2] + s_1 * 2 * kap / r + (1 - s) * 2 * kap / r ** 2
        q0 = qf[0].copy()
        q_s1 = self.q_far(np.array([s1]), 0)[0][0]

        def integral(lo, hi):
            half = 0.5 * (hi - lo)
            nodes = lo[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
            vals = self._qprime_inner(nodes.ravel()).reshape(nodes.shape)
            return (half[:, None] * _GL_W[None, :] * vals).sum(1)

        mid = (r >= s0) & (r < s1)
        if mid.any():
            q0[mid] = q_s1 - integral(r[mid], np.full(mid.sum(), s1))
        low = r < s0
        if low.any():
            q_s0 = q_s1 - integral(np.array([s0]), np.array([s1]))[0]
            q0[low] = q_s0 - 2 * kap * np.log(r[low] / s0)
        return [q0, q1, q2][: n + 1]

    def q(self, r, n=2):
        """The full scalar q = q~ + delta2 q2 with derivatives 0..n."""
        qt = self._q_tilde(r, n)
        _, q2 = self._farfield(np.atleast_1d(r), n)
        return [qt[k] + q2[k] for k in range(n + 1)]

    def fields(self, r):
        """All radial data in the interior chart at radii r (array)."""
        M = self.M
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < self.r_e * M - 1e-12):
            raise DomainError("radius below r_e")
        F, F1 = 1 - 2 * M / r, 2 * M / r ** 2
        mu1, mu2 = self.mu.derivs(r)
        G, G1 = 2 * mu1 - F * mu1 ** 2, 2 * mu2 - F1 * mu1 ** 2 - 2 * F * mu1 * mu2
        B, B1 = 1 - F * mu1, -F1 * mu1 - F * mu2
        a0, a1 = self.a(r, 1)
        c2, c2p = cutoff(r, self.x2_r0 * M, 2.5 * M, 1)
        X4, _ = self._farfield(r, 1)
        Xr = a0 * F - self.x2_amp * c2 + X4[0]
        Xr1 = a1 * F + a0 * F1 - self.x2_amp * c2p + X4[1]
        Xt = a0 * B + self.C_K
        Xt1 = a1 * B + a0 * B1
        q0, q1, q2 = self.q(r, 2)
        cm, cmp = cutoff(r, self.m_r0 * M, 2.5 * M, 1)
        mt, mt1 = self.m_amp / M * cm, self.m_amp / M * cmp
        mr = np.zeros_like(r)
        divm = (2 * r * B * mt + r * r * (B1 * mt + B * mt1)) / r ** 2
        boxq = (2 * r * F * q1 + r * r * (F1 * q1 + F * q2)) / r ** 2
        return dict(r=r, F=F, F1=F1, G=G, G1=G1, B=B, B1=B1, Xt=Xt, Xt1=Xt1, Xr=Xr, Xr1=Xr1,
                    q=q0, q1=q1, q2=q2, mt=mt, mr=mr, divm=divm, boxq=boxq, a=a0, a1=a1)

    def validate(self, r_max=1000.0, n=20_000):
        """Check the structural conditions on a, q and m; returns measured constants."""
        M = self.M
        a3 = self.a(np.array([3.0 * M]), 0)[0][0]
        if abs(a3) > 1e-12:
            raise ConstructionError(f"a(3M) = {a3:.3e} is not zero")
        r = np.geomspace(self.r_e * M, r_max * M, n)
        a1 = self.a(r, 1)[1] * r ** 2
        if a1.min() <= 0:
            raise ConstructionError("a' must be positive")
        far = r[r >= 2.5 * M]
        qs = self.q(far, 2)
        cq = [float(np.max(np.abs(qs[k]) * far ** (1 + k))) for k in range(3)]
        rm = np.linspace(self.r_e * M, 3 * M, 2000)
        f = self.fields(rm)
        if np.any(f["mt"][rm >= 2.5 * M] != 0) or np.any(f["mr"] != 0):
            raise ConstructionError("m is not supported in [r_e, 5M/2]")
        return {"a_prime_r2": (float(a1.min()), float(a1.max())), "q_constants": cq}


def default_spec(M=1.0, **overrides):
    """The tuned multiplier used by the audit and the CLI."""
    return MultiplierSpec(M=M, **overrides)


# ---------------------------------------------------------------------------
# quadratic form assembly and audit
# ---------------------------------------------------------------------------

def bulk_matrix(spec, r):
    """Q[g_S, X, q, m] as symmetric 4x4 matrices in (u_t, u_r, |angular|, u).

    The angular slot is |r^{-1} grad_sphere u|; the time derivative is taken in
    the interior chart, which coincides with the static one for r >= 5M/2.
    """
    f = spec.fields(r)
    r = f["r"]
    F, G, B = f["F"], f["G"], f["B"]
    Xr, Xt = f["Xr"], f["Xt"]
    div = (2 * r * Xr + r * r * f["Xr1"]) / r ** 2
    lam = -0.5 * div + f["q"]
    ptt = Xr * f["G1"] + 2 * B * f["Xt1"]
    ptr = -Xr * f["B1"] + B * f["Xr1"] + F * f["Xt1"]
    prr = -Xr * f["F1"] + 2 * F * f["Xr1"]
    Q = np.zeros((len(r), 4, 4))
    Q[:, 0, 0] = 0.5 * ptt - lam * G
    Q[:, 0, 1] = Q[:, 1, 0] = 0.5 * ptr + lam * B
    Q[:, 1, 1] = 0.5 * prr + lam * F
    Q[:, 2, 2] = Xr / r + lam
    Q[:, 0, 3] = Q[:, 3, 0] = 0.5 * (-G * f["mt"] + B * f["mr"])
    Q[:, 1, 3] = Q[:, 3, 1] = 0.5 * (B * f["mt"] + F * f["mr"])
    Q[:, 3, 3] = f["divm"] - 0.5 * f["boxq"]
    return Q


def posS_weight(M, r):
    """Diagonal target weight ((1-3M/r)^2 r^-2, r^-2, (1-3M/r)^2 r^-1, r^-4)."""
    r = np.asarray(r, dtype=float)
    d = (1 - 3 * M / r) ** 2
    return np.stack([d / r ** 2, 1 / r ** 2, d / r, 1 / r ** 4], axis=-1)


@dataclass
class QuadraticFormSample:
    r: float
    matrix: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.matrix, self.matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.matrix).max())):
            raise DomainError("quadratic form must be symmetric")
        if np.any(self.weight < 0):
            raise DomainError("weights must be nonnegative")

    def relative_eigenvalue(self, degenerate_tol=1e-14):
        """Largest lambda with matrix >= lambda * diag(weight).

        Slots whose weight vanishes (the photon-sphere factor at r = 3M) are
        eliminated through the Schur complement; a negative infinite value is
        returned when the degenerate block is not positive semidefinite.
        """
        Q, w = self.matrix, self.weight
        scale = w.max()
        deg = w <= degenerate_tol * scale
        nd = ~deg
        if deg.any():
            Qdd = Q[np.ix_(deg, deg)]
            tol = 1e-10 * max(1.0, np.abs(Q).max())
            if np.linalg.eigvalsh(Qdd).min() < -tol:
                return -np.inf
            Qnd = Q[np.ix_(nd, deg)]
            pinv = np.linalg.pinv(Qdd, rcond=1e-10, hermitian=True)
            S = Q[np.ix_(nd, nd)] - Qnd @ pinv @ Qnd.T
        else:
            S = Q
        s = 1.0 / np.sqrt(w[nd])
        return float(np.linalg.eigvalsh(S * s[:, None] * s[None, :]).min())


@dataclass
class AuditReport:
    min_relative_eigenvalue: float
    worst_r: float
    rows: list = field(default_factory=list)

    @property
    def positive(self):
        return self.min_relative_eigenvalue > 0


def positivity_audit(spec, r_grid, M=None):
    """Audit Q[g_S, X, q, m] >= lambda * weight on the grid.

    Each row reports r, the relative eigenvalue at r (largest lambda with
    Q >= lambda W) and the largest weight entry.
    """
    M = spec.M if M is None else M
    if abs(M - spec.M) > 0:
        spec = spec.with_(M=M)
    r = np.asarray(r_grid, dtype=float)
    if r.min() < spec.r_e * M - 1e-12:
        raise DomainError("audit grid must lie in [r_e, r_max]")
    Q = bulk_matrix(spec, r)
    W = posS_weight(M, r)
    degenerate = W.min(axis=1) <= 1e-14 * W.max(axis=1)
    s = 1.0 / np.sqrt(np.where(degenerate[:, None], 1.0, W))
    lam = np.linalg.eigvalsh(Q * s[:, :, None] * s[:, None, :])[:, 0]
    for i in np.flatnonzero(degenerate):
        lam[i] = QuadraticFormSample(r[i], Q[i], W[i]).relative_eigenvalue()
    i = int(np.argmin(lam))
    rows = [{"r": float(rr), "min_eig": float(l), "weight_scale": float(w.max())}
            for rr, l, w in zip(r, lam, W)]
    return AuditReport(float(lam[i]), float(r[i]), rows)


# ---------------------------------------------------------------------------
# generic bulk evaluation
# ---------------------------------------------------------------------------

def _static_multiplier(spec):
    """The multiplier for r >= 5M/2, where the interior chart is static."""
    def b(r):
        f = spec.fields(np.array([r]))
        return float(f["Xr"][0])

    def db(r):
        f = spec.fields(np.array([r]))
        return float(f["Xr1"][0])

    return RadialField(b, db) + KillingField(spec.C_K)


def full_bulk(metric, spec, t, x, du, u):
    """1/2 Q[g, X] + q du.du + m_a u du^a + (div m - 1/2 box_g q) u^2.

    Evaluated generically in the rectangular chart, hence for r >= 5M/2,
    where m vanishes and X = b(r) omega.d + C_K d_t.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r < 2.5 * spec.M:
        raise DomainError("generic evaluation requires r >= 5M/2")
    X = _static_multiplier(spec)
    du = np.asarray(du, dtype=float)
    ginv, dg, dlog = metric.at(t, x)
    q0, q1, q2 = (float(v[0]) for v in spec.q(np.array([r]), 2))
    om = x / r
    dq = np.concatenate([[0.0], q1 * om])
    hq = np.zeros((4, 4))
    hq[1:, 1:] = q2 * np.outer(om, om) + (q1 / r) * (np.eye(3) - np.outer(om, om))
    gamma = np.einsum("aab->b", dg) + ginv @ dlog
    boxq = float(np.sum(ginv * hq)) + float(gamma @ dq)
    lag = float(du @ ginv @ du)
    return 0.5 * deformation_bulk(metric, X, t, x, du) + q0 * lag - 0.5 * boxq * u * u


# ---------------------------------------------------------------------------
# boundary terms and the integrated divergence identity (spherical symmetry)
# ---------------------------------------------------------------------------

@dataclass
class BoundaryTermReport:
    slice_energy: float
    horizon_flux: float
    energy: float
    ratio: float
    signs: dict


def _current(spec, r, u, ut, ur, C_K=None, hh=None):
    """P^t and P^r of P[g, X + C K, q, m] for spherically symmetric u.

    ``hh`` optionally gives perturbations (h^{tt}, h^{tr}, h^{rr}) added to
    the interior-chart inverse metric.
    """
    f = spec.fields(r)
    gtt, gtr, grr = -f["G"], f["B"], f["F"]
    if hh is not None:
        gtt, gtr, grr = gtt + hh[0], gtr + hh[1], grr + hh[2]
    C = spec.C_K if C_K is None else C_K
    Xt = f["Xt"] - spec.C_K + C
    Xr = f["Xr"]
    dup_t = gtt * ut + gtr * ur
    dup_r = gtr * ut + grr * ur
    lag = ut * dup_t + ur * dup_r
    Xu = Xt * ut + Xr * ur
    q, q1 = f["q"], f["q1"]
    mup_t = gtt * f["mt"] + gtr * f["mr"]
    mup_r = gtr * f["mt"] + grr * f["mr"]
    Pt = dup_t * Xu - 0.5 * lag * Xt + q * u * dup_t - 0.5 * gtr * q1 * u * u + 0.5 * mup_t * u * u
    Pr = dup_r * Xu - 0.5 * lag * Xr + q * u * dup_r - 0.5 * grr * q1 * u * u + 0.5 * mup_r * u * u
    return Pt, Pr


def boundary_terms(spec, r, u, ut, ur, horizon=None, C_K=None):
    """Slice current of the multiplier on one time slice and (optionally) the
    flux through r = r_e.

    ``r, u, ut, ur`` describe a spherically symmetric slice; ``horizon`` is an
    optional tuple ``(t, u, ut, ur)`` of time series at r_e.  The slice
    energy is -int P^t r^2 dr, to be compared with E[u] = 1/2 int (G u_t^2 +
    F u_r^2) r^2 dr.
    """
    Pt, _ = _current(spec, r, u, ut, ur, C_K)
    f = spec.fields(r)
    slice_energy = -float(trapezoid(Pt * r * r, r))
    E = 0.5 * float(trapezoid((f["G"] * ut ** 2 + np.abs(f["F"]) * ur ** 2) * r * r, r))
    flux = 0.0
    if horizon is not None:
        th, uh, uth, urh = (np.asarray(v, dtype=float) for v in horizon)
        re = np.full_like(th, spec.r_e * spec.M)
        _, Pr = _current(spec, re, uh, uth, urh, C_K)
        flux = -float(trapezoid(Pr * re ** 2, th))
    ratio = slice_energy / E if E > 0 else 0.0
    return BoundaryTermReport(slice_energy, flux, E, ratio,
                              {"slice_positive": slice_energy >= 0, "horizon_nonpositive": flux <= 0})


def divergence_identity_check(spec, u_func, t0, t1, r_lo, r_hi, n=400, nt=None, hh_func=None):
    """Residual of the integrated identity

        int Q dV = - int box_g u (X u + q u) dV + [int P^t sqrt|g| dr]_{t0}^{t1}
                   + [int P^r sqrt|g| dt]_{r_lo}^{r_hi}

    for a spherically symmetric test field ``u_func(t, r)`` on the box
    [t0, t1] x [r_lo, r_hi], using second-order differences and the
    trapezoid rule.  ``hh_func(t, r)`` optionally returns a perturbation
    (h^{tt}, h^{tr}, h^{rr}) of the interior-chart inverse metric.
    Returns ``{"residual", "scale"}``; the residual is O(h^2).
    """
    nt = n if nt is None else nt
    t = np.linspace(t0, t1, nt)
    r = np.linspace(r_lo, r_hi, n)
    T, R = np.meshgrid(t, r, indexing="ij")
    U = u_func(T, R)
    if not np.any(U):
        return {"residual": 0.0, "scale": 0.0}
    ht, hr = t[1] - t[0], r[1] - r[0]
    Ut = np.gradient(U, ht, axis=0, edge_order=2)
    Ur = np.gradient(U, hr, axis=1, edge_order=2)
    f = spec.fields(r)
    G, B, F = f["G"][None], f["B"][None], f["F"][None]
    gtt, gtr, grr = -G + 0 * T, B + 0 * T, F + 0 * T
    if hh_func is not None:
        htt, htr, hrr = hh_func(T, R)
        gtt, gtr, grr = gtt + htt, gtr + htr, grr + hrr
    det2 = gtt * grr - gtr ** 2                      # determinant of the (t, r) inverse block
    sq = R ** 2 / np.sqrt(np.abs(det2))               # sqrt|g| without the angular factor
    Xt, Xr = f["Xt"][None] + 0 * T, f["Xr"][None] + 0 * T
    q = f["q"][None] + 0 * T
    mt, mr = f["mt"][None] + 0 * T, f["mr"][None] + 0 * T
    d_t = lambda A: np.gradient(A, ht, axis=0, edge_order=2)
    d_r = lambda A: np.gradient(A, hr, axis=1, edge_order=2)

    dup_t = gtt * Ut + gtr * Ur
    dup_r = gtr * Ut + grr * Ur
    lag = Ut * dup_t + Ur * dup_r
    box_u = (d_t(sq * dup_t) + d_r(sq * dup_r)) / sq

    # 1/2 Q[g, X] = 1/2 pi^{ab} u_a u_b - 1/2 div X (du.du)
    dXt = (d_t(Xt), d_r(Xt))
    dXr = (d_t(Xr), d_r(Xr))
    Xgrad = lambda A: Xt * d_t(A) + Xr * d_r(A)
    ptt = -Xgrad(gtt) + 2 * (gtt * dXt[0] + gtr * dXt[1])
    ptr = -Xgrad(gtr) + gtt * dXr[0] + gtr * dXr[1] + gtr * dXt[0] + grr * dXt[1]
    prr = -Xgrad(grr) + 2 * (gtr * dXr[0] + grr * dXr[1])
    # angular block: g^{AB} = r^{-2} sigma^{AB}, pi^{AB} = -X(r^{-2}) sigma^{AB}
    # contributes to the u-independent part only for spherical u, so it drops out
    divX = (d_t(sq * Xt) + d_r(sq * Xr)) / sq
    halfQ = 0.5 * (ptt * Ut ** 2 + 2 * ptr * Ut * Ur + prr * Ur ** 2) - 0.5 * divX * lag
    mup_t, mup_r = gtt * mt + gtr * mr, gtr * mt + grr * mr
    divm = (d_t(sq * mup_t) + d_r(sq * mup_r)) / sq
    qt, qr = d_t(q), d_r(q)
    boxq = (d_t(sq * (gtt * qt + gtr * qr)) + d_r(sq * (gtr * qt + grr * qr))) / sq
    bulk = halfQ + q * lag + U * (mt * dup_t + mr * dup_r) + (divm - 0.5 * boxq) * U ** 2
    source = box_u * (Xt * Ut + Xr * Ur + q * U)

    Pt = dup_t * (Xt * Ut + Xr * Ur) - 0.5 * lag * Xt + q * U * dup_t - 0.5 * (gtt * qt + gtr * qr) * U ** 2 + 0.5 * mup_t * U ** 2
    Pr = dup_r * (Xt * Ut + Xr * Ur) - 0.5 * lag * Xr + q * U * dup_r - 0.5 * (gtr * qt + grr * qr) * U ** 2 + 0.5 * mup_r * U ** 2

    integ = lambda A: trapezoid(trapezoid(A * sq, r, axis=1), t)
    lhs = integ(bulk) + integ(source)
    bdr = (trapezoid((Pt * sq)[-1], r) - trapezoid((Pt * sq)[0], r)
           + trapezoid((Pr * sq)[:, -1], t) - trapezoid((Pr * sq)[:, 0], t))
    scale = integ(np.abs(bulk)) + integ(np.abs(source)) + 1e-300
    return {"residual": float(abs(lhs - bdr)), "scale": float(scale)}
