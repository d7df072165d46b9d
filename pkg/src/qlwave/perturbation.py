"""Quasilinear metric model h = H u + O(u^2) around Schwarzschild.

All tensors live in the rectangular chart (t, x), x = r omega, as 4x4 arrays
of contravariant components h^{alpha beta}.  Derivative arrays are indexed
``d[mu, alpha, beta] = d_mu h^{alpha beta}``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._smooth import cutoff, ramp
from .errors import DomainError, SignatureError, StencilError
from .geometry import (
    SpacetimePoint,
    check_mass,
    frame_decompose,
    null_frame_at,
    tortoise_of_r,
)
from .regions import SpacetimeRegion, japanese

__all__ = [
    "PerturbationProfile",
    "SphericalProfile",
    "DecayEnvelope",
    "TensorFieldSample",
    "schwarzschild_inverse",
    "schwarzschild_inverse_derivs",
    "h_of_u",
    "sample_field",
    "envelope_validate",
    "compute_W",
    "th_tilde",
    "wavecoords_constants",
    "NullSplit",
    "null_operator_split",
    "direct_difference",
    "photon_sphere_profile",
    "far_field_profile",
]


# ---------------------------------------------------------------------------
# background metric on arbitrary (t, x)
# ---------------------------------------------------------------------------

def _polar(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    return r, x / r


def schwarzschild_inverse(M, x):
    """g_S^{alpha beta} in the rectangular chart at spatial position x."""
    r, om = _polar(x)
    F = 1.0 - 2.0 * M / r
    P = np.outer(om, om)
    g = np.zeros((4, 4))
    g[0, 0] = -1.0 / F
    g[1:, 1:] = np.eye(3) + (F - 1.0) * P
    return g


def schwarzschild_inverse_derivs(M, x):
    """d_mu g_S^{alpha beta} (analytic), shape (4, 4, 4)."""
    r, om = _polar(x)
    F = 1.0 - 2.0 * M / r
    Fp = 2.0 * M / r ** 2
    d = np.zeros((4, 4, 4))
    dom = (np.eye(3) - np.outer(om, om)) / r          # d_k omega_i, index [k, i]
    for k in range(3):
        d[k + 1, 0, 0] = Fp * om[k] / F ** 2
        dP = np.outer(dom[k], om) + np.outer(om, dom[k])
        d[k + 1, 1:, 1:] = Fp * om[k] * np.outer(om, om) + (F - 1.0) * dP
    return d


def _lorentz_check(ginv):
    ev = np.linalg.eigvalsh(ginv)
    if not (np.sum(ev < 0) == 1 and np.sum(ev > 0) == 3):
        raise SignatureError("perturbed metric is not Lorentzian")


def _fd_gradient(f, X, step):
    """Second-order centered gradient of f: R^4 -> array, stacked on axis 0."""
    X = np.asarray(X, dtype=float)
    out = []
    for mu in range(4):
        e = np.zeros(4)
        e[mu] = step
        out.append((np.asarray(f(X + e)) - np.asarray(f(X - e))) / (2.0 * step))
    return np.array(out)


def _fd_gradient4(f, X, step):
    """Fourth-order centered gradient."""
    X = np.asarray(X, dtype=float)
    out = []
    for mu in range(4):
        e = np.zeros(4)
        e[mu] = step
        fp1, fm1 = np.asarray(f(X + e)), np.asarray(f(X - e))
        fp2, fm2 = np.asarray(f(X + 2 * e)), np.asarray(f(X - 2 * e))
        out.append((8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step))
    return np.array(out)


def _fd_hessian(f, X, step):
    X = np.asarray(X, dtype=float)
    f0 = f(X)
    H = np.zeros((4, 4))
    for mu in range(4):
        e = np.zeros(4)
        e[mu] = step
        H[mu, mu] = (f(X + e) - 2.0 * f0 + f(X - e)) / step ** 2
        for nu in range(mu + 1, 4):
            d = np.zeros(4)
            d[nu] = step
            H[mu, nu] = H[nu, mu] = (
                f(X + e + d) - f(X + e - d) - f(X - e + d) + f(X - e - d)
            ) / (4.0 * step ** 2)
    return H


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

class PerturbationProfile:
    """h^{ab}(t, x, u) = H^{ab}(t, x) u + quadratic(t, x, u).

    ``H(t, x)`` returns a symmetric 4x4 array.  ``dH(t, x)`` returns the
    (4, 4, 4) derivative array; when omitted, fourth-order centered
    differences with step ``fd_step`` are used.
    """

    def __init__(self, H, dH=None, quadratic=None, eps=1e-3, delta=0.1, fd_step=1e-3, name="custom"):
        if not 0 < delta < 0.5:
            raise DomainError("delta must lie in (0, 1/2)")
        if eps <= 0:
            raise DomainError("eps must be positive")
        self._H = H
        self._dH = dH
        self.quadratic = quadratic
        self.eps = float(eps)
        self.delta = float(delta)
        self.fd_step = fd_step
        self.name = name

    def H(self, t, x):
        return np.asarray(self._H(float(t), np.asarray(x, dtype=float)), dtype=float)

    def dH(self, t, x):
        if self._dH is not None:
            return np.asarray(self._dH(float(t), np.asarray(x, dtype=float)), dtype=float)
        f = lambda X: self.H(X[0], X[1:])
        return _fd_gradient4(f, np.concatenate([[t], x]), self.fd_step)

    def h(self, t, x, u):
        out = self.H(t, x) * u
        if self.quadratic is not None:
            out = out + np.asarray(self.quadratic(float(t), np.asarray(x, dtype=float), u))
        return out


def h_of_u(profile, p, u):
    """Metric perturbation at the point p for the field value u."""
    return profile.h(p.t, p.x, u)


def _bump(r, r0, r1):
    """Smooth bump supported in [r0, r1], equal to 1 at the midpoint."""
    mid = 0.5 * (r0 + r1)
    return ramp(r, r0, mid)[0] * cutoff(r, mid, r1)[0]


def photon_sphere_profile(M=1.0, amplitude=1.0, eps=1e-3, delta=0.1, r0=None, r1=None):
    """H = A phi(r) <t>^(-1/2) (spatial identity block), phi a bump in [r0, r1].

    The <t>^(-1/2) factor gives |H| <~ r^(1/2) <t>^(-1/2) near the trapped set,
    a sufficient condition for the W bound there.
    """
    r0 = 2.5 * M if r0 is None else r0
    r1 = 3.5 * M if r1 is None else r1
    spatial = np.zeros((4, 4))
    spatial[1:, 1:] = np.eye(3)

    def H(t, x):
        r = np.linalg.norm(x)
        return amplitude * float(_bump(r, r0, r1)) / np.sqrt(japanese(t)) * spatial

    return PerturbationProfile(H, eps=eps, delta=delta, name="photon_sphere")


def far_field_profile(M=1.0, amplitude=1.0, eps=1e-3, delta=0.1, R=20.0, c_mixed=0.5, c_ang=0.5):
    """Far-field profile with the Lbar Lbar component suppressed near the cone.

    H = A rho(r) [ (<t - r*>/<t>)^delta Lbar Lbar + c_mixed (L Lbar + Lbar L)
                   + c_ang (delta - omega omega) ],  rho a ramp on [R, 2R].
    """

    def H(t, x):
        r = np.linalg.norm(x)
        if r <= 2 * M:
            return np.zeros((4, 4))
        om = x / r
        F = 1.0 - 2.0 * M / r
        rho = float(ramp(r, R, 2 * R)[0])
        if rho == 0.0:
            return np.zeros((4, 4))
        rs = tortoise_of_r(M, r)
        Lb = np.concatenate([[1.0], -F * om])
        L = np.concatenate([[1.0], F * om])
        ang = np.zeros((4, 4))
        ang[1:, 1:] = np.eye(3) - np.outer(om, om)
        supp = (japanese(t - rs) / japanese(t)) ** delta
        out = supp * np.outer(Lb, Lb) + c_mixed * (np.outer(L, Lb) + np.outer(Lb, L)) + c_ang * ang
        return amplitude * rho * out

    return PerturbationProfile(H, eps=eps, delta=delta, name="far_field")


@dataclass
class SphericalProfile:
    """Spherically symmetric H restricted to the (t, r*) block.

    H^{ab}(t, r*) = c_ab * phi(r) * tau(t) for ab in {tt, tr*, r*r*}, with
    phi a bump on [r0, r1] (``shape='photon_sphere'``) or a ramp on [r0, 2 r0]
    (``shape='far_field'``) and tau(t) = <t>^(-decay).
    Derivatives are analytic.
    """

    M: float = 1.0
    c_tt: float = 0.0
    c_tr: float = 0.0
    c_rr: float = 1.0
    shape: str = "photon_sphere"
    r0: float = 2.5
    r1: float = 3.5
    decay: float = 0.5
    eps: float = 1e-3
    delta: float = 0.1

    def __post_init__(self):
        if self.shape not in ("photon_sphere", "far_field", "zero"):
            raise DomainError(f"unknown profile shape {self.shape!r}")

    @property
    def is_zero(self):
        return self.shape == "zero" or (self.c_tt == 0 and self.c_tr == 0 and self.c_rr == 0)

    def _phi(self, r):
        if self.shape == "photon_sphere":
            mid = 0.5 * (self.r0 + self.r1)
            a, a1 = ramp(r, self.r0, mid, 1)
            b, b1 = cutoff(r, mid, self.r1, 1)
            return a * b, a1 * b + a * b1
        if self.shape == "far_field":
            v, v1 = ramp(r, self.r0, 2 * self.r0, 1)
            return v, v1
        z = np.zeros_like(np.asarray(r, dtype=float))
        return z, z

    def components(self, t, r):
        """Return (H, dH/dt, dH/dr*) each shaped (3, n) in the order tt, tr*, r*r*."""
        r = np.asarray(r, dtype=float)
        F = 1.0 - 2.0 * self.M / r
        phi, phi1 = self._phi(r)
        jt = japanese(t)
        tau = jt ** (-self.decay)
        tau1 = -self.decay * t * jt ** (-self.decay - 2.0)
        c = np.array([self.c_tt, self.c_tr, self.c_rr])[:, None]
        H = c * (phi * tau)[None, :]
        Ht = c * (phi * tau1)[None, :]
        Hr = c * (F * phi1 * tau)[None, :]
        return H, Ht, Hr

    def factors(self, r):
        """Static parts (c, phi, F phi') so that H = c phi tau(t) and d_{r*}H = c F phi' tau(t)."""
        r = np.asarray(r, dtype=float)
        phi, phi1 = self._phi(r)
        F = 1.0 - 2.0 * self.M / r
        return np.array([self.c_tt, self.c_tr, self.c_rr]), phi, F * phi1

    def time_factor(self, t):
        """tau(t) = <t>^(-decay) and its derivative."""
        jt = japanese(t)
        return jt ** (-self.decay), -self.decay * t * jt ** (-self.decay - 2.0)

    def rectangular_H(self, t, x):
        """The same profile expressed as H^{alpha beta} in (t, x)."""
        r = np.linalg.norm(x)
        om = np.asarray(x) / r
        F = 1.0 - 2.0 * self.M / r
        H, _, _ = self.components(t, np.array([r]))
        tt, tr, rr = H[:, 0]
        out = np.zeros((4, 4))
        out[0, 0] = tt
        out[0, 1:] = out[1:, 0] = F * tr * om
        out[1:, 1:] = F * F * rr * np.outer(om, om)
        return out

    def as_profile(self):
        return PerturbationProfile(self.rectangular_H, eps=self.eps, delta=self.delta, name=self.shape)


# ---------------------------------------------------------------------------
# sampled fields and envelopes
# ---------------------------------------------------------------------------

@dataclass
class TensorFieldSample:
    """Values h^{ab} and derivatives d_mu h^{ab} at a list of points.

    ``points`` has shape (n, 4) holding (t, x1, x2, x3).
    """

    points: np.ndarray
    values: np.ndarray
    derivs: Optional[np.ndarray] = None
    M: float = 1.0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 4, 4)
        if self.derivs is not None:
            self.derivs = np.asarray(self.derivs, dtype=float).reshape(-1, 4, 4, 4)

    @property
    def t(self):
        return self.points[:, 0]

    @property
    def r(self):
        return np.linalg.norm(self.points[:, 1:], axis=1)

    @property
    def rstar(self):
        return tortoise_of_r(self.M, self.r) if self.M > 0 else self.r

    def magnitude(self, which="values"):
        if which == "values":
            return np.abs(self.values).max(axis=(1, 2))
        if which == "derivs":
            if self.derivs is None:
                raise DomainError("sample carries no derivatives")
            return np.abs(self.derivs).max(axis=(1, 2, 3))
        if which == "LbarLbar":
            out = np.empty(len(self.points))
            for i, P in enumerate(self.points):
                p = SpacetimePoint.make(self.M, P[0], np.linalg.norm(P[1:]), P[1:])
                out[i] = abs(frame_decompose(self.M, p, self.values[i]).hLL)
            return out
        raise DomainError(f"unknown magnitude {which!r}")


def sample_field(profile, points, u, du=None, M=1.0):
    """Sample h = H u (+ quadratic part) and d h = dH u + H du at points.

    ``u`` is an array of field values (n,), ``du`` an array (n, 4) of its
    derivatives; without ``du`` only values are sampled.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.asarray(u, dtype=float).reshape(-1)
    vals, ders = [], []
    for P, uu in zip(points, u):
        vals.append(profile.h(P[0], P[1:], uu))
    if du is not None:
        du = np.asarray(du, dtype=float).reshape(-1, 4)
        for P, uu, d in zip(points, u, du):
            Hm = profile.H(P[0], P[1:])
            dd = profile.dH(P[0], P[1:]) * uu + d[:, None, None] * Hm[None]
            if profile.quadratic is not None:
                f = lambda X, s=uu: np.asarray(profile.quadratic(X[0], X[1:], s))
                dd = dd + _fd_gradient4(f, P, profile.fd_step)
                eps_u = 1e-6 * max(1.0, abs(uu))
                dq = (np.asarray(profile.quadratic(P[0], P[1:], uu + eps_u))
                      - np.asarray(profile.quadratic(P[0], P[1:], uu - eps_u))) / (2 * eps_u)
                dd = dd + d[:, None, None] * dq[None]
            ders.append(dd)
    return TensorFieldSample(points, np.array(vals), np.array(ders) if ders else None, M=M)


ENVELOPES = (
    "S_Z_one",
    "deriv_coeff",
    "cpt_t_half",
    "cpt_t_one_delta",
    "intrm_r",
    "cone_good",
    "cone_bad_LL",
    "W_photosphere",
)


@dataclass(frozen=True)
class DecayEnvelope:
    """The decay profiles assumed for h, dh and H in the perturbation model."""

    kind: str
    eps: float = 1.0
    delta: float = 0.1
    R1: float = 20.0
    M: float = 1.0

    def __post_init__(self):
        if self.kind not in ENVELOPES:
            raise DomainError(f"unknown envelope {self.kind!r}")

    def __call__(self, t, r, rstar):
        t, r, rstar = (np.asarray(v, dtype=float) for v in (t, r, rstar))
        d, e = self.delta, self.eps
        jt, ju = japanese(t), japanese(t - rstar)
        k = self.kind
        if k == "S_Z_one":
            return np.ones(np.broadcast(t, r).shape)
        if k == "deriv_coeff":
            tt = np.maximum(t, 1.0)
            return tt ** (1 + d) / (r ** (1 + d) * ju ** (0.5 + d))
        if k in ("cpt_t_half", "W_photosphere"):
            return e * jt ** -0.5
        if k == "cpt_t_one_delta":
            return e * jt ** (-1.0 - d)
        if k == "intrm_r":
            return e * r ** (-d)
        if k == "cone_good":
            return e * ju ** (0.5 - d) * jt ** (-0.5 - d)
        return e * (ju / jt) ** d  # cone_bad_LL

    def declared(self, t, r, rstar):
        """Mask of points where the envelope is asserted."""
        t, r, rstar = (np.asarray(v, dtype=float) for v in (t, r, rstar))
        k, M = self.kind, self.M
        R1s = tortoise_of_r(M, self.R1) if M > 0 else self.R1
        if k == "deriv_coeff":
            return rstar >= R1s
        if k in ("cpt_t_half", "cpt_t_one_delta"):
            return (r > 2.75 * M) & (r < 3.25 * M)
        if k == "W_photosphere":
            return (r >= 2.5 * M) & (r <= 3.5 * M)
        if k == "intrm_r":
            return (rstar >= R1s) & (rstar <= t / 2)
        if k in ("cone_good",):
            return rstar > t / 2
        return np.ones(np.broadcast(t, r).shape, dtype=bool)


def envelope_validate(field, env, region=None, which="values"):
    """max over sampled points of |field| / envelope, restricted to a region.

    Returns ``{"max_ratio": float, "argmax": (t, x1, x2, x3) or None}``.
    Raises DomainError when the region leaves the envelope's declared region.
    """
    t, r, rs = field.t, field.r, field.rstar
    mask = np.ones(len(t), dtype=bool) if region is None else region.mask(t, r, rs)
    if not mask.any():
        return {"max_ratio": 0.0, "argmax": None}
    if not np.all(env.declared(t[mask], r[mask], rs[mask])):
        raise DomainError(f"region is not contained in the declared region of {env.kind}")
    mag = field.magnitude(which)[mask]
    ratio = mag / env(t[mask], r[mask], rs[mask])
    i = int(np.argmax(ratio))
    return {"max_ratio": float(ratio[i]), "argmax": tuple(field.points[mask][i])}


# ---------------------------------------------------------------------------
# W and the wave-coordinate difference
# ---------------------------------------------------------------------------

def _gamma(ginv, dginv):
    """(1/sqrt|g|) d_a(sqrt|g| g^{ab}) = d_a g^{ab} - 1/2 g^{ab} g_{mn} d_a g^{mn}."""
    glow = np.linalg.inv(ginv)
    div = np.einsum("aab->b", dginv)
    dlog = -np.einsum("mn,amn->a", glow, dginv)        # d_a log|g|
    return div + 0.5 * np.einsum("ab,a->b", ginv, dlog)


def compute_W(M, p, h, dh):
    """W^b = Gamma_S^b - Gamma_g^b via the log-determinant derivative identity.

    ``h`` is h^{ab}(p) and ``dh`` is d_mu h^{ab}(p), shape (4, 4, 4).
    """
    x = np.asarray(p.x if isinstance(p, SpacetimePoint) else p, dtype=float)
    gS = schwarzschild_inverse(M, x)
    dgS = schwarzschild_inverse_derivs(M, x)
    g = gS + np.asarray(h, dtype=float)
    _lorentz_check(g)
    dg = dgS + np.asarray(dh, dtype=float)
    return _gamma(gS, dgS) - _gamma(g, dg)


def _sqrt_abs_det_from_inverse(ginv):
    return 1.0 / np.sqrt(abs(np.linalg.det(ginv)))


def th_tilde(M, x, h):
    """sqrt|g| g - sqrt|g_S| g_S at position x."""
    gS = schwarzschild_inverse(M, x)
    g = gS + np.asarray(h, dtype=float)
    return _sqrt_abs_det_from_inverse(g) * g - _sqrt_abs_det_from_inverse(gS) * gS


def wavecoords_constants(M, sample):
    """Measured constants C1, C2 in |th| <= C1 |h| sqrt|g| and the Lbar Lbar version."""
    c1 = c2 = 0.0
    for P, h in zip(sample.points, sample.values):
        x = P[1:]
        r = np.linalg.norm(x)
        th = th_tilde(M, x, h)
        sg = _sqrt_abs_det_from_inverse(schwarzschild_inverse(M, x) + h)
        hn = np.abs(h).max()
        if hn > 0:
            c1 = max(c1, np.abs(th).max() / (hn * sg))
        p = SpacetimePoint.make(M, P[0], r, x)
        hLL = frame_decompose(M, p, h).hLL
        thLL = frame_decompose(M, p, th).hLL
        if abs(hLL) > 1e-14 * max(hn, 1e-300):
            c2 = max(c2, abs(thLL) / (abs(hLL) * sg))
    return {"C_h": float(c1), "C_LL": float(c2)}


# ---------------------------------------------------------------------------
# null-frame split of the perturbed wave operator
# ---------------------------------------------------------------------------

@dataclass
class NullSplit:
    principal: float
    T2: float
    T1: float
    T0: float
    dLL_term: float

    @property
    def total(self):
        return self.principal + self.T2 + self.T1 + self.T0 + self.dLL_term


def _frame_at_X(M, X):
    r, om = _polar(X[1:])
    return null_frame_at(M, SpacetimePoint(float(X[0]), r, om))


def _check_stencil(p, step, R1):
    if p.r < 2 * R1:
        raise DomainError("the null split is evaluated in r >= 2 R1")
    if not (0 < step <= 0.05 * p.r):
        raise StencilError("stencil spacing must be positive and small against r")


def null_operator_split(M, p, h_func, u_func, step=0.05, R1=20.0):
    """Split (box_g - box_gS) u into the five null-frame summands at p.

    ``h_func(t, x)`` returns h^{ab} and ``u_func(t, x)`` the scalar field.
    All derivatives are second-order centered differences with spacing
    ``step``, so the split agrees with :func:`direct_difference` to O(step^2).
    """
    M = check_mass(M)
    _check_stencil(p, step, R1)
    X0 = np.concatenate([[p.t], p.x])
    hX = lambda X: np.asarray(h_func(X[0], X[1:]), dtype=float)
    uX = lambda X: float(u_func(X[0], X[1:]))
    gS = lambda X: schwarzschild_inverse(M, X[1:])
    sqrtg = lambda X: _sqrt_abs_det_from_inverse(gS(X) + hX(X))
    lnratio = lambda X: np.log(abs(np.linalg.det(gS(X))) / abs(np.linalg.det(gS(X) + hX(X))))

    fr = _frame_at_X(M, X0)
    r, om = p.r, p.omega
    F = 1.0 - 2.0 * M / r
    Fp = 2.0 * M / r ** 2
    gLLb = -2.0 * F
    Lb, L, A, B = fr.Lbar, fr.L, fr.A, fr.B
    L_low, Lb_low = fr.L_low, fr.Lbar_low
    A_low = np.concatenate([[0.0], A[1:]])
    B_low = np.concatenate([[0.0], B[1:]])
    theta = {"Lbar": L_low / gLLb, "L": Lb_low / gLLb, "A": A_low, "B": B_low}
    vec = {"Lbar": Lb, "L": L, "A": A, "B": B}
    lows = {"A": A_low, "B": B_low}

    h0 = hX(X0)
    sg0 = sqrtg(X0)
    du = _fd_gradient(uX, X0, step)
    hess = _fd_hessian(uX, X0, step)
    dir_u = {k: float(v @ du) for k, v in vec.items()}

    # frame components of h at p
    hLL = float(theta["Lbar"] @ h0 @ theta["Lbar"])
    h_row = {T: theta[T] @ h0 for T in ("L", "A", "B")}        # h^{T beta}
    hTLb = {T: float(h_row[T] @ theta["Lbar"]) for T in ("L", "A", "B")}

    # principal: h^{LbLb} d_Lb (d_Lb u), nested directional derivative
    def dLb_u(X):
        return float(_frame_at_X(M, X).Lbar @ _fd_gradient(uX, X, step))

    d2Lb = float(Lb @ _fd_gradient(dLb_u, X0, step))
    principal = hLL * d2Lb

    T2 = 0.0
    for T in ("L", "A", "B"):
        coeff = hTLb[T] * Lb + h_row[T]
        T2 += float(vec[T] @ hess @ coeff)

    # T1
    V = lambda X: sqrtg(X) * hX(X)
    dV = _fd_gradient(V, X0, step)                   # [mu, a, b]
    dir_V = {k: np.einsum("m,mab->ab", v, dV) for k, v in vec.items()}
    line1 = (Lb_low @ dir_V["L"]) / gLLb
    for T in ("A", "B"):
        line1 = line1 + lows[T] @ dir_V[T]
    line1 = float(line1 @ du) / sg0
    dLbV = L_low @ dir_V["Lbar"] / (sg0 * gLLb)    # vector in beta
    line2 = float(dLbV @ Lb_low) / gLLb * dir_u["L"]
    for T in ("A", "B"):
        line2 += float(dLbV @ lows[T]) * dir_u[T]
    dln = _fd_gradient(lnratio, X0, step)
    gS0 = gS(X0)
    line3 = 0.0
    for T in ("L", "A", "B"):
        gS_TLb = float(theta[T] @ gS0 @ theta["Lbar"])
        gS_Tb = theta[T] @ gS0
        line3 += 0.5 * gS_TLb * float(Lb @ dln) * dir_u[T]
        line3 += 0.5 * float(vec[T] @ dln) * float(gS_Tb @ du)
    T1 = line1 + line2 + line3

    # d_Lb(sqrt|g| h^{LbLb}) term
    def Z(X):
        f = _frame_at_X(M, X)
        FX = f.L_low[0] * -1.0
        return sqrtg(X) * float(f.L_low @ hX(X) @ f.L_low) / (2.0 * FX) ** 2

    dLL_term = float(Lb @ _fd_gradient(Z, X0, step)) / sg0 * dir_u["Lbar"]

    # T0: curvature of the frame
    drs_u = F * float(om @ du[1:])
    Lh_om = float(L_low @ h0[:, 1:] @ om)
    T0 = -hLL * Fp * drs_u - Fp * Lh_om / (2.0 * F * F) * dir_u["Lbar"]
    return NullSplit(principal, T2, T1, T0, dLL_term)


def direct_difference(M, p, h_func, u_func, step=0.05):
    """(box_g - box_gS) u from the divergence form with centered differences."""
    X0 = np.concatenate([[p.t], p.x])
    uX = lambda X: float(u_func(X[0], X[1:]))

    def box(metric):
        def flux(X):
            ginv = metric(X)
            return _sqrt_abs_det_from_inverse(ginv) * ginv @ _fd_gradient(uX, X, step)

        dflux = _fd_gradient(flux, X0, step)
        return float(np.trace(dflux)) / _sqrt_abs_det_from_inverse(metric(X0))

    gS = lambda X: schwarzschild_inverse(M, X[1:])
    g = lambda X: gS(X) + np.asarray(h_func(X[0], X[1:]), dtype=float)
    return box(g) - box(gS)
