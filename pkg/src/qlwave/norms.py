"""Local-energy norms, energies and empirical inequality checks for mode data.

A single spherical-harmonic mode u(t, x) = u_l(t, r) Y_lm(omega) with an
L^2-normalised Y_lm is described by :class:`ModeData`.  Angular integrals
are then exact: the sphere contributes 1 and |angular grad u|^2 contributes
l(l+1) u_l^2 / r^2.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from ._smooth import ramp
from .errors import DomainError
from .geometry import r_of_tortoise, tortoise_of_r
from .regions import DyadicAnnulus, SpacetimeRegion, japanese, shells_covering

__all__ = [
    "ModeData",
    "NormReport",
    "DyadicAnnulus",
    "SpacetimeRegion",
    "clipped_trapezoid",
    "norm_evaluate",
    "energy_evaluate",
    "hardy_check",
    "heavy_tail_family",
    "ks_check",
    "weighted_sup",
    "photonsphere_integral",
]

NORM_KINDS = ("LE", "LE1", "LEstar", "LE_S1", "LE_S_star", "LE_S_m")


@dataclass
class ModeData:
    """Samples of one mode on a tensor grid (t_k, r_j).

    ``u`` has shape (nt, nr).  ``ut`` is the time derivative and ``ur`` the
    static-chart radial derivative; ``vol`` is the spatial density (default
    r^2) of the volume form.  ``box`` optionally carries box_g u.
    """

    t: np.ndarray
    r: np.ndarray
    u: np.ndarray
    ut: Optional[np.ndarray] = None
    ur: Optional[np.ndarray] = None
    ell: int = 0
    M: float = 1.0
    vol: Optional[np.ndarray] = None
    box: Optional[np.ndarray] = None
    utt: Optional[np.ndarray] = None
    utr: Optional[np.ndarray] = None
    urr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        if self.u.shape != (self.t.size, self.r.size):
            raise DomainError("u must have shape (len(t), len(r))")

    @property
    def rstar(self):
        return tortoise_of_r(self.M, self.r) if self.M > 0 else self.r.copy()

    @property
    def volume(self):
        if self.vol is not None:
            return self.vol
        return np.broadcast_to(self.r ** 2, self.u.shape)

    @property
    def ang2(self):
        """|angular gradient|^2 as l(l+1) u^2 / r^2."""
        return self.ell * (self.ell + 1) * self.u ** 2 / self.r ** 2

    def require(self, *names):
        for n in names:
            if getattr(self, n) is None:
                raise DomainError(f"missing derivative data: {n}")

    def grad2(self):
        self.require("ut", "ur")
        return self.ut ** 2 + self.ur ** 2 + self.ang2

    def scaled(self, lam):
        """The same data for lam * u (all derivative fields scaled)."""
        kw = {k: (None if getattr(self, k) is None else lam * getattr(self, k))
              for k in ("u", "ut", "ur", "box", "utt", "utr", "urr")}
        return ModeData(self.t, self.r, ell=self.ell, M=self.M, vol=self.vol, meta=self.meta, **kw)

    def restrict(self, r_min=None, r_max=None):
        """Columns with r in [r_min, r_max]."""
        m = np.ones(self.r.size, dtype=bool)
        if r_min is not None:
            m &= self.r >= r_min
        if r_max is not None:
            m &= self.r <= r_max
        kw = {k: (None if getattr(self, k) is None else np.asarray(getattr(self, k))[:, m])
              for k in ("u", "ut", "ur", "box", "utt", "utr", "urr", "vol")}
        return ModeData(self.t, self.r[m], ell=self.ell, M=self.M, meta=self.meta, **kw)


@dataclass
class NormReport:
    kind: str
    value: float
    region: Optional[SpacetimeRegion]
    grid: dict

    def row(self):
        return {"kind": self.kind, "region": self.region.descriptor() if self.region else "all",
                "value": self.value, **self.grid}


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def clipped_trapezoid(y, x, lo=-np.inf, hi=np.inf, axis=-1):
    """Integral over [lo, hi] of the piecewise-linear interpolant of y(x).

    Partial cells at the interval ends are integrated exactly, so the
    result is continuous in lo and hi.
    """
    y = np.moveaxis(np.asarray(y, dtype=float), axis, -1)
    x = np.asarray(x, dtype=float)
    lo, hi = max(lo, x[0]), min(hi, x[-1])
    if hi <= lo:
        return np.zeros(y.shape[:-1])
    h = np.diff(x)
    cum = np.concatenate([np.zeros(y.shape[:-1] + (1,)),
                          np.cumsum(0.5 * h * (y[..., 1:] + y[..., :-1]), axis=-1)], axis=-1)

    def prim(z):
        i = int(np.clip(np.searchsorted(x, z, side="right") - 1, 0, x.size - 2))
        s = z - x[i]
        slope = (y[..., i + 1] - y[..., i]) / h[i]
        return cum[..., i] + y[..., i] * s + 0.5 * slope * s * s

    return prim(hi) - prim(lo)


def _spacetime_integral(data, dens, region, r_lo=-np.inf, r_hi=np.inf):
    """int int dens * vol dr dt over region x [r_lo, r_hi)."""
    t0, t1 = -np.inf, np.inf
    mask = None
    if region is not None:
        t0, t1 = region.t0, region.t1
        r_lo, r_hi = max(r_lo, region.r_lo), min(r_hi, region.r_hi)
        if region.kind in ("cone_block", "cone_dyadic", "interior_dyadic"):
            T, R = np.meshgrid(data.t, data.r, indexing="ij")
            RS = np.broadcast_to(data.rstar, T.shape)
            mask = region.mask(T, R, RS)
    integrand = dens * data.volume
    if mask is not None:
        integrand = np.where(mask, integrand, 0.0)
    space = clipped_trapezoid(integrand, data.r, r_lo, r_hi, axis=1)
    if data.t.size == 1:
        return float(space[0])
    return float(clipped_trapezoid(space, data.t, t0, t1))


def _shell_le(data, dens, region, weight_power, r_floor=None):
    """Per-shell values sqrt(int int <r>^p dens dV dt)."""
    r_top = data.r[-1] if region is None else min(data.r[-1], region.r_hi)
    jr = japanese(data.r)
    out = []
    for A in shells_covering(r_top):
        lo, hi = A.bounds
        if r_floor is not None:
            lo = max(lo, r_floor)
        if hi <= lo or hi <= data.r[0]:
            out.append(0.0)
            continue
        val = _spacetime_integral(data, jr[None, :] ** weight_power * dens, region, lo, hi)
        out.append(np.sqrt(max(val, 0.0)))
    return np.array(out)


def _grid_meta(data):
    dr = float(np.min(np.diff(data.r))) if data.r.size > 1 else 0.0
    dt = float(np.min(np.diff(data.t))) if data.t.size > 1 else 0.0
    return {"h": dr, "dt": dt, "nt": int(data.t.size), "nr": int(data.r.size)}


def norm_evaluate(kind, data, region=None, params=None):
    """Evaluate one of the local-energy norms on mode data.

    LE-type norms take the sup over dyadic shells of shell-restricted
    weighted L^2 norms, dual norms take the sum over shells.  ``params``
    may carry ``m`` and ``R1`` for ``LE_S_m`` and ``r_min`` to restrict
    the radial range.
    """
    if kind not in NORM_KINDS:
        raise DomainError(f"unknown norm {kind!r}")
    params = dict(params or {})
    M = data.M
    r_min = params.get("r_min")
    u = data.u
    if not np.any(u) and (data.ut is None or not np.any(data.ut)):
        return NormReport(kind, 0.0, region, _grid_meta(data))
    le = lambda dens: _shell_le(data, dens, region, -1.0, r_min).max()
    r = data.r[None, :]
    if kind == "LE":
        value = le(u ** 2)
    elif kind == "LE1":
        value = le(data.grad2()) + le(u ** 2 / japanese(r) ** 2)
    elif kind == "LEstar":
        value = _shell_le(data, u ** 2, region, 1.0, r_min).sum()
    elif kind == "LE_S1":
        data.require("ut", "ur")
        w = (1 - 3 * M / r) ** 2
        value = le(data.ur ** 2) + le(w * data.ut ** 2) + le(w * data.ang2) + le(u ** 2 / r ** 2)
    elif kind == "LE_S_star":
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(u == 0, 0.0, u ** 2 / (1 - 3 * M / r) ** 2)
        value = _shell_le(data, dens, region, 1.0, r_min).sum()
    else:  # LE_S_m
        data.require("ut", "ur")
        m = params.get("m", 0.1)
        R1 = params.get("R1", 20.0) * M
        chi, chi1 = ramp(r, R1, 2 * R1, 1)
        inner = 1.0 - chi
        w = (1 - 3 * M / r) ** 2
        v = inner * u
        vr = inner * data.ur - chi1 * u
        value = (le(vr ** 2) + le(w * (inner * data.ut) ** 2) + le(w * inner ** 2 * data.ang2)
                 + le(v ** 2 / r ** 2))
        far = _spacetime_integral(data, chi ** 2 * r ** (-1 - 2 * m) * data.grad2(), region, r_min or -np.inf)
        far_u = _spacetime_integral(data, chi ** 2 * r ** (-3 - 2 * m) * u ** 2, region, r_min or -np.inf)
        value += np.sqrt(max(far, 0.0)) + np.sqrt(max(far_u, 0.0))
    return NormReport(kind, float(value), region, _grid_meta(data))


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def energy_evaluate(kind, data, bounds, M=None, r_min=None):
    """Slice energy at t = tau, or the flux through a sphere r = r_b over [t0, t1].

    ``kind='slice'``: bounds = tau; the integrand |u_r|^2 + |u_t|^2 +
    |angular|^2 is integrated against the volume density (r^2 dr), with
    linear interpolation between archived times.
    ``kind='horizon_flux'``: bounds = (t0, t1) or (t0, t1, r_b); the same
    density times r_b^2 is integrated in t at the innermost grid radius
    (or at r_b when given).
    """
    M = data.M if M is None else M
    d = data if r_min is None else data.restrict(r_min=r_min)
    dens = d.grad2() * d.volume
    if kind == "slice":
        tau = float(bounds)
        if not (d.t[0] - 1e-12 <= tau <= d.t[-1] + 1e-12):
            raise DomainError("slice outside the evolved time range")
        row = np.array([np.interp(tau, d.t, dens[:, j]) for j in range(d.r.size)])
        return float(trapezoid(row, d.r))
    if kind == "horizon_flux":
        t0, t1 = bounds[0], bounds[1]
        j = 0 if len(bounds) < 3 else int(np.argmin(np.abs(d.r - bounds[2])))
        col = dens[:, j]
        return float(clipped_trapezoid(col, d.t, t0, t1))
    raise DomainError(f"unknown energy kind {kind!r}")


# ---------------------------------------------------------------------------
# Hardy inequality near the cone
# ---------------------------------------------------------------------------

def hardy_check(r, f, gamma, t, M=1.0, fr=None, t_minus_rstar=None):
    """Ratio int f^2 <t-r*>^{-gamma} dx / int (d_r f)^2 <t-r*>^{2-gamma} dx.

    ``t_minus_rstar`` may be passed when t - r* is known more accurately
    than the difference of two large numbers.
    """
    if gamma <= 1 or gamma == 3:
        raise DomainError("the Hardy inequality needs gamma > 1 and gamma != 3")
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return 0.0
    if fr is None:
        fr = np.gradient(f, r, edge_order=2)
    if t_minus_rstar is None:
        rs = tortoise_of_r(M, r) if M > 0 else r
        t_minus_rstar = t - rs
    w = japanese(t_minus_rstar)
    vol = (r / r.max()) ** 2                 # r^2 up to a factor common to both sides
    lhs = trapezoid(f ** 2 * w ** (-gamma) * vol, r)
    rhs = trapezoid(fr ** 2 * w ** (2 - gamma) * vol, r)
    return float(lhs / rhs)


def heavy_tail_family(gamma, t=None, M=0.0, n=4000):
    """f = <t - r*>^{-(gamma-1)/2} on 0 <= t - r* <= t/2, smoothly cut off.

    The time defaults to t = exp(1/(gamma-1)) so that the slowly decaying
    tail sees a range of scales comparable to its decay rate.  Returns
    (r, f, d_r f, t, t - r*) on a grid that is geometric in t - r*.
    """
    if gamma <= 1:
        raise DomainError("gamma must exceed 1")
    t = float(np.exp(1.0 / (gamma - 1.0))) if t is None else float(t)
    S = 0.5 * t
    core = np.linspace(-2.0, 1.0, 400)
    tail = np.geomspace(1.0, S, n)[1:]
    s = np.concatenate([core, tail])
    rs = t - s
    r = r_of_tortoise(M, rs) if M > 0 else rs
    beta = 0.5 * (gamma - 1.0)
    cl, cl1 = ramp(s, -2.0, 0.0, 1)
    cr, cr1 = ramp(s, 0.5 * S, S, 1)
    p = japanese(s) ** (-beta)
    p1 = -beta * s * japanese(s) ** (-beta - 2)
    f = cl * (1 - cr) * p
    fs = cl1 * (1 - cr) * p - cl * cr1 * p + cl * (1 - cr) * p1
    F = 1 - 2 * M / r if M > 0 else 1.0
    fr = -fs / F                      # ds/dr = -1/F
    order = np.argsort(r)
    return r[order], f[order], fr[order], t, s[order]


# ---------------------------------------------------------------------------
# Klainerman-Sideris ratio, weighted sups, photon-sphere integral
# ---------------------------------------------------------------------------

def ks_check(data, commuted, order=0, r_min=None, floor=1e-6):
    """max over the region of |d^2 u| / RHS with constant one.

    RHS = t/(r <t-r*>) |d u_{<=3}| + t/<t-r*> |box u|, where the commuted
    family ``commuted`` (mapping name -> ModeData) supplies Z u for the
    available Z.  A relative floor keeps the ratio finite where all fields
    vanish.
    """
    data.require("utt", "utr", "urr", "ut", "ur")
    if order not in (0, 1):
        raise DomainError("order must be 0 or 1")
    d = data
    m = np.ones(d.r.size, dtype=bool) if r_min is None else d.r >= r_min
    if not m.any():
        raise DomainError("region does not meet the grid")
    lhs = np.sqrt(d.utt ** 2 + 2 * d.utr ** 2 + d.urr ** 2)[:, m]
    if not np.any(lhs):
        return {"max_ratio": 0.0, "argmax": None}
    acc = d.grad2()
    for z in commuted.values():
        acc = acc + z.grad2()
    acc = acc * (1.0 + d.ell * (d.ell + 1))          # rotations act as l(l+1) on modes
    T, R = np.meshgrid(d.t, d.r, indexing="ij")
    RS = np.broadcast_to(d.rstar, T.shape)
    ju = japanese(T - RS)
    rhs = np.maximum(T, 1.0) / (R * ju) * np.sqrt(acc)
    if d.box is not None:
        rhs = rhs + np.maximum(T, 1.0) / ju * np.abs(d.box)
    rhs = rhs[:, m]
    rhs = rhs + floor * rhs.max()
    ratio = lhs / rhs
    i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return {"max_ratio": float(ratio[i]), "argmax": (float(d.t[i[0]]), float(d.r[m][i[1]]))}


def weighted_sup(data, T, r_min=None):
    """Weighted sups over C_T = {T <= t <= 2T, r <= t}.

    Returns sup |u| <t>/<t-r*>^{1/2} and sup |du| <r><t-r*>^{1/2}, taken as
    the max over the C_T^R (r < t/2) and C_T^U (r* > t/2) pieces, together
    with the per-piece table.
    """
    data.require("ut", "ur")
    if data.t[0] > T or data.t[-1] < 2 * T:
        raise DomainError("data does not cover [T, 2T]")
    d = data if r_min is None else data.restrict(r_min=r_min)
    tm = (d.t >= T) & (d.t <= 2 * T)
    t = d.t[tm][:, None]
    r = d.r[None, :]
    rs = d.rstar[None, :]
    inside = r <= t
    ju = japanese(t - rs)
    wu = np.abs(d.u[tm]) * japanese(t) / np.sqrt(ju)
    wdu = np.sqrt(d.grad2()[tm]) * japanese(r) * np.sqrt(ju)
    pieces = []
    R = 1.0
    while R < 2 * T:
        sel = inside & (r > R) & (r < 2 * R) & (rs <= t / 2)
        if R == 1.0:
            sel = inside & (r < 2) & (rs <= t / 2)
        if sel.any():
            pieces.append({"piece": f"R={R:g}", "sup_u": float(wu[sel].max()), "sup_du": float(wdu[sel].max())})
        R *= 2
    U = 1.0
    while U < 4 * T:
        sel = inside & (rs > t / 2) & (t - rs > U) & (t - rs < 2 * U)
        if U == 1.0:
            sel = inside & (rs > t / 2) & (t - rs < 2)
        if sel.any():
            pieces.append({"piece": f"U={U:g}", "sup_u": float(wu[sel].max()), "sup_du": float(wdu[sel].max())})
        U *= 2
    if not pieces:
        return {"sup_u_weight": 0.0, "sup_du_weight": 0.0, "pieces": []}
    return {
        "sup_u_weight": max(p["sup_u"] for p in pieces),
        "sup_du_weight": max(p["sup_du"] for p in pieces),
        "pieces": pieces,
    }


def photonsphere_integral(data, eps, t0, t1):
    """int_{t0}^{t1} int_{5M/2}^{7M/2} (eps/t) |du|^2 sqrt|g| dr dt."""
    if t0 <= 0:
        raise DomainError("the eps/t weight needs t0 > 0")
    M = data.M
    region = SpacetimeRegion.photonsphere(M, t0, t1)
    t = np.maximum(data.t, 1e-300)[:, None]
    val = _spacetime_integral(data, eps / t * data.grad2(), region, 2.5 * M, 3.5 * M)
    return float(val)
