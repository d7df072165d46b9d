"""Mode-reduced 1+1 evolutions on Schwarzschild and a spherical quasilinear model.

The linear solver evolves psi = r u_l for one spherical-harmonic mode in
the tortoise coordinate,

    -psi_tt + psi_{r*r*} - V_l psi = 0,

with either the second-order leapfrog scheme or a method-of-lines RK4
integrator with fourth-order differences.  The quasilinear model keeps
spherical symmetry and evolves u itself with a metric perturbation
h^{ab} = H^{ab}(t, r*) u in the (t, r*) block.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError, HyperbolicityLoss, InstabilityDetected, StencilError
from .geometry import delta_of_tortoise
from .norms import ModeData

__all__ = [
    "Grid1D",
    "ModeState",
    "EvolutionConfig",
    "QuasilinearState",
    "RunArchive",
    "CommutedBundle",
    "regge_wheeler_potential",
    "evolve_linear",
    "evolve_quasilinear",
    "flat_space_oracle",
    "commute_fields",
    "exponent_fit",
    "gaussian_pulse",
    "energy_monotonicity",
    "killing_energy",
]

SCHEMES = ("leapfrog2", "mol_rk4_fd4")
BCS = ("sommerfeld", "reflecting")
CFL_LIMIT = {"leapfrog2": 0.9, "mol_rk4_fd4": 0.7}


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass
class Grid1D:
    """Uniform grid in r*.  For M = 0 the tortoise coordinate is r itself."""

    rstar_min: float
    rstar_max: float
    n: int
    M: float = 1.0

    def __post_init__(self):
        if self.n < 8 or not self.rstar_max > self.rstar_min:
            raise DomainError("grid needs n >= 8 and rstar_max > rstar_min")
        if self.M == 0 and self.rstar_min < 0:
            raise DomainError("the flat surrogate lives on r >= 0")
        self.nodes = np.linspace(self.rstar_min, self.rstar_max, self.n)
        if self.M == 0:
            self.delta = self.nodes.copy()
            self.r_nodes = self.nodes.copy()
        else:
            # r - 2M is kept separately: near r* = -80M it is far below the
            # spacing of doubles at r = 2M
            self.delta = delta_of_tortoise(self.M, self.nodes)
            self.r_nodes = 2.0 * self.M + self.delta
            if not np.all(self.delta > 0):
                raise DomainError("grid reaches the horizon")

    @property
    def h(self):
        return (self.rstar_max - self.rstar_min) / (self.n - 1)

    @property
    def F(self):
        if self.M == 0:
            return np.ones(self.n)
        return self.delta / self.r_nodes

    @classmethod
    def with_spacing(cls, rstar_min, rstar_max, h, M=1.0):
        n = int(round((rstar_max - rstar_min) / h)) + 1
        return cls(rstar_min, rstar_min + (n - 1) * h, n, M)


@dataclass
class ModeState:
    ell: int
    psi: np.ndarray
    psi_t: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.psi_t = np.asarray(self.psi_t, dtype=float)
        if not (np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.psi_t))):
            raise DomainError("initial data must be finite")


@dataclass
class EvolutionConfig:
    cfl: float = 0.5
    scheme: str = "leapfrog2"
    bc_left: str = "sommerfeld"
    bc_right: str = "sommerfeld"
    t_end: float = 100.0
    record_every: int = 10
    growth_factor: float = 1e3
    hyperbolicity_floor: float = 0.1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.bc_left not in BCS or self.bc_right not in BCS:
            raise DomainError("boundary conditions are 'sommerfeld' or 'reflecting'")
        if not 0 < self.cfl <= CFL_LIMIT[self.scheme]:
            raise DomainError(f"cfl must lie in (0, {CFL_LIMIT[self.scheme]}] for {self.scheme}")
        if self.t_end <= 0 or self.record_every < 1:
            raise DomainError("t_end must be positive and record_every >= 1")

    def steps(self, h):
        """(number of steps, dt) with dt <= cfl*h landing exactly on t_end."""
        nsteps = int(np.ceil(self.t_end / (self.cfl * h) - 1e-9))
        return nsteps, self.t_end / nsteps


@dataclass
class QuasilinearState:
    u: np.ndarray
    u_t: np.ndarray
    profile: object = None
    t: float = 0.0


@dataclass
class RunArchive:
    """Recorded time levels of one run.

    ``form`` is 'psi' (values are r u) or 'u'.  ``energy`` holds the
    discrete conserved energy at the recorded levels when the scheme
    provides one.
    """

    grid: Grid1D
    ell: int
    form: str
    cfg: EvolutionConfig
    times: np.ndarray
    values: np.ndarray
    rates: np.ndarray
    dt: float
    energy: Optional[np.ndarray] = None
    margin: Optional[np.ndarray] = None
    profile: object = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.grid.M

    def to_mode_data(self, r_min=None, r_max=None, second=True):
        """Convert to :class:`ModeData` with static-chart derivatives."""
        g = self.grid
        h = g.h
        keep = g.r_nodes > 0
        if r_min is not None:
            keep &= g.r_nodes >= r_min
        if r_max is not None:
            keep &= g.r_nodes <= r_max
        r = g.r_nodes
        F = g.F
        V = _potential_on(g, self.ell)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.form == "psi":
                psi, psit = self.values, self.rates
                psis = np.gradient(psi, h, axis=1, edge_order=2)
                u = psi / r
                ut = psit / r
                us = psis / r - F * psi / r ** 2
                if second:
                    psitt = np.gradient(psis, h, axis=1, edge_order=2) - V * psi
                    utt = psitt / r
            else:
                u, ut = self.values, self.rates
                us = np.gradient(u, h, axis=1, edge_order=2)
                if second:
                    uss = np.gradient(us, h, axis=1, edge_order=2)
                    utt = uss + 2 * F / r * us - F * self.ell * (self.ell + 1) / r ** 2 * u
        ur = us / F
        kw = {}
        if second:
            uts = np.gradient(ut, h, axis=1, edge_order=2)
            kw["utt"] = utt[:, keep]
            kw["utr"] = (uts / F)[:, keep]
            kw["urr"] = (np.gradient(ur, h, axis=1, edge_order=2) / F)[:, keep]
        return ModeData(self.times, r[keep], u[:, keep], ut=ut[:, keep], ur=ur[:, keep],
                        ell=self.ell, M=g.M, meta={"h": h, "dt": self.dt}, **kw)


@dataclass
class CommutedBundle:
    fields: dict
    omega_weight: float

    def __getitem__(self, key):
        return self.fields[key]


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def regge_wheeler_potential(M, ell, r):
    """V_l(r) = (1 - 2M/r)(l(l+1)/r^2 + 2M/r^3)."""
    r = np.asarray(r, dtype=float)
    if M > 0 and np.any(r <= 2 * M):
        raise DomainError("the potential is defined for r > 2M")
    return (1.0 - 2.0 * M / r) * (ell * (ell + 1) / r ** 2 + 2.0 * M / r ** 3)


def _potential_on(grid, ell):
    r = grid.r_nodes
    safe = np.where(r > 0, r, 1.0)
    V = grid.F * (ell * (ell + 1) / safe ** 2 + 2.0 * grid.M / safe ** 3)
    return np.where(r > 0, V, 0.0)


def _d2_fd4(f, h, bc_left, bc_right):
    """Fourth-order second derivative; odd ghosts at reflecting ends."""
    out = np.empty_like(f)
    out[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)
    if bc_left == "reflecting":
        out[1] = (f[1] + 16 * f[0] - 30 * f[1] + 16 * f[2] - f[3]) / (12 * h * h)
        out[0] = 0.0
    else:
        out[1] = (f[0] - 2 * f[1] + f[2]) / (h * h)
        out[0] = 0.0
    if bc_right == "reflecting":
        out[-2] = (-f[-4] + 16 * f[-3] - 30 * f[-2] + 16 * f[-1] + f[-2]) / (12 * h * h)
        out[-1] = 0.0
    else:
        out[-2] = (f[-3] - 2 * f[-2] + f[-1]) / (h * h)
        out[-1] = 0.0
    return out


def _d1_fd4(f, h):
    """Fourth-order first derivative with one-sided closures at both ends."""
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def _growth_reference(grid, x0, xt0):
    """Scale for the growth monitor; velocity-only data counts through h * sum |x_t|."""
    return max(np.abs(x0).max(), grid.h * np.abs(xt0).sum(), 1e-300)


def _check_growth(vals, ref, factor, t):
    if ref > 0 and not np.all(np.abs(vals) <= factor * ref):
        raise InstabilityDetected(f"sup growth beyond factor {factor:g} at t={t:.6g}", t)


# ---------------------------------------------------------------------------
# linear evolution
# ---------------------------------------------------------------------------

def _leapfrog(grid, V, psi0, psit0, cfg):
    h = grid.h
    nsteps, dt = cfg.steps(h)
    lam = dt / h
    lam2 = lam * lam
    w = np.full(grid.n, h)
    w[0] = w[-1] = 0.5 * h
    ref = _growth_reference(grid, psi0, psit0)

    def apply_bc(new, cur, old):
        for side, bc in ((0, cfg.bc_left), (-1, cfg.bc_right)):
            if bc == "reflecting":
                new[side] = 0.0
            else:
                nb = 1 if side == 0 else -2
                new[side] = (2 * cur[side] - (1 - lam) * old[side] + 2 * lam2 * (cur[nb] - cur[side])
                             - dt * dt * V[side] * cur[side]) / (1 + lam)
        return new

    def step(cur, old):
        new = np.empty_like(cur)
        new[1:-1] = (2 * cur[1:-1] - old[1:-1] + lam2 * (cur[2:] - 2 * cur[1:-1] + cur[:-2])
                     - dt * dt * V[1:-1] * cur[1:-1])
        return apply_bc(new, cur, old)

    def energy(new, cur):
        kin = ((new - cur) / dt) ** 2 + V * new * cur
        grad = np.diff(new) * np.diff(cur) / h
        return 0.5 * np.dot(w, kin) + 0.5 * grad.sum()

    # Taylor start for the first level
    lap = np.zeros_like(psi0)
    lap[1:-1] = (psi0[2:] - 2 * psi0[1:-1] + psi0[:-2]) / (h * h)
    old = psi0.copy()
    cur = psi0 + dt * psit0 + 0.5 * dt * dt * (lap - V * psi0)
    for side, bc in ((0, cfg.bc_left), (-1, cfg.bc_right)):
        if bc == "reflecting":
            cur[side] = 0.0
    times, vals, rates, ens = [0.0], [psi0.copy()], [np.asarray(psit0, dtype=float).copy()], [energy(cur, old)]
    for k in range(1, nsteps + 1):
        new = step(cur, old)
        if k % cfg.record_every == 0 or k == nsteps:
            times.append(k * dt)
            vals.append(cur.copy())
            rates.append((new - old) / (2 * dt))
            ens.append(energy(new, cur))
            _check_growth(cur, ref, cfg.growth_factor, k * dt)
        old, cur = cur, new
    return np.array(times), np.array(vals), np.array(rates), dt, np.array(ens)


def _rk4(rhs, y0, grid, cfg, monitor=None, ref=None):
    h = grid.h
    nsteps, dt = cfg.steps(h)
    y = y0.copy()
    times, rec, margins = [0.0], [y.copy()], []
    if monitor is not None:
        margins.append(monitor(0.0, y))
    for k in range(1, nsteps + 1):
        t = (k - 1) * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if monitor is not None:
            m = monitor(k * dt, y)
        if k % cfg.record_every == 0 or k == nsteps:
            times.append(k * dt)
            rec.append(y.copy())
            if monitor is not None:
                margins.append(m)
            if ref is not None:
                _check_growth(y[0], ref, cfg.growth_factor, k * dt)
    rec = np.array(rec)
    return np.array(times), rec[:, 0], rec[:, 1], dt, (np.array(margins) if monitor is not None else None)


def _psi_rhs(grid, V, cfg):
    h = grid.h

    def rhs(t, y):
        psi, pi = y
        dpi = _d2_fd4(psi, h, cfg.bc_left, cfg.bc_right) - V * psi
        dpsi = pi.copy()
        for side, bc, sgn in ((0, cfg.bc_left, 1.0), (-1, cfg.bc_right, -1.0)):
            if bc == "reflecting":
                dpsi[side] = dpi[side] = 0.0
            else:
                dpi[side] = sgn * _d1_fd4(pi, h)[side]
        return np.array([dpsi, dpi])

    return rhs


def _u_linear_parts(grid, ell):
    r = grid.r_nodes
    F = grid.F
    return 2.0 * F / r, F * ell * (ell + 1) / r ** 2


def _cached_components(profile, r):
    """H, d_t H, d_{r*} H on the grid, reusing the static radial factors."""
    cvec, phi, phis = profile.factors(r)
    live = np.flatnonzero(phi != 0) if np.any(cvec) else np.array([], dtype=int)

    def components(t):
        tau, tau1 = profile.time_factor(t)
        H = np.zeros((3, r.size))
        Ht = np.zeros_like(H)
        Hs = np.zeros_like(H)
        H[:, live] = cvec[:, None] * (phi[live] * tau)
        Ht[:, live] = cvec[:, None] * (phi[live] * tau1)
        Hs[:, live] = cvec[:, None] * (phis[live] * tau)
        return H, Ht, Hs

    return components


def _u_rhs(grid, ell, cfg, profile=None):
    """RHS of the u-form system; the correction vanishes identically for H = 0."""
    h = grid.h
    r = grid.r_nodes
    F = grid.F
    M = grid.M
    c1, c0 = _u_linear_parts(grid, ell)
    Fs = F * 2.0 * M / r ** 2                       # dF/dr*
    dlog = 2.0 * M / r ** 2 + 2.0 * F / r           # d_{r*} ln sqrt|g_S|
    gS_tt = -1.0 / F

    components = _cached_components(profile, r) if profile is not None else None

    def rhs(t, y):
        u, v = y
        us = _d1_fd4(u, h)
        uss = _d2_fd4(u, h, "open", "open")
        lin = uss + c1 * us - c0 * u
        if profile is not None:
            H, Ht, Hs = components(t)
            vs = _d1_fd4(v, h)
            htt, htr, hrr = H * u
            htt_t, htr_t, hrr_t = Ht * u + H * v
            htt_s, htr_s, hrr_s = Hs * u + H * us
            gtt = gS_tt + htt
            grr = 1.0 / F + hrr
            # rho = det(g)/det(g_S) - 1 on the (t, r*) block; L = -log(1 + rho)/2
            P = htt - hrr
            Q = htt * hrr - htr * htr
            rho = -F * P - F * F * Q
            rho_t = -F * (htt_t - hrr_t) - F * F * (htt_t * hrr + htt * hrr_t - 2 * htr * htr_t)
            rho_s = (-Fs * P - F * (htt_s - hrr_s) - 2 * F * Fs * Q
                     - F * F * (htt_s * hrr + htt * hrr_s - 2 * htr * htr_s))
            L_t = -0.5 * rho_t / (1.0 + rho)
            L_s = -0.5 * rho_s / (1.0 + rho)
            # Gamma^b(g) - Gamma^b(g_S) from the divergence form
            dG_t = htt_t + htr_s + htr * dlog + gtt * L_t + htr * L_s
            dG_s = htr_t + hrr_s + hrr * dlog + htr * L_t + grr * L_s
            E = 2 * htr * vs + hrr * uss + dG_t * v + dG_s * us
            dv = lin - (htt * lin + E) / gtt
        else:
            dv = lin
        dv = np.array(dv, dtype=float)
        du = v.copy()
        vs_b = _d1_fd4(v, h)
        dv[0] = vs_b[0] + F[0] * v[0] / r[0]
        dv[-1] = -vs_b[-1] - F[-1] * v[-1] / r[-1]
        return np.array([du, dv])

    return rhs


def evolve_linear(M, ell, grid, init, cfg, form="psi"):
    """Evolve one mode of the linear wave equation on Schwarzschild (or flat, M = 0).

    ``form='psi'`` evolves psi = r u with either scheme; ``form='u'`` evolves
    u with the RK4 integrator on the same code path as the quasilinear model.
    """
    if grid.M != M:
        raise DomainError("grid and evolution mass differ")
    if init.psi.shape != (grid.n,):
        raise DomainError("initial data does not match the grid")
    V = _potential_on(grid, ell)
    if form == "u":
        if cfg.scheme != "mol_rk4_fd4" or M == 0:
            raise DomainError("the u-form runs with mol_rk4_fd4 on M > 0")
        u0, ut0 = init.psi / grid.r_nodes, init.psi_t / grid.r_nodes
        y0 = np.array([u0, ut0])
        ref = _growth_reference(grid, u0, ut0)
        times, vals, rates, dt, _ = _rk4(_u_rhs(grid, ell, cfg), y0, grid, cfg, ref=ref)
        return RunArchive(grid, ell, "u", cfg, times + init.t, vals, rates, dt)
    if form != "psi":
        raise DomainError("form must be 'psi' or 'u'")
    psi0 = init.psi.copy()
    psit0 = init.psi_t.copy()
    if cfg.scheme == "leapfrog2":
        times, vals, rates, dt, en = _leapfrog(grid, V, psi0, psit0, cfg)
        return RunArchive(grid, ell, "psi", cfg, times + init.t, vals, rates, dt, energy=en)
    ref = _growth_reference(grid, psi0, psit0)
    times, vals, rates, dt, _ = _rk4(_psi_rhs(grid, V, cfg), np.array([psi0, psit0]), grid, cfg, ref=ref)
    return RunArchive(grid, ell, "psi", cfg, times + init.t, vals, rates, dt)


def evolve_quasilinear(M, grid, init, cfg, profile=None):
    """Spherically symmetric quasilinear model box_{g(u)} u = 0 with h = H u.

    The update solves g^tt u_tt = -(2 g^{tr*} u_{tr*} + g^{r*r*} u_{r*r*} + first
    order terms) for u_tt, written as lin - (h^tt lin + E)/g^tt where lin is
    the Schwarzschild operator.  Raises HyperbolicityLoss when the margin
    -g^tt F falls below ``cfg.hyperbolicity_floor``.
    """
    if cfg.scheme != "mol_rk4_fd4":
        raise DomainError("the quasilinear model runs with mol_rk4_fd4")
    if grid.M != M or M <= 0:
        raise DomainError("quasilinear runs need M > 0 matching the grid")
    profile = profile if profile is not None else init.profile
    if profile is None:
        raise DomainError("a SphericalProfile is required (use shape='zero' for H = 0)")
    r = grid.r_nodes
    F = grid.F
    components = _cached_components(profile, r)

    def monitor(t, y):
        H, _, _ = components(t)
        htt, htr, hrr = H * y[0]
        margin = float(np.min(F * (1.0 / F - htt)))
        disc = (-1.0 / F + htt) * (1.0 / F + hrr) - htr * htr
        if margin < cfg.hyperbolicity_floor or not np.all(disc < 0):
            raise HyperbolicityLoss(f"g^tt margin {margin:.3g} at t={t:.6g}", t)
        return margin

    y0 = np.array([np.asarray(init.u, dtype=float), np.asarray(init.u_t, dtype=float)])
    ref = _growth_reference(grid, y0[0], y0[1])
    times, vals, rates, dt, margins = _rk4(_u_rhs(grid, 0, cfg, profile), y0, grid, cfg, monitor, ref)
    return RunArchive(grid, 0, "u", cfg, times + init.t, vals, rates, dt, margin=margins, profile=profile)


# ---------------------------------------------------------------------------
# oracle, commuted fields, fits
# ---------------------------------------------------------------------------

def gaussian_pulse(x, center, width, amp=1.0):
    return amp * np.exp(-((np.asarray(x, dtype=float) - center) / width) ** 2)


def flat_space_oracle(phi, t, r, psi1=None):
    """d'Alembert solution for radial flat waves with zero initial velocity.

    psi(t, r) = (phi~(r - t) + phi~(r + t))/2 with phi~ the odd extension.
    """
    if psi1 is not None and np.any(np.asarray(psi1) != 0):
        raise DomainError("only zero initial velocity is supported")
    r = np.asarray(r, dtype=float)

    def odd(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, phi(np.abs(x)), -phi(np.abs(x)))

    return 0.5 * (odd(r - t) + odd(r + t))


def commute_fields(archive, orders=None, blend=None, r_min=None):
    """Commuted fields d_t u, d_t^2 u and S u = t d_t u + r~ d_{r~} u.

    Each field is returned as :class:`ModeData` with its own first
    derivatives, so the norm routines apply unchanged.
    """
    orders = dict(orders or {"dt": 2, "S": 1})
    if orders.get("dt", 0) > 2 or orders.get("S", 0) > 1:
        raise DomainError("commutation orders are limited to dt <= 2, S <= 1")
    if archive.times.size < 3:
        raise StencilError("insufficient archive depth for centered time stencils")
    d = archive.to_mode_data(r_min=r_min)
    out = {"id": d}
    t = d.t[:, None]
    r = d.r
    if orders.get("dt", 0) >= 1:
        out["dt"] = ModeData(d.t, r, d.ut, ut=d.utt, ur=d.utr, ell=d.ell, M=d.M)
    if orders.get("dt", 0) >= 2:
        uttt = np.gradient(d.utt, d.t, axis=0, edge_order=2)
        uttr = np.gradient(d.utt, r, axis=1, edge_order=2)
        out["dt2"] = ModeData(d.t, r, d.utt, ut=uttt, ur=uttr, ell=d.ell, M=d.M)
    if orders.get("S", 0) >= 1:
        if blend is None:
            k = r.copy()
            k1 = np.ones_like(r)
        else:
            k = blend.value(r) / blend.deriv(r)
            k1 = np.gradient(k, r, edge_order=2)
        Su = t * d.ut + k * d.ur
        Su_t = d.ut + t * d.utt + k * d.utr
        Su_r = t * d.utr + k1 * d.ur + k * d.urr
        out["S"] = ModeData(d.t, r, Su, ut=Su_t, ur=Su_r, ell=d.ell, M=d.M)
    return CommutedBundle(out, float(d.ell * (d.ell + 1)))


def exponent_fit(t, E, model="power_law", eps=None):
    """Least-squares slope of log E against log t.

    ``model='bootstrap'`` divides the slope by ``eps`` (the t^{C eps} shape).
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.size < 8:
        raise DomainError("need at least 8 samples")
    if np.any(E <= 0) or np.any(t <= 0):
        raise DomainError("exponent fits need positive data")
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(E), rcond=None)
    resid = np.log(E) - A @ coef
    p = float(coef[0])
    if model == "bootstrap":
        if not eps:
            raise DomainError("bootstrap model needs eps")
        p /= eps
    elif model != "power_law":
        raise DomainError(f"unknown model {model!r}")
    return {"exponent": p, "residual": float(np.sqrt(np.mean(resid ** 2)))}


def energy_monotonicity(archive):
    """Largest upward excursion of the recorded discrete energy, relative to E(0)."""
    E = archive.energy
    if E is None:
        raise DomainError("this archive carries no discrete energy")
    running_min = np.minimum.accumulate(E)
    return float(np.max(E - running_min) / E[0]) if E[0] > 0 else 0.0


def killing_energy(archive, window=None):
    """Conserved energy (1/2) int (psi_t^2 + psi_{r*}^2 + V psi^2) dr* per record.

    ``window`` restricts the r* range; psi-form archives only.
    """
    if archive.form != "psi":
        raise DomainError("killing_energy needs a psi-form archive")
    g = archive.grid
    m = np.ones(g.n, dtype=bool)
    if window is not None:
        m = (g.nodes >= window[0]) & (g.nodes <= window[1])
    V = _potential_on(g, archive.ell)
    ps = np.gradient(archive.values, g.h, axis=1, edge_order=2)
    dens = archive.rates ** 2 + ps ** 2 + V * archive.values ** 2
    return 0.5 * trapezoid(dens[:, m], g.nodes[m], axis=1)
