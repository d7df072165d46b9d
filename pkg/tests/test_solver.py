import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlwave.errors import DomainError, HyperbolicityLoss, InstabilityDetected, StencilError
from qlwave.geometry import r_of_tortoise, rtilde_blend, tortoise_of_r
from qlwave.norms import ks_check
from qlwave.perturbation import SphericalProfile
from qlwave.solver import (
    EvolutionConfig,
    Grid1D,
    ModeState,
    QuasilinearState,
    _u_rhs,
    commute_fields,
    energy_monotonicity,
    evolve_linear,
    evolve_quasilinear,
    exponent_fit,
    flat_space_oracle,
    gaussian_pulse,
    killing_energy,
    regge_wheeler_potential,
)


def test_regge_wheeler_values():
    assert regge_wheeler_potential(1.0, 0, 3.0) == pytest.approx(2.0 / 81.0)
    assert regge_wheeler_potential(1.0, 2, 3.0) == pytest.approx(20.0 / 81.0)
    assert regge_wheeler_potential(0.0, 1, 2.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        regge_wheeler_potential(1.0, 0, 2.0)


def test_grid_invariants():
    g = Grid1D(-80.0, 100.0, 1801, 1.0)
    assert g.h == pytest.approx(0.1)
    # far down the throat r - 2M is below double spacing at 2M, so the
    # strict invariants are carried by delta = r - 2M
    assert np.all(np.diff(g.delta) > 0) and np.all(g.delta > 0)
    assert np.all(np.diff(g.r_nodes) >= 0)
    g40 = Grid1D(-40.0, 100.0, 1401, 1.0)
    assert np.all(np.diff(g40.r_nodes) > 0) and np.all(g40.r_nodes > 2.0)
    np.testing.assert_allclose(g.F, 1 - 2 / g.r_nodes, atol=1e-15)
    np.testing.assert_allclose(tortoise_of_r(1.0, g.r_nodes[g.r_nodes > 2.5]), g.nodes[g.r_nodes > 2.5], atol=1e-9)
    assert Grid1D.with_spacing(0.0, 10.0, 0.25, 0.0).n == 41
    for bad in ((0.0, 1.0, 4, 1.0), (1.0, 0.0, 100, 1.0), (-1.0, 5.0, 100, 0.0)):
        with pytest.raises(DomainError):
            Grid1D(*bad)


def test_config_validation():
    with pytest.raises(DomainError):
        EvolutionConfig(scheme="euler")
    with pytest.raises(DomainError):
        EvolutionConfig(bc_left="absorbing")
    with pytest.raises(DomainError):
        EvolutionConfig(cfl=0.8, scheme="mol_rk4_fd4")
    with pytest.raises(DomainError):
        EvolutionConfig(t_end=-1)
    n, dt = EvolutionConfig(cfl=0.5, t_end=10.0).steps(0.1)
    assert n * dt == pytest.approx(10.0) and dt <= 0.05 + 1e-15
    with pytest.raises(DomainError):
        ModeState(0, np.array([np.nan, 0.0]), np.zeros(2))


@pytest.mark.parametrize("scheme", ["leapfrog2", "mol_rk4_fd4"])
def test_zero_data_stays_zero(scheme):
    g = Grid1D(-20.0, 40.0, 301, 1.0)
    cfg = EvolutionConfig(scheme=scheme, t_end=10.0)
    a = evolve_linear(1.0, 1, g, ModeState(1, np.zeros(g.n), np.zeros(g.n)), cfg)
    assert not np.any(a.values) and not np.any(a.rates)


def test_mass_and_shape_checks():
    g = Grid1D(-20.0, 40.0, 301, 1.0)
    cfg = EvolutionConfig(t_end=1.0)
    init = ModeState(0, np.zeros(g.n), np.zeros(g.n))
    with pytest.raises(DomainError):
        evolve_linear(2.0, 0, g, init, cfg)
    with pytest.raises(DomainError):
        evolve_linear(1.0, 0, g, ModeState(0, np.zeros(5), np.zeros(5)), cfg)
    with pytest.raises(DomainError):
        evolve_linear(1.0, 0, g, init, cfg, form="u")
    with pytest.raises(DomainError):
        evolve_linear(1.0, 0, g, init, cfg, form="phi")


@settings(max_examples=25)
@given(st.floats(0.0, 30.0), st.floats(0.3, 5.0))
def test_flat_oracle_properties(t, r):
    phi = lambda x: np.exp(-((x - 8.0) / 1.5) ** 2) - np.exp(-((x + 8.0) / 1.5) ** 2)
    # the odd extension makes psi vanish at the origin for all times
    assert abs(flat_space_oracle(phi, t, 0.0)) < 1e-15
    assert flat_space_oracle(phi, 0.0, r) == pytest.approx(phi(r), abs=1e-15)
    # wave equation: second differences in t and r agree
    e = 1e-3
    f = lambda tt, rr: flat_space_oracle(phi, tt, rr)
    psi_tt = (f(t + e + 1.0, r + 10) - 2 * f(t + 1.0, r + 10) + f(t - e + 1.0, r + 10)) / e ** 2
    psi_rr = (f(t + 1.0, r + 10 + e) - 2 * f(t + 1.0, r + 10) + f(t + 1.0, r + 10 - e)) / e ** 2
    assert psi_tt == pytest.approx(psi_rr, abs=1e-4)
    with pytest.raises(DomainError):
        flat_space_oracle(phi, t, r, psi1=np.ones(3))


def _flat_error(scheme, n):
    g = Grid1D(0.0, 40.0, n, 0.0)
    phi = lambda x: gaussian_pulse(x, 10.0, 1.0)
    psi0 = phi(g.nodes) - phi(-g.nodes)
    cfg = EvolutionConfig(cfl=0.5, scheme=scheme, bc_left="reflecting", t_end=15.0, record_every=10 ** 6)
    a = evolve_linear(0.0, 0, g, ModeState(0, psi0, np.zeros(n)), cfg)
    exact = flat_space_oracle(phi, a.times[-1], g.nodes)
    return np.sqrt(g.h * np.sum((a.values[-1] - exact) ** 2))


@pytest.mark.parametrize("scheme,order", [("leapfrog2", 1.9), ("mol_rk4_fd4", 3.7)])
def test_flat_convergence(scheme, order):
    e = [_flat_error(scheme, n) for n in (401, 801, 1601)]
    assert np.log2(e[1] / e[2]) >= order
    assert np.log2(e[0] / e[1]) >= order - 0.3


def test_leapfrog_energy_conserved_with_reflecting_ends():
    g = Grid1D(-30.0, 50.0, 1601, 1.0)
    cfg = EvolutionConfig(cfl=0.8, bc_left="reflecting", bc_right="reflecting", t_end=200.0, record_every=20)
    a = evolve_linear(1.0, 1, g, ModeState(1, gaussian_pulse(g.nodes, 5.0, 2.0), np.zeros(g.n)), cfg)
    E = a.energy
    assert np.max(np.abs(E - E[0])) < 1e-11 * E[0]


def test_leapfrog_energy_nonincreasing_with_outgoing_ends():
    g = Grid1D(-30.0, 50.0, 1601, 1.0)
    cfg = EvolutionConfig(cfl=0.5, t_end=150.0, record_every=5)
    a = evolve_linear(1.0, 2, g, ModeState(2, gaussian_pulse(g.nodes, 5.0, 2.0), np.zeros(g.n)), cfg)
    assert energy_monotonicity(a) < 1e-12
    assert a.energy[-1] < 0.05 * a.energy[0]
    K = killing_energy(a)
    assert K[0] == pytest.approx(a.energy[0], rel=1e-2)
    with pytest.raises(DomainError):
        killing_energy(type(a)(**{**a.__dict__, "form": "u"}))


def test_u_form_agrees_with_psi_form():
    g = Grid1D.with_spacing(-40.0, 120.0, 0.1, 1.0)
    init = ModeState(2, gaussian_pulse(g.nodes, 10.0, 2.0), np.zeros(g.n))
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=40.0, record_every=100)
    a = evolve_linear(1.0, 2, g, init, cfg)
    b = evolve_linear(1.0, 2, g, init, cfg, form="u")
    ua = a.values[-1] / g.r_nodes
    assert np.max(np.abs(ua - b.values[-1])) < 1e-5 * np.max(np.abs(init.psi / g.r_nodes))


def test_velocity_only_data_runs():
    g = Grid1D.with_spacing(-40.0, 80.0, 0.1, 1.0)
    init = ModeState(0, np.zeros(g.n), gaussian_pulse(g.nodes, 0.0, 2.0))
    for scheme in ("leapfrog2", "mol_rk4_fd4"):
        a = evolve_linear(1.0, 0, g, init, EvolutionConfig(scheme=scheme, t_end=20.0))
        assert np.abs(a.values[-1]).max() > 0


def test_instability_abort():
    g = Grid1D.with_spacing(-40.0, 80.0, 0.1, 1.0)
    init = ModeState(0, gaussian_pulse(g.nodes, 0.0, 2.0), np.zeros(g.n))
    # a factor below one trips as soon as the pulse is recorded
    with pytest.raises(InstabilityDetected) as exc:
        evolve_linear(1.0, 0, g, init, EvolutionConfig(t_end=20.0, growth_factor=0.3, record_every=1))
    assert exc.value.t > 0


# ----------------------------------------------------------------- quasilinear

def _ql_setup(amp, c=(1.0, 0.0, 1.0), center=10.0):
    g = Grid1D.with_spacing(tortoise_of_r(1.0, 2.2), 120.0, 0.125, 1.0)
    prof = SphericalProfile(1.0, c_tt=c[0], c_tr=c[1], c_rr=c[2])
    u0 = amp * gaussian_pulse(g.nodes, center, 2.0)
    return g, prof, u0


def test_quasilinear_with_zero_profile_is_the_linear_solver():
    g, _, u0 = _ql_setup(1e-3)
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=30.0, record_every=20)
    ql = evolve_quasilinear(1.0, g, QuasilinearState(u0, np.zeros(g.n)), cfg, SphericalProfile(1.0, shape="zero"))
    lin = evolve_linear(1.0, 0, g, ModeState(0, u0 * g.r_nodes, np.zeros(g.n)), cfg, form="u")
    np.testing.assert_allclose(ql.values, lin.values, rtol=0, atol=1e-12 * np.abs(u0).max())
    np.testing.assert_allclose(ql.margin, 1.0, atol=1e-14)


def test_quasilinear_rhs_matches_divergence_form():
    prof = SphericalProfile(1.0, c_tt=0.8, c_tr=0.5, c_rr=-0.6, decay=0.5)
    g = Grid1D.with_spacing(-10.0, 20.0, 0.005, 1.0)
    t0 = 1.3

    def U(t, s):
        return 0.3 * np.exp(-((s - 0.5 - 0.3 * t) / 1.2) ** 2) * (1 + 0.1 * np.sin(t))

    e = 1e-4
    Ut = lambda t, s: (U(t + e, s) - U(t - e, s)) / (2 * e)
    Us = lambda t, s: (U(t, s + e) - U(t, s - e)) / (2 * e)

    def pieces(t, s):
        r = r_of_tortoise(1.0, s)
        F = 1 - 2 / r
        htt, htr, hrr = prof.components(t, r)[0] * U(t, s)
        gtt, gtr, grr = -1 / F + htt, htr, 1 / F + hrr
        sq = r * r / np.sqrt(np.abs(gtt * grr - gtr ** 2))
        return sq, gtt, gtr, grr

    def flux(t, s, a):
        sq, gtt, gtr, grr = pieces(t, s)
        if a == 0:
            return sq * (gtt * Ut(t, s) + gtr * Us(t, s))
        return sq * (gtr * Ut(t, s) + grr * Us(t, s))

    s = g.nodes[(g.nodes > -4) & (g.nodes < 6)]
    k = 1e-3
    box = ((flux(t0 + k, s, 0) - flux(t0 - k, s, 0)) / (2 * k)
           + (flux(t0, s + k, 1) - flux(t0, s - k, 1)) / (2 * k)) / pieces(t0, s)[0]
    cfg = EvolutionConfig(scheme="mol_rk4_fd4")
    rhs = _u_rhs(g, 0, cfg, prof)
    dv = rhs(t0, np.array([U(t0, g.nodes), Ut(t0, g.nodes)]))[1]
    m = (g.nodes > -4) & (g.nodes < 6)
    utt = (U(t0 + 1e-3, s) - 2 * U(t0, s) + U(t0 - 1e-3, s)) / 1e-6
    gtt = pieces(t0, s)[1]
    scale = np.abs(box).max()
    assert scale > 1e-2
    np.testing.assert_allclose(gtt * (utt - dv[m]), box, atol=2e-5 * scale)


def test_quasilinear_hyperbolicity_abort():
    # a large bump sitting on the photon sphere drives g^tt through zero
    g, prof, u0 = _ql_setup(10.0, center=0.5)
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=20.0)
    with pytest.raises(HyperbolicityLoss) as exc:
        evolve_quasilinear(1.0, g, QuasilinearState(u0, np.zeros(g.n)), cfg, prof)
    assert exc.value.t is not None


def test_quasilinear_guards():
    g, prof, u0 = _ql_setup(1e-3)
    init = QuasilinearState(u0, np.zeros(g.n))
    with pytest.raises(DomainError):
        evolve_quasilinear(1.0, g, init, EvolutionConfig(t_end=1.0), prof)
    with pytest.raises(DomainError):
        evolve_quasilinear(1.0, g, init, EvolutionConfig(scheme="mol_rk4_fd4", t_end=1.0))


def test_small_quasilinear_run_stays_close_to_linear():
    g, prof, u0 = _ql_setup(1e-3)
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=30.0, record_every=20)
    ql = evolve_quasilinear(1.0, g, QuasilinearState(u0, np.zeros(g.n)), cfg, prof)
    lin = evolve_linear(1.0, 0, g, ModeState(0, u0 * g.r_nodes, np.zeros(g.n)), cfg, form="u")
    diff = np.abs(ql.values - lin.values).max() / np.abs(u0).max()
    assert 0 < diff < 1e-2
    assert ql.margin.min() > 0.99


# ----------------------------------------------------------------- commuted fields

def test_archive_mode_data(schw_run):
    d = schw_run.to_mode_data(r_min=3.0, r_max=100.0)
    assert d.r.min() >= 3.0 and d.r.max() <= 100.0
    assert d.utt is not None and d.u.shape == (schw_run.times.size, d.r.size)
    assert schw_run.times[-1] == pytest.approx(100.0)


def test_commuted_dt_converges():
    errs = []
    hs = (0.2, 0.1, 0.05)
    ref_t = None
    for h in hs:
        g = Grid1D.with_spacing(-40.0, 120.0, h, 1.0)
        cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=20.0, record_every=int(round(0.4 / (0.5 * h))))
        a = evolve_linear(1.0, 0, g, ModeState(0, gaussian_pulse(g.nodes, 20.0, 3.0), np.zeros(g.n)), cfg)
        c = commute_fields(a, r_min=10.0)
        # d_t u from the recorded rates vs centred differences of u in time
        fd = np.gradient(c["id"].u, c["id"].t, axis=0, edge_order=2)
        errs.append(np.abs(fd[2:-2] - c["dt"].u[2:-2]).max())
    # the time stencil is fixed by the record spacing, so the mismatch
    # settles to the O(dt_record^2) truncation of the difference quotient
    assert errs[2] == pytest.approx(errs[1], rel=0.05)


def test_commuted_fields_flat_traveling_wave():
    g = Grid1D.with_spacing(0.0, 200.0, 0.05, 0.0)
    phi = lambda x: gaussian_pulse(x, 60.0, 3.0)
    psi0 = phi(g.nodes) - phi(-g.nodes)
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", bc_left="reflecting", t_end=20.0, record_every=8)
    a = evolve_linear(0.0, 0, g, ModeState(0, psi0, np.zeros(g.n)), cfg)
    c = commute_fields(a, r_min=20.0)
    t = c["id"].t[:, None]
    r = c["id"].r[None, :]
    exact = lambda tt, rr: flat_space_oracle(phi, tt, rr) / rr
    e = 1e-4
    dt_exact = (exact(t + e, r) - exact(t - e, r)) / (2 * e)
    assert np.abs(c["dt"].u - dt_exact).max() < 1e-4 * np.abs(dt_exact).max()
    S_exact = t * dt_exact + r * (exact(t, r + e) - exact(t, r - e)) / (2 * e)
    assert np.abs(c["S"].u - S_exact).max() < 1e-3 * np.abs(S_exact).max()
    assert c.omega_weight == 0.0


def test_commute_fields_limits(schw_run):
    with pytest.raises(DomainError):
        commute_fields(schw_run, orders={"dt": 3})
    short = type(schw_run)(**{**schw_run.__dict__, "times": schw_run.times[:2],
                              "values": schw_run.values[:2], "rates": schw_run.rates[:2]})
    with pytest.raises(StencilError):
        commute_fields(short)


def test_ks_ratio_on_schwarzschild_run(schw_run):
    c = commute_fields(schw_run, blend=rtilde_blend(1.0, 20.0), r_min=40.0)
    out = ks_check(c["id"], {k: v for k, v in c.fields.items() if k != "id"})
    assert 0 < out["max_ratio"] < np.inf


def test_ks_ratio_on_flat_run(flat_run):
    c = commute_fields(flat_run, r_min=40.0)
    out = ks_check(c["id"], {k: v for k, v in c.fields.items() if k != "id"})
    assert 0 < out["max_ratio"] < np.inf


# ----------------------------------------------------------------- fits

@given(st.floats(-3.0, 3.0), st.floats(0.1, 10.0))
def test_exponent_fit_recovers_power_laws(p, c):
    t = np.geomspace(1, 1000, 12)
    out = exponent_fit(t, c * t ** p)
    assert out["exponent"] == pytest.approx(p, abs=1e-9)
    assert out["residual"] < 1e-9


def test_exponent_fit_bootstrap_and_guards():
    t = np.geomspace(1, 100, 10)
    assert exponent_fit(t, t ** 0.002, "bootstrap", eps=1e-3)["exponent"] == pytest.approx(2.0)
    with pytest.raises(DomainError):
        exponent_fit(t[:5], t[:5])
    with pytest.raises(DomainError):
        exponent_fit(t, -t)
    with pytest.raises(DomainError):
        exponent_fit(t, t, "bootstrap")
    with pytest.raises(DomainError):
        exponent_fit(t, t, "exp")
