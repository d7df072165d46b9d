import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from qlwave.errors import ConstructionError, DomainError, SignatureError
from qlwave.geometry import tortoise_of_r
from qlwave.perturbation import schwarzschild_inverse
from qlwave.multiplier import (
    KillingField,
    MultiplierSpec,
    QuadraticFormSample,
    RadialField,
    SchwarzschildField,
    TangentialField,
    boundary_terms,
    bulk_matrix,
    default_spec,
    deformation_bulk,
    divergence_identity_check,
    farfield_f,
    full_bulk,
    positivity_audit,
    posS_weight,
    radial_closed_form,
    stress_energy,
    tangential_closed_form,
)

F = lambda r: 1 - 2 / r


def _sample(rng, lo, hi):
    r = rng.uniform(lo, hi)
    om = rng.normal(size=3)
    om /= np.linalg.norm(om)
    return r, r * om, rng.normal(size=4)


def test_stress_energy_trace_and_dominant_energy(rng):
    ginv = schwarzschild_inverse(1.0, np.array([0.0, 0.0, 5.0]))
    for _ in range(20):
        du = rng.normal(size=4)
        Q = stress_energy(ginv, du)
        assert np.allclose(Q, Q.T)
        # in four dimensions the trace is -|du|^2_g
        assert np.einsum("ab,ab->", ginv, Q) == pytest.approx(-du @ ginv @ du, abs=1e-12)
        # energy density along the static observer is nonnegative
        n = np.array([1 / np.sqrt(0.6), 0, 0, 0])
        assert n @ Q @ n >= -1e-12
    with pytest.raises(SignatureError):
        stress_energy(np.eye(4), np.ones(4))


def test_radial_bulk_matches_closed_form(rng):
    spec = default_spec()
    g = SchwarzschildField(1.0)
    A = lambda r: float(spec.a(np.array([r]), 1)[0][0])
    dA = lambda r: float(spec.a(np.array([r]), 1)[1][0])
    X = RadialField(lambda r: A(r) * F(r), lambda r: dA(r) * F(r) + 2 * A(r) / r ** 2)
    for _ in range(100):
        r, x, du = _sample(rng, 2.6, 500)
        ref = radial_closed_form(1.0, A(r), dA(r), x, du)
        assert abs(deformation_bulk(g, X, 0.0, x, du) - ref) <= 1e-10 * abs(ref)


def test_tangential_bulk_matches_closed_form(rng):
    d = 0.1
    g = SchwarzschildField(1.0)
    Y = TangentialField(1.0, lambda p: p ** -d, lambda p: -d * p ** (-d - 1))
    for _ in range(100):
        r, x, du = _sample(rng, 20, 500)
        t = tortoise_of_r(1.0, r) + rng.uniform(1, 300)
        ref = tangential_closed_form(1.0, -d * (t - tortoise_of_r(1.0, r)) ** (-d - 1), x, du)
        assert abs(deformation_bulk(g, Y, t, x, du) - ref) <= 1e-10 * abs(ref)


def test_killing_field_has_no_bulk(rng):
    g = SchwarzschildField(1.0)
    for _ in range(20):
        r, x, du = _sample(rng, 2.5, 80)
        assert abs(deformation_bulk(g, KillingField(2.0), 0.0, x, du)) < 1e-13


def test_bulk_matrix_matches_generic_evaluation(rng):
    spec = default_spec()
    g = SchwarzschildField(1.0)
    for _ in range(100):
        r, x, du = _sample(rng, 2.6, 90)
        u = rng.normal()
        om = x / r
        ur = om @ du[1:]
        ang = np.sqrt(max(du[1:] @ du[1:] - ur ** 2, 0.0))
        v = np.array([du[0], ur, ang, u])
        Q = bulk_matrix(spec, np.array([r]))[0]
        ref = full_bulk(g, spec, 0.0, x, du, u)
        assert abs(v @ Q @ v - ref) <= 1e-10 * max(abs(ref), 1e-300)


@given(st.floats(0.05, 0.5), st.floats(0.5, 1e4))
def test_farfield_f_against_direct_sum(delta, r):
    out = farfield_f(delta, np.array([r]), J=200)
    ref = sum(2.0 ** (-delta * j) * r / (r + 2.0 ** j) for j in range(200))
    assert out["f"][0] == pytest.approx(ref, rel=1e-12)
    assert 0 < out["fprime"][0]
    # f is bounded by the full geometric series
    assert out["f"][0] < 1.0 / (1 - 2.0 ** -delta)


def test_farfield_derivative_and_guards():
    r = np.geomspace(1, 1e3, 50)
    h = 1e-5 * r
    out = farfield_f(0.1, r, nderiv=2)
    fd = (farfield_f(0.1, r + h)["f"] - farfield_f(0.1, r - h)["f"]) / (2 * h)
    np.testing.assert_allclose(out["fprime"], fd, rtol=1e-6)
    fd2 = (farfield_f(0.1, r + h)["fprime"] - farfield_f(0.1, r - h)["fprime"]) / (2 * h)
    np.testing.assert_allclose(out["fsecond"], fd2, rtol=1e-5)
    with pytest.raises(DomainError):
        farfield_f(0.0, r)
    with pytest.raises(DomainError):
        farfield_f(0.1, r, J=10)
    with pytest.raises(DomainError):
        farfield_f(0.1, r, J=40, tol=1e-12)


def test_spec_validation():
    rep = default_spec().validate(n=4000)
    lo, hi = rep["a_prime_r2"]
    assert 0 < lo <= hi
    with pytest.raises(ConstructionError):
        default_spec(a_root=3.2).validate(n=4000)
    with pytest.raises(DomainError):
        MultiplierSpec(C_K=-1)
    with pytest.raises(DomainError):
        MultiplierSpec(R1=3.0)


def test_radial_coefficient_vanishes_at_photon_sphere():
    spec = default_spec()
    assert abs(spec.a(np.array([3.0]), 0)[0][0]) < 1e-12
    spec2 = default_spec(M=2.0)
    assert abs(spec2.a(np.array([6.0]), 0)[0][0]) < 1e-12


def test_default_audit_is_positive():
    rep = positivity_audit(default_spec(), np.linspace(1.9, 100, 2000))
    assert rep.positive
    assert len(rep.rows) == 2000


def test_broken_spec_fails_audit():
    rep = positivity_audit(default_spec(a_root=3.2), np.linspace(1.9, 100, 2000))
    assert not rep.positive


def test_audit_domain_guard():
    with pytest.raises(DomainError):
        positivity_audit(default_spec(), np.linspace(1.5, 10, 10))


def test_degenerate_slot_schur_complement():
    w = np.array([0.0, 1.0, 0.0, 1.0])
    Q = np.diag([2.0, 3.0, 1.0, 5.0])
    assert QuadraticFormSample(3.0, Q, w).relative_eigenvalue() == pytest.approx(3.0)
    Q[0, 0] = -1.0
    assert QuadraticFormSample(3.0, Q, w).relative_eigenvalue() == -np.inf
    with pytest.raises(DomainError):
        QuadraticFormSample(3.0, np.triu(np.ones((4, 4))), np.ones(4))


def test_posS_weight_degenerates_at_photon_sphere():
    W = posS_weight(1.0, np.array([3.0, 4.0]))
    assert W[0, 0] == 0 and W[0, 2] == 0 and W[1].min() > 0


def test_divergence_identity_second_order():
    spec = default_spec()
    u = lambda t, r: np.exp(-(r - 6) ** 2) * np.cos(0.3 * t)
    res = [divergence_identity_check(spec, u, 0, 4, 2.0, 12, n=n)["residual"] for n in (100, 200, 400)]
    assert np.log2(res[1] / res[2]) > 1.9


def test_divergence_identity_with_perturbation():
    spec = default_spec()
    u = lambda t, r: np.exp(-2 * (r - 4) ** 2) * np.sin(0.5 * t + 1)
    hh = lambda T, R: (0.01 * np.exp(-(R - 4) ** 2) * np.cos(T), 0.005 * np.exp(-(R - 4) ** 2),
                       0.01 * np.exp(-(R - 5) ** 2))
    res = [divergence_identity_check(spec, u, 0, 3, 1.95, 8, n=n, hh_func=hh)["residual"]
           for n in (100, 200, 400)]
    assert np.log2(res[1] / res[2]) > 1.9
    assert divergence_identity_check(spec, lambda t, r: 0 * r, 0, 1, 3, 4, n=20)["residual"] == 0.0


def test_boundary_terms_positive_slice_energy():
    spec = default_spec()
    r = np.linspace(2.0, 40, 4000)
    u = np.exp(-(r - 10) ** 2)
    ut = -2 * (r - 10) * u
    ur = -2 * (r - 10) * u
    rep = boundary_terms(spec, r, u, ut, ur)
    assert rep.signs["slice_positive"]
    assert rep.energy > 0
    E_ref = quad(lambda s: 0.5 * ((4 * (s - 10) ** 2 * np.exp(-2 * (s - 10) ** 2)) / F(s)
                                  + F(s) * 4 * (s - 10) ** 2 * np.exp(-2 * (s - 10) ** 2)) * s * s,
                 2.5, 40, points=[10])[0]
    assert rep.energy > 0.5 * E_ref
