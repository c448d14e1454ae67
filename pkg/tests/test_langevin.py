import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from rabidpt import langevin as lv
from rabidpt import meanfield as mf
from rabidpt.core import Branch, ModelParams
from rabidpt.errors import DegenerateMu, NormalizationOverflow, UnsupportedMoment, Unstable

from oracles import upp0

M = Branch.MINUS


def tcp_params(eta, gamma1=0.1, mu=2.0):
    p = ModelParams(eta=eta, mu=mu, gamma1=gamma1)
    p = p.with_(g=lv.langevin_gc(p))
    return p.with_(gamma2=lv.langevin_tcp_gamma2(p))


# ---------------------------------------------------------------- coefficients

def test_landau_C_definitions():
    p = ModelParams(eta=500, mu=2, gamma1=0.3, gamma2=5)
    assert abs(lv.landau_C(p.with_(g=lv.langevin_gc(p))).C2) < 1e-14
    q = p.with_(g=1.3)
    assert abs(lv.landau_C(q.with_(gamma2=lv.langevin_tcp_gamma2(q))).C4) < 1e-15
    assert lv.landau_C(p).T_eff == pytest.approx(0.25)
    with pytest.raises(DegenerateMu):
        lv.landau_C(p.with_(mu=1.0))


@given(eta=st.floats(10, 1e5), mu=st.floats(-3, 5), g=st.floats(0, 3), g1=st.floats(0, 2),
       g2=st.floats(0, 100), w0=st.floats(0.2, 5))
def test_upp0_equals_C2_symbolic(eta, mu, g, g1, g2, w0):
    assume(abs(mu - 1) > 1e-3)
    p = ModelParams(omega0=w0, eta=eta, mu=mu, g=g, gamma1=g1, gamma2=g2)
    C2 = lv.landau_C(p).C2
    assert upp0(w0, eta, mu, g, g1, g2) / w0**2 == pytest.approx(C2, rel=1e-10, abs=1e-10)
    assert lv.effective_force_dU(0.0, p) == 0.0


def test_upp0_finite_difference():
    p = ModelParams(eta=300, mu=2, g=1.2, gamma1=0.4, gamma2=3)
    h = 1e-5
    U = lambda x: lv.effective_potential_U(x, p, shifted=True)
    fd = (U(h) - 2 * U(0.0) + U(-h)) / h**2
    assert fd == pytest.approx(lv.landau_C(p).C2, rel=1e-5)


def test_force_matches_potential_derivative():
    p = ModelParams(eta=50, mu=2, g=1.2, gamma1=0.4, gamma2=3)
    for b in (M, Branch.PLUS):
        x = np.linspace(-4, 4, 17)
        h = 1e-5
        fd = (lv.effective_potential_U(x + h, p, b, shifted=True)
              - lv.effective_potential_U(x - h, p, b, shifted=True)) / (2 * h)
        assert np.allclose(lv.effective_force_dU(x, p, b), fd, rtol=1e-7, atol=1e-7)


def test_sextic_agrees_to_order_x8():
    p = ModelParams(eta=10, mu=2, g=1.1, gamma1=0.4, gamma2=2)
    d = lambda x: lv.effective_potential_U(x, p, shifted=True) - lv.effective_potential_U(x, p, form="sextic")
    r1 = d(0.4) / d(0.2)
    r2 = d(0.2) / d(0.1)
    assert abs(r2 - 256) < abs(r1 - 256) < 30  # Richardson: ratio -> 2^8


def test_potential_shape():
    p = ModelParams(eta=2500, mu=2, gamma1=0.1, gamma2=44.26)
    x = np.linspace(0, 60, 6001)
    below = lv.effective_potential_U(x, p.with_(g=1.6), shifted=True)
    above = lv.effective_potential_U(x, p.with_(g=1.9), shifted=True)
    assert below.argmin() > 0 and below.min() < 0
    assert above.argmin() == 0 and np.all(np.diff(above) > 0)


# ---------------------------------------------------------------- distributions

def test_boltzmann_normalization_and_symmetry():
    p = tcp_params(2500)
    sup = lv._support(p, M, "exact")
    xs = np.linspace(-sup.x_max, sup.x_max, 4001)
    ps = np.linspace(-12, 12, 2401)
    X, P = np.meshgrid(xs, ps, indexing="ij")
    W = lv.boltzmann_wigner(X, P, p)
    total = integrate.trapezoid(integrate.trapezoid(W, ps, axis=1), xs)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(W, lv.boltzmann_wigner(-X, -P, p), rtol=1e-9, atol=1e-300)
    wr, _ = integrate.quad(lambda x: lv.reduced_wigner(x, p), -sup.x_max, sup.x_max, epsrel=1e-12, limit=400)
    assert wr == pytest.approx(1.0, abs=1e-9)


def test_odd_moments_vanish():
    p = ModelParams(eta=1e4, mu=2, gamma1=0.2, gamma2=30, g=1.5)
    m = lv.moments_quadrature(p, [(0, 1), (1, 0), (0, 3), (1, 2), (2, 1)])
    scale = lv.moments_quadrature(p, [(0, 2)])[(0, 2)]
    for v in m.values():
        assert abs(v) < 1e-10 * max(1.0, scale)


def test_unsupported_and_overflow():
    p = tcp_params(1e4)
    with pytest.raises(UnsupportedMoment):
        lv.moments_quadrature(p, [(3, 0)])
    with pytest.raises(NormalizationOverflow):
        lv.moments_quadrature(ModelParams(eta=100, mu=2, gamma1=0.1, gamma2=0, g=1.0), [(0, 2)])


def test_p2_tends_to_half_at_tcp():
    dev = [abs(lv.moments_quadrature(tcp_params(eta, gamma1=g1), [(2, 0)])[(2, 0)] - 0.5)
           for eta, g1 in ((1e3, 1e-3), (1e3, 1e-4), (1e3, 1e-6))]
    assert dev[0] > dev[1] > dev[2]
    assert dev[2] < 1e-6


def test_tcp_closed_form_matches_sextic_quadrature():
    p = tcp_params(2500)
    cf = lv.closed_form_moments(p, "TricriticalPoint")
    q = lv.moments_quadrature(p, [(0, 2)], form="sextic-only")[(0, 2)]
    assert cf["x2"] == pytest.approx(q, rel=1e-6)
    exact = lv.moments_quadrature(p, [(0, 2)])[(0, 2)]
    assert cf["x2"] == pytest.approx(exact, rel=0.01)


def test_quartic_closed_form_matches_quartic_quadrature():
    p = ModelParams(eta=1e4, mu=2, gamma1=1.0, gamma2=44.26)
    p = p.with_(g=lv.langevin_gc(p))
    cf = lv.closed_form_moments(p, "QuarticCritical")
    q = lv.moments_quadrature(p, [(0, 2)], form="quartic")[(0, 2)]
    assert cf["x2"] == pytest.approx(q, rel=1e-6)
    a = p.gamma1**2 / (p.mu - 1) ** 2
    assert cf["n"] == pytest.approx(0.5 * (1 + a) * cf["x2"] - 0.25, rel=1e-14)


def test_near_critical_closed_form():
    p = ModelParams(eta=1e6, mu=2, gamma1=0.1)
    gc = lv.langevin_gc(p)
    cf = lv.closed_form_moments(p.with_(g=math.sqrt(gc**2 + 0.01)), "NearCritical")
    assert cf["x2"] == pytest.approx(25.0, rel=1e-10)
    bad = lv.closed_form_moments(p.with_(g=gc * 0.9), "NearCritical")
    assert bad["diagnostics"]
    with pytest.raises(ValueError):
        lv.closed_form_moments(p, "Bogus")


@pytest.mark.parametrize("dg2", [1e-4, 1e-3])
def test_mass_ratio_np(dg2):
    # r_f compares the fluctuations in excess of the vacuum value 1/2 of dp2
    p = tcp_params(1e6)
    p = p.with_(gamma2=3 * p.gamma2)
    q = lv.quadrature_observables(p.with_(g=math.sqrt(p.g**2 + dg2)))
    assert q["dx2"] / (q["dp2"] - 0.5) == pytest.approx(lv.mass_ratio(p), rel=0.2)


@pytest.mark.parametrize("params", [tcp_params(2500), tcp_params(1e5, gamma1=1.0),
                                    ModelParams(eta=1e3, mu=2, gamma1=0.2, gamma2=30, g=1.5),
                                    ModelParams(eta=50, mu=0.5, gamma1=0.7, gamma2=1, g=0.3)])
def test_fokker_planck_stationarity(params):
    assert lv.fp_residual(params) < 1e-8


# ---------------------------------------------------------------- SDE

def test_ou_limit():
    p = ModelParams(eta=1, mu=0, g=0, gamma1=1, gamma2=0)
    st_ = lv.simulate_ensemble(p, n_traj=32, dt=0.01, t_burn=10, t_max=300, seed=3)
    for k in ("x2", "p2"):
        m = st_.moments[k]
        assert abs(m["mean"] - 0.5) < 3 * m["se"] + 0.005  # + O(dt) Euler bias


def test_noise_off_stays_at_fixed_point():
    p = ModelParams(eta=1e4, mu=2, gamma1=0.1, gamma2=44.26, g=1.5)
    fp = [f for f in mf.fixed_points(p, M) if f.stable and f.state.xbar > 0][0]
    x0, p0 = math.sqrt(p.eta) * fp.state.xbar, math.sqrt(p.eta) * fp.state.pbar
    st_ = lv.simulate_ensemble(p, n_traj=16, dt=0.01, t_burn=0, t_max=50, noise=False, x0=x0, p0=p0)
    assert st_.moments["x"]["mean"] == pytest.approx(x0, rel=1e-8)
    assert st_.moments["x"]["se"] < 1e-12


def test_seed_determinism_and_batching():
    p = tcp_params(1e4)
    a = lv.simulate_ensemble(p, n_traj=16, dt=0.01, t_burn=1, t_max=5, seed=11)
    b = lv.simulate_ensemble(p, n_traj=16, dt=0.01, t_burn=1, t_max=5, seed=11, chunk=37)
    c = lv.simulate_ensemble(p, n_traj=16, dt=0.01, t_burn=1, t_max=5, seed=12)
    assert a.moments == b.moments
    assert a.moments != c.moments
    assert a.to_dict()["n_traj"] == 16


def test_sde_errors():
    p = tcp_params(1e4)
    with pytest.raises(ValueError):
        lv.simulate_ensemble(p, n_traj=8)
    runaway = ModelParams(eta=100, mu=2, gamma1=0.1, gamma2=0, g=0.5)
    with pytest.raises(Unstable):
        lv.simulate_ensemble(runaway, n_traj=16, dt=0.01, t_burn=0, t_max=200, x0=1.0)


def test_default_dt_positive():
    assert 0 < lv.default_dt(tcp_params(1e4)) < 0.005
