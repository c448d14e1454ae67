"""Acceptance criteria A1-A13.

Each test records one "A<k> PASS|FAIL ..." line (printed immediately and
again in the terminal summary) and then asserts the criterion.  Set
RABIDPT_ACCEPT_FULL=1 to also run the long supplementary master-equation
checks for A11 (eta up to 1e5) and A13 (eta = 100 curves).
"""
import math
import os
import time

import numpy as np
import pytest

from rabidpt import adiabatic as ad
from rabidpt import langevin as lv
from rabidpt import lindblad as lb
from rabidpt import meanfield as mf
from rabidpt import scaling as sc
from rabidpt.core import Branch, ModelParams, critical_mu

from conftest import ACCEPTANCE_LINES
from oracles import dense_steady_state, landau_c, upp0

FULL = os.environ.get("RABIDPT_ACCEPT_FULL") == "1"
M, P = Branch.MINUS, Branch.PLUS


def report(k: int, ok: bool, detail: str) -> None:
    line = f"A{k} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def check_solve(res) -> bool:
    """Trace and positivity invariants of a steady-state solve."""
    return abs(np.trace(res.rho).real - 1) < 1e-10 and res.min_eigenvalue > -1e-8


def lang_tcp(eta, gamma1, mu=2.0):
    p = ModelParams(eta=eta, mu=mu, gamma1=gamma1)
    p = p.with_(g=lv.langevin_gc(p))
    return p.with_(gamma2=lv.langevin_tcp_gamma2(p))


# ---------------------------------------------------------------- A1

def test_a1_critical_constants():
    checks = [
        (mf.critical_coupling_gc(ModelParams(mu=2, gamma1=1)), math.sqrt(2)),
        (mf.tricritical_gamma2(ModelParams(mu=2, gamma1=1)), 1.0),
        (mf.critical_coupling_gc(ModelParams(mu=2, gamma1=0.1)), 1.7292),
        (mf.tricritical_gamma2(ModelParams(mu=2, gamma1=0.1)), 44.258),
    ]
    errs = [abs(a / b - 1) for a, b in checks]
    ok = max(errs) < 1e-3
    report(1, ok, "g_c, gamma2_c: " + ", ".join(f"{a:.5f}" for a, _ in checks) + f"; max rel err {max(errs):.1e}")
    assert ok


# ---------------------------------------------------------------- A2

def test_a2_landau_oracle():
    rng = np.random.default_rng(2)
    worst_c, worst_C = 0.0, 0.0
    for _ in range(1000):
        mu = rng.uniform(-3, 6)
        if abs(mu - 1) < 1e-2:
            continue
        g, g1, g2 = rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 50)
        eta, w0 = 10 ** rng.uniform(1, 5), rng.uniform(0.2, 5)
        for b in (M, P):
            p = ModelParams(omega0=w0, eta=eta, mu=mu, g=g, gamma1=g1, gamma2=g2)
            c = mf.landau_coeffs(p, b)
            ref = landau_c(mu, g, g1, g2, b.sign)
            for got, want in ((c[2], ref[0]), (c[4], ref[1])):
                worst_c = max(worst_c, abs(got - want) / max(1.0, abs(want)))
        C2 = lv.landau_C(p).C2
        ref = upp0(w0, eta, mu, g, g1, g2) / w0**2
        worst_C = max(worst_C, abs(C2 - ref) / max(1.0, abs(ref)))
    ok = worst_c <= 1e-12 and worst_C <= 1e-10
    report(2, ok, f"1000 draws: max |c - sympy| = {worst_c:.1e} (tol 1e-12); "
                  f"max |C2 - U''(0)| = {worst_C:.1e} (tol 1e-10)")
    assert ok


# ---------------------------------------------------------------- A3

def test_a3_b1_instability():
    rng = np.random.default_rng(3)
    n_ok, worst_det, worst_re = 0, -math.inf, math.inf
    for _ in range(100):
        g1 = rng.uniform(0.05, 2)
        p = ModelParams(mu=math.sqrt(1 + g1**2) * rng.uniform(1.02, 3), gamma1=g1, gamma2=0.0)
        assert p.mu > critical_mu(p)
        gc = mf.critical_coupling_gc(p)
        p = p.with_(g=gc * rng.uniform(1.05, 3))
        sz = -(gc / p.g) ** 2
        u = ((p.g / gc) ** 4 - 1) / (2 * p.g**2)
        x = math.sqrt(u)
        state = mf.MeanFieldState(x, p.gamma1 * x / (1 - p.mu), math.sqrt(2) * p.g * x * sz, 0.0, sz)
        assert np.abs(mf.mf_rhs(state, p)).max() < 1e-10
        fp = mf.stability(mf.FixedPoint(state), p, M)
        re = max(z.real for z in fp.jacobian_eigenvalues)
        worst_det, worst_re = max(worst_det, fp.det_jacobian), min(worst_re, re)
        n_ok += fp.det_jacobian < 0 and re > 0
    ok = n_ok == 100
    report(3, ok, f"{n_ok}/100 closed-form points with det J < 0 and Re(lambda) > 0 "
                  f"(max det {worst_det:.2e}, min max-Re {worst_re:.2e})")
    assert ok


# ---------------------------------------------------------------- A4

def test_a4_tetracritical_nonexistence():
    mus = np.linspace(1 + 1e-6, 10, 2000)
    rows = mf.tetracritical_scan(mus)
    worst = max(r.gamma1_sq_required for r in rows)
    ok = worst < 0 and not any(r.exists for r in rows)
    report(4, ok, f"mu in (1, 10], 2000 points: max required gamma1^2 = {worst:.3e} (< 0 required)")
    assert ok


# ---------------------------------------------------------------- A5

def test_a5_sparse_vs_dense():
    rng = np.random.default_rng(5)
    worst, invariants = 0.0, True
    for i in range(20):
        p = ModelParams(eta=10 ** rng.uniform(1, 3), mu=rng.uniform(-1, 3), g=rng.uniform(0, 2.5),
                        gamma1=rng.uniform(0.05, 1.5), gamma2=rng.uniform(0, 5))
        if i % 4 == 3:
            n_c = int(rng.integers(4, 9))
            L = lb.full_liouvillian(p, n_c, use_parity=False)
        else:
            n_c = int(rng.integers(6, 17))
            L = lb.branch_liouvillian(p, "-" if i % 2 else "+", n_c, use_parity=False)
        res = lb.steady_state(L, n_c=n_c)
        ref, _ = dense_steady_state(L.matrix)
        worst = max(worst, float(np.abs(res.rho - ref).max()))
        invariants &= check_solve(res)
    ok = worst < 1e-8 and invariants
    report(5, ok, f"20 random models, n_c <= 16: max |rho_sparse - rho_dense| = {worst:.1e}; "
                  f"trace/positivity {'hold' if invariants else 'VIOLATED'}")
    assert ok


# ---------------------------------------------------------------- A6

def test_a6_weak_z2():
    points = [ModelParams(eta=100, mu=2, gamma1=0.1, gamma2=44.258, g=1.7292)]
    rng = np.random.default_rng(6)
    for _ in range(9):
        points.append(ModelParams(eta=rng.uniform(10, 60), mu=rng.uniform(-1, 3), g=rng.uniform(0.2, 2),
                                  gamma1=rng.uniform(0.1, 1.5), gamma2=rng.uniform(0.5, 5)))
    worst, invariants = 0.0, True
    for p in points:
        res = lb.steady_state_full(p, 40 if p.eta == 100 else 24)
        worst = max(worst, res.observables["abs_a_mean"])
        invariants &= check_solve(res)
    ok = worst < 1e-7 and invariants
    report(6, ok, f"10 full-model points (incl. eta=100 TCP point): max |<a>| = {worst:.1e}")
    assert ok


# ---------------------------------------------------------------- A7

@pytest.mark.slow
def test_a7_branch_extraction():
    base = ModelParams(eta=250, mu=2, gamma1=0.1, gamma2=44.26)
    n_c, errs, invariants = 80, [], True
    for g in np.linspace(1.0, 2.0, 8):
        q = base.with_(g=float(g))
        full = lb.steady_state_full(q, n_c)
        branch = lb.steady_state_branch(q, M, n_c)
        invariants &= check_solve(full) and check_solve(branch)
        n_ext = lb.boson_observables(ad.extract_branches(full.rho, q, "exact").rho_minus)["n"]
        errs.append((float(g), n_ext, branch.observables["n"], n_ext / branch.observables["n"] - 1))
    ok = all(abs(e[3]) <= 0.02 for e in errs) and invariants
    detail = "; ".join(f"g={g:.3f}: {r:+.4f}" for g, _, _, r in errs)
    report(7, ok, f"eta=250, rel. err of extracted <n>_- vs branch solve (tol 2%): {detail}")
    assert ok


# ---------------------------------------------------------------- A8

@pytest.mark.slow
def test_a8_spin_weights():
    base = ModelParams(eta=250, mu=0, gamma1=1, gamma2=0.1)
    n_c, lines, ok = 60, [], True
    for g, regime in ((0.5, "NP"), (1.0, "NP"), (1.3, "near"), (1.4, "near"), (1.45, "SRP"), (1.5, "SRP")):
        q = base.with_(g=g)
        full = lb.steady_state_full(q, n_c)
        br = (lb.steady_state_branch(q, P, n_c), lb.steady_state_branch(q, M, n_c))
        d5 = ad.mixture_prediction(q, n_c, "D5", br)
        d6 = ad.mixture_prediction(q, n_c, "D6", br)
        nf, zf = full.observables["n"], full.observables["sz"]

        def good(m):
            return abs(m["n"] / nf - 1) <= 0.05 and abs(m["sz"] - zf) <= 0.05

        if regime == "SRP":
            ok &= good(d6)
        else:
            ok &= good(d5)
        lines.append(f"g={g}: full n={nf:.3f} D5 {d5['n'] / nf - 1:+.3f} D6 {d6['n'] / nf - 1:+.3f}")
    # documented D5 failure in the SRP
    d5_fails = abs(d5["n"] / nf - 1) > 0.05 or abs(d5["sz"] - zf) > 0.05 or np.sign(d5["sz"]) != np.sign(zf)
    ok &= bool(d5_fails)
    report(8, ok, "D5 within 5% below/near g_c, D6 within 5% in SRP, D5 fails in SRP "
                  f"({'shown' if d5_fails else 'NOT shown'}): " + "; ".join(lines))
    assert ok


# ---------------------------------------------------------------- A9

@pytest.mark.slow
def test_a9_langevin_vs_boltzmann():
    lines, ok = [], True
    tcp = lang_tcp(1e6, 0.03)
    cases = (("TCP", tcp), ("second-order", tcp.with_(gamma2=3 * tcp.gamma2)))
    for name, p in cases:
        q = lv.quadrature_observables(p)
        st = lv.simulate_ensemble(p, n_traj=32, dt=0.02, t_burn=200, t_max=20000, seed=0)
        zs = []
        for key, qk in (("dx2", "dx2"), ("dp2", "dp2")):
            m = st.moments[key]
            zs.append((m["mean"] - q[qk]) / m["se"])
        ok &= all(abs(z) <= 3 for z in zs)
        lines.append(f"{name}: dx2 {st.moments['dx2']['mean']:.2f} vs {q['dx2']:.2f} (z={zs[0]:+.2f}), "
                     f"dp2 {st.moments['dp2']['mean']:.4f} vs {q['dp2']:.4f} (z={zs[1]:+.2f})")
    fp = max(lv.fp_residual(p) for _, p in cases)
    ok &= fp < 1e-8
    report(9, ok, "; ".join(lines) + f"; FP residual {fp:.1e}")
    assert ok


# ---------------------------------------------------------------- A10

def test_a10_closed_forms():
    p = lang_tcp(1e3, 1e-6)
    p2 = lv.moments_quadrature(p, [(2, 0)])[(2, 0)]
    errs = {}
    t = lang_tcp(1e4, 0.1)
    errs["tricritical"] = lv.closed_form_moments(t, "TricriticalPoint")["x2"] / \
        lv.moments_quadrature(t, [(0, 2)], form="sextic-only")[(0, 2)] - 1
    qc = ModelParams(eta=1e4, mu=2, gamma1=1.0, gamma2=44.26)
    qc = qc.with_(g=lv.langevin_gc(qc))
    errs["quartic"] = lv.closed_form_moments(qc, "QuarticCritical")["x2"] / \
        lv.moments_quadrature(qc, [(0, 2)], form="quartic")[(0, 2)] - 1
    nc = qc.with_(g=math.sqrt(qc.g**2 + 0.01))
    errs["near-critical"] = lv.closed_form_moments(nc, "NearCritical")["x2"] / \
        lv.moments_quadrature(nc, [(0, 2)], form="quadratic")[(0, 2)] - 1
    ok = abs(p2 - 0.5) < 1e-6 and all(abs(e) < 1e-6 for e in errs.values())
    report(10, ok, f"<p^2> at Langevin TCP (gamma1=1e-6) = {p2:.9f}; closed form vs quadrature rel. err: "
                   + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


# ---------------------------------------------------------------- A11

def _me_slope(p, etas):
    dx2 = []
    for eta in etas:
        res = lb.steady_state_branch(p.with_(eta=eta), M, "auto")
        assert check_solve(res)
        dx2.append(res.observables["dx2"])
    return np.polyfit(np.log(etas), np.log(dx2), 1)[0], dx2


@pytest.mark.slow
def test_a11_exponents():
    etas = np.geomspace(1e3, 1e5, 9)
    so = ModelParams(eta=1e3, mu=2, gamma1=1.0, gamma2=44.26)
    so = so.with_(g=lv.langevin_gc(so))
    tcp = lang_tcp(1e3, 0.1)
    zeta_so = sc.zeta_report(sc.finite_size_scan(so, etas), "second_order").exponent
    zeta_tcp = sc.zeta_report(sc.finite_size_scan(tcp, etas), "tricritical").exponent
    # nu is a thermodynamic-limit exponent: the window must sit where dx2 << eta^zeta
    nu_p = lang_tcp(1e6, 1.5)
    nu = sc.critical_exponent_scan(nu_p, nu_p.g + np.geomspace(1e-4, 1e-2, 9), regime="tricritical").exponent
    quad_ok = abs(nu - 1) <= 0.05 and abs(zeta_so - 0.5) <= 0.02 and abs(zeta_tcp - 2 / 3) <= 0.02

    desk = [100.0, 200.0, 400.0, 800.0]
    t0 = time.time()
    me_tcp, _ = _me_slope(tcp, desk)
    me_so, _ = _me_slope(so, desk)
    me_ok = abs(me_tcp - 2 / 3) <= 0.08 and abs(me_so - 0.5) <= 0.08
    detail = (f"quadrature: nu={nu:.3f} (eta=1e6), eta in [1e3,1e5]: zeta(C4>0)={zeta_so:.3f}, zeta(C4=0)={zeta_tcp:.3f} "
              f"[{'ok' if quad_ok else 'out of tolerance'}]; master eq. eta in [100,800]: "
              f"zeta(C4=0)={me_tcp:.3f}, zeta(C4>0)={me_so:.3f} [{'ok' if me_ok else 'outside +-0.08'}, "
              f"{time.time() - t0:.0f}s]")
    if FULL:
        hi = list(np.geomspace(1e4, 1e5, 5))
        s_tcp, _ = _me_slope(tcp, hi)
        s_so, _ = _me_slope(so, hi[:4])
        detail += f"; master eq. eta in [1e4,1e5]: zeta(C4=0)={s_tcp:.3f}, zeta(C4>0)={s_so:.3f}"
    report(11, quad_ok and me_ok, detail)
    assert quad_ok and me_ok


# ---------------------------------------------------------------- A12

def test_a12_collapse():
    base = ModelParams(eta=1e4, mu=2, gamma1=0.1)
    samples = sc.collapse_dataset(base, [0.0, 0.2, 0.5], np.geomspace(1e4, 1e5, 4),
                                  np.geomspace(1e-5, 1e-1, 25), "quadrature")
    summ = sc.collapse_summary(samples, n_bins=20)
    failed = sum(s.status != "ok" for s in samples)
    ok = failed == 0 and len(summ) == 3
    parts = []
    for c in summ:
        good = (c.max_spread <= 0.05 and abs(c.tail_slope + 1) <= 0.05 and abs(c.plateau_slope) < 0.05
                and c.plateau_value is not None and math.isfinite(c.plateau_value) and c.plateau_value > 0)
        ok &= good
        parts.append(f"Lambda={c.Lambda:g}: spread {100 * c.max_spread:.2f}%, tail slope {c.tail_slope:.3f}, "
                     f"plateau slope {c.plateau_slope:+.4f} at F~{c.plateau_value:.3f}")
    report(12, ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- A13

def _jump_ratio(n):
    d = np.abs(np.diff(n))
    i = int(np.argmax(d))
    adj = [d[j] for j in (i - 1, i + 1) if 0 <= j < len(d)]
    return d[i] / max(max(adj), 1e-300), d[i]


def test_a13_morphology():
    base = ModelParams(eta=100, mu=2, gamma1=0.1)
    g2c, gc = mf.tricritical_gamma2(base), mf.critical_coupling_gc(base)
    G = gc + np.linspace(-0.004, 0.004, 41)
    ratios = {}
    for f in (0.5, 2.0):
        p = base.with_(gamma2=f * g2c)
        n = np.array([mf.classify_phase(p.with_(g=float(g)), M).n_mf for g in G])
        ratios[f] = _jump_ratio(n)
    ok = ratios[0.5][0] > 10 and ratios[2.0][0] < 10
    detail = (f"mean-field n(g) on g_c +- 0.004: 0.5 gamma2_c jump/adjacent = {ratios[0.5][0]:.1f} "
              f"(jump {ratios[0.5][1]:.4f}); 2 gamma2_c = {ratios[2.0][0]:.2f}")
    if FULL:
        Gm = np.linspace(1.3, 2.1, 17)
        for f in (0.5, 2.0):
            p = base.with_(gamma2=f * g2c)
            nme = [lb.steady_state_branch(p.with_(g=float(g)), M, "auto").observables["n"] / 100 for g in Gm]
            d = np.abs(np.diff(nme))
            detail += f"; master eq. eta=100 {f} gamma2_c max/median increment {d.max() / np.median(d):.2f}"
    report(13, ok, detail)
    assert ok
