"""Semiclassical Langevin description of the branch models.

Units: time in 1/w0; kappa1 = gamma1 w0, kappa2 = gamma2 w0 / eta.  The
steady-state Wigner function takes the Boltzmann form

    W(x, p) = exp(-(v^2/2 + U(x)) / T_eff) / Z0,  v = -w0(mu-1)p - kappa1 x - kappa2 x^3,

with T_eff = w0^2 (mu-1)^2 / 4 and effective mass m = 1.  W is normalized
so that its integral over dx dp is 1; the reduced distribution W_R(x) is
its x-marginal (integral over dp, also unit-normalized).
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .core import Branch, ModelParams, raw_rates
from .errors import DegenerateMu, NormalizationOverflow, RegimeViolation, Unstable, UnsupportedMoment

TRUNCATION_KT = 40.0
QUAD_EPSREL = 1e-12
UNSTABLE_X = 1e6


@dataclass(frozen=True)
class EffectivePotentialParams:
    C2: float
    C4: float
    C6: float
    T_eff: float
    m: float = 1.0
    omega0: float = 1.0

    @property
    def beta1(self) -> float:
        return self.C4 / (4 * self.T_eff / self.omega0**2)

    @property
    def beta2(self) -> float:
        return self.C6 / (6 * self.T_eff / self.omega0**2)


def _check_mu(p: ModelParams):
    if p.mu == 1.0:
        raise DegenerateMu("T_eff vanishes at mu = 1")


def t_eff(p: ModelParams) -> float:
    _check_mu(p)
    return p.omega0**2 * (p.mu - 1) ** 2 / 4


def landau_C(p: ModelParams) -> EffectivePotentialParams:
    """C2, C4, C6 of the (-)-branch potential U(x) = sum_k (w0^2/2k) C_2k x^2k + O(x^8)."""
    _check_mu(p)
    mu, g, g1, g2, eta = p.mu, p.g, p.gamma1, p.gamma2, p.eta
    C2 = (1 - mu**2 + g1**2) + (mu - 1) * g**2
    C4 = (2 * g1 * g2 - (mu - 1) * g**4) / eta
    C6 = (g2**2 + 1.5 * (mu - 1) * g**6) / eta**2
    return EffectivePotentialParams(C2=C2, C4=C4, C6=C6, T_eff=t_eff(p), omega0=p.omega0)


def langevin_gc(p: ModelParams) -> float:
    """Coupling where C2 = 0: g^2 = (mu^2 - 1 - gamma1^2)/(mu - 1)."""
    _check_mu(p)
    g2 = (p.mu**2 - 1 - p.gamma1**2) / (p.mu - 1)
    if g2 < 0:
        raise RegimeViolation("C2 has no zero for real g at these mu, gamma1")
    return math.sqrt(g2)


def langevin_tcp_gamma2(p: ModelParams) -> float:
    """gamma2 with C4 = 0 at the current g (Langevin tricritical condition)."""
    if p.gamma1 == 0:
        raise RegimeViolation("C4 = 0 needs gamma1 > 0")
    return (p.mu - 1) * p.g**4 / (2 * p.gamma1)


def _vnl_shifted(x, p: ModelParams):
    """V_nl(x) - V_nl(0) without cancellation."""
    y = 2 * p.g**2 * np.asarray(x, dtype=float) ** 2 / p.eta
    return 0.5 * p.omega0 * p.eta * y / (np.sqrt(1 + y) + 1)


def effective_potential_U(x, p: ModelParams, b: Branch = Branch.MINUS, form: str = "exact",
                          shifted: bool = False):
    """Effective potential U(x).

    form="exact":  1/2 w0^2[(1-mu^2)+g1^2]x^2 + (w0^2/2eta)g1 g2 x^4 + (w0 g2)^2 x^6/(6eta^2) + s w0(mu-1)V_nl(x)
                   with s = +1 on the (-) branch and -1 on the (+) branch
    form="sextic": sum_k (w0^2/2k) C_2k x^2k (k = 1..3, (-) branch coefficients)
    form="quartic"/"sextic-only"/"quadratic": single-term truncations used by the
                   closed-form moments.
    shifted=True drops the constant s w0(mu-1)V_nl(0) so that U(0) = 0.
    """
    x = np.asarray(x, dtype=float)
    w0 = p.omega0
    form = form.lower()
    if form == "exact":
        s = -Branch.parse(b).sign  # (-) branch -> +V_nl
        base = (0.5 * w0**2 * (1 - p.mu**2 + p.gamma1**2) * x**2
                + w0**2 / (2 * p.eta) * p.gamma1 * p.gamma2 * x**4
                + (w0 * p.gamma2) ** 2 * x**6 / (6 * p.eta**2))
        vnl = _vnl_shifted(x, p)
        if not shifted:
            vnl = vnl + 0.5 * w0 * p.eta
        return base + s * w0 * (p.mu - 1) * vnl
    C = landau_C(p)
    terms = {"sextic": (1, 1, 1), "quadratic": (1, 0, 0), "quartic": (0, 1, 0), "sextic-only": (0, 0, 1)}
    if form not in terms:
        raise ValueError(f"unknown potential form {form!r}")
    k2, k4, k6 = terms[form]
    return w0**2 * (k2 * C.C2 * x**2 / 2 + k4 * C.C4 * x**4 / 4 + k6 * C.C6 * x**6 / 6)


def effective_force_dU(x, p: ModelParams, b: Branch = Branch.MINUS):
    """Analytic U'(x) of the exact potential."""
    x = np.asarray(x, dtype=float)
    w0 = p.omega0
    s = -Branch.parse(b).sign
    base = (w0**2 * (1 - p.mu**2 + p.gamma1**2) * x
            + 2 * w0**2 / p.eta * p.gamma1 * p.gamma2 * x**3
            + (w0 * p.gamma2) ** 2 * x**5 / p.eta**2)
    dvnl = w0 * p.g**2 * x / np.sqrt(2 * p.g**2 * x**2 / p.eta + 1)
    return base + s * w0 * (p.mu - 1) * dvnl


# ---------------------------------------------------------------------------
# normalization and quadrature


@dataclass(frozen=True)
class _Support:
    x_max: float
    u_min: float
    breakpoints: tuple
    Z: float  # integral of exp(-(U - u_min)/T) over the real line


def _assert_confining(p: ModelParams, b: Branch, form: str):
    if form != "exact" or p.gamma2 > 0:
        return
    a2 = 1 - p.mu**2 + p.gamma1**2
    s = -Branch.parse(b).sign
    lin = s * (p.mu - 1)
    if a2 < 0 or (a2 == 0 and lin < 0):
        raise NormalizationOverflow("U(x) is unbounded below (gamma2 = 0 in the inverted regime)")


@functools.lru_cache(maxsize=256)
def _support(p: ModelParams, b: Branch, form: str) -> _Support:
    _check_mu(p)
    _assert_confining(p, b, form)
    T = t_eff(p)
    U = lambda x: effective_potential_U(x, p, b, form, shifted=True)
    # grow until U rises TRUNCATION_KT * T above every value seen so far
    x = 1e-6
    u_min = 0.0
    while True:
        ux = float(U(x))
        if not math.isfinite(ux) or x > 1e150:
            raise NormalizationOverflow("U(x) does not confine on |x| < 1e150")
        if ux - u_min > TRUNCATION_KT * T:
            grid = np.linspace(0.0, x, 4001)
            vals = U(grid)
            i = int(np.argmin(vals))
            if vals[i] < u_min - 1e-300 or i > 0:
                lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
                res = optimize.minimize_scalar(U, bounds=(lo, hi), method="bounded",
                                               options={"xatol": 1e-12 * max(hi, 1e-300)})
                cand = min(float(res.fun), float(vals[i]))
                x_star = float(res.x) if res.fun <= vals[i] else float(grid[i])
            else:
                cand, x_star = float(vals[i]), 0.0
            if cand < u_min:
                u_min = cand
            if ux - u_min > TRUNCATION_KT * T:
                break
        x *= 1.5
    f = lambda y: float(U(y)) - u_min - TRUNCATION_KT * T
    lo = max(x_star, 0.0)
    if f(lo) >= 0:
        lo = 0.0
    x_max = optimize.brentq(f, lo, x, xtol=1e-14 * x)
    bps = tuple(sorted({0.0, x_star})) if x_star > 0 else (0.0,)
    Z = 2 * _integrate_half(lambda y: np.exp(-(U(y) - u_min) / T), x_max, bps)
    if not (Z > 0 and math.isfinite(Z)):
        raise NormalizationOverflow("normalization integral is not finite")
    return _Support(x_max=x_max, u_min=u_min, breakpoints=bps, Z=Z)


def _integrate_half(f, x_max, bps):
    edges = [e for e in bps if 0 <= e < x_max] + [x_max]
    edges = sorted(set(edges))
    if edges[0] != 0.0:
        edges = [0.0] + edges
    total = 0.0
    for a, c in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, c, epsabs=0.0, epsrel=QUAD_EPSREL, limit=500)
        total += val
    return total


def reduced_wigner(x, p: ModelParams, b: Branch = Branch.MINUS, form: str = "exact"):
    """W_R(x) = exp(-U(x)/T_eff)/Z0', normalized on the real line."""
    b = Branch.parse(b)
    sup = _support(p, b, form)
    T = t_eff(p)
    return np.exp(-(effective_potential_U(x, p, b, form, shifted=True) - sup.u_min) / T) / sup.Z


def momentum_mean(x, p: ModelParams):
    """Conditional mean of p at fixed x: p_bar = -(gamma1 x + gamma2 x^3/eta)/(mu-1)."""
    _check_mu(p)
    x = np.asarray(x, dtype=float)
    return -(p.gamma1 * x + p.gamma2 * x**3 / p.eta) / (p.mu - 1)


def boltzmann_wigner(x, p_coord, p: ModelParams, b: Branch = Branch.MINUS, form: str = "exact"):
    """W(x, p); the conditional distribution of p is Gaussian with variance 1/4."""
    x = np.asarray(x, dtype=float)
    pc = np.asarray(p_coord, dtype=float)
    var = t_eff(p) / (p.omega0 * (p.mu - 1)) ** 2
    gauss = np.exp(-(pc - momentum_mean(x, p)) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    return reduced_wigner(x, p, b, form) * gauss


def moments_quadrature(p: ModelParams, moments: Iterable[tuple], b: Branch = Branch.MINUS,
                       form: str = "exact") -> dict:
    """<p^k x^m> (symmetric ordering) from the Hermite representation.

    (i/2sqrt2)^k H_k(i y) with y = sqrt2 (g1 x + g2 x^3/eta)/(mu-1) reduces to
    1, p_bar(x), p_bar(x)^2 + 1/4 for k = 0, 1, 2.
    """
    b = Branch.parse(b)
    sup = _support(p, b, form)
    T = t_eff(p)
    out = {}
    for k, m in moments:
        if k not in (0, 1, 2) or m < 0:
            raise UnsupportedMoment(f"<p^{k} x^{m}> is not supported (k must be 0, 1 or 2)")

        def weight(y, k=k, m=m):
            pb = momentum_mean(y, p)
            hk = 1.0 if k == 0 else (pb if k == 1 else pb**2 + 0.25)
            return y**m * hk * np.exp(-(effective_potential_U(y, p, b, form, shifted=True) - sup.u_min) / T)

        pos = _integrate_half(weight, sup.x_max, sup.breakpoints)
        neg = _integrate_half(lambda y: weight(-y), sup.x_max, sup.breakpoints)
        out[(k, m)] = (pos + neg) / sup.Z
    return out


def quadrature_observables(p: ModelParams, b: Branch = Branch.MINUS, form: str = "exact") -> dict:
    mom = moments_quadrature(p, [(0, 1), (1, 0), (0, 2), (2, 0), (0, 4)], b, form)
    x2, p2 = mom[(0, 2)], mom[(2, 0)]
    return dict(x_mean=mom[(0, 1)], p_mean=mom[(1, 0)], x2=x2, p2=p2, x4=mom[(0, 4)],
                dx2=x2 - mom[(0, 1)] ** 2, dp2=p2 - mom[(1, 0)] ** 2, n=(x2 + p2 - 1) / 2)


# ---------------------------------------------------------------------------
# closed forms


REGIMES = ("NearCritical", "QuarticCritical", "TricriticalPoint")


def closed_form_moments(p: ModelParams, regime: str, strict: bool = False) -> dict:
    """Asymptotic moments of W_R for a single dominant term of U.

    NearCritical:      <x^2> = (mu-1)/(4(g^2-g_c^2)),  <p^2> = 1/4
    QuarticCritical:   <x^2> = Gamma(3/4)/Gamma(1/4) beta1^{-1/2}
    TricriticalPoint:  <x^2> = sqrt(pi)/Gamma(1/6) beta2^{-1/3},  <p^2> = 1/2
    The returned "diagnostics" list flags parameter orderings that violate the
    regime; strict=True raises RegimeViolation instead.
    """
    C = landau_C(p)
    T = C.T_eff / p.omega0**2
    diag = []
    a = p.gamma1**2 / (p.mu - 1) ** 2
    if regime == "NearCritical":
        if C.C2 <= 0:
            diag.append("C2 <= 0: quadratic term is not confining")
            x2 = math.nan
        else:
            x2 = T / C.C2  # = (mu-1)/(4(g^2-g_c^2))
            if abs(C.C4) * 3 * x2**2 / 4 > 0.1 * C.C2 * x2 / 2:
                diag.append("C2 not dominant over the quartic term")
        p2 = 0.25
        n = x2 / 2 - 3 / 8
    elif regime == "QuarticCritical":
        if C.C4 <= 0:
            diag.append("C4 <= 0: quartic term is not confining")
            x2 = math.nan
        else:
            x2 = special.gamma(0.75) / special.gamma(0.25) * C.beta1 ** -0.5
            if abs(C.C2) * x2 / 2 > 0.1 * C.C4 * 3 * x2**2 / 4:
                diag.append("C2 not negligible against the quartic term")
        p2 = a * x2 + 0.5
        n = 0.5 * (1 + a) * x2 - 0.25
    elif regime == "TricriticalPoint":
        x2 = math.sqrt(math.pi) / special.gamma(1 / 6) * C.beta2 ** (-1 / 3)
        if abs(C.C4) * 3 * x2**2 / 4 > 0.1 * C.C6 * 15 * x2**3 / 6:
            diag.append("C4 not negligible against the sextic term")
        if abs(C.C2) * x2 / 2 > 0.1 * C.C6 * 15 * x2**3 / 6:
            diag.append("C2 not negligible against the sextic term")
        p2 = 0.5
        n = 0.5 * x2 - 0.25
    else:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if diag and strict:
        raise RegimeViolation("; ".join(diag))
    return dict(x2=x2, p2=p2, n=n, diagnostics=diag)


def mass_ratio(p: ModelParams) -> float:
    """r_f = (1-mu)^2/gamma1^2, validity diagnostic for dropping p^2 terms."""
    return math.inf if p.gamma1 == 0 else (1 - p.mu) ** 2 / p.gamma1**2


# ---------------------------------------------------------------------------
# Fokker-Planck check


def fp_residual(p: ModelParams, b: Branch = Branch.MINUS, x_grid=None, v_grid=None, h_rel: float = 1e-3) -> float:
    """Max relative residual of the stationary (x, v) Fokker-Planck equation for W.

    Generator:  -v dW/dx + d/dv[(U'/m + G v)W] + (T/m) G d^2W/dv^2,
    G = 2(kappa1 + 2 kappa2 x^2).  The derivatives of W come from 5-point
    finite differences of log W (smooth, so the stencil error stays near
    round-off): dW = W d(log W), d^2W = W (d^2 log W + (d log W)^2).  The
    residual is normalized by the analytic magnitude W (G(1 + v^2/T) + |v U'|/T)
    of the individual terms, which cancel identically.
    """
    b = Branch.parse(b)
    T = t_eff(p)
    _, _, k1, k2 = raw_rates(p)
    sup = _support(p, b, "exact")
    sv = math.sqrt(T)
    if x_grid is None:
        x_grid = np.linspace(-0.9, 0.9, 37) * sup.x_max
    if v_grid is None:
        v_grid = np.linspace(-4, 4, 33) * sv
    X, V = np.meshgrid(np.asarray(x_grid, float), np.asarray(v_grid, float), indexing="ij")

    # log W = lv_part(v) + lx_part(x); each is differenced on its own so that the
    # large potential offset does not enter the v-derivatives
    lx_part = lambda x: -effective_potential_U(x, p, b, shifted=True) / T
    lv_part = lambda v: -v**2 / (2 * T)

    hx = h_rel * sup.x_max
    hv = h_rel * sv
    d1 = lambda f, h: (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)
    d2 = lambda f, h: (-f(-2 * h) + 16 * f(-h) - 30 * f(0.0) + 16 * f(h) - f(2 * h)) / (12 * h**2)
    W = np.exp(lv_part(V) + lx_part(X) + sup.u_min / T)
    lx = d1(lambda s: lx_part(X + s), hx)
    lv = d1(lambda s: lv_part(V + s), hv)
    lvv = d2(lambda s: lv_part(V + s), hv)
    G = 2 * (k1 + 2 * k2 * X**2)
    F = effective_force_dU(X, p, b)
    t1 = -V * W * lx
    t2 = G * W + (F + G * V) * W * lv
    t3 = T * G * W * (lvv + lv**2)
    ref = W * (G * (1 + V**2 / T) + np.abs(V * F) / T)
    mask = ref > 1e-250
    return float(np.max(np.abs(t1 + t2 + t3)[mask] / ref[mask]))


# ---------------------------------------------------------------------------
# stochastic integration


@dataclass
class EnsembleStats:
    n_traj: int
    dt: float
    t_burn: float
    t_max: float
    seed: int
    moments: dict = field(default_factory=dict)  # name -> {"mean": value, "se": standard error}
    branch: str = "MINUS"

    def to_dict(self) -> dict:
        return asdict(self)


def drift(x, pc, p: ModelParams, b: Branch = Branch.MINUS):
    """Deterministic part of the (x, p) Langevin equations."""
    w0 = p.omega0
    _, _, k1, k2 = raw_rates(p)
    s = -Branch.parse(b).sign
    r2 = x**2 + pc**2
    fnl = w0 * p.g**2 * x / np.sqrt(2 * p.g**2 * x**2 / p.eta + 1)
    ax = -w0 * (p.mu - 1) * pc - k1 * x - k2 * r2 * x
    ap = -w0 * (p.mu + 1) * x + s * fnl - k1 * pc - k2 * r2 * pc
    return ax, ap


def default_dt(p: ModelParams) -> float:
    _, _, k1, k2 = raw_rates(p)
    try:
        x2 = closed_form_moments(p, "TricriticalPoint")["x2"]
    except Exception:
        x2 = 1.0
    if not math.isfinite(x2):
        x2 = 1.0
    return 0.005 / max(p.omega0 * (1 + abs(p.mu)), k1 + k2 * x2)


def simulate_ensemble(p: ModelParams, b: Branch = Branch.MINUS, n_traj: int = 64, dt: Optional[float] = None,
                      t_burn: float = 100.0, t_max: float = 1000.0, seed: int = 0, noise: bool = True,
                      x0: float | Sequence[float] = 0.0, p0: float | Sequence[float] = 0.0,
                      chunk: int = 2000) -> EnsembleStats:
    """Euler-Maruyama (Ito) integration of the (x, p) Langevin equations.

    Noise: dx += sqrt(k1) dW1p + sqrt(2k2)(x dW2p - p dW2x),
           dp += -sqrt(k1) dW1x - sqrt(2k2)(x dW2x + p dW2p).
    Each trajectory draws from its own generator spawned from SeedSequence(seed),
    so results do not depend on batching.  Time averages after t_burn are the
    per-trajectory batch means; standard errors are std(batch means)/sqrt(n_traj).
    """
    if n_traj < 16:
        raise ValueError("n_traj must be >= 16 for batch-mean errors")
    b = Branch.parse(b)
    dt = default_dt(p) if dt is None else float(dt)
    _, _, k1, k2 = raw_rates(p)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_traj)]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (n_traj,)).copy()
    pc = np.broadcast_to(np.asarray(p0, dtype=float), (n_traj,)).copy()
    n_burn = int(round(t_burn / dt))
    n_total = n_burn + int(round(t_max / dt))
    sq1, sq2, sdt = math.sqrt(k1), math.sqrt(2 * k2), math.sqrt(dt)
    acc = {k: np.zeros(n_traj) for k in ("x", "p", "x2", "p2", "x4")}
    n_acc = 0
    step = 0
    while step < n_total:
        m = min(chunk, n_total - step)
        if noise:
            dW = np.stack([r.standard_normal((m, 4)) for r in rngs], axis=1) * sdt  # (m, n_traj, 4)
        for j in range(m):
            ax, ap = drift(x, pc, p, b)
            if noise:
                w1x, w1p, w2x, w2p = dW[j, :, 0], dW[j, :, 1], dW[j, :, 2], dW[j, :, 3]
                nx = sq1 * w1p + sq2 * (x * w2p - pc * w2x)
                np_ = -sq1 * w1x - sq2 * (x * w2x + pc * w2p)
                x, pc = x + ax * dt + nx, pc + ap * dt + np_
            else:
                x, pc = x + ax * dt, pc + ap * dt
            if step + j >= n_burn:
                x2 = x * x
                acc["x"] += x
                acc["p"] += pc
                acc["x2"] += x2
                acc["p2"] += pc * pc
                acc["x4"] += x2 * x2
                n_acc += 1
        step += m
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > UNSTABLE_X:
            raise Unstable(f"trajectory escaped |x| > {UNSTABLE_X:g} before t = {step * dt:g}")
    if n_acc == 0:
        raise ValueError("t_max must cover at least one step")
    moments = {}
    batch = {k: v / n_acc for k, v in acc.items()}
    for k, v in batch.items():
        moments[k] = dict(mean=float(np.mean(v)), se=float(np.std(v, ddof=1) / math.sqrt(n_traj)))
    # fluctuations about the ensemble mean (weak Z2 gives <x> -> 0)
    for q, q2 in (("x", "x2"), ("p", "p2")):
        d = batch[q2] - np.mean(batch[q]) ** 2
        moments["d" + q2] = dict(mean=float(np.mean(d)), se=float(np.std(d, ddof=1) / math.sqrt(n_traj)))
    return EnsembleStats(n_traj=n_traj, dt=dt, t_burn=t_burn, t_max=t_max, seed=seed, moments=moments,
                         branch=b.name)
