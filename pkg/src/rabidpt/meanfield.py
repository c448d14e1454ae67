"""Mean-field fixed points, Landau expansion and phase classification.

Variables are the normalized boson quadratures (xbar, pbar), with
xbar = <a + a^dag>/sqrt(2 eta), and the spin expectations (sx, sy, sz).
On a fixed point the spin is slaved to the boson,

    sy = 0,  sz = s G(u),  sx = sqrt(2) g xbar sz,  G(u) = (2 g^2 u + 1)^(-1/2)

with u = xbar^2 and s = +1/-1 the branch sign.  Eliminating pbar gives a
scalar equation phi(u) = 0 with

    k(u)   = (1 - mu) [-(1 + mu) - s g^2 G(u)]
    u_p    = u k(u) / (1 - mu)^2
    phi(u) = (gamma1 + gamma2 (u + u_p))^2 - k(u)

and pbar = A xbar / (1 - mu), A = gamma1 + gamma2 (u + u_p).  The Landau
function is F(x) = int_0^{x^2} phi(u) du, so F'(x) = 2 x phi(x^2).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize, special

from .core import Branch, ModelParams, critical_mu
from .errors import (
    DegenerateDenominator,
    DivergentCritical,
    NoCoexistence,
    NoConvergence,
    OutsideInvertedRegime,
    RabiError,
    SingularElimination,
)

TOL_STAB = 1e-9
SQRT2 = math.sqrt(2.0)


class Phase(enum.Enum):
    NP = "NP"
    SRP = "SRP"
    # no stable fixed point at all (possible only without two-photon decay)
    UNSTABLE = "UNSTABLE"
    FAILED = "Failed"


class Order(enum.Enum):
    FIRST = "First"
    SECOND = "Second"
    TRICRITICAL = "Tricritical"


@dataclass(frozen=True)
class MeanFieldState:
    xbar: float
    pbar: float
    sx: float
    sy: float
    sz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.xbar, self.pbar, self.sx, self.sy, self.sz])

    @classmethod
    def from_array(cls, v) -> "MeanFieldState":
        return cls(*(float(c) for c in v))

    @property
    def spin_norm2(self) -> float:
        return self.sx**2 + self.sy**2 + self.sz**2


@dataclass
class FixedPoint:
    state: MeanFieldState
    stable: Optional[bool] = None
    jacobian_eigenvalues: list = field(default_factory=list)
    slow_eigenvalues: list = field(default_factory=list)
    fast_growth: float = float("nan")
    det_jacobian: float = float("nan")

    @property
    def n_mf(self) -> float:
        return 0.5 * (self.state.xbar**2 + self.state.pbar**2)

    @property
    def trivial(self) -> bool:
        return self.state.xbar == 0.0 and self.state.pbar == 0.0


@dataclass(frozen=True)
class LandauCoeffs:
    branch: Branch
    order: int
    c: dict  # power 2n -> c_{2n}

    def __getitem__(self, power: int) -> float:
        return self.c.get(power, 0.0)

    def polynomial(self) -> Polynomial:
        deg = max(self.c)
        coef = np.zeros(deg + 1)
        for k, v in self.c.items():
            coef[k] = v
        return Polynomial(coef)


@dataclass
class PhasePoint:
    mu: float
    g: float
    phase_minus: Phase
    phase_plus: Phase
    n_mf_minus: float = float("nan")
    n_mf_plus: float = float("nan")
    transition_order_nearby: Optional[Order] = None
    status: str = "ok"


# ---------------------------------------------------------------------------
# equations of motion


def mf_rhs(s: MeanFieldState | np.ndarray, p: ModelParams) -> np.ndarray:
    """Time derivatives (dx, dp, dsx, dsy, dsz) of the mean-field equations."""
    x, pb, sx, sy, sz = s.as_array() if isinstance(s, MeanFieldState) else np.asarray(s, float)
    w0 = p.omega0
    Om = p.eta * p.omega0
    r = x * x + pb * pb
    return np.array([
        w0 * ((1 - p.mu) * pb - p.gamma1 * x - p.gamma2 * r * x),
        w0 * (-(1 + p.mu) * x - p.g / SQRT2 * sx - p.gamma1 * pb - p.gamma2 * r * pb),
        -Om * sy,
        Om * (sx - SQRT2 * p.g * x * sz),
        Om * SQRT2 * p.g * x * sy,
    ])


def _reduced_rhs(v, p: ModelParams, sign: int) -> np.ndarray:
    x, pb, sx, sy = v
    sz = sign * math.sqrt(max(1.0 - sx * sx - sy * sy, 0.0))
    return mf_rhs(np.array([x, pb, sx, sy, sz]), p)[:4]


def reduced_jacobian(state: MeanFieldState, p: ModelParams, b: Branch, method="analytic", h=1e-6):
    """Jacobian of (x, p, sx, sy) with sz eliminated on branch b."""
    x, pb, sx, sy, sz = state.as_array()
    if abs(sz) < 1e-8:
        raise SingularElimination("|s_z| < 1e-8: elimination of s_z ill-defined")
    if method == "fd":
        v0 = np.array([x, pb, sx, sy])
        J = np.empty((4, 4))
        for j in range(4):
            dv = np.zeros(4)
            dv[j] = h
            J[:, j] = (_reduced_rhs(v0 + dv, p, b.sign) - _reduced_rhs(v0 - dv, p, b.sign)) / (2 * h)
        return J
    w0, Om, g = p.omega0, p.eta * p.omega0, p.g
    g1, g2, mu = p.gamma1, p.gamma2, p.mu
    dsz_dsx, dsz_dsy = -sx / sz, -sy / sz
    J = np.zeros((4, 4))
    J[0, 0] = w0 * (-g1 - g2 * (3 * x * x + pb * pb))
    J[0, 1] = w0 * ((1 - mu) - 2 * g2 * x * pb)
    J[1, 0] = w0 * (-(1 + mu) - 2 * g2 * x * pb)
    J[1, 1] = w0 * (-g1 - g2 * (x * x + 3 * pb * pb))
    J[1, 2] = -w0 * g / SQRT2
    J[2, 3] = -Om
    J[3, 0] = -Om * SQRT2 * g * sz
    J[3, 2] = Om * (1 - SQRT2 * g * x * dsz_dsx)
    J[3, 3] = -Om * SQRT2 * g * x * dsz_dsy
    return J


def split_modes(ev: np.ndarray, ratio: float = 10.0, Omega: Optional[float] = None):
    """Split eigenvalues into (slow, fast); fast = spin-precession pair near +/- i Omega.

    With Omega given, the fast pair is the complex-conjugate pair of largest
    |Im| when both members have |Im| > Omega/2.  Otherwise the split is made
    only when the two largest moduli exceed `ratio` times the others; if
    neither rule applies every mode counts as slow.
    """
    ev = np.asarray(ev)
    if len(ev) == 4 and Omega is not None:
        order = np.argsort(-np.abs(ev.imag))
        top = ev[order[:2]]
        if np.all(np.abs(top.imag) > 0.5 * Omega) and np.sign(top[0].imag) != np.sign(top[1].imag):
            return ev[order[2:]], top
    order = np.argsort(np.abs(ev))
    ev = ev[order]
    if len(ev) == 4 and abs(ev[1]) > 0 and abs(ev[2]) > ratio * abs(ev[1]):
        return ev[:2], ev[2:]
    if len(ev) == 4 and abs(ev[1]) == 0 and abs(ev[2]) > 0:
        return ev[:2], ev[2:]
    return ev, ev[:0]


def stability(fp: FixedPoint, p: ModelParams, b: Branch, method="analytic", tol=TOL_STAB) -> FixedPoint:
    """Linear stability on the slow (boson) manifold.

    The spin-precession pair sits at +/- i Omega with a real part of order
    1e-11 Omega whose sign follows (mu - 1); it is a non-adiabatic effect
    outside the branch description and is reported in fp.fast_growth
    without entering the stability decision.
    """
    J = reduced_jacobian(fp.state, p, b, method=method)
    ev = np.linalg.eigvals(J)
    slow, fast = split_modes(ev, Omega=p.eta * p.omega0)
    fp.jacobian_eigenvalues = sorted(ev.tolist(), key=lambda z: -z.real)
    fp.slow_eigenvalues = sorted(slow.tolist(), key=lambda z: -z.real)
    fp.fast_growth = float(fast.real.max()) if len(fast) else float("nan")
    fp.det_jacobian = float(np.linalg.det(J))
    fp.stable = bool(np.all(slow.real < -tol))
    return fp


# ---------------------------------------------------------------------------
# scalar reduction


def _G(u, g):
    return 1.0 / np.sqrt(2 * g * g * u + 1.0)


def _k(u, p: ModelParams, sign: int):
    return (1 - p.mu) * (-(1 + p.mu) - sign * p.g**2 * _G(u, p.g))


def phi(u, p: ModelParams, b: Branch):
    """h(u)/u; zero on nontrivial fixed points, phi(0) = c_2."""
    u = np.asarray(u, float)
    k = _k(u, p, b.sign)
    up = u * k / (1 - p.mu) ** 2
    return (p.gamma1 + p.gamma2 * (u + up)) ** 2 - k


def h_function(u, p: ModelParams, b: Branch):
    return np.asarray(u, float) * phi(u, p, b)


def _lift(u: float, p: ModelParams, b: Branch, sign_x: int) -> MeanFieldState:
    k = float(_k(u, p, b.sign))
    up = u * k / (1 - p.mu) ** 2
    A = p.gamma1 + p.gamma2 * (u + up)
    x = sign_x * math.sqrt(u)
    sz = b.sign * float(_G(u, p.g))
    return MeanFieldState(x, A * x / (1 - p.mu), SQRT2 * p.g * x * sz, 0.0, sz)


def trivial_state(b: Branch) -> MeanFieldState:
    return MeanFieldState(0.0, 0.0, 0.0, 0.0, float(b.sign))


def u_roots(p: ModelParams, b: Branch, n_grid=400, u_max=None) -> list[float]:
    """Positive roots of phi by sign-change bracketing on a geometric grid."""
    if p.mu == 1.0:
        return []
    if u_max is None:
        u_max = 1e3 * max(1.0, 1.0 / max(p.g, 1e-300) ** 2)
    grid = np.concatenate([[0.0], np.geomspace(1e-8, u_max, n_grid)])
    vals = phi(grid, p, b)
    scale = max(1.0, float(np.max(np.abs(vals[np.isfinite(vals)]))))
    roots = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if flo == 0.0 and lo > 0:
            roots.append(float(lo))
            continue
        if flo * fhi >= 0:
            continue
        try:
            r, info = optimize.brentq(
                phi, lo, hi, args=(p, b), xtol=1e-15, rtol=4 * np.finfo(float).eps,
                maxiter=200, full_output=True,
            )
        except (RuntimeError, ValueError) as exc:
            raise NoConvergence(str(exc), bracket=(lo, hi)) from exc
        if not info.converged or abs(phi(r, p, b)) * r > 1e-12 * scale * max(r, 1.0):
            raise NoConvergence("root polish failed", bracket=(lo, hi))
        if r > 1e-14:
            roots.append(float(r))
    return roots


def fixed_points(p: ModelParams, b: Branch, with_stability=True, **kw) -> list[FixedPoint]:
    """Trivial point plus both-sign lifts of every positive root of phi."""
    b = Branch.parse(b)
    fps = [FixedPoint(trivial_state(b))]
    for u in u_roots(p, b, **kw):
        for sx in (1, -1):
            fps.append(FixedPoint(_lift(u, p, b, sx)))
    if with_stability:
        for fp in fps:
            stability(fp, p, b)
    return fps


# ---------------------------------------------------------------------------
# Landau coefficients


def binomial_coeffs(g: float, N: int) -> np.ndarray:
    """Taylor coefficients b_n of (2 g^2 u + 1)^(-1/2), n = 0..N."""
    n = np.arange(N + 1)
    return special.binom(-0.5, n) * (2 * g * g) ** n


def landau_coeffs(p: ModelParams, b: Branch, N: int = 1) -> LandauCoeffs:
    if N < 1:
        raise ValueError("expansion order N must be >= 1")
    b = Branch.parse(b)
    if p.mu == 1.0:
        raise DivergentCritical("Landau expansion undefined at mu = 1")
    G = Polynomial(binomial_coeffs(p.g, N))
    k = (1 - p.mu) * (-(1 + p.mu) - b.sign * p.g**2 * G)
    u = Polynomial([0.0, 1.0])
    A = p.gamma1 + p.gamma2 * u * (1 + k / (1 - p.mu) ** 2)
    a = (A**2 - k).coef
    c = {2 * (n + 1): float(a[n]) / (n + 1) for n in range(len(a))}
    for n in range(1, 2 * N + 4):
        c.setdefault(2 * n, 0.0)
    return LandauCoeffs(branch=b, order=N, c=c)


def c2_closed(p: ModelParams, b: Branch) -> float:
    s = Branch.parse(b).sign
    return (1 - p.mu) * (1 + p.mu + s * p.g**2) + p.gamma1**2


def c4_closed(p: ModelParams, b: Branch) -> float:
    s = Branch.parse(b).sign
    return s * (p.mu - 1) * p.g**4 / 2 + p.gamma2 * p.gamma1 * (2 * p.mu + s * p.g**2) / (p.mu - 1)


def c6_minus_closed(p: ModelParams) -> float:
    mu, g, g1, g2 = p.mu, p.g, p.gamma1, p.gamma2
    return (2 * (g * g - 2 * mu) ** 2 * g2**2 + 4 * g**4 * g2 * g1 * (mu - 1) + 3 * g**6 * (mu - 1) ** 3) / (
        6 * (mu - 1) ** 2
    )


def F_potential(x, p: ModelParams, b: Branch, N: Optional[int] = None):
    """F_b(x) from the order-N polynomial, or exactly (N=None) by quadrature."""
    b = Branch.parse(b)
    x = np.asarray(x, float)
    if N is not None:
        return landau_coeffs(p, b, N).polynomial()(x)
    out = np.empty(x.shape)
    for idx, xv in np.ndenumerate(x):
        u1 = xv * xv
        if u1 == 0.0:
            out[idx] = 0.0
            continue
        val, _ = integrate.quad(phi, 0.0, u1, args=(p, b), epsabs=1e-13, epsrel=1e-12, limit=200)
        out[idx] = val
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# critical constants


def critical_coupling_gc(p: ModelParams) -> float:
    if p.mu == 1.0:
        raise DivergentCritical("g_c diverges at mu = 1")
    return math.sqrt(abs(1 + p.gamma1**2 - p.mu**2) / abs(p.mu - 1))


def tricritical_gamma2(p: ModelParams) -> float:
    """Mean-field tricritical two-photon rate (c2 = c4 = 0 on the minus branch)."""
    if p.mu <= critical_mu(p):
        raise OutsideInvertedRegime(f"mu={p.mu} <= mu_c={critical_mu(p)}")
    gc2 = critical_coupling_gc(p) ** 2
    den = 2 * p.mu - gc2
    if abs(den) < 1e-12:
        raise DegenerateDenominator("2 mu - g_c^2 vanishes")
    if p.gamma1 == 0.0:
        raise DegenerateDenominator("gamma1 = 0")
    return (p.mu - 1) ** 2 * gc2**2 / (2 * p.gamma1 * den)


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    phase: Phase
    n_mf: float
    selected: Optional[FixedPoint]
    fixed_points: list


def classify_phase(p: ModelParams, b: Branch) -> Classification:
    """SRP iff a stable nontrivial point exists and is the global minimum of F_b."""
    b = Branch.parse(b)
    fps = fixed_points(p, b)
    triv = fps[0]
    stable_nt = [fp for fp in fps[1:] if fp.stable and fp.state.xbar > 0]
    best, best_F = None, math.inf
    for fp in stable_nt:
        Fv = F_potential(fp.state.xbar, p, b)
        if Fv < best_F:
            best, best_F = fp, Fv
    if best is not None and (not triv.stable or best_F < 0.0):
        return Classification(Phase.SRP, best.n_mf, best, fps)
    if triv.stable:
        return Classification(Phase.NP, 0.0, triv, fps)
    # exactly at a continuous transition the trivial point is marginal
    # (a zero slow eigenvalue) and no nontrivial point has split off yet
    if best is None and max(z.real for z in triv.slow_eigenvalues) <= TOL_STAB:
        return Classification(Phase.NP, 0.0, triv, fps)
    return Classification(Phase.UNSTABLE, float("nan"), None, fps)


def _delta_F(g: float, p: ModelParams, b: Branch) -> float:
    """F(x_s) - F(0) at coupling g when both minima coexist, else nan."""
    q = p.with_(g=g)
    fps = fixed_points(q, b)
    if not fps[0].stable:
        return math.nan
    vals = [F_potential(fp.state.xbar, q, b) for fp in fps[1:] if fp.stable and fp.state.xbar > 0]
    return min(vals) if vals else math.nan


def first_order_boundary(p: ModelParams, b: Branch = Branch.MINUS, g_window=None, n_scan=121,
                         g_tol=1e-8) -> float:
    """Coupling at which the nontrivial minimum of F_b stops being the global one."""
    b = Branch.parse(b)
    if p.mu > critical_mu(p) and b is Branch.MINUS and p.gamma1 > 0:
        g2c = tricritical_gamma2(p)
        if p.gamma2 > g2c * (1 + 1e-9):
            raise NoCoexistence(f"gamma2={p.gamma2} > gamma2_c={g2c}: transition is continuous")
        if abs(p.gamma2 - g2c) <= 1e-9 * g2c:
            return critical_coupling_gc(p)
    if g_window is None:
        gc = critical_coupling_gc(p)
        g_window = (gc, 3.0 * gc)
    lo_w, hi_w = float(g_window[0]), float(g_window[1])
    # coexistence windows open at the lower edge and can be very narrow,
    # so cluster scan points geometrically there as well
    span = hi_w - lo_w
    gs = np.unique(np.concatenate([
        np.linspace(lo_w, hi_w, n_scan),
        lo_w + span * np.geomspace(1e-13, 1.0, n_scan),
    ]))
    dF = np.array([_delta_F(g, p, b) for g in gs])
    ok = np.isfinite(dF)
    if not ok.any():
        raise NoCoexistence(f"no coexisting minima for g in {tuple(g_window)}")
    for i in range(len(gs) - 1):
        if ok[i] and ok[i + 1] and np.sign(dF[i]) != np.sign(dF[i + 1]):
            lo, hi = gs[i], gs[i + 1]
            break
    else:
        raise NoCoexistence("coexistence found but F difference never changes sign in window")
    flo = dF[i]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _delta_F(mid, p, b)
        if not np.isfinite(fm):
            raise NoConvergence("coexistence lost inside bracket", bracket=(lo, hi))
        if abs(fm) < 1e-10 and hi - lo < g_tol:
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < g_tol:
            break
    return 0.5 * (lo + hi)


def mf_sweep(p: ModelParams, g_list: Sequence[float], b: Branch) -> list[dict]:
    rows = []
    for g in g_list:
        q = p.with_(g=float(g))
        try:
            cl = classify_phase(q, b)
            sz = cl.selected.state.sz if cl.selected is not None else float("nan")
            rows.append(dict(g=float(g), branch=Branch.parse(b).name.lower(), phase=cl.phase.value,
                             n_mf=cl.n_mf, sz=sz, status="ok"))
        except RabiError as exc:
            rows.append(dict(g=float(g), branch=Branch.parse(b).name.lower(), phase=Phase.FAILED.value,
                             n_mf=float("nan"), sz=float("nan"), status=f"Failed: {exc}"))
    return rows


def phase_diagram(mu_list: Sequence[float], g_list: Sequence[float], p_base: ModelParams) -> list[PhasePoint]:
    mu_list = list(mu_list)
    g_list = list(g_list)
    nm, ng = len(mu_list), len(g_list)
    grid = [[None] * ng for _ in range(nm)]
    c2 = np.full((nm, ng), np.nan)
    c4 = np.full((nm, ng), np.nan)
    for i, mu in enumerate(mu_list):
        for j, g in enumerate(g_list):
            q = p_base.with_(mu=float(mu), g=float(g))
            try:
                m = classify_phase(q, Branch.MINUS)
                pl = classify_phase(q, Branch.PLUS)
                grid[i][j] = PhasePoint(q.mu, q.g, m.phase, pl.phase, m.n_mf, pl.n_mf)
            except RabiError as exc:
                grid[i][j] = PhasePoint(q.mu, q.g, Phase.FAILED, Phase.FAILED, status=f"Failed: {exc}")
            if q.mu != 1.0:
                c2[i, j] = c2_closed(q, Branch.MINUS)
                c4[i, j] = c4_closed(q, Branch.MINUS)
    for i in range(nm):
        for j in range(ng):
            pt = grid[i][j]
            nb = [(a, c) for a in range(max(0, i - 1), min(nm, i + 2)) for c in range(max(0, j - 1), min(ng, j + 2))]
            changed = any(grid[a][c].phase_minus != pt.phase_minus for a, c in nb)
            if not changed or pt.status != "ok":
                continue
            c2n = np.array([c2[a, c] for a, c in nb])
            c4n = np.array([c4[a, c] for a, c in nb])
            if np.all(np.isfinite(c2n)) and np.all(np.isfinite(c4n)) and c2n.min() <= 0 <= c2n.max() \
                    and c4n.min() <= 0 <= c4n.max():
                pt.transition_order_nearby = Order.TRICRITICAL
            elif np.isfinite(c2[i, j]) and np.nanmin(c2n) <= 0 <= np.nanmax(c2n) and c4[i, j] > 0:
                pt.transition_order_nearby = Order.SECOND
            else:
                pt.transition_order_nearby = Order.FIRST
    return [grid[i][j] for i in range(nm) for j in range(ng)]


# ---------------------------------------------------------------------------
# tetracritical scan


@dataclass
class TetracriticalRow:
    mu: float
    g2_roots: tuple
    gamma1_sq_required: float
    gamma1_sq_other_root: float
    c6_residual: complex
    exists: bool


def tetracritical_scan(mu_list: Sequence[float], p_base: ModelParams | None = None) -> list[TetracriticalRow]:
    """Check whether c2 = c4 = c6 = 0 (minus branch) admits real gamma1 for mu > 1.

    From c2 = 0 and c4 = 0 we get gamma1^2 = (mu - 1)(1 + mu - g^2) and
    gamma1 gamma2 = (mu - 1)^2 g^4 / (2 (2 mu - g^2)); substituting into
    c6 = 0 leaves g^2 = 6 mu + 1 +/- sqrt(24 mu^2 + 1).  The physical root
    (g^2 > 2) needs gamma1^2 = (mu - 1)(-5 mu + sqrt(24 mu^2 + 1)).
    """
    rows = []
    for mu in mu_list:
        mu = float(mu)
        if mu <= 1:
            raise ValueError("tetracritical scan requires mu > 1")
        disc = math.sqrt(24 * mu * mu + 1)
        roots = (6 * mu + 1 + disc, 6 * mu + 1 - disc)
        s = roots[1]
        g1sq = (mu - 1) * (1 + mu - s)
        g1sq_other = (mu - 1) * (1 + mu - roots[0])
        # evaluate the residual c6 on the formal (possibly complex) solution
        g1 = complex(g1sq) ** 0.5
        g2 = (mu - 1) ** 2 * s * s / (2 * (2 * mu - s) * g1)
        g = math.sqrt(s)
        c6 = (2 * (s - 2 * mu) ** 2 * g2**2 + 4 * g**4 * g2 * g1 * (mu - 1) + 3 * g**6 * (mu - 1) ** 3) / (
            6 * (mu - 1) ** 2
        )
        rows.append(TetracriticalRow(mu, roots, g1sq, g1sq_other, c6, exists=g1sq >= 0 or g1sq_other >= 0))
    return rows
