"""Critical exponents, finite-frequency scans and the Theta-Lambda scaling collapse.

Collapse variables come from the Langevin coefficients C2, C4, C6:

    L = C6^{-1/2},  Theta = |g - g_c| L^{2/3},  Lambda = C4 L^{4/3},  Ftilde = dx2 L^{-2/3}

with g_c the eta-independent closed form.  Backends for the order parameter
dx2 = <x^2> - <x>^2 on the (-) branch:

    "master"      steady_state_branch(-) of the decoupled master equation
    "quadrature"  moments of the Boltzmann reduced Wigner function W_R
    "ensemble"    Langevin SDE ensemble
    "closed"      NearCritical closed form (mu-1)/(4(g^2-g_c^2))
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import langevin, lindblad
from .core import Branch, ModelParams
from .errors import ConfigError, InsufficientData, NoBracket, NonPositiveData, RabiError
from .meanfield import critical_coupling_gc

BACKENDS = ("master", "quadrature", "ensemble", "closed")

# Table 1 of the model: order-parameter exponent nu, finite-frequency exponent
# zeta and coherence-length exponent xi (documented, never computed).
TABLE1 = {
    "second_order": {"nu": 1.0, "zeta": 0.5, "xi": 2.0},
    "tricritical": {"nu": 1.0, "zeta": 2.0 / 3.0, "xi": 1.5},
}
TABLE1_OTHER_MODELS = {
    "closed_qrm_qdm": {"nu": 0.5, "zeta": 1.0 / 3.0, "xi": 1.5},
    "open_qrm_qdm_kappa2_0": {"nu": 1.0, "zeta": 0.5, "xi": 2.0},
    "kerr_or_amplified": {"nu": 1.0, "zeta": 2.0 / 3.0, "xi": 1.5},
}

CSV_FIELDS = ("eta", "g", "gamma2", "backend", "dx2", "L", "Theta", "Lambda", "Ftilde", "status")


def normalize_backend(name: str) -> str:
    key = name.lower().replace("_", "").replace("-", "")
    aliases = {"master": "master", "mastereq": "master", "quadrature": "quadrature", "quad": "quadrature",
               "ensemble": "ensemble", "sde": "ensemble", "closed": "closed", "closedform": "closed"}
    if key not in aliases:
        raise ConfigError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return aliases[key]


@dataclass
class ScalingSample:
    """One order-parameter evaluation; collapse variables are derived on access."""

    eta: float
    g: float
    gamma2: float
    dx2: float
    backend: str
    mu: float
    gamma1: float
    omega0: float = 1.0
    status: str = "ok"
    info: dict = field(default_factory=dict)

    @property
    def params(self) -> ModelParams:
        return ModelParams(omega0=self.omega0, eta=self.eta, mu=self.mu, g=self.g,
                           gamma1=self.gamma1, gamma2=self.gamma2)

    def _coeffs(self):
        """Langevin coefficients, or None for a failed sample without a valid gamma2."""
        if not all(math.isfinite(v) for v in (self.eta, self.g, self.gamma2)):
            return None
        return langevin.landau_C(self.params)

    @property
    def g_c(self) -> float:
        return critical_coupling_gc(self.params) if self._coeffs() is not None else math.nan

    @property
    def L(self) -> float:
        C = self._coeffs()
        return C.C6 ** -0.5 if C is not None else math.nan

    @property
    def Theta(self) -> float:
        return abs(self.g - self.g_c) * self.L ** (2 / 3)

    @property
    def Lambda(self) -> float:
        C = self._coeffs()
        return C.C4 * self.L ** (4 / 3) if C is not None else math.nan

    @property
    def Ftilde(self) -> float:
        return self.dx2 * self.L ** (-2 / 3)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(L=self.L, Theta=self.Theta, Lambda=self.Lambda, Ftilde=self.Ftilde)
        return d


@dataclass
class ScalingReport:
    exponent: float
    stderr: float
    intercept: float
    r_squared: float
    n_samples: int
    x_field: str
    y_field: str
    documented_constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# fitting


def _field(s, name):
    return s[name] if isinstance(s, dict) else getattr(s, name)


def fit_exponent(samples: Sequence, x_field: str, y_field: str, min_samples: int = 5,
                 documented_constants: Optional[dict] = None) -> ScalingReport:
    """Least-squares line through (log x, log y); the exponent is the slope."""
    usable = [s for s in samples if _field(s, "status") == "ok"] if samples and _has_status(samples[0]) else list(samples)
    if len(usable) < min_samples:
        raise InsufficientData(f"need at least {min_samples} samples, got {len(usable)}")
    x = np.array([float(_field(s, x_field)) for s in usable])
    y = np.array([float(_field(s, y_field)) for s in usable])
    if not (np.all(x > 0) and np.all(y > 0) and np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonPositiveData("log-log fit needs finite positive data")
    return _loglog(x, y, x_field, y_field, documented_constants or {})


def _has_status(s) -> bool:
    return (isinstance(s, dict) and "status" in s) or hasattr(s, "status")


def _loglog(x, y, x_field="x", y_field="y", constants=None) -> ScalingReport:
    lx, ly = np.log(x), np.log(y)
    n = len(lx)
    if n < 2 or np.ptp(lx) == 0:
        raise InsufficientData("need at least two distinct x values")
    A = np.vstack([lx, np.ones(n)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se = math.sqrt(ss_res / (n - 2) / ((lx - lx.mean()) ** 2).sum()) if n > 2 else 0.0
    return ScalingReport(exponent=float(slope), stderr=se, intercept=float(icpt), r_squared=r2, n_samples=n,
                         x_field=x_field, y_field=y_field, documented_constants=dict(constants or {}))


# ---------------------------------------------------------------------------
# order parameter


def order_parameter(p: ModelParams, backend: str, **kw) -> tuple[float, dict]:
    """dx2 on the (-) branch via the selected backend; returns (dx2, info)."""
    backend = normalize_backend(backend)
    if backend == "master":
        res = lindblad.steady_state_branch(p, Branch.MINUS, kw.get("n_c", "auto"), use_parity=True)
        return res.observables["dx2"], {"n_c": res.n_c, "top_population": res.top_population}
    if backend == "quadrature":
        q = langevin.quadrature_observables(p, Branch.MINUS, kw.get("form", "exact"))
        return q["dx2"], {}
    if backend == "ensemble":
        st = langevin.simulate_ensemble(p, Branch.MINUS, **{k: v for k, v in kw.items()
                                                            if k in ("n_traj", "dt", "t_burn", "t_max", "seed")})
        return st.moments["dx2"]["mean"], {"se": st.moments["dx2"]["se"]}
    cf = langevin.closed_form_moments(p, "NearCritical")
    return cf["x2"], {"diagnostics": cf["diagnostics"]}


def _sample(p: ModelParams, backend: str, **kw) -> ScalingSample:
    backend = normalize_backend(backend)
    try:
        dx2, info = order_parameter(p, backend, **kw)
        status = "ok" if math.isfinite(dx2) and dx2 > 0 else "Failed"
    except RabiError as exc:
        dx2, info, status = math.nan, {"error": f"{type(exc).__name__}: {exc}"}, "Failed"
    return ScalingSample(eta=p.eta, g=p.g, gamma2=p.gamma2, dx2=dx2, backend=backend, mu=p.mu,
                         gamma1=p.gamma1, omega0=p.omega0, status=status, info=info)


def _check_span(values: Sequence[float], decades: float, what: str):
    v = np.asarray(values, dtype=float)
    if v.size < 2 or np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ConfigError(f"{what} must contain at least two positive finite values")
    if math.log10(v.max() / v.min()) < decades - 1e-12:
        raise ConfigError(f"{what} must span at least {decades:g} decade(s)")


# ---------------------------------------------------------------------------
# scans


def finite_size_scan(params_base: ModelParams, eta_list: Sequence[float], backend: str = "quadrature",
                     min_decades: float = 1.0, **kw) -> list[ScalingSample]:
    """dx2(eta) at g = g_c (closed form, eta-independent).  gamma2 is taken from params_base."""
    _check_span(eta_list, min_decades, "eta list")
    gc = critical_coupling_gc(params_base)
    return [_sample(params_base.with_(eta=float(eta), g=gc), backend, **kw) for eta in eta_list]


def zeta_report(samples: Sequence[ScalingSample], regime: str) -> ScalingReport:
    return fit_exponent(samples, "eta", "dx2", documented_constants=TABLE1[regime])


def critical_exponent_scan(params_base: ModelParams, g_list: Sequence[float], backend: str = "quadrature",
                           min_decades: float = 2.0, regime: str = "second_order", **kw) -> ScalingReport:
    """Fit dx2 ~ (g - g_c)^{-nu}; returns nu (minus the log-log slope)."""
    gc = critical_coupling_gc(params_base)
    dg = np.asarray(g_list, dtype=float) - gc
    if np.any(dg <= 0):
        raise ConfigError("all couplings must exceed g_c")
    _check_span(dg, min_decades, "g - g_c")
    samples = [_sample(params_base.with_(g=float(g)), backend, **kw) for g in g_list]
    rows = [dict(dg=s.g - gc, dx2=s.dx2, status=s.status) for s in samples]
    rep = fit_exponent(rows, "dg", "dx2", documented_constants=TABLE1[regime])
    rep.exponent = -rep.exponent
    rep.intercept = rep.intercept
    return rep


# ---------------------------------------------------------------------------
# collapse


def lambda_of_gamma2(gamma2: float, p: ModelParams) -> float:
    C = langevin.landau_C(p.with_(gamma2=gamma2))
    return C.C4 * C.C6 ** (-2 / 3)


def solve_gamma2_for_Lambda(Lambda_target: float, eta: float, params_base: ModelParams,
                            g: Optional[float] = None, gamma2_max: float = 1e6) -> float:
    """gamma2 with C4 C6^{-2/3} = Lambda_target at the given eta and g (default g_c).

    Lambda(gamma2) rises from its gamma2 = 0 value through 0 at
    gamma2_0 = (mu-1) g^4/(2 gamma1), peaks, and decays back to 0 as
    gamma2 -> inf; for positive targets the root on the rising side is returned.
    """
    g = critical_coupling_gc(params_base) if g is None else float(g)
    p = params_base.with_(eta=float(eta), g=g)
    mu, g1 = p.mu, p.gamma1
    if g1 <= 0 or mu <= 1:
        raise NoBracket("Lambda = 0 needs gamma1 > 0 and mu > 1")
    g20 = (mu - 1) * g**4 / (2 * g1)
    if Lambda_target == 0:
        return g20
    f = lambda x: lambda_of_gamma2(x, p) - Lambda_target
    if Lambda_target < 0:
        if f(0.0) > 0:
            raise NoBracket(f"Lambda_target={Lambda_target} below Lambda(gamma2=0)={lambda_of_gamma2(0.0, p)}")
        lo, hi = 0.0, g20
    else:
        lo, hi = g20, g20
        step = max(g20, 1e-12)
        while f(hi) < 0:
            lo = hi
            step *= 2
            hi = g20 + step
            if hi > gamma2_max:
                raise NoBracket(f"Lambda_target={Lambda_target} not reached on gamma2 in (0, {gamma2_max:g}]")
    root = optimize.brentq(f, lo, hi, xtol=1e-15 * max(hi, 1.0), rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(root)) > 1e-10 * max(1.0, abs(Lambda_target)):
        raise NoBracket("root polish failed to meet the residual contract")
    return root


def collapse_dataset(params_base: ModelParams, Lambda_list: Sequence[float], eta_list: Sequence[float],
                     dg_list: Sequence[float], backend: str = "quadrature", **kw) -> list[ScalingSample]:
    """Samples at g = g_c + dg for every (Lambda, eta, dg); gamma2 solved per sample."""
    gc = critical_coupling_gc(params_base)
    out = []
    for lam in Lambda_list:
        for eta in eta_list:
            for dg in dg_list:
                g = gc + float(dg)
                try:
                    g2 = solve_gamma2_for_Lambda(float(lam), float(eta), params_base, g=g)
                except RabiError as exc:
                    out.append(ScalingSample(eta=float(eta), g=g, gamma2=math.nan, dx2=math.nan,
                                             backend=normalize_backend(backend), mu=params_base.mu,
                                             gamma1=params_base.gamma1, omega0=params_base.omega0,
                                             status="Failed", info={"error": str(exc), "Lambda_target": lam}))
                    continue
                s = _sample(params_base.with_(eta=float(eta), g=g, gamma2=g2), backend, **kw)
                s.info["Lambda_target"] = float(lam)
                out.append(s)
    return out


@dataclass
class CollapseSummary:
    Lambda: float
    bin_centers: list
    spreads: list  # (max - min)/mean of interpolated Ftilde across eta series per bin
    max_spread: float
    tail_slope: Optional[float]
    plateau_slope: Optional[float]
    plateau_value: Optional[float]


def collapse_summary(samples: Sequence[ScalingSample], n_bins: int = 20, tail_theta: float = 0.8,
                     plateau_decades: float = 1.0) -> list[CollapseSummary]:
    """Per-Lambda collapse quality.

    Theta is split into n_bins log-spaced bins; in every bin each eta series is
    interpolated (linear in log-log) at the bin center, and the spread across
    series is (max - min)/mean.  The tail slope is a log-log fit over
    Theta > tail_theta, the plateau slope a fit over the lowest
    `plateau_decades` decades of sampled Theta.
    """
    ok = [s for s in samples if s.status == "ok"]
    groups: dict = {}
    for s in ok:
        groups.setdefault(s.info.get("Lambda_target", round(s.Lambda, 12)), []).append(s)
    out = []
    for lam, ss in sorted(groups.items()):
        th = np.array([s.Theta for s in ss])
        ft = np.array([s.Ftilde for s in ss])
        edges = np.geomspace(th.min(), th.max(), n_bins + 1)
        centers = np.sqrt(edges[:-1] * edges[1:])
        series: dict = {}
        for s, t, f in zip(ss, th, ft):
            series.setdefault(s.eta, []).append((t, f))
        spreads = []
        for c in centers:
            vals = []
            for pts in series.values():
                pts = sorted(pts)
                ts = np.array([a for a, _ in pts])
                if len(ts) >= 2 and ts[0] <= c <= ts[-1]:
                    vals.append(math.exp(np.interp(math.log(c), np.log(ts), np.log([b for _, b in pts]))))
            spreads.append((max(vals) - min(vals)) / np.mean(vals) if len(vals) >= 2 else math.nan)
        tail = th > tail_theta
        tail_slope = _loglog(th[tail], ft[tail]).exponent if tail.sum() >= 3 else None
        low = th <= th.min() * 10.0**plateau_decades
        plateau_slope = _loglog(th[low], ft[low]).exponent if low.sum() >= 2 and np.ptp(th[low]) > 0 else None
        plateau_value = float(np.mean(ft[low])) if low.any() else None
        finite = [x for x in spreads if math.isfinite(x)]
        out.append(CollapseSummary(Lambda=float(lam), bin_centers=centers.tolist(), spreads=spreads,
                                   max_spread=max(finite) if finite else math.nan, tail_slope=tail_slope,
                                   plateau_slope=plateau_slope, plateau_value=plateau_value))
    return out
