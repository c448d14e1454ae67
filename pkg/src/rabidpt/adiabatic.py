"""Branch extraction and spin-weight formulas for the classical-mixture ansatz.

In the adiabatic frame rho' = U^dag rho U the steady state is approximately
p+ |+><+| (x) rho+ + p- |-><-| (x) rho-, with |+> = spin index 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import lindblad
from . import quantum_op as qo
from .core import ModelParams
from .errors import ZeroDenominator

WEIGHT_FLOOR = 1e-12


@dataclass
class BranchDecomposition:
    p_plus: float
    p_minus: float
    rho_plus: Optional[np.ndarray]
    rho_minus: Optional[np.ndarray]
    scheme: str
    coherence_norm: float  # Frobenius norm of the discarded <+|rho'|-> block

    def observables(self) -> dict:
        out = dict(p_plus=self.p_plus, p_minus=self.p_minus, coherence_norm=self.coherence_norm,
                   scheme=self.scheme)
        for name, r in (("plus", self.rho_plus), ("minus", self.rho_minus)):
            if r is not None:
                obs = lindblad.boson_observables(r)
                out[name] = {k: v for k, v in obs.items() if not isinstance(v, complex)}
        return out


def _normalize_scheme(scheme: str) -> str:
    s = scheme.lower()
    if s in ("exact", "exactus", "us"):
        return "exact"
    if s in ("linear", "linearus1", "us1"):
        return "linear"
    raise ValueError(f"unknown extraction scheme {scheme!r}")


def extract_branches(rho_full: np.ndarray, p: ModelParams, scheme: str = "linear") -> BranchDecomposition:
    """Rotate the full steady state into the adiabatic frame and project on |+>, |->.

    A branch whose weight is below 1e-12 is returned as None (the other
    branch carries the whole state).
    """
    scheme = _normalize_scheme(scheme)
    n = rho_full.shape[0] // 2
    U = qo.adiabatic_unitary(p, n, kind=scheme)
    rp = U.conj().T @ rho_full @ U
    blocks = {}
    weights = {}
    for name, sl in (("plus", slice(0, n)), ("minus", slice(n, 2 * n))):
        blk = rp[sl, sl]
        w = float(np.trace(blk).real)
        weights[name] = w
        blocks[name] = 0.5 * (blk + blk.conj().T) / w if w > WEIGHT_FLOOR else None
    total = weights["plus"] + weights["minus"]
    return BranchDecomposition(
        p_plus=weights["plus"] / total,
        p_minus=weights["minus"] / total,
        rho_plus=blocks["plus"],
        rho_minus=blocks["minus"],
        scheme=scheme,
        coherence_norm=float(np.linalg.norm(rp[:n, n:])),
    )


def spin_weight_ratio_perturbative(n_plus: float, n_minus: float, p: ModelParams) -> float:
    """r_p = p+/p- = (4 gamma2 n-/eta + gamma1) / (4 gamma2 n+/eta + gamma1)."""
    num = 4 * p.gamma2 * n_minus / p.eta + p.gamma1
    den = 4 * p.gamma2 * n_plus / p.eta + p.gamma1
    if den == 0:
        raise ZeroDenominator("gamma1 = 0 and n_plus = 0")
    return num / den


def spin_weight_ratio_complete(rho_plus: np.ndarray, rho_minus: np.ndarray, p: ModelParams) -> float:
    """r_p from O1 = eps(x)^2 and O2 = a^dag eps(x)^2 a."""
    n_c = rho_plus.shape[0]
    eps = qo.epsilon_operator(p, n_c)
    a = qo.annihilation(n_c).toarray()
    O1 = eps @ eps
    O2 = a.conj().T @ O1 @ a
    ev = lambda O, r: float(np.trace(O @ r).real)
    num = 4 * p.gamma2 * ev(O2, rho_minus) / p.eta + p.gamma1 * ev(O1, rho_minus)
    den = 4 * p.gamma2 * ev(O2, rho_plus) / p.eta + p.gamma1 * ev(O1, rho_plus)
    if den == 0 or num == 0:
        raise ZeroDenominator("spin-flip rates vanish (eps = 0); caller should fall back to r_p = 1")
    return num / den


def validity_ratio(rho: np.ndarray, p: ModelParams) -> float:
    """<x^2> g^2 / eta; the perturbative weight formula needs this << 1."""
    return lindblad.boson_observables(rho)["x2"] * p.g**2 / p.eta


def mixture_state(p_plus: float, rho_plus: Optional[np.ndarray], rho_minus: Optional[np.ndarray],
                  p: ModelParams, scheme: str = "exact") -> np.ndarray:
    """Lab-frame density matrix U (p+ |+><+| rho+ + p- |-><-| rho-) U^dag."""
    ref = rho_minus if rho_minus is not None else rho_plus
    n = ref.shape[0]
    zero = np.zeros((n, n), dtype=complex)
    rp = np.block([
        [p_plus * (rho_plus if rho_plus is not None else zero), zero],
        [zero, (1 - p_plus) * (rho_minus if rho_minus is not None else zero)],
    ])
    U = qo.adiabatic_unitary(p, n, kind=_normalize_scheme(scheme))
    return U @ rp @ U.conj().T


def weight_from_ratio(r_p: float) -> float:
    return r_p / (1.0 + r_p) if math.isfinite(r_p) else 1.0


def mixture_observables(p_plus: float, rho_plus, rho_minus, p: ModelParams, scheme: str = "exact") -> dict:
    """Observables of the mixture ansatz in the laboratory frame (n, sz, x2, ...)."""
    rho = mixture_state(p_plus, rho_plus, rho_minus, p, scheme)
    obs = lindblad.full_observables(rho)
    obs["p_plus"] = p_plus
    return obs


def mixture_prediction(p: ModelParams, n_c: int, formula: str = "D5", branch_results=None) -> dict:
    """Solve both branch models and combine them with the chosen weight formula.

    formula: "D5" (photon-number formula) or "D6" (complete epsilon-operator
    formula).  Falls back to r_p = 1 when the complete formula degenerates.
    """
    if branch_results is None:
        rp_res = lindblad.steady_state_branch(p, "+", n_c)
        rm_res = lindblad.steady_state_branch(p, "-", n_c)
    else:
        rp_res, rm_res = branch_results
    if formula.upper() == "D5":
        r = spin_weight_ratio_perturbative(rp_res.observables["n"], rm_res.observables["n"], p)
    elif formula.upper() == "D6":
        try:
            r = spin_weight_ratio_complete(rp_res.rho, rm_res.rho, p)
        except ZeroDenominator:
            r = 1.0
    else:
        raise ValueError(f"unknown weight formula {formula!r}")
    obs = mixture_observables(weight_from_ratio(r), rp_res.rho, rm_res.rho, p)
    obs["r_p"] = r
    obs["validity_minus"] = validity_ratio(rm_res.rho, p)
    obs["validity_plus"] = validity_ratio(rp_res.rho, p)
    return obs
