"""Liouvillian assembly, steady states, observables and Wigner functions.

Vectorization is column stacking throughout: vec(A X B) = (B^T kron A) vec(X),
so with rho -> vec(rho) (Fortran order)

    L = -i (I kron H - H^T kron I)
        + sum_k r_k [conj(c_k) kron c_k - 1/2 I kron c_k^dag c_k - 1/2 (c_k^dag c_k)^T kron I]

The dissipator is the standard trace-preserving one, D[c] rho =
c rho c^dag - {c^dag c, rho}/2, with rates r = 2 kappa1, 2 kappa2.

Steady states replace row 0 of L by the trace functional vec(I)^dag.  The
models here have a weak Z2 parity symmetry (a -> -a, together with
sigma_x -> -sigma_x in the spin-boson model); the steady state lives in
the parity-even block of the Liouville space, which halves the number of
unknowns.  Branch Hamiltonians contain the wide-banded V_nl(x); for those
the system is solved by GMRES preconditioned with a sparse LU of the same
Liouvillian built from an aggressively thresholded V_nl.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quantum_op as qo
from .core import Branch, ModelParams, raw_rates
from .errors import GridTooNarrow, ResidualTooLarge, ShapeMismatch, SingularSystem

RESIDUAL_FAIL = 1e-6
PRECOND_THRESHOLD = 1e-4
KEEP_THRESHOLD = 1e-14


@dataclass
class Liouvillian:
    d: int
    matrix: sp.csr_matrix
    jump_spec: list = field(default_factory=list)
    parity: Optional[np.ndarray] = None  # per-basis-state parity labels (0/1)

    def trace_defect(self) -> float:
        """max |vec(I)^dag L| relative to max |L|."""
        idx = np.arange(self.d) * (self.d + 1)
        row = np.asarray(self.matrix[idx, :].sum(axis=0)).ravel()
        return float(np.abs(row).max() / max(abs(self.matrix).max(), 1e-300))


@dataclass
class SteadyStateResult:
    rho: np.ndarray
    observables: dict
    residual: float
    n_c: int
    model: str = "branch"
    min_eigenvalue: float = float("nan")
    top_population: float = float("nan")
    solver: str = ""

    def to_dict(self) -> dict:
        return dict(
            model=self.model,
            n_c=self.n_c,
            residual=self.residual,
            min_eigenvalue=self.min_eigenvalue,
            top_population=self.top_population,
            solver=self.solver,
            observables={k: (v if not isinstance(v, complex) else [v.real, v.imag])
                         for k, v in self.observables.items()},
        )


def _as_sparse(A) -> sp.csr_matrix:
    return A.tocsr() if sp.issparse(A) else sp.csr_matrix(np.asarray(A, dtype=complex))


def build_liouvillian(H, jumps: Sequence, parity: Optional[np.ndarray] = None) -> Liouvillian:
    """Column-stacked Liouvillian for Hamiltonian H and (operator, rate) jumps."""
    H = _as_sparse(H).astype(complex)
    d = H.shape[0]
    if H.shape != (d, d):
        raise ShapeMismatch(f"Hamiltonian must be square, got {H.shape}")
    Id = sp.identity(d, dtype=complex, format="csr")
    L = -1j * (sp.kron(Id, H) - sp.kron(H.T, Id))
    spec = []
    for c, rate in jumps:
        c = _as_sparse(c).astype(complex)
        if c.shape != (d, d):
            raise ShapeMismatch(f"jump operator shape {c.shape} does not match {d}x{d}")
        if rate == 0:
            continue
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (sp.kron(c.conj(), c) - 0.5 * sp.kron(Id, cdc) - 0.5 * sp.kron(cdc.T, Id))
        spec.append((c, float(rate)))
    return Liouvillian(d=d, matrix=L.tocsr(), jump_spec=spec, parity=parity)


def _sector(d: int, parity: Optional[np.ndarray]) -> np.ndarray:
    if parity is None:
        return np.arange(d * d)
    parity = np.asarray(parity)
    i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return np.flatnonzero((parity[i] == parity[j]).ravel(order="F"))


def _constrained(L: sp.csr_matrix, keep: np.ndarray, d: int) -> sp.csc_matrix:
    A = L[keep][:, keep].tocsr()
    pos = np.searchsorted(keep, np.arange(d) * (d + 1))
    A = A.tolil()
    A[0, :] = 0.0
    A[0, pos] = 1.0
    return A.tocsc()


def check_sector_closed(L: Liouvillian) -> float:
    """Largest coupling between the parity-even block and the rest (should be 0)."""
    if L.parity is None:
        return 0.0
    keep = _sector(L.d, L.parity)
    drop = np.setdiff1d(np.arange(L.d * L.d), keep)
    if drop.size == 0:
        return 0.0
    C = L.matrix[keep][:, drop]
    return float(abs(C).max()) if C.nnz else 0.0


def solve_steady_vector(L: Liouvillian, precond: Optional[Liouvillian] = None, rtol: float = 1e-13):
    """vec(rho) with tr(rho) = 1 solving L vec(rho) = 0 (row-replacement method)."""
    d = L.d
    keep = _sector(d, L.parity)
    A = _constrained(L.matrix, keep, d)
    rhs = np.zeros(A.shape[0], dtype=complex)
    rhs[0] = 1.0
    solver = "splu"
    x = None
    if precond is not None:
        M = _constrained(precond.matrix, keep, d)
        try:
            lu = spla.splu(M, permc_spec="COLAMD")
            op = spla.LinearOperator(A.shape, lu.solve, dtype=complex)
            x, info = spla.gmres(A, rhs, M=op, rtol=rtol, atol=0.0, restart=60, maxiter=20)
            solver = "gmres+lu-precond"
            if info != 0 or not np.all(np.isfinite(x)):
                x = None
        except RuntimeError:
            x = None
    if x is None:
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(f"steady-state system is singular: {exc}") from exc
        x = lu.solve(rhs)
        solver = "splu"
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite steady-state solution")
    full = np.zeros(d * d, dtype=complex)
    full[keep] = x
    return full, solver


def steady_state(L: Liouvillian, precond: Optional[Liouvillian] = None, n_c: Optional[int] = None,
                 observables=None, model: str = "generic") -> SteadyStateResult:
    vec, solver = solve_steady_vector(L, precond)
    d = L.d
    rho = vec.reshape(d, d, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = float(np.abs(L.matrix @ rho.ravel(order="F")).max())
    if residual > RESIDUAL_FAIL:
        raise ResidualTooLarge(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_FAIL}")
    obs = observables(rho) if observables is not None else {}
    return SteadyStateResult(
        rho=rho,
        observables=obs,
        residual=residual,
        n_c=n_c if n_c is not None else d,
        model=model,
        min_eigenvalue=float(np.linalg.eigvalsh(rho).min()),
        solver=solver,
    )


# ---------------------------------------------------------------------------
# observables


def boson_observables(rho: np.ndarray) -> dict:
    n_c = rho.shape[0]
    a = qo.annihilation(n_c)
    x = qo.position(n_c)
    pm = qo.momentum(n_c)
    ev = lambda A: complex(np.sum((A @ rho).diagonal()))
    a_mean = ev(a)
    xm, pmean = ev(x).real, ev(pm).real
    x2 = ev(x @ x).real
    p2 = ev(pm @ pm).real
    return dict(
        n=ev(a.T @ a).real,
        x2=x2,
        p2=p2,
        dx2=x2 - xm * xm,
        dp2=p2 - pmean * pmean,
        a_mean=a_mean,
        abs_a_mean=abs(a_mean),
    )


def partial_trace_spin(rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0] // 2
    return rho[:n, :n] + rho[n:, n:]


def full_observables(rho: np.ndarray) -> dict:
    n = rho.shape[0] // 2
    obs = boson_observables(partial_trace_spin(rho))
    obs["sz"] = float(np.trace(rho[:n, :n]).real - np.trace(rho[n:, n:]).real)
    return obs


# ---------------------------------------------------------------------------
# pipelines


def branch_parity(n_c: int) -> np.ndarray:
    return np.arange(n_c) % 2


def full_parity(n_c: int) -> np.ndarray:
    k = np.arange(n_c)
    return np.concatenate([k % 2, (k + 1) % 2])


def branch_liouvillian(p: ModelParams, b: Branch, n_c: int, threshold: float = KEEP_THRESHOLD,
                       use_parity: bool = True) -> Liouvillian:
    _, _, k1, k2 = raw_rates(p)
    a = qo.annihilation(n_c)
    H = qo.sparsify(qo.hamiltonian_branch(p, b, n_c), threshold)
    return build_liouvillian(H, [(a, 2 * k1), (a @ a, 2 * k2)],
                             parity=branch_parity(n_c) if use_parity else None)


def full_liouvillian(p: ModelParams, n_c: int, use_parity: bool = True) -> Liouvillian:
    _, _, k1, k2 = raw_rates(p)
    A = qo.boson_op(qo.annihilation(n_c))
    return build_liouvillian(qo.hamiltonian_full(p, n_c), [(A, 2 * k1), (A @ A, 2 * k2)],
                             parity=full_parity(n_c) if use_parity else None)


def steady_state_branch(p: ModelParams, b: Branch, n_c: int | str = "auto", tol: float = 1e-10,
                        precond_threshold: float | None = PRECOND_THRESHOLD,
                        use_parity: bool = True) -> SteadyStateResult:
    """Steady state of the decoupled branch model (jumps a and a^2).

    use_parity=False solves the unreduced system; the parity-even block is
    then an outcome of the solve rather than an imposed structure.
    """
    b = Branch.parse(b)
    if isinstance(n_c, str):
        n_c = qo.cutoff_select(p, b, tol=tol, use_parity=use_parity)
    L = branch_liouvillian(p, b, n_c, use_parity=use_parity)
    pre = None
    if p.g > 0 and precond_threshold is not None:
        pre = branch_liouvillian(p, b, n_c, threshold=precond_threshold, use_parity=use_parity)
    res = steady_state(L, precond=pre, n_c=n_c, observables=boson_observables, model=f"branch{b.name.lower()}")
    res.top_population = float(res.rho[-1, -1].real)
    return res


def steady_state_full(p: ModelParams, n_c: int | str = "auto", tol: float = 1e-10,
                      use_parity: bool = True) -> SteadyStateResult:
    if isinstance(n_c, str):
        n_c = qo.cutoff_select(p, None, tol=tol, use_parity=use_parity)
    if p.g == 0.0:
        return _decoupled_full(p, n_c)
    L = full_liouvillian(p, n_c, use_parity=use_parity)
    res = steady_state(L, n_c=n_c, observables=full_observables, model="full")
    res.top_population = float(res.rho[n_c - 1, n_c - 1].real + res.rho[-1, -1].real)
    return res


def _decoupled_full(p: ModelParams, n_c: int) -> SteadyStateResult:
    """g = 0: the spin populations are conserved and the steady state is not
    unique.  Return the member with the spin in its ground state |down>."""
    _, _, k1, k2 = raw_rates(p)
    a = qo.annihilation(n_c)
    H = qo._boson_quadratic(p, n_c)
    Lb = build_liouvillian(H, [(a, 2 * k1), (a @ a, 2 * k2)], parity=branch_parity(n_c))
    rb = steady_state(Lb, n_c=n_c).rho
    rho = np.kron(np.diag([0.0, 1.0]), rb).astype(complex)
    L = full_liouvillian(p, n_c)
    residual = float(np.abs(L.matrix @ rho.ravel(order="F")).max())
    return SteadyStateResult(
        rho=rho, observables=full_observables(rho), residual=residual, n_c=n_c, model="full",
        min_eigenvalue=float(np.linalg.eigvalsh(rho).min()),
        top_population=float(rho[n_c - 1, n_c - 1].real + rho[-1, -1].real), solver="decoupled",
    )


# ---------------------------------------------------------------------------
# Wigner function


@dataclass
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    W: np.ndarray  # shape (len(p), len(x))

    def integral(self) -> float:
        from scipy.integrate import trapezoid

        return float(trapezoid(trapezoid(self.W, self.x, axis=1), self.p))

    def rows(self):
        for j, pv in enumerate(self.p):
            for i, xv in enumerate(self.x):
                yield float(xv), float(pv), float(self.W[j, i])


def wigner_numeric(rho: np.ndarray, x_list, p_list, check_edges: bool = True) -> WignerGrid:
    """W(x, p) of a boson density matrix, with x = (a + a^dag)/sqrt(2).

    Uses the Laguerre expansion W = sum_mn rho_mn W_{|m><n|}, evaluated with
    the upward recurrence of the normalized functions
    W_mn ~ (2 alpha)^(n-m) sqrt(m!/n!) L_m^(n-m)(4|alpha|^2) e^{-2|alpha|^2},
    alpha = (x + i p)/sqrt(2).  The Gaussian factor is split in two halves
    (one applied at the start, one at the end) so that neither underflow
    nor overflow occurs for |alpha|^2 up to several hundred.
    """
    rho = np.asarray(rho)
    M = rho.shape[0]
    xs = np.asarray(x_list, float)
    ps = np.asarray(p_list, float)
    X, P = np.meshgrid(xs, ps)
    A = (X + 1j * P) / math.sqrt(2.0)
    A2 = 2.0 * A
    A2c = np.conj(A2)
    r2 = np.abs(A) ** 2
    Wl = [None] * M
    Wl[0] = np.exp(-r2) / math.pi + 0j
    W = rho[0, 0].real * Wl[0].real
    for n in range(1, M):
        Wl[n] = A2 * Wl[n - 1] / math.sqrt(n)
        W = W + 2.0 * np.real(rho[0, n] * Wl[n])
    for m in range(1, M):
        temp = Wl[m]
        Wl[m] = (A2c * temp - math.sqrt(m) * Wl[m - 1]) / math.sqrt(m)
        W = W + np.real(rho[m, m] * Wl[m])
        for n in range(m + 1, M):
            temp2 = (A2 * Wl[n - 1] - math.sqrt(m) * temp) / math.sqrt(n)
            temp = Wl[n]
            Wl[n] = temp2
            W = W + 2.0 * np.real(rho[m, n] * Wl[n])
    W = W * np.exp(-r2)
    if check_edges:
        edge = max(np.abs(W[0]).max(), np.abs(W[-1]).max(), np.abs(W[:, 0]).max(), np.abs(W[:, -1]).max())
        if edge > 1e-6 * np.abs(W).max():
            raise GridTooNarrow(f"|W| on the grid boundary is {edge:.2e}")
    return WignerGrid(xs, ps, W)
