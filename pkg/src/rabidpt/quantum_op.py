"""Truncated Fock-space operators.

Conventions: spin (x) boson ordering, i.e. composite operators are
kron(sigma, boson); sigma_z = diag(+1, -1) so index 0 is spin up; the
quadratures are x = (a + a^dag)/sqrt(2), p = i(a^dag - a)/sqrt(2).

Functions of x are built from the eigen-decomposition of the truncated
(tridiagonal) x matrix, which makes them exact functions on the truncated
space.  Matrix elements near the top of the Fock ladder are corrupted by
the truncation; tests compare the interior block only (see guard_band).
"""
from __future__ import annotations

import functools
import math
import struct
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .core import Branch, ModelParams, raw_rates

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def guard_band(n_c: int) -> int:
    return max(10, n_c // 10)


def _check_nc(n_c: int):
    if int(n_c) != n_c or n_c < 2:
        raise ValueError(f"cutoff must be an integer >= 2, got {n_c}")


def annihilation(n_c: int) -> sp.csr_matrix:
    _check_nc(n_c)
    return sp.diags(np.sqrt(np.arange(1, n_c, dtype=float)), 1, format="csr").astype(complex)


def creation(n_c: int) -> sp.csr_matrix:
    return annihilation(n_c).T.tocsr()


def number(n_c: int) -> sp.csr_matrix:
    _check_nc(n_c)
    return sp.diags(np.arange(n_c, dtype=float), 0, format="csr").astype(complex)


def position(n_c: int) -> sp.csr_matrix:
    a = annihilation(n_c)
    return ((a + a.T) / math.sqrt(2)).tocsr()


def momentum(n_c: int) -> sp.csr_matrix:
    a = annihilation(n_c)
    return (1j * (a.T - a) / math.sqrt(2)).tocsr()


def spin_op(sigma: np.ndarray, n_c: int) -> sp.csr_matrix:
    return sp.kron(sp.csr_matrix(sigma), sp.identity(n_c, dtype=complex), format="csr")


def boson_op(A, n_c: int | None = None) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    return sp.kron(sp.identity(2, dtype=complex), A, format="csr")


@functools.lru_cache(maxsize=16)
def _x_eig(n_c: int):
    off = np.sqrt(np.arange(1, n_c, dtype=float) / 2.0)
    w, V = linalg.eigh_tridiagonal(np.zeros(n_c), off)
    w.setflags(write=False)
    V.setflags(write=False)
    return w, V


def function_of_x(n_c: int, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dense matrix f(x) on the truncated space (real symmetric if f is real)."""
    _check_nc(n_c)
    w, V = _x_eig(n_c)
    return (V * f(w)) @ V.T


def sparsify(A, rel_tol: float = 1e-14) -> sp.csr_matrix:
    """Drop entries below rel_tol * max|A|; used for the wide-banded f(x)."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.array(A, dtype=complex)
    cut = rel_tol * np.abs(A).max() if A.size else 0.0
    A[np.abs(A) < cut] = 0.0
    return sp.csr_matrix(A)


# ---------------------------------------------------------------------------
# Hamiltonians


def v_nl_scalar(x, p: ModelParams):
    return 0.5 * p.omega0 * p.eta * np.sqrt(2.0 * p.g**2 * np.asarray(x) ** 2 / p.eta + 1.0)


def v_nl(p: ModelParams, n_c: int) -> np.ndarray:
    return function_of_x(n_c, lambda w: v_nl_scalar(w, p))


def _boson_quadratic(p: ModelParams, n_c: int) -> sp.csr_matrix:
    a = annihilation(n_c)
    ad = a.T.tocsr()
    return (p.omega0 * (ad @ a) + 0.5 * p.mu * p.omega0 * (a @ a + ad @ ad)).tocsr()


def hamiltonian_full(p: ModelParams, n_c: int) -> sp.csr_matrix:
    Om, lam, _, _ = raw_rates(p)
    a = annihilation(n_c)
    H = (
        0.5 * Om * spin_op(SZ, n_c)
        + boson_op(_boson_quadratic(p, n_c))
        + lam * sp.kron(sp.csr_matrix(SX), a + a.T)
    )
    return H.tocsr()


def hamiltonian_branch(p: ModelParams, b: Branch, n_c: int) -> np.ndarray:
    """Dense H_b = w0 a^dag a + (mu/2) w0 (a^2 + a^dag^2) + s V_nl(x)."""
    b = Branch.parse(b)
    return _boson_quadratic(p, n_c).toarray() + b.sign * v_nl(p, n_c)


def hamiltonian_perturbative(p: ModelParams, n_c: int) -> sp.csr_matrix:
    """Spin-diagonal Hamiltonian with V_nl expanded to order 1/eta^2."""
    Om = raw_rates(p).Omega
    a = annihilation(n_c)
    xa = (a + a.T).tocsr()
    xa2 = xa @ xa
    xa4 = xa2 @ xa2
    xa6 = xa4 @ xa2
    w0, g, eta = p.omega0, p.g, p.eta
    nonlin = w0 * g**2 / 4 * xa2 - w0 * g**4 / (16 * eta) * xa4 + w0 * g**6 / (32 * eta**2) * xa6
    H = (
        0.5 * Om * spin_op(SZ, n_c)
        + boson_op(_boson_quadratic(p, n_c))
        + sp.kron(sp.csr_matrix(SZ), nonlin)
    )
    return H.tocsr()


# ---------------------------------------------------------------------------
# adiabatic frame


def theta_scalar(x, p: ModelParams):
    return np.arctan(p.g * np.asarray(x) * math.sqrt(2.0 / p.eta))


def adiabatic_unitary(p: ModelParams, n_c: int, kind: str = "exact") -> np.ndarray:
    """U = exp(-i sigma_y theta(x)/2) as a dense 2n_c x 2n_c matrix.

    kind="exact":  theta = arctan(g x sqrt(2/eta))   (U_S)
    kind="linear": theta = g x sqrt(2/eta)           (U_S1, linearized)
    Both are evaluated exactly through the eigenbasis of x, so U is unitary
    to machine precision on the truncated space.
    """
    kind = kind.lower()
    if kind in ("exact", "us", "exactus"):
        th = lambda w: theta_scalar(w, p)
    elif kind in ("linear", "us1", "linearus1"):
        th = lambda w: p.g * w * math.sqrt(2.0 / p.eta)
    else:
        raise ValueError(f"unknown unitary kind {kind!r}")
    C = function_of_x(n_c, lambda w: np.cos(th(w) / 2))
    S = function_of_x(n_c, lambda w: np.sin(th(w) / 2))
    return np.kron(I2, C) - 1j * np.kron(SY, S)


def epsilon_scalar(x, p: ModelParams):
    return p.g / (2.0 * math.sqrt(p.eta)) / (1.0 + 2.0 * p.g**2 * np.asarray(x) ** 2 / p.eta)


def epsilon_operator(p: ModelParams, n_c: int) -> np.ndarray:
    return function_of_x(n_c, lambda w: epsilon_scalar(w, p))


def transformed_jumps(p: ModelParams, n_c: int):
    """(c1, c2) = (U_S^dag a U_S, U_S^dag a^2 U_S) in closed form."""
    a = annihilation(n_c).toarray()
    eps = epsilon_operator(p, n_c)
    c1 = np.kron(I2, a) - 1j * np.kron(SY, eps)
    c2 = np.kron(I2, a @ a) - 1j * np.kron(SY, eps @ a + a @ eps) - np.kron(I2, eps @ eps)
    return c1, c2


def cutoff_select(p: ModelParams, b: Branch | None = None, tol: float = 1e-10, n_start: int = 32,
                  n_max: int = 4096, growth: float = 2.0, **solve_kw) -> int:
    """Smallest cutoff in the doubling sequence whose top-level population < tol.

    b=None selects the full spin-boson model.
    """
    from . import lindblad
    from .errors import CutoffLimit

    n = int(n_start)
    while True:
        if n > n_max:
            raise CutoffLimit(f"cutoff would exceed n_max={n_max}")
        if b is None:
            res = lindblad.steady_state_full(p, n, **solve_kw)
        else:
            res = lindblad.steady_state_branch(p, b, n, **solve_kw)
        if res.top_population < tol:
            return n
        n = int(math.ceil(n * growth))


# ---------------------------------------------------------------------------
# debugging dumps: int32 rows, int32 cols, then row-major (re, im) float64 pairs


def dump_operator(path, A) -> None:
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    A = np.ascontiguousarray(A, dtype=complex)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<ii", *A.shape))
        fh.write(A.view(np.float64).astype("<f8").tobytes())


def load_operator(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<ii", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.view(complex).reshape(rows, cols).copy()
