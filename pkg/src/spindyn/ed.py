"""Exact state-vector dynamics and diagonal-ensemble averages for small N.

The lab frame keeps the transverse field and the initial polarization
along x:

    H = (1/2) sum_ij J_ij (sx_i sx_j + sy_i sy_j + delta sz_i sz_j)
        + omega * sum_i sx_i

with spin-1/2 operators s = sigma/2.  Using the flip-flop form
sx sx + sy sy = (s+ s- + s- s+)/2 makes H real symmetric, which every
routine here exploits.  Energies are MHz, so propagation phases are
exp(-i 2 pi E t) with t in microseconds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import expm_multiply

from spindyn.couplings import CouplingMatrix

DEFAULT_ED_LIMIT = 14
_DENSE_EVOLVE_LIMIT = 10


class DimensionLimitError(ValueError):
    """Requested system size exceeds the configured ED limit."""


def _check_limit(n: int, limit: int) -> None:
    if n > limit:
        raise DimensionLimitError(f"N = {n} exceeds the ED limit of {limit} spins")


@lru_cache(maxsize=None)
def _site_ops(n: int):
    """Per-site sparse (sx_i, sp_i, sm_i, sz_diag_i) in the 2^n z-basis."""
    sx = sp.csr_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]))
    spl = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # s+
    smi = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))  # s-
    ops = []
    for i in range(n):
        left = sp.identity(2**i, format="csr")
        right = sp.identity(2 ** (n - i - 1), format="csr")

        def embed(op):
            return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")

        # sz is diagonal; keep just the diagonal vector
        zdiag = np.kron(
            np.kron(np.ones(2**i), np.array([0.5, -0.5])), np.ones(2 ** (n - i - 1))
        )
        ops.append((embed(sx), embed(spl), embed(smi), zdiag))
    return ops


def total_sx(n: int) -> sp.csr_matrix:
    """Sparse operator (1/N) sum_i sx_i (per-spin mean magnetization)."""
    ops = _site_ops(n)
    out = ops[0][0].copy()
    for i in range(1, n):
        out = out + ops[i][0]
    return (out / n).tocsr()


def total_sz_diag(n: int) -> np.ndarray:
    """Diagonal of sum_i sz_i in the z-basis."""
    ops = _site_ops(n)
    return np.sum([o[3] for o in ops], axis=0)


def initial_state(n: int) -> np.ndarray:
    """Fully x-polarized product state as a real 2^n vector."""
    return np.full(2**n, 2.0 ** (-n / 2.0))


def build_hamiltonian(
    couplings: CouplingMatrix, omega: float, limit: int = DEFAULT_ED_LIMIT
) -> sp.csr_matrix:
    """Assemble the XXZ + transverse-field Hamiltonian as real sparse CSR (MHz)."""
    n = couplings.n_spins
    _check_limit(n, limit)
    dim = 2**n
    ops = _site_ops(n)
    jmat = couplings.values
    delta = couplings.delta

    h = sp.csr_matrix((dim, dim))
    diag = np.zeros(dim)
    for i in range(n):
        _, sp_i, sm_i, z_i = ops[i]
        for k in range(i + 1, n):
            j = jmat[i, k]
            if j == 0.0:
                continue
            _, sp_k, sm_k, z_k = ops[k]
            flipflop = sp_i @ sm_k
            h = h + (j / 2.0) * (flipflop + flipflop.T)
            if delta != 0.0:
                diag += j * delta * z_i * z_k
    if omega != 0.0:
        for i in range(n):
            h = h + omega * ops[i][0]
    h = h + sp.diags(diag)
    return h.tocsr()


def _n_from_dim(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError("operator dimension is not a power of two")
    return n


def evolve_states(h: sp.spmatrix, psi0: np.ndarray, times) -> np.ndarray:
    """State vectors at the requested times (sorted, non-negative), shape (T, dim).

    Full eigendecomposition up to 2^10; Krylov stepping via
    ``expm_multiply`` beyond, which keeps the norm to ~1e-12 per step.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a non-empty 1D time grid")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be sorted and non-negative")
    dim = h.shape[0]
    n = _n_from_dim(dim)
    psi0 = np.asarray(psi0, dtype=complex)

    if n <= _DENSE_EVOLVE_LIMIT:
        w, v = eigh(_to_dense(h))
        c0 = v.T @ psi0
        phases = np.exp(-2j * np.pi * np.outer(times, w))
        return (phases * c0) @ v.T
    out = np.empty((times.size, dim), dtype=complex)
    psi = psi0.copy()
    t_prev = 0.0
    for idx, t in enumerate(times):
        dt = t - t_prev
        if dt > 0:
            psi = expm_multiply((-2j * np.pi * dt) * h.tocsc(), psi)
        out[idx] = psi
        t_prev = t
    return out


def _to_dense(h) -> np.ndarray:
    return h.toarray() if sp.issparse(h) else np.asarray(h)


def evolve_magnetization(h: sp.spmatrix, psi0: np.ndarray, times) -> np.ndarray:
    """Per-spin <S_x>(t) of the evolved state, one value per time."""
    return expectation_sx(evolve_states(h, psi0, times))


def expectation_sx(states: np.ndarray) -> np.ndarray:
    """Per-spin <S_x> for a batch of state vectors (T, 2^N)."""
    n = _n_from_dim(states.shape[1])
    sx = total_sx(n)
    return np.real(np.einsum("ti,ti->t", states.conj(), (sx @ states.T).T))


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues with initial-state overlaps and eigenstate magnetizations.

    For degenerate spectra the per-eigenvector entries depend on the
    basis chosen inside the degenerate blocks; diagonal_ensemble_sx uses
    block projections and is basis independent.
    """

    eigenvalues: np.ndarray
    overlaps: np.ndarray
    sx_expectations: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eigenvalue_mhz", "overlap", "sx"])
            for e, o, s in zip(self.eigenvalues, self.overlaps, self.sx_expectations):
                writer.writerow([f"{e:.17g}", f"{o:.17g}", f"{s:.17g}"])


def spectral_data(h: sp.spmatrix, psi0: np.ndarray) -> SpectralData:
    """Diagonalize and collect the diagonal-ensemble ingredients."""
    n = _n_from_dim(h.shape[0])
    w, v = eigh(_to_dense(h))
    sx = total_sx(n)
    overlaps = (v.T @ np.asarray(psi0, dtype=float)) ** 2
    sx_exp = np.einsum("ik,ik->k", v, sx @ v)
    return SpectralData(eigenvalues=w, overlaps=overlaps, sx_expectations=sx_exp)


def diagonal_ensemble_sx(
    h: sp.spmatrix,
    psi0: np.ndarray,
    degeneracy_tol: float = 1e-8,
    limit: int = DEFAULT_ED_LIMIT,
) -> float:
    """Infinite-time average of <S_x> over the evolution from psi0.

    Eigenvalues closer than ``degeneracy_tol`` (MHz) are grouped and the
    initial state is projected onto each block, which makes the result
    basis independent under degeneracies (the naive per-eigenvector sum
    is not).  Equals the long-time average of evolve_magnetization.
    """
    n = _n_from_dim(h.shape[0])
    _check_limit(n, limit)
    w, v = eigh(_to_dense(h))
    sx = total_sx(n)
    psi0 = np.asarray(psi0, dtype=float)
    c = v.T @ psi0

    # block boundaries: split where the gap exceeds the tolerance
    splits = np.nonzero(np.diff(w) > degeneracy_tol)[0] + 1
    total = 0.0
    for block in np.split(np.arange(w.size), splits):
        cb = c[block]
        if not np.any(cb):
            continue
        u = v[:, block] @ cb  # projection of psi0 onto the block
        total += float(u @ (sx @ u))
    return total
