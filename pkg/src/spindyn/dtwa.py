"""Discrete truncated Wigner approximation for large-N relaxation dynamics.

Each trajectory starts from a discretely sampled classical spin
configuration (s_x = +1/2, s_y and s_z drawn from {-1/2, +1/2}) so the
transverse quantum uncertainty of the x-polarized product state is
reproduced, and evolves under the classical precession equations

    ds_i/dt = 2 pi (B_i x s_i),
    B_i = (omega + sum_j J_ij s_j^x,  sum_j J_ij s_j^y,  delta sum_j J_ij s_j^z)

with J in MHz and t in us.  The observable is the trajectory average of
the per-spin mean of s_x.

Trajectories are integrated in fixed-size chunks (the chunk shares one
adaptive step sequence, so the chunk size is part of the reproducibility
contract); chunks are independent work items and the reduction runs in
chunk order, which keeps results bit-identical for any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from spindyn.couplings import CouplingMatrix
from spindyn.util import deterministic_map

DEFAULT_TOL = 1e-8
DEFAULT_CHUNK = 64


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (typically step-size underflow)."""

    def __init__(self, message: str, trajectory_range: tuple[int, int] | None = None):
        self.trajectory_range = trajectory_range
        tag = "" if trajectory_range is None else f" (trajectories {trajectory_range})"
        super().__init__(message + tag)


@dataclass(frozen=True)
class TrajectoryBatch:
    """Monte Carlo estimate of <S_x>(t) with its standard error."""

    n_traj: int
    seed: int
    times: np.ndarray
    sx_mean: np.ndarray
    sx_stderr: np.ndarray


def sample_initial_spins(n: int, seed) -> np.ndarray:
    """One discrete initial configuration, shape (N, 3).

    s_x = +1/2 for every spin; s_y and s_z are independent fair draws
    from {-1/2, +1/2}, matching the transverse variance 1/4 of the
    x-polarized quantum state.  ``seed`` may be an int or a sequence of
    ints (used for counter-based per-trajectory seeding).
    """
    if n < 1:
        raise ValueError("need at least one spin")
    rng = np.random.default_rng(seed)
    s = np.empty((n, 3))
    s[:, 0] = 0.5
    s[:, 1:] = rng.integers(0, 2, size=(n, 2)) - 0.5
    return s


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need a non-empty 1D time grid")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and non-negative")
    return times


def _integrate_chunk(
    jmat: np.ndarray,
    delta: float,
    omega: float,
    s0: np.ndarray,
    times: np.ndarray,
    rtol: float,
    atol: float,
) -> np.ndarray:
    """Integrate a batch of configurations, s0 (B, N, 3) -> (T, B, N, 3)."""
    b, n, _ = s0.shape
    two_pi = 2.0 * np.pi
    y0 = np.ascontiguousarray(s0.transpose(2, 0, 1)).ravel()  # (3, B, N) layout

    def rhs(t, y):
        s = y.reshape(3, b, n)
        sx, sy, sz = s[0], s[1], s[2]
        bx = sx @ jmat
        bx += omega
        by = sy @ jmat
        bz = sz @ jmat
        bz *= delta
        out = np.empty_like(s)
        np.multiply(by, sz, out=out[0])
        out[0] -= bz * sy
        np.multiply(bz, sx, out=out[1])
        out[1] -= bx * sz
        np.multiply(bx, sy, out=out[2])
        out[2] -= by * sx
        out *= two_pi
        return out.ravel()

    t_end = float(times[-1]) if times[-1] > 0 else 0.0
    if t_end == 0.0:
        return np.broadcast_to(s0, (times.size, b, n, 3)).copy()
    sol = solve_ivp(
        rhs, (0.0, t_end), y0, method="RK45", t_eval=times, rtol=rtol, atol=atol
    )
    if not sol.success:
        raise IntegrationError(f"{sol.message} (reached t = {sol.t[-1] if sol.t.size else 0.0:g} us)")
    return sol.y.reshape(3, b, n, times.size).transpose(3, 1, 2, 0)


def evolve_trajectory(
    couplings: CouplingMatrix,
    omega: float,
    s0: np.ndarray,
    times,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Classical configurations along one trajectory, shape (T, N, 3)."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    times = _check_times(times)
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (couplings.n_spins, 3):
        raise ValueError("s0 must have shape (N, 3) matching the couplings")
    out = _integrate_chunk(
        couplings.values, couplings.delta, omega, s0[None], times, tol, tol * 1e-3
    )
    return out[:, 0]


def dtwa_magnetization(
    couplings: CouplingMatrix,
    omega: float,
    n_traj: int,
    times,
    seed: int,
    tol: float = DEFAULT_TOL,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> TrajectoryBatch:
    """Trajectory-averaged <S_x>(t) with standard error over n_traj samples.

    Trajectory k is seeded with (seed, k), so results are independent of
    chunking order and worker count.
    """
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories")
    if tol <= 0 or chunk_size < 1:
        raise ValueError("tol must be positive and chunk_size >= 1")
    times = _check_times(times)
    jmat = couplings.values
    n = couplings.n_spins
    starts = list(range(0, n_traj, chunk_size))

    def run_chunk(lo: int) -> np.ndarray:
        hi = min(lo + chunk_size, n_traj)
        s0 = np.stack([sample_initial_spins(n, [seed, k]) for k in range(lo, hi)])
        try:
            configs = _integrate_chunk(
                jmat, couplings.delta, omega, s0, times, tol, tol * 1e-3
            )
        except IntegrationError as exc:
            raise IntegrationError(str(exc), trajectory_range=(lo, hi)) from None
        return configs[..., 0].mean(axis=2).T  # (B, T) per-trajectory traces

    traces = np.concatenate(deterministic_map(run_chunk, starts, workers), axis=0)
    mean = traces.mean(axis=0)
    stderr = traces.std(axis=0, ddof=1) / np.sqrt(n_traj)
    return TrajectoryBatch(
        n_traj=n_traj, seed=int(seed), times=times, sx_mean=mean, sx_stderr=stderr
    )


def classical_energy(
    couplings: CouplingMatrix, omega: float, configs: np.ndarray
) -> np.ndarray:
    """Classical energy of configurations (..., N, 3) in MHz."""
    s = np.asarray(configs, dtype=float)
    jmat = couplings.values
    sx, sy, sz = s[..., 0], s[..., 1], s[..., 2]
    e = 0.5 * (
        np.einsum("...i,ij,...j->...", sx, jmat, sx)
        + np.einsum("...i,ij,...j->...", sy, jmat, sy)
        + couplings.delta * np.einsum("...i,ij,...j->...", sz, jmat, sz)
    )
    return e + omega * sx.sum(axis=-1)


def spin_norms(configs: np.ndarray) -> np.ndarray:
    """Per-spin vector norms of configurations (..., N, 3)."""
    s = np.asarray(configs, dtype=float)
    return np.sqrt(np.einsum("...ik,...ik->...i", s, s))
