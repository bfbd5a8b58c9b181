"""Blockade-constrained random spin positions and density diagnostics.

Positions are sampled by random sequential adsorption: candidates drawn
from the cloud density are rejected if they fall within the blockade
radius of an already accepted spin.  Acceptance is order dependent, so a
single realization is sequential; independent realizations are safe to
run concurrently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from spindyn.couplings import InteractionLaw

_SHAPE_ALIASES = {
    "box": "box",
    "ellipsoid-box": "box",
    "gaussian": "gaussian",
    "gaussian-ellipsoid": "gaussian",
}


class SaturationError(RuntimeError):
    """Raised when the sampler cannot place the requested number of spins.

    Signals that the target density is incompatible with the blockade
    constraint (random sequential adsorption saturates).
    """

    def __init__(self, placed: int, target: int, attempts: int):
        self.placed = placed
        self.target = target
        self.attempts = attempts
        super().__init__(
            f"placed only {placed}/{target} spins after {attempts} attempts; "
            "density and blockade radius are likely incompatible"
        )


@dataclass(frozen=True)
class CloudGeometry:
    """Cloud shape with per-axis radii in um.

    For ``box`` the radii are half-extents of a uniform-density box; for
    ``gaussian`` they are 1/e^2 radii, sampled as a normal density with
    sigma = radius / 2 per axis.
    """

    shape: str
    radii_um: tuple[float, float, float]

    def __post_init__(self) -> None:
        canonical = _SHAPE_ALIASES.get(self.shape)
        if canonical is None:
            raise ValueError(f"unknown cloud shape {self.shape!r}")
        object.__setattr__(self, "shape", canonical)
        radii = tuple(float(r) for r in self.radii_um)
        if len(radii) != 3 or any(r <= 0 for r in radii):
            raise ValueError("radii_um must be three positive lengths")
        object.__setattr__(self, "radii_um", radii)


@dataclass(frozen=True)
class SpinPositions:
    """Sampled 3D spin coordinates (um) with their blockade radius and seed."""

    positions: np.ndarray
    r_bl_um: float
    seed: int

    def __post_init__(self) -> None:
        pts = np.asarray(self.positions, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("positions must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pts)

    @property
    def n_spins(self) -> int:
        return self.positions.shape[0]

    def min_pair_distance(self) -> float:
        d2 = _pairwise_sq_distances(self.positions)
        return float(np.sqrt(d2.min()))


def _pairwise_sq_distances(pts: np.ndarray) -> np.ndarray:
    disp = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", disp, disp)
    iu = np.triu_indices(pts.shape[0], 1)
    return d2[iu]


def sample_blockaded_positions(
    geometry: CloudGeometry,
    n_target: int,
    r_bl_um: float,
    seed: int,
    max_attempts: int | None = None,
) -> SpinPositions:
    """Draw ``n_target`` positions with all pairwise distances >= r_bl_um.

    Deterministic for fixed (geometry, n_target, r_bl_um, seed).  Raises
    SaturationError when ``max_attempts`` (default 1000 * n_target)
    candidates were not enough to place every spin.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    if r_bl_um < 0:
        raise ValueError("blockade radius must be >= 0")
    if max_attempts is None:
        max_attempts = 1000 * n_target
    if max_attempts < n_target:
        raise ValueError("max_attempts must be >= n_target")

    rng = np.random.default_rng(seed)
    radii = np.asarray(geometry.radii_um)
    accepted = np.empty((n_target, 3), dtype=float)
    n_acc = 0
    r2_min = r_bl_um * r_bl_um
    for attempt in range(max_attempts):
        if geometry.shape == "box":
            cand = rng.uniform(-radii, radii)
        else:
            cand = rng.normal(0.0, radii / 2.0)
        if n_acc:
            diff = accepted[:n_acc] - cand
            if np.min(np.einsum("ij,ij->i", diff, diff)) < r2_min:
                continue
        accepted[n_acc] = cand
        n_acc += 1
        if n_acc == n_target:
            return SpinPositions(positions=accepted, r_bl_um=float(r_bl_um), seed=int(seed))
    raise SaturationError(n_acc, n_target, max_attempts)


def wigner_seitz_radius(density: float) -> float:
    """Wigner-Seitz radius (3 / (4 pi rho))^(1/3) for a density in um^-3."""
    if density <= 0:
        raise ValueError("density must be positive")
    return float((3.0 / (4.0 * np.pi * density)) ** (1.0 / 3.0))


def median_nn_coupling(
    positions: SpinPositions | np.ndarray,
    law: InteractionLaw,
    block: int = 512,
) -> float:
    """Median over spins of the strongest coupling each spin feels, in MHz.

    Evaluates median_i(max_j |J_ij|) without materializing the full
    coupling matrix, so it stays cheap for several thousand spins.
    """
    pts = np.asarray(getattr(positions, "positions", positions), dtype=float)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least 2 spins")
    row_max = np.empty(n, dtype=float)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        disp = pts[None, :, :] - pts[lo:hi, None, :]
        r2 = np.einsum("ijk,ijk->ij", disp, disp)
        rows = np.arange(lo, hi)
        r2[rows - lo, rows] = np.inf
        vals = law.c_over_2pi_mhz * r2 ** (-law.exponent / 2.0)
        if law.angular:
            vals *= np.abs(1.0 - 3.0 * disp[..., 2] ** 2 / r2)
        else:
            vals = np.abs(vals)
        row_max[lo:hi] = vals.max(axis=1)
    return float(np.median(row_max))


def write_positions_csv(path, sp: SpinPositions) -> None:
    """Write positions as CSV with columns index, x_um, y_um, z_um."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x_um", "y_um", "z_um"])
        for i, (x, y, z) in enumerate(sp.positions):
            writer.writerow([i, f"{x:.17g}", f"{y:.17g}", f"{z:.17g}"])
