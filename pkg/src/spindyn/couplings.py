"""Power-law spin-spin couplings and the dense coupling matrix.

Couplings are stored as J/(2*pi) in MHz with distances in micrometres.
The quantization axis is +z; for dipolar laws the angle theta_ij of the
separation vector against that axis enters through (1 - 3 cos^2 theta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GHZ_TO_MHZ = 1.0e3

# Preset name -> (kind, C_a/(2pi) in GHz um^a, exponent, delta, angular)
_LAW_PRESETS = {
    "dipolar-48S48P": ("dipolar", 1.15, 3, 0.0, True),
    "vdw-61S62S": ("vdw", 507.0, 6, -0.7, False),
}


class CoincidentSpinsError(ValueError):
    """Two spins sit at the same point, where the power law diverges."""


@dataclass(frozen=True)
class InteractionLaw:
    """Distance power law J(r) = C_a r^-a, optionally with dipolar anisotropy.

    ``c_over_2pi_ghz`` is C_a/(2*pi) in GHz um^a; evaluation returns MHz.
    """

    kind: str
    c_over_2pi_ghz: float
    exponent: int
    delta: float
    angular: bool

    def __post_init__(self) -> None:
        if self.kind not in ("dipolar", "vdw"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.exponent not in (3, 6):
            raise ValueError("power-law exponent must be 3 or 6")
        if self.c_over_2pi_ghz <= 0:
            raise ValueError("coupling constant must be positive")

    @property
    def c_over_2pi_mhz(self) -> float:
        return self.c_over_2pi_ghz * _GHZ_TO_MHZ


def law_preset(name: str) -> InteractionLaw:
    """Return one of the named interaction-law presets."""
    try:
        kind, c_ghz, a, delta, angular = _LAW_PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(_LAW_PRESETS))
        raise KeyError(f"unknown law preset {name!r} (known: {known})") from None
    return InteractionLaw(kind, c_ghz, a, delta, angular)


def law_preset_names() -> tuple[str, ...]:
    return tuple(sorted(_LAW_PRESETS))


def coupling_from_displacements(disp, law: InteractionLaw) -> np.ndarray:
    """Coupling J/(2*pi) in MHz for an array of separation vectors (..., 3)."""
    disp = np.asarray(disp, dtype=float)
    r2 = np.einsum("...i,...i->...", disp, disp)
    if np.any(r2 == 0.0):
        raise CoincidentSpinsError("coincident spins: zero separation")
    vals = law.c_over_2pi_mhz * r2 ** (-law.exponent / 2.0)
    if law.angular:
        # cos^2(theta) = dz^2 / r^2 against the +z quantization axis
        vals = vals * (1.0 - 3.0 * disp[..., 2] ** 2 / r2)
    return vals


def pair_coupling(r_i, r_j, law: InteractionLaw) -> float:
    """Coupling J_ij/(2*pi) in MHz between two points (um)."""
    disp = np.asarray(r_j, dtype=float) - np.asarray(r_i, dtype=float)
    return float(coupling_from_displacements(disp, law))


@dataclass(frozen=True)
class CouplingMatrix:
    """Dense symmetric matrix of couplings J_ij/(2*pi) in MHz, zero diagonal."""

    values: np.ndarray
    delta: float

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coupling matrix must be square")
        if not np.all(np.isfinite(v)):
            raise ValueError("coupling matrix entries must be finite")
        if np.any(np.diagonal(v) != 0.0):
            raise ValueError("coupling matrix diagonal must be zero")
        if not np.array_equal(v, v.T):
            raise ValueError("coupling matrix must be symmetric")

    @property
    def n_spins(self) -> int:
        return self.values.shape[0]


def build_coupling_matrix(positions, law: InteractionLaw, block: int = 1024) -> CouplingMatrix:
    """Assemble the full N x N coupling matrix for a set of positions.

    Accepts a SpinPositions or a raw (N, 3) array.  Rows are filled in
    blocks so large ensembles do not need an (N, N, 3) intermediate.
    """
    pts = np.asarray(getattr(positions, "positions", positions), dtype=float)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least 2 spins")
    out = np.zeros((n, n), dtype=float)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        disp = pts[None, :, :] - pts[lo:hi, None, :]
        r2 = np.einsum("ijk,ijk->ij", disp, disp)
        rows = np.arange(lo, hi)
        r2[rows - lo, rows] = np.inf  # mask self-pairs
        if np.any(r2 == 0.0):
            raise CoincidentSpinsError("coincident spins: zero separation")
        vals = law.c_over_2pi_mhz * r2 ** (-law.exponent / 2.0)
        if law.angular:
            vals *= 1.0 - 3.0 * disp[..., 2] ** 2 / r2
        vals[rows - lo, rows] = 0.0
        out[lo:hi] = vals
    # exact symmetry regardless of block-wise rounding
    out = np.triu(out, 1)
    out = out + out.T
    return CouplingMatrix(values=out, delta=law.delta)
