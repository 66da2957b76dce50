"""Weighted spectrum of -lap in L^2_V over the radial sector.

The linearization of the rescaled flow around a stationary profile V leads to
the generalized eigenproblem -lap(phi) = lambda V^{p-1} phi.  Its eigenvalues
over the radial sector determine the gap index k_p (number of eigenvalues
below p*c), the sharp convergence rate lambda_p = lambda_{k_p+1} - p*c, and
the non-degeneracy margin dist(p*c, spectrum).

Radial-sector restriction: for radial initial data the flow never excites
non-radial modes, so the radial lambda_p is the operative rate for every
experiment in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import PreconditionError
from .grid import Grid
from .stationary import StationaryProfile

_WEIGHT_FLOOR_REL = 1e-14
_DEGENERATE_REL = 1e-6


@dataclass(frozen=True)
class SpectralData:
    grid: Grid
    profile: StationaryProfile
    p: float
    c: float
    eigenvalues: np.ndarray     # increasing, lambda_{V,1} = c
    eigenfields: np.ndarray     # (nodes, k) L2_V-orthonormal
    weight: np.ndarray          # floored V^{p-1}
    floored: np.ndarray         # mask of nodes where the floor was applied
    k_p: int
    lambda_p: float
    h_omega_margin: float
    degenerate: bool
    max_residual: float         # worst relative eigen-residual off the floor band

    def project(self, f: np.ndarray) -> np.ndarray:
        """L2_V projections of f on the stored eigenfields."""
        wv = self.grid.sigma * self.grid.vols * self.weight
        return self.eigenfields.T @ (wv * f)

    def l2v_norm_sq(self, f: np.ndarray) -> float:
        return float(self.grid.sigma * self.grid.vols @ (self.weight * f * f))


def weighted_spectrum(grid: Grid, profile: StationaryProfile, k_max: int = 12) -> SpectralData:
    """Lowest k_max eigenpairs of -lap phi = lambda V^{p-1} phi on the grid.

    The weight is floored at 1e-14 of its maximum near the boundary to avoid
    division blow-up; floored nodes are excluded from the residual norm.
    k_max >= 3 so that the gap index is meaningful.
    """
    if k_max < 3:
        raise PreconditionError("k_max must be >= 3")
    k_max = min(k_max, grid.n)
    p, c = profile.p, profile.c
    vw = profile.V ** (p - 1.0)
    floor = _WEIGHT_FLOOR_REL * float(np.max(vw))
    floored = vw < floor
    vw = np.maximum(vw, floor)

    mdiag = grid.vols * vw
    s = 1.0 / np.sqrt(mdiag)
    sym_diag = grid.stiff_diag * s * s
    sym_off = grid.stiff_off * s[:-1] * s[1:]
    evals, evecs = eigh_tridiagonal(sym_diag, sym_off, select="i",
                                    select_range=(0, k_max - 1))
    fields = evecs * s[:, None] / math.sqrt(grid.sigma)
    for j in range(k_max):
        f = fields[:, j]
        if f[np.argmax(np.abs(f))] < 0:
            f *= -1.0

    # residual ||K phi - lambda M phi|| relative, floored band excluded
    max_res = 0.0
    keep = ~floored
    for j in range(k_max):
        f = fields[:, j]
        kf = grid.stiff_diag * f
        kf[:-1] += grid.stiff_off * f[1:]
        kf[1:] += grid.stiff_off * f[:-1]
        num = np.linalg.norm((kf - evals[j] * mdiag * f)[keep])
        den = np.linalg.norm(kf[keep])
        if den > 0:
            max_res = max(max_res, num / den)

    # ties count as "below" so the degenerate input p = 1 recovers the
    # classical limit k_p = 1, lambda_p = lambda_2 - lambda_1
    pc = p * c
    k_p = int(np.sum(evals < pc * (1.0 + 1e-9)))
    if k_p >= k_max:
        raise PreconditionError(f"k_max = {k_max} too small: all eigenvalues below p*c")
    lambda_p = float(evals[k_p] - pc)
    margin = float(np.min(np.abs(pc - evals)))
    evals.setflags(write=False)
    fields.setflags(write=False)
    return SpectralData(grid=grid, profile=profile, p=p, c=c, eigenvalues=evals,
                        eigenfields=fields, weight=vw, floored=floored, k_p=k_p,
                        lambda_p=lambda_p, h_omega_margin=margin,
                        degenerate=margin < _DEGENERATE_REL * c, max_residual=max_res)


@dataclass(frozen=True)
class LinearDecayRecord:
    times: np.ndarray
    energy: np.ndarray              # E[f(t)] = int f^2 V^{p-1}
    projections: np.ndarray         # (k, n_times) per-mode coefficients
    rates: np.ndarray               # per-mode growth rates (p*c - lambda_k)/p
    initial_leak: float             # share of E[f0] outside the stored modes


def linearized_flow(grid: Grid, spectral: SpectralData, f0: np.ndarray,
                    horizon: float, n_out: int = 129) -> LinearDecayRecord:
    """Evolve p V^{p-1} f_t = lap f + c p V^{p-1} f by eigen-expansion.

    Mode k scales by exp(((p*c - lambda_k)/p) t): modes below the gap index
    grow, the rest decay; the energy series is exact for data inside the
    stored span (initial_leak reports what is missed).
    """
    f0 = np.asarray(f0, dtype=float)
    coeff = spectral.project(f0)
    e_direct = spectral.l2v_norm_sq(f0)
    e_span = float(coeff @ coeff)
    leak = max(0.0, 1.0 - e_span / e_direct) if e_direct > 0 else 0.0
    rates = (spectral.p * spectral.c - spectral.eigenvalues) / spectral.p
    times = np.linspace(0.0, horizon, n_out)
    proj = coeff[:, None] * np.exp(np.outer(rates, times))
    energy = np.sum(proj * proj, axis=0)
    return LinearDecayRecord(times=times, energy=energy, projections=proj,
                             rates=rates, initial_leak=leak)


@dataclass(frozen=True)
class PoincareReport:
    ratio: float
    bound: float        # lambda_{V, k_p+1}
    passed: bool


def improved_poincare_check(spectral: SpectralData, field: np.ndarray) -> PoincareReport:
    """Rayleigh ratio int |grad f|^2 / int f^2 V^{p-1} against lambda_{k_p+1}.

    Requires the field to carry no L2_V component on modes 1..k_p
    (projections below 1e-9 relative); raises PreconditionError otherwise.
    """
    field = np.asarray(field, dtype=float)
    e = spectral.l2v_norm_sq(field)
    if e <= 0.0:
        raise PreconditionError("field vanishes in L2_V")
    coeff = spectral.project(field)
    low = np.abs(coeff[:spectral.k_p])
    if np.any(low > 1e-9 * math.sqrt(e)):
        raise PreconditionError(
            f"field has low-mode content {low.max():.2e}; must be below 1e-9")
    ratio = spectral.grid.dirichlet_form(field) / e
    bound = float(spectral.eigenvalues[spectral.k_p])
    return PoincareReport(ratio=ratio, bound=bound, passed=ratio >= bound * (1.0 - 1e-6))
