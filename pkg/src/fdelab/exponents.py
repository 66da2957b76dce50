"""Critical exponents and explicit constants attached to (m, N, p).

For the fast diffusion equation u_t = lap(u^m) with 0 < m < 1 on a bounded
domain in R^N the relevant thresholds are

    m_c  = (N-2)/N      boundedness of L^1 data,
    m_s  = (N-2)/(N+2)  Sobolev/Yamabe exponent (stationary states exist iff m > m_s),
    m_c1 = (N-1)/N      weighted-L^1 smoothing threshold,

with companion integrability exponents p_c = N(1-m)/2 and p_c1 = N(1-m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import RegimeError
from .grid import Grid, lp_norm, sobolev_poincare_constant

_CRITICAL_TOL = 1e-12


@dataclass(frozen=True)
class ExponentTable:
    m: float
    N: int
    m_c: float
    m_s: float
    m_c1: float
    p_c: float
    p_c1: float
    p_s: float          # (N+2)/(N-2) for N >= 3, inf otherwise
    two_star: float     # 2N/(N-2) for N >= 3, inf otherwise
    regime: str         # "subcritical" | "critical_yamabe" | "supercritical"
    diffusion: str      # "good_fde" | "very_fast"

    @property
    def supercritical(self) -> bool:
        return self.regime == "supercritical"

    @property
    def subcritical(self) -> bool:
        return self.regime == "subcritical"

    @property
    def good_fde(self) -> bool:
        return self.diffusion == "good_fde"


def critical_exponents(m: float, N: int) -> ExponentTable:
    """All critical exponents and regime labels for the pair (m, N)."""
    if not 0.0 < m < 1.0:
        raise RegimeError("m must lie in (0, 1)")
    if N < 1 or N != int(N):
        raise RegimeError("N must be an integer >= 1")
    N = int(N)
    m_c = (N - 2) / N
    m_s = (N - 2) / (N + 2)
    m_c1 = (N - 1) / N
    if abs(m - m_s) <= _CRITICAL_TOL:
        regime = "critical_yamabe"
    elif m > m_s:
        regime = "supercritical"
    else:
        regime = "subcritical"
    diffusion = "good_fde" if m > m_c else "very_fast"
    inf = math.inf
    return ExponentTable(
        m=m, N=N, m_c=m_c, m_s=m_s, m_c1=m_c1,
        p_c=N * (1.0 - m) / 2.0, p_c1=N * (1.0 - m),
        p_s=(N + 2) / (N - 2) if N >= 3 else inf,
        two_star=2.0 * N / (N - 2) if N >= 3 else inf,
        regime=regime, diffusion=diffusion)


def theta(m: float, N: int, p: float, weighted: bool = False) -> float:
    """Smoothing exponent 1/(2p - N(1-m)), or 1/(p - N(1-m)) in the weighted form.

    Raises RegimeError when the denominator is not positive (p <= p_c,
    resp. p <= p_c1): the smoothing estimate does not apply there.
    """
    if not 0.0 < m < 1.0:
        raise RegimeError("m must lie in (0, 1)")
    den = (p if weighted else 2.0 * p) - N * (1.0 - m)
    if den <= 0.0:
        kind = "weighted" if weighted else "unweighted"
        raise RegimeError(f"{kind} smoothing inapplicable: p = {p} at or below critical")
    return 1.0 / den


def smoothing_admissible(m: float, N: int, p: float, weighted: bool = False) -> bool:
    """Integrability condition on the datum for L^p (resp. L^p_phi1) smoothing."""
    tab = critical_exponents(m, N)
    if weighted:
        return p >= 1.0 and (m > tab.m_c1 or p > tab.p_c1)
    return p >= 1.0 and (m > tab.m_c or p > tab.p_c)


def extinction_constants(m: float, N: int, p: float, grid: Grid) -> tuple[float, float]:
    """Constants (c0, cp) in the extinction-time sandwich.

    c0^{-1} ||u0||_{L^1_phi1}^{1-m} <= T(u0) <= cp ||u0||_{L^p}^{1-m}, with
    c0 = lambda1 (1-m) ||phi1||_1^{1-m} and
    cp = (p+m-1)^2 / (4 m (1-m) (p-1)) * S2^2,
    S2 the (estimated) Sobolev-Poincare constant for the exponent 2p/(p+m-1).
    cp is sharp: d/dt ||u||_p^{1-m} >= -1/cp with equality approached as the
    solution nears the extremal separable shape.
    """
    if not 0.0 < m < 1.0:
        raise RegimeError("m must lie in (0, 1)")
    tab = critical_exponents(m, N)
    if p <= 1.0 or p < tab.p_c:
        raise RegimeError(f"upper extinction bound needs p > 1 and p >= p_c = {tab.p_c}")
    c0 = grid.lambda1 * (1.0 - m) * lp_norm(grid, grid.phi1, 1.0) ** (1.0 - m)
    s2 = sobolev_poincare_constant(grid, 2.0 * p / (p + m - 1.0))
    cp = (p + m - 1.0) ** 2 / (4.0 * m * (1.0 - m) * (p - 1.0)) * s2 ** 2
    return c0, cp
