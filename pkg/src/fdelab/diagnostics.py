"""Trajectory-level estimates: monotone quantities, smoothing constants,
extinction sandwiches, Harnack bands, and entropy decay rates.

Every report is a pure function of (trajectory, grid, parameters).  Constants
the theory leaves implicit are measured and reported, never asserted; PASS
criteria are formulated as finiteness, monotonicity, datum-independence
overlap, or exponent match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FieldDomainError, PreconditionError, RegimeError
from .exponents import critical_exponents, extinction_constants, theta
from .grid import (Grid, grad_norm_of_power, hminus1_norm, lp_norm,
                   lp_phi1_norm, solve_poisson)
from .solver import RescaledTrajectory, Trajectory
from .spectral import SpectralData
from .stationary import StationaryProfile

_TINY = 1e-300
_U_FLOOR_REL = 1e-6     # nodes below this relative level are pure noise in ratios


def rayleigh_quotients(grid: Grid, u: np.ndarray, m: float) -> tuple[float, float]:
    """Nonlinear Rayleigh quotient and its dual.

    Q  = ||grad u^m||_2^2 / ||u||_{1+m}^{2m},
    Q* = ||u||_{1+m}^{1+m} / ||u||_{H^-1}^{1+m};  both decrease along the flow.
    """
    u = np.asarray(u, dtype=float)
    n_1pm = lp_norm(grid, u, 1.0 + m)
    if n_1pm <= 0.0:
        raise FieldDomainError("Rayleigh quotients undefined for the zero field")
    q = grad_norm_of_power(grid, u, m) ** 2 / n_1pm ** (2.0 * m)
    qstar = n_1pm ** (1.0 + m) / hminus1_norm(grid, u) ** (1.0 + m)
    return q, qstar


# ---------------------------------------------------------------------------
# Benilan-Crandall


@dataclass(frozen=True)
class BenilanCrandallReport:
    max_violation: float            # sup over pairs/nodes of [(du/dt)(1-m)t/u - 1]_+
    nq_ratios: dict                 # q -> sup_t of the normalized N_q bound ratio
    pairs_checked: int


def benilan_crandall_report(traj: Trajectory, m: float | None = None,
                            q_list: tuple[float, ...] = (2.0, 4.0)) -> BenilanCrandallReport:
    """Discrete time-monotonicity check u_t <= u / ((1-m) t).

    Convention: the difference quotient over [t_i, t_{i+1}] is compared with
    u(t_{i+1}) / ((1-m) t_i), which the exact solution satisfies (u/t grows
    wherever u does); the reported violation is pure scheme error.  The i = 0
    pair has t_i = 0 and can never violate.  The N_q companion bound
    N_q^{1/q}[(u_t)_+/u](t) <= q ||u0||_1^{1/q} / ((q-1)(1-m) t) is reported
    as a ratio, masked below the noise floor.
    """
    if len(traj.times) < 3:
        raise PreconditionError("need at least 3 snapshots")
    m = traj.m if m is None else m
    grid = traj.grid
    u0_l1 = lp_norm(grid, traj.states[0], 1.0)
    worst = 0.0
    ratios = {q: 0.0 for q in q_list}
    n_pairs = 0
    for i in range(len(traj.times) - 1):
        t_lo, t_hi = traj.times[i], traj.times[i + 1]
        if t_lo <= 0.0:
            continue
        n_pairs += 1
        u_lo, u_hi = traj.states[i], traj.states[i + 1]
        dudt = (u_hi - u_lo) / (t_hi - t_lo)
        floor = _U_FLOOR_REL * float(np.max(u_hi, initial=0.0))
        ok = u_hi > floor
        if not np.any(ok):
            continue
        ratio = dudt[ok] * (1.0 - m) * t_lo / u_hi[ok]
        worst = max(worst, float(np.max(ratio - 1.0, initial=0.0)))
        if u0_l1 > 0.0:
            w = np.where(ok, np.maximum(dudt, 0.0) / np.maximum(u_hi, _TINY), 0.0)
            for q in q_list:
                nq = float(grid.quad_weights @ (w ** q * u_hi))
                bound_ratio = (nq ** (1.0 / q) * t_lo * (q - 1.0) * (1.0 - m)
                               / (q * u0_l1 ** (1.0 / q)))
                ratios[q] = max(ratios[q], bound_ratio)
    return BenilanCrandallReport(max_violation=worst, nq_ratios=ratios,
                                 pairs_checked=n_pairs)


# ---------------------------------------------------------------------------
# Smoothing constants


@dataclass(frozen=True)
class SmoothingReport:
    times: np.ndarray
    kappa: np.ndarray               # ||u(t)||_inf t^{N theta} / datum norm power
    kappa_boundary: np.ndarray      # ||u^m(t)/phi1||_inf t^{N theta + 1} / same
    sup_kappa: float
    sup_kappa_boundary: float
    weighted: bool
    p: float


def smoothing_report(traj: Trajectory, p: float, weighted: bool = False) -> SmoothingReport:
    """Measured smoothing constants over t <= T/2 (or the whole run if no T)."""
    grid, m = traj.grid, traj.m
    N = grid.spec.dimension
    th = theta(m, N, p, weighted=weighted)
    u0 = traj.states[0]
    if weighted:
        datum = lp_phi1_norm(grid, u0, p) ** (p * th)
    else:
        datum = lp_norm(grid, u0, p) ** (2.0 * p * th)
    if datum <= 0.0:
        raise FieldDomainError("zero initial datum")
    t_end = 0.5 * traj.extinction_time if traj.reached else traj.times[-1]
    keep = (traj.times > 0.0) & (traj.times <= t_end)
    ts = traj.times[keep]
    kap = np.empty(ts.size)
    kap_b = np.empty(ts.size)
    for j, i in enumerate(np.nonzero(keep)[0]):
        u = traj.states[i]
        sup = float(np.max(u, initial=0.0))
        t = traj.times[i]
        kap[j] = sup * t ** (N * th) / datum
        kap_b[j] = float(np.max(u ** m / grid.phi1)) * t ** (N * th + 1.0) / datum
    return SmoothingReport(times=ts, kappa=kap, kappa_boundary=kap_b,
                           sup_kappa=float(np.max(kap, initial=0.0)),
                           sup_kappa_boundary=float(np.max(kap_b, initial=0.0)),
                           weighted=weighted, p=p)


# ---------------------------------------------------------------------------
# Extinction sandwich and decay fits


@dataclass(frozen=True)
class ExtinctionSandwichReport:
    t_num: float
    lower: float
    upper: float                    # already widened
    c0: float
    cp: float
    p: float
    passed: bool


def extinction_sandwich(traj: Trajectory, p: float, widen: float = 1.1) -> ExtinctionSandwichReport:
    """c0^{-1} ||u0||_{L1_phi1}^{1-m} <= T_num <= widen * cp ||u0||_{Lp}^{1-m}.

    The upper end is widened (default +10%) because the Sobolev-Poincare
    constant entering cp is a lower estimate.
    """
    t_num = traj.require_extinction()
    grid, m = traj.grid, traj.m
    c0, cp = extinction_constants(m, grid.spec.dimension, p, grid)
    u0 = traj.states[0]
    lower = lp_phi1_norm(grid, u0, 1.0) ** (1.0 - m) / c0
    upper = widen * cp * lp_norm(grid, u0, p) ** (1.0 - m)
    return ExtinctionSandwichReport(t_num=t_num, lower=lower, upper=upper,
                                    c0=c0, cp=cp, p=p,
                                    passed=lower <= t_num <= upper)


@dataclass(frozen=True)
class DecayFitReport:
    exponent: float
    stderr: float
    n_points: int
    window: tuple[float, float]
    p: float


def lp_decay_fit(traj: Trajectory, p: float,
                 window: tuple[float, float] = (0.5, 0.95)) -> DecayFitReport:
    """Least-squares slope of log ||u(t)||_p against log(T - t).

    For m > m_s and p = 1+m the sharp extinction rate gives slope 1/(1-m).
    """
    T = traj.require_extinction()
    lo, hi = window[0] * T, window[1] * T
    keep = (traj.times >= lo) & (traj.times <= hi)
    idx = np.nonzero(keep)[0]
    if idx.size < 8:
        raise PreconditionError(f"only {idx.size} snapshots in the fit window")
    x = np.log(T - traj.times[idx])
    y = np.array([math.log(max(lp_norm(traj.grid, traj.states[i], p), _TINY))
                  for i in idx])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(idx.size - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / max(sxx, _TINY))
    return DecayFitReport(exponent=float(slope), stderr=stderr, n_points=int(idx.size),
                          window=window, p=p)


# ---------------------------------------------------------------------------
# Global Harnack band


@dataclass(frozen=True)
class GhpBandReport:
    times: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    inf_lo: float
    sup_hi: float
    power_lo: float
    power_hi: float
    passed: bool                    # positive finite band (matching-power form)


def ghp_band(traj: Trajectory, m: float | None = None,
             window: tuple[float, float] = (0.5, 0.95),
             p: float | None = None) -> GhpBandReport:
    """Per-time extremes of u^m / (phi1 (T-t)^power) over a time window.

    For m > m_s the powers match (m/(1-m)); in the critical/subcritical range
    the upper and lower exponents are corrected by the datum integrability p
    as the theory prescribes, and the band is reported rather than asserted.
    """
    T = traj.require_extinction()
    m = traj.m if m is None else m
    grid = traj.grid
    N = grid.spec.dimension
    tab = critical_exponents(m, N)
    base = m / (1.0 - m)
    if tab.supercritical:
        power_lo = power_hi = base
    else:
        if p is None:
            raise RegimeError("subcritical/critical band needs the datum exponent p")
        th = theta(m, N, p)
        corr = 2.0 * th * max(p - (1.0 + m), 0.0) / (1.0 - m)
        power_hi = base - corr
        power_lo = base + (p - 2.0 * m + 1.0) * corr
    keep = (traj.times >= window[0] * T) & (traj.times <= window[1] * T)
    idx = np.nonzero(keep)[0]
    ts = traj.times[idx]
    lo = np.empty(ts.size)
    hi = np.empty(ts.size)
    for j, i in enumerate(idx):
        ratio = traj.states[i] ** m / grid.phi1
        rem = T - traj.times[i]
        lo[j] = float(np.min(ratio)) / rem ** power_lo
        hi[j] = float(np.max(ratio)) / rem ** power_hi
    inf_lo = float(np.min(lo, initial=math.inf))
    sup_hi = float(np.max(hi, initial=0.0))
    passed = bool(inf_lo > 0.0 and math.isfinite(sup_hi) and tab.supercritical)
    return GhpBandReport(times=ts, lo=lo, hi=hi, inf_lo=inf_lo, sup_hi=sup_hi,
                         power_lo=power_lo, power_hi=power_hi, passed=passed)


# ---------------------------------------------------------------------------
# Almost-representation formula


@dataclass(frozen=True)
class RepresentationReport:
    t0: float
    t1: float
    violation_lower: float          # sup_x [t1-side excess], relative to ||u^m(t1)||_inf
    violation_upper: float          # sup_x [t0-side excess], relative to ||u^m(t0)||_inf
    tol: float
    passed: bool


def representation_sandwich(traj: Trajectory, t0: float, t1: float,
                            tol: float = 1e-3) -> RepresentationReport:
    """Green-transform sandwich between two times of one trajectory:

    u^m(t1)/t1^{m/(1-m)} <= G[u(t0)-u(t1)] / ((1-m)(t1^{1/(1-m)} - t0^{1/(1-m)}))
                         <= u^m(t0)/t0^{m/(1-m)}   at every node.
    """
    if not 0.0 < t0 < t1:
        raise FieldDomainError("need 0 < t0 < t1")
    grid, m = traj.grid, traj.m
    i0 = int(np.argmin(np.abs(traj.times - t0)))
    i1 = int(np.argmin(np.abs(traj.times - t1)))
    if i0 == i1:
        raise FieldDomainError("t0 and t1 resolve to the same snapshot")
    t0, t1 = float(traj.times[i0]), float(traj.times[i1])
    u0, u1 = traj.states[i0], traj.states[i1]
    g = solve_poisson(grid, u0 - u1)
    ex = 1.0 / (1.0 - m)
    mid = g / ((1.0 - m) * (t1 ** ex - t0 ** ex))
    um1, um0 = u1 ** m, u0 ** m
    scale1 = max(float(np.max(um1)), _TINY)
    scale0 = max(float(np.max(um0)), _TINY)
    v_low = float(np.max(um1 - t1 ** (m * ex) * mid, initial=0.0)) / scale1
    v_up = float(np.max(t0 ** (m * ex) * mid - um0, initial=0.0)) / scale0
    return RepresentationReport(t0=t0, t1=t1, violation_lower=max(v_low, 0.0),
                                violation_upper=max(v_up, 0.0), tol=tol,
                                passed=max(v_low, 0.0) <= tol and max(v_up, 0.0) <= tol)


# ---------------------------------------------------------------------------
# Relative error and entropies along the rescaled flow


@dataclass(frozen=True)
class RelativeErrorReport:
    times: np.ndarray
    delta: np.ndarray               # sup |v/V - 1|
    entropy: np.ndarray             # nonlinear entropy E[v]
    linear_entropy: np.ndarray      # E[f], f = v - V
    entropy_ratio: np.ndarray       # 2 E[v] / ((p+1) E[f]), -> 1 as delta -> 0
    cbar_measured: float            # sup (|sqrt(ratio)| deviation) / delta, delta < 1/(2p)
    q_nonlinear: np.ndarray         # (k_p, n_times) nonlinear Rayleigh quotients
    fitted_rate: float              # of the nonlinear entropy over the fit window
    expected_rate: float            # 2 lambda_p / p
    fit_window: tuple[float, float]
    in_regime: bool                 # False = NotInAsymptoticRegime


def relative_error_and_entropy(resc: RescaledTrajectory, profile: StationaryProfile,
                               spectral: SpectralData,
                               fit_window: tuple[float, float] = (0.6, 1.0)) -> RelativeErrorReport:
    """Entropy decay along the rescaled flow, compared against the sharp rate.

    The nonlinear entropy is E[v] = int (v^{p+1}-V^{p+1}) - (p+1)/p (v^p-V^p) V;
    the linear one uses f = v - V.  Their ratio tends to (p+1)/2, and the
    measured comparison constant is reported instead of asserted.
    """
    m = resc.m
    tab = critical_exponents(m, resc.grid.spec.dimension)
    if not tab.supercritical:
        raise RegimeError("relative-error asymptotics need supercritical m")
    grid = resc.grid
    p = profile.p
    V = profile.V
    w_quad = grid.quad_weights
    n_t = len(resc.times)
    delta = np.empty(n_t)
    ent = np.empty(n_t)
    lin = np.empty(n_t)
    k_p = spectral.k_p
    qn = np.zeros((k_p, n_t))
    vp1 = V ** (p + 1.0)
    vp = V ** p
    for j in range(n_t):
        v = resc.w[j] ** m
        f = v - V
        delta[j] = float(np.max(np.abs(f) / V))
        ent[j] = float(w_quad @ ((v ** (p + 1.0) - vp1)
                                 - (p + 1.0) / p * (v ** p - vp) * V))
        lin[j] = float(w_quad @ (f * f * V ** (p - 1.0)))
        if ent[j] > 0.0:
            a = spectral.eigenfields[:, :k_p].T @ (w_quad * (v ** p - vp))
            qn[:, j] = np.abs(a) / math.sqrt(ent[j])
    ratio = 2.0 * ent / np.maximum((p + 1.0) * lin, _TINY)
    in_regime = bool(np.any(delta < 1.0))
    small = (delta > 0.0) & (delta < 1.0 / (2.0 * p)) & (lin > 0.0) & (ent > 0.0)
    if np.any(small):
        dev = np.abs(np.sqrt(np.maximum(ratio[small], 0.0)) - 1.0)
        cbar = float(np.max(dev / delta[small]))
    else:
        cbar = math.nan
    t_end = resc.times[-1]
    lo, hi = fit_window[0] * t_end, fit_window[1] * t_end
    keep = (resc.times >= lo) & (resc.times <= hi) & (ent > 0.0)
    if np.sum(keep) >= 4:
        rate = -float(np.polyfit(resc.times[keep], np.log(ent[keep]), 1)[0])
    else:
        rate = math.nan
    return RelativeErrorReport(times=resc.times, delta=delta, entropy=ent,
                               linear_entropy=lin, entropy_ratio=ratio,
                               cbar_measured=cbar, q_nonlinear=qn,
                               fitted_rate=rate,
                               expected_rate=2.0 * spectral.lambda_p / p,
                               fit_window=fit_window, in_regime=in_regime)


# ---------------------------------------------------------------------------
# Subcritical tracks


@dataclass(frozen=True)
class QTrack:
    q: float
    on_power: bool                  # track of ||w^m||_q rather than ||w||_q
    series: np.ndarray
    tail_log_change: float
    trend: str                      # "to_zero" | "bounded" | "increasing"


@dataclass(frozen=True)
class SubcriticalReport:
    tracks: list
    l1pm_sup_tail: float            # sup of ||w||_{1+m} over the late window
    l1pm_bound: float               # explicit bound from measured Q*[u0] and T
    l1pm_bound_ok: bool
    qstar_initial: float


def subcritical_tracks(resc: RescaledTrajectory, q_list: tuple[float, ...],
                       power_tracks: tuple[float, ...] = (1.0,),
                       tail: float = 0.4,
                       flat_tol: float = 0.05) -> SubcriticalReport:
    """Trend classification of ||w||_q (and ||w^m||_q) over the tail window.

    Expected in the subcritical range on star-shaped domains: the L^{1+m}
    norm stays below an explicit multiple of Q*[u0]^{2/(1-m^2)}, low norms of
    w^m vanish, and ||w||_q blows up for q >= p_c.  The L^{1+m} bound is the
    explicit chain (2/(1+m))^{1/(1+m)} (3 Q*[u0])^{2/(1-m^2)} T^{1/(1-m)},
    valid for rescaled t >= T log(3/2).
    """
    m = resc.m
    grid = resc.grid
    tab = critical_exponents(m, grid.spec.dimension)
    if tab.supercritical:
        raise RegimeError("subcritical tracks need m <= m_s")
    times = resc.times
    t_end = times[-1]
    tail_keep = times >= (1.0 - tail) * t_end

    def classify(series: np.ndarray) -> tuple[float, str]:
        s = np.maximum(series[tail_keep], _TINY)
        change = math.log(s[-1] / s[0])
        if change <= -flat_tol:
            return change, "to_zero"
        if change >= flat_tol:
            return change, "increasing"
        return change, "bounded"

    tracks: list[QTrack] = []
    for q in q_list:
        series = np.array([lp_norm(grid, w, q) for w in resc.w])
        ch, tr = classify(series)
        tracks.append(QTrack(q=q, on_power=False, series=series,
                             tail_log_change=ch, trend=tr))
    for q in power_tracks:
        series = np.array([lp_norm(grid, w ** m, q) for w in resc.w])
        ch, tr = classify(series)
        tracks.append(QTrack(q=q, on_power=True, series=series,
                             tail_log_change=ch, trend=tr))

    _, qstar0 = rayleigh_quotients(grid, resc.w[0], m)
    bound = ((2.0 / (1.0 + m)) ** (1.0 / (1.0 + m))
             * (3.0 * qstar0) ** (2.0 / (1.0 - m ** 2))
             * resc.T ** (1.0 / (1.0 - m)))
    window = times >= resc.T * math.log(1.5)
    l1pm = np.array([lp_norm(grid, w, 1.0 + m) for w in resc.w])
    sup_tail = float(np.max(l1pm[window], initial=0.0))
    return SubcriticalReport(tracks=tracks, l1pm_sup_tail=sup_tail,
                             l1pm_bound=bound, l1pm_bound_ok=sup_tail <= bound,
                             qstar_initial=qstar0)


# ---------------------------------------------------------------------------
# Interior Harnack diagnostic


@dataclass(frozen=True)
class HarnackReport:
    t0: float
    t_star: float
    window: tuple[float, float]
    h_p: float
    sup_inf_ratio: float            # worst over snapshots inside the window
    n_times: int
    radius: float
    p: float


def harnack_diagnostic(traj: Trajectory, radius: float, t0: float | None = None,
                       p: float | None = None) -> HarnackReport:
    """Realized sup/inf ratio over a concentric interior ball.

    t_star follows the intrinsic-time convention with unit prefactor:
    t_star = radius^{2 - N(1-m)} ||u(t0)||_{L1(ball)}^{1-m}; the ratio is
    measured at snapshot times in [t0 + t_star/2, t0 + t_star] (capped inside
    the run).  No constant is asserted; finiteness is the check.
    """
    grid, m = traj.grid, traj.m
    spec = grid.spec
    if radius >= spec.size:
        raise FieldDomainError("ball touches the boundary")
    if spec.kind == "ball":
        inside = grid.coords <= radius
    else:
        inside = np.abs(grid.coords - 0.5 * spec.size) <= radius
    if not np.any(inside):
        raise FieldDomainError("ball contains no grid nodes")
    N = spec.dimension
    tab = critical_exponents(m, N)
    if p is None:
        p = 1.0 if m > tab.m_c else 1.05 * max(tab.p_c, 1.0)
    if t0 is None:
        t0 = float(traj.times[1])
    i0 = int(np.argmin(np.abs(traj.times - t0)))
    t0 = float(traj.times[i0])
    u_t0 = traj.states[i0]
    mass = float(grid.quad_weights[inside] @ u_t0[inside])
    t_star = radius ** (2.0 - N * (1.0 - m)) * mass ** (1.0 - m)

    ball_measure = float(np.sum(grid.quad_weights[inside]))
    mean_p = float(grid.quad_weights[inside] @ u_t0[inside] ** p)
    th = theta(m, N, p)
    if mass > 0.0 and mean_p > 0.0:
        h_p = ((ball_measure * mean_p ** (1.0 / p))
               / (ball_measure ** (1.0 / p) * mass)) ** (2.0 * p * th)
    else:
        h_p = math.inf

    t_end = traj.require_extinction() if traj.reached else float(traj.times[-1])
    t_star_eff = min(t_star, 0.98 * (t_end - t0))
    t_lo, t_hi = t0 + 0.5 * t_star_eff, t0 + t_star_eff
    keep = (traj.times >= t_lo) & (traj.times <= t_hi)
    worst = 0.0
    count = 0
    for i in np.nonzero(keep)[0]:
        u = traj.states[i][inside]
        um = float(np.min(u))
        if um <= 0.0:
            worst = math.inf
            count += 1
            continue
        worst = max(worst, float(np.max(u)) / um)
        count += 1
    return HarnackReport(t0=t0, t_star=t_star, window=(t_lo, t_hi), h_p=h_p,
                         sup_inf_ratio=worst, n_times=count, radius=radius, p=p)


# ---------------------------------------------------------------------------
# Energy identities


@dataclass(frozen=True)
class EnergyIdentityReport:
    lpm_identity_mismatch: float      # centered d/dt ||u||_{1+m}^{1+m} vs -(1+m)||grad u^m||^2
    hstar_identity_mismatch: float    # centered d/dt ||u||_{H*}^2 vs -2 ||u||_{1+m}^{1+m}
    chain_violation: float            # worst relative violation of the two-step bound
    qstar_bound_violation: float      # worst relative violation of the Q* extinction bound
    triples_checked: int


def energy_identities(traj: Trajectory, m: float | None = None,
                      thin: int | None = None) -> EnergyIdentityReport:
    """Discrete checks of the dissipation identities and the Q* chain."""
    if len(traj.times) < 3:
        raise PreconditionError("need at least 3 snapshots")
    m = traj.m if m is None else m
    grid = traj.grid
    times = traj.times
    n = len(times)
    if thin is None:
        thin = max(1, n // 160)
    idx = list(range(0, n, thin))
    if idx[-1] != n - 1:
        idx.append(n - 1)

    e_lpm = np.array([lp_norm(grid, traj.states[i], 1.0 + m) ** (1.0 + m) for i in idx])
    e_grad = np.array([grad_norm_of_power(grid, traj.states[i], m) ** 2 for i in idx])
    e_hstar = np.array([hminus1_norm(grid, traj.states[i]) ** 2 for i in idx])
    ts = times[idx]

    mis1 = 0.0
    mis2 = 0.0
    floor1 = 1e-9 * float(np.max(e_grad, initial=0.0))
    floor2 = 1e-9 * float(np.max(e_lpm, initial=0.0))

    def ddt(series: np.ndarray, j: int) -> float:
        # three-point derivative exact for quadratics on nonuniform spacing
        hm = ts[j] - ts[j - 1]
        hp = ts[j + 1] - ts[j]
        return float((series[j + 1] * hm ** 2 - series[j - 1] * hp ** 2
                      + series[j] * (hp ** 2 - hm ** 2)) / (hp * hm * (hp + hm)))

    for j in range(1, len(idx) - 1):
        # skip stencils where the quantity moves by a large factor (transient)
        if e_lpm[j] <= 0.0 or abs(e_lpm[j + 1] - e_lpm[j - 1]) > 0.5 * e_lpm[j]:
            continue
        rhs1 = -(1.0 + m) * e_grad[j]
        if abs(rhs1) > floor1:
            mis1 = max(mis1, abs(ddt(e_lpm, j) - rhs1) / abs(rhs1))
        rhs2 = -2.0 * e_lpm[j]
        if abs(rhs2) > floor2:
            mis2 = max(mis2, abs(ddt(e_hstar, j) - rhs2) / abs(rhs2))

    # chain over thinned triples, skipping gaps below five median steps
    dt_floor = 5.0 * float(np.median(np.diff(times))) if n > 1 else 0.0
    chain = 0.0
    triples = 0
    for j in range(0, len(idx) - 2):
        t0v, t1v, t2v = ts[j], ts[j + 1], ts[j + 2]
        if t1v - t0v < dt_floor or t2v - t1v < dt_floor:
            continue
        g2 = e_grad[j + 2]
        mid = e_lpm[j + 1] / (2.0 * m * (t2v - t1v))
        top = e_hstar[j] / (2.0 * m * (1.0 + m) * (t2v - t1v) * (t1v - t0v))
        if mid > 0:
            chain = max(chain, (g2 - mid) / mid)
        if top > 0:
            chain = max(chain, (mid - top) / top)
        triples += 1

    # Q* extinction bound away from the unresolved bracket endgame (t <= 0.95 T)
    qb = 0.0
    if traj.reached:
        T = traj.extinction_time
        try:
            _, qstar0 = rayleigh_quotients(grid, traj.states[0], m)
            ex = 1.0 / (1.0 - m)
            for j, i in enumerate(idx):
                if times[i] > 0.95 * T:
                    continue
                bound = (2.0 * qstar0 * (T - times[i])) ** ex
                have = math.sqrt(max(e_hstar[j], 0.0))
                if bound > 0:
                    qb = max(qb, (have - bound) / bound)
        except FieldDomainError:
            qb = math.nan
    return EnergyIdentityReport(lpm_identity_mismatch=mis1, hstar_identity_mismatch=mis2,
                                chain_violation=chain, qstar_bound_violation=qb,
                                triples_checked=triples)


# ---------------------------------------------------------------------------
# Monotonicity suite


@dataclass(frozen=True)
class MonotonicityReport:
    max_increase: dict              # name -> worst relative increase between snapshot pairs
    tol: float
    passed: bool


def monotonicity_report(traj: Trajectory, resc: RescaledTrajectory | None = None,
                        tol: float = 1e-6) -> MonotonicityReport:
    """Relative increase of the monotone quantities along the flow.

    Checks Q, Q*, the weighted L^1/L^2 norms, and the H^-1 norm on the
    original trajectory; when a rescaled trajectory is supplied, the
    H^1-Lyapunov functional of the rescaled flow is checked as well.
    """
    grid, m = traj.grid, traj.m
    names = ("Q", "Qstar", "L1_phi1", "L2_phi1", "Hminus1")
    series: dict[str, list[float]] = {k: [] for k in names}
    for u in traj.states:
        if float(np.max(u, initial=0.0)) <= 0.0:
            break
        q, qs = rayleigh_quotients(grid, u, m)
        series["Q"].append(q)
        series["Qstar"].append(qs)
        series["L1_phi1"].append(lp_phi1_norm(grid, u, 1.0))
        series["L2_phi1"].append(lp_phi1_norm(grid, u, 2.0))
        series["Hminus1"].append(hminus1_norm(grid, u))
    worst: dict[str, float] = {}
    for k, vals in series.items():
        arr = np.asarray(vals)
        if arr.size < 2:
            worst[k] = 0.0
            continue
        rel = np.diff(arr) / np.maximum(arr[:-1], _TINY)
        worst[k] = float(np.max(rel, initial=0.0))
    if resc is not None:
        c = resc.c
        vals = []
        for w in resc.w:
            vals.append(0.5 * grid.dirichlet_form(w ** m)
                        - c * m / (1.0 + m) * lp_norm(grid, w, 1.0 + m) ** (1.0 + m))
        arr = np.asarray(vals)
        scale = np.maximum(np.abs(arr[:-1]), 1e-12 * float(np.max(np.abs(arr))) + _TINY)
        worst["F_lyapunov"] = float(np.max(np.diff(arr) / scale, initial=0.0))
    return MonotonicityReport(max_increase=worst, tol=tol,
                              passed=all(v <= tol for v in worst.values()))


# ---------------------------------------------------------------------------
# Per-snapshot series (CSV exports)


def trajectory_series(traj: Trajectory) -> dict[str, np.ndarray]:
    """Per-snapshot scalar series used by reports and CSV artifacts."""
    grid, m = traj.grid, traj.m
    cols: dict[str, list[float]] = {
        "time": [], "sup": [], "L1_phi1": [], "L2_phi1": [], "L1pm": [],
        "Hminus1": [], "grad_um": [], "Q": [], "Qstar": []}
    for t, u in zip(traj.times, traj.states):
        cols["time"].append(float(t))
        sup = float(np.max(u, initial=0.0))
        cols["sup"].append(sup)
        cols["L1_phi1"].append(lp_phi1_norm(grid, u, 1.0))
        cols["L2_phi1"].append(lp_phi1_norm(grid, u, 2.0))
        cols["L1pm"].append(lp_norm(grid, u, 1.0 + m))
        cols["Hminus1"].append(hminus1_norm(grid, u))
        cols["grad_um"].append(grad_norm_of_power(grid, u, m))
        if sup > 0.0:
            q, qs = rayleigh_quotients(grid, u, m)
        else:
            q, qs = math.nan, math.nan
        cols["Q"].append(q)
        cols["Qstar"].append(qs)
    return {k: np.asarray(v) for k, v in cols.items()}
