"""Implicit time stepping for u_t = lap(u^m) to extinction, plus the
logarithmically rescaled flow.

The scheme is backward Euler with the nonlinear solve done by damped Newton
in the variable z = (u+)^m, where the Jacobian p*diag(vols*z^{p-1}) + dt*K is
an M-matrix; this keeps every accepted state nonnegative and preserves the
discrete comparison principle.  First order in dt, second order in h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

from .errors import ExtinctionNotReached, FieldDomainError, StepRejected
from .grid import Grid, lp_norm

_TINY = 1e-300


@dataclass(frozen=True)
class FlowState:
    time: float
    u: np.ndarray


@dataclass(frozen=True)
class SolverControls:
    """Knobs for the adaptive extinction march.

    dt grows by dt_growth on easy accepts and is halved on rejected steps;
    rel_change_target limits the per-step relative change of ||u||_{1+m}^{1-m}
    (the quantity that decays linearly in time near extinction), and close to
    extinction dt is additionally capped by near_extinction_frac times the
    estimated remaining time.
    """

    dt0: float = 1e-6
    dt_max: float = math.inf
    max_steps: int = 500_000
    snapshot_every: int = 1
    extinction_rtol: float = 1e-10
    rel_change_target: float = 0.005
    dt_growth: float = 1.3
    near_extinction_frac: float = 0.05
    newton_max_iter: int = 50

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "dt0", "dt_max", "max_steps", "snapshot_every", "extinction_rtol",
            "rel_change_target", "dt_growth", "near_extinction_frac", "newton_max_iter")}

    @staticmethod
    def from_dict(d: dict) -> "SolverControls":
        return SolverControls(**d)


@dataclass(frozen=True)
class Trajectory:
    grid: Grid
    m: float
    times: np.ndarray               # snapshot times, strictly increasing
    states: np.ndarray              # (len(times), nodes)
    extinction_time: float | None   # None when not reached
    extinction_bracket: tuple[float, float] | None
    step_log: np.ndarray            # accepted dt sequence
    controls: SolverControls

    @property
    def reached(self) -> bool:
        return self.extinction_time is not None

    def state(self, i: int) -> FlowState:
        return FlowState(time=float(self.times[i]), u=self.states[i])

    def require_extinction(self) -> float:
        if self.extinction_time is None:
            raise ExtinctionNotReached("trajectory did not reach extinction")
        return self.extinction_time


@dataclass(frozen=True)
class RescaledTrajectory:
    """Flow in self-similar variables: w(t) = e^{t/((1-m)T)} u(tau(t)),
    tau(t) = T (1 - e^{-t/T}).  Extinction maps to t -> infinity and the
    separable solution maps to the stationary profile."""

    grid: Grid
    m: float
    T: float
    times: np.ndarray               # rescaled times t
    tau: np.ndarray                 # matching original times
    w: np.ndarray                   # (len(times), nodes)
    source: str                     # "rescale" | "run_rcdp"
    blew_up: bool = False
    collapsed: bool = False         # supplied T exceeded the datum's extinction time

    @property
    def v(self) -> np.ndarray:
        return self.w ** self.m

    @property
    def c(self) -> float:
        return 1.0 / ((1.0 - self.m) * self.T)


def _newton_tol(dt: float, unorm: float, lam_max: float) -> float:
    rel = max(1e-13, 1e-15 * (1.0 + dt * lam_max))
    return min(rel * max(unorm, _TINY), 1e-11 * max(1.0, unorm))


def step_implicit(grid: Grid, state: FlowState, dt: float, m: float) -> FlowState:
    """One backward-Euler step: solve u+ - dt lap((u+)^m) = u with u+ >= 0."""
    if dt <= 0.0:
        raise FieldDomainError("dt must be positive")
    u = state.u
    if np.any(u < 0.0) or not np.all(np.isfinite(u)):
        raise FieldDomainError("state must be nonnegative and finite")
    z = _solve_implicit_power(grid, u, dt, m)
    return FlowState(time=state.time + dt, u=z ** (1.0 / m))


def _solve_implicit_power(grid: Grid, u: np.ndarray, dt: float, m: float,
                          max_iter: int = 50) -> np.ndarray:
    """Newton solve of vols*z^p + dt*K z = vols*u in z = (u+)^m, p = 1/m."""
    p = 1.0 / m
    vols, diag, off = grid.vols, grid.stiff_diag, grid.stiff_off
    unorm = float(np.max(u, initial=0.0))
    if unorm == 0.0:
        return np.zeros_like(u)
    lam_max = 2.0 * float(np.max(diag / vols))
    tol = _newton_tol(dt, unorm, lam_max)

    rhs = vols * u
    z = u ** m
    znorm = np.max(z)

    def residual(zv):
        kz = diag * zv
        kz[:-1] += off * zv[1:]
        kz[1:] += off * zv[:-1]
        return vols * zv ** p + dt * kz - rhs

    res = residual(z)
    err = float(np.max(np.abs(res) / vols))
    ab = np.zeros((2, grid.n))
    for _ in range(max_iter):
        if err <= tol:
            break
        ab[0, 1:] = dt * off
        ab[1, :] = p * vols * z ** (p - 1.0) + dt * diag
        try:
            chol = cholesky_banded(ab)
        except np.linalg.LinAlgError as exc:   # pragma: no cover
            raise StepRejected("implicit Jacobian factorization failed") from exc
        step = cho_solve_banded((chol, False), -res)
        lam, improved = 1.0, False
        for _ in range(30):
            trial = z + lam * step
            neg = trial < 0.0
            if np.any(neg):
                if float(np.min(trial)) < -1e-14 * max(1.0, znorm) and lam > 1e-3:
                    lam *= 0.5
                    continue
                trial = np.where(neg, 0.0, trial)
            r_trial = residual(trial)
            e_trial = float(np.max(np.abs(r_trial) / vols))
            if e_trial < err:
                z, res, err = trial, r_trial, e_trial
                znorm = np.max(z)
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    if err > tol:
        raise StepRejected(f"Newton stalled at residual {err:.3e} (tol {tol:.3e})")
    return z


def run_cdp(grid: Grid, u0: np.ndarray, m: float, controls: SolverControls = SolverControls()) -> Trajectory:
    """March the Dirichlet flow from u0 to extinction with adaptive dt."""
    if not 0.0 < m < 1.0:
        raise FieldDomainError("m must lie in (0, 1)")
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0.0) or not np.all(np.isfinite(u0)):
        raise FieldDomainError("u0 must be nonnegative and finite")

    sup0 = float(np.max(u0, initial=0.0))
    times = [0.0]
    states = [u0.copy()]
    step_log: list[float] = []
    if sup0 == 0.0:
        return Trajectory(grid=grid, m=m, times=np.array(times), states=np.array(states),
                          extinction_time=0.0, extinction_bracket=(0.0, 0.0),
                          step_log=np.array(step_log), controls=controls)

    eps_ext = controls.extinction_rtol * sup0
    t = 0.0
    u = u0.copy()
    dt = controls.dt0
    # history of (t, ||u||_{1+m}^{1-m}) for the extinction-time extrapolation
    decay_hist: list[tuple[float, float]] = [(0.0, lp_norm(grid, u0, 1.0 + m) ** (1.0 - m))]
    reached = False
    bracket = None
    accepted = 0

    while accepted < controls.max_steps:
        try:
            state = step_implicit(grid, FlowState(t, u), dt, m)
        except StepRejected:
            dt *= 0.5
            if dt < 1e-16 * max(t, controls.dt0):
                raise
            continue
        t_prev = t
        u, t = state.u, state.time
        accepted += 1
        step_log.append(dt)
        if accepted % controls.snapshot_every == 0:
            times.append(t)
            states.append(u.copy())

        y = lp_norm(grid, u, 1.0 + m) ** (1.0 - m)
        decay_hist.append((t, y))
        if len(decay_hist) > 8:
            decay_hist.pop(0)

        if float(np.max(u)) < eps_ext:
            if times[-1] != t:
                times.append(t)
                states.append(u.copy())
            reached = True
            bracket = (t_prev, t)
            break

        # dt controller: growth cap, relative-change limiter, remaining-time cap
        y_prev = decay_hist[-2][1]
        change = abs(y_prev - y) / max(y_prev, _TINY)
        dt_new = dt * controls.dt_growth
        if change > _TINY:
            dt_new = min(dt_new, dt * max(0.3, 0.9 * controls.rel_change_target / change))
        t_est = _extinction_estimate(decay_hist)
        if t_est is not None and t_est > t:
            dt_new = min(dt_new, controls.near_extinction_frac * (t_est - t))
        dt = min(dt_new, controls.dt_max)

    return Trajectory(grid=grid, m=m, times=np.asarray(times), states=np.asarray(states),
                      extinction_time=t if reached else None,
                      extinction_bracket=bracket,
                      step_log=np.asarray(step_log), controls=controls)


def _extinction_estimate(hist: list[tuple[float, float]]) -> float | None:
    """Zero crossing of the secant through the ||u||_{1+m}^{1-m} history."""
    if len(hist) < 3:
        return None
    (t0, y0), (t1, y1) = hist[0], hist[-1]
    if y0 <= y1 or y1 <= 0.0 or t1 <= t0:
        return None
    return t1 + y1 * (t1 - t0) / (y0 - y1)


def rescale(traj: Trajectory, n_out: int = 201, t_max: float | None = None) -> RescaledTrajectory:
    """Map an extinguished trajectory to self-similar variables.

    Samples the rescaled time uniformly and interpolates u linearly in the
    original time tau between snapshots.
    """
    T = traj.require_extinction()
    if len(traj.times) < 3:
        raise FieldDomainError("need at least 3 snapshots to rescale")
    # last snapshot strictly before the extinction declaration stays usable
    tau_end = traj.times[-2]
    auto_max = T * math.log(T / max(T - tau_end, _TINY))
    t_cap = auto_max if t_max is None else min(t_max, auto_max)
    ts = np.linspace(0.0, t_cap, n_out)
    taus = T * (1.0 - np.exp(-ts / T))
    m = traj.m
    w = np.empty((n_out, traj.grid.n))
    for j, (tj, tauj) in enumerate(zip(ts, taus)):
        uj = _interp_state(traj, tauj)
        w[j] = math.exp(tj / ((1.0 - m) * T)) * uj
    return RescaledTrajectory(grid=traj.grid, m=m, T=T, times=ts, tau=taus, w=w,
                              source="rescale")


def _interp_state(traj: Trajectory, tau: float) -> np.ndarray:
    times = traj.times
    i = int(np.searchsorted(times, tau, side="right")) - 1
    if i >= len(times) - 1:
        return traj.states[-1].copy()
    i = max(i, 0)
    t0, t1 = times[i], times[i + 1]
    lam = 0.0 if t1 == t0 else (tau - t0) / (t1 - t0)
    return (1.0 - lam) * traj.states[i] + lam * traj.states[i + 1]


def _fitted_reaction_factor(c: float, dt: float, m: float) -> float:
    """Half-step reaction factor f with f^2 - c dt f^{1-m} - 1 = 0.

    Exponential fitting: with this f the discrete stationary profile is an
    exact fixed point of the split step (plain exp(c dt / 2) leaves an O(dt^2)
    bias that the unstable separable direction amplifies).
    """
    f = math.exp(0.5 * c * dt)
    for _ in range(60):
        g = f * f - c * dt * f ** (1.0 - m) - 1.0
        dg = 2.0 * f - c * dt * (1.0 - m) * f ** (-m)
        f_new = f - g / dg
        if abs(f_new - f) <= 1e-16 * f:
            f = f_new
            break
        f = f_new
    return f


def run_rcdp(grid: Grid, u0: np.ndarray, m: float, T: float,
             controls: SolverControls = SolverControls(dt0=5e-3),
             horizon: float = 10.0,
             blowup_factor: float = 1e8) -> RescaledTrajectory:
    """Integrate the rescaled flow w_t = lap(w^m) + w/((1-m)T) to a fixed horizon.

    Strang splitting: exact half-steps for the linear reaction around the
    implicit diffusion solve.  Halts early with the blew_up flag when the
    sup norm exceeds blowup_factor * ||u0||_inf (expected for subcritical
    runs started from large data).
    """
    if not 0.0 < m < 1.0:
        raise FieldDomainError("m must lie in (0, 1)")
    if T <= 0.0:
        raise FieldDomainError("T must be positive")
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0.0) or not np.all(np.isfinite(u0)):
        raise FieldDomainError("u0 must be nonnegative and finite")
    c = 1.0 / ((1.0 - m) * T)
    sup0 = float(np.max(u0, initial=0.0))
    guard = blowup_factor * max(sup0, _TINY)

    floor = 1e-12 * max(sup0, _TINY)

    dt = min(controls.dt0, horizon)
    t = 0.0
    w = u0.copy()
    times = [0.0]
    snaps = [u0.copy()]
    blew_up = False
    collapsed = False
    accepted = 0
    factor = _fitted_reaction_factor(c, dt, m)
    while t < horizon - 1e-12 * horizon and accepted < controls.max_steps:
        dt_step = min(dt, horizon - t)
        if dt_step != dt:
            factor = _fitted_reaction_factor(c, dt_step, m)
        w_half = factor * w
        try:
            z = _solve_implicit_power(grid, w_half, dt_step, m,
                                      max_iter=controls.newton_max_iter)
        except StepRejected:
            dt *= 0.5
            factor = _fitted_reaction_factor(c, dt, m)
            if dt < 1e-14 * horizon:
                raise
            continue
        w = factor * z ** (1.0 / m)
        t += dt_step
        accepted += 1
        if accepted % controls.snapshot_every == 0 or t >= horizon - 1e-12 * horizon:
            times.append(t)
            snaps.append(w.copy())
        sup = float(np.max(w))
        if sup > guard or sup < floor:
            blew_up = sup > guard
            collapsed = not blew_up
            if times[-1] != t:
                times.append(t)
                snaps.append(w.copy())
            break
    ts = np.asarray(times)
    taus = T * (1.0 - np.exp(-ts / T))
    return RescaledTrajectory(grid=grid, m=m, T=T, times=ts, tau=taus,
                              w=np.asarray(snaps), source="run_rcdp", blew_up=blew_up,
                              collapsed=collapsed)
