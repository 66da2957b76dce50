"""Stationary Dirichlet states -lap(S^m) = c S and separable solutions.

With V = S^m and p = 1/m the stationary problem is the Lane-Emden-Fowler
equation -lap V = c V^p.  On intervals and balls the positive solution is
radial and unique, so it is computed by shooting from the center, mapped to
the requested (domain, c) through the scaling V -> a V(b x), and then polished
by a damped Newton iteration on the grid so that the discrete residual is at
machine level.  The polished profile makes the separable solution an exact
solution of the semidiscrete flow, which is what the gold-standard runs rely
on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .errors import FieldDomainError, NoSolutionError
from .grid import Grid

_SHOOT_R0 = 1e-4
_SHOOT_RMAX = 1e3


@dataclass(frozen=True)
class StationaryProfile:
    """Positive stationary state on a grid: V = S^m solves -lap V = c V^p."""

    grid: Grid
    p: float
    c: float
    V: np.ndarray
    S: np.ndarray
    induced_T: float     # 1 / ((1-m) c), the extinction time of the separable solution
    residual: float      # sup |-lap_h V - c V^p| after polishing

    @property
    def m(self) -> float:
        return 1.0 / self.p


def _shoot_unit(p: float, dim: int) -> tuple[float, object]:
    """Integrate W'' + (dim-1) W'/r + W^p = 0, W(0)=1, W'(0)=0 to its first zero.

    Returns (rho, dense_solution) where W(rho) = 0.
    """
    a2 = -1.0 / (2.0 * dim)
    a4 = p / (8.0 * dim * (dim + 2.0))
    r0 = _SHOOT_R0
    y0 = [1.0 + a2 * r0 ** 2 + a4 * r0 ** 4, 2.0 * a2 * r0 + 4.0 * a4 * r0 ** 3]

    def rhs(r, y):
        w, dw = y
        return [dw, -((dim - 1.0) / r) * dw - abs(w) ** p * np.sign(w)]

    def hit_zero(r, y):
        return y[0]
    hit_zero.terminal = True
    hit_zero.direction = -1

    sol = solve_ivp(rhs, (r0, _SHOOT_RMAX), y0, method="RK45", rtol=1e-11,
                    atol=1e-13, dense_output=True, events=hit_zero)
    if sol.t_events[0].size == 0:
        raise NoSolutionError(
            f"radial profile from unit center value never vanishes (p = {p})")
    rho = float(sol.t_events[0][0])

    def w_of(r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        small = r < r0
        out[small] = 1.0 + a2 * r[small] ** 2 + a4 * r[small] ** 4
        out[~small] = sol.sol(np.clip(r[~small], r0, rho))[0]
        return np.maximum(out, 0.0)

    return rho, w_of


def _newton_polish(grid: Grid, p: float, c: float, v0: np.ndarray,
                   tol_rel: float = 1e-13, max_iter: int = 60) -> np.ndarray:
    """Drive K V = c vols V^p to machine residual, keeping V > 0 inside."""
    diag, off, vols = grid.stiff_diag, grid.stiff_off, grid.vols
    ab = np.zeros((3, grid.n))

    def stiff_apply(v):
        kv = diag * v
        kv[:-1] += off * v[1:]
        kv[1:] += off * v[:-1]
        return kv

    v = np.maximum(v0, 0.0)
    scale = np.max(v)
    res = stiff_apply(v) - c * vols * v ** p
    best = float(np.max(np.abs(res) / vols))
    for _ in range(max_iter):
        if best <= tol_rel * scale * grid.lambda1 + 1e-300:
            break
        ab[0, 1:] = off
        ab[1, :] = diag - c * p * vols * np.maximum(v, 0.0) ** (p - 1.0)
        ab[2, :-1] = off
        step = solve_banded((1, 1), ab, -res)
        lam = 1.0
        for _ in range(40):
            trial = v + lam * step
            if np.all(trial > 0.0):
                r_trial = stiff_apply(trial) - c * vols * trial ** p
                err = float(np.max(np.abs(r_trial) / vols))
                if err < best:
                    v, res, best = trial, r_trial, err
                    break
            lam *= 0.5
        else:
            break
    return v


def solve_lef(grid: Grid, p: float, c: float) -> StationaryProfile:
    """Positive solution of -lap V = c V^p with zero trace on the grid's domain.

    p = 1 is admitted as a degenerate convenience input and returns the linear
    eigenpair (V = phi1, c = lambda1, infinite induced extinction time).
    For balls in dimension N >= 3 the exponent must satisfy p < (N+2)/(N-2);
    beyond it there is no positive solution and NoSolutionError is raised.
    """
    if c <= 0.0:
        raise FieldDomainError("c must be positive")
    if p < 1.0:
        raise FieldDomainError("p must be >= 1")

    if p == 1.0:
        v = grid.phi1.copy()
        return StationaryProfile(grid=grid, p=1.0, c=grid.lambda1, V=v, S=v.copy(),
                                 induced_T=math.inf, residual=_residual(grid, v, grid.lambda1, 1.0))

    N = grid.spec.dimension
    if grid.spec.kind == "ball" and N >= 3 and p >= (N + 2) / (N - 2):
        raise NoSolutionError(
            f"no positive stationary state on the ball for p = {p} >= (N+2)/(N-2) = {(N + 2) / (N - 2)}")

    if grid.spec.kind == "ball":
        dim, radius, arg = N, grid.spec.size, grid.coords
    else:
        dim, radius = 1, 0.5 * grid.spec.size
        arg = np.abs(grid.coords - 0.5 * grid.spec.size)

    rho, w_of = _shoot_unit(p, dim)
    beta = rho / radius
    # alpha solves c_req = beta^2 alpha^{1-p}; in logs for p near 1.
    alpha = math.exp((2.0 * math.log(beta) - math.log(c)) / (p - 1.0))
    v0 = alpha * w_of(beta * arg)

    v = _newton_polish(grid, p, c, v0)
    if np.any(v <= 0.0):
        raise NoSolutionError("polished profile lost positivity")
    res = _residual(grid, v, c, p)
    m = 1.0 / p
    v.setflags(write=False)
    s = v ** p
    s.setflags(write=False)
    return StationaryProfile(grid=grid, p=p, c=c, V=v, S=s,
                             induced_T=1.0 / ((1.0 - m) * c), residual=res)


def _residual(grid: Grid, v: np.ndarray, c: float, p: float) -> float:
    return float(np.max(np.abs(-grid.laplacian_apply(v) - c * v ** p)))


def separable_solution(profile: StationaryProfile, t: float) -> np.ndarray:
    """The closed-form flow ((T-t)/T)^{1/(1-m)} S at time t, 0 <= t <= T."""
    T = profile.induced_T
    if t < 0.0 or t > T:
        raise FieldDomainError(f"t = {t} outside [0, {T}]")
    m = profile.m
    return ((T - t) / T) ** (1.0 / (1.0 - m)) * profile.S
