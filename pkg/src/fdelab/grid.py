"""Discretization of the interval (0, L) and the radial ball B_R in R^N.

The mesh is uniform and vertex-centered.  The Laplacian is assembled in
conservative (finite-volume) form, which makes it symmetric and negative
definite with respect to the cell-volume inner product; on the ball the
origin carries a half cell and a zero-flux face, so the operator encodes
u'' + (N-1) u'/r with the regularity condition u'(0) = 0.  Dirichlet nodes
are eliminated: every nodal field is an array over interior nodes with an
implicit zero trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh_tridiagonal

from .errors import FieldDomainError, RegimeError

# Eigenpairs of the plain Laplacian kept on every grid (probes, p->1 limits).
_N_CACHED_EIGENPAIRS = 12


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere S^{N-1} (2 for N=1, 2*pi for N=2, ...)."""
    return 2.0 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0)


@dataclass(frozen=True)
class DomainSpec:
    """Domain description: interval of given length or radial ball."""

    kind: str            # "interval" | "ball"
    size: float          # L for the interval, R for the ball
    dimension: int       # 1 for the interval, N >= 1 for the ball
    nodes: int           # interior node count

    @staticmethod
    def interval(length: float, nodes: int) -> "DomainSpec":
        return DomainSpec(kind="interval", size=float(length), dimension=1, nodes=int(nodes))

    @staticmethod
    def ball(radius: float, dimension: int, nodes: int) -> "DomainSpec":
        return DomainSpec(kind="ball", size=float(radius), dimension=int(dimension), nodes=int(nodes))

    def validate(self) -> None:
        if self.kind not in ("interval", "ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not self.size > 0.0:
            raise ValueError("domain size must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "interval" and self.dimension != 1:
            raise ValueError("interval domains are one-dimensional")
        if self.nodes < 16:
            raise ValueError("at least 16 interior nodes are required")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size,
                "dimension": self.dimension, "nodes": self.nodes}

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        return DomainSpec(kind=d["kind"], size=float(d["size"]),
                          dimension=int(d["dimension"]), nodes=int(d["nodes"]))


@dataclass(frozen=True)
class Grid:
    """Immutable discretization with Laplacian, Green solve, and quadrature.

    Attributes
    ----------
    coords : node positions (abscissa x, or radius r with coords[0] = 0)
    quad_weights : positive quadrature weights, sum ~ |domain|
    lambda1, phi1 : first Dirichlet eigenpair, phi1 > 0 and L2-normalized
    """

    spec: DomainSpec
    h: float
    sigma: float                    # |S^{N-1}| factor (1 on the interval)
    coords: np.ndarray
    vols: np.ndarray                # cell volumes, quad_weights = sigma * vols
    quad_weights: np.ndarray
    stiff_diag: np.ndarray          # K = stiffness matrix of -Laplacian: K = -(vol * L)
    stiff_off: np.ndarray
    lambda1: float
    phi1: np.ndarray
    eigenvalues: np.ndarray         # lowest Dirichlet Laplacian eigenvalues
    eigenfields: np.ndarray         # (nodes, k) matching L2-orthonormal fields
    _chol: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.spec.nodes

    def boundary_distance(self) -> np.ndarray:
        if self.spec.kind == "interval":
            return np.minimum(self.coords, self.spec.size - self.coords)
        return self.spec.size - self.coords

    def integrate(self, f: np.ndarray) -> float:
        return float(self.quad_weights @ f)

    def laplacian_apply(self, f: np.ndarray) -> np.ndarray:
        """Apply the discrete Dirichlet Laplacian (negative definite)."""
        kf = self.stiff_diag * f
        kf[:-1] += self.stiff_off * f[1:]
        kf[1:] += self.stiff_off * f[:-1]
        return -kf / self.vols

    def dirichlet_form(self, f: np.ndarray, g: np.ndarray | None = None) -> float:
        """Discrete int grad f . grad g dx  =  <-lap f, g>_w."""
        if g is None:
            g = f
        kf = self.stiff_diag * f
        kf[:-1] += self.stiff_off * f[1:]
        kf[1:] += self.stiff_off * f[:-1]
        return float(self.sigma * (kf @ g))


def _assemble(spec: DomainSpec):
    n = spec.nodes
    if spec.kind == "interval":
        h = spec.size / (n + 1)
        coords = h * np.arange(1, n + 1)
        sigma = 1.0
        vols = np.full(n, h)
        face = np.full(n + 1, 1.0 / h)          # faces 0..n, unit area
        diag = face[:-1] + face[1:]
        off = -face[1:-1]
    else:
        N = spec.dimension
        h = spec.size / n
        coords = h * np.arange(n)               # r_0 = 0 interior (half cell)
        sigma = sphere_area(N)
        r_face = h * (np.arange(n) + 0.5)       # faces i+1/2, i = 0..n-1
        vols = np.empty(n)
        vols[0] = r_face[0] ** N / N
        vols[1:] = (r_face[1:] ** N - r_face[:-1] ** N) / N
        area = r_face ** (N - 1)
        diag = area / h
        diag[1:] += area[:-1] / h               # zero-flux face at r = 0
        off = -area[:-1] / h
    return h, sigma, coords, vols, diag, off


def build_grid(spec: DomainSpec) -> Grid:
    """Discretize the domain and compute the quantities every module relies on."""
    spec.validate()
    h, sigma, coords, vols, diag, off = _assemble(spec)

    # Symmetrized pencil K phi = lambda diag(vols) phi.
    s = 1.0 / np.sqrt(vols)
    sym_diag = diag * s * s
    sym_off = off * s[:-1] * s[1:]
    k = min(_N_CACHED_EIGENPAIRS, spec.nodes)
    evals, evecs = eigh_tridiagonal(sym_diag, sym_off, select="i", select_range=(0, k - 1))
    fields = evecs * s[:, None]
    # L2-normalize and fix signs so the bulk of each field is nonnegative.
    for j in range(k):
        f = fields[:, j]
        f /= math.sqrt(sigma * float(vols @ (f * f)))
        if (vols * f).sum() < 0:
            f *= -1.0
    lambda1 = float(evals[0])
    phi1 = fields[:, 0].copy()
    if np.any(phi1 <= 0.0):
        raise RuntimeError("first eigenfunction is not positive; discretization bug")

    upper = np.zeros((2, spec.nodes))
    upper[0, 1:] = off
    upper[1, :] = diag
    chol = cholesky_banded(upper)

    for arr in (coords, vols, diag, off, evals, fields, phi1, chol):
        arr.setflags(write=False)
    return Grid(spec=spec, h=h, sigma=sigma, coords=coords, vols=vols,
                quad_weights=sigma * vols, stiff_diag=diag, stiff_off=off,
                lambda1=lambda1, phi1=phi1, eigenvalues=evals, eigenfields=fields,
                _chol=chol)


def solve_poisson(grid: Grid, source: np.ndarray) -> np.ndarray:
    """Green operator: solve -lap g = source with zero boundary trace."""
    source = np.asarray(source, dtype=float)
    if not np.all(np.isfinite(source)):
        raise FieldDomainError("source must be finite")
    return cho_solve_banded((grid._chol, False), grid.vols * source)


def lp_norm(grid: Grid, f: np.ndarray, p: float) -> float:
    if p <= 0:
        raise FieldDomainError("Lp norm needs p > 0")
    if math.isinf(p):
        return float(np.max(np.abs(f), initial=0.0))
    if p != round(p) and np.any(f < 0):
        raise FieldDomainError("negative entries under fractional exponent")
    return float(grid.quad_weights @ np.abs(f) ** p) ** (1.0 / p)


def lp_phi1_norm(grid: Grid, f: np.ndarray, p: float) -> float:
    if p < 1:
        raise FieldDomainError("weighted Lp norm needs p >= 1")
    if p != round(p) and np.any(f < 0):
        raise FieldDomainError("negative entries under fractional exponent")
    return float((grid.quad_weights * grid.phi1) @ np.abs(f) ** p) ** (1.0 / p)


def hminus1_norm(grid: Grid, f: np.ndarray) -> float:
    g = solve_poisson(grid, f)
    return math.sqrt(max(float(grid.quad_weights @ (f * g)), 0.0))


def grad_norm_of_power(grid: Grid, f: np.ndarray, m: float) -> float:
    """|| grad(f^m) ||_{L2} through the discrete Dirichlet form; needs f >= 0."""
    if np.any(f < 0):
        raise FieldDomainError("negative entries under fractional exponent")
    g = np.asarray(f, dtype=float) ** m
    return math.sqrt(max(grid.dirichlet_form(g), 0.0))


def norm(grid: Grid, f: np.ndarray, kind: str, exponent: float | None = None) -> float:
    """Dispatch on the norm kind: 'lp', 'lp_phi1', 'hminus1', 'grad_l2_of_power'."""
    f = np.asarray(f, dtype=float)
    if kind == "lp":
        return lp_norm(grid, f, exponent)
    if kind == "lp_phi1":
        return lp_phi1_norm(grid, f, exponent)
    if kind == "hminus1":
        return hminus1_norm(grid, f)
    if kind == "grad_l2_of_power":
        return grad_norm_of_power(grid, f, exponent)
    raise ValueError(f"unknown norm kind {kind!r}")


def _probe_family(grid: Grid) -> list[np.ndarray]:
    """Deterministic trial fields for the Sobolev-Poincare estimate."""
    probes = [grid.eigenfields[:, j].copy() for j in range(grid.eigenfields.shape[1])]
    dist = grid.boundary_distance()
    size = grid.spec.size
    for alpha in (0.5, 1.0, 1.5, 2.0, 3.0):
        probes.append(grid.phi1 ** alpha)
    for beta in (0.6, 1.0, 2.0):
        probes.append((dist / size) ** beta)
    if grid.spec.kind == "ball":
        probes.append(1.0 - (grid.coords / size) ** 2)
        centers = (0.0, 0.5 * size)
    else:
        probes.append(grid.coords * (size - grid.coords))
        centers = (0.5 * size, 0.25 * size)
    mask = dist / size
    for c in centers:
        for width in (0.05, 0.1, 0.2, 0.4):
            bump = np.exp(-(((grid.coords - c) / (width * size)) ** 2))
            probes.append(bump * mask)
    return probes


def sobolev_poincare_constant(grid: Grid, target_exponent: float) -> float:
    """Best constant estimate for ||f||_{L^target} <= S2 ||grad f||_{L2}.

    Maximizes the ratio over a fixed probe family (cached Laplacian
    eigenfields, powers of phi1 and of the boundary distance, bumps) plus the
    inverse-power orbit f <- (-lap)^{-1}(f^{target-1}) started from phi1,
    which converges to the extremal ground state for subcritical exponents.
    Still a lower estimate of the true constant; callers widen tolerances
    accordingly.
    """
    N = grid.spec.dimension
    if target_exponent <= 0:
        raise RegimeError("target exponent must be positive")
    if grid.spec.kind == "ball" and N >= 3 and target_exponent > 2.0 * N / (N - 2) + 1e-12:
        raise RegimeError(
            f"target exponent {target_exponent} exceeds 2N/(N-2) = {2.0 * N / (N - 2)}")

    def ratio_of(f: np.ndarray) -> float:
        grad2 = grid.dirichlet_form(f)
        if grad2 <= 0.0:
            return 0.0
        return lp_norm(grid, np.abs(f), target_exponent) / math.sqrt(grad2)

    best = max((ratio_of(f) for f in _probe_family(grid)), default=0.0)
    f = grid.phi1.copy()
    for _ in range(60):
        f = solve_poisson(grid, np.abs(f) ** (target_exponent - 1.0))
        f /= np.max(np.abs(f))
        best = max(best, ratio_of(f))
    return best
