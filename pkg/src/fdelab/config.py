"""Run configurations: JSON-serializable experiment descriptions.

A RunConfig fixes the domain, the diffusion exponent, one or more initial
data, solver controls, and the list of diagnostics to evaluate.  Parsing and
serialization round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import DomainSpec, Grid
from .solver import SolverControls
from .stationary import solve_lef

_DATUM_KINDS = ("separable", "gaussian_bump", "scaled_profile",
                "modulated_profile", "nodal_file")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    name: str
    domain: DomainSpec
    m: float
    initial: tuple[dict, ...]          # one entry per run (most presets: one)
    solver: SolverControls
    flow: str                          # "cdp" | "cdp+rcdp" | "spectral"
    rcdp: dict = field(default_factory=dict)   # horizon, dt, snapshot_every, calibrate
    spectral: dict = field(default_factory=dict)  # p, c ("lambda1" allowed), k_max
    diagnostics: tuple[dict, ...] = ()
    output_dir: str = "runs"
    seed: int = 0

    def validate(self) -> None:
        self.domain.validate()
        if not 0.0 < self.m < 1.0:
            raise ConfigError("m must lie in (0, 1)")
        if self.flow not in ("cdp", "cdp+rcdp", "spectral"):
            raise ConfigError(f"unknown flow {self.flow!r}")
        if self.flow != "spectral" and not self.initial:
            raise ConfigError("flow runs need at least one initial datum")
        for spec in self.initial:
            kind = spec.get("kind")
            if kind not in _DATUM_KINDS:
                raise ConfigError(f"unknown initial datum kind {kind!r}")
            if kind == "nodal_file" and not Path(spec["path"]).exists():
                raise ConfigError(f"nodal file {spec['path']} does not exist")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "domain": self.domain.to_dict(),
            "m": self.m,
            "initial": list(self.initial),
            "solver": self.solver.to_dict(),
            "flow": self.flow,
            "rcdp": dict(self.rcdp),
            "spectral": dict(self.spectral),
            "diagnostics": list(self.diagnostics),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        try:
            cfg = RunConfig(
                name=d["name"],
                domain=DomainSpec.from_dict(d["domain"]),
                m=float(d["m"]),
                initial=tuple(d.get("initial", [])),
                solver=SolverControls.from_dict(d["solver"]),
                flow=d["flow"],
                rcdp=dict(d.get("rcdp", {})),
                spectral=dict(d.get("spectral", {})),
                diagnostics=tuple(d.get("diagnostics", [])),
                output_dir=d.get("output_dir", "runs"),
                seed=int(d.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from exc
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def loads(text: str) -> "RunConfig":
        return RunConfig.from_dict(json.loads(text))

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        return RunConfig.loads(Path(path).read_text())


def build_initial_datum(grid: Grid, m: float, spec: dict) -> np.ndarray:
    """Materialize an initial-datum description on the grid."""
    kind = spec["kind"]
    if kind == "separable":
        prof = solve_lef(grid, float(spec.get("p", 1.0 / m)), float(spec["c"]))
        return prof.S.copy()
    if kind == "gaussian_bump":
        center = float(spec["center"])
        width = float(spec["width"])
        amp = float(spec["amplitude"])
        x = grid.coords
        mask = grid.boundary_distance() / grid.spec.size
        return amp * np.exp(-(((x - center) / width) ** 2)) * mask * (
            2.0 if grid.spec.kind == "interval" else 1.0)
    if kind == "scaled_profile":
        prof = solve_lef(grid, float(spec.get("p", 1.0 / m)), float(spec["c"]))
        return float(spec["factor"]) * prof.S
    if kind == "modulated_profile":
        prof = solve_lef(grid, float(spec.get("p", 1.0 / m)), float(spec["c"]))
        amp = float(spec.get("amplitude", 0.2))
        x = grid.coords / grid.spec.size
        return prof.S * (1.0 + amp * np.cos(math.pi * x))
    if kind == "nodal_file":
        vals = np.loadtxt(spec["path"], delimiter=",")
        if vals.shape != (grid.n,):
            raise ConfigError(
                f"nodal file has shape {vals.shape}, grid expects ({grid.n},)")
        return vals
    raise ConfigError(f"unknown initial datum kind {kind!r}")
