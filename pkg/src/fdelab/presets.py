"""Preset experiment catalog: one entry per acceptance scenario."""

from __future__ import annotations

from .config import RunConfig
from .grid import DomainSpec
from .solver import SolverControls

_BALL_400 = DomainSpec.ball(1.0, 3, 400)
_BALL_200 = DomainSpec.ball(1.0, 3, 200)
_INTERVAL_300 = DomainSpec.interval(1.0, 300)

_BUMP_A = {"kind": "gaussian_bump", "center": 0.0, "width": 0.35, "amplitude": 10.0}
_BUMP_B = {"kind": "gaussian_bump", "center": 0.45, "width": 0.2, "amplitude": 6.0}


def _catalog() -> dict[str, RunConfig]:
    presets = {}

    presets["separable-gold"] = RunConfig(
        name="separable-gold",
        domain=_BALL_400, m=0.5,
        initial=({"kind": "separable", "p": 2.0, "c": 1.0},),
        solver=SolverControls(dt0=1e-6, rel_change_target=0.001),
        flow="cdp",
        diagnostics=(
            {"name": "monotonicity", "tol": 1e-6},
            {"name": "benilan_crandall", "q_list": [2.0, 4.0]},
            {"name": "energy_identities"},
            {"name": "lp_decay_fit", "p": 1.5, "expected": 2.0, "rtol": 0.02},
            {"name": "representation_sweep", "tol": 1e-3},
            {"name": "smoothing", "p": 2.0},
            {"name": "harnack", "radius": 0.5},
        ))

    for m, tag in ((0.5, "m05"), (0.7, "m07")):
        presets[f"extinction-sandwich-{tag}"] = RunConfig(
            name=f"extinction-sandwich-{tag}",
            domain=_BALL_200, m=m,
            initial=(_BUMP_A,),
            solver=SolverControls(dt0=1e-7, rel_change_target=0.002),
            flow="cdp",
            diagnostics=(
                {"name": "extinction_sandwich", "p": 1.0 + m, "widen": 1.1},
                {"name": "lp_decay_fit", "p": 1.0 + m,
                 "expected": 1.0 / (1.0 - m), "rtol": 0.05},
                {"name": "monotonicity", "tol": 1e-6},
                {"name": "benilan_crandall", "q_list": [2.0, 4.0]},
                {"name": "energy_identities"},
                {"name": "representation_sweep", "tol": 1e-3},
                {"name": "smoothing", "p": 2.0},
                {"name": "ghp_band"},
            ))

    presets["ghp-band-m07"] = RunConfig(
        name="ghp-band-m07",
        domain=_BALL_200, m=0.7,
        initial=(_BUMP_A, _BUMP_B),
        solver=SolverControls(dt0=1e-7, rel_change_target=0.002),
        flow="cdp",
        diagnostics=(
            {"name": "ghp_overlap", "window": [0.5, 0.95], "factor": 3.0},
            {"name": "ghp_band"},
            {"name": "monotonicity", "tol": 1e-6},
            {"name": "benilan_crandall", "q_list": [2.0, 4.0]},
        ))

    presets["sharp-rate-m05"] = RunConfig(
        name="sharp-rate-m05",
        domain=_BALL_200, m=0.5,
        initial=({"kind": "modulated_profile", "p": 2.0, "c": 1.0, "amplitude": 0.2},),
        solver=SolverControls(dt0=1e-7, rel_change_target=0.001),
        flow="cdp+rcdp",
        rcdp={"calibrate": True, "horizon": 6.0, "dt": 2e-3,
              "snapshot_every": 5, "k_max": 12},
        diagnostics=(
            {"name": "relative_error_entropy", "rate_rtol": 0.1,
             "fit_window": [0.16667, 0.75], "delta_tail": 0.55},
            {"name": "monotonicity", "tol": 1e-6},
            {"name": "benilan_crandall", "q_list": [2.0, 4.0]},
        ))

    presets["subcritical-m01"] = RunConfig(
        name="subcritical-m01",
        domain=_BALL_200, m=0.1,
        initial=({"kind": "gaussian_bump", "center": 0.0, "width": 0.45,
                  "amplitude": 2.0},),
        solver=SolverControls(dt0=1e-8, rel_change_target=0.003),
        flow="cdp+rcdp",
        rcdp={"horizon_in_T": 6.0, "dt_in_T": 0.0025, "snapshot_every": 4},
        diagnostics=(
            {"name": "subcritical_tracks", "q_list": [1.1, 2.0]},
            {"name": "monotonicity", "tol": 1e-6},
            {"name": "benilan_crandall", "q_list": [2.0, 4.0]},
        ))

    presets["p1-spectral-limit"] = RunConfig(
        name="p1-spectral-limit",
        domain=_INTERVAL_300, m=0.5,
        initial=(),
        solver=SolverControls(),
        flow="spectral",
        spectral={"p": 1.05, "c": "lambda1", "k_max": 8},
        diagnostics=({"name": "p1_gap", "rtol": 0.1},))

    presets["linearized-oracle"] = RunConfig(
        name="linearized-oracle",
        domain=DomainSpec.ball(1.0, 3, 240), m=0.5,
        initial=(),
        solver=SolverControls(),
        flow="spectral",
        spectral={"p": 2.0, "c": 1.0, "k_max": 12},
        diagnostics=({"name": "linearized_oracle", "rtol": 1e-6},))

    return presets


def preset_names() -> list[str]:
    return sorted(_catalog().keys())


def preset(name: str) -> RunConfig:
    """Fully specified config for a documented preset name."""
    catalog = _catalog()
    if name not in catalog:
        raise KeyError(
            f"unknown preset {name!r}; valid names: {', '.join(sorted(catalog))}")
    return catalog[name]
