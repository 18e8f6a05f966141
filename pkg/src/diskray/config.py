"""Experiment configuration: defaults, file loading, validation, refinement.

The configuration file is JSON with the same two-level key tree as the
dataclass below; every value round-trips losslessly.  The tolerance
table is the single source for pass/fail thresholds: the command line
and the acceptance tests both read it, so a threshold can only be
changed in one place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import MetricParams

# pass/fail thresholds for every checked property, keyed by check name
TOLERANCES = {
    "santalo_euclid": 1e-3,
    "santalo_bump": 5e-3,
    "santalo_refine_factor": 3.0,
    "adjointness": 1e-3,
    "kernel": 1e-4,
    "decomposition_p": 1e-2,
    "decomposition_div": 1e-6,
    "idempotence": 1e-8,
    "leakage": 1e-4,
    "transport_average": 1e-3,
    "gk_shift": 1e-8,
    "gk_adjoint": 1e-4,
    "gk_lower_kills_avg": 0.0,
    "gk_eta_plus": 1e-6,
    "moment_identity": 1e-5,
    "roundtrip": 5e-2,
    "roundtrip_potential": 2e-2,
    "first_integral_moment": 5e-2,
    "first_integral_invariance": 1e-2,
    "extension_weak_div": 1e-4,
    "extension_annulus": 1e-3,
}


class ConfigError(ValueError):
    """The configuration failed validation."""


@dataclass
class ExperimentConfig:
    metric: MetricParams = field(default_factory=MetricParams)
    nx: int = 65
    ntheta: int = 128
    nbeta: int = 256
    nalpha: int = 128
    cg_tol: float = 1e-8
    max_iter: int = 2000
    ray_step: float = 5e-3
    normal_tol: float = 1e-3
    normal_max_iter: int = 60
    name: str = "run"
    out_dir: str = "out"
    seed: int = 0
    workers: int | None = None

    def validate(self):
        if not isinstance(self.nx, int) or self.nx < 33:
            raise ConfigError(f"grid.nx must be an integer >= 33, got {self.nx}")
        nt = self.ntheta
        if not isinstance(nt, int) or nt < 64 or (nt & (nt - 1)) != 0:
            raise ConfigError(
                f"grid.ntheta must be a power of two >= 64, got {nt}"
            )
        for key in ("nbeta", "nalpha"):
            val = getattr(self, key)
            if not isinstance(val, int) or val < 8:
                raise ConfigError(f"grid.{key} must be an integer >= 8, got {val}")
        for key in ("cg_tol", "normal_tol"):
            val = getattr(self, key)
            if not (0.0 < val < 1.0):
                raise ConfigError(f"solver.{key} must lie in (0, 1), got {val}")
        if self.ray_step <= 0.0:
            raise ConfigError(f"solver.ray_step must be positive, got {self.ray_step}")
        for key in ("max_iter", "normal_max_iter"):
            val = getattr(self, key)
            if not isinstance(val, int) or val < 1:
                raise ConfigError(f"solver.{key} must be a positive integer, got {val}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")
        if self.workers is not None and (
            not isinstance(self.workers, int) or self.workers < 1
        ):
            raise ConfigError(f"workers must be a positive integer, got {self.workers}")
        if not (0.0 < self.metric.width):
            raise ConfigError(f"metric.width must be positive, got {self.metric.width}")
        if not (0.0 < self.metric.cutoff_radius < 1.0):
            raise ConfigError(
                f"metric.cutoff_radius must lie in (0, 1), got {self.metric.cutoff_radius}"
            )
        return self

    def refine(self, k: int) -> "ExperimentConfig":
        """All grids doubled k times, ray step halved to match."""
        if k == 0:
            return self
        f = 2**k
        return replace(
            self,
            nx=(self.nx - 1) * f + 1,
            ntheta=self.ntheta * f,
            nbeta=self.nbeta * f,
            nalpha=self.nalpha * f,
            ray_step=self.ray_step / f,
        )

    def to_dict(self) -> dict:
        return {
            "experiment": self.name,
            "metric": {
                "kind": self.metric.kind,
                "amplitude": self.metric.amplitude,
                "width": self.metric.width,
                "cutoff_radius": self.metric.cutoff_radius,
            },
            "grid": {
                "nx": self.nx,
                "ntheta": self.ntheta,
                "nbeta": self.nbeta,
                "nalpha": self.nalpha,
            },
            "solver": {
                "cg_tol": self.cg_tol,
                "max_iter": self.max_iter,
                "ray_step": self.ray_step,
                "normal_tol": self.normal_tol,
                "normal_max_iter": self.normal_max_iter,
            },
            "out": self.out_dir,
            "seed": self.seed,
            "workers": self.workers,
        }


def from_dict(tree: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = {"experiment", "metric", "grid", "solver", "out", "seed", "workers"}
    extra = set(tree) - known
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    if "experiment" in tree:
        cfg.name = str(tree["experiment"])
    if "out" in tree:
        cfg.out_dir = str(tree["out"])
    if "seed" in tree:
        cfg.seed = tree["seed"]
    if "workers" in tree:
        cfg.workers = tree["workers"]
    met = tree.get("metric", {})
    if not isinstance(met, dict):
        raise ConfigError("metric must be a key tree")
    cfg.metric = MetricParams(
        kind=met.get("kind", cfg.metric.kind),
        amplitude=met.get("amplitude", cfg.metric.amplitude),
        width=met.get("width", cfg.metric.width),
        cutoff_radius=met.get("cutoff_radius", cfg.metric.cutoff_radius),
    )
    grid = tree.get("grid", {})
    for key in ("nx", "ntheta", "nbeta", "nalpha"):
        if key in grid:
            setattr(cfg, key, grid[key])
    solver = tree.get("solver", {})
    for key in ("cg_tol", "max_iter", "ray_step", "normal_tol", "normal_max_iter"):
        if key in solver:
            setattr(cfg, key, solver[key])
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a key tree")
    return from_dict(tree)
