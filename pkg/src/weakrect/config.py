"""The run configuration: every tunable default in one validated record."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Any

from .correspondence import MatchingConfig
from .errors import ConfigError
from .fileio import read_json
from .pairing import PairingConfig
from .pose import RansacConfig
from .rectify import ResampleSpec


@dataclass(frozen=True)
class RunConfig:
    """Every tunable default of the pipeline in one flat, validated record."""

    m: int = 10
    k: int = 10
    flow_min: float = 10.0
    flow_max: float = 50.0
    max_uses_per_frame: int | None = None
    ratio_max: float = 0.8
    gms_grid: int = 20
    gms_alpha: float = 6.0
    use_gms: bool = True
    max_features: int = 2000
    ransac_max_iterations: int = 10_000
    inlier_threshold: float = 1.0
    confidence: float = 0.999
    min_inliers: int = 15
    seed: int = 0
    samples_per_pair: int = 1000
    depth_min: float = 0.5
    depth_max: float = 10.0
    eps_list: tuple[float, ...] = (-0.4, -0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2, 0.4)
    fill: str = "mark-invalid"
    fill_value: float = 0.0
    measure_residual: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        try:
            # building the per-module configs runs their validation
            _ = (self.pairing, self.matching, self.ransac, self.resample)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.samples_per_pair < 1:
            raise ConfigError("samples_per_pair must be at least 1")
        if not 0 < self.depth_min < self.depth_max:
            raise ConfigError("need 0 < depth_min < depth_max")
        if any(e <= -1.0 for e in self.eps_list):
            raise ConfigError("relative depth errors must exceed -1")

    @property
    def pairing(self) -> PairingConfig:
        return PairingConfig(self.m, self.k, self.flow_min, self.flow_max, self.max_uses_per_frame)

    @property
    def matching(self) -> MatchingConfig:
        return MatchingConfig(self.ratio_max, self.gms_grid, self.gms_alpha, self.use_gms, self.max_features)

    @property
    def ransac(self) -> RansacConfig:
        return RansacConfig(self.ransac_max_iterations, self.inlier_threshold, self.confidence, self.seed, self.min_inliers)

    @property
    def resample(self) -> ResampleSpec:
        return ResampleSpec("bilinear", self.fill, self.fill_value)

    def as_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["eps_list"] = list(self.eps_list)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for name, value in data.items():
            default = known[name].default
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"{name} must be true or false")
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{name} must be a number")
                if isinstance(default, int) and value != int(value):
                    raise ConfigError(f"{name} must be an integer")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_run_config(path: str | os.PathLike) -> RunConfig:
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return RunConfig.from_dict(data)
