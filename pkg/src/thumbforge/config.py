"""Run configuration: defaults < JSON config file < command-line flags."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

from .evaluation import Matcher, MatchConfig
from .quality_filter import FilterConfig
from .selection import SelectionConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    threads: int | None = None
    deterministic: bool = False
    mode: str = "unsupervised"
    k: int = 5
    k_min: int = 5
    k_max: int = 10
    gap_refs: int = 10
    gap_ref_samples: int = 1000
    luminance_min: float = 0.10
    sharpness_min: float = 0.02
    uniformity_max: float = 0.95
    ecr_threshold: float = 0.5
    boundary_margin: int = 3
    matcher: str = "pixel_ssd"
    theta: float = 0.005
    lam: float = 1.0
    n_trees: int = 100
    method: str | None = None
    model: str | None = None

    def __post_init__(self):
        # constructing the component configs validates every field
        self.filter_config()
        self.selection_config()
        self.match_config()
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.luminance_min, self.sharpness_min, self.uniformity_max,
                            self.ecr_threshold, self.boundary_margin)

    def selection_config(self) -> SelectionConfig:
        return SelectionConfig(self.mode, self.k, self.seed, self.k_min, self.k_max, self.gap_refs,
                               self.gap_ref_samples, self.theta, self.filter_config())

    def match_config(self) -> MatchConfig:
        return MatchConfig(Matcher(self.matcher), self.theta)

    def to_json(self) -> dict:
        """Provenance copy; thread count is dropped in deterministic mode since it cannot change results."""
        d = asdict(self)
        if self.deterministic:
            d.pop("threads")
        return d


FIELD_NAMES = {f.name for f in fields(RunConfig)}


def load_config_file(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(data) - FIELD_NAMES
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def resolve(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Merge layers; ``None`` flag values mean "not given" and do not override."""
    cfg = RunConfig()
    if file_values:
        cfg = replace(cfg, **file_values)
    if flag_values:
        given = {k: v for k, v in flag_values.items() if v is not None and k in FIELD_NAMES}
        cfg = replace(cfg, **given)
    return cfg
