"""Experiment configuration: a single JSON-serializable record holding every
knob the command-line tools accept."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

KNOWN_PROBES = ("init", "gradient", "smoothness", "perturbation", "ce")

#: Step sizes for the default desk-scale run (n=8, k=2, L=3, m=512, d=32).
#: Calibrated once on that config and fixed; scale like d/m.
DEFAULT_ETA = 0.0625
DEFAULT_GAMMA = 0.0625


@dataclass
class ExperimentConfig:
    n: int = 8
    k: int = 2
    L: int = 3
    m: int = 512
    d: int = 32
    b: int = 16
    delta_min: float = 0.5
    epsilon: float = 0.5
    seed: int = 1
    step_mode: str = "practical"          # "practical" | "theoretical"
    eta: float = DEFAULT_ETA
    gamma: float = DEFAULT_GAMMA
    T: int = 200
    mode: str = "exact"                   # loss expectation: "exact" | "mc"
    mc_samples: int = 2000
    enumeration_cap: int = 10**6
    probes: tuple[str, ...] = KNOWN_PROBES
    out_dir: str = "out"

    def validate(self) -> None:
        for name in ("n", "k", "L", "m", "d", "b", "T", "mc_samples", "enumeration_cap"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.k > self.n - 1:
            raise ConfigError("k must be ≤ n−1")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta_min < 2.0**0.5:
            raise ConfigError(f"delta_min must lie in (0, sqrt(2)), got {self.delta_min}")
        if self.step_mode not in ("practical", "theoretical"):
            raise ConfigError(f"step_mode must be practical or theoretical, got {self.step_mode!r}")
        if self.mode not in ("exact", "mc"):
            raise ConfigError(f"mode must be exact or mc, got {self.mode!r}")
        if self.eta <= 0 or self.gamma <= 0:
            raise ConfigError("eta and gamma must be positive")
        unknown = [p for p in self.probes if p not in KNOWN_PROBES]
        if unknown:
            raise ConfigError(f"unknown probes {unknown}; known: {list(KNOWN_PROBES)}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["probes"] = list(self.probes)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config document.  Missing keys take the
    documented defaults; unknown keys are rejected by name."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed config document: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "probes" in raw:
        if not isinstance(raw["probes"], list):
            raise ConfigError("probes must be a list of probe names")
        raw["probes"] = tuple(raw["probes"])
    cfg = ExperimentConfig(**raw)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
