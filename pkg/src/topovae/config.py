"""Experiment configuration and the per-system presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

SYSTEMS = ("oscillator", "orbit", "qubit")

# number of latent coordinates each penalty acts on
TERM_ARITY = {"circle": 2, "sphere": 3, "lemniscate": 2}


class ConfigError(ValueError):
    """Inconsistent experiment or model configuration."""


@dataclass(frozen=True)
class LatentSplit:
    """Leading ``n_tpv`` latent coordinates are topological, the rest general."""

    n_tpv: int
    n_gpv: int
    term: str

    def __post_init__(self):
        if self.term not in TERM_ARITY:
            raise ConfigError(
                f"unknown topological term {self.term!r}; choose from {sorted(TERM_ARITY)}"
            )
        if self.n_tpv != TERM_ARITY[self.term]:
            raise ConfigError(
                f"term {self.term!r} needs {TERM_ARITY[self.term]} TPVs, got {self.n_tpv}"
            )
        if self.n_gpv < 0:
            raise ConfigError("n_gpv must be nonnegative")

    @property
    def latent_dim(self) -> int:
        return self.n_tpv + self.n_gpv


@dataclass(frozen=True)
class TrainSchedule:
    iterations: int = 50_000
    batch_size: int = 100
    learning_rate: float = 1e-4
    eval_every: int = 1_000
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    system: str
    n_samples: int = 1000
    seed: int = 0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 100.0
    latent: LatentSplit = field(default_factory=lambda: LatentSplit(2, 1, "circle"))
    training: TrainSchedule = field(default_factory=TrainSchedule)
    hidden: tuple[int, ...] = (20, 20)
    recon_mode: str = "squared"
    latent_noise: bool = False
    betti_expected: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; choose from {SYSTEMS}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")
        if self.training.batch_size > self.n_samples:
            raise ConfigError(
                f"batch size {self.training.batch_size} exceeds dataset size {self.n_samples}"
            )
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.recon_mode not in ("squared", "norm"):
            raise ConfigError("recon_mode must be 'squared' or 'norm'")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.betti_expected is not None:
            object.__setattr__(self, "betti_expected", tuple(int(b) for b in self.betti_expected))

    @property
    def obs_dim(self) -> int:
        return OBS_DIM[self.system]

    def with_(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if self.betti_expected is not None:
            d["betti_expected"] = list(self.betti_expected)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        d["latent"] = LatentSplit(**d["latent"])
        d["training"] = TrainSchedule(**d["training"])
        d["hidden"] = tuple(d.get("hidden", (20, 20)))
        if d.get("betti_expected") is not None:
            d["betti_expected"] = tuple(d["betti_expected"])
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


OBS_DIM = {"oscillator": 3, "orbit": 3, "qubit": 5}


def preset(system: str, seed: int = 0, **overrides: Any) -> ExperimentConfig:
    """Loss weights and latent layouts used for the three toy systems."""
    if system == "oscillator":
        base = dict(alpha=1.0, beta=1.0, gamma=100.0,
                    latent=LatentSplit(2, 1, "circle"), betti_expected=(1, 1, 0))
    elif system == "orbit":
        base = dict(alpha=1.0, beta=100.0, gamma=100.0,
                    latent=LatentSplit(2, 1, "lemniscate"), betti_expected=(1, 2, 0))
    elif system == "qubit":
        base = dict(alpha=1.0, beta=1.0, gamma=100.0,
                    latent=LatentSplit(3, 1, "sphere"), betti_expected=(1, 0, 1))
    else:
        raise ConfigError(f"unknown system {system!r}; choose from {SYSTEMS}")
    base.update(overrides)
    return ExperimentConfig(system=system, seed=seed, **base)
