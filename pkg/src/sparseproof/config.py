"""Experiment configuration: a JSON document with strictly validated sections.

Example::

    {
      "seed": 0,
      "problem": {"n": 10, "m1": 7, "m2": 0, "l": 2, "eps": 0.5},
      "architecture": {"scales": [0.5, 1, 2, 4], "h": 2, "width": 32},
      "training": {"steps": 4000, "lr": 0.003, "learn_sensing": true,
                   "pgd": {"iterations": 10, "restarts": 1}},
      "verification": {"budget_s": 600}
    }

Every random draw (sensing matrix, initial weights, training, verification
sampling) derives from the single top-level ``seed``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .model import DEFAULT_SCALES, Decoder, SensingSpec, gaussian_sensing, init_params
from .domain import SparseDomainSpec
from .training import PGDConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    n: int
    m1: int
    l: int
    eps: float = 0.5
    m2: int = 0
    tau: float = 0.0

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0 or self.m1 + self.m2 < 1:
            raise ConfigError("need at least one measurement")
        if self.m1 + self.m2 >= self.n:
            raise ConfigError(f"m1 + m2 = {self.m1 + self.m2} must be below n = {self.n}")
        if not 1 <= self.l <= self.n:
            raise ConfigError(f"l = {self.l} must be in [1, n]")


@dataclass
class ArchitectureConfig:
    scales: tuple = DEFAULT_SCALES
    h: int = 2
    width: int = 128

    def __post_init__(self):
        self.scales = tuple(float(s) for s in self.scales)
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigError("scales must be a nonempty list of positive numbers")
        if self.h < 0 or self.width < 1:
            raise ConfigError("need h >= 0 and width >= 1")


@dataclass
class VerificationConfig:
    budget_s: float = 3600.0
    max_subdomains: int = 10_000_000
    workers: int = 1
    deterministic: bool = False


@dataclass
class ExperimentConfig:
    problem: ProblemConfig
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)
    seed: int = 0

    def domain(self) -> SparseDomainSpec:
        p = self.problem
        return SparseDomainSpec(p.n, p.l, p.eps)

    def initial_decoder(self) -> Decoder:
        p, a = self.problem, self.architecture
        sensing = gaussian_sensing(p.n, p.m1, np.random.default_rng([self.seed, 0]), m2=p.m2,
                                   tau=p.tau, learn=self.training.learn_sensing)
        params = init_params(p.n, p.m1 + p.m2, np.random.default_rng([self.seed, 1]),
                             scales=a.scales, depth=a.h, width=a.width)
        return Decoder(self.domain(), sensing, params)


def _build(cls, section: str, raw, **extra):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = {f.name for f in fields(cls)} - set(extra)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls(**raw, **extra)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r}: {exc}") from None


def parse_config(doc) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"problem", "architecture", "training", "verification", "seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "problem" not in doc:
        raise ConfigError("missing 'problem' section")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    training = dict(doc.get("training", {}))
    if isinstance(training.get("pgd"), dict):
        training["pgd"] = _build(PGDConfig, "training.pgd", training["pgd"])
    return ExperimentConfig(
        problem=_build(ProblemConfig, "problem", doc["problem"]),
        architecture=_build(ArchitectureConfig, "architecture", doc.get("architecture", {})),
        training=_build(TrainConfig, "training", training, seed=seed),
        verification=_build(VerificationConfig, "verification", doc.get("verification", {})),
        seed=seed,
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc)
