"""Shared primitives: the ELU hinge, experiment configuration, and seeded streams."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml


def elu(x):
    """Exponential linear unit; works on floats and arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        return x if x >= 0.0 else math.expm1(x)
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, x, np.expm1(np.minimum(x, 0.0)))


def relu(x):
    return np.maximum(x, 0.0)


def param_vector(values, dim: int | None = None) -> np.ndarray:
    """Validate and copy a flat parameter vector (policy or environment)."""
    arr = np.array(values, dtype=float).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains NaN or Inf")
    return arr


# ---------------------------------------------------------------------------
# Random streams

class RngStream:
    """A reproducible counter-based random stream keyed by ``(seed, stream_id)``.

    Two streams with equal keys produce identical draws no matter which thread
    consumes them or in which order; different ``stream_id`` values select
    independent Philox keys.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, stream_id: int) -> "RngStream":
        """A fresh stream sharing this seed; the parent is left untouched."""
        return RngStream(self.seed, stream_id)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def stream_id(*parts: int | str) -> int:
    """Deterministic 64-bit stream id from a tuple of labels."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# Configuration

class ConfigError(ValueError):
    pass


class MissingKey(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class UnknownEnvironment(ConfigError):
    pass


SAMPLERS = ("rmh", "mala")

# Per-environment defaults.
PRESETS: dict[str, dict[str, Any]] = {
    "formation_5": dict(failure_threshold=10.0, population=5, step_size_theta=1e-5,
                        step_size_phi=1e-5, steps_per_round=50, rounds=50,
                        quench_rounds=20, tempering_rate=5.0),
    "formation_10": dict(failure_threshold=10.0, population=5, step_size_theta=1e-4,
                         step_size_phi=1e-4, steps_per_round=50, rounds=50,
                         quench_rounds=20, tempering_rate=5.0),
    "search_3v5": dict(failure_threshold=-0.1, population=10, step_size_theta=1e-2,
                       step_size_phi=1e-2, steps_per_round=50, rounds=50,
                       quench_rounds=20, tempering_rate=5.0),
    "search_12v20": dict(failure_threshold=-0.1, population=10, step_size_theta=1e-2,
                         step_size_phi=1e-2, steps_per_round=50, rounds=50,
                         quench_rounds=20, tempering_rate=5.0),
    "power_14": dict(failure_threshold=4.0, population=10, step_size_theta=1e-6,
                     step_size_phi=1e-2, steps_per_round=10, rounds=50,
                     quench_rounds=25, tempering_rate=5.0),
    # 1D landscape with two failure modes, for the diversity checks
    "bimodal": dict(failure_threshold=10.0, population=20, step_size_theta=0.05,
                    step_size_phi=0.05, steps_per_round=50, rounds=50,
                    quench_rounds=0, tempering_rate=5.0),
}

_POSITIVE_INT = ("rounds", "steps_per_round", "population")
_POSITIVE_FLOAT = ("tempering_rate", "step_size_theta", "step_size_phi")


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    rounds: int
    steps_per_round: int
    population: int
    tempering_rate: float
    failure_threshold: float
    step_size_theta: float
    step_size_phi: float
    quench_rounds: int
    sampler: str = "mala"
    seed: int = 0
    env_params: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in _POSITIVE_INT:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise InvalidValue(f"{name} must be a positive integer, got {v!r}")
        for name in _POSITIVE_FLOAT:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0) \
                    or not math.isfinite(v):
                raise InvalidValue(f"{name} must be a positive real, got {v!r}")
            object.__setattr__(self, name, float(v))
        fthr = self.failure_threshold
        if isinstance(fthr, bool) or not isinstance(fthr, (int, float)) or not math.isfinite(fthr):
            raise InvalidValue(f"failure_threshold must be a finite real, got {fthr!r}")
        object.__setattr__(self, "failure_threshold", float(fthr))
        q = self.quench_rounds
        if isinstance(q, bool) or not isinstance(q, int) or q < 0:
            raise InvalidValue(f"quench_rounds must be a non-negative integer, got {q!r}")
        if self.sampler not in SAMPLERS:
            raise InvalidValue(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        s = self.seed
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
            raise InvalidValue(f"seed must be a 64-bit unsigned integer, got {s!r}")
        if not isinstance(self.env_params, dict) or not isinstance(self.baseline, dict):
            raise InvalidValue("env_params and baseline must be key/value tables")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def step_sizes(self) -> tuple[float, float]:
        return self.step_size_theta, self.step_size_phi


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
# "step_size" sets both step sizes at once.
_ALIASES = {"step_size"}


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise InvalidValue("config document must be a key/value table")
    unknown = sorted(set(doc) - _FIELDS - _ALIASES)
    if unknown:
        raise UnknownKey(f"unknown config key(s): {', '.join(unknown)}")
    if "env_name" not in doc:
        raise MissingKey("env_name")
    env = doc["env_name"]
    if env not in PRESETS:
        raise UnknownEnvironment(f"unknown environment {env!r}; known: {sorted(PRESETS)}")
    values = dict(PRESETS[env])
    sampler = doc.get("sampler", "mala")
    # quenching defaults on only for the gradient-based sampler
    if sampler == "rmh":
        values["quench_rounds"] = 0
    if "step_size" in doc:
        values["step_size_theta"] = values["step_size_phi"] = doc["step_size"]
    values.update({k: v for k, v in doc.items() if k != "step_size"})
    # YAML 1.1 reads "1e-2" as a string
    for name in _POSITIVE_FLOAT + ("failure_threshold",):
        if isinstance(values.get(name), str):
            try:
                values[name] = float(values[name])
            except ValueError:
                raise InvalidValue(f"{name} is not a number: {values[name]!r}") from None
    missing = sorted(_FIELDS - set(values) - {"sampler", "seed", "env_params", "baseline"})
    if missing:
        raise MissingKey(", ".join(missing))
    return ExperimentConfig(**values)


def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML config document; unknown keys are rejected."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidValue(f"malformed config: {exc}") from exc
    return config_from_dict(doc if doc is not None else {})


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """Stable 64-bit digest (16 hex chars) of the canonical serialization."""
    return hashlib.sha256(canonical_json(config.to_dict()).encode()).hexdigest()[:16]
