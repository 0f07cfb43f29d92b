"""Flat JSON experiment configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import ConfigError

__all__ = ["ExperimentConfig", "load_config"]

_MODES = ("oracle", "fixed-point", "cauchy")
_POLICIES = ("strict", "floor")
_SAMPLERS = ("screened", "uniform")


@dataclass
class ExperimentConfig:
    """All experiment parameters; every quantity is dimensionless.

    ``q_const`` is a constant potential.  ``kernel_index = j > 0`` shifts it
    by ``-lambda_j`` so that zero becomes a Dirichlet eigenvalue.
    ``target`` is the subinterval whose normalised indicator is the Runge
    target.  ``sweep`` lists the values of ``N`` for ``lipschitz`` and
    ``instability``; when empty, ``N`` alone is used.
    """

    s: float = 0.5
    h: float = 0.02
    omega: List[float] = field(default_factory=lambda: [-1.0, 1.0])
    windows: List[List[float]] = field(default_factory=lambda: [[-3.0, -2.0], [2.0, 3.0]])
    basis: str = "piecewise_constant"
    N: int = 4
    delta: float = 0.1
    epsilon: float = 1e-3
    trials: int = 20
    seed: int = 0
    sample_pairs: int = 500
    sampler: str = "screened"
    sweep: List[int] = field(default_factory=list)
    q_const: float = 0.0
    kernel_index: int = 0
    window: int = 0
    target: List[float] = field(default_factory=lambda: [-0.5, 0.5])
    n_eigs: int = 10
    mode: str = "oracle"
    policy: str = "strict"
    a_true: List[float] = field(default_factory=lambda: [0.3, -0.2, 0.1, 0.0])
    max_iter: int = 20
    strict_partition: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return from_dict({**self.to_dict(), **changes})

    def problems(self) -> list:
        """Static problems that need no computation, as ``(error name, detail)``."""
        out = []
        if not 0.0 < self.s < 1.0:
            out.append(("InvalidOrder", f"s={self.s} outside (0, 1)"))
        if not self.h > 0:
            out.append(("EmptyRegion", f"h={self.h} must be positive"))
        if len(self.omega) != 2 or not self.omega[0] < self.omega[1]:
            out.append(("ConfigError", f"omega={self.omega} is not an interval"))
        if not self.windows or any(len(w) != 2 or not w[0] < w[1] for w in self.windows):
            out.append(("ConfigError", f"windows={self.windows} are not intervals"))
        if self.basis not in ("piecewise_constant", "piecewise_affine", "trigonometric"):
            out.append(("ConfigError", f"unknown basis {self.basis!r}"))
        if self.N < 1 or any(n < 1 for n in self.sweep):
            out.append(("ConfigError", "N must be at least 1"))
        if self.mode not in _MODES:
            out.append(("ConfigError", f"mode must be one of {_MODES}"))
        if self.policy not in _POLICIES:
            out.append(("ConfigError", f"policy must be one of {_POLICIES}"))
        if self.sampler not in _SAMPLERS:
            out.append(("ConfigError", f"sampler must be one of {_SAMPLERS}"))
        if not self.epsilon > 0:
            out.append(("ConfigError", "epsilon must be positive"))
        if self.trials < 1 or self.sample_pairs < 1 or self.n_eigs < 1 or self.max_iter < 1:
            out.append(("ConfigError", "counts must be positive"))
        if not 0 <= self.window < max(len(self.windows), 1):
            out.append(("ConfigError", f"window={self.window} out of range"))
        if self.kernel_index < 0:
            out.append(("ConfigError", "kernel_index must be >= 0"))
        if self.seed < 0:
            out.append(("ConfigError", "seed must be a non-negative integer"))
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name, value):
    default = getattr(ExperimentConfig(), name)
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if name == "windows":
            return [[float(a), float(b)] for a, b in value]
        if name == "sweep":
            out = [int(v) for v in value]
            if any(o != v for o, v in zip(out, value)):
                raise TypeError
            return out
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {name!r}: {value!r}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a single JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read a configuration file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc
    return from_dict(data)
