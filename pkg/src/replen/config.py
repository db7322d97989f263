from __future__ import annotations

import os
import typing as t
from dataclasses import dataclass, fields

from replen.errors import ConfigError
from replen.milp import DEFAULT_BINARY_LIMIT
from replen.planner import DEFAULT_SEGMENTS
from replen.sdp import DEFAULT_STATE_CAP
from replen.simulator import DEFAULT_REPLICATIONS

ENV_PREFIX = "REPLEN_"


@dataclass(frozen=True)
class Settings:
    """
    Settings are the defaults shared by the CLI and the bench. Every field can be
    overridden from the environment as REPLEN_<FIELD>, e.g. REPLEN_SEGMENTS=5.
    """

    segments: int = DEFAULT_SEGMENTS
    sdp_state_cap: int = DEFAULT_STATE_CAP
    binary_limit: int = DEFAULT_BINARY_LIMIT
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            minimum = 0 if f.name == "seed" else 1
            if value < minimum:
                raise ConfigError(f"{ENV_PREFIX}{f.name.upper()} must be >= {minimum}: {value}")

    @classmethod
    def from_env(cls, environ: t.Optional[t.Mapping[str, str]] = None) -> Settings:
        environ = os.environ if environ is None else environ
        values = {}
        for f in fields(cls):
            key = f"{ENV_PREFIX}{f.name.upper()}"
            if key not in environ:
                continue
            try:
                values[f.name] = int(environ[key])
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {environ[key]!r}")
        return cls(**values)
