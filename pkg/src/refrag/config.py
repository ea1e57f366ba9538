"""Service configuration: flat key=value file, REFRAG_* env overrides."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError

ENV_PREFIX = "REFRAG_"

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    corpus: str = ""
    scorer: str = "lexical"            # lexical | remote
    retrieval_endpoint: str = ""
    rerank_endpoint: str = ""
    generator: str = "extractive"      # extractive | remote
    generator_endpoint: str = ""
    version: str = "ver1"
    n: int = 10
    k: int = 5
    threshold: float | None = None     # resolved per scorer backend when unset
    tie_epsilon: float = 0.0
    mode: str = "paper_literal"
    sep_token: str = "[SEP]"
    timeout: float = 10.0
    retries: int = 3
    batch_size: int = 32
    max_in_flight: int = 4
    max_tokens: int = 512
    budget: int = 1
    cors_origin: str = ""
    max_match_cells: int = 5000
    request_log: str = ""

    def __post_init__(self) -> None:
        if self.scorer not in ("lexical", "remote"):
            raise DataError(f"unknown scorer backend {self.scorer!r}")
        if self.generator not in ("extractive", "remote"):
            raise DataError(f"unknown generator backend {self.generator!r}")
        if self.version not in ("ver0", "ver1"):
            raise DataError(f"unknown chunk text version {self.version!r}")
        if self.mode not in ("paper_literal", "global_sum"):
            raise DataError(f"unknown match mode {self.mode!r}")
        if not (self.n >= self.k >= 1):
            raise DataError(f"need n >= k >= 1, got n={self.n}, k={self.k}")
        if self.threshold is not None and not math.isfinite(self.threshold):
            raise DataError("threshold must be finite")
        if self.tie_epsilon < 0:
            raise DataError("tie_epsilon must be >= 0")

    @property
    def resolved_threshold(self) -> float:
        # Trained re-rankers operate well at 0.5; the lexical scorer's
        # scale differs, so it defaults to 0.
        if self.threshold is not None:
            return self.threshold
        return 0.0 if self.scorer == "lexical" else 0.5

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise DataError(f"listen address {self.listen!r} must be host:port")
        return host, int(port)


_FIELD_TYPES = {f.name: f.type for f in fields(ServiceConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind in ("int",):
        try:
            return int(raw)
        except ValueError:
            raise DataError(f"config key {key!r}: expected an integer, got {raw!r}") from None
    if kind in ("float", "float | None"):
        try:
            return float(raw)
        except ValueError:
            raise DataError(f"config key {key!r}: expected a number, got {raw!r}") from None
    if kind == "bool":
        lowered = raw.lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise DataError(f"config key {key!r}: expected a boolean, got {raw!r}")
    return raw


def _parse_config_file(path: str | Path) -> dict:
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataError(f"{path}: line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower().replace("-", "_")
        raw = raw.strip().strip('"').strip("'")
        if key not in _FIELD_TYPES:
            raise DataError(f"{path}: line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(
    path: str | Path | None = None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> ServiceConfig:
    """Build a ServiceConfig: defaults < file < REFRAG_* env < overrides."""
    values: dict = {}
    if path is not None:
        values.update(_parse_config_file(path))
    env = os.environ if env is None else env
    for key in _FIELD_TYPES:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = _coerce(key, env[env_key])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise DataError(f"unknown config key {key!r}")
        values[key] = value
    return ServiceConfig(**values)
