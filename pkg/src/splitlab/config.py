"""Platform configuration: file format, defaults, and validation.

Config files are JSON documents. Unknown keys are rejected rather than
ignored, so a typo in a threshold name fails loudly at startup instead
of silently running with defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ValidationFailure


@dataclass(frozen=True, slots=True)
class PlatformConfig:
    """Everything the platform needs to run.

    Attributes:
        log_dir: Directory for the event log and audit trail; empty
            means fully in-memory (tests, demos).
        rt_tick_ms: Streaming pipeline poll interval.
        batch_interval_ms: Batch replay and pipeline-comparison cadence.
        srm_threshold: p-value below which recruitment imbalance gates
            the report.
        divergence_tolerance: Relative difference above which the
            pipeline comparison flags a cell.
        alpha: Two-sided significance level for comparative statistics.
        host: Bind address for the HTTP service.
        port: Bind port for the HTTP service.
        api_token: Shared bearer token; empty disables authentication.
    """

    log_dir: str = ""
    rt_tick_ms: int = 1000
    batch_interval_ms: int = 60_000
    srm_threshold: float = 0.001
    divergence_tolerance: float = 0.001
    alpha: float = 0.05
    host: str = "127.0.0.1"
    port: int = 8821
    api_token: str = ""

    def validate(self) -> None:
        if self.rt_tick_ms <= 0:
            raise ValidationFailure(
                f"rt_tick_ms must be positive, got {self.rt_tick_ms}")
        if self.batch_interval_ms <= 0:
            raise ValidationFailure(
                f"batch_interval_ms must be positive, got {self.batch_interval_ms}")
        if self.batch_interval_ms < self.rt_tick_ms:
            raise ValidationFailure(
                "batch_interval_ms must be at least rt_tick_ms")
        for name in ("srm_threshold", "divergence_tolerance", "alpha"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValidationFailure(
                    f"{name} must be in (0, 1), got {value}")
        if not 0 < self.port < 65_536:
            raise ValidationFailure(f"port must be in (0, 65536), got {self.port}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PlatformConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationFailure(
                f"unknown config keys: {', '.join(unknown)}")
        config = cls(**data)
        config.validate()
        return config


def load_config(path: str | Path) -> PlatformConfig:
    """Read and validate a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationFailure(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationFailure("config must be a JSON object")
    return PlatformConfig.from_dict(data)
