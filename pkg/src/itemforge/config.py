"""Gateway configuration: one JSON file plus ITEMFORGE_* env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ErrConfig


@dataclass
class GatewayConfig:
    store_path: str = "./store"
    host: str = "127.0.0.1"
    port: int = 7445
    session_ttl: float = 8 * 3600.0
    script_timeout: float = 5.0
    fsync_mode: str = "commit"  # commit | batch
    static_dir: str | None = None  # operator console assets
    poll_timeout: float = 25.0

    @classmethod
    def load(cls, config_file: str | Path | None = None,
             env: dict | None = None) -> "GatewayConfig":
        values: dict = {}
        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise ErrConfig(f"config file {path} not found")
            try:
                values.update(json.loads(path.read_text()))
            except json.JSONDecodeError as exc:
                raise ErrConfig(f"config file {path}: {exc}") from exc
        env = env if env is not None else dict(os.environ)
        names = {f.name: f.type for f in fields(cls)}
        for name in names:
            key = f"ITEMFORGE_{name.upper()}"
            if key in env:
                values[name] = env[key]
        unknown = set(values) - set(names)
        if unknown:
            raise ErrConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for name, raw in values.items():
            current = getattr(cfg, name)
            if isinstance(current, float):
                raw = float(raw)
            elif isinstance(current, int) and not isinstance(current, bool):
                raw = int(raw)
            setattr(cfg, name, raw)
        if cfg.fsync_mode not in ("commit", "batch"):
            raise ErrConfig(f"fsync_mode must be commit|batch, got {cfg.fsync_mode!r}")
        return cfg
