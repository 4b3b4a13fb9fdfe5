"""Flat key=value run configuration with defaults, file, env, and flag layers.

Precedence: CLI flag > BLUNDERSHIELD_ENGINE env var (engine path only) >
config file > built-in default.  Unknown keys are rejected, the schema is
versioned, and the resolved config hashes to a stable fingerprint that
reports and manifests carry.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .models import TrainingConfig
from .oracle import OracleLimits
from .selection import StrategyConfig, _REQUIRED, StrategyKind

CONFIG_VERSION = 1
ENGINE_ENV_VAR = "BLUNDERSHIELD_ENGINE"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type, default)
SCHEMA = {
    "config_version": (int, CONFIG_VERSION),
    "engine_path": (str, ""),
    "engine_depth": (int, 2),
    "engine_movetime_ms": (int, 0),  # > 0 switches limits to movetime
    "run_dir": (str, "runs/default"),
    "seed": (int, 0),
    "games": (int, 50),
    "max_plies": (int, 200),
    "rounds": (int, 1),
    "epochs": (int, 10),
    "batch_size": (int, 32),
    "lr": (float, 1e-3),
    "optimizer": (str, "adam"),
    "loss": (str, "cross-entropy"),
    "clip_norm": (float, 0.0),
    "val_fraction": (float, 0.2),
    "strategy": (str, "top-k"),
    "k": (int, 5),
    "tau": (float, 1.0),
    "surprisal_bits": (float, 2.0),
    "risk_cutoff": (float, 0.5),
    "delta": (float, 0.3),
    "alpha": (float, 0.6),
    "mock_oracle": (bool, False),
    "jobs": (int, 1),
}

_PARSERS = {int: int, float: float, str: str, bool: _parse_bool}


def parse_config_file(path) -> dict:
    """Read key=value lines; '#' starts a comment, blank lines are skipped."""
    values = {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        target_type = SCHEMA[key][0]
        try:
            values[key] = _PARSERS[target_type](value)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{line_no}: {key} wants {target_type.__name__}: {exc}"
            ) from exc
    if values.get("config_version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(
            f"{path}: config_version {values['config_version']} unsupported "
            f"(this build reads version {CONFIG_VERSION})"
        )
    return values


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in self.values:
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
        merged = {key: self.values.get(key, default)
                  for key, (_, default) in SCHEMA.items()}
        object.__setattr__(self, "values", merged)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def canonical_text(self) -> str:
        lines = [f"{key}={self.values[key]}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def oracle_limits(self) -> OracleLimits:
        if self["engine_movetime_ms"] > 0:
            return OracleLimits.by_movetime(self["engine_movetime_ms"])
        return OracleLimits.by_depth(self["engine_depth"])

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self["epochs"], batch_size=self["batch_size"],
            lr=self["lr"], seed=self["seed"], optimizer=self["optimizer"],
            loss=self["loss"], clip_norm=self["clip_norm"],
            val_fraction=self["val_fraction"],
        )

    def strategy_config(self) -> StrategyConfig:
        try:
            kind = StrategyKind(self["strategy"])
        except ValueError:
            known = ", ".join(k.value for k in StrategyKind)
            raise ConfigError(
                f"unknown strategy {self['strategy']!r}; known: {known}"
            ) from None
        params = {name: self[name] for name in _REQUIRED[kind]}
        return StrategyConfig(kind=kind, **params)

    def require_engine(self) -> str:
        """The engine command, validated to exist when it is a bare path."""
        command = self["engine_path"]
        if not command:
            raise ConfigError(
                f"no engine configured: pass --engine, set {ENGINE_ENV_VAR}, "
                "or use --mock-oracle"
            )
        executable = command.split()[0]
        if (os.sep in executable or executable.startswith(".")) \
                and not Path(executable).exists():
            raise ConfigError(f"engine executable not found: {executable}")
        return command


def resolve_config(file_values: dict | None = None,
                   flag_values: dict | None = None,
                   env: dict | None = None) -> RunConfig:
    """Merge the layers under flag > env > file > default precedence.

    ``flag_values`` entries that are None mean "flag not given" and are
    ignored.  ``env`` defaults to os.environ and contributes only the
    engine path.
    """
    env = os.environ if env is None else env
    merged = {}
    if file_values:
        for key in file_values:
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
        merged.update(file_values)
    engine_from_env = env.get(ENGINE_ENV_VAR)
    if engine_from_env:
        merged["engine_path"] = engine_from_env
    if flag_values:
        for key, value in flag_values.items():
            if value is None:
                continue
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    return RunConfig(values=merged)
