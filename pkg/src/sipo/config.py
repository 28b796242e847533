"""Service configuration: JSON file, SIPO_* environment overrides, CLI flags.

Precedence, lowest to highest: built-in defaults, config file, environment,
explicit overrides (CLI flags).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .calibration import CalibrationModel, load_model, reference_model
from .engine import ConfigError, MonitorConfig

REFERENCE_MODEL_NAME = "reference"


class ServiceConfigError(ValueError):
    """Bad service configuration file, environment value, or flag."""


@dataclass(frozen=True)
class ServiceConfig:
    device: str = "127.0.0.1:9000"        # host:port or "stdio"
    api_host: str = "127.0.0.1"
    api_port: int = 8800
    model: str = REFERENCE_MODEL_NAME     # "reference" or a model-file path
    log_path: str = "sipo-session.log"
    ui_dir: str | None = None
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    @property
    def api_addr(self) -> str:
        return f"{self.api_host}:{self.api_port}"


def resolve_model(spec: str) -> CalibrationModel:
    """Model source: the built-in reference calibration or a fitted-model file."""
    if spec == REFERENCE_MODEL_NAME:
        return reference_model()
    path = Path(spec)
    if not path.exists():
        raise ServiceConfigError(f"model file not found: {spec}")
    return load_model(path)


def _parse_api_addr(text: str) -> tuple[str, int]:
    host, sep, port_text = text.rpartition(":")
    if not sep or not host:
        raise ServiceConfigError(f"API address must be host:port, got {text!r}")
    try:
        return host, int(port_text)
    except ValueError:
        raise ServiceConfigError(f"API port is not a number: {text!r}") from None


# Environment variable -> (target, caster). Monitor fields nest under "monitor".
_ENV_MAP: dict[str, tuple[str, Any]] = {
    "SIPO_DEVICE_ADDR": ("device", str),
    "SIPO_API_ADDR": ("api_addr", str),
    "SIPO_MODEL": ("model", str),
    "SIPO_LOG_PATH": ("log_path", str),
    "SIPO_UI_DIR": ("ui_dir", str),
    "SIPO_SAFE_LOW": ("monitor.safe_low", float),
    "SIPO_SAFE_HIGH": ("monitor.safe_high", float),
    "SIPO_BASELINE_TOLERANCE": ("monitor.baseline_tolerance", float),
    "SIPO_DEBOUNCE_MS": ("monitor.debounce_ms", int),
    "SIPO_VIBRATE_REPEAT_MS": ("monitor.vibrate_repeat_ms", int),
    "SIPO_SIT_LIMIT_MS": ("monitor.sit_limit_ms", int),
}


def load_service_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ServiceConfig:
    env = os.environ if env is None else env
    config = ServiceConfig()

    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ServiceConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ServiceConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ServiceConfigError(f"config file {path} must hold a JSON object")
        config = _apply_file(config, raw, source=str(path))

    for var, (target, caster) in _ENV_MAP.items():
        if var in env and env[var] != "":
            try:
                config = _apply_value(config, target, caster(env[var]))
            except (ValueError, ConfigError) as exc:
                raise ServiceConfigError(f"bad environment value {var}={env[var]!r}: {exc}") from exc

    for target, value in (overrides or {}).items():
        if value is None:
            continue
        try:
            config = _apply_value(config, target, value)
        except (ValueError, ConfigError) as exc:
            raise ServiceConfigError(f"bad override {target}={value!r}: {exc}") from exc
    return config


def _apply_file(config: ServiceConfig, raw: dict[str, Any], source: str) -> ServiceConfig:
    known = {"device", "api", "model", "log_path", "ui_dir", "monitor"}
    unknown = set(raw) - known
    if unknown:
        raise ServiceConfigError(f"{source}: unknown config keys: {sorted(unknown)}")
    if "device" in raw:
        config = replace(config, device=str(raw["device"]))
    if "api" in raw:
        host, port = _parse_api_addr(str(raw["api"]))
        config = replace(config, api_host=host, api_port=port)
    if "model" in raw:
        config = replace(config, model=str(raw["model"]))
    if "log_path" in raw:
        config = replace(config, log_path=str(raw["log_path"]))
    if "ui_dir" in raw and raw["ui_dir"] is not None:
        config = replace(config, ui_dir=str(raw["ui_dir"]))
    if "monitor" in raw:
        if not isinstance(raw["monitor"], dict):
            raise ServiceConfigError(f"{source}: 'monitor' must be an object")
        try:
            config = replace(config, monitor=MonitorConfig.from_record(raw["monitor"]))
        except ConfigError as exc:
            raise ServiceConfigError(f"{source}: {exc}") from exc
    return config


def _apply_value(config: ServiceConfig, target: str, value: Any) -> ServiceConfig:
    if target == "api_addr":
        host, port = _parse_api_addr(str(value))
        return replace(config, api_host=host, api_port=port)
    if target.startswith("monitor."):
        field_name = target.split(".", 1)[1]
        monitor = replace(config.monitor, **{field_name: value})
        return replace(config, monitor=monitor)
    return replace(config, **{target: value})
