import json

import pytest

from sipo.calibration import reference_model, save_model
from sipo.config import (
    ServiceConfig,
    ServiceConfigError,
    load_service_config,
    resolve_model,
)
from sipo.engine import ThresholdMode


def test_defaults():
    config = load_service_config(env={})
    assert config.device == "127.0.0.1:9000"
    assert config.api_addr == "127.0.0.1:8800"
    assert config.model == "reference"
    assert config.monitor.safe_low == 90.0


def test_file_values(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(
        json.dumps(
            {
                "device": "10.0.0.5:7000",
                "api": "0.0.0.0:9100",
                "log_path": "run.log",
                "monitor": {"safe_low": 85.0, "safe_high": 112.0, "debounce_ms": 1000},
            }
        )
    )
    config = load_service_config(path, env={})
    assert config.device == "10.0.0.5:7000"
    assert config.api_host == "0.0.0.0" and config.api_port == 9100
    assert config.monitor.safe_low == 85.0
    assert config.monitor.debounce_ms == 1000
    assert config.monitor.vibrate_repeat_ms == 10000  # untouched default


def test_env_overrides_file(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(json.dumps({"device": "10.0.0.5:7000"}))
    env = {
        "SIPO_DEVICE_ADDR": "127.0.0.1:6000",
        "SIPO_API_ADDR": "127.0.0.1:6100",
        "SIPO_SIT_LIMIT_MS": "60000",
    }
    config = load_service_config(path, env=env)
    assert config.device == "127.0.0.1:6000"
    assert config.api_port == 6100
    assert config.monitor.sit_limit_ms == 60000


def test_explicit_overrides_beat_env():
    env = {"SIPO_LOG_PATH": "from-env.log"}
    config = load_service_config(env=env, overrides={"log_path": "from-flag.log"})
    assert config.log_path == "from-flag.log"


def test_unknown_file_key_rejected(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(json.dumps({"devise": "typo:1"}))
    with pytest.raises(ServiceConfigError, match="devise"):
        load_service_config(path, env={})


def test_invalid_monitor_values_rejected(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(json.dumps({"monitor": {"safe_low": 120, "safe_high": 100}}))
    with pytest.raises(ServiceConfigError):
        load_service_config(path, env={})


def test_bad_env_value_names_variable():
    with pytest.raises(ServiceConfigError, match="SIPO_SIT_LIMIT_MS"):
        load_service_config(env={"SIPO_SIT_LIMIT_MS": "soon"})


def test_baseline_mode_from_file(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(
        json.dumps({"monitor": {"mode": "sensor_baseline", "baseline_counts": 513}})
    )
    config = load_service_config(path, env={})
    assert config.monitor.mode is ThresholdMode.SENSOR_BASELINE
    assert config.monitor.baseline_counts == 513


def test_resolve_model_reference_and_file(tmp_path):
    assert resolve_model("reference").c3 == 0.0003
    path = tmp_path / "model.txt"
    save_model(reference_model(), path)
    assert resolve_model(str(path)).c1 == pytest.approx(4.8789, rel=1e-11)
    with pytest.raises(ServiceConfigError, match="not found"):
        resolve_model(str(tmp_path / "missing.txt"))
