"""Sitting-posture monitor: calibration math, wire protocol, device simulator,
alerting engine, host service, and placement-study analytics."""

__version__ = "0.1.0"
