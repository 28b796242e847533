"""Cubic calibration between torso bending angle (degrees) and flex-sensor counts.

The sensor response is modelled as a strictly increasing cubic
``counts = c3*A^3 + c2*A^2 + c1*A + c0`` over a bounded angle domain, so the
inverse (counts back to degrees) is well defined.  The module covers forward
evaluation, numeric inversion, least-squares fitting from samples, and a flat
text serialization for fitted models.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ADC_MAX = 1023  # 10-bit ADC full scale

# Factory calibration for the lower-thoracic mount point, with a validity
# domain wide enough to cover leaning well past the measured 75-115 deg span.
_REFERENCE_COEFFS = (345.23, 4.8789, -0.0605, 0.0003)
_REFERENCE_DOMAIN = (60.0, 130.0)


class CalibrationError(Exception):
    """Base class for calibration failures."""


class AngleDomainError(CalibrationError):
    """Angle lies outside the model's validity domain."""


class CountsRangeError(CalibrationError):
    """Sensor counts lie outside the model's output range."""


class NonMonotoneModelError(CalibrationError):
    """Cubic is not strictly increasing on the requested domain."""

    def __init__(self, message: str, coeffs: tuple[float, float, float, float]):
        super().__init__(message)
        self.coeffs = coeffs


class InsufficientDataError(CalibrationError):
    """Not enough distinct angles to determine a cubic."""


def _derivative_min(c1: float, c2: float, c3: float, lo: float, hi: float) -> float:
    """Exact minimum of d/dA (c3*A^3 + c2*A^2 + c1*A) on [lo, hi].

    The derivative is the quadratic 3*c3*A^2 + 2*c2*A + c1; its minimum on a
    closed interval is at an endpoint or at the vertex when that falls inside.
    """
    d = lambda a: (3.0 * c3 * a + 2.0 * c2) * a + c1
    candidates = [d(lo), d(hi)]
    if c3 != 0.0:
        vertex = -c2 / (3.0 * c3)
        if lo < vertex < hi and 3.0 * c3 > 0.0:
            candidates.append(d(vertex))
    return min(candidates)


@dataclass(frozen=True)
class CalibrationModel:
    """Strictly increasing cubic counts = f(angle) on [angle_min, angle_max]."""

    c0: float
    c1: float
    c2: float
    c3: float
    angle_min: float
    angle_max: float

    def __post_init__(self) -> None:
        values = (self.c0, self.c1, self.c2, self.c3, self.angle_min, self.angle_max)
        if not all(math.isfinite(v) for v in values):
            raise CalibrationError("model coefficients and domain must be finite")
        if not self.angle_min < self.angle_max:
            raise CalibrationError(
                f"angle_min ({self.angle_min}) must be below angle_max ({self.angle_max})"
            )
        dmin = _derivative_min(self.c1, self.c2, self.c3, self.angle_min, self.angle_max)
        if dmin <= 0.0:
            raise NonMonotoneModelError(
                f"cubic is not strictly increasing on [{self.angle_min}, {self.angle_max}] "
                f"(min derivative {dmin:.6g} counts/deg)",
                (self.c0, self.c1, self.c2, self.c3),
            )

    @property
    def counts_min(self) -> float:
        return eval_forward(self, self.angle_min)

    @property
    def counts_max(self) -> float:
        return eval_forward(self, self.angle_max)


@dataclass(frozen=True)
class CalibrationSample:
    """One (angle, sensor counts) observation used for fitting."""

    angle: float
    sensor_value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.angle):
            raise CalibrationError(f"sample angle must be finite, got {self.angle}")
        if not math.isfinite(self.sensor_value) or not 0.0 <= self.sensor_value <= ADC_MAX:
            raise CalibrationError(
                f"sensor value must be finite and within [0, {ADC_MAX}], got {self.sensor_value}"
            )


def reference_model() -> CalibrationModel:
    """Built-in lower-thoracic calibration shipped with the system."""
    c0, c1, c2, c3 = _REFERENCE_COEFFS
    lo, hi = _REFERENCE_DOMAIN
    return CalibrationModel(c0=c0, c1=c1, c2=c2, c3=c3, angle_min=lo, angle_max=hi)


def eval_forward(model: CalibrationModel, angle: float) -> float:
    """Evaluate counts = f(angle); Horner form for numeric stability."""
    if not math.isfinite(angle):
        raise AngleDomainError(f"angle must be finite, got {angle}")
    if angle < model.angle_min:
        raise AngleDomainError(
            f"angle {angle} deg is below the model domain minimum {model.angle_min} deg"
        )
    if angle > model.angle_max:
        raise AngleDomainError(
            f"angle {angle} deg is above the model domain maximum {model.angle_max} deg"
        )
    a = angle
    return ((model.c3 * a + model.c2) * a + model.c1) * a + model.c0


def invert(model: CalibrationModel, sensor_value: float, tol_deg: float = 1e-9) -> float:
    """Angle A with f(A) = sensor_value, by bisection on the monotone domain.

    Converges to well under a microdegree; the model's construction-time
    monotonicity check guarantees a unique root.
    """
    if not math.isfinite(sensor_value):
        raise CountsRangeError(f"sensor value must be finite, got {sensor_value}")
    lo, hi = model.angle_min, model.angle_max
    f_lo, f_hi = eval_forward(model, lo), eval_forward(model, hi)
    if sensor_value < f_lo or sensor_value > f_hi:
        raise CountsRangeError(
            f"sensor value {sensor_value} outside model range [{f_lo:.3f}, {f_hi:.3f}] counts"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eval_forward(model, mid) < sensor_value:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol_deg:
            break
    return 0.5 * (lo + hi)


def fit_cubic(samples: Sequence[CalibrationSample]) -> CalibrationModel:
    """Least-squares cubic through (angle, counts) samples.

    The fit runs on a centered/scaled angle variable (a raw Vandermonde at
    angles near 100 deg is badly conditioned) and the coefficients are mapped
    back to the raw-angle basis.  The returned model's domain is the sampled
    angle span and must be strictly increasing there.
    """
    if len({s.angle for s in samples}) < 4:
        raise InsufficientDataError(
            f"cubic fit needs at least 4 distinct angles, got "
            f"{len({s.angle for s in samples})}"
        )
    angles = np.array([s.angle for s in samples], dtype=float)
    values = np.array([s.sensor_value for s in samples], dtype=float)
    # Polynomial.fit solves in a [-1, 1] window mapped over the data span,
    # then convert() composes the affine map back into power-basis coefficients.
    fitted = np.polynomial.Polynomial.fit(angles, values, deg=3).convert()
    coeffs = list(fitted.coef)
    coeffs += [0.0] * (4 - len(coeffs))  # convert() drops exact-zero high terms
    c0, c1, c2, c3 = (float(c) for c in coeffs)
    return CalibrationModel(
        c0=c0, c1=c1, c2=c2, c3=c3,
        angle_min=float(angles.min()), angle_max=float(angles.max()),
    )


def residual_rms(model: CalibrationModel, samples: Iterable[CalibrationSample]) -> float:
    """Root-mean-square of counts residuals of samples against the model."""
    residuals = [eval_forward(model, s.angle) - s.sensor_value for s in samples]
    if not residuals:
        raise InsufficientDataError("no samples to compute residuals over")
    return math.sqrt(sum(r * r for r in residuals) / len(residuals))


# -- file formats -------------------------------------------------------------

_MODEL_KEYS = ("c0", "c1", "c2", "c3", "angle_min", "angle_max")


def save_model(model: CalibrationModel, path: str | Path) -> None:
    """Write the flat key=value model record (12 significant digits)."""
    lines = [f"{key}={getattr(model, key):.12g}" for key in _MODEL_KEYS]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> CalibrationModel:
    """Parse a key=value model record; construction re-checks monotonicity."""
    fields: dict[str, float] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CalibrationError(f"{path}: line {line_no}: expected key=value, got {raw!r}")
        key = key.strip()
        if key not in _MODEL_KEYS:
            raise CalibrationError(f"{path}: line {line_no}: unknown key {key!r}")
        try:
            fields[key] = float(value.strip())
        except ValueError:
            raise CalibrationError(
                f"{path}: line {line_no}: {key} is not a number: {value.strip()!r}"
            ) from None
    missing = [k for k in _MODEL_KEYS if k not in fields]
    if missing:
        raise CalibrationError(f"{path}: missing keys: {', '.join(missing)}")
    return CalibrationModel(**fields)


def read_samples_csv(path: str | Path) -> list[CalibrationSample]:
    """Read calibration samples from a CSV with header angle_deg,sensor_counts."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"angle_deg", "sensor_counts"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise CalibrationError(
                f"{path}: expected CSV header with columns angle_deg,sensor_counts"
            )
        samples = []
        for row_no, row in enumerate(reader, 2):
            try:
                samples.append(
                    CalibrationSample(
                        angle=float(row["angle_deg"]),
                        sensor_value=float(row["sensor_counts"]),
                    )
                )
            except (TypeError, ValueError):
                raise CalibrationError(f"{path}: row {row_no}: non-numeric sample") from None
    if not samples:
        raise InsufficientDataError(f"{path}: no samples")
    return samples
