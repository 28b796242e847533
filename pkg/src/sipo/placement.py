"""Sensor-placement study analytics: per-site averaging, sensitivity ranges,
site selection, and per-site calibration fits.

Nine participants bend to five target angles with the sensor mounted at four
spine sites; the site whose subject-averaged counts span the widest range
across angles is the most sensitive mount point and wins selection.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .calibration import (
    ADC_MAX,
    CalibrationError,
    CalibrationModel,
    CalibrationSample,
    fit_cubic,
    residual_rms,
)

STUDY_ANGLES = (75.0, 80.0, 90.0, 100.0, 115.0)


class PlacementSite(enum.Enum):
    """The four candidate spine mount points, with cm below the neck."""

    UPPER_THORACIC = ("upper_thoracic", 6)
    LOWER_THORACIC = ("lower_thoracic", 12)
    UPPER_LUMBAR = ("upper_lumbar", 20)
    LOWER_LUMBAR = ("lower_lumbar", 26)

    def __init__(self, token: str, cm_below_neck: int):
        self.token = token
        self.cm_below_neck = cm_below_neck

    @classmethod
    def from_token(cls, token: str) -> "PlacementSite":
        for site in cls:
            if site.token == token:
                return site
        raise StudyDataError(f"unknown placement site {token!r}")


class StudyDataError(ValueError):
    """Study records violate the design schema."""


class IncompleteDesignError(StudyDataError):
    """One or more (site, angle) cells have no records."""

    def __init__(self, missing: list[tuple[PlacementSite, float]]):
        cells = ", ".join(f"({site.token}, {angle:g} deg)" for site, angle in missing)
        super().__init__(f"study design incomplete; empty cells: {cells}")
        self.missing = missing


@dataclass(frozen=True)
class StudyRecord:
    """One participant's sensor reading at one site and target angle."""

    subject_id: str
    site: PlacementSite
    target_angle: float
    sensor_value: float

    def __post_init__(self) -> None:
        if self.target_angle not in STUDY_ANGLES:
            raise StudyDataError(
                f"target angle {self.target_angle:g} is not one of the study angles "
                f"{tuple(int(a) for a in STUDY_ANGLES)}"
            )
        if not 0.0 <= self.sensor_value <= ADC_MAX:
            raise StudyDataError(f"sensor value {self.sensor_value} outside [0, {ADC_MAX}]")


@dataclass(frozen=True)
class MeanCell:
    mean: float
    n: int


MeanTable = Mapping[PlacementSite, Mapping[float, MeanCell]]


def aggregate_means(records: Sequence[StudyRecord]) -> dict[PlacementSite, dict[float, MeanCell]]:
    """Arithmetic mean of counts per (site, angle) cell, with cell sizes."""
    sums: dict[tuple[PlacementSite, float], list[float]] = {}
    for record in records:
        sums.setdefault((record.site, record.target_angle), []).append(record.sensor_value)
    missing = [
        (site, angle)
        for site in PlacementSite
        for angle in STUDY_ANGLES
        if (site, angle) not in sums
    ]
    if missing:
        raise IncompleteDesignError(missing)
    return {
        site: {
            angle: MeanCell(
                mean=sum(sums[(site, angle)]) / len(sums[(site, angle)]),
                n=len(sums[(site, angle)]),
            )
            for angle in STUDY_ANGLES
        }
        for site in PlacementSite
    }


@dataclass(frozen=True)
class SiteRange:
    site: PlacementSite
    lo: float
    hi: float

    @property
    def range_counts(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class PlacementSelection:
    site: PlacementSite
    ranges: tuple[SiteRange, ...]
    tie: bool


def select_placement(means: MeanTable) -> PlacementSelection:
    """Pick the site whose mean counts span the widest range across angles.

    Ties break toward the first site in anatomical order, with the tie
    flagged so callers can tell an outright win from a coin toss.
    """
    ranges = []
    for site in PlacementSite:
        row = [means[site][angle].mean for angle in STUDY_ANGLES]
        ranges.append(SiteRange(site=site, lo=min(row), hi=max(row)))
    best = max(r.range_counts for r in ranges)
    winner = next(r for r in ranges if r.range_counts == best)
    tie = sum(1 for r in ranges if r.range_counts == best) > 1
    return PlacementSelection(site=winner.site, ranges=tuple(ranges), tie=tie)


@dataclass(frozen=True)
class SiteFit:
    """Per-site calibration outcome; either a model or an isolated error."""

    site: PlacementSite
    model: CalibrationModel | None
    residual_rms_counts: float | None
    n_records: int
    error: str | None = None


def fit_site_models(records: Sequence[StudyRecord]) -> dict[PlacementSite, SiteFit]:
    """Cubic fit per site from that site's (angle, counts) pairs.

    A failing site (too few angles, non-monotone fit) reports its error
    without aborting the other sites.
    """
    by_site: dict[PlacementSite, list[StudyRecord]] = {site: [] for site in PlacementSite}
    for record in records:
        by_site[record.site].append(record)
    fits: dict[PlacementSite, SiteFit] = {}
    for site, site_records in by_site.items():
        samples = [
            CalibrationSample(angle=r.target_angle, sensor_value=r.sensor_value)
            for r in site_records
        ]
        try:
            model = fit_cubic(samples)
            fits[site] = SiteFit(
                site=site,
                model=model,
                residual_rms_counts=residual_rms(model, samples),
                n_records=len(site_records),
            )
        except CalibrationError as exc:
            fits[site] = SiteFit(
                site=site,
                model=None,
                residual_rms_counts=None,
                n_records=len(site_records),
                error=str(exc),
            )
    return fits


# -- file formats -------------------------------------------------------------

_CSV_FIELDS = ("subject_id", "site", "target_angle_deg", "sensor_counts")


def read_study_csv(path: str | Path) -> list[StudyRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(_CSV_FIELDS).issubset(reader.fieldnames):
            raise StudyDataError(
                f"{path}: expected CSV header with columns {','.join(_CSV_FIELDS)}"
            )
        records = []
        for row_no, row in enumerate(reader, 2):
            try:
                records.append(
                    StudyRecord(
                        subject_id=row["subject_id"],
                        site=PlacementSite.from_token(row["site"]),
                        target_angle=float(row["target_angle_deg"]),
                        sensor_value=float(row["sensor_counts"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                if isinstance(exc, StudyDataError):
                    raise StudyDataError(f"{path}: row {row_no}: {exc}") from None
                raise StudyDataError(f"{path}: row {row_no}: non-numeric value") from None
    if not records:
        raise StudyDataError(f"{path}: no records")
    return records


def write_study_csv(records: Iterable[StudyRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for r in records:
            writer.writerow(
                [r.subject_id, r.site.token, f"{r.target_angle:g}", f"{r.sensor_value:.10g}"]
            )


def write_means_csv(means: MeanTable, path: str | Path) -> None:
    """Plottable mean-counts table: one angle per row, one column per site."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["angle_deg"] + [site.token for site in PlacementSite])
        for angle in STUDY_ANGLES:
            writer.writerow(
                [f"{angle:g}"] + [f"{means[site][angle].mean:.6g}" for site in PlacementSite]
            )


def render_report(selection: PlacementSelection, fits: Mapping[PlacementSite, SiteFit]) -> str:
    """Human-readable record set: ranges, selection, per-site fits."""
    lines = []
    for r in selection.ranges:
        lines.append(
            f"site_range site={r.site.token} min={r.lo:.4f} max={r.hi:.4f} "
            f"range={r.range_counts:.4f}"
        )
    lines.append(f"selected_site={selection.site.token} tie={'true' if selection.tie else 'false'}")
    for site in PlacementSite:
        fit = fits[site]
        if fit.model is not None:
            m = fit.model
            lines.append(
                f"site_fit site={site.token} c0={m.c0:.9g} c1={m.c1:.9g} c2={m.c2:.9g} "
                f"c3={m.c3:.9g} rms={fit.residual_rms_counts:.4f} n={fit.n_records}"
            )
        else:
            lines.append(f"site_fit site={site.token} error={fit.error!r} n={fit.n_records}")
    return "\n".join(lines)
