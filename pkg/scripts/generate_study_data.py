#!/usr/bin/env python3
"""Regenerate the bundled synthetic placement-study dataset.

The dataset is synthetic but shaped like the real experiment: 9 subjects,
4 spine sites, 5 target angles, one reading per (subject, site, angle).
Lower-thoracic readings follow the reference calibration cubic; the other
sites get affinely compressed responses (smaller count range, site-specific
offset) so the sensitivity-range selection has a clear, reproducible winner.
Per-subject offsets are symmetric around zero, so cell means equal the
generating curves exactly.

Usage: python scripts/generate_study_data.py [out.csv]
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sipo.calibration import eval_forward, reference_model
from sipo.placement import STUDY_ANGLES, PlacementSite, StudyRecord, write_study_csv

# Symmetric subject spread in counts; sums to zero so means stay exact.
SUBJECT_OFFSETS = [-6.0, -4.5, -3.0, -1.5, 0.0, 1.5, 3.0, 4.5, 6.0]

# (center counts at 90 deg, response slope relative to the reference cubic)
SITE_RESPONSE = {
    PlacementSite.UPPER_THORACIC: (530.0, 0.3),
    PlacementSite.LOWER_THORACIC: (None, 1.0),  # the reference curve itself
    PlacementSite.UPPER_LUMBAR: (505.0, 0.3),
    PlacementSite.LOWER_LUMBAR: (490.0, 0.25),
}


def build_records() -> list[StudyRecord]:
    model = reference_model()
    anchor = eval_forward(model, 90.0)
    records = []
    for i, offset in enumerate(SUBJECT_OFFSETS, 1):
        subject = f"s{i:02d}"
        for site in PlacementSite:
            center, slope = SITE_RESPONSE[site]
            for angle in STUDY_ANGLES:
                reference = eval_forward(model, angle)
                if center is None:
                    value = reference + offset
                else:
                    value = center + slope * (reference - anchor) + offset
                records.append(
                    StudyRecord(
                        subject_id=subject,
                        site=site,
                        target_angle=angle,
                        sensor_value=round(value, 4),
                    )
                )
    return records


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "data" / "placement_study.csv"
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    records = build_records()
    write_study_csv(records, out)
    print(f"wrote {len(records)} records to {out}")


if __name__ == "__main__":
    main()
