"""360° aggregation of per-scan results: quadrant summaries, goniogram and
confidence-polar tables.

Polar convention: scan ``i`` images two spurs; its left side sits at
``i·180/64`` degrees and its right side 180° further round. Quadrants are
superior [45, 135), temporal [135, 225), inferior [225, 315) and nasal
otherwise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .core import DEGREES_PER_SCAN, SCANS_PER_VOLUME, ParamSet, SpurPair
from .errors import DuplicateScanIndex
from .qc import QCPolicy, QCReport

GONIO_PARAMS = ("aod500", "aod750", "tisa500", "tisa750")
QUADRANTS = ("superior", "temporal", "inferior", "nasal")


@dataclass(frozen=True)
class ScanResult:
    scan_index: int
    params: ParamSet
    qc: QCReport
    spurs: SpurPair | None = None

    @property
    def passed(self) -> bool:
        return self.qc.overall_pass


def side_angles(scan_index: int) -> tuple[float, float]:
    left = (scan_index * DEGREES_PER_SCAN) % 360.0
    return left, (left + 180.0) % 360.0


def quadrant(angle_deg: float) -> str:
    a = angle_deg % 360.0
    if 45.0 <= a < 135.0:
        return "superior"
    if 135.0 <= a < 225.0:
        return "temporal"
    if 225.0 <= a < 315.0:
        return "inferior"
    return "nasal"


@dataclass(frozen=True)
class VolumeReport:
    rows: tuple
    quadrant_means: dict
    excluded: int
    missing: tuple = ()
    ssl_conf_threshold: float = QCPolicy().ssl_conf_threshold

    @property
    def total(self) -> int:
        return len(self.rows)

    @property
    def passing(self) -> int:
        return self.total - self.excluded

    def to_dict(self) -> dict:
        return {
            "scans": self.total,
            "passing": self.passing,
            "excluded": self.excluded,
            "excluded_indices": [r.scan_index for r in self.rows if not r.passed],
            "missing_indices": list(self.missing),
            "quadrant_means": self.quadrant_means,
        }


def _side_values(row: ScanResult, name: str):
    la, ra = side_angles(row.scan_index)
    return ((la, row.params.left.get(name)), (ra, row.params.right.get(name)))


def quadrant_means(rows, names=GONIO_PARAMS) -> dict:
    """Mean of each sided parameter per quadrant over passing scans; None when empty."""
    out = {}
    for q in QUADRANTS:
        out[q] = {}
        for name in names:
            vals = [
                v for r in rows if r.passed
                for a, v in _side_values(r, name) if v is not None and quadrant(a) == q
            ]
            out[q][name] = sum(vals) / len(vals) if vals else None
    return out


def aggregate(results, policy: QCPolicy = QCPolicy()) -> VolumeReport:
    rows = sorted(results, key=lambda r: r.scan_index)
    seen = set()
    for r in rows:
        if r.scan_index in seen:
            raise DuplicateScanIndex(r.scan_index)
        seen.add(r.scan_index)
    if len(rows) > SCANS_PER_VOLUME:
        raise ValueError(f"a volume holds at most {SCANS_PER_VOLUME} scans")
    missing = ()
    if rows:
        missing = tuple(i for i in range(rows[-1].scan_index + 1) if i not in seen)
    excluded = sum(1 for r in rows if not r.passed)
    return VolumeReport(tuple(rows), quadrant_means(rows), excluded, missing, policy.ssl_conf_threshold)


# -------------------------------------------------------------- tables


def _fmt(v, digits: int = 1) -> str:
    return "" if v is None else f"{v:.{digits}f}"


def goniogram_rows(report: VolumeReport, parameter: str) -> list[tuple]:
    """(angle_deg, value_left, value_right, pass) per scan side, by angle.

    Each scan contributes two rows: at its left-side angle ``value_left`` is
    filled, at its right-side angle ``value_right`` is.
    """
    name = parameter.lower()
    if name not in GONIO_PARAMS:
        raise ValueError(f"goniogram parameter must be one of {GONIO_PARAMS}")
    out = []
    for r in report.rows:
        (la, lv), (ra, rv) = _side_values(r, name)
        out.append((la, lv, None, r.passed))
        out.append((ra, None, rv, r.passed))
    out.sort(key=lambda t: t[0])
    return out


def confidence_rows(report: VolumeReport) -> list[tuple]:
    """(angle_deg, conf, pass) per spur instance; pass is that spur's SSL gate."""
    out = []
    for r in report.rows:
        la, ra = side_angles(r.scan_index)
        cl = None if r.spurs is None else r.spurs.conf_left
        cr = None if r.spurs is None else r.spurs.conf_right
        out.append((la, cl, r.qc.ssl_pass_left))
        out.append((ra, cr, r.qc.ssl_pass_right))
    out.sort(key=lambda t: t[0])
    return out


def _csv_text(comment: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def goniogram_csv(report: VolumeReport, parameter: str) -> str:
    rows = [
        (f"{a:.4f}", _fmt(vl), _fmt(vr), "true" if ok else "false")
        for a, vl, vr, ok in goniogram_rows(report, parameter)
    ]
    comment = f"{parameter.upper()}; scan i left side at i*180/64 deg, right side +180 deg"
    return _csv_text(comment, ("angle_deg", "value_left", "value_right", "pass"), rows)


def confidence_polar_csv(report: VolumeReport) -> str:
    rows = [(f"{a:.4f}", _fmt(c, 4), "true" if ok else "false") for a, c, ok in confidence_rows(report)]
    comment = f"ssl_conf_threshold={report.ssl_conf_threshold:g}"
    return _csv_text(comment, ("angle_deg", "conf", "pass"), rows)
