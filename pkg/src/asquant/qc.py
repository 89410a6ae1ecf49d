"""Two-step quality gate: spur confidence, then per-class contour counts."""

from __future__ import annotations

from dataclasses import dataclass, field

from .contours import _components
from .core import CHAMBER, CORNEO_SCLERA, IRIS, LabelMask, Palette, SpurPair, TISSUE_NAMES

DEFAULT_MAX_CONTOURS = {IRIS: 5, CHAMBER: 6, CORNEO_SCLERA: 10}


@dataclass(frozen=True)
class QCPolicy:
    ssl_conf_threshold: float = 0.8
    max_contours: dict = field(default_factory=lambda: dict(DEFAULT_MAX_CONTOURS))
    min_contour_area: int = 0

    def __post_init__(self):
        if not 0 < self.ssl_conf_threshold <= 1:
            raise ValueError("ssl_conf_threshold must lie in (0, 1]")
        if any(v < 1 for v in self.max_contours.values()):
            raise ValueError("contour limits must be >= 1")
        if self.min_contour_area < 0:
            raise ValueError("min_contour_area must be >= 0")


@dataclass(frozen=True)
class QCReport:
    ssl_pass_left: bool
    ssl_pass_right: bool
    contour_counts: dict
    contour_pass: bool
    reasons: tuple = ()

    @property
    def overall_pass(self) -> bool:
        return self.ssl_pass_left and self.ssl_pass_right and self.contour_pass

    def to_dict(self) -> dict:
        return {
            "ssl_pass_left": self.ssl_pass_left,
            "ssl_pass_right": self.ssl_pass_right,
            "contour_counts": {TISSUE_NAMES[k]: v for k, v in sorted(self.contour_counts.items())},
            "contour_pass": self.contour_pass,
            "overall_pass": self.overall_pass,
            "reasons": list(self.reasons),
        }


def ssl_gate(conf: float, policy: QCPolicy = QCPolicy()) -> bool:
    if not 0.0 <= conf <= 1.0:
        raise ValueError(f"confidence {conf} outside [0, 1]")
    return conf >= policy.ssl_conf_threshold


def contour_counts(mask: LabelMask, policy: QCPolicy = QCPolicy()) -> dict:
    counts = {}
    for code in policy.max_contours:
        regions = _components(mask.data == code, 8)
        counts[code] = sum(1 for r in regions if r.area >= policy.min_contour_area)
    return counts


def contour_gate(mask: LabelMask, policy: QCPolicy = QCPolicy()) -> tuple[dict, bool]:
    if mask.palette is not Palette.TISSUE:
        raise ValueError("contour_gate needs a tissue-palette mask")
    counts = contour_counts(mask, policy)
    ok = all(1 <= counts[c] <= policy.max_contours[c] for c in counts)
    return counts, ok


def _contour_reasons(counts: dict, policy: QCPolicy) -> list[str]:
    out = []
    for code, n in sorted(counts.items()):
        name = TISSUE_NAMES[code].replace("_", "-")
        if n == 0:
            out.append(f"{name}-missing")
        elif n > policy.max_contours[code]:
            out.append(f"{name}-contours:{n}")
    return out


def assess(mask: LabelMask, spurs: SpurPair, policy: QCPolicy = QCPolicy()) -> QCReport:
    reasons = []
    sl = ssl_gate(spurs.conf_left, policy)
    sr = ssl_gate(spurs.conf_right, policy)
    if not sl:
        reasons.append("ssl-left")
    if not sr:
        reasons.append("ssl-right")
    counts, cp = contour_gate(mask, policy)
    reasons += _contour_reasons(counts, policy)
    return QCReport(sl, sr, counts, cp, tuple(reasons))


def failed_report(reason: str) -> QCReport:
    """Report for a scan whose inputs could not be read or decoded."""
    return QCReport(False, False, {c: 0 for c in DEFAULT_MAX_CONTOURS}, False, (reason,))

