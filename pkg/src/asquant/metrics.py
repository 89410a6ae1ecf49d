"""Overlap metrics, observer-agreement statistics and distance summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import LabelMask, ScanMeta
from .errors import DegenerateVariance

LOA_Z = 1.96

RELIABILITY_BANDS = ((0.5, "poor"), (0.75, "moderate"), (0.9, "good"))


def _pair(a: LabelMask, b: LabelMask, code: int) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a.data == code, b.data == code


def confusion(a: LabelMask, b: LabelMask, code: int) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) of prediction ``a`` against reference ``b``."""
    d, m = _pair(a, b, code)
    tp = int(np.count_nonzero(d & m))
    fp = int(np.count_nonzero(d & ~m))
    fn = int(np.count_nonzero(~d & m))
    tn = d.size - tp - fp - fn
    return tp, fp, fn, tn


def dice(a: LabelMask, b: LabelMask, code: int) -> float:
    """Dice overlap of one class; 1.0 when the class is absent from both."""
    tp, fp, fn, _ = confusion(a, b, code)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def sensitivity(a: LabelMask, b: LabelMask, code: int) -> float:
    tp, _, fn, _ = confusion(a, b, code)
    if tp + fn == 0:
        raise ValueError("sensitivity undefined: reference class is empty")
    return tp / (tp + fn)


def specificity(a: LabelMask, b: LabelMask, code: int) -> float:
    _, fp, _, tn = confusion(a, b, code)
    if tn + fp == 0:
        raise ValueError("specificity undefined: reference covers every pixel")
    return tn / (tn + fp)


@dataclass(frozen=True)
class ObserverMatrix:
    values: np.ndarray
    subject_ids: tuple = ()
    rater_ids: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError("need at least 2 subjects and 2 raters")
        if not np.isfinite(v).all():
            raise ValueError("observer values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        n, k = v.shape
        if not self.subject_ids:
            object.__setattr__(self, "subject_ids", tuple(range(n)))
        if not self.rater_ids:
            object.__setattr__(self, "rater_ids", tuple(range(k)))

    @classmethod
    def from_long(cls, rows) -> "ObserverMatrix":
        """Build from (subject, rater, value) triples; every cell must be filled."""
        table: dict = {}
        subjects, raters = [], []
        for s, r, v in rows:
            if s not in table:
                table[s] = {}
                subjects.append(s)
            if r not in raters:
                raters.append(r)
            table[s][r] = float(v)
        try:
            vals = [[table[s][r] for r in raters] for s in subjects]
        except KeyError as exc:
            raise ValueError(f"observer table has a missing cell: {exc}") from None
        return cls(np.array(vals), tuple(subjects), tuple(raters))


def anova_mean_squares(x: np.ndarray) -> tuple[float, float, float]:
    """Two-way ANOVA mean squares (rows, columns, error) without replication."""
    n, k = x.shape
    grand = x.mean()
    ss_rows = k * np.sum((x.mean(axis=1) - grand) ** 2)
    ss_cols = n * np.sum((x.mean(axis=0) - grand) ** 2)
    ss_tot = np.sum((x - grand) ** 2)
    ss_err = ss_tot - ss_rows - ss_cols
    return ss_rows / (n - 1), ss_cols / (k - 1), max(ss_err, 0.0) / ((n - 1) * (k - 1))


def icc_2_1_abs(m: ObserverMatrix) -> float:
    """Single-rater, absolute-agreement, two-way random-effects ICC.

    A matrix whose cells are all equal has no variance to partition; it is
    reported as perfect agreement (1.0).
    """
    x = m.values
    n, k = x.shape
    if np.all(x == x.flat[0]):
        return 1.0
    msr, msc, mse = anova_mean_squares(x)
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denom == 0:
        return 1.0
    return float((msr - mse) / denom)


def reliability_band(icc: float) -> str:
    for upper, name in RELIABILITY_BANDS:
        if icc < upper:
            return name
    return "excellent"


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    sd_diff: float
    loa_low: float
    loa_high: float


def _diffs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(arr) < 2:
        raise ValueError("need at least 2 pairs")
    return arr[:, 0] - arr[:, 1]


def bland_altman(pairs) -> BlandAltman:
    d = _diffs(pairs)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    return BlandAltman(mean, sd, mean - LOA_Z * sd, mean + LOA_Z * sd)


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) via the regularised incomplete beta."""
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t(pairs) -> tuple[float, float]:
    """Paired t statistic and two-sided p-value."""
    d = _diffs(pairs)
    n = len(d)
    sd = float(d.std(ddof=1))
    if sd == 0:
        raise DegenerateVariance("differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    return t, student_t_sf2(t, n - 1)


def rms_distance(point_pairs, meta: ScanMeta | None = None) -> float:
    """Root-mean-square Euclidean distance between paired points, in µm with ``meta``."""
    arr = np.asarray(point_pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[1:] != (2, 2) or len(arr) == 0:
        raise ValueError("expected a non-empty sequence of ((x, y), (x, y)) pairs")
    d = arr[:, 0] - arr[:, 1]
    if meta is not None:
        d = d * meta.scale
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def significant(p: float, alpha: float = 0.05) -> bool:
    return p < alpha


def agreement_summary(m: ObserverMatrix) -> dict:
    """ICC over all raters plus Bland–Altman and paired t for every rater pair."""
    icc = icc_2_1_abs(m)
    out = {
        "n_subjects": m.values.shape[0],
        "n_raters": m.values.shape[1],
        "icc_2_1_abs": icc,
        "reliability": reliability_band(icc),
        "pairs": [],
    }
    k = m.values.shape[1]
    for i in range(k):
        for j in range(i + 1, k):
            pairs = m.values[:, [i, j]]
            ba = bland_altman(pairs)
            entry = {
                "raters": [str(m.rater_ids[i]), str(m.rater_ids[j])],
                "mean_diff": ba.mean_diff,
                "sd_diff": ba.sd_diff,
                "loa_low": ba.loa_low,
                "loa_high": ba.loa_high,
            }
            try:
                t, p = paired_t(pairs)
                entry.update(t=t, p=float(f"{p:.4g}"), significant=significant(p))
            except DegenerateVariance:
                entry.update(t=None, p=None, significant=False)
            out["pairs"].append(entry)
    return out

