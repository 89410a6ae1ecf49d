"""Acceptance criteria 1–6, each at its stated tolerance.

A per-criterion PASS/FAIL line is printed in the terminal summary (see
conftest.py) and, with ``-s``, as each criterion finishes.
"""

import math
import random
import time
from dataclasses import replace

import numpy as np
import pytest

from asquant.cli import ScanJob, run_scans
from asquant.core import CHAMBER, CORNEO_SCLERA, IRIS, LabelMask, Palette, ParamSet, ScanMeta
from asquant.landmark import LandmarkLabelConfig, confidence_index, decode_spur, encode_landmark, reference_square
from asquant.landmark import spur_from_halves
from asquant.metrics import ObserverMatrix, bland_altman, confusion, dice, icc_2_1_abs, paired_t, sensitivity
from asquant.metrics import specificity
from asquant.params import QuantifyConfig, aod, build_interfaces, quantify_scan, tisa
from asquant.phantom import NoiseSpec, PhantomSpec, angle_sweep, battery, generate
from asquant.qc import QCPolicy, assess, contour_gate, ssl_gate
from asquant.volume import ScanResult, aggregate, goniogram_csv, goniogram_rows

from conftest import plate_scene

LENGTHS = ("acw", "acd", "lv", "aod500", "aod750", "it750")
AREAS = ("ac_area", "tisa500", "tisa750")
PAPER_SECONDS_PER_SCAN = 1.723
CORRUPT = (5, 40, 77, 120)


def _verdict(n, ok, detail=""):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}{' — ' + detail if detail else ''}")
    return ok


def _base(col):
    return col if col in ("acw", "acd", "lv", "ac_area") else col.rsplit("_", 1)[0]


# ------------------------------------------------------------ criterion 1


def test_criterion_1_phantom_battery():
    t0 = time.perf_counter()
    misses = []
    for name, spec in battery():
        ph = generate(spec)
        got = quantify_scan(ph.tissue, ph.spurs, spec.meta)
        scale = max(spec.scale_x, spec.scale_y)
        for col, want in ph.truth.params.as_row(None).items():
            g = got.value(col)
            base = _base(col)
            tol = max(2 * scale, 0.01 * abs(want)) if base in LENGTHS else 0.03 * abs(want)
            if g is None or abs(g - want) > tol:
                misses.append(f"{name}/{col}: got {g}, truth {want:.2f}, tol {tol:.2f}")
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 60
    _verdict(1, ok, f"{elapsed:.1f} s; " + ("; ".join(misses) or "all within tolerance"))
    assert elapsed < 60
    assert not misses, misses


# ------------------------------------------------------------ criterion 2


def test_criterion_2_landmark_closure():
    rng = np.random.default_rng(2)
    cfg = LandmarkLabelConfig()
    w, h = 400, 300
    margin = cfg.r_attention + 1
    worst = 0.0
    for _ in range(1000):
        x, y = rng.uniform(margin, w - 1 - margin), rng.uniform(margin, h - 1 - margin)
        p, _ = decode_spur(encode_landmark((w, h), (x, y), cfg))
        worst = max(worst, abs(p.x - x), abs(p.y - y))
    x0, y0, x1, y1 = reference_square((120.0, 80.0), cfg.square_side)
    pix = np.array([(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)])
    conf = confidence_index(pix, pix.mean(axis=0), cfg.square_side)
    _verdict(2, worst <= 0.5 and conf == 1.0, f"worst axis error {worst:.3f} px; exact square confidence {conf}")
    assert worst <= 0.5
    assert conf == 1.0


# ----------------------------------------------- shared 128-scan volume


@pytest.fixture(scope="module")
def volume_128():
    """The angle sweep with four scans corrupted by sclera specks; spurs decoded from landmark labels."""
    scans = []
    for i, spec in angle_sweep():
        if i in CORRUPT:
            spec = replace(spec, noise=NoiseSpec(12, 3, CORNEO_SCLERA), seed=i)
        ph = generate(spec)
        pl, pr, cl, cr = spur_from_halves(ph.landmark_left, ph.landmark_right, ph.tissue.width)
        scans.append((i, ph, type(ph.spurs)(pl, pr, cl, cr)))
    return scans


# ------------------------------------------------------------ criterion 3


def _blobs(counts):
    d = np.zeros((6 * len(counts) + 2, 4 * max(counts.values()) + 2), dtype=np.uint8)
    for row, (code, n) in enumerate(sorted(counts.items())):
        for i in range(n):
            d[1 + 6 * row : 3 + 6 * row, 1 + 4 * i : 3 + 4 * i] = code
    return LabelMask(d)


def test_criterion_3_qc_policy(volume_128):
    ssl_ok = ssl_gate(0.80) and not ssl_gate(0.79)
    ok_counts = contour_gate(_blobs({IRIS: 5, CHAMBER: 6, CORNEO_SCLERA: 10}))[1]
    bad = [contour_gate(_blobs({IRIS: 5, CHAMBER: 6, CORNEO_SCLERA: 10} | {c: n}))[1]
           for c, n in ((IRIS, 6), (CHAMBER, 7), (CORNEO_SCLERA, 11))]
    excluded = [i for i, ph, sp in volume_128 if not assess(ph.tissue, sp).overall_pass]
    ok = ssl_ok and ok_counts and not any(bad) and excluded == list(CORRUPT)
    _verdict(3, ok, f"disqualified {len(excluded)}/128: {excluded}")
    assert ssl_ok
    assert ok_counts and not any(bad)
    assert excluded == list(CORRUPT)


# ------------------------------------------------------------ criterion 4


def _icc_oracle(x):
    n, k = x.shape
    g = x.mean()
    msr = k * ((x.mean(1) - g) ** 2).sum() / (n - 1)
    msc = n * ((x.mean(0) - g) ** 2).sum() / (k - 1)
    resid = x - x.mean(1, keepdims=True) - x.mean(0, keepdims=True) + g
    mse = (resid ** 2).sum() / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k / n * (msc - mse))


def test_criterion_4_metrics():
    rng = np.random.default_rng(4)
    overlap_ok = True
    for _ in range(100):
        shape = tuple(rng.integers(5, 50, 2))
        a, b = LabelMask(rng.integers(0, 4, shape)), LabelMask(rng.integers(0, 4, shape))
        for code in (IRIS, CORNEO_SCLERA, CHAMBER):
            d, m = a.data == code, b.data == code
            tp, fp = int((d & m).sum()), int((d & ~m).sum())
            fn, tn = int((~d & m).sum()), int((~d & ~m).sum())
            overlap_ok &= confusion(a, b, code) == (tp, fp, fn, tn)
            overlap_ok &= dice(a, b, code) == 2 * tp / (2 * tp + fp + fn)
            overlap_ok &= sensitivity(a, b, code) == tp / (tp + fn)
            overlap_ok &= specificity(a, b, code) == tn / (tn + fp)
    icc_err = 0.0
    for _ in range(50):
        n, k = rng.integers(2, 15), rng.integers(2, 6)
        x = rng.normal(0, 2, (n, 1)) + rng.normal(0, 1, (n, k))
        icc_err = max(icc_err, abs(icc_2_1_abs(ObserverMatrix(x)) - _icc_oracle(x)))
    ba = bland_altman([(1, 0), (0, 1)])
    t, p = paired_t([(d, 0) for d in (1, 2, 3, 4, 5)])
    th = math.atan(t / 2)  # closed-form two-sided tail of t with 4 degrees of freedom
    hand = [
        (ba.mean_diff, 0.0), (ba.sd_diff, math.sqrt(2)), (ba.loa_high, 1.96 * math.sqrt(2)),
        (ba.loa_low, -1.96 * math.sqrt(2)), (t, 3 / math.sqrt(2.5 / 5)),
        (p, 1 - math.sin(th) * (1 + math.cos(th) ** 2 / 2)),
    ]
    hand_err = max(abs(a - b) for a, b in hand)
    ok = overlap_ok and icc_err <= 1e-9 and hand_err <= 1e-6
    _verdict(4, ok, f"ICC max error {icc_err:.1e}; worked-example max error {hand_err:.1e}")
    assert overlap_ok
    assert icc_err <= 1e-9
    assert hand_err <= 1e-6


# ------------------------------------------------------------ criterion 5


FEASIBILITY = (
    "The clinical results (Dice against human graders, the ICC tables and the human-observer distance "
    "figures) need the patient scans and graders and cannot be reproduced at desk scale; criteria 1–4 "
    "stand in for them. The timing claim is checked on a 128-scan phantom volume."
)


def test_criterion_5_feasibility_and_timing(volume_128):
    secs = []
    for i, ph, sp in volume_128:
        t0 = time.perf_counter()
        assess(ph.tissue, sp)
        quantify_scan(ph.tissue, sp, ph.spec.meta)
        secs.append(time.perf_counter() - t0)
    mean = sum(secs) / len(secs)
    ok = mean < PAPER_SECONDS_PER_SCAN
    _verdict(5, ok, f"{FEASIBILITY} Mean {mean:.3f} s/scan single-threaded, "
                    f"{PAPER_SECONDS_PER_SCAN / mean:.1f}x under {PAPER_SECONDS_PER_SCAN} s")
    assert ok


# ------------------------------------------------------------ criterion 6


def _scale_equivariance_errors():
    """(bit mismatches at power-of-two factors, worst relative error at other factors).

    Scaling by a power of two is lossless in binary floating point, so results
    must match bit for bit; any other factor rounds every product, so the
    identity can only hold to round-off.
    """
    ph = generate(PhantomSpec())
    cfg = QuantifyConfig()
    a = quantify_scan(ph.tissue, ph.spurs, ScanMeta(10, 10), cfg)
    mismatches, worst = 0, 0.0
    for s in (0.25, 0.5, 2.0, 4.0, 1.5, 3.7):
        sc = replace(cfg, aod_offsets=tuple(o * s for o in cfg.aod_offsets), it_offset=cfg.it_offset * s)
        b = quantify_scan(ph.tissue, ph.spurs, ScanMeta(10 * s, 10 * s), sc)
        exact = math.frexp(s)[0] == 0.5
        for col in ParamSet.columns():
            f = s * s if _base(col) in AREAS else s
            va, vb = a.value(col), b.value(col)
            if (va is None) != (vb is None):
                mismatches += 1
            elif va is not None and exact:
                mismatches += vb != va * f
            elif va:
                worst = max(worst, abs(vb - va * f) / abs(va * f))
    return mismatches, worst


def _plate_error():
    worst = 0.0
    meta = ScanMeta(10, 10)
    for gap in (15, 30, 40, 60):
        mask, spurs = plate_scene(gap_px=gap)
        ifc = build_interfaces(mask, spurs)
        for off in (500.0, 750.0):
            for side in "LR":
                a = aod(ifc, spurs, off, side, meta)
                worst = max(worst, abs(tisa(ifc, spurs, off, side, meta) - off * a) / (off * a))
    return worst


def _goniogram_ok(volume_128):
    results = [ScanResult(i, ParamSet(left=ph.truth.params.left, right=ph.truth.params.right),
                          assess(ph.tissue, sp), sp) for i, ph, sp in volume_128]
    rep = aggregate(results)
    rows_ok = all(len(goniogram_rows(rep, p)) == 2 * len(results) for p in ("aod500", "tisa750"))
    shuffled = list(results)
    random.Random(6).shuffle(shuffled)
    perm_ok = goniogram_csv(aggregate(shuffled), "aod500") == goniogram_csv(rep, "aod500")
    return rows_ok and perm_ok


def _determinism_ok(tmp_path, volume_128):
    from asquant.core import write_mask

    jobs = []
    for i, ph, sp in volume_128[:8]:
        p = tmp_path / f"m{i}.pgm"
        write_mask(ph.tissue, p)
        jobs.append(ScanJob(i, str(p), sp, None, None, ph.spec.meta, QCPolicy(), LandmarkLabelConfig(),
                            QuantifyConfig(), "manifest"))
    runs = [[o.result for o in run_scans(jobs, w)] for w in (1, 2, 4)]
    return runs[0] == runs[1] == runs[2]


def test_criterion_6_properties(tmp_path, volume_128):
    mismatches, scale_err = _scale_equivariance_errors()
    plate_err = _plate_error()
    gonio = _goniogram_ok(volume_128)
    determ = _determinism_ok(tmp_path, volume_128)
    ok = mismatches == 0 and scale_err <= 1e-9 and plate_err <= 0.005 and gonio and determ
    _verdict(6, ok, f"scale equivariance: {mismatches} bit mismatches at powers of two, "
                    f"round-off {scale_err:.1e} elsewhere; plate TISA vs offset×AOD {plate_err:.2%}; "
                    f"goniogram {gonio}; determinism {determ}")
    assert mismatches == 0
    assert scale_err <= 1e-9
    assert plate_err <= 0.005
    assert gonio
    assert determ
