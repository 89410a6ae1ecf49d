import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asquant.core import CHAMBER, CORNEO_SCLERA, IRIS, ParamSet, Point, SideParams, SpurPair
from asquant.errors import DuplicateScanIndex
from asquant.phantom import angle_sweep, ground_truth
from asquant.qc import QCReport
from asquant.volume import (
    GONIO_PARAMS,
    QUADRANTS,
    ScanResult,
    aggregate,
    confidence_polar_csv,
    confidence_rows,
    goniogram_csv,
    goniogram_rows,
    quadrant,
    side_angles,
)

GOOD = {IRIS: 2, CHAMBER: 1, CORNEO_SCLERA: 1}


def _qc(ok=True, cl=True, cr=True):
    return QCReport(cl, cr, dict(GOOD), ok)


def _result(i, ok=True, conf=(1.0, 1.0), aod=None):
    v = float(i) if aod is None else aod
    side = SideParams(aod500=v, aod750=v + 1, tisa500=10 * v, tisa750=20 * v)
    spurs = SpurPair(Point(10, 10), Point(90, 10), *conf)
    return ScanResult(i, ParamSet(left=side, right=side), _qc(ok, conf[0] >= 0.8, conf[1] >= 0.8), spurs)


def _parse(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_side_angles():
    assert side_angles(0) == (0.0, 180.0)
    assert side_angles(32) == (90.0, 270.0)
    assert side_angles(127) == pytest.approx((357.1875, 177.1875))


@pytest.mark.parametrize(
    "angle,name", [(0, "nasal"), (44.9, "nasal"), (45, "superior"), (134.9, "superior"), (135, "temporal"),
                   (225, "inferior"), (314.9, "inferior"), (315, "nasal"), (360, "nasal")]
)
def test_quadrant_boundaries(angle, name):
    assert quadrant(angle) == name


def test_all_pass_volume():
    rep = aggregate([_result(i) for i in range(128)])
    assert rep.total == 128 and rep.excluded == 0 and rep.missing == ()


def test_four_failing_scans_excluded():
    bad = {5, 40, 77, 120}
    rep = aggregate([_result(i, ok=i not in bad) for i in range(128)])
    assert rep.excluded == 4 and rep.passing == 124
    assert rep.to_dict()["excluded_indices"] == sorted(bad)


def test_empty_input():
    rep = aggregate([])
    assert rep.total == 0 and rep.excluded == 0
    assert all(v is None for q in rep.quadrant_means.values() for v in q.values())
    assert len(_parse(goniogram_csv(rep, "AOD500"))) == 0


def test_duplicate_index():
    with pytest.raises(DuplicateScanIndex):
        aggregate([_result(3), _result(3)])


def test_too_many_scans():
    with pytest.raises(ValueError):
        aggregate([_result(i) for i in range(129)])


def test_missing_indices_recorded():
    rep = aggregate([_result(i) for i in (0, 1, 4)])
    assert rep.missing == (2, 3)


def test_single_scan_two_rows():
    rows = _parse(goniogram_csv(aggregate([_result(7)]), "AOD750"))
    assert len(rows) == 2
    assert rows[0]["value_left"] == "8.0" and rows[0]["value_right"] == ""
    assert rows[1]["value_right"] == "8.0" and rows[1]["value_left"] == ""


def test_all_fail_still_emits_values():
    rows = _parse(goniogram_csv(aggregate([_result(i, ok=False) for i in range(4)]), "TISA500"))
    assert all(r["pass"] == "false" for r in rows)
    assert all(r["value_left"] or r["value_right"] for r in rows)


def test_unknown_parameter():
    with pytest.raises(ValueError):
        goniogram_rows(aggregate([_result(0)]), "acd")


def test_quadrant_means_brute_force():
    rng = np.random.default_rng(3)
    results = [_result(i, ok=bool(rng.random() > 0.2), aod=float(rng.normal(300, 50))) for i in range(128)]
    rep = aggregate(results)
    for q in QUADRANTS:
        vals = []
        for r in results:
            if not r.qc.overall_pass:
                continue
            la, ra = side_angles(r.scan_index)
            vals += [r.params.left.aod500] if quadrant(la) == q else []
            vals += [r.params.right.aod500] if quadrant(ra) == q else []
        assert rep.quadrant_means[q]["aod500"] == sum(vals) / len(vals)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 127), unique=True, max_size=40), st.randoms(use_true_random=False))
def test_row_count_and_permutation_invariance(indices, rnd):
    results = [_result(i, ok=i % 3 != 0) for i in indices]
    shuffled = list(results)
    rnd.shuffle(shuffled)
    a, b = aggregate(results), aggregate(shuffled)
    assert a == b
    for p in GONIO_PARAMS:
        assert len(goniogram_rows(a, p)) == 2 * len(indices)
        assert goniogram_csv(a, p) == goniogram_csv(b, p)
    assert confidence_polar_csv(a) == confidence_polar_csv(b)


def test_confidence_rows():
    rep = aggregate([_result(i) for i in range(8)])
    assert all(r[2] for r in confidence_rows(rep))
    rep = aggregate([_result(i, conf=(0.5, 1.0) if i == 3 else (1.0, 1.0)) for i in range(8)])
    rows = _parse(confidence_polar_csv(rep))
    fails = [r for r in rows if r["pass"] == "false"]
    assert len(fails) == 1 and float(fails[0]["angle_deg"]) == pytest.approx(side_angles(3)[0])
    assert fails[0]["conf"] == "0.5000"
    assert confidence_polar_csv(rep).startswith("# ssl_conf_threshold=0.8\n")


def test_goniogram_minimum_at_narrow_quadrant():
    """Ground truth of the sinusoidal sweep: the narrow angle was built in at 270°."""
    results = []
    for i, spec in angle_sweep():
        t = ground_truth(spec)
        results.append(ScanResult(i, t.params, _qc(), t.spurs))
    rep = aggregate(results)
    rows = goniogram_rows(rep, "AOD500")
    vals = [(vl if vl is not None else vr, a) for a, vl, vr, _ in rows]
    assert min(vals)[1] == pytest.approx(270.0)
    means = {q: rep.quadrant_means[q]["aod500"] for q in QUADRANTS}
    assert min(means, key=means.get) == "inferior"
