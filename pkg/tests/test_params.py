import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asquant.contours import Polyline
from asquant.core import CHAMBER, CORNEO_SCLERA, IRIS, LabelMask, Point, ScanMeta, SpurPair
from asquant.errors import EmptyInterface, NoIntersection, NoLensSurface, SpurOffTissue
from asquant.params import (
    QuantifyConfig,
    SceneInterfaces,
    ac_area,
    acd,
    acw,
    aod,
    aod_detail,
    build_interfaces,
    iris_curvature,
    iris_thickness,
    lens_vault,
    polyline_sagitta,
    quantify_scan,
    spur_axis,
    tisa,
    tisa_detail,
)
from asquant.phantom import IrisLeaf, PhantomSpec, generate

from conftest import plate_scene

AREAS = ("ac_area", "tisa500", "tisa750")


def _is_area(col):
    return col in AREAS or col.rsplit("_", 1)[0] in AREAS


# ------------------------------------------------------------ plate scene


def test_plate_aod_is_gap(plate, meta10):
    mask, spurs = plate
    ifc = build_interfaces(mask, spurs)
    for side in "LR":
        assert aod(ifc, spurs, 500, side, meta10) == pytest.approx(400.0, abs=1e-6)
        assert aod(ifc, spurs, 750, side, meta10) == pytest.approx(400.0, abs=1e-6)


def test_plate_tisa_is_rectangle(plate, meta10):
    mask, spurs = plate
    ifc = build_interfaces(mask, spurs)
    assert tisa(ifc, spurs, 500, "L", meta10) == pytest.approx(200_000.0, rel=1e-9)
    assert tisa(ifc, spurs, 750, "R", meta10) == pytest.approx(300_000.0, rel=1e-9)


@pytest.mark.parametrize("gap", [20, 33, 40, 57])
@pytest.mark.parametrize("offset", [500.0, 750.0, 620.0])
def test_plate_tisa_equals_offset_times_aod(gap, offset, meta10):
    mask, spurs = plate_scene(gap_px=gap)
    ifc = build_interfaces(mask, spurs)
    for side in "LR":
        a = aod(ifc, spurs, offset, side, meta10)
        assert tisa(ifc, spurs, offset, side, meta10) == pytest.approx(offset * a, rel=0.005)


def test_plate_iris_thickness_and_flat_curvature(plate, meta10):
    mask, spurs = plate
    ifc = build_interfaces(mask, spurs)
    assert iris_thickness(ifc, spurs, "L", meta10) == pytest.approx(500.0, abs=1e-6)
    assert iris_curvature(ifc, "R", meta10) == pytest.approx(0.0, abs=1e-9)


def test_plate_global_params(plate, meta10):
    mask, spurs = plate
    p = quantify_scan(mask, spurs, meta10)
    assert p.acw == pytest.approx(2990.0)
    assert p.acd == pytest.approx(1310.0)
    assert p.lv == pytest.approx(-1310.0)
    assert p.reasons == {}


def test_iris_thickness_offset_beyond_pupil(plate, meta10):
    mask, spurs = plate
    ifc = build_interfaces(mask, spurs)
    cfg = QuantifyConfig(it_offset=5000.0)
    with pytest.raises(NoIntersection):
        iris_thickness(ifc, spurs, "L", meta10, cfg)


def test_relative_iris_thickness_mode(plate, meta10):
    mask, spurs = plate
    ifc = build_interfaces(mask, spurs)
    cfg = QuantifyConfig(it_mode="relative")
    assert iris_thickness(ifc, spurs, "L", meta10, cfg) == pytest.approx(500.0, abs=1e-6)


def test_contact_reports_closed_zero(meta10):
    mask, spurs = plate_scene(contact=True)
    p = quantify_scan(mask, spurs, meta10)
    for side in (p.left, p.right):
        assert side.aod500 == side.aod750 == side.tisa500 == side.tisa750 == 0.0
        assert side.closed == {"aod500", "aod750", "tisa500", "tisa750"}
    assert p.acw is not None and p.lv is not None


def test_missing_lens_gap_keeps_angle_params(meta10):
    mask, spurs = plate_scene(lens_gap=False)
    p = quantify_scan(mask, spurs, meta10)
    assert p.acd is None and p.lv is None
    assert "acd" in p.reasons and "lv" in p.reasons
    assert p.left.aod500 == pytest.approx(400.0)


# ------------------------------------------------------ interface errors


def test_mask_without_chamber(plate):
    mask, spurs = plate
    d = mask.data.copy()
    d[d == CHAMBER] = 0
    with pytest.raises(EmptyInterface) as ei:
        build_interfaces(LabelMask(d), spurs)
    assert ei.value.name == "posterior_cornea"


def test_spur_in_background(plate):
    mask, _ = plate
    spurs = SpurPair(Point(50, 19.5 + 120), Point(349, 19.5))
    with pytest.raises(SpurOffTissue) as ei:
        build_interfaces(mask, spurs)
    assert ei.value.side == "left"


def test_quantify_never_aborts(plate, meta10):
    mask, spurs = plate
    d = mask.data.copy()
    d[d == CHAMBER] = 0
    p = quantify_scan(LabelMask(d), spurs, meta10)
    assert p.acw == pytest.approx(2990.0)
    assert p.ac_area == 0.0
    assert p.left.aod500 is None and "aod500_L" in p.reasons


def test_phantom_interfaces_assigned_per_side(default_phantom):
    ifc = build_interfaces(default_phantom.tissue, default_phantom.spurs)
    mid = (default_phantom.spurs.left.x + default_phantom.spurs.right.x) / 2
    for which in (ifc.anterior_iris, ifc.posterior_iris):
        assert which["L"].points[:, 0].max() < mid < which["R"].points[:, 0].min()
    lo, hi = ifc.pupil_edges
    assert lo < ifc.anterior_lens.points[:, 0].min() and ifc.anterior_lens.points[:, 0].max() < hi


# ------------------------------------------------------ global params


def test_acw_arithmetic():
    assert acw(SpurPair(Point(0, 0), Point(100, 0)), ScanMeta(10, 10)) == 1000.0
    assert acw(SpurPair(Point(0, 0), Point(30, 40)), ScanMeta(10, 20)) == pytest.approx(math.hypot(300, 800))


def test_spur_axis_horizontal_and_tilted():
    mid, axis = spur_axis(SpurPair(Point(0, 5), Point(10, 5)))
    assert mid == pytest.approx((5, 5)) and axis == pytest.approx((0, -1))
    a = math.radians(10)
    _, axis = spur_axis(SpurPair(Point(0, 0), Point(math.cos(a), math.sin(a))))
    assert axis == pytest.approx((math.sin(a), -math.cos(a)))


def _flat_scene(lens_y, wall_y=20.0):
    mask = LabelMask(np.zeros((4, 4)))
    wall = Polyline([[-50, wall_y], [250, wall_y]])
    lens = Polyline([[60, lens_y], [140, lens_y]])
    return SceneInterfaces(mask, wall, anterior_lens=lens)


def test_lens_vault_flat_lens_below_spurs():
    spurs = SpurPair(Point(0, 20), Point(200, 20))
    assert lens_vault(_flat_scene(50.0), spurs, ScanMeta(10, 10)) == pytest.approx(-300.0)
    assert lens_vault(_flat_scene(20.0), spurs, ScanMeta(10, 10)) == pytest.approx(0.0)


def test_lens_vault_without_lens():
    ifc = _flat_scene(50.0)
    ifc.anterior_lens = None
    with pytest.raises(NoLensSurface):
        lens_vault(ifc, SpurPair(Point(0, 20), Point(200, 20)), ScanMeta(10, 10))
    with pytest.raises(NoIntersection):
        acd(ifc, SpurPair(Point(0, 20), Point(200, 20)), ScanMeta(10, 10))


def test_acd_concentric_flat_surfaces():
    spurs = SpurPair(Point(0, 300), Point(200, 300))
    ifc = _flat_scene(300.0, wall_y=20.0)
    assert acd(ifc, spurs, ScanMeta(10, 10)) == pytest.approx(2800.0)


def test_ac_area_block():
    d = np.zeros((20, 20), dtype=np.uint8)
    d[5:15, 5:15] = CHAMBER
    assert ac_area(LabelMask(d), ScanMeta(10, 10)) == 10_000.0
    assert ac_area(LabelMask(np.zeros((5, 5))), ScanMeta(10, 10)) == 0.0


# ------------------------------------------------------------- sagitta


def test_straight_iris_has_zero_sagitta():
    line = Polyline(np.column_stack([np.arange(50.0), 0.3 * np.arange(50.0)]))
    assert polyline_sagitta(line) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("r,c", [(5000.0, 3000.0), (2500.0, 2000.0), (12000.0, 3500.0)])
def test_circular_arc_sagitta_formula(r, c):
    half = math.asin(c / 2 / r)
    phi = np.linspace(-half, half, 4001)
    line = Polyline(np.column_stack([r * np.sin(phi), -r * np.cos(phi)]))
    want = r - math.sqrt(r * r - (c / 2) ** 2)
    assert polyline_sagitta(line) == pytest.approx(want, rel=1e-6)
    assert polyline_sagitta(line, end_window=20) == pytest.approx(want, rel=1e-3)


# --------------------------------------------------------------- phantom


def _check_against_truth(ph, cfg=QuantifyConfig()):
    got = quantify_scan(ph.tissue, ph.spurs, ph.spec.meta, cfg)
    want = ph.truth.params
    scale = max(ph.spec.scale_x, ph.spec.scale_y)
    for col, w in want.as_row(None).items():
        g = got.value(col)
        assert g is not None, (col, got.reasons)
        base = col.rsplit("_", 1)[0]
        tol = 0.03 * abs(w) if base in AREAS + ("icurve",) else max(2 * scale, 0.01 * abs(w))
        assert abs(g - w) <= tol, (col, g, w)
    return got


def test_default_phantom_matches_truth(default_phantom):
    _check_against_truth(default_phantom)


def test_closed_angle_phantom():
    leaf = IrisLeaf(angle_deg=35, bow_um=150, contact_um=600)
    ph = generate(replace(PhantomSpec(), iris_left=leaf, iris_right=leaf))
    got = quantify_scan(ph.tissue, ph.spurs, ph.spec.meta)
    assert got.left.aod500 == 0.0 and "aod500" in got.left.closed
    assert got.left.tisa500 == 0.0
    assert got.left.aod750 > 0 and got.left.it750 is not None and got.acd is not None


def test_phantom_tisa_detail_is_open_wedge(default_phantom):
    ifc = build_interfaces(default_phantom.tissue, default_phantom.spurs)
    res = tisa_detail(ifc, default_phantom.spurs, 500, "L", default_phantom.spec.meta)
    assert not res.closed and res.value > 0
    assert aod_detail(ifc, default_phantom.spurs, 500, "L", default_phantom.spec.meta).value > 0


@settings(max_examples=12, deadline=None)
@given(st.floats(0.25, 4.0), st.sampled_from([(10.0, 10.0), (8.0, 12.0)]))
def test_scale_equivariance(s, base_scale):
    """Rescaling pixels (and the µm offsets with them) rescales every result."""
    ph = _phantom_scene()
    mask, spurs = ph
    cfg = QuantifyConfig()
    scaled_cfg = replace(cfg, aod_offsets=tuple(o * s for o in cfg.aod_offsets), it_offset=cfg.it_offset * s)
    a = quantify_scan(mask, spurs, ScanMeta(*base_scale), cfg)
    b = quantify_scan(mask, spurs, ScanMeta(base_scale[0] * s, base_scale[1] * s), scaled_cfg)
    assert set(a.reasons) == set(b.reasons)
    for col in a.columns():
        va, vb = a.value(col), b.value(col)
        if va is None:
            assert vb is None
            continue
        factor = s * s if _is_area(col) else s
        assert vb == pytest.approx(va * factor, rel=1e-9, abs=1e-9)  # float round-off only


def test_scale_equivariance_power_of_two_is_bit_exact():
    mask, spurs = _phantom_scene()
    a = quantify_scan(mask, spurs, ScanMeta(10, 10))
    cfg = replace(QuantifyConfig(), aod_offsets=(1000.0, 1500.0), it_offset=1500.0)
    b = quantify_scan(mask, spurs, ScanMeta(20, 20), cfg)
    for col in a.columns():
        factor = 4 if _is_area(col) else 2
        assert b.value(col) == a.value(col) * factor


_CACHE = {}


def _phantom_scene():
    if "ph" not in _CACHE:
        ph = generate(PhantomSpec())
        _CACHE["ph"] = (ph.tissue, ph.spurs)
    return _CACHE["ph"]


@pytest.mark.parametrize("deg", [5.0, -5.0])
def test_rotation_changes_parameters_below_one_percent(default_phantom, deg):
    base = quantify_scan(default_phantom.tissue, default_phantom.spurs, default_phantom.spec.meta)
    ph = generate(replace(PhantomSpec(), rotation_deg=deg))
    rot = quantify_scan(ph.tissue, ph.spurs, ph.spec.meta)
    for col in base.columns():
        a, b = base.value(col), rot.value(col)
        assert abs(b - a) < 0.01 * abs(a), (col, a, b)


@pytest.mark.parametrize("angle", [20.0, 35.0, 50.0])
def test_open_wedge_monotonicity(angle):
    leaf = IrisLeaf(angle_deg=angle, bow_um=100)
    ph = generate(replace(PhantomSpec(), iris_left=leaf, iris_right=leaf, lens_vault_um=-400))
    p = quantify_scan(ph.tissue, ph.spurs, ph.spec.meta)
    for side in (p.left, p.right):
        assert side.aod750 >= side.aod500 and side.tisa750 >= side.tisa500


@pytest.mark.parametrize("d", [100.0, 300.0])
def test_raising_lens_raises_lens_vault(default_phantom, d):
    base = quantify_scan(default_phantom.tissue, default_phantom.spurs, default_phantom.spec.meta).lv
    ph = generate(replace(PhantomSpec(), lens_vault_um=400 + d))
    lv = quantify_scan(ph.tissue, ph.spurs, ph.spec.meta).lv
    assert abs((lv - base) - d) <= 2 * ph.spec.scale_x


def test_quantify_config_validation():
    with pytest.raises(ValueError):
        QuantifyConfig(it_mode="middle")
