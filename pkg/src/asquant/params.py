"""The eight anterior-segment parameters from a tissue mask and two spurs.

Polylines come out of the mask in pixel units; every measurement converts
them to µm first, so anisotropic pixels are handled by the geometry rather
than by per-formula scale factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contours import (
    Polyline,
    extract_interface,
    keep_largest,
    normal_at,
    point_at_arclength,
    polygon_area,
    ray_hit,
    tangent_at,
)
from .core import (
    BACKGROUND,
    CHAMBER,
    CORNEO_SCLERA,
    IRIS,
    LabelMask,
    Palette,
    ParamSet,
    ScanMeta,
    SideParams,
    SpurPair,
)
from .errors import (
    AsquantError,
    DegenerateIris,
    DegeneratePolygon,
    EmptyInterface,
    NoIntersection,
    NoLensSurface,
    SpurOffTissue,
)

SIDE_NAMES = {"L": "left", "R": "right"}
APEX_WINDOW = 7
LENS_FACING = 0.5  # min. cosine between a lens vertex's edge step and the posterior axis


@dataclass(frozen=True)
class QuantifyConfig:
    aod_offsets: tuple = (500.0, 750.0)
    it_offset: float = 750.0
    it_mode: str = "euclidean"  # or "relative": midpoint of the anterior iris
    normal_window_px: float = 80.0
    smooth_taps: int = 9
    spur_tolerance_px: float = 20.0
    lens_margin_px: float = 3.0
    apex_gap_px: float = 5.0
    end_fit_px: float = 10.0

    def __post_init__(self):
        if self.it_mode not in ("euclidean", "relative"):
            raise ValueError(f"unknown it_mode {self.it_mode!r}")
        if len(self.aod_offsets) != 2 or min(self.aod_offsets) <= 0:
            raise ValueError("aod_offsets must be two positive distances (the 500 and 750 columns)")


@dataclass
class SceneInterfaces:
    """Interface polylines in pixel units.

    Iris polylines run from the periphery (spur side) toward the pupil; the
    lens polyline runs left to right.
    """

    mask: LabelMask
    posterior_cornea: Polyline
    anterior_iris: dict = field(default_factory=dict)
    posterior_iris: dict = field(default_factory=dict)
    anterior_lens: Polyline | None = None
    pupil_edges: tuple | None = None

    def um(self, line: Polyline, meta: ScanMeta) -> Polyline:
        return line.scaled(meta.scale_x, meta.scale_y)

    def iris(self, which: str, side: str) -> Polyline:
        d = self.anterior_iris if which == "anterior" else self.posterior_iris
        if side not in d:
            raise EmptyInterface(f"{which}_iris_{SIDE_NAMES[side]}")
        return d[side]


def _clean(mask: LabelMask) -> np.ndarray:
    """Keep the main shell, the chamber and two iris leaves; drop debris."""
    out = np.zeros(mask.shape, dtype=np.uint8)
    out[keep_largest(mask, CORNEO_SCLERA, 1)] = CORNEO_SCLERA
    out[keep_largest(mask, CHAMBER, 1)] = CHAMBER
    out[keep_largest(mask, IRIS, 2)] = IRIS
    return out


def _check_spurs(mask: LabelMask, spurs: SpurPair, tol_px: float) -> None:
    shell = mask.data == CORNEO_SCLERA
    if not shell.any():
        raise EmptyInterface("posterior_cornea")
    r = int(np.ceil(tol_px))
    for side in ("L", "R"):
        x, y = spurs.side(side)
        xi, yi = int(round(x)), int(round(y))
        if not (0 <= xi < mask.width and 0 <= yi < mask.height):
            raise SpurOffTissue(SIDE_NAMES[side])
        ys, xs = np.nonzero(shell[max(yi - r, 0) : yi + r + 1, max(xi - r, 0) : xi + r + 1])
        d2 = (xs + max(xi - r, 0) - xi) ** 2 + (ys + max(yi - r, 0) - yi) ** 2
        if len(d2) == 0 or d2.min() > tol_px**2:
            raise SpurOffTissue(SIDE_NAMES[side])


def _orient(line: Polyline, anchor) -> Polyline:
    """Reverse ``line`` if its end is closer to ``anchor`` than its start."""
    a = np.asarray(anchor, dtype=float)
    if np.hypot(*(line.points[-1] - a)) < np.hypot(*(line.points[0] - a)):
        return Polyline(line.points[::-1], None if line.pixels is None else line.pixels[::-1])
    return line


def _per_side(runs: list[Polyline], spurs: SpurPair) -> dict:
    """The longest run on each side of the spur midpoint."""
    mid_x = (spurs.left.x + spurs.right.x) / 2
    out = {}
    for run in runs:  # longest first
        side = "L" if run.points[:, 0].mean() < mid_x else "R"
        if side not in out:
            out[side] = _orient(run, spurs.side(side))
    return out


def _longest_true_run(flags: np.ndarray) -> np.ndarray:
    out = np.zeros_like(flags)
    best, start = (0, 0), None
    for i, f in enumerate(np.append(flags, False)):
        if f and start is None:
            start = i
        elif not f and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    out[best[0] : best[1]] = True
    return out


def build_interfaces(mask: LabelMask, spurs: SpurPair, cfg: QuantifyConfig = QuantifyConfig()) -> SceneInterfaces:
    if mask.palette is not Palette.TISSUE:
        raise ValueError("build_interfaces needs a tissue-palette mask")
    _check_spurs(mask, spurs, cfg.spur_tolerance_px)
    clean = LabelMask(_clean(mask))
    taps = cfg.smooth_taps
    try:
        wall = extract_interface(clean, CORNEO_SCLERA, (CHAMBER, IRIS))[0]
    except EmptyInterface:
        raise EmptyInterface("posterior_cornea") from None
    if not (clean.data == CHAMBER).any():
        raise EmptyInterface("posterior_cornea")
    ifc = SceneInterfaces(clean, wall.smoothed(taps))

    def runs(a, b):
        try:
            return extract_interface(clean, a, b)
        except EmptyInterface:
            return []

    ifc.anterior_iris = {s: p.smoothed(taps) for s, p in _per_side(runs(IRIS, CHAMBER), spurs).items()}
    ifc.posterior_iris = {s: p.smoothed(taps) for s, p in _per_side(runs(IRIS, BACKGROUND), spurs).items()}

    lens_runs = runs(CHAMBER, BACKGROUND)
    if lens_runs:
        iris = clean.data == IRIS
        mid_x = (spurs.left.x + spurs.right.x) / 2
        cols = np.nonzero(iris.any(axis=0))[0]
        left_cols, right_cols = cols[cols < mid_x], cols[cols >= mid_x]
        lo = left_cols.max() if len(left_cols) else -np.inf
        hi = right_cols.min() if len(right_cols) else np.inf
        ifc.pupil_edges = (float(lo), float(hi))
        run = lens_runs[0]
        pts = run.points
        keep = (pts[:, 0] > lo + cfg.lens_margin_px) & (pts[:, 0] < hi - cfg.lens_margin_px)
        # the lens faces posteriorly; the chamber walls below the pupil edges do not
        _, axis = spur_axis(spurs)
        keep &= 2.0 * (pts - run.pixels) @ -axis >= LENS_FACING
        keep = _longest_true_run(keep)
        if keep.sum() >= 2:
            lens = Polyline(pts[keep])
            if lens.points[0, 0] > lens.points[-1, 0]:
                lens = Polyline(lens.points[::-1])
            ifc.anterior_lens = lens.smoothed(taps)
    return ifc


# ---------------------------------------------------------------- globals


def acw(spurs: SpurPair, meta: ScanMeta) -> float:
    d = (np.asarray(spurs.right) - np.asarray(spurs.left)) * meta.scale
    return float(np.hypot(*d))


def spur_axis(spurs: SpurPair, meta: ScanMeta | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint and unit normal of the spur line, pointing anteriorly (−y).

    With ``meta`` both are in µm, otherwise in pixels.
    """
    sc = np.ones(2) if meta is None else meta.scale
    l, r = np.asarray(spurs.left) * sc, np.asarray(spurs.right) * sc
    d = r - l
    n = np.array([d[1], -d[0]]) / np.hypot(*d)
    return (l + r) / 2, n


def lens_vault(ifc: SceneInterfaces, spurs: SpurPair, meta: ScanMeta) -> float:
    if ifc.anterior_lens is None:
        raise NoLensSurface("no anterior lens surface between the pupil edges")
    mid, axis = spur_axis(spurs, meta)
    pts = ifc.um(ifc.anterior_lens, meta).points
    return float(np.max((pts - mid) @ axis))


def _line_hit(line: Polyline, origin, direction, surface: str) -> np.ndarray:
    """Nearest crossing of the full line origin ± t·direction."""
    best = None
    for sign in (1.0, -1.0):
        try:
            p, t = ray_hit(line, origin, sign * np.asarray(direction), min_t=0.0)
        except NoIntersection:
            continue
        if best is None or t < best[1]:
            best = (p, t)
    if best is None:
        raise NoIntersection(surface)
    return best[0]


def acd(ifc: SceneInterfaces, spurs: SpurPair, meta: ScanMeta) -> float:
    if ifc.anterior_lens is None:
        raise NoIntersection("anterior_lens")
    mid, axis = spur_axis(spurs, meta)
    try:
        top, _ = ray_hit(ifc.um(ifc.posterior_cornea, meta), mid, axis, min_t=0.0)
    except NoIntersection:
        raise NoIntersection("posterior_cornea") from None
    bottom = _line_hit(ifc.um(ifc.anterior_lens, meta), mid, axis, "anterior_lens")
    return float(np.hypot(*(top - bottom)))


def ac_area(mask: LabelMask, meta: ScanMeta) -> float:
    if mask.palette is not Palette.TISSUE:
        raise ValueError("ac_area needs a tissue-palette mask")
    return float(np.count_nonzero(mask.data == CHAMBER)) * meta.scale_x * meta.scale_y


# ------------------------------------------------------------ angle params


@dataclass(frozen=True)
class AngleResult:
    value: float
    closed: bool = False
    wall_point: np.ndarray | None = None
    iris_point: np.ndarray | None = None


def _window(line: Polyline, length_px: float) -> int:
    """Odd vertex count spanning ``length_px`` of a pixel-unit polyline.

    Counted in pixels, not µm, so that rescaling a mask rescales every
    result exactly.
    """
    step = line.length() / max(len(line) - 1, 1)
    w = int(round(length_px / step)) if step > 0 else 7
    return max(7, w | 1)


def _walk_dir(wall: Polyline, spurs: SpurPair, side: str, meta: ScanMeta) -> int:
    s_this = wall.project(np.asarray(spurs.side(side)) * meta.scale)[0]
    other = "R" if side == "L" else "L"
    s_other = wall.project(np.asarray(spurs.side(other)) * meta.scale)[0]
    return 1 if s_other >= s_this else -1


def _inward_normal(ifc, wall, at, meta, cfg):
    return normal_at(
        wall, at, _window(ifc.posterior_cornea, cfg.normal_window_px), ifc.mask, (CHAMBER, IRIS), meta.scale, probe=0.75
    )


def _class_ahead(ifc: SceneInterfaces, at, n, meta: ScanMeta, steps: float = 1.0) -> int:
    q = (np.asarray(at) + steps * float(np.min(meta.scale)) * n) / meta.scale
    return ifc.mask.at(*q)


def aod_detail(ifc: SceneInterfaces, spurs: SpurPair, offset: float, side: str, meta: ScanMeta,
               cfg: QuantifyConfig = QuantifyConfig()) -> AngleResult:
    wall = ifc.um(ifc.posterior_cornea, meta)
    iris = ifc.um(ifc.iris("anterior", side), meta)
    spur = np.asarray(spurs.side(side)) * meta.scale
    direction = _walk_dir(wall, spurs, side, meta)
    tol = cfg.spur_tolerance_px * float(np.max(meta.scale))
    a = np.asarray(point_at_arclength(wall, spur, offset, direction, None, tol))
    n = _inward_normal(ifc, wall, a, meta, cfg)
    if _class_ahead(ifc, a, n, meta) == IRIS:
        return AngleResult(0.0, True, a, a)
    hit, t = ray_hit(iris, a, n)
    return AngleResult(t, False, a, hit)


def aod(ifc, spurs, offset, side, meta, cfg: QuantifyConfig = QuantifyConfig()) -> float:
    return aod_detail(ifc, spurs, offset, side, meta, cfg).value


def _wedge_apex(wall: Polyline, iris: Polyline, max_gap: float) -> np.ndarray | None:
    """Where the iris start, extended backwards along its tangent, meets the
    wall; None when that is farther than ``max_gap``."""
    start = iris.points[0]
    try:
        t = tangent_at(iris, start, APEX_WINDOW)
        # the wall run may stop just short of the apex; extrapolate its ends
        t0 = tangent_at(wall, wall.points[0], APEX_WINDOW)
        t1 = tangent_at(wall, wall.points[-1], APEX_WINDOW)
        ext = Polyline(np.vstack([wall.points[0] - 2 * max_gap * t0, wall.points, wall.points[-1] + 2 * max_gap * t1]))
        hit, d = ray_hit(ext, start, -t, min_t=0.0)
    except AsquantError:
        return None
    return hit if d <= max_gap else None


def _iris_foot(ifc, wall, iris, spur, meta, cfg) -> tuple[np.ndarray, np.ndarray]:
    """Wall and iris ends of the TISA base.

    The base is the spur perpendicular when it crosses open chamber to the
    iris. Otherwise the iris inserts at or anterior to the spur and the base
    collapses to the wedge apex (or, failing that, to the iris point nearest
    the spur and its foot on the wall).
    """
    s_foot = wall.project(spur)[2]
    n = _inward_normal(ifc, wall, s_foot, meta, cfg)
    if _class_ahead(ifc, s_foot, n, meta) == CHAMBER:
        try:
            return s_foot, ray_hit(iris, s_foot, n)[0]
        except NoIntersection:
            pass
    apex = _wedge_apex(wall, iris, cfg.apex_gap_px * float(np.max(meta.scale)))
    if apex is not None:
        return apex, apex
    i_foot = iris.project(spur)[2]
    return wall.project(i_foot)[2], i_foot


def tisa_detail(ifc: SceneInterfaces, spurs: SpurPair, offset: float, side: str, meta: ScanMeta,
                cfg: QuantifyConfig = QuantifyConfig()) -> AngleResult:
    res = aod_detail(ifc, spurs, offset, side, meta, cfg)
    if res.closed:
        return AngleResult(0.0, True, res.wall_point, res.iris_point)
    wall = ifc.um(ifc.posterior_cornea, meta)
    iris = ifc.um(ifc.iris("anterior", side), meta)
    spur = np.asarray(spurs.side(side)) * meta.scale
    w_foot, i_foot = _iris_foot(ifc, wall, iris, spur, meta, cfg)
    poly = np.vstack([
        wall.between(wall.project(w_foot)[0], wall.project(res.wall_point)[0]),
        res.iris_point[None, :],
        iris.between(iris.project(res.iris_point)[0], iris.project(i_foot)[0]),
    ])
    keep = np.ones(len(poly), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(poly, axis=0)) > 1e-9, axis=1)
    poly = poly[keep]
    if len(np.unique(np.round(poly, 9), axis=0)) < 3:
        raise DegeneratePolygon("TISA boundary has fewer than 3 distinct vertices")
    return AngleResult(polygon_area(poly), False, res.wall_point, res.iris_point)


def tisa(ifc, spurs, offset, side, meta, cfg: QuantifyConfig = QuantifyConfig()) -> float:
    return tisa_detail(ifc, spurs, offset, side, meta, cfg).value


# ------------------------------------------------------------------- iris


def _point_at_distance(line: Polyline, centre: np.ndarray, dist: float) -> np.ndarray:
    """Point on ``line`` whose distance from ``centre`` is nearest ``dist``."""
    d = np.hypot(*(line.points - centre).T)
    cross = np.flatnonzero((d[:-1] - dist) * (d[1:] - dist) <= 0)
    if len(cross):
        i = int(cross[0])
        span = d[i + 1] - d[i]
        f = 0.0 if span == 0 else (dist - d[i]) / span
        return line.points[i] + f * (line.points[i + 1] - line.points[i])
    return line.points[int(np.argmin(np.abs(d - dist)))]


def iris_thickness(ifc: SceneInterfaces, spurs: SpurPair, side: str, meta: ScanMeta,
                   cfg: QuantifyConfig = QuantifyConfig(), offset: float | None = None) -> float:
    ant = ifc.um(ifc.iris("anterior", side), meta)
    post = ifc.um(ifc.iris("posterior", side), meta)
    spur = np.asarray(spurs.side(side)) * meta.scale
    if cfg.it_mode == "relative":
        p = ant.point_at(ant.length() / 2)
    else:
        p = _point_at_distance(ant, spur, cfg.it_offset if offset is None else offset)
    n = normal_at(ant, p, _window(ifc.iris("anterior", side), cfg.normal_window_px), ifc.mask, (IRIS,), meta.scale, probe=0.75)
    try:
        _, t = ray_hit(post, p, n)
    except NoIntersection:
        raise NoIntersection("posterior_iris") from None
    return t


def iris_curvature(ifc: SceneInterfaces, side: str, meta: ScanMeta,
                   cfg: QuantifyConfig = QuantifyConfig()) -> float:
    post = ifc.um(ifc.iris("posterior", side), meta)
    return polyline_sagitta(post, _vertices_in(ifc.iris("posterior", side), cfg.end_fit_px))


def _vertices_in(line: Polyline, length_px: float) -> int:
    step = line.length() / max(len(line) - 1, 1)
    return max(3, int(round(length_px / step))) if step > 0 else 3


def _settled_end(pts: np.ndarray, k: int) -> np.ndarray:
    """``pts[0]`` projected onto the least-squares line through ``pts[:k]``."""
    win = pts[:k]
    m = win.mean(axis=0)
    _, _, vt = np.linalg.svd(win - m, full_matrices=False)
    return m + np.dot(pts[0] - m, vt[0]) * vt[0]


def polyline_sagitta(line: Polyline, end_window: int = 0) -> float:
    """Largest perpendicular distance from the chain to its end-to-end chord.

    End vertices carry up to half a pixel of raster quantisation that
    smoothing cannot remove; with ``end_window`` >= 3 each chord end is
    first settled onto a line through that many end vertices.
    """
    pts = line.points
    if len(pts) < 3:
        raise DegenerateIris("posterior iris has fewer than 3 points")
    a, b = pts[0], pts[-1]
    if end_window >= 3 and len(pts) >= 2 * end_window:
        a, b = _settled_end(pts, end_window), _settled_end(pts[::-1], end_window)
    c = b - a
    L = math.hypot(*c)
    if L == 0:
        raise DegenerateIris("posterior iris endpoints coincide")
    cross = np.abs(c[0] * (pts[:, 1] - a[1]) - c[1] * (pts[:, 0] - a[0])) / L
    return float(cross.max())


# ------------------------------------------------------------------ driver


def _reason(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def quantify_scan(mask: LabelMask, spurs: SpurPair, meta: ScanMeta, cfg: QuantifyConfig = QuantifyConfig()) -> ParamSet:
    """All parameters of one scan; a failing parameter is left undefined with
    a reason and never aborts the others."""
    if mask.palette is not Palette.TISSUE:
        raise ValueError("quantify_scan needs a tissue-palette mask")
    reasons: dict[str, str] = {}
    values: dict[str, float | None] = {"acw": acw(spurs, meta), "ac_area": ac_area(mask, meta)}
    sided = {s: {} for s in ("L", "R")}
    closed = {s: set() for s in ("L", "R")}
    # configured offsets fill the nominal 500/750 columns in order
    slots = tuple(zip(cfg.aod_offsets, ("500", "750")))
    names = [f"{k}{n}" for k in ("aod", "tisa") for _, n in slots] + ["it750", "icurve"]
    try:
        ifc = build_interfaces(mask, spurs, cfg)
    except AsquantError as exc:
        for k in ("acd", "lv"):
            values[k], reasons[k] = None, _reason(exc)
        for s in sided:
            for k in names:
                sided[s][k] = None
                reasons[f"{k}_{s}"] = _reason(exc)
        ifc = None

    def attempt(key, fn):
        try:
            return float(fn())
        except AsquantError as exc:
            reasons[key] = _reason(exc)
            return None

    if ifc is not None:
        values["acd"] = attempt("acd", lambda: acd(ifc, spurs, meta))
        values["lv"] = attempt("lv", lambda: lens_vault(ifc, spurs, meta))
        for s in ("L", "R"):
            for off, slot in slots:
                for kind, fn in (("aod", aod_detail), ("tisa", tisa_detail)):
                    key = f"{kind}{slot}"
                    res = None
                    try:
                        res = fn(ifc, spurs, off, s, meta, cfg)
                    except AsquantError as exc:
                        reasons[f"{key}_{s}"] = _reason(exc)
                    sided[s][key] = None if res is None else float(res.value)
                    if res is not None and res.closed:
                        closed[s].add(key)
            sided[s]["it750"] = attempt(f"it750_{s}", lambda: iris_thickness(ifc, spurs, s, meta, cfg))
            sided[s]["icurve"] = attempt(f"icurve_{s}", lambda: iris_curvature(ifc, s, meta, cfg))

    def side_params(s):
        known = {k: v for k, v in sided[s].items() if k in SideParams.__dataclass_fields__}
        return SideParams(**known, closed=frozenset(closed[s]))

    return ParamSet(
        acw=values["acw"], acd=values.get("acd"), lv=values.get("lv"), ac_area=values["ac_area"],
        left=side_params("L"), right=side_params("R"), reasons=reasons,
    )
