"""Raster geometry: components, boundary tracing, interface polylines, rays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .core import CHAMBER, LabelMask, Point, ScanMeta
from .errors import DegenerateTangent, EmptyInterface, NoIntersection, PastEnd

_STRUCT = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}

DEFAULT_TANGENT_WINDOW = 7
DEFAULT_SMOOTH_TAPS = 5


@dataclass(frozen=True, eq=False)
class Region:
    """A connected set of pixels; ``pixels`` holds (x, y) integer pairs."""

    pixels: np.ndarray

    @property
    def area(self) -> int:
        return len(self.pixels)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        x0, y0 = self.pixels.min(axis=0)
        x1, y1 = self.pixels.max(axis=0)
        return int(x0), int(y0), int(x1), int(y1)

    @property
    def centroid(self) -> Point:
        c = self.pixels.mean(axis=0)
        return Point(float(c[0]), float(c[1]))


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray
    area_px: int

    def shoelace_area(self) -> float:
        """Signed polygon area of the chain (negative = counter-clockwise on screen)."""
        x, y = self.points[:, 0].astype(float), self.points[:, 1].astype(float)
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


class Polyline:
    """Open chain of sub-pixel points.

    ``pixels`` keeps the raster pixels the vertices were derived from, when
    the polyline came out of :func:`extract_interface`.
    """

    def __init__(self, points, pixels=None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise EmptyInterface("polyline")
        self.points = pts
        self.pixels = None if pixels is None else np.asarray(pixels, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"Polyline({len(self)} vertices, {self.points[0]} -> {self.points[-1]})"

    @property
    def start(self) -> Point:
        return Point(*self.points[0])

    @property
    def end(self) -> Point:
        return Point(*self.points[-1])

    def deduplicated(self) -> "Polyline":
        keep = np.ones(len(self.points), dtype=bool)
        keep[1:] = np.any(np.diff(self.points, axis=0) != 0, axis=1)
        return Polyline(self.points[keep])

    def cumulative_arclen(self, meta: ScanMeta | None = None) -> np.ndarray:
        """Arc length at every vertex, in µm when ``meta`` is given."""
        d = np.diff(self.points, axis=0)
        if meta is not None:
            d = d * meta.scale
        return np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])

    def length(self, meta: ScanMeta | None = None) -> float:
        return float(self.cumulative_arclen(meta)[-1])

    def smoothed(self, taps: int = DEFAULT_SMOOTH_TAPS) -> "Polyline":
        """Centred moving average; the window shrinks symmetrically at the ends."""
        if taps <= 1 or len(self) < 3:
            return Polyline(self.points.copy())
        half = taps // 2
        n = len(self.points)
        csum = np.vstack([np.zeros((1, 2)), np.cumsum(self.points, axis=0)])
        idx = np.arange(n)
        h = np.minimum(np.minimum(idx, n - 1 - idx), half)
        out = (csum[idx + h + 1] - csum[idx - h]) / (2 * h + 1)[:, None]
        return Polyline(out, self.pixels)

    def scaled(self, sx: float, sy: float) -> "Polyline":
        return Polyline(self.points * np.array([sx, sy]), self.pixels)

    def project(self, point) -> tuple[float, int, np.ndarray, float]:
        """Closest point on the chain.

        Returns (arc position in chain units, segment index, foot, distance).
        """
        p = np.asarray(point, dtype=float)
        if len(self.points) == 1:
            foot = self.points[0]
            return 0.0, 0, foot.copy(), float(np.hypot(*(p - foot)))
        a = self.points[:-1]
        d = np.diff(self.points, axis=0)
        dd = np.einsum("ij,ij->i", d, d)
        t = np.where(dd > 0, np.einsum("ij,ij->i", p - a, d) / np.where(dd > 0, dd, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        feet = a + t[:, None] * d
        dist = np.hypot(*(feet - p).T)
        i = int(np.argmin(dist))
        cum = self.cumulative_arclen()
        s = cum[i] + t[i] * np.sqrt(dd[i])
        return float(s), i, feet[i], float(dist[i])

    def point_at(self, s: float, meta: ScanMeta | None = None) -> np.ndarray:
        cum = self.cumulative_arclen(meta)
        if s < -1e-9 or s > cum[-1] + 1e-9:
            raise PastEnd(f"arc position {s:.3f} outside [0, {cum[-1]:.3f}]")
        s = min(max(s, 0.0), cum[-1])
        x = np.interp(s, cum, self.points[:, 0])
        y = np.interp(s, cum, self.points[:, 1])
        return np.array([x, y])

    def between(self, s0: float, s1: float) -> np.ndarray:
        """Vertices strictly between arc positions s0 and s1 plus the two end
        points, in walking order from s0 to s1."""
        cum = self.cumulative_arclen()
        lo, hi = min(s0, s1), max(s0, s1)
        inner = self.points[(cum > lo) & (cum < hi)]
        if s0 > s1:
            inner = inner[::-1]
        return np.vstack([self.point_at(s0), inner, self.point_at(s1)])


# ------------------------------------------------------------ components


def connected_components(mask: LabelMask, code: int, connectivity: int = 8) -> list[Region]:
    """Maximal connected regions of one class, largest first."""
    if connectivity not in _STRUCT:
        raise ValueError("connectivity must be 4 or 8")
    if code not in mask.palette.codes:
        raise ValueError(f"class {code} is not in the {mask.palette.value} palette")
    return _components(mask.data == code, connectivity)


def _components(binary: np.ndarray, connectivity: int = 8) -> list[Region]:
    labels, n = ndimage.label(binary, structure=_STRUCT[connectivity])
    if n == 0:
        return []
    flat = labels.ravel()
    fg = np.flatnonzero(flat)
    order = fg[np.argsort(flat[fg], kind="stable")]
    counts = np.bincount(flat[fg], minlength=n + 1)
    bounds = np.cumsum(counts)
    regions = []
    width = binary.shape[1]
    for lab in range(1, n + 1):
        idx = order[bounds[lab - 1] : bounds[lab]]
        regions.append(Region(np.column_stack([idx % width, idx // width]).astype(np.int64)))
    # stable sort keeps raster order of first pixel among equal areas
    regions.sort(key=lambda r: -r.area)
    return regions


def keep_largest(mask: LabelMask, code: int, count: int = 1) -> np.ndarray:
    """Boolean raster of the ``count`` largest 8-connected regions of a class."""
    out = np.zeros(mask.shape, dtype=bool)
    for reg in connected_components(mask, code, 8)[:count]:
        out[reg.pixels[:, 1], reg.pixels[:, 0]] = True
    return out


# -------------------------------------------------------------- tracing

# clockwise on screen (y down), starting west
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def trace_boundary(region: Region) -> Contour:
    """Moore-neighbour trace of the outer boundary.

    The chain is returned counter-clockwise as seen on screen (y pointing
    down) and does not repeat its first pixel.
    """
    pix = region.pixels
    x0, y0, x1, y1 = region.bbox
    grid = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
    grid[pix[:, 1] - y0 + 1, pix[:, 0] - x0 + 1] = True
    rows, cols = np.nonzero(grid)
    start = (int(cols[0]), int(rows[0]))  # topmost, then leftmost
    chain = [start]
    cur, back = start, 0  # west of start is empty
    first_move = None
    while True:
        nxt = None
        for k in range(1, 9):
            d = (back + k) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if grid[cand[1], cand[0]]:
                nxt = cand
                # next search starts from the neighbour examined just before
                prev = (back + k - 1) % 8
                pb = (cur[0] + _MOORE[prev][0], cur[1] + _MOORE[prev][1])
                back = _MOORE.index((pb[0] - nxt[0], pb[1] - nxt[1]))
                break
        if nxt is None:
            break
        if first_move is None:
            first_move = nxt
        elif cur == start and nxt == first_move:
            break
        cur = nxt
        chain.append(cur)
    if len(chain) > 1 and chain[-1] == start:
        chain.pop()
    pts = np.array(chain, dtype=np.int64) + np.array([x0 - 1, y0 - 1])
    if len(pts) > 2:
        pts = np.vstack([pts[:1], pts[:0:-1]])
    return Contour(pts, region.area)


# ------------------------------------------------------------ interfaces


def _as_codes(b) -> tuple[int, ...]:
    if isinstance(b, (int, np.integer)):
        return (int(b),)
    return tuple(int(v) for v in b)


def interface_pixels(data: np.ndarray, class_a, class_b) -> tuple[np.ndarray, np.ndarray]:
    """Pixels of ``class_a`` 4-adjacent to ``class_b`` and their mean unit
    offset toward the ``class_b`` neighbours."""
    a = np.isin(data, _as_codes(class_a)) if not isinstance(class_a, np.ndarray) else class_a
    b = np.isin(data, _as_codes(class_b)) if not isinstance(class_b, np.ndarray) else class_b
    pb = np.pad(b, 1)
    h, w = data.shape
    steps = ((1, 0), (-1, 0), (0, 1), (0, -1))
    touch = np.zeros(data.shape, dtype=bool)
    for dx, dy in steps:
        touch |= pb[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    rows, cols = np.nonzero(a & touch)
    off = np.zeros((len(rows), 2))
    cnt = np.zeros(len(rows))
    for dx, dy in steps:
        nb = pb[rows + 1 + dy, cols + 1 + dx]
        off[:, 0] += dx * nb
        off[:, 1] += dy * nb
        cnt += nb
    return np.column_stack([cols, rows]).astype(np.int64), off / cnt[:, None]


def _order_run(pix: np.ndarray) -> np.ndarray:
    """Order the pixels of one run along the curve they form."""
    n = len(pix)
    if n <= 2:
        return np.lexsort((pix[:, 1], pix[:, 0])) if n == 2 else np.arange(n)
    centred = pix - pix.mean(axis=0)
    _, _, vt = np.linalg.svd(centred.astype(float), full_matrices=False)
    axis = vt[0]
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    proj = centred @ axis
    x0, y0 = pix.min(axis=0)
    w = pix[:, 0].max() - x0 + 3
    h = pix[:, 1].max() - y0 + 3
    lut = -np.ones((h, w), dtype=np.int64)
    lut[pix[:, 1] - y0 + 1, pix[:, 0] - x0 + 1] = np.arange(n)
    src, dst, wts = [], [], []
    for dx, dy, wt in ((1, 0, 1.0), (0, 1, 1.0), (1, 1, np.sqrt(2)), (-1, 1, np.sqrt(2))):
        j = lut[pix[:, 1] - y0 + 1 + dy, pix[:, 0] - x0 + 1 + dx]
        ok = j >= 0
        src.append(np.flatnonzero(ok))
        dst.append(j[ok])
        wts.append(np.full(ok.sum(), wt))
    src, dst, wts = np.concatenate(src), np.concatenate(dst), np.concatenate(wts)
    graph = coo_matrix((wts, (src, dst)), shape=(n, n)).tocsr()
    # double sweep: the geodesically farthest pixel from any seed is a true
    # end of the run, so distances from it never fold back on themselves
    dist = dijkstra(graph, directed=False, indices=int(np.argmin(proj)))
    far = np.flatnonzero(dist == dist.max())
    start = int(far[np.argmin(proj[far])])
    dist = dijkstra(graph, directed=False, indices=start)
    order = np.lexsort((proj, dist))
    # run along the dominant axis in its positive direction
    return order[::-1] if proj[order[0]] > proj[order[-1]] else order


def extract_interface(mask: LabelMask, class_a, class_b, subpixel: bool = True) -> list[Polyline]:
    """Interface runs between two classes, longest first.

    Each vertex stands for one ``class_a`` pixel that is 4-adjacent to
    ``class_b``. With ``subpixel`` the vertex sits half a pixel from the
    pixel centre toward its ``class_b`` neighbours (the shared edge), which
    removes the half-pixel bias of pixel centres.
    """
    pix, shift = interface_pixels(mask.data, class_a, class_b)
    if len(pix) == 0:
        raise EmptyInterface(f"{class_a}/{class_b}")
    run_mask = np.zeros(mask.shape, dtype=bool)
    run_mask[pix[:, 1], pix[:, 0]] = True
    labels, n = ndimage.label(run_mask, structure=_STRUCT[8])
    run_of = labels[pix[:, 1], pix[:, 0]]
    out = []
    for lab in range(1, n + 1):
        sel = np.flatnonzero(run_of == lab)
        order = sel[_order_run(pix[sel])]
        pts = pix[order].astype(float)
        if subpixel:
            pts = pts + 0.5 * shift[order]
        out.append(Polyline(pts, pix[order]))
    out.sort(key=lambda p: (-len(p), p.points[0, 0], p.points[0, 1]))
    return out


# ------------------------------------------------------- walking and rays


def point_at_arclength(
    p: Polyline,
    start,
    distance: float,
    direction: int,
    meta: ScanMeta | None = None,
    tolerance: float = 2.0,
) -> Point:
    """Point ``distance`` (µm with ``meta``) along the chain from ``start``.

    ``start`` is projected onto the chain first; it must lie within
    ``tolerance`` chain units of it.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    _, seg, foot, dist = p.project(start)
    if dist > tolerance:
        raise ValueError(f"start point is {dist:.2f} units from the polyline")
    cum = p.cumulative_arclen(meta)
    seglen = cum[seg + 1] - cum[seg] if len(cum) > 1 else 0.0
    a = p.points[seg]
    raw = np.hypot(*(p.points[min(seg + 1, len(p) - 1)] - a))
    frac = 0.0 if raw == 0 else np.hypot(*(foot - a)) / raw
    s0 = cum[seg] + frac * seglen
    target = s0 + direction * distance
    if target < -1e-9 or target > cum[-1] + 1e-9:
        raise PastEnd(f"polyline ends {cum[-1] - s0 if direction > 0 else s0:.1f} short of {distance:.1f}")
    if distance == 0:
        return Point(*foot)
    return Point(*p.point_at(target, meta))


def tangent_at(p: Polyline, at, window: int = DEFAULT_TANGENT_WINDOW) -> np.ndarray:
    """Unit tangent (pointing toward increasing vertex index) from a
    least-squares line through the ``window`` vertices centred on ``at``."""
    if len(p) < 3 or window < 3:
        raise DegenerateTangent("need at least 3 vertices")
    _, seg, foot, _ = p.project(at)
    pts = p.points
    i = seg if np.hypot(*(foot - pts[seg])) <= np.hypot(*(foot - pts[min(seg + 1, len(p) - 1)])) else seg + 1
    half = window // 2
    win = pts[max(0, i - half) : min(len(p), i + half + 1)]
    if len(win) < 3:
        raise DegenerateTangent(f"window holds only {len(win)} vertices")
    centred = win - win.mean(axis=0)
    _, sv, vt = np.linalg.svd(centred, full_matrices=False)
    t = vt[0]
    if sv[0] == 0:
        raise DegenerateTangent("coincident vertices")
    if np.dot(t, win[-1] - win[0]) < 0:
        t = -t
    return t / np.hypot(*t)


def normal_at(
    p: Polyline,
    at,
    window: int = DEFAULT_TANGENT_WINDOW,
    mask: LabelMask | None = None,
    toward: Iterable[int] = (CHAMBER,),
    coord_scale=(1.0, 1.0),
    probe: float = 1.5,
) -> np.ndarray:
    """Unit normal at ``at``.

    Without a mask the normal is the tangent rotated by +90° (to the right of
    the walking direction on screen). With a mask it is flipped, if needed,
    so that a probe step lands in one of the ``toward`` classes; chain
    coordinates divided by ``coord_scale`` give pixel coordinates.
    """
    t = tangent_at(p, at, window)
    n = np.array([-t[1], t[0]])
    if mask is None:
        return n
    toward = set(_as_codes(toward))
    at = np.asarray(at, dtype=float)
    sc = np.asarray(coord_scale, dtype=float)
    step = probe * float(np.min(sc))
    for k in (1.0, 2.0, 3.0):
        plus = mask.at(*((at + k * step * n) / sc))
        minus = mask.at(*((at - k * step * n) / sc))
        if plus in toward and minus not in toward:
            return n
        if minus in toward and plus not in toward:
            return -n
    return n


def ray_hit(p: Polyline, origin, direction, min_t: float = 1e-9) -> tuple[np.ndarray, float]:
    """Nearest crossing of a ray with the chain's segments: (point, ray parameter)."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    pts = p.points
    if len(pts) < 2:
        raise NoIntersection()
    a = pts[:-1]
    seg = np.diff(pts, axis=0)
    denom = d[0] * seg[:, 1] - d[1] * seg[:, 0]
    ao = a - o
    ok = np.abs(denom) > 1e-12
    safe = np.where(ok, denom, 1.0)
    t = (ao[:, 0] * seg[:, 1] - ao[:, 1] * seg[:, 0]) / safe
    u = (ao[:, 0] * d[1] - ao[:, 1] * d[0]) / safe
    eps = 1e-9
    hit = ok & (t >= min_t) & (u >= -eps) & (u <= 1 + eps)
    if not hit.any():
        raise NoIntersection()
    t = np.where(hit, t, np.inf)
    i = int(np.argmin(t))
    return o + t[i] * d, float(t[i])


def ray_intersect(p: Polyline, origin, direction) -> Point:
    d = np.asarray(direction, dtype=float)
    norm = np.hypot(*d)
    if not np.isclose(norm, 1.0, atol=1e-6):
        raise ValueError("direction must be a unit vector")
    pt, _ = ray_hit(p, origin, d)
    return Point(*pt)


def polygon_area(points: Sequence) -> float:
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))
