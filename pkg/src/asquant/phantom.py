"""Synthetic anterior-segment cross-sections with closed-form ground truth.

Geometry is laid out in µm with the origin at the centre of pixel (0, 0),
x to the right and y down. The posterior corneal surface is a circle; the
spurs sit on it symmetrically. Each iris leaf is a constant-thickness band
whose anterior surface is a circular arc (or a straight line when the bow
is zero) anchored on the wall, and the anterior lens surface is a circle.
Every ground-truth number is computed from this description before any
pixel is drawn.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Sequence

import numpy as np

from .core import (
    BACKGROUND,
    CHAMBER,
    CORNEO_SCLERA,
    DEGREES_PER_SCAN,
    IRIS,
    LabelMask,
    ParamSet,
    Point,
    ScanMeta,
    SideParams,
    SpurPair,
)
from .errors import InconsistentSpec
from .landmark import LandmarkLabelConfig, encode_landmark, mirror_x, split_halves

AOD_OFFSETS = (500.0, 750.0)
IT_OFFSET = 750.0


@dataclass(frozen=True)
class IrisLeaf:
    """One iris leaf.

    ``angle_deg`` is the angle between the wall tangent at the anchor and
    the chord of the anterior surface; ``bow_um`` is the sagitta of that
    surface over its chord (positive bows toward the cornea);
    ``contact_um`` is the arc length of iridotrabecular contact anterior to
    the spur (0 = the leaf inserts at the spur).
    """

    angle_deg: float = 35.0
    thickness_um: float = 450.0
    bow_um: float = 150.0
    contact_um: float = 0.0

    @property
    def contact(self) -> bool:
        return self.contact_um > 0


@dataclass(frozen=True)
class NoiseSpec:
    speck_count: int = 0
    speck_size_px: int = 3
    speck_class: int = CORNEO_SCLERA


@dataclass(frozen=True)
class PhantomSpec:
    width_px: int = 1600
    height_px: int = 900
    scale_x: float = 10.0
    scale_y: float = 10.0
    cornea_radius_um: float = 7800.0
    cornea_thickness_um: float = 550.0
    apex_depth_um: float = 1100.0
    acw_um: float = 11800.0
    sclera_extent_um: float = 1500.0
    iris_left: IrisLeaf = field(default_factory=IrisLeaf)
    iris_right: IrisLeaf = field(default_factory=IrisLeaf)
    pupil_gap_um: float = 4200.0
    lens_radius_um: float = 9000.0
    lens_vault_um: float = 400.0
    rotation_deg: float = 0.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    @property
    def meta(self) -> ScanMeta:
        return ScanMeta(self.scale_x, self.scale_y)

    def leaf(self, side: str) -> IrisLeaf:
        return self.iris_left if side == "L" else self.iris_right

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InconsistentSpec(f"unknown phantom fields: {sorted(unknown)}")
        for key, sub in (("iris_left", IrisLeaf), ("iris_right", IrisLeaf), ("noise", NoiseSpec)):
            if key in d and isinstance(d[key], dict):
                d[key] = sub(**d[key])
        if "iris" in d:  # shorthand for both leaves
            raise InconsistentSpec("use iris_left / iris_right")
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    spurs: SpurPair
    params: ParamSet

    def to_dict(self) -> dict:
        return {
            "spurs": {"left": list(self.spurs.left), "right": list(self.spurs.right)},
            **self.params.to_dict(),
        }


@dataclass(frozen=True)
class Phantom:
    spec: PhantomSpec
    tissue: LabelMask
    landmark_left: LabelMask
    landmark_right: LabelMask
    spurs: SpurPair
    truth: GroundTruth


# ---------------------------------------------------------------- geometry


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _green_seg(p, q) -> float:
    return 0.5 * (p[0] * q[1] - q[0] * p[1])


def _green_arc(center, r, p, q) -> float:
    """½∮(x dy − y dx) along the shorter arc of a circle from p to q."""
    cx, cy = center
    a1 = math.atan2(p[1] - cy, p[0] - cx)
    a2 = a1 + _wrap(math.atan2(q[1] - cy, q[0] - cx) - a1)
    return 0.5 * (
        r * cx * (math.sin(a2) - math.sin(a1)) - r * cy * (math.cos(a2) - math.cos(a1)) + r * r * (a2 - a1)
    )


class _Leaf:
    """One leaf laid out in the left-side frame (right leaves are mirrored)."""

    def __init__(self, g: "_Geometry", leaf: IrisLeaf):
        self.g = g
        self.leaf = leaf
        self.t = leaf.thickness_um
        self.phi_q = g.theta - leaf.contact_um / g.rc
        self.q = g.wall_point(self.phi_q)
        tq = np.array([math.cos(self.phi_q), -math.sin(self.phi_q)])
        nq = np.array([math.sin(self.phi_q), math.cos(self.phi_q)])
        a = math.radians(leaf.angle_deg)
        self.d = math.cos(a) * tq + math.sin(a) * nq
        self.tip_x = g.cx - g.spec.pupil_gap_um / 2.0
        if self.d[0] <= 1e-6:
            raise InconsistentSpec("iris chord does not run toward the pupil")
        self.length = (self.tip_x - self.q[0]) / self.d[0]
        if self.length <= 0:
            raise InconsistentSpec("pupil edge lies peripheral to the iris anchor")
        self.tip = self.q + self.length * self.d
        self.b = leaf.bow_um
        self.ant_n = np.array([self.d[1], -self.d[0]])  # chord normal pointing anteriorly
        if self.b != 0:
            L = self.length
            self.r = (L * L / 4 + self.b * self.b) / (2 * abs(self.b))
            mid = (self.q + self.tip) / 2
            self.o = mid + (self.b - math.copysign(self.r, self.b)) * self.ant_n
            self.r_post = self.r - self.t if self.b > 0 else self.r + self.t
            if self.r_post <= 0:
                raise InconsistentSpec("iris bow radius smaller than its thickness")

    # surfaces as graphs y(x); NaN where undefined
    def y_ant(self, x):
        x = np.asarray(x, dtype=float)
        if self.b == 0:
            return self.q[1] + (x - self.q[0]) * self.d[1] / self.d[0]
        return self._arc_y(x, self.r)

    def y_post(self, x):
        x = np.asarray(x, dtype=float)
        if self.b == 0:
            return self.y_ant(x) + self.t / self.d[0]
        return self._arc_y(x, self.r_post)

    def _arc_y(self, x, r):
        dx2 = r * r - (x - self.o[0]) ** 2
        with np.errstate(invalid="ignore"):
            root = np.sqrt(dx2)
        root = np.where(dx2 >= 0, root, np.nan)
        return self.o[1] - root if self.b > 0 else self.o[1] + root

    def normal_into_iris(self, p) -> np.ndarray:
        if self.b == 0:
            return -self.ant_n
        v = np.asarray(p) - self.o
        v = v / np.hypot(*v)
        return -v if self.b > 0 else v

    def ray_to_anterior(self, origin, u) -> float | None:
        """Smallest positive ray parameter hitting the anterior surface on the leaf."""
        origin = np.asarray(origin, float)
        hits = []
        if self.b == 0:
            den = u[0] * self.d[1] - u[1] * self.d[0]
            if abs(den) > 1e-15:
                w = self.q - origin
                tau = (w[0] * self.d[1] - w[1] * self.d[0]) / den
                hits.append(tau)
        else:
            w = origin - self.o
            bq = float(np.dot(u, w))
            cq = float(np.dot(w, w)) - self.r * self.r
            disc = bq * bq - cq
            if disc >= 0:
                sq = math.sqrt(disc)
                hits += [-bq - sq, -bq + sq]
        good = []
        for tau in hits:
            if tau <= 0:
                continue
            p = origin + tau * u
            if not (self.q[0] - 1e-9 <= p[0] <= self.tip_x + 1e-9):
                continue
            if self.b != 0 and abs(self.y_ant(p[0]) - p[1]) > 1e-6 * max(1.0, self.r):
                continue
            good.append(tau)
        return min(good) if good else None

    def green_ant(self, p, q) -> float:
        """Green contribution along the anterior surface from p to q."""
        if self.b == 0:
            return _green_seg(p, q)
        return _green_arc(self.o, self.r, p, q)

    def posterior_root(self) -> np.ndarray:
        """Where the posterior surface meets the wall, peripheral side."""
        g = self.g
        c = np.array([g.cx, g.cy])
        if self.b == 0:
            p0 = self.q - self.t * self.ant_n
            w = p0 - c
            bq = float(np.dot(self.d, w))
            cq = float(np.dot(w, w)) - g.rc * g.rc
            disc = bq * bq - cq
            if disc < 0:
                raise InconsistentSpec("posterior iris surface misses the wall")
            sq = math.sqrt(disc)
            cands = [p0 + tau * self.d for tau in (-bq - sq, -bq + sq)]
        else:
            cands = _circle_circle(c, g.rc, self.o, self.r_post)
            if not cands:
                raise InconsistentSpec("posterior iris surface misses the wall")
        # the crossing nearest the anchor on the peripheral side
        cands = [p for p in cands if p[0] <= self.q[0] + 1e-6]
        if not cands:
            raise InconsistentSpec("posterior iris surface does not reach the wall")
        return min(cands, key=lambda p: np.hypot(*(p - self.q)))

    def point_at_distance(self, centre, dist) -> np.ndarray | None:
        """Anterior-surface point at Euclidean ``dist`` from ``centre`` toward the tip."""
        centre = np.asarray(centre, float)
        if self.b == 0:
            w = self.q - centre
            bq = float(np.dot(self.d, w))
            cq = float(np.dot(w, w)) - dist * dist
            disc = bq * bq - cq
            if disc < 0:
                return None
            cands = [self.q + tau * self.d for tau in (-bq + math.sqrt(disc), -bq - math.sqrt(disc))]
        else:
            cands = _circle_circle(centre, dist, self.o, self.r)
        cands = [
            p for p in cands
            if self.q[0] - 1e-9 <= p[0] <= self.tip_x + 1e-9
            and (self.b == 0 or abs(self.y_ant(p[0]) - p[1]) < 1e-6 * max(1.0, self.r))
        ]
        if not cands:
            return None
        return max(cands, key=lambda p: p[0])


def _circle_circle(c1, r1, c2, r2) -> list[np.ndarray]:
    c1, c2 = np.asarray(c1, float), np.asarray(c2, float)
    d = float(np.hypot(*(c2 - c1)))
    if d == 0 or d > r1 + r2 or d < abs(r1 - r2):
        return []
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    h2 = r1 * r1 - a * a
    h = math.sqrt(max(h2, 0.0))
    e = (c2 - c1) / d
    base = c1 + a * e
    perp = np.array([-e[1], e[0]])
    return [base + h * perp, base - h * perp]


class _Geometry:
    def __init__(self, spec: PhantomSpec):
        self.spec = spec
        self.cx = (spec.width_px - 1) / 2.0 * spec.scale_x
        self.cy = spec.apex_depth_um + spec.cornea_radius_um
        self.rc = spec.cornea_radius_um
        if not 0 < spec.acw_um / 2 < self.rc:
            raise InconsistentSpec("ACW must be shorter than the corneal diameter")
        self.theta = math.asin(spec.acw_um / 2 / self.rc)
        self.spur_y = self.cy - self.rc * math.cos(self.theta)
        self.pole_y = self.spur_y - spec.lens_vault_um
        self.lens_cy = self.pole_y + spec.lens_radius_um
        self.leaves = {"L": _Leaf(self, spec.iris_left), "R": _Leaf(self, spec.iris_right)}

    def wall_point(self, phi: float) -> np.ndarray:
        """Left-frame wall point at angle ``phi`` from the apex direction."""
        return np.array([self.cx - self.rc * math.sin(phi), self.cy - self.rc * math.cos(phi)])

    def spur(self, side: str) -> np.ndarray:
        p = self.wall_point(self.theta)
        return p if side == "L" else self.mirror(p)

    def mirror(self, p) -> np.ndarray:
        return np.array([2 * self.cx - p[0], p[1]])

    def y_lens(self, x):
        r = self.spec.lens_radius_um
        return self.lens_cy - np.sqrt(np.maximum(r * r - (np.asarray(x, float) - self.cx) ** 2, 0.0))

    # ---------------------------------------------------------- truth

    def aod(self, side: str, offset: float) -> tuple[float, bool, np.ndarray | None]:
        leaf = self.leaves[side]
        if offset <= leaf.leaf.contact_um:
            return 0.0, True, None
        phi = self.theta - offset / self.rc
        a = self.wall_point(phi)
        u = (np.array([self.cx, self.cy]) - a) / self.rc
        tau = leaf.ray_to_anterior(a, u)
        if tau is None:
            raise InconsistentSpec(f"AOD{offset:.0f} ray misses the {side} iris")
        return tau, False, a + tau * u

    def tisa(self, side: str, offset: float) -> tuple[float, bool]:
        leaf = self.leaves[side]
        aod, closed, hit = self.aod(side, offset)
        if closed:
            return 0.0, True
        phi_a = self.theta - offset / self.rc
        a = self.wall_point(phi_a)
        c = (self.cx, self.cy)
        area = _green_arc(c, self.rc, leaf.q, a) + _green_seg(a, hit) + leaf.green_ant(hit, leaf.q)
        return abs(area), False

    def iris_thickness(self, side: str) -> float:
        leaf = self.leaves[side]
        s = self.wall_point(self.theta)
        p = leaf.point_at_distance(s, IT_OFFSET)
        if p is None:
            p = leaf.q
        foot = p + leaf.t * leaf.normal_into_iris(p)
        if np.hypot(foot[0] - self.cx, foot[1] - self.cy) >= self.rc:
            raise InconsistentSpec("iris thickness ray leaves the chamber")
        return leaf.t

    def icurve(self, side: str) -> float:
        leaf = self.leaves[side]
        if leaf.b == 0:
            return 0.0
        r0 = leaf.posterior_root()
        tp = np.array([leaf.tip_x, float(leaf.y_post(leaf.tip_x))])
        c = float(np.hypot(*(tp - r0)))
        rp = leaf.r_post
        half = c / 2
        return half * half / (rp + math.sqrt(rp * rp - half * half))

    def ac_area(self) -> float:
        """Chamber area from Green's theorem over its arc-and-segment boundary."""
        c = (self.cx, self.cy)
        ql, tl = self.leaves["L"].q, self.leaves["L"].tip
        qr, tr = self.mirror(self.leaves["R"].q), self.mirror(self.leaves["R"].tip)
        ll = np.array([tl[0], float(self.y_lens(tl[0]))])
        lr = np.array([tr[0], float(self.y_lens(tr[0]))])
        lens_c = (self.cx, self.lens_cy)
        right = self.leaves["R"]
        total = _green_arc(c, self.rc, ql, qr)
        if right.b == 0:
            total += _green_seg(qr, tr)
        else:
            total += _green_arc(self.mirror(right.o), right.r, qr, tr)
        total += _green_seg(tr, lr)
        total += _green_arc(lens_c, self.spec.lens_radius_um, lr, ll)
        total += _green_seg(ll, tl)
        total += self.leaves["L"].green_ant(tl, ql)
        return abs(total)

    def acd(self) -> float:
        return self.pole_y - (self.cy - self.rc)


def _check(spec: PhantomSpec, g: _Geometry) -> None:
    s = spec
    if min(s.width_px, s.height_px) < 16:
        raise InconsistentSpec("image must be at least 16 px on each side")
    for name in ("scale_x", "scale_y", "cornea_radius_um", "cornea_thickness_um", "apex_depth_um",
                 "acw_um", "sclera_extent_um", "pupil_gap_um", "lens_radius_um"):
        if not getattr(s, name) > 0:
            raise InconsistentSpec(f"{name} must be positive")
    px = max(s.scale_x, s.scale_y)
    for side in ("L", "R"):
        leaf = s.leaf(side)
        if not 0 < leaf.angle_deg <= 80:
            raise InconsistentSpec(f"{side} iris angle must lie in (0, 80] degrees")
        if leaf.thickness_um <= 0 or leaf.contact_um < 0:
            raise InconsistentSpec(f"{side} iris thickness must be positive and contact non-negative")
    if s.pupil_gap_um >= s.acw_um:
        raise InconsistentSpec("pupil gap must be narrower than the chamber")
    w_um, h_um = (s.width_px - 1) * s.scale_x, (s.height_px - 1) * s.scale_y
    if g.cy - g.rc - s.cornea_thickness_um < 2 * s.scale_y:
        raise InconsistentSpec("cornea leaves the top of the image")
    y_cut = g.spur_y + s.sclera_extent_um
    if y_cut > h_um - 2 * s.scale_y:
        raise InconsistentSpec("sclera leaves the bottom of the image")
    ro = g.rc + s.cornea_thickness_um
    dy = max(g.cy - y_cut, 0.0)
    half = math.sqrt(max(ro * ro - dy * dy, 0.0)) if dy < ro else 0.0
    if dy < ro and (g.cx - half < 2 * s.scale_x or g.cx + half > w_um - 2 * s.scale_x):
        raise InconsistentSpec("sclera leaves the side of the image")
    if g.acd() < 10 * px:
        raise InconsistentSpec("lens pole is too close to the cornea")
    # the spur must fit the landmark focus disk inside its half image
    r = LandmarkLabelConfig().r_focus
    for side in ("L", "R"):
        sp = g.spur(side)
        if sp[1] / s.scale_y < r + 2:
            raise InconsistentSpec("spur too close to the image border")
    for side, leaf in g.leaves.items():
        xs = np.linspace(leaf.q[0], leaf.tip_x, 400)[1:]
        ya = leaf.y_ant(xs)
        yp = leaf.y_post(xs)
        if np.isnan(ya).any() or np.isnan(yp).any():
            raise InconsistentSpec(f"{side} iris arc turns past vertical")
        dist = np.hypot(xs - g.cx, ya - g.cy)
        if (dist >= g.rc).any():
            raise InconsistentSpec(f"{side} iris runs into the cornea")
        if np.hypot(leaf.tip[0] - g.cx, leaf.tip[1] - g.cy) > g.rc - 3 * px:
            raise InconsistentSpec(f"{side} iris tip touches the cornea")
        # the leaf must leave the wall at a real angle
        if leaf.b != 0:
            half_arc = 2 * math.atan2(2 * abs(leaf.b), leaf.length)
            start_angle = leaf.leaf.angle_deg - math.degrees(half_arc) * (1 if leaf.b > 0 else -1)
            if start_angle < 3 or start_angle > 85:
                raise InconsistentSpec(f"{side} iris leaves the wall at {start_angle:.1f} degrees")
        tip_post = float(leaf.y_post(leaf.tip_x))
        if float(g.y_lens(leaf.tip_x)) < tip_post + 3 * px:
            raise InconsistentSpec(f"lens surface overlaps the {side} iris tip")
        root = leaf.posterior_root()
        if root[1] > y_cut - 2 * px:
            raise InconsistentSpec(f"{side} iris root lies below the sclera")
        if leaf.tip_x - leaf.q[0] < IT_OFFSET + 20 * px:
            raise InconsistentSpec(f"{side} iris leaf too short")


# ------------------------------------------------------------ rasterizing


def _rotation(spec: PhantomSpec):
    a = math.radians(spec.rotation_deg)
    centre = np.array([(spec.width_px - 1) / 2 * spec.scale_x, (spec.height_px - 1) / 2 * spec.scale_y])
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return centre, rot


def _to_image(spec: PhantomSpec, p) -> np.ndarray:
    centre, rot = _rotation(spec)
    q = rot @ (np.asarray(p, float) - centre) + centre
    return q / np.array([spec.scale_x, spec.scale_y])


def _rasterize(spec: PhantomSpec, g: _Geometry) -> np.ndarray:
    h, w = spec.height_px, spec.width_px
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    x = xx * spec.scale_x
    y = yy * spec.scale_y
    if spec.rotation_deg:
        centre, rot = _rotation(spec)
        dx, dy = x - centre[0], y - centre[1]
        # inverse rotation maps image positions into the canonical frame
        x, y = rot[0, 0] * dx + rot[1, 0] * dy + centre[0], rot[0, 1] * dx + rot[1, 1] * dy + centre[1]
    d = np.hypot(x - g.cx, y - g.cy)
    out = np.zeros((h, w), dtype=np.uint8)
    shell = (d >= g.rc) & (d <= g.rc + spec.cornea_thickness_um) & (y <= g.spur_y + spec.sclera_extent_um)
    out[shell] = CORNEO_SCLERA
    inside = d < g.rc
    xm = 2 * g.cx - x
    lz, rz = g.leaves["L"], g.leaves["R"]
    left = x <= lz.tip_x
    right = xm <= rz.tip_x
    with np.errstate(invalid="ignore"):
        ya_l, yp_l = lz.y_ant(x), lz.y_post(x)
        ya_r, yp_r = rz.y_ant(xm), rz.y_post(xm)
        iris = inside & (
            (left & (y >= ya_l) & (y <= yp_l)) | (right & (y >= ya_r) & (y <= yp_r))
        )
        mid = ~left & ~right
        chamber = inside & ~iris & (
            (left & (y < ya_l)) | (right & (y < ya_r)) | (mid & (y < g.y_lens(x)))
        )
    out[iris] = IRIS
    out[chamber] = CHAMBER
    return out


def _add_specks(out: np.ndarray, noise: NoiseSpec, seed: int) -> None:
    if noise.speck_count <= 0:
        return
    rng = np.random.default_rng(seed)
    k = int(noise.speck_size_px)
    h, w = out.shape
    placed, tries = 0, 0
    margin = 2
    while placed < noise.speck_count:
        tries += 1
        if tries > 200 * noise.speck_count + 1000:
            raise InconsistentSpec("no room for the requested noise specks")
        x0 = int(rng.integers(margin, w - k - margin))
        y0 = int(rng.integers(margin, h - k - margin))
        win = out[y0 - margin : y0 + k + margin, x0 - margin : x0 + k + margin]
        if np.any(win != BACKGROUND):
            continue
        out[y0 : y0 + k, x0 : x0 + k] = noise.speck_class
        placed += 1


def ground_truth(spec: PhantomSpec) -> GroundTruth:
    g = _Geometry(spec)
    _check(spec, g)
    sides = {}
    for side in ("L", "R"):
        vals, closed = {}, set()
        for off in AOD_OFFSETS:
            a, cl, _ = g.aod(side, off)
            t, _ = g.tisa(side, off)
            vals[f"aod{off:.0f}"] = a
            vals[f"tisa{off:.0f}"] = t
            if cl:
                closed |= {f"aod{off:.0f}", f"tisa{off:.0f}"}
        vals["it750"] = g.iris_thickness(side)
        vals["icurve"] = g.icurve(side)
        vals = {k: float(v) for k, v in vals.items()}
        sides[side] = SideParams(**vals, closed=frozenset(closed))
    params = ParamSet(
        acw=float(spec.acw_um), acd=float(g.acd()), lv=float(spec.lens_vault_um), ac_area=float(g.ac_area()),
        left=sides["L"], right=sides["R"],
    )
    sl = _to_image(spec, g.spur("L"))
    sr = _to_image(spec, g.spur("R"))
    return GroundTruth(SpurPair(Point(*map(float, sl)), Point(*map(float, sr))), params)


def generate(spec: PhantomSpec = PhantomSpec(), landmark_cfg: LandmarkLabelConfig = LandmarkLabelConfig()) -> Phantom:
    """Ground truth first, then the tissue raster and per-side landmark labels."""
    truth = ground_truth(spec)
    g = _Geometry(spec)
    data = _rasterize(spec, g)
    _add_specks(data, spec.noise, spec.seed)
    tissue = LabelMask(data)
    spurs = truth.spurs
    w, h = spec.width_px, spec.height_px
    wl = (w + 1) // 2
    lm_left = encode_landmark((wl, h), spurs.left, landmark_cfg)
    lm_right = encode_landmark((w - wl, h), (mirror_x(spurs.right.x, w), spurs.right.y), landmark_cfg)
    return Phantom(spec, tissue, lm_left, lm_right, spurs, truth)


def landmark_halves(full_landmark: LabelMask):
    return split_halves(full_landmark)


# ------------------------------------------------------------------ sweeps


def _set_path(spec: PhantomSpec, path: str, value) -> PhantomSpec:
    head, _, rest = path.partition(".")
    if head == "iris" and rest:
        spec = _set_path(spec, "iris_left." + rest, value)
        return _set_path(spec, "iris_right." + rest, value)
    if not hasattr(spec, head):
        raise InconsistentSpec(f"unknown phantom parameter {path!r}")
    if rest:
        return replace(spec, **{head: _set_path(getattr(spec, head), rest, value)})
    if head in ("iris_left", "iris_right") and isinstance(value, dict):
        value = IrisLeaf(**value)
    if head == "noise" and isinstance(value, dict):
        value = NoiseSpec(**value)
    return replace(spec, **{head: value})


def sweep(base: PhantomSpec, vary, values: Sequence) -> list[tuple[int, PhantomSpec]]:
    """One spec per value, indexed 0..n-1.

    ``vary`` is a dotted field path (``iris.angle_deg`` sets both leaves) or
    a tuple of paths, in which case each value is a tuple of the same length.
    Every spec is validated.
    """
    paths = (vary,) if isinstance(vary, str) else tuple(vary)
    out = []
    for i, v in enumerate(values):
        vals = (v,) if len(paths) == 1 else tuple(v)
        if len(vals) != len(paths):
            raise InconsistentSpec(f"value {v!r} does not match parameters {paths}")
        spec = base
        for p, val in zip(paths, vals):
            spec = _set_path(spec, p, val)
        g = _Geometry(spec)
        _check(spec, g)
        out.append((i, spec))
    return out


def scan_polar_angles(index: int) -> tuple[float, float]:
    left = (index * DEGREES_PER_SCAN) % 360.0
    return left, (left + 180.0) % 360.0


def sinusoidal_angle_values(n: int = 128, mean: float = 35.0, amplitude: float = 15.0, narrow_at: float = 270.0):
    """Per-scan (left, right) iris angles narrowing smoothly toward one polar angle."""
    vals = []
    for i in range(n):
        al, ar = scan_polar_angles(i)
        f = lambda a: mean - amplitude * math.cos(math.radians(a - narrow_at))
        vals.append((f(al), f(ar)))
    return vals


# the default spec with the lens set back far enough to clear 50° leaves
SWEEP_BASE = replace(PhantomSpec(), lens_vault_um=-400.0)


def angle_sweep(base: PhantomSpec = SWEEP_BASE, n: int = 128, mean: float = 35.0, amplitude: float = 15.0,
                narrow_at: float = 270.0) -> list[tuple[int, PhantomSpec]]:
    return sweep(base, ("iris_left.angle_deg", "iris_right.angle_deg"),
                 sinusoidal_angle_values(n, mean, amplitude, narrow_at))


def spec_from_json(doc: dict[str, Any]) -> PhantomSpec:
    return PhantomSpec.from_dict(copy.deepcopy(doc))


# ----------------------------------------------------------------- battery


def at_scale(spec: PhantomSpec, scale_um: float, field_um: tuple = (16000.0, 9000.0)) -> PhantomSpec:
    """The same µm geometry rasterised at another isotropic pixel pitch."""
    return replace(
        spec,
        scale_x=scale_um,
        scale_y=scale_um,
        width_px=int(round(field_um[0] / scale_um)),
        height_px=int(round(field_um[1] / scale_um)),
    )


def _both(**leaf) -> dict:
    return {"iris_left": IrisLeaf(**leaf), "iris_right": IrisLeaf(**leaf)}


def battery() -> list[tuple[str, PhantomSpec]]:
    """Twenty validated specs spanning iris angle, pixel pitch, bow and contact."""
    base = PhantomSpec()
    rows = [
        ("open-10deg", 10.0, dict(**_both(angle_deg=10, bow_um=-100), pupil_gap_um=8000)),
        ("open-15deg", 5.0, dict(**_both(angle_deg=15, bow_um=-100), pupil_gap_um=6000)),
        ("open-20deg", 20.0, dict(**_both(angle_deg=20, bow_um=-100))),
        ("open-25deg-sag", 10.0, dict(**_both(angle_deg=25, bow_um=-100), lens_vault_um=-200)),
        ("open-30deg", 7.5, dict(**_both(angle_deg=30, bow_um=100), lens_vault_um=-200)),
        ("default-10um", 10.0, {}),
        ("default-5um", 5.0, {}),
        ("default-20um", 20.0, {}),
        ("open-40deg", 15.0, dict(**_both(angle_deg=40, bow_um=80), lens_vault_um=-200)),
        ("open-45deg", 10.0, dict(**_both(angle_deg=45, bow_um=100), lens_vault_um=-200)),
        ("open-50deg", 20.0, dict(**_both(angle_deg=50, bow_um=150), lens_vault_um=-600)),
        ("open-55deg", 5.0, dict(**_both(angle_deg=55, bow_um=150), pupil_gap_um=6000, lens_vault_um=-600)),
        ("open-60deg", 10.0, dict(**_both(angle_deg=60, bow_um=150), pupil_gap_um=6000, lens_vault_um=-600)),
        ("open-60deg-20um", 20.0, dict(**_both(angle_deg=60, bow_um=100), pupil_gap_um=6000, lens_vault_um=-600)),
        ("contact-600", 10.0, dict(**_both(angle_deg=35, bow_um=150, contact_um=600))),
        ("contact-900", 10.0, dict(**_both(angle_deg=25, bow_um=-100, contact_um=900), lens_vault_um=-200)),
        ("contact-300", 10.0, dict(**_both(angle_deg=20, bow_um=-100, contact_um=300))),
        ("asymmetric", 10.0, dict(iris_left=IrisLeaf(angle_deg=20, bow_um=-100),
                                  iris_right=IrisLeaf(angle_deg=45, bow_um=100), lens_vault_um=-200)),
        ("bowed-250", 10.0, dict(**_both(angle_deg=50, bow_um=250), lens_vault_um=-600)),
        ("specks", 10.0, dict(noise=NoiseSpec(speck_count=20), seed=7)),
    ]
    out = []
    for name, scale, changes in rows:
        spec = at_scale(replace(base, **changes), scale)
        _check(spec, _Geometry(spec))
        out.append((name, spec))
    return out
