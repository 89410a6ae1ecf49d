"""Domain types, P5 mask I/O, spur CSV and scan manifests."""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .errors import (
    DimensionTooSmall,
    IllegalClassCode,
    IoFailure,
    LeftRightSwapped,
    MalformedHeader,
    ManifestError,
    MissingSide,
    NonFiniteCoordinate,
)

# tissue palette
BACKGROUND = 0
IRIS = 1
CORNEO_SCLERA = 2
CHAMBER = 3

# landmark palette
ATTENTION = 1
FOCUS = 2

SCANS_PER_VOLUME = 128
DEGREES_PER_SCAN = 180.0 / 64.0
MIN_MASK_SIDE = 16


class Palette(str, enum.Enum):
    TISSUE = "tissue"
    LANDMARK = "landmark"

    @property
    def codes(self) -> tuple[int, ...]:
        return (0, 1, 2, 3) if self is Palette.TISSUE else (0, 1, 2)


TISSUE_NAMES = {IRIS: "iris", CORNEO_SCLERA: "corneo_sclera", CHAMBER: "anterior_chamber"}


def round_half_away(v):
    """Round half away from zero (numpy's rint rounds half to even)."""
    v = np.asarray(v, dtype=float)
    out = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return out.astype(np.int64) if out.ndim else int(out)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Row-major raster of class codes.

    ``data`` is stored read-only with shape ``(height, width)``.
    """

    data: np.ndarray
    palette: Palette = Palette.TISSUE

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionTooSmall(f"mask must be a non-empty 2-D raster, got shape {arr.shape}")
        palette = Palette(self.palette)
        bad = arr > max(palette.codes)
        if bad.any():
            offset = int(np.flatnonzero(bad.ravel())[0])
            raise IllegalClassCode(int(arr.ravel()[offset]), offset)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "palette", palette)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.palette is other.palette and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.palette, self.data.shape, self.data.tobytes()))

    def class_pixels(self, code: int) -> np.ndarray:
        return self.data == code

    def at(self, x: float, y: float, default: int = -1) -> int:
        """Class code of the pixel containing sub-pixel point (x, y)."""
        col, row = round_half_away(x), round_half_away(y)
        if 0 <= row < self.height and 0 <= col < self.width:
            return int(self.data[row, col])
        return default


@dataclass(frozen=True)
class ScanMeta:
    scale_x: float
    scale_y: float
    scan_index: int = 0

    def __post_init__(self):
        if not (self.scale_x > 0 and self.scale_y > 0) or not (
            math.isfinite(self.scale_x) and math.isfinite(self.scale_y)
        ):
            raise ValueError("pixel scales must be positive and finite")
        if not 0 <= self.scan_index < SCANS_PER_VOLUME:
            raise ValueError(f"scan_index must lie in [0, {SCANS_PER_VOLUME - 1}]")

    @property
    def radial_angle(self) -> float:
        return self.scan_index * DEGREES_PER_SCAN

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.scale_x, self.scale_y])


class Point(NamedTuple):
    x: float
    y: float

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteCoordinate(f"non-finite coordinate {v!r}")


@dataclass(frozen=True)
class SpurPair:
    left: Point
    right: Point
    conf_left: float = 1.0
    conf_right: float = 1.0

    def __post_init__(self):
        left, right = Point(*map(float, self.left)), Point(*map(float, self.right))
        _check_finite(*left, *right)
        if left.x >= right.x:
            raise LeftRightSwapped(f"left spur x={left.x} is not left of right spur x={right.x}")
        for c in (self.conf_left, self.conf_right):
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} outside [0, 1]")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def side(self, side: str) -> Point:
        return self.left if side == "L" else self.right

    def conf(self, side: str) -> float:
        return self.conf_left if side == "L" else self.conf_right


SIDES = ("L", "R")
SIDED_PARAMS = ("aod500", "aod750", "tisa500", "tisa750", "it750", "icurve")
GLOBAL_PARAMS = ("acw", "acd", "lv", "ac_area")


@dataclass(frozen=True)
class SideParams:
    aod500: float | None = None
    aod750: float | None = None
    tisa500: float | None = None
    tisa750: float | None = None
    it750: float | None = None
    icurve: float | None = None
    closed: frozenset = frozenset()

    def get(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class ParamSet:
    """The eight parameters of one scan; lengths in µm, areas in µm².

    Undefined values are ``None`` and carry an entry in ``reasons``.
    ``closed`` on each side lists angle parameters that were zeroed by
    iridotrabecular contact.
    """

    acw: float | None = None
    acd: float | None = None
    lv: float | None = None
    ac_area: float | None = None
    left: SideParams = field(default_factory=SideParams)
    right: SideParams = field(default_factory=SideParams)
    qc_pass: bool | None = None
    reasons: dict = field(default_factory=dict)

    def side(self, side: str) -> SideParams:
        return self.left if side == "L" else self.right

    def value(self, name: str) -> float | None:
        """Look up ``acw`` or a sided name such as ``aod500_L``."""
        if name in GLOBAL_PARAMS:
            return getattr(self, name)
        base, _, side = name.rpartition("_")
        return self.side(side).get(base)

    @staticmethod
    def columns() -> list[str]:
        cols = list(GLOBAL_PARAMS)
        for s in SIDES:
            cols += [f"{p}_{s}" for p in SIDED_PARAMS]
        return cols

    def as_row(self, digits: int | None = 1) -> dict[str, Any]:
        row = {}
        for col in self.columns():
            v = self.value(col)
            row[col] = None if v is None else (round(v, digits) if digits is not None else v)
        return row

    def with_qc(self, qc_pass: bool) -> "ParamSet":
        return ParamSet(self.acw, self.acd, self.lv, self.ac_area, self.left, self.right, qc_pass, self.reasons)

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": self.as_row(digits=None),
            "closed": {s: sorted(self.side(s).closed) for s in SIDES},
            "qc_pass": self.qc_pass,
            "reasons": dict(sorted(self.reasons.items())),
        }


# ---------------------------------------------------------------- P5 files


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("truncated header")
    return buf[start:pos], pos


def read_mask(path, palette: Palette | str = Palette.TISSUE, min_side: int = MIN_MASK_SIDE) -> LabelMask:
    """Read a binary 8-bit P5 greymap holding class codes."""
    palette = Palette(palette)
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if buf[:2] != b"P5":
        raise MalformedHeader("missing P5 magic")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise MalformedHeader(f"non-integer header field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise MalformedHeader(f"maxval must be 255, got {maxval}")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    if width < min_side or height < min_side:
        raise DimensionTooSmall(f"{width}x{height} is below the {min_side} px minimum")
    payload = buf[pos:]
    if len(payload) != width * height:
        raise MalformedHeader(f"expected {width * height} data bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8)
    legal = np.zeros(256, dtype=bool)
    legal[list(palette.codes)] = True
    bad = ~legal[data]
    if bad.any():
        offset = int(np.flatnonzero(bad)[0])
        raise IllegalClassCode(int(data[offset]), offset)
    return LabelMask(data.reshape(height, width), palette)


def write_mask(mask: LabelMask, path) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(mask.data).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# ------------------------------------------------------------------ spur CSV

SPUR_CSV_HEADER = ["scan", "side", "x", "y", "conf"]


def read_spur_csv(path) -> list[tuple[int, SpurPair]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    per_scan: dict[int, dict[str, tuple[float, float, float]]] = {}
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:4] != SPUR_CSV_HEADER[:4]:
            raise MalformedHeader(f"spur CSV header must start with scan,side,x,y: {reader.fieldnames}")
        for row in reader:
            scan = int(row["scan"])
            side = row["side"].strip().upper()
            if side not in SIDES:
                raise MalformedHeader(f"side must be L or R, got {row['side']!r}")
            x, y = float(row["x"]), float(row["y"])
            _check_finite(x, y)
            conf = row.get("conf")
            conf = 1.0 if conf in (None, "") else float(conf)
            per_scan.setdefault(scan, {})[side] = (x, y, conf)
    pairs = []
    for scan in sorted(per_scan):
        sides = per_scan[scan]
        for s in SIDES:
            if s not in sides:
                raise MissingSide(scan, s)
        (lx, ly, lc), (rx, ry, rc) = sides["L"], sides["R"]
        pairs.append((scan, SpurPair(Point(lx, ly), Point(rx, ry), lc, rc)))
    return pairs


def write_spur_csv(pairs, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SPUR_CSV_HEADER)
            for scan, sp in pairs:
                w.writerow([scan, "L", repr(sp.left.x), repr(sp.left.y), repr(sp.conf_left)])
                w.writerow([scan, "R", repr(sp.right.x), repr(sp.right.y), repr(sp.conf_right)])
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# ------------------------------------------------------------------ manifest


@dataclass(frozen=True)
class ScanEntry:
    index: int
    mask_path: Path
    spur: SpurPair | None = None
    landmark_left: Path | None = None
    landmark_right: Path | None = None


@dataclass(frozen=True)
class Manifest:
    scale_x_um: float
    scale_y_um: float
    scans: tuple[ScanEntry, ...]
    root: Path = Path(".")
    spur_csv: Path | None = None

    def meta(self, index: int) -> ScanMeta:
        return ScanMeta(self.scale_x_um, self.scale_y_um, index)


def _spur_from_json(obj) -> SpurPair:
    try:
        return SpurPair(
            Point(*obj["left"]), Point(*obj["right"]), float(obj.get("conf_left", 1.0)), float(obj.get("conf_right", 1.0))
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"bad spur entry {obj!r}") from exc


def spur_to_json(sp: SpurPair) -> dict:
    return {"left": [sp.left.x, sp.left.y], "right": [sp.right.x, sp.right.y],
            "conf_left": sp.conf_left, "conf_right": sp.conf_right}


def load_manifest(path) -> Manifest:
    """Load a scan manifest; relative paths resolve against its directory.

    Spur positions come from each scan's ``spur`` object or, when absent,
    from the optional top-level ``spur_csv``.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    root = path.parent
    try:
        sx, sy = float(doc["scale_x_um"]), float(doc["scale_y_um"])
    except (KeyError, TypeError, ValueError):
        raise ManifestError("manifest needs numeric scale_x_um and scale_y_um") from None
    if not (sx > 0 and sy > 0):
        raise ManifestError("pixel scales must be positive")

    def resolve(p):
        return None if p is None else (root / p)

    csv_spurs = {}
    spur_csv = resolve(doc.get("spur_csv"))
    if spur_csv is not None:
        csv_spurs = dict(read_spur_csv(spur_csv))
    scans = []
    seen = set()
    for item in doc.get("scans", []):
        try:
            idx = int(item["index"])
            mask_path = resolve(item["mask_path"])
        except (KeyError, TypeError, ValueError):
            raise ManifestError(f"scan entry needs index and mask_path: {item!r}") from None
        if idx in seen:
            raise ManifestError(f"duplicate scan index {idx}")
        if not 0 <= idx < SCANS_PER_VOLUME:
            raise ManifestError(f"scan index {idx} outside [0, {SCANS_PER_VOLUME - 1}]")
        seen.add(idx)
        spur = _spur_from_json(item["spur"]) if item.get("spur") else csv_spurs.get(idx)
        scans.append(
            ScanEntry(idx, mask_path, spur, resolve(item.get("landmark_left")), resolve(item.get("landmark_right")))
        )
    scans.sort(key=lambda s: s.index)
    return Manifest(sx, sy, tuple(scans), root, spur_csv)


def write_manifest(path, scale_x_um: float, scale_y_um: float, scans: list[dict], **extra) -> None:
    doc = {"scale_x_um": scale_x_um, "scale_y_um": scale_y_um, **extra, "scans": scans}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def relpath(p, start) -> str:
    return Path(os.path.relpath(p, start)).as_posix()
