"""Command-line entry point.

    asquant phantom  [--spec SPEC.json] [--sweep angle|--vary PATH --values JSON] [--corrupt I,J]
    asquant labels   --manifest M
    asquant quantify --manifest M [--workers N]
    asquant qc       --manifest M
    asquant metrics  (--pred DIR --ref DIR | --observers CSV)
    asquant volume   --manifest M [--workers N]
    asquant report   --in DIR

Every command writes into ``--out`` (default: $ASQUANT_OUTPUT_DIR, else
./asquant_out) and prints a JSON summary. Exit status: 0 ok, 1 data error,
2 configuration error. QC failures are results, not errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import metrics, phantom, volume
from .core import (
    CHAMBER,
    CORNEO_SCLERA,
    IRIS,
    TISSUE_NAMES,
    Manifest,
    Palette,
    ParamSet,
    ScanMeta,
    SpurPair,
    load_manifest,
    read_mask,
    relpath,
    spur_to_json,
    write_manifest,
    write_mask,
    write_spur_csv,
)
from .errors import AsquantError, ConfigError, DataError, InconsistentSpec, IoFailure
from .landmark import LandmarkLabelConfig, encode_landmark, mirror_x, spur_from_halves
from .params import QuantifyConfig, quantify_scan
from .qc import QCPolicy, QCReport, assess, failed_report

OUTPUT_ENV = "ASQUANT_OUTPUT_DIR"
CORRUPT_SPECKS = 12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "asquant_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy(args) -> QCPolicy:
    try:
        return QCPolicy(
            ssl_conf_threshold=args.ssl_threshold,
            max_contours={IRIS: args.max_iris, CHAMBER: args.max_chamber, CORNEO_SCLERA: args.max_sclera},
            min_contour_area=args.min_contour_area,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _landmark_cfg(args) -> LandmarkLabelConfig:
    try:
        return LandmarkLabelConfig(args.r_focus, args.r_attention, args.ref_square)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------- per scan


@dataclass(frozen=True)
class ScanJob:
    index: int
    mask_path: str
    spur: SpurPair | None
    landmark_left: str | None
    landmark_right: str | None
    meta: ScanMeta
    policy: QCPolicy
    landmark_cfg: LandmarkLabelConfig
    quantify_cfg: QuantifyConfig
    spur_source: str
    quantify: bool = True


@dataclass(frozen=True)
class ScanOutcome:
    result: volume.ScanResult
    seconds: float
    error: str | None = None


def _jobs(man: Manifest, args, quantify: bool = True) -> list[ScanJob]:
    qcfg = QuantifyConfig()
    out = []
    for e in man.scans:
        out.append(ScanJob(
            e.index, str(e.mask_path), e.spur,
            None if e.landmark_left is None else str(e.landmark_left),
            None if e.landmark_right is None else str(e.landmark_right),
            man.meta(e.index), _policy(args), _landmark_cfg(args), qcfg, args.spur_source, quantify,
        ))
    return out


def _spurs_for(job: ScanJob, width: int) -> SpurPair:
    use_landmarks = job.spur_source == "landmarks" or (
        job.spur_source == "auto" and job.landmark_left and job.landmark_right
    )
    if use_landmarks:
        if not (job.landmark_left and job.landmark_right):
            raise DataError(f"scan {job.index}: no landmark predictions in the manifest")
        left = read_mask(job.landmark_left, Palette.LANDMARK)
        right = read_mask(job.landmark_right, Palette.LANDMARK)
        pl, pr, cl, cr = spur_from_halves(left, right, width, job.landmark_cfg)
        return SpurPair(pl, pr, cl, cr)
    if job.spur is None:
        raise DataError(f"scan {job.index}: no spur positions")
    return job.spur


def run_scan(job: ScanJob) -> ScanOutcome:
    """Read, gate and (optionally) quantify one scan; never raises on data errors."""
    t0 = time.perf_counter()
    try:
        mask = read_mask(job.mask_path, Palette.TISSUE)
        spurs = _spurs_for(job, mask.width)
        report = assess(mask, spurs, job.policy)
        params = quantify_scan(mask, spurs, job.meta, job.quantify_cfg) if job.quantify else ParamSet()
        res = volume.ScanResult(job.index, params.with_qc(report.overall_pass), report, spurs)
        return ScanOutcome(res, time.perf_counter() - t0)
    except AsquantError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        res = volume.ScanResult(job.index, ParamSet(qc_pass=False, reasons={"scan": msg}), failed_report(msg))
        return ScanOutcome(res, time.perf_counter() - t0, msg)


def run_scans(jobs: list[ScanJob], workers: int) -> list[ScanOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_scan(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_scan, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _params_csv(outcomes) -> str:
    cols = ParamSet.columns()
    rows = []
    for o in outcomes:
        p = o.result.params
        row = p.as_row(1)
        closed = ";".join(f"{k}_{s}" for s in ("L", "R") for k in sorted(p.side(s).closed))
        rows.append([o.result.scan_index] + ["" if row[c] is None else f"{row[c]:.1f}" for c in cols]
                    + ["true" if o.result.passed else "false", closed])
    return _csv_text(["scan"] + cols + ["qc_pass", "closed"], rows)


def _qc_csv(outcomes) -> str:
    names = [TISSUE_NAMES[c] for c in sorted(TISSUE_NAMES)]
    rows = []
    for o in outcomes:
        q = o.result.qc
        sp = o.result.spurs
        rows.append([
            o.result.scan_index,
            "" if sp is None else f"{sp.conf_left:.4f}",
            "" if sp is None else f"{sp.conf_right:.4f}",
            str(q.ssl_pass_left).lower(), str(q.ssl_pass_right).lower(),
            *[q.contour_counts.get(c, 0) for c in sorted(TISSUE_NAMES)],
            str(q.contour_pass).lower(), str(q.overall_pass).lower(), ";".join(q.reasons),
        ])
    header = ["scan", "conf_left", "conf_right", "ssl_pass_left", "ssl_pass_right",
              *[f"contours_{n}" for n in names], "contour_pass", "overall_pass", "reasons"]
    return _csv_text(header, rows)


def _timing(outcomes) -> dict:
    secs = [o.seconds for o in outcomes]
    return {
        "per_scan_seconds": {str(o.result.scan_index): round(o.seconds, 4) for o in outcomes},
        "mean_seconds": sum(secs) / len(secs) if secs else None,
        "max_seconds": max(secs) if secs else None,
    }


def _errors(outcomes) -> dict:
    return {str(o.result.scan_index): o.error for o in outcomes if o.error}


# ------------------------------------------------------------ commands


def cmd_phantom(args) -> tuple[dict, int]:
    out = _out_dir(args)
    base = phantom.SWEEP_BASE if args.sweep == "angle" else phantom.PhantomSpec()
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read phantom spec: {exc}") from exc
        try:
            base = phantom.spec_from_json(doc)
        except TypeError as exc:
            raise ConfigError(f"bad phantom spec: {exc}") from exc
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    if args.sweep == "angle":
        specs = phantom.angle_sweep(base, n=args.n)
    elif args.vary:
        try:
            values = json.loads(args.values)
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--values must be a JSON list: {exc}") from exc
        vary = tuple(args.vary.split(",")) if "," in args.vary else args.vary
        specs = phantom.sweep(base, vary, values)
    else:
        phantom.ground_truth(base)
        specs = [(0, base)]
    corrupt = set()
    if args.corrupt:
        corrupt = {int(v) for v in args.corrupt.split(",") if v.strip()}
        bad = corrupt - {i for i, _ in specs}
        if bad:
            raise ConfigError(f"--corrupt indices not in the sweep: {sorted(bad)}")
    cfg = _landmark_cfg(args)
    scans, spurs, truth = [], [], {}
    for i, spec in specs:
        if i in corrupt:
            spec = replace(spec, noise=phantom.NoiseSpec(CORRUPT_SPECKS, 3, CORNEO_SCLERA), seed=spec.seed + i)
        ph = phantom.generate(spec, cfg)
        mp = out / "masks" / f"scan_{i:03d}.pgm"
        ll = out / "landmarks" / f"scan_{i:03d}_L.pgm"
        lr = out / "landmarks" / f"scan_{i:03d}_R.pgm"
        for m, p in ((ph.tissue, mp), (ph.landmark_left, ll), (ph.landmark_right, lr)):
            p.parent.mkdir(parents=True, exist_ok=True)
            write_mask(m, p)
        spurs.append((i, ph.spurs))
        truth[str(i)] = {"spec": spec.to_dict(), **ph.truth.to_dict()}
        scans.append({"index": i, "mask_path": relpath(mp, out), "spur": spur_to_json(ph.spurs),
                      "landmark_left": relpath(ll, out), "landmark_right": relpath(lr, out)})
    first = specs[0][1] if specs else base
    write_spur_csv(spurs, out / "spurs.csv")
    _write(out / "ground_truth.json", _dump(truth))
    write_manifest(out / "manifest.json", first.scale_x, first.scale_y, scans, spur_csv="spurs.csv")
    return {"command": "phantom", "scans": len(scans), "corrupt": sorted(corrupt),
            "manifest": str(out / "manifest.json")}, 0


def cmd_labels(args) -> tuple[dict, int]:
    out = _out_dir(args)
    man = load_manifest(args.manifest)
    cfg = _landmark_cfg(args)
    written, scans, errors = 0, [], {}
    for e in man.scans:
        if e.spur is None:
            errors[str(e.index)] = "no spur positions"
            continue
        try:
            w, h = _mask_size(e.mask_path)
            wl = (w + 1) // 2
            left = encode_landmark((wl, h), e.spur.left, cfg)
            right = encode_landmark((w - wl, h), (mirror_x(e.spur.right.x, w), e.spur.right.y), cfg)
        except AsquantError as exc:
            errors[str(e.index)] = f"{type(exc).__name__}: {exc}"
            continue
        ll = out / "labels" / f"scan_{e.index:03d}_L.pgm"
        lr = out / "labels" / f"scan_{e.index:03d}_R.pgm"
        ll.parent.mkdir(parents=True, exist_ok=True)
        write_mask(left, ll)
        write_mask(right, lr)
        written += 1
        scans.append({"index": e.index, "mask_path": relpath(e.mask_path, out), "spur": spur_to_json(e.spur),
                      "landmark_left": relpath(ll, out), "landmark_right": relpath(lr, out)})
    write_manifest(out / "manifest.json", man.scale_x_um, man.scale_y_um, scans)
    summary = {"command": "labels", "scans": written, "errors": errors}
    return summary, 1 if errors else 0


def _mask_size(path) -> tuple[int, int]:
    m = read_mask(path, Palette.TISSUE)
    return m.width, m.height


def _scan_command(args, name: str, quantify: bool) -> tuple[list[ScanOutcome], Path]:
    out = _out_dir(args)
    man = load_manifest(args.manifest)
    outcomes = run_scans(_jobs(man, args, quantify), args.workers)
    return outcomes, out


def cmd_quantify(args) -> tuple[dict, int]:
    outcomes, out = _scan_command(args, "quantify", True)
    _write(out / "params.csv", _params_csv(outcomes))
    report = {str(o.result.scan_index): o.result.params.to_dict() for o in outcomes}
    _write(out / "params.json", _dump(report))
    _write(out / "timing.json", _dump(_timing(outcomes)))
    errors = _errors(outcomes)
    return {"command": "quantify", "scans": len(outcomes), "errors": errors,
            "mean_seconds_per_scan": _timing(outcomes)["mean_seconds"]}, 1 if errors else 0


def cmd_qc(args) -> tuple[dict, int]:
    outcomes, out = _scan_command(args, "qc", False)
    _write(out / "qc.csv", _qc_csv(outcomes))
    passing = sum(1 for o in outcomes if o.result.passed)
    errors = _errors(outcomes)
    summary = {"command": "qc", "scans": len(outcomes), "passing": passing,
               "failing": [o.result.scan_index for o in outcomes if not o.result.passed], "errors": errors}
    _write(out / "qc.json", _dump(summary))
    return summary, 1 if errors else 0


def cmd_volume(args) -> tuple[dict, int]:
    outcomes, out = _scan_command(args, "volume", True)
    rep = volume.aggregate([o.result for o in outcomes], _policy(args))
    _write(out / "params.csv", _params_csv(outcomes))
    _write(out / "qc.csv", _qc_csv(outcomes))
    for p in volume.GONIO_PARAMS:
        _write(out / f"goniogram_{p}.csv", volume.goniogram_csv(rep, p))
    _write(out / "confidence_polar.csv", volume.confidence_polar_csv(rep))
    _write(out / "timing.json", _dump(_timing(outcomes)))
    errors = _errors(outcomes)
    summary = {"command": "volume", **rep.to_dict(), "errors": errors}
    _write(out / "volume.json", _dump(summary))
    # wall time goes to stdout and timing.json only, keeping volume.json reproducible
    return {**summary, "mean_seconds_per_scan": _timing(outcomes)["mean_seconds"]}, 1 if errors else 0


def _mask_files(d: Path) -> dict:
    if not d.is_dir():
        raise ConfigError(f"not a directory: {d}")
    return {p.name: p for p in sorted(d.glob("*.pgm"))}


def cmd_metrics(args) -> tuple[dict, int]:
    out = _out_dir(args)
    summary: dict = {"command": "metrics"}
    if not (args.pred and args.ref) and not args.observers:
        raise ConfigError("metrics needs --pred and --ref, or --observers")
    if args.pred or args.ref:
        if not (args.pred and args.ref):
            raise ConfigError("--pred and --ref go together")
        pred, ref = _mask_files(Path(args.pred)), _mask_files(Path(args.ref))
        common = sorted(set(pred) & set(ref))
        rows = []
        for name in common:
            a, b = read_mask(pred[name], Palette.TISSUE), read_mask(ref[name], Palette.TISSUE)
            for code in sorted(TISSUE_NAMES):
                tp, fp, fn, tn = metrics.confusion(a, b, code)
                sens = "" if tp + fn == 0 else f"{tp / (tp + fn):.6f}"
                spec = "" if tn + fp == 0 else f"{tn / (tn + fp):.6f}"
                rows.append([name, TISSUE_NAMES[code], f"{metrics.dice(a, b, code):.6f}", sens, spec])
        _write(out / "overlap.csv", _csv_text(["mask", "class", "dice", "sensitivity", "specificity"], rows))
        summary["masks"] = len(common)
        summary["unmatched"] = sorted(set(pred) ^ set(ref))
    if args.observers:
        try:
            with open(args.observers, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                triples = [(r["subject"], r["rater"], float(r["value"])) for r in reader]
        except OSError as exc:
            raise ConfigError(f"cannot read observer table: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise DataError(f"observer table needs subject,rater,value columns: {exc}") from exc
        try:
            m = metrics.ObserverMatrix.from_long(triples)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        agreement = metrics.agreement_summary(m)
        _write(out / "agreement.json", _dump(agreement))
        summary["agreement"] = agreement
    return summary, 0


def cmd_report(args) -> tuple[dict, int]:
    src = Path(args.input)
    try:
        vol = json.loads((src / "volume.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"no readable volume.json in {src}: {exc}") from exc
    lines = [
        "# Volume report",
        "",
        f"Scans: {vol['scans']}, passing: {vol['passing']}, excluded: {vol['excluded']}",
    ]
    if vol.get("excluded_indices"):
        lines.append(f"Excluded scans: {', '.join(map(str, vol['excluded_indices']))}")
    if vol.get("missing_indices"):
        lines.append(f"Missing scans: {', '.join(map(str, vol['missing_indices']))}")
    lines += ["", "| quadrant | " + " | ".join(volume.GONIO_PARAMS) + " |",
              "|---" * (len(volume.GONIO_PARAMS) + 1) + "|"]
    for q in volume.QUADRANTS:
        vals = vol["quadrant_means"][q]
        cells = ["" if vals[p] is None else f"{vals[p]:.1f}" for p in volume.GONIO_PARAMS]
        lines.append(f"| {q} | " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or src)
    _write(out / "report.md", text)
    return {"command": "report", "report": str(out / "report.md")}, 0


# ------------------------------------------------------------ parsing


def _add_qc_flags(p):
    d = QCPolicy()
    p.add_argument("--ssl-threshold", type=float, default=d.ssl_conf_threshold)
    p.add_argument("--max-iris", type=int, default=d.max_contours[IRIS])
    p.add_argument("--max-chamber", type=int, default=d.max_contours[CHAMBER])
    p.add_argument("--max-sclera", type=int, default=d.max_contours[CORNEO_SCLERA])
    p.add_argument("--min-contour-area", type=int, default=d.min_contour_area)


def _add_landmark_flags(p):
    d = LandmarkLabelConfig()
    p.add_argument("--r-focus", type=float, default=d.r_focus)
    p.add_argument("--r-attention", type=float, default=d.r_attention)
    p.add_argument("--ref-square", type=int, default=None, help="reference square side (default: equal-area)")


def _positive_int(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asquant", description="Anterior-segment OCT mask quantification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./asquant_out)")
        p.set_defaults(func=fn)
        return p

    p = add("phantom", cmd_phantom, "generate phantom masks, spurs and ground truth")
    p.add_argument("--spec", help="phantom spec JSON (default: built-in spec)")
    p.add_argument("--sweep", choices=["angle"], help="128-step sinusoidal iris-angle sweep")
    p.add_argument("--n", type=_positive_int, default=128, help="scans in the angle sweep")
    p.add_argument("--vary", help="dotted spec field(s) to sweep, comma separated")
    p.add_argument("--values", help="JSON list of values for --vary")
    p.add_argument("--corrupt", help="comma-separated scan indices to corrupt with sclera specks")
    p.add_argument("--seed", type=int, default=None)
    _add_landmark_flags(p)

    p = add("labels", cmd_labels, "write landmark label masks from spur positions")
    p.add_argument("--manifest", required=True)
    _add_landmark_flags(p)

    for name, fn, help_ in (
        ("quantify", cmd_quantify, "compute the eight parameters per scan"),
        ("qc", cmd_qc, "run the quality gate per scan"),
        ("volume", cmd_volume, "quantify, gate and aggregate a 360-degree volume"),
    ):
        p = add(name, fn, help_)
        p.add_argument("--manifest", required=True)
        p.add_argument("--workers", type=_positive_int, default=1)
        p.add_argument("--spur-source", choices=["auto", "manifest", "landmarks"], default="auto",
                       help="auto: decode landmark predictions when the manifest lists them")
        _add_qc_flags(p)
        _add_landmark_flags(p)

    p = add("metrics", cmd_metrics, "overlap and observer-agreement statistics")
    p.add_argument("--pred", help="directory of predicted tissue masks")
    p.add_argument("--ref", help="directory of reference tissue masks (matched by file name)")
    p.add_argument("--observers", help="CSV with subject,rater,value columns")

    p = add("report", cmd_report, "render a markdown summary of a volume run")
    p.add_argument("--in", dest="input", required=True, help="directory holding volume.json")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        summary, status = args.func(args)
    except ConfigError as exc:
        print(f"asquant: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        code = 2 if isinstance(exc, InconsistentSpec) else 1
        print(f"asquant: {'configuration' if code == 2 else 'data'} error: {exc}", file=sys.stderr)
        return code
    print(json.dumps(summary, indent=2, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
