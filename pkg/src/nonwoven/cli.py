"""Batch command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on data/processing errors
(the exception class name is printed on stderr). Output files are written
only after the whole command has succeeded.

Arguments may be read from a file with ``@path``; each non-comment line
holds one or more whitespace-separated arguments.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from typing import Dict, List, Optional

import numpy as np

from . import defectnet, imgcore, orientation, pilling, porepsd, roughness, synthgen
from .errors import NonwovenError, ParseError
from .imgcore import BinaryImage, GrayImage


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")

    def convert_arg_line_to_args(self, arg_line):
        line = arg_line.split("#", 1)[0]
        return line.split()


class Outputs:
    """Artifacts staged in memory and flushed together."""

    def __init__(self):
        self.files: Dict[str, bytes] = {}
        self.stdout: List[str] = []

    def text(self, path: Optional[str], content: str):
        if path is None or path == "-":
            self.stdout.append(content)
        else:
            self.files[path] = content.encode("utf-8")

    def binary(self, path: str, content: bytes):
        self.files[path] = content

    def flush(self):
        for path, data in self.files.items():
            with open(path, "wb") as fh:
                fh.write(data)
        for chunk in self.stdout:
            sys.stdout.write(chunk)


# ------------------------------------------------------------- helpers

def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _angles(text: str):
    out = []
    for part in text.split(","):
        try:
            a, w = part.split(":") if ":" in part else (part, "1")
            out.append((float(a), float(w)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected angle[:weight] list, got {text!r}")
    return out


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _read_gray(path, pitch=None) -> GrayImage:
    return imgcore.read_pgm(path, pitch)


def _read_binary(path, pitch=None) -> BinaryImage:
    img = _read_gray(path, pitch)
    return BinaryImage(img.pixels > 127, pitch)


def _binary_pgm(bits) -> bytes:
    b = bits.bits if isinstance(bits, BinaryImage) else bits
    return imgcore.save_pgm(GrayImage(np.where(b, 255, 0).astype(np.uint8)))


def _dist_csv(dist) -> str:
    return _csv(["angle_bin_start_deg", "weight"], zip(dist.starts, dist.weights))


# ------------------------------------------------------------- commands

def cmd_synth(a, out: Outputs):
    if a.kind == "web":
        lo, hi = a.length
        spec = synthgen.WebSpec(a.width, a.height, a.lines, a.angles, (lo, hi), a.thickness,
                                a.curvature, a.seed)
        img, truth = synthgen.gen_fiber_web(spec)
        if a.truth:
            out.text(a.truth, _json({"lines": [
                {"angle": l.angle, "arc_length": l.arc_length, "endpoints": l.endpoints,
                 "clipped": l.clipped} for l in truth.lines]}))
    elif a.kind == "surface":
        hm = synthgen.gen_ideal_surface(a.wavelength, a.amplitude, a.dpi, a.width, a.height)
        if a.noise:
            hm = synthgen.gen_noisy_surface(hm, a.noise, a.seed)
        img = roughness.height_to_gray(hm)
    elif a.kind == "pilled":
        img = synthgen.gen_pilled_texture(a.seed, a.grade, a.width, a.height)
    elif a.kind == "defect":
        img = synthgen.gen_defect_web(a.defect, a.seed, a.width, a.height)
    else:
        med, truth = synthgen.gen_pore_medium(a.seed, a.width, a.height, a.pitch, a.radii, a.count)
        img = synthgen.render_medium(med, a.seed, speck_fraction=a.specks) if a.render else None
        if a.truth:
            out.text(a.truth, _json({"pores_mm": truth.pores, "porosity_2d": truth.porosity_2d}))
        if img is None:
            out.binary(a.output, _binary_pgm(med))
            return
    out.binary(a.output, imgcore.save_pgm(img))


def cmd_roughness(a, out: Outputs):
    pitch = 25.4 / a.dpi
    img = _read_gray(a.input, pitch)
    if not a.raw:
        img = roughness.preprocess_scan(img, a.sigma, a.window)
    hm = roughness.to_height_map(img, a.h_max)
    crit = roughness.profile_criteria(img, hm)
    ideal = roughness.ideal_criteria(img.width, img.height, pitch, a.h_max)
    rs = roughness.surface_roughness(crit, ideal, a.weights)
    names = ("N", "T", "E", "I_d", "V")
    out.text(a.output, _json({
        "criteria": dict(zip(names, crit.vector())), "degenerate": crit.degenerate,
        "ideal": dict(zip(names, ideal.vector())), "R_s": rs}))
    if a.peaks:
        out.text(a.peaks, _csv(["x", "y", "height_um"], roughness.detect_peaks(hm)))


def cmd_regress(a, out: Outputs):
    if a.data:
        data = []
        with open(a.data) as fh:
            rows = [ln.strip() for ln in fh if ln.strip()]
        for ln in rows[1:]:
            try:
                x, y = ln.split(",")[:2]
                data.append(roughness.FrictionRecord(float(x), float(y)))
            except ValueError:
                raise ParseError(f"bad regression row {ln!r}") from None
    else:
        data = roughness.table1_dataset()
    slope, intercept, r = roughness.fit_friction_regression(data)
    out.text(a.output, _csv(["slope", "intercept", "r", "n"], [(slope, intercept, r, len(data))]))
    sys.stderr.write(f"r^2 = {r * r:.6f}\n")


def cmd_orient(a, out: Outputs):
    img = _read_gray(a.input)
    if a.variant:
        base, var, l1 = orientation.study_effects(img, a.variant, a.bins, a.offset)
        out.text(a.output, _csv(["angle_bin_start_deg", "baseline", "variant"],
                                zip(base.starts, base.weights, var.weights)))
        sys.stderr.write(f"L1 = {l1!r}\n")
        return
    if a.method == "fft":
        dist = orientation.angular_distribution(orientation.fft2(img), a.bins)
    else:
        bits = BinaryImage(img.pixels > a.threshold)
        if a.plain:
            acc = orientation.hough_transform(bits, a.delta_rho, a.delta_theta)
            lines = orientation.hough_peaks(acc, a.max_lines, tuple(a.nms), a.min_support)
            lines = orientation.estimate_line_lengths(bits, lines, a.band)
        else:
            lines = orientation.progressive_lines(bits, a.max_lines, a.min_support, a.band,
                                                  delta_rho=a.delta_rho,
                                                  delta_theta=a.delta_theta)
        dist = orientation.orientation_from_hough(lines, a.bins, a.weighting)
        if a.lines:
            out.text(a.lines, _csv(["rho", "theta_deg", "support", "estimated_length"],
                                   [(l.rho, l.theta, l.support, l.estimated_length)
                                    for l in lines]))
    out.text(a.output, _dist_csv(dist))


def cmd_pilling(a, out: Outputs):
    if a.action == "calibrate":
        samples = []
        for item in a.sample:
            g, _, path = item.partition(":")
            if not path or not g.isdigit():
                raise UsageError(f"--sample expects GRADE:PATH, got {item!r}")
            samples.append((int(g), _read_gray(path)))
        cal = pilling.calibrate(samples, a.level)
        out.text(a.output, cal.to_text())
    elif a.action == "grade":
        with open(a.calibration) as fh:
            cal = pilling.PillingCalibration.from_text(fh.read())
        img = _read_gray(a.input)
        sd = pilling.sd_approx(img, cal.level)
        out.text(a.output, _json({"sdca": sd, "level": cal.level,
                                  "grade": pilling.grade_from_sd(sd, cal)}))
    elif a.action == "sdca":
        img = _read_gray(a.input)
        rows = [(i, c.width, c.height, pilling.sd_approx(c, a.level))
                for i, c in enumerate(pilling.crop_augment(img) if a.augment else [img])]
        out.text(a.output, _csv(["crop", "width", "height", "sdca"], rows))
    else:  # dwt
        img = _read_gray(a.input)
        dec = pilling.wavedec2(img.pixels, a.level)
        rows = []
        for k, bands in enumerate(dec.levels, 1):
            for name, c in zip(("cA", "cH", "cV", "cD"), bands):
                rows.append((k, name, c.shape[1], c.shape[0], float(np.std(c)),
                             float((c ** 2).sum())))
        out.text(a.output, _csv(["level", "band", "width", "height", "sd", "energy"], rows))


def _feature_rows(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    data = []
    for ln in lines[1:]:
        parts = ln.split(",")
        try:
            data.append((defectnet.FeatureVector(*map(float, parts[:5])), parts[5].strip()))
        except (ValueError, IndexError, TypeError):
            raise ParseError(f"bad feature row {ln!r}") from None
    return data


FEATURE_HEADER = ["mean_gray", "variance_gray", "std_gray", "density_pct", "fractal_dim"]


def cmd_defect(a, out: Outputs):
    if a.action == "features":
        rows = []
        for path in a.inputs:
            f = defectnet.extract_features(_read_gray(path))
            rows.append(tuple(f) + ((a.label,) if a.label else ()))
        out.text(a.output, _csv(FEATURE_HEADER + (["class"] if a.label else []), rows))
    elif a.action == "fractal":
        bits = _read_binary(a.input)
        sizes, counts = defectnet.box_counts(defectnet.pow2_square(bits))
        out.text(a.output, _csv(["box_size", "count"], zip(sizes, counts)))
        sys.stderr.write(f"D = {defectnet.box_count_dimension(bits)!r}\n")
    elif a.action == "train":
        data = _feature_rows(a.data) if a.data else defectnet.table3_clusters(a.clusters, a.seed)
        net, rep = defectnet.mlp_train(data, a.hidden, a.lr, a.epochs, a.seed)
        out.text(a.output, net.to_text())
        if a.curve:
            out.text(a.curve, _csv(["epoch", "mse"], enumerate(rep.mse_curve, 1)))
    else:
        with open(a.network) as fh:
            net = defectnet.MlpNetwork.from_text(fh.read())
        if a.features:
            f = a.features
            if len(f) != 5:
                raise UsageError("--features needs five values")
        else:
            f = defectnet.extract_features(_read_gray(a.input))
        name, code, conf = defectnet.mlp_classify(net, f)
        out.text(a.output, _json({"class": name, "code": code, "confidences": conf}))


def cmd_pores(a, out: Outputs):
    img = _read_gray(a.input, a.pitch)
    se = porepsd.StructuringElement(a.se)
    if a.binary:
        bits = porepsd.denoise(BinaryImage(img.pixels > 127, a.pitch), se)
    else:
        bits = porepsd.segment_fibers(img, se, a.edge)
    if a.mode == "planar":
        grid = porepsd.single_band_grid(bits)
    else:
        grid = porepsd.build_slicing_grid(bits, a.thickness, se)
    sizes = porepsd.measure_pore_openings(bits, grid)
    curve = porepsd.psd_curve(sizes)
    report = {"O50_mm": porepsd.percentile(curve, 50), "O95_mm": porepsd.percentile(curve, 95),
              "planar_porosity": porepsd.planar_porosity(bits),
              "slice_count": grid.slice_count, "offset": grid.offset,
              "fiber_thickness_px": grid.fiber_thickness,
              "longitudinal_porosity": porepsd.longitudinal_porosity(bits, grid)}
    if a.geotextile:
        g = porepsd.TABLE4[a.geotextile]
        report["reference"] = g._asdict()
    out.text(a.output, _json(report))
    if a.psd:
        out.text(a.psd, _csv(["size_mm", "cumulative_fraction"], zip(curve.sizes, curve.cumulative)))
    if a.mask:
        out.binary(a.mask, _binary_pgm(bits))


def cmd_img(a, out: Outputs):
    op = a.op
    if op == "median1d":
        with open(a.input) as fh:
            series = [float(ln) for ln in fh.read().split()]
        res = imgcore.median_filter_1d(series, a.window)
        out.text(a.output, "\n".join(_fmt(v) for v in res) + "\n")
        return
    if op in ("skeleton", "prune", "erode", "dilate", "open", "close", "denoise", "hough",
              "thickness"):
        bits = _read_binary(a.input)
        se = porepsd.StructuringElement(a.se)
        if op == "hough":
            acc = orientation.hough_transform(bits, a.delta_rho, a.delta_theta)
            lines = orientation.hough_peaks(acc, a.max_lines, (a.nms, a.nms), a.min_support)
            out.text(a.output, _csv(["rho", "theta_deg", "support"],
                                    [(l.rho, l.theta, l.support) for l in lines]))
            return
        if op == "thickness":
            out.text(a.output, f"{porepsd.estimate_fiber_thickness(bits)!r}\n")
            return
        res = {"skeleton": lambda: imgcore.skeletonize(bits),
               "prune": lambda: imgcore.prune(imgcore.skeletonize(bits), a.min_branch),
               "erode": lambda: porepsd.erode(bits, se), "dilate": lambda: porepsd.dilate(bits, se),
               "open": lambda: porepsd.opening(bits, se), "close": lambda: porepsd.closing(bits, se),
               "denoise": lambda: porepsd.denoise(bits, se)}[op]()
        out.binary(a.output, _binary_pgm(res))
        return
    img = _read_gray(a.input)
    if op == "histogram":
        out.text(a.output, _csv(["level", "count"], enumerate(imgcore.histogram(img).counts)))
    elif op == "chow-kaneko":
        out.text(a.output, f"{imgcore.chow_kaneko_threshold(imgcore.histogram(img))}\n")
    elif op == "threshold":
        out.binary(a.output, _binary_pgm(imgcore.global_threshold(img, a.t, a.foreground)))
    elif op == "fft":
        spec = orientation.fft2(img)
        m = spec.magnitudes
        rows = [(u, v, m[v, u]) for v in range(m.shape[0]) for u in range(m.shape[1])]
        out.text(a.output, _csv(["u", "v", "magnitude"], rows))
    else:
        res = {"equalize": lambda: imgcore.equalize_histogram(img),
               "gaussian": lambda: imgcore.gaussian_filter(img, a.sigma),
               "wiener": lambda: imgcore.wiener_filter(img, a.window),
               "edges": lambda: imgcore.edge_magnitude(img)}[op]()
        out.binary(a.output, imgcore.save_pgm(res))


# --------------------------------------------------------------- parser

IMG_OPS = ("histogram", "equalize", "gaussian", "wiener", "threshold", "chow-kaneko", "median1d",
           "edges", "skeleton", "prune", "erode", "dilate", "open", "close", "denoise", "fft",
           "hough", "thickness")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nonwoven", fromfile_prefix_chars="@",
                description="Image analysis of nonwoven fabrics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic test image")
    s.add_argument("kind", choices=("web", "surface", "pilled", "defect", "pores"))
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=256)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--lines", type=int, default=100)
    s.add_argument("--angles", type=_angles, default=[(0.0, 1.0)])
    s.add_argument("--length", type=float, nargs=2, default=(20.0, 60.0), metavar=("MIN", "MAX"))
    s.add_argument("--thickness", type=int, default=1)
    s.add_argument("--curvature", type=float, default=0.0)
    s.add_argument("--wavelength", type=float, default=1.0)
    s.add_argument("--amplitude", type=float, default=2.5)
    s.add_argument("--dpi", type=float, default=600.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--grade", type=int, default=5)
    s.add_argument("--defect", choices=synthgen.DEFECT_KINDS, default="non_defect")
    s.add_argument("--pitch", type=float, default=porepsd.PLANAR_PITCH_MM)
    s.add_argument("--radii", type=_floats, default=[0.05])
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--render", action="store_true", help="grayscale back-lit rendering")
    s.add_argument("--specks", type=float, default=0.0)
    s.add_argument("--truth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("roughness", help="profile criteria and R_s of a scan")
    s.add_argument("input")
    s.add_argument("-o", "--output")
    s.add_argument("--dpi", type=float, default=600.0)
    s.add_argument("--h-max", type=float, default=roughness.DEFAULT_H_MAX)
    s.add_argument("--weights", type=_floats, default=list(roughness.DEFAULT_WEIGHTS))
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--raw", action="store_true", help="skip blur/denoise/equalize")
    s.add_argument("--peaks")
    s.set_defaults(func=cmd_roughness)

    s = sub.add_parser("regress", help="friction vs roughness OLS")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--table1", action="store_true", help="embedded 30-row dataset (default)")
    g.add_argument("--data", help="CSV with header and columns R_s,mu")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("orient", help="fiber orientation distribution")
    s.add_argument("input")
    s.add_argument("-o", "--output")
    s.add_argument("--method", choices=("fft", "hough"), default="fft")
    s.add_argument("--bins", type=int, default=18)
    s.add_argument("--threshold", type=float, default=127)
    s.add_argument("--delta-rho", type=float, default=1.0)
    s.add_argument("--delta-theta", type=float, default=1.0)
    s.add_argument("--max-lines", type=int, default=400)
    s.add_argument("--min-support", type=int, default=15)
    s.add_argument("--nms", type=int, nargs=2, default=(4, 4), metavar=("RHO", "THETA"))
    s.add_argument("--band", type=float, default=1.0)
    s.add_argument("--weighting", choices=("by_length", "by_count"), default="by_length")
    s.add_argument("--plain", action="store_true", help="one-shot peaks instead of progressive")
    s.add_argument("--lines")
    s.add_argument("--variant", choices=orientation.VARIANTS)
    s.add_argument("--offset", type=float, default=40.0)
    s.set_defaults(func=cmd_orient)

    s = sub.add_parser("pilling", help="wavelet pilling grade")
    s.add_argument("action", choices=("calibrate", "grade", "sdca", "dwt"))
    s.add_argument("input", nargs="?")
    s.add_argument("-o", "--output")
    s.add_argument("--level", type=int, default=pilling.DEFAULT_LEVEL)
    s.add_argument("--sample", action="append", default=[], metavar="GRADE:PATH")
    s.add_argument("--calibration")
    s.add_argument("--augment", action="store_true")
    s.set_defaults(func=cmd_pilling)

    s = sub.add_parser("defect", help="defect features and classifier")
    s.add_argument("action", choices=("features", "fractal", "train", "classify"))
    s.add_argument("inputs", nargs="*")
    s.add_argument("-o", "--output")
    s.add_argument("--label", choices=defectnet.CLASSES)
    s.add_argument("--data")
    s.add_argument("--clusters", type=int, default=50, help="synthetic samples per class")
    s.add_argument("--hidden", type=_ints, default=list(defectnet.DEFAULT_HIDDEN))
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--epochs", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--curve")
    s.add_argument("--network")
    s.add_argument("--features", type=_floats)
    s.set_defaults(func=cmd_defect)

    s = sub.add_parser("pores", help="porosity and pore-size distribution")
    s.add_argument("mode", choices=("planar", "cross"))
    s.add_argument("input")
    s.add_argument("-o", "--output")
    s.add_argument("--pitch", type=float)
    s.add_argument("--se", type=int)
    s.add_argument("--thickness", type=float, help="physical thickness in mm (cross)")
    s.add_argument("--binary", action="store_true", help="input is already a fiber mask")
    s.add_argument("--edge", action="store_true", help="threshold the edge magnitude")
    s.add_argument("--geotextile", choices=sorted(porepsd.TABLE4))
    s.add_argument("--psd")
    s.add_argument("--mask")
    s.set_defaults(func=cmd_pores)

    s = sub.add_parser("img", help="single image-processing operation")
    s.add_argument("op", choices=IMG_OPS)
    s.add_argument("input")
    s.add_argument("-o", "--output")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--t", type=float, default=127)
    s.add_argument("--foreground", choices=("above", "below"), default="above")
    s.add_argument("--se", type=int, default=2)
    s.add_argument("--min-branch", type=int, default=5)
    s.add_argument("--delta-rho", type=float, default=1.0)
    s.add_argument("--delta-theta", type=float, default=1.0)
    s.add_argument("--max-lines", type=int, default=10)
    s.add_argument("--nms", type=int, default=4)
    s.add_argument("--min-support", type=int, default=1)
    s.set_defaults(func=cmd_img)
    return p


def _validate(a):
    need_out = {"synth", "img"}
    if a.command in need_out and a.output in (None, "-") and not (
            a.command == "img" and a.op in ("histogram", "chow-kaneko", "median1d", "fft",
                                           "hough", "thickness")):
        raise UsageError(f"{a.command}: --output is required")
    if a.command == "pilling":
        if a.action in ("grade", "sdca", "dwt") and not a.input:
            raise UsageError(f"pilling {a.action}: input image required")
        if a.action == "grade" and not a.calibration:
            raise UsageError("pilling grade: --calibration required")
    if a.command == "defect":
        if a.action in ("features",) and not a.inputs:
            raise UsageError("defect features: at least one input required")
        if a.action == "fractal":
            if len(a.inputs) != 1:
                raise UsageError("defect fractal: exactly one input required")
            a.input = a.inputs[0]
        if a.action == "classify":
            if not a.network:
                raise UsageError("defect classify: --network required")
            if not a.features and len(a.inputs) != 1:
                raise UsageError("defect classify: one input or --features required")
            a.input = a.inputs[0] if a.inputs else None
    if a.command == "pores":
        if a.mode == "cross" and a.thickness is None:
            raise UsageError("pores cross: --thickness required")
        if a.pitch is None:
            a.pitch = porepsd.PLANAR_PITCH_MM if a.mode == "planar" else porepsd.CROSS_PITCH_MM
        if a.se is None:
            a.se = porepsd.PLANAR_SE_SIDE if a.mode == "planar" else porepsd.CROSS_SE_SIDE


def main(argv=None) -> int:
    out = Outputs()
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        args.func(args, out)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except SystemExit as e:
        # --help and friends
        return 0 if not e.code else 1
    except (NonwovenError, OSError) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return 2
    try:
        out.flush()
    except OSError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
