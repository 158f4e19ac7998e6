"""Fiber-orientation distributions from the 2D DFT and the Hough transform.

Angles are fiber-axis angles in degrees over ``[0, 180)`` in image
coordinates (x to the right, y down the rows). Spectral energy of a fiber
lies perpendicular to its axis, so the DFT path rotates sector angles by
90 degrees; the Hough path maps a line normal ``theta`` to ``theta - 90``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InvalidParameter, NoSignal
from .imgcore import BinaryImage, GrayImage


# --------------------------------------------------------------------- FFT

def _next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_last_axis(a: np.ndarray) -> np.ndarray:
    """Unnormalised forward DFT along the last axis (length a power of two).

    Iterative radix-2 decimation in time; every butterfly stage is applied to
    all leading-axis rows at once.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    if n & (n - 1):
        raise InvalidParameter(f"length {n} is not a power of two")
    lead = a.shape[:-1]
    a = a[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * w
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    return a


@dataclass(frozen=True)
class Spectrum:
    """Centered 2D DFT with ``1/N`` scaling, ``N = sqrt(rows * cols)``.

    ``coefficients`` has the padded shape; ``source_shape`` is the image size
    before zero padding.
    """

    coefficients: np.ndarray
    source_shape: Tuple[int, int]

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)

    @property
    def height(self) -> int:
        return self.coefficients.shape[0]

    @property
    def width(self) -> int:
        return self.coefficients.shape[1]

    @property
    def padded(self) -> bool:
        return self.coefficients.shape != tuple(self.source_shape)

    @property
    def norm(self) -> float:
        return math.sqrt(self.height * self.width)


def fft2(img) -> Spectrum:
    """2D DFT by row transforms then column transforms, zero-padded to powers of two."""
    f = np.asarray(img.pixels if isinstance(img, GrayImage) else img, dtype=np.float64)
    h, w = f.shape
    ph, pw = _next_pow2(h), _next_pow2(w)
    if (ph, pw) != (h, w):
        f = np.pad(f, ((0, ph - h), (0, pw - w)))
    rows = fft_last_axis(f)
    full = fft_last_axis(rows.T).T
    full = full / math.sqrt(ph * pw)
    return Spectrum(np.fft.fftshift(full), (h, w))


# ------------------------------------------------------ distributions

@dataclass(frozen=True)
class OrientationDistribution:
    """Normalised weights over fiber-axis bins ``[k*180/B, (k+1)*180/B)``."""

    weights: np.ndarray

    @property
    def bins(self) -> int:
        return len(self.weights)

    @property
    def width(self) -> float:
        return 180.0 / self.bins

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.bins) * self.width

    @property
    def centers(self) -> np.ndarray:
        return self.starts + self.width / 2

    def mode_bin(self) -> int:
        return int(np.argmax(self.weights))

    def bin_of(self, angle: float) -> int:
        return int(math.floor((angle % 180.0) / self.width)) % self.bins


def _normalise(weights) -> OrientationDistribution:
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise NoSignal("no orientation energy")
    return OrientationDistribution(w / total)


def _check_bins(bins):
    if int(bins) != bins or bins < 1:
        raise InvalidParameter("bins must be a positive integer")


def angular_distribution(spec: Spectrum, bins: int = 18) -> OrientationDistribution:
    """Spectral power summed in angular sectors, reported by fiber axis.

    Only frequencies inside the inscribed disk (normalised radius <= 0.5)
    contribute, so each sector sees the same radial extent; DC is excluded.
    """
    _check_bins(bins)
    if bins < 4:
        raise InvalidParameter("need at least 4 bins")
    h, w = spec.coefficients.shape
    fy = (np.arange(h) - h // 2)[:, None] / h
    fx = (np.arange(w) - w // 2)[None, :] / w
    r2 = fx * fx + fy * fy
    keep = (r2 > 0) & (r2 <= 0.25)
    psi = np.degrees(np.arctan2(np.broadcast_to(fy, r2.shape), np.broadcast_to(fx, r2.shape)))
    axis = np.mod(psi + 90.0, 180.0)
    idx = np.minimum(np.floor(axis / (180.0 / bins)).astype(np.int64), bins - 1)
    power = np.abs(spec.coefficients) ** 2
    acc = np.bincount(idx[keep], weights=power[keep], minlength=bins)
    return _normalise(acc)


def family_weights(dist: OrientationDistribution, angles: Sequence[float],
                   half_width: float = 10.0) -> np.ndarray:
    """Share of mass within ``half_width`` degrees of each family angle.

    Distances are axial (mod 180) and measured from bin centers; the shares
    are renormalised over the families.
    """
    d = axial_distance(dist.centers[:, None], np.asarray(angles, dtype=np.float64)[None, :])
    mass = np.array([(dist.weights * (d[:, j] <= half_width)).sum() for j in range(len(angles))])
    if not mass.sum() > 0:
        raise NoSignal("no mass near any family")
    return mass / mass.sum()


def axial_distance(a, b):
    d = np.abs(np.mod(np.asarray(a, dtype=np.float64) - b, 180.0))
    return np.minimum(d, 180.0 - d)


def angular_error(dist: OrientationDistribution, angles: Sequence[float]) -> float:
    """Mass-weighted mean axial distance from bin centers to the nearest family."""
    d = axial_distance(dist.centers[:, None], np.asarray(angles, dtype=np.float64)[None, :])
    return float((dist.weights * d.min(axis=1)).sum())


def l1_distance(a: OrientationDistribution, b: OrientationDistribution) -> float:
    return float(np.abs(a.weights - b.weights).sum())


# ------------------------------------------------------------- Hough

@dataclass(frozen=True)
class HoughAccumulator:
    """Votes indexed ``[rho_bin, theta_bin]``.

    ``rho`` bin ``i`` is centered at ``(i - rho_offset) * delta_rho``;
    ``theta`` bin ``j`` is ``j * delta_theta`` degrees.
    """

    counts: np.ndarray
    delta_rho: float
    delta_theta: float
    rho_offset: int

    @property
    def rhos(self) -> np.ndarray:
        return (np.arange(self.counts.shape[0]) - self.rho_offset) * self.delta_rho

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.counts.shape[1]) * self.delta_theta


@dataclass(frozen=True)
class DetectedLine:
    rho: float
    theta: float
    support: int
    estimated_length: float = 0.0

    @property
    def fiber_angle(self) -> float:
        return (self.theta - 90.0) % 180.0


def hough_transform(bin: BinaryImage, delta_rho: float = 1.0,
                    delta_theta: float = 1.0) -> HoughAccumulator:
    """Normal-form line votes, ``rho = x cos(theta) + y sin(theta)``."""
    if not (delta_rho > 0 and delta_theta > 0):
        raise InvalidParameter("delta_rho and delta_theta must be > 0")
    bits = bin.bits if isinstance(bin, BinaryImage) else np.asarray(bin, dtype=bool)
    h, w = bits.shape
    n_theta = int(math.ceil(180.0 / delta_theta - 1e-9))
    diag = math.hypot(h, w)
    offset = int(math.ceil(diag / delta_rho))
    n_rho = 2 * offset + 1
    ys, xs = np.nonzero(bits)
    theta = np.radians(np.arange(n_theta) * delta_theta)
    counts = np.zeros(n_rho * n_theta, dtype=np.int64)
    # chunk pixels so the vote matrix stays small
    step = max(1, 2_000_000 // max(n_theta, 1))
    cols = np.arange(n_theta)
    for s in range(0, xs.size, step):
        x = xs[s:s + step, None].astype(np.float64)
        y = ys[s:s + step, None].astype(np.float64)
        rho = x * np.cos(theta) + y * np.sin(theta)
        ri = np.floor(rho / delta_rho + 0.5).astype(np.int64) + offset
        counts += np.bincount((ri * n_theta + cols).ravel(), minlength=n_rho * n_theta)
    return HoughAccumulator(counts.reshape(n_rho, n_theta), float(delta_rho),
                            float(delta_theta), offset)


def hough_peaks(acc: HoughAccumulator, max_lines: int = 10,
                nms_window: Tuple[int, int] = (5, 5), min_support: int = 1) -> List[DetectedLine]:
    """Greedy peak picking with rectangular suppression.

    ``nms_window`` gives half-widths in (rho bins, theta bins). The window
    wraps across theta = 0/180, where rho changes sign. Ties go to the lower
    theta bin, then the lower rho bin.
    """
    if max_lines < 1:
        raise InvalidParameter("max_lines must be >= 1")
    work = acc.counts.T.copy()  # [theta, rho]: flat argmax breaks ties theta-first
    n_theta, n_rho = work.shape
    wr, wt = nms_window
    out = []
    while len(out) < max_lines:
        flat = int(np.argmax(work))
        t0, r0 = divmod(flat, n_rho)
        best = int(work[t0, r0])
        if best < min_support or best <= 0:
            break
        out.append(DetectedLine(float((r0 - acc.rho_offset) * acc.delta_rho),
                                float(t0 * acc.delta_theta), best))
        for dt in range(-wt, wt + 1):
            t, r = t0 + dt, r0
            if t < 0 or t >= n_theta:
                t %= n_theta
                r = 2 * acc.rho_offset - r0
            work[t, max(r - wr, 0):min(r + wr + 1, n_rho)] = -1
    return out


def _longest_run(t: np.ndarray, gap: float):
    """Sort order and ``(start, end)`` positions of the longest gap-free run."""
    order = np.argsort(t, kind="stable")
    ts = t[order]
    breaks = np.flatnonzero(np.diff(ts) > gap)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [ts.size - 1]])
    k = int(np.argmax(ts[ends] - ts[starts]))
    return order, ts, int(starts[k]), int(ends[k])


def _runs_extent(t: np.ndarray, gap: float) -> float:
    _, ts, a, b = _longest_run(t, gap)
    return float(ts[b] - ts[a])


def _fit_axis(xs, ys):
    """Total-least-squares line through points: unit direction and a point on it."""
    cx, cy = xs.mean(), ys.mean()
    cov = np.cov(np.vstack([xs - cx, ys - cy]), bias=True)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, -1], np.array([cx, cy])


def estimate_line_lengths(bin: BinaryImage, lines: Sequence[DetectedLine], band: float = 1.0,
                          gap: float = 2.0, refine: bool = True) -> List[DetectedLine]:
    """Longest gap-free run of in-band pixels projected onto each line.

    A pixel is in band when its perpendicular distance to the line is at most
    ``band``; consecutive projections further apart than ``gap`` px split a
    run. The reported length is the distance between the run's extreme
    pixel centers, so a rasterized segment is never overestimated.

    With ``refine`` the run found around the accumulator line is refitted by
    total least squares and measured again around the fitted axis, which
    removes the bias of a coarse ``theta`` grid.
    """
    if band < 1:
        raise InvalidParameter("band must be >= 1")
    bits = bin.bits if isinstance(bin, BinaryImage) else np.asarray(bin, dtype=bool)
    ys, xs = np.nonzero(bits)
    xs, ys = xs.astype(np.float64), ys.astype(np.float64)
    out = []
    for line in lines:
        th = math.radians(line.theta)
        c, s = math.cos(th), math.sin(th)
        near = np.flatnonzero(np.abs(xs * c + ys * s - line.rho) <= band)
        if near.size == 0:
            out.append(replace(line, support=0, estimated_length=0.0))
            continue
        t = -xs[near] * s + ys[near] * c
        if refine and near.size >= 3:
            order, _, a, b = _longest_run(t, gap)
            run = near[order[a:b + 1]]
            if run.size >= 3:
                d, p0 = _fit_axis(xs[run], ys[run])
                dist = np.abs((xs - p0[0]) * d[1] - (ys - p0[1]) * d[0])
                near = np.flatnonzero(dist <= band)
                t = (xs[near] - p0[0]) * d[0] + (ys[near] - p0[1]) * d[1]
        out.append(replace(line, support=int(near.size),
                           estimated_length=_runs_extent(t, gap)))
    return out


def orientation_from_hough(lines: Sequence[DetectedLine], bins: int = 18,
                           weighting: str = "by_length") -> OrientationDistribution:
    """Histogram of detected fiber axes, weighted by length or by count."""
    _check_bins(bins)
    if not lines:
        raise NoSignal("no lines detected")
    if weighting not in ("by_length", "by_count"):
        raise InvalidParameter(f"unknown weighting {weighting!r}")
    width = 180.0 / bins
    acc = np.zeros(bins)
    for line in lines:
        k = int(math.floor(line.fiber_angle / width)) % bins
        acc[k] += line.estimated_length if weighting == "by_length" else 1.0
    return _normalise(acc)


def _votes(xs, ys, acc: HoughAccumulator) -> np.ndarray:
    n_rho, n_theta = acc.counts.shape
    theta = np.radians(acc.thetas)
    rho = xs[:, None] * np.cos(theta) + ys[:, None] * np.sin(theta)
    ri = np.floor(rho / acc.delta_rho + 0.5).astype(np.int64) + acc.rho_offset
    flat = (ri * n_theta + np.arange(n_theta)).ravel()
    return np.bincount(flat, minlength=n_rho * n_theta).reshape(n_rho, n_theta)


def progressive_lines(bin: BinaryImage, max_lines: int = 400, min_support: int = 15,
                      band: float = 1.0, gap: float = 2.0, delta_rho: float = 1.0,
                      delta_theta: float = 1.0) -> List[DetectedLine]:
    """Peak, claim, un-vote: the strongest line takes its longest in-band run.

    After each peak the pixels of the claimed run are removed and their votes
    subtracted, so later peaks cannot reuse them. ``support`` is the claimed
    pixel count and ``estimated_length`` the run extent.
    """
    bits = (bin.bits if isinstance(bin, BinaryImage) else np.asarray(bin, dtype=bool)).copy()
    acc = hough_transform(bits, delta_rho, delta_theta)
    counts = acc.counts.copy()
    ys, xs = np.nonzero(bits)
    xs, ys = xs.astype(np.float64), ys.astype(np.float64)
    alive = np.ones(xs.size, dtype=bool)
    n_rho = counts.shape[0]
    out = []
    while len(out) < max_lines:
        flat = int(np.argmax(counts.T))
        t0, r0 = divmod(flat, n_rho)
        if counts[r0, t0] < min_support:
            break
        rho, theta = (r0 - acc.rho_offset) * acc.delta_rho, t0 * acc.delta_theta
        th = math.radians(theta)
        c, s = math.cos(th), math.sin(th)
        idx = np.flatnonzero(alive & (np.abs(xs * c + ys * s - rho) <= band))
        t = -xs[idx] * s + ys[idx] * c
        order = np.argsort(t, kind="stable")
        t, idx = t[order], idx[order]
        breaks = np.flatnonzero(np.diff(t) > gap)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [t.size - 1]])
        k = int(np.argmax(t[ends] - t[starts]))
        run = idx[starts[k]:ends[k] + 1]
        if run.size < min_support:
            # the peak's votes are scattered; retire this cell only
            counts[r0, t0] = 0
            continue
        alive[run] = False
        counts -= _votes(xs[run], ys[run], acc)
        out.append(DetectedLine(float(rho), float(theta), int(run.size),
                                float(t[ends[k]] - t[starts[k]])))
    return out


def hough_orientation(bin: BinaryImage, bins: int = 18, max_lines: int = 400,
                      min_support: int = 15, band: float = 1.0, delta_theta: float = 1.0,
                      weighting: str = "by_length"):
    """Progressive line extraction followed by the weighted axis histogram."""
    lines = progressive_lines(bin, max_lines, min_support, band, delta_theta=delta_theta)
    return orientation_from_hough(lines, bins, weighting), lines


def fft_orientation(img, bins: int = 18) -> OrientationDistribution:
    return angular_distribution(fft2(img), bins)


# ------------------------------------------------------------ studies

MAGNIFICATIONS = (30, 50, 100)
MIN_CROP = 32


def center_crop(px: np.ndarray, fraction: float) -> np.ndarray:
    h, w = px.shape
    ch, cw = int(round(h * fraction)), int(round(w * fraction))
    if ch < MIN_CROP or cw < MIN_CROP:
        raise InvalidParameter(f"crop {cw}x{ch} is smaller than {MIN_CROP}x{MIN_CROP}")
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    return px[y0:y0 + ch, x0:x0 + cw]


def _requant(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255)


def apply_variant(px: np.ndarray, variant: str, offset: float = 40.0) -> np.ndarray:
    """Variant image as float gray values (unclamped intermediates are re-clamped)."""
    px = np.asarray(px, dtype=np.float64)
    if variant.startswith("magnification"):
        m = int(variant.split(":", 1)[1]) if ":" in variant else int(variant[len("magnification"):])
        if m not in MAGNIFICATIONS:
            raise InvalidParameter(f"unsupported magnification {m}")
        return center_crop(px, MAGNIFICATIONS[0] / m)
    if variant == "frame_square":
        return px.copy()
    if variant == "frame_circle":
        h, w = px.shape
        y, x = np.mgrid[0:h, 0:w]
        r = min(h, w) / 2.0
        inside = (x + 0.5 - w / 2) ** 2 + (y + 0.5 - h / 2) ** 2 <= r * r
        return np.where(inside, px, 0.0)
    if variant == "brightness_uniform":
        return _requant(px + offset)
    if variant == "brightness_gradient":
        ramp = np.linspace(0.5, 1.5, px.shape[1])[None, :]
        return _requant(px * ramp)
    raise InvalidParameter(f"unknown variant {variant!r}")


VARIANTS = ("magnification:30", "magnification:50", "magnification:100", "frame_square",
            "frame_circle", "brightness_uniform", "brightness_gradient")


def study_effects(web: GrayImage, variant: str, bins: int = 18, offset: float = 40.0):
    """Baseline and variant DFT distributions plus their L1 distance.

    Magnification ``m`` keeps the central ``30/m`` of each side, so 30x is
    the full frame.
    """
    px = web.pixels.astype(np.float64)
    base = angular_distribution(fft2(px), bins)
    var = angular_distribution(fft2(apply_variant(px, variant, offset)), bins)
    return base, var, l1_distance(base, var)
