"""Image types, PGM I/O and the low-level filters shared by every pipeline.

Images are numpy arrays indexed ``[row, col]`` (``y`` down, ``x`` right) and
are made read-only on construction, so they can be shared between threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage as ndi
from scipy import optimize, special
from skimage.morphology import thin

from .errors import InvalidParameter, NotBimodal, ParseError, UnsupportedFormat

EIGHT = np.ones((3, 3), dtype=bool)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _check_pitch(pitch):
    if pitch is not None and not pitch > 0:
        raise InvalidParameter(f"pixel_pitch must be > 0, got {pitch}")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image; ``pixels`` has shape ``(height, width)``.

    ``pixel_pitch`` is the physical size of one pixel in mm, when known.
    """

    pixels: np.ndarray
    pixel_pitch: Optional[float] = None

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidParameter(f"expected a non-empty 2D grid, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise InvalidParameter("gray levels must be integers")
            if arr.min() < 0 or arr.max() > 255:
                raise InvalidParameter("gray levels must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        _check_pitch(self.pixel_pitch)
        object.__setattr__(self, "pixels", _frozen(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_float(cls, values, pixel_pitch=None) -> "GrayImage":
        """Round half up and clamp an arbitrary real array into a gray image."""
        v = np.floor(np.asarray(values, dtype=np.float64) + 0.5)
        return cls(np.clip(v, 0, 255).astype(np.uint8), pixel_pitch)

    def with_pixels(self, pixels) -> "GrayImage":
        return GrayImage(pixels, self.pixel_pitch)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (self.pixel_pitch == other.pixel_pitch
                and self.pixels.shape == other.pixels.shape
                and bool(np.array_equal(self.pixels, other.pixels)))


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Foreground mask; ``True`` marks fiber pixels unless an operation says otherwise."""

    bits: np.ndarray
    pixel_pitch: Optional[float] = None

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidParameter(f"expected a non-empty 2D grid, got shape {arr.shape}")
        if arr.dtype != bool:
            if not np.isin(arr, (0, 1)).all():
                raise InvalidParameter("binary image values must be 0 or 1")
            arr = arr.astype(bool)
        _check_pitch(self.pixel_pitch)
        object.__setattr__(self, "bits", _frozen(arr))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def with_bits(self, bits) -> "BinaryImage":
        return BinaryImage(bits, self.pixel_pitch)

    def complement(self) -> "BinaryImage":
        return BinaryImage(~self.bits, self.pixel_pitch)

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return (self.pixel_pitch == other.pixel_pitch
                and bool(np.array_equal(self.bits, other.bits)))


@dataclass(frozen=True)
class Histogram256:
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (256,) or (c < 0).any():
            raise InvalidParameter("histogram needs 256 non-negative counts")
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


# --------------------------------------------------------------------- PGM I/O

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def load_pgm(data: bytes, pixel_pitch: Optional[float] = None) -> GrayImage:
    """Decode a binary (P5) graymap with maxval 255."""
    if not data.startswith(b"P5"):
        raise ParseError(f"unsupported magic {data[:2]!r}; only binary P5 graymaps are read")
    pos = 2
    header = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError("truncated PGM header")
        header.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(t) for t in header)
    except ValueError as exc:
        raise ParseError(f"non-numeric PGM header field: {exc}") from None
    if width < 1 or height < 1:
        raise ParseError("PGM dimensions must be positive")
    if maxval != 255:
        raise UnsupportedFormat(f"maxval {maxval} is not supported (need 255)")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after PGM header")
    raster = data[pos + 1:pos + 1 + width * height]
    if len(raster) != width * height:
        raise ParseError(f"expected {width * height} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels, pixel_pitch)


def save_pgm(img: GrayImage) -> bytes:
    head = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return head + img.pixels.tobytes()


def read_pgm(path, pixel_pitch=None) -> GrayImage:
    with open(path, "rb") as fh:
        return load_pgm(fh.read(), pixel_pitch)


def write_pgm(path, img: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(save_pgm(img))


# ------------------------------------------------------------ point operations

def histogram(img: GrayImage) -> Histogram256:
    return Histogram256(np.bincount(img.pixels.ravel(), minlength=256))


def equalize_histogram(img: GrayImage) -> GrayImage:
    """Classic CDF remap; a constant image is returned unchanged."""
    counts = histogram(img).counts
    cdf = np.cumsum(counts)
    total = int(cdf[-1])
    cdf_min = int(cdf[np.flatnonzero(counts)[0]])
    if total == cdf_min:
        return img
    lut = np.floor(255.0 * (cdf - cdf_min) / (total - cdf_min) + 0.5)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return img.with_pixels(lut[img.pixels])


def global_threshold(img: GrayImage, t: float, foreground: str = "above") -> BinaryImage:
    if not 0 <= t <= 255:
        raise InvalidParameter(f"threshold {t} outside [0, 255]")
    if foreground == "above":
        bits = img.pixels > t
    elif foreground == "below":
        bits = img.pixels < t
    else:
        raise InvalidParameter(f"foreground must be 'above' or 'below', got {foreground!r}")
    return BinaryImage(bits, img.pixel_pitch)


# ------------------------------------------------------------------- filtering

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-x * x / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_filter(img: GrayImage, sigma: float = 1.0) -> GrayImage:
    """Separable Gaussian blur, radius ``ceil(3 sigma)``, replicated borders."""
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be > 0, got {sigma}")
    k = gaussian_kernel(sigma)
    out = img.pixels.astype(np.float64)
    out = ndi.correlate1d(out, k, axis=1, mode="nearest")
    out = ndi.correlate1d(out, k, axis=0, mode="nearest")
    return GrayImage.from_float(out, img.pixel_pitch)


def local_mean_var(values: np.ndarray, window: int):
    """Windowed mean and (population) variance with replicated borders."""
    mean = ndi.uniform_filter(values, size=window, mode="nearest")
    sq = ndi.uniform_filter(values * values, size=window, mode="nearest")
    return mean, np.maximum(sq - mean * mean, 0.0)


def wiener_filter(img: GrayImage, window: int = 5) -> GrayImage:
    """Adaptive Wiener denoising; the noise power is the mean local variance."""
    if window < 3 or window % 2 == 0:
        raise InvalidParameter(f"window must be odd and >= 3, got {window}")
    x = img.pixels.astype(np.float64)
    mu, var = local_mean_var(x, window)
    noise = var.mean()
    gain = np.maximum(var - noise, 0.0) / np.maximum(np.maximum(var, noise), 1e-300)
    return GrayImage.from_float(mu + gain * (x - mu), img.pixel_pitch)


def median_filter_1d(series: Sequence[float], window: int = 3) -> np.ndarray:
    """Centered running median; windows are truncated at the ends."""
    if window < 3 or window % 2 == 0:
        raise InvalidParameter(f"window must be odd and >= 3, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise InvalidParameter("series must be non-empty")
    half = window // 2
    padded = np.pad(x, half, constant_values=np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    return np.nanmedian(windows, axis=1)


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T


def sobel_magnitude(values: np.ndarray) -> np.ndarray:
    """Raw Sobel magnitude on the interior, zero on the one-pixel frame."""
    gx = ndi.correlate(values, SOBEL_X, mode="nearest")
    gy = ndi.correlate(values, SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    mag[0, :] = mag[-1, :] = 0.0
    mag[:, 0] = mag[:, -1] = 0.0
    return mag


def edge_magnitude(img: GrayImage) -> GrayImage:
    if img.width < 3 or img.height < 3:
        raise InvalidParameter("edge detection needs at least a 3x3 image")
    mag = sobel_magnitude(img.pixels.astype(np.float64))
    peak = mag.max()
    if peak > 0:
        mag = mag * (255.0 / peak)
    return GrayImage.from_float(mag, img.pixel_pitch)


# ---------------------------------------------------------------- thresholding

def _smooth(counts: np.ndarray, width: int = 5) -> np.ndarray:
    return np.convolve(counts, np.ones(width) / width, mode="same")


def histogram_valley(counts: np.ndarray):
    """Locate the deepest valley between the two dominant modes.

    Returns ``(valley, p1, p2, dip)`` where ``p1 < p2`` are the mode levels
    and ``dip`` is how far the weaker mode rises above the valley floor in
    the smoothed histogram (``0`` when there is only one mode).
    """
    s = _smooth(np.asarray(counts, dtype=np.float64))
    top = int(np.argmax(s))
    dips = np.zeros(256)
    for j in range(256):
        if j == top:
            continue
        lo, hi = (j, top) if j < top else (top, j)
        dips[j] = s[j] - s[lo:hi + 1].min()
    other = int(np.argmax(dips))
    dip = float(dips[other])
    p1, p2 = sorted((top, other))
    seg = s[p1:p2 + 1]
    floor = np.flatnonzero(seg <= seg.min() + 1e-12 * max(seg.max(), 1.0))
    valley = p1 + int(round((floor[0] + floor[-1]) / 2.0))
    return valley, p1, p2, dip


def _mixture_bins(params, levels):
    w1, m1, s1, w2, m2, s2 = params
    lo, hi = levels - 0.5, levels + 0.5
    b1 = special.ndtr((hi - m1) / s1) - special.ndtr((lo - m1) / s1)
    b2 = special.ndtr((hi - m2) / s2) - special.ndtr((lo - m2) / s2)
    return w1 * b1 + w2 * b2


def gaussian_intersection(w1, m1, s1, w2, m2, s2):
    """Points where ``w1 N(m1, s1)`` and ``w2 N(m2, s2)`` densities are equal."""
    a = 1.0 / (2 * s2 * s2) - 1.0 / (2 * s1 * s1)
    b = m1 / (s1 * s1) - m2 / (s2 * s2)
    c = m2 * m2 / (2 * s2 * s2) - m1 * m1 / (2 * s1 * s1) + math.log(w1 * s2 / (w2 * s1))
    if abs(a) < 1e-12 * max(abs(b), 1e-300):
        return [] if b == 0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted({(-b - r) / (2 * a), (-b + r) / (2 * a)})


@dataclass(frozen=True)
class MixtureFit:
    weights: tuple
    means: tuple
    sds: tuple
    threshold: int


MIN_SD = 0.3


def fit_two_gaussians(hist: Histogram256, max_iter: int = 200) -> MixtureFit:
    """Least-squares two-Gaussian fit to a histogram and its valley threshold.

    The mixture is fitted to bin probabilities (Gaussian mass inside each
    unit-wide gray bin). Initial components come from the two halves of the
    histogram split at its global valley, so the fit is deterministic.
    """
    counts = hist.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise InvalidParameter("histogram is empty")
    if np.count_nonzero(counts) < 2:
        raise NotBimodal("all pixels share a single gray level")
    levels = np.arange(256, dtype=np.float64)
    p = counts / total
    valley, _, _, dip = histogram_valley(counts)

    init = []
    for part in (slice(0, valley + 1), slice(valley + 1, 256)):
        w = p[part].sum()
        if w <= 0:
            raise NotBimodal("one side of the histogram valley is empty")
        m = (p[part] * levels[part]).sum() / w
        sd = math.sqrt(max((p[part] * (levels[part] - m) ** 2).sum() / w, MIN_SD ** 2))
        init += [w, m, sd]

    fit = optimize.least_squares(
        lambda q: _mixture_bins(q, levels) - p,
        x0=np.array(init),
        bounds=([0, -50, MIN_SD, 0, -50, MIN_SD], [1, 305, 300, 1, 305, 300]),
        max_nfev=max_iter,
        x_scale="jac",
    )
    w1, m1, s1, w2, m2, s2 = fit.x
    if m1 > m2:
        w1, m1, s1, w2, m2, s2 = w2, m2, s2, w1, m1, s1

    # the weaker mode must rise at least 5% of the tallest peak above the floor
    has_valley = dip >= 0.05 * _smooth(counts).max()
    if abs(m2 - m1) < 2 * max(s1, s2) and not has_valley:
        raise NotBimodal("fitted components overlap and the histogram has no valley")
    if min(w1, w2) <= 1e-12:
        raise NotBimodal("one fitted component has zero weight")

    roots = [r for r in gaussian_intersection(w1, m1, s1, w2, m2, s2) if m1 <= r <= m2]
    if roots:
        t = min(roots, key=lambda r: abs(r - valley))
    else:
        lo, hi = int(math.ceil(m1)), int(math.floor(m2))
        lo, hi = max(lo, 0), min(hi, 255)
        if hi < lo:
            t = valley
        else:
            seg = counts[lo:hi + 1]
            floor = np.flatnonzero(seg == seg.min())
            t = lo + (floor[0] + floor[-1]) / 2.0
    threshold = int(np.clip(math.floor(t + 0.5), 0, 255))
    return MixtureFit((w1, w2), (m1, m2), (s1, s2), threshold)


def chow_kaneko_threshold(hist: Histogram256) -> int:
    """Valley threshold of a bimodal histogram via a two-Gaussian fit."""
    return fit_two_gaussians(hist).threshold


# ------------------------------------------------------------------- skeletons

def skeletonize(bin: BinaryImage) -> BinaryImage:
    """Two-subiteration thinning to an 8-connected, one-pixel-wide skeleton."""
    return bin.with_bits(thin(bin.bits))


def _neighbour_count(bits: np.ndarray) -> np.ndarray:
    k = EIGHT.astype(np.int32)
    k[1, 1] = 0
    return ndi.convolve(bits.astype(np.int32), k, mode="constant")


def prune(bin: BinaryImage, min_branch: int) -> BinaryImage:
    """Remove spurs: endpoint-to-junction branches shorter than ``min_branch``.

    Branches are traced on the input skeleton in a single pass; free-standing
    segments (no junction on either end) are left alone.
    """
    bits = bin.bits.copy()
    nb = _neighbour_count(bits)
    h, w = bits.shape
    doomed = []
    for y0, x0 in zip(*np.nonzero(bits & (nb == 1))):
        path = [(y0, x0)]
        seen = {(y0, x0)}
        y, x = y0, x0
        hit_junction = False
        while len(path) <= min_branch:
            nxt = [(y + dy, x + dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                   if (dy or dx) and 0 <= y + dy < h and 0 <= x + dx < w
                   and bits[y + dy, x + dx] and (y + dy, x + dx) not in seen]
            if not nxt:
                break
            if any(nb[p] >= 3 for p in nxt) or len(nxt) > 1:
                hit_junction = True
                break
            y, x = nxt[0]
            if nb[y, x] >= 3:
                hit_junction = True
                break
            path.append((y, x))
            seen.add((y, x))
        if hit_junction and len(path) < min_branch:
            doomed.extend(path)
    for p in doomed:
        bits[p] = False
    return bin.with_bits(bits)
