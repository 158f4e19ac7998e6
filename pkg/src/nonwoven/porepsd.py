"""Binary morphology, cross-section slicing and pore-size distributions.

Fiber pixels are foreground (``True``); pores are background. Square
structuring elements have their origin at the top-left cell, so a side-``s``
element covers offsets ``(0..s-1, 0..s-1)``.

Border convention: dilation treats out-of-grid pixels as background and
erosion ignores out-of-grid probe positions. The pair is then an exact
adjunction on the finite grid, which keeps opening/closing idempotent,
(anti-)extensive and dual to each other bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi

from .errors import EmptyDistribution, EmptyForeground, InvalidParameter, MissingCalibration
from .imgcore import (BinaryImage, GrayImage, chow_kaneko_threshold, edge_magnitude,
                      histogram, prune, skeletonize)

PLANAR_PITCH_MM = 4.83e-3
CROSS_PITCH_MM = 9.43e-3
PLANAR_SE_SIDE = 2
CROSS_SE_SIDE = 3

_FOUR = ndi.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class StructuringElement:
    side: int = 2
    reflected: bool = False

    def __post_init__(self):
        if int(self.side) != self.side or self.side < 1:
            raise InvalidParameter("structuring element side must be a positive integer")

    def offsets(self):
        sign = -1 if self.reflected else 1
        return [(sign * i, sign * j) for i in range(self.side) for j in range(self.side)]

    def reflect(self) -> "StructuringElement":
        return StructuringElement(self.side, not self.reflected)


def _bits(x) -> np.ndarray:
    return x.bits if isinstance(x, BinaryImage) else np.asarray(x, dtype=bool)


def _wrap(like, bits):
    return like.with_bits(bits) if isinstance(like, BinaryImage) else bits


def _shift(x: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """``out[p] = x[p - (dy, dx)]``, with ``fill`` where that falls off the grid."""
    h, w = x.shape
    out = np.full_like(x, fill)
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src = x[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    out[max(dy, 0):h - max(-dy, 0), max(dx, 0):w - max(-dx, 0)] = src
    return out


def dilate(bin, se: StructuringElement):
    x = _bits(bin)
    out = np.zeros_like(x)
    for dy, dx in se.offsets():
        out |= _shift(x, dy, dx, False)
    return _wrap(bin, out)


def erode(bin, se: StructuringElement):
    x = _bits(bin)
    out = np.ones_like(x)
    for dy, dx in se.offsets():
        out &= _shift(x, -dy, -dx, True)
    return _wrap(bin, out)


def opening(bin, se: StructuringElement):
    return dilate(erode(bin, se), se)


def closing(bin, se: StructuringElement):
    return erode(dilate(bin, se), se)


def denoise(bin, se: StructuringElement):
    """Opening removes specks; closing the opened image fills pinholes."""
    return closing(opening(bin, se), se)


def segment_fibers(img: GrayImage, se: StructuringElement = StructuringElement(PLANAR_SE_SIDE),
                   edge_preprocess: bool = False) -> BinaryImage:
    """Threshold a back-lit image (fibers dark, pores bright) and denoise it.

    With ``edge_preprocess`` the Sobel edge magnitude is thresholded instead,
    and strong edges are taken as fiber.
    """
    if edge_preprocess:
        img = edge_magnitude(img)
        t = chow_kaneko_threshold(histogram(img))
        fib = img.pixels > t
    else:
        t = chow_kaneko_threshold(histogram(img))
        fib = img.pixels <= t
    return denoise(BinaryImage(fib, img.pixel_pitch), se)


def planar_porosity(planar: BinaryImage) -> float:
    return float(1.0 - _bits(planar).mean())


# ------------------------------------------------------------- slicing

def _skeleton_unclipped(bits: np.ndarray, pad: int = 8) -> np.ndarray:
    # fibers cut by the frame continue beyond it; replicate so thinning does
    # not shorten them at the border
    p = np.pad(bits, pad, mode="edge")
    return skeletonize(BinaryImage(p)).bits[pad:-pad, pad:-pad]


def estimate_fiber_thickness(bin: BinaryImage) -> float:
    """Foreground area over skeleton length, in pixels."""
    x = _bits(bin)
    if not x.any():
        raise EmptyForeground("no fiber pixels")
    sk = _skeleton_unclipped(x)
    return float(x.sum() / max(int(sk.sum()), 1))


@dataclass(frozen=True)
class SlicingGrid:
    """Uniform horizontal bands, cyclically shifted by ``offset`` rows.

    ``boundaries`` are the sorted first rows of the bands. Band ``k`` covers
    rows ``boundaries[k]`` up to ``boundaries[k+1] - 1``; the last band wraps
    from ``boundaries[-1]`` through the bottom row and on from row 0 up to
    ``boundaries[0] - 1``.
    """

    slice_count: int
    boundaries: Tuple[int, ...]
    offset: int
    fiber_thickness: float
    height: int

    def band_rows(self, k: int) -> List[Tuple[int, int]]:
        """Half-open row ranges making up band ``k`` (two when it wraps)."""
        b = self.boundaries
        if k < len(b) - 1:
            return [(b[k], b[k + 1])]
        ranges = [(b[-1], self.height)]
        if b[0] > 0:
            ranges.append((0, b[0]))
        return ranges

    def band_heights(self) -> List[int]:
        return [sum(e - s for s, e in self.band_rows(k)) for k in range(self.slice_count)]


def uniform_edges(height: int, n: int) -> np.ndarray:
    return np.floor(np.arange(n) * height / n + 0.5).astype(np.int64)


def grid_with_offset(height: int, n: int, offset: int, thickness: float = 0.0) -> SlicingGrid:
    starts = np.sort((uniform_edges(height, n) + offset) % height)
    return SlicingGrid(n, tuple(int(v) for v in starts), int(offset), float(thickness), height)


def horizontal_fibers(bits: np.ndarray, se: StructuringElement, kernel_len: int = 5,
                      min_hits: int = 4, prune_len: int = 5) -> np.ndarray:
    """Skeleton pixels with enough horizontal skeleton neighbours, dilated by ``se``."""
    sk = _skeleton_unclipped(bits)
    sk = prune(BinaryImage(sk), prune_len).bits
    hits = ndi.correlate1d(sk.astype(np.int32), np.ones(kernel_len, dtype=np.int32),
                           axis=1, mode="constant")
    return dilate(sk & (hits >= min_hits), se)


def build_slicing_grid(cross: BinaryImage, physical_thickness: float,
                       se: StructuringElement = StructuringElement(CROSS_SE_SIDE),
                       kernel_len: int = 5, min_hits: int = 4) -> SlicingGrid:
    """Slice count from mean fiber thickness, then the best cyclic offset.

    Each offset ``0..band_height-1`` is scored by the number of
    horizontal-fiber pixels lying on band boundary rows; the first maximum
    wins.
    """
    if cross.pixel_pitch is None:
        raise MissingCalibration("cross-section has no pixel pitch")
    x = cross.bits
    if not x.any():
        raise EmptyForeground("no fiber pixels")
    h = x.shape[0]
    t = estimate_fiber_thickness(cross)
    # tolerance keeps exact ratios such as 30/3 from flooring to 9
    n = int(math.floor(physical_thickness / (t * cross.pixel_pitch) + 1e-9))
    n = min(max(n, 1), h)
    horiz = horizontal_fibers(x, se, kernel_len, min_hits)
    row_score = horiz.sum(axis=1)
    edges = uniform_edges(h, n)
    band = int(math.ceil(h / n))
    scores = [int(row_score[(edges + o) % h].sum()) for o in range(band)]
    best = int(np.argmax(scores))
    return grid_with_offset(h, n, best, t)


def longitudinal_porosity(cross: BinaryImage, grid: SlicingGrid) -> List[float]:
    pores = ~_bits(cross)
    out = []
    for k in range(grid.slice_count):
        rows = np.concatenate([np.arange(s, e) for s, e in grid.band_rows(k)])
        out.append(float(pores[rows].mean()))
    return out


def single_band_grid(bin: BinaryImage) -> SlicingGrid:
    """Whole image as one band, for planar views."""
    return SlicingGrid(1, (0,), 0, 0.0, _bits(bin).shape[0])


def pore_segment_areas(cross: BinaryImage, grid: SlicingGrid) -> List[int]:
    pores = ~_bits(cross)
    areas = []
    for k in range(grid.slice_count):
        for s, e in grid.band_rows(k):
            labels, n = ndi.label(pores[s:e], structure=_FOUR)
            if n:
                areas += np.bincount(labels.ravel())[1:].tolist()
    return areas


def measure_pore_openings(cross: BinaryImage, grid: SlicingGrid) -> List[float]:
    """Equivalent-circle diameters (mm) of 4-connected pore segments within each band.

    Segments never continue across band boundaries, and the wrapped band's
    two row ranges are measured separately.
    """
    if cross.pixel_pitch is None:
        raise MissingCalibration("image has no pixel pitch")
    return [2.0 * math.sqrt(a / math.pi) * cross.pixel_pitch
            for a in pore_segment_areas(cross, grid)]


# ----------------------------------------------------------------- PSD

@dataclass(frozen=True)
class PSDCurve:
    sizes: np.ndarray
    cumulative: np.ndarray


def psd_curve(sizes: Sequence[float]) -> PSDCurve:
    s = np.sort(np.asarray(sizes, dtype=np.float64))
    if s.size == 0:
        raise EmptyDistribution("no pore openings")
    if np.any(s <= 0):
        raise InvalidParameter("pore sizes must be positive")
    return PSDCurve(s, np.arange(1, s.size + 1) / s.size)


def percentile(curve: PSDCurve, p: float) -> float:
    """Linear interpolation between order statistics at rank ``(n-1) p / 100``."""
    if not 0 <= p <= 100:
        raise InvalidParameter("p must be in [0, 100]")
    s = curve.sizes
    if s.size == 0:
        raise EmptyDistribution("no pore openings")
    h = (s.size - 1) * p / 100.0
    lo = int(math.floor(h))
    hi = min(lo + 1, s.size - 1)
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


class PoreReport(NamedTuple):
    o50: float
    o95: float
    slice_count: int
    offset: int
    longitudinal_porosity: List[float]
    curve: PSDCurve


def analyze_cross_section(cross: BinaryImage, physical_thickness: float,
                          se: StructuringElement = StructuringElement(CROSS_SE_SIDE)) -> PoreReport:
    grid = build_slicing_grid(cross, physical_thickness, se)
    curve = psd_curve(measure_pore_openings(cross, grid))
    return PoreReport(percentile(curve, 50), percentile(curve, 95), grid.slice_count,
                      grid.offset, longitudinal_porosity(cross, grid), curve)


class Geotextile(NamedTuple):
    name: str
    structure: str
    grammage_g_m2: float
    thickness_mm: float
    aos_mm: Tuple[float, float]
    porosity_pct: float
    permittivity_per_s: float


TABLE4 = {
    "N": Geotextile("N", "nonwoven, needle-punched, heat-bonded, polypropylene",
                    136, 0.45, (0.28, 0.28), 66.4, 0.70),
    "P": Geotextile("P", "nonwoven, needle-punched, staple-fiber, polypropylene",
                    387, 3.0, (0.106, 0.106), 85.7, 0.80),
    "M": Geotextile("M", "nonwoven, needle-punched, continuous filament, polypropylene",
                    340, 2.53, (0.15, 0.15), 85.0, 1.10),
    "C4": Geotextile("C4", "nonwoven, needle-punched, continuous filament, polypropylene",
                     401, 2.92, (0.15, 0.15), 84.7, 1.0),
    "D1": Geotextile("D1", "nonwoven, needle-punched, staple-fiber, polypropylene/polyester",
                     228, 2.21, (0.075, 0.104), 88.5, 1.35),
}
