"""Surface-profile criteria, roughness factor and friction regression.

A grayscale scan is read as a height field (white = highest point), five
profile criteria are measured on it and compared with an ideal sinusoidal
surface to give a bounded roughness factor ``R_s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np
from scipy import ndimage as ndi

from .errors import DegenerateFit, InvalidParameter, MissingCalibration
from .imgcore import GrayImage, equalize_histogram, gaussian_filter, wiener_filter

DEFAULT_H_MAX = 2.5  # um
RS_EPS = 1e-12
DEFAULT_WEIGHTS = (0.2, 0.2, 0.2, 0.2, 0.2)

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class HeightMap:
    """Heights in micrometres on a grid of ``pixel_pitch`` millimetres."""

    heights: np.ndarray
    pixel_pitch: float
    h_max: float = DEFAULT_H_MAX

    @property
    def width(self) -> int:
        return self.heights.shape[1]

    @property
    def height(self) -> int:
        return self.heights.shape[0]


class ProfileCriteria(NamedTuple):
    n_peaks: int
    peak_spacing_var: float
    volume: float
    gray_deviation_var: float
    peak_value_var: float
    degenerate: bool = False

    def vector(self) -> np.ndarray:
        return np.array(self[:5], dtype=np.float64)


class FrictionRecord(NamedTuple):
    surface_roughness: float
    friction_coefficient: float


def preprocess_scan(img: GrayImage, sigma: float = 1.0, window: int = 5,
                    equalize: bool = True) -> GrayImage:
    """Gaussian blur, then Wiener denoising, then optional histogram equalization."""
    out = wiener_filter(gaussian_filter(img, sigma), window)
    return equalize_histogram(out) if equalize else out


def to_height_map(img: GrayImage, h_max: float = DEFAULT_H_MAX) -> HeightMap:
    """Linear gray-to-height map, ``h = g / 255 * h_max``."""
    if not h_max > 0:
        raise InvalidParameter("h_max must be > 0")
    if img.pixel_pitch is None:
        raise MissingCalibration("image has no pixel pitch")
    return HeightMap(img.pixels.astype(np.float64) / 255.0 * h_max, img.pixel_pitch, h_max)


def height_to_gray(hm: HeightMap) -> GrayImage:
    """Inverse of :func:`to_height_map`, rounded to the nearest gray level."""
    return GrayImage.from_float(hm.heights / hm.h_max * 255.0, hm.pixel_pitch)


def _peak_labels(h: np.ndarray):
    # replicated border == ignoring out-of-grid neighbours for max/min
    is_max = h >= ndi.maximum_filter(h, size=3, mode="nearest")
    has_lower = ndi.minimum_filter(h, size=3, mode="nearest") < h
    labels, n = ndi.label(is_max, structure=_EIGHT)
    if n == 0:
        return labels, np.zeros(0, dtype=np.int64)
    keep = ndi.maximum(has_lower & is_max, labels, index=np.arange(1, n + 1)).astype(bool)
    return labels, np.flatnonzero(keep) + 1


def detect_peaks(hm: HeightMap):
    """Plateau-merged local maxima as ``(x, y, height)`` triples.

    A peak is an 8-connected set of pixels that are each >= all of their
    neighbours, with at least one pixel having a strictly lower neighbour.
    Each set is reported once, at its centroid.
    """
    h = np.asarray(hm.heights, dtype=np.float64)
    labels, ids = _peak_labels(h)
    if ids.size == 0:
        return []
    cy_cx = ndi.center_of_mass(np.ones_like(h), labels, ids)
    vals = ndi.maximum(h, labels, ids)
    return [(float(cx), float(cy), float(v)) for (cy, cx), v in zip(cy_cx, vals)]


def nearest_neighbour_distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1))


def profile_criteria(img: GrayImage, hm: HeightMap) -> ProfileCriteria:
    """The five profile criteria ``(N, T, E, I_d, V)``.

    Notes
    -----
    ``T`` is the variance of nearest-neighbour peak distances in px^2;
    ``E`` is the Riemann sum of heights times pitch^2 (um mm^2);
    ``I_d`` is the gray-level variance; ``V`` is the variance of the mean
    gray value over each peak's pixels. With fewer than two peaks ``T`` and
    ``V`` are 0 and ``degenerate`` is set.
    """
    g = img.pixels.astype(np.float64)
    h = np.asarray(hm.heights, dtype=np.float64)
    if g.shape != h.shape:
        raise InvalidParameter("image and height map differ in size")
    labels, ids = _peak_labels(h)
    n = int(ids.size)
    volume = float(h.sum() * hm.pixel_pitch ** 2)
    gray_var = float(np.var(g - g.mean()))
    if n < 2:
        return ProfileCriteria(n, 0.0, volume, gray_var, 0.0, True)
    centroids = np.array(ndi.center_of_mass(np.ones_like(h), labels, ids))
    spacing_var = float(np.var(nearest_neighbour_distances(centroids)))
    peak_gray = np.asarray(ndi.mean(g, labels, ids))
    return ProfileCriteria(n, spacing_var, volume, gray_var, float(np.var(peak_gray)), False)


def _check_weights(weights):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (5,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidParameter("need five non-negative weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidParameter(f"weights sum to {w.sum()!r}, not 1")
    return w


def surface_roughness(sample: ProfileCriteria, ideal: ProfileCriteria,
                      weights: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    """Weighted symmetric relative difference of criteria, in [0, 1]."""
    w = _check_weights(weights)
    a, b = sample.vector(), ideal.vector()
    return float(np.sum(w * np.abs(a - b) / (np.abs(a) + np.abs(b) + RS_EPS)))


def ideal_criteria(width: int, height: int, pixel_pitch: float,
                   h_max: float = DEFAULT_H_MAX) -> ProfileCriteria:
    """Criteria of the reference sinusoid at the given grid size and pitch."""
    from .synthgen import gen_ideal_surface

    hm = gen_ideal_surface(dpi=25.4 / pixel_pitch, width=width, height=height)
    # measured through the same 8-bit path as a scanned image
    img = height_to_gray(HeightMap(hm.heights, hm.pixel_pitch, h_max))
    return profile_criteria(img, to_height_map(img, h_max))


def roughness_from_image(img: GrayImage, h_max: float = DEFAULT_H_MAX,
                         weights: Sequence[float] = DEFAULT_WEIGHTS):
    """Criteria of ``img`` and its roughness against the matching ideal surface."""
    hm = to_height_map(img, h_max)
    crit = profile_criteria(img, hm)
    ideal = ideal_criteria(img.width, img.height, img.pixel_pitch, h_max)
    return crit, surface_roughness(crit, ideal, weights)


_TABLE1 = (
    (0.410, 0.395), (0.376, 0.362), (0.364, 0.348), (0.368, 0.347), (0.384, 0.373),
    (0.398, 0.386), (0.384, 0.378), (0.378, 0.362), (0.371, 0.357), (0.403, 0.394),
    (0.369, 0.360), (0.361, 0.354), (0.408, 0.401), (0.389, 0.367), (0.391, 0.383),
    (0.381, 0.371), (0.384, 0.363), (0.392, 0.376), (0.388, 0.375), (0.387, 0.365),
    (0.392, 0.378), (0.377, 0.359), (0.393, 0.379), (0.396, 0.384), (0.385, 0.368),
    (0.397, 0.389), (0.372, 0.364), (0.358, 0.344), (0.393, 0.384), (0.363, 0.354),
)


def table1_dataset() -> List[FrictionRecord]:
    """The 30 measured (roughness, friction coefficient) pairs."""
    return [FrictionRecord(rs, mu) for rs, mu in _TABLE1]


def fit_friction_regression(data: Sequence[FrictionRecord]):
    """OLS of friction on roughness; returns ``(slope, intercept, pearson_r)``."""
    if len(data) < 2:
        raise DegenerateFit("need at least two records")
    x = np.array([d.surface_roughness for d in data], dtype=np.float64)
    y = np.array([d.friction_coefficient for d in data], dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise DegenerateFit("roughness values have zero variance")
    sxy = np.sum((x - xm) * (y - ym))
    syy = np.sum((y - ym) ** 2)
    slope = sxy / sxx
    intercept = ym - slope * xm
    r = 1.0 if syy == 0 else float(np.clip(sxy / np.sqrt(sxx * syy), -1.0, 1.0))
    return float(slope), float(intercept), r
