"""Haar wavelet pilling statistic and grade calibration.

Pilling shows up as low-frequency blotches, so the spread of the level-n
approximation coefficients (SDcA_n) tracks its intensity. A five-point
calibration curve maps SDcA_n back to a grade between 1 (heavy) and 5
(none).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import IncompleteCalibration, InvalidParameter, NonMonotoneCalibration, ParseError
from .imgcore import GrayImage, equalize_histogram

GRADES = (1, 2, 3, 4, 5)
DEFAULT_LEVEL = 5
CROP_FRACTION = 0.15


def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    return np.pad(x, ((0, h % 2), (0, w % 2)), mode="edge")


def haar_dwt2(grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One level of the orthonormal 2D Haar transform.

    Rows are filtered first, then columns. For a 2x2 block ``[[a, b], [c, d]]``
    this gives ``cA = (a+b+c+d)/2``, ``cH = (a+b-c-d)/2``,
    ``cV = (a-b+c-d)/2`` and ``cD = (a-b-c+d)/2``. Odd sizes are padded by
    replicating the last row/column.

    Returns
    -------
    cA, cH, cV, cD : ndarray
        Each of shape ``(ceil(h/2), ceil(w/2))``.
    """
    x = np.asarray(grid, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise InvalidParameter("need a non-empty 2D grid")
    x = _pad_even(x)
    # the two 1/sqrt(2) factors fold into one exact halving
    lo = x[:, 0::2] + x[:, 1::2]
    hi = x[:, 0::2] - x[:, 1::2]
    cA = (lo[0::2] + lo[1::2]) * 0.5
    cH = (lo[0::2] - lo[1::2]) * 0.5
    cV = (hi[0::2] + hi[1::2]) * 0.5
    cD = (hi[0::2] - hi[1::2]) * 0.5
    return cA, cH, cV, cD


def haar_idwt2(cA, cH, cV, cD) -> np.ndarray:
    """Inverse of :func:`haar_dwt2` for the padded (even) grid."""
    h, w = cA.shape
    lo = np.empty((2 * h, w))
    hi = np.empty((2 * h, w))
    lo[0::2], lo[1::2] = cA + cH, cA - cH
    hi[0::2], hi[1::2] = cV + cD, cV - cD
    x = np.empty((2 * h, 2 * w))
    x[:, 0::2], x[:, 1::2] = (lo + hi) * 0.5, (lo - hi) * 0.5
    return x


@dataclass(frozen=True)
class WaveletDecomposition:
    levels: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    source_dims: Tuple[int, int]

    def reconstruct(self) -> np.ndarray:
        """Invert every level, cropping replication padding on the way up."""
        shapes = [self.source_dims] + [lv[0].shape for lv in self.levels[:-1]]
        x = self.levels[-1][0]
        for (cA, cH, cV, cD), shape in zip(reversed(self.levels), reversed(shapes)):
            x = haar_idwt2(x, cH, cV, cD)[:shape[0], :shape[1]]
        return x


def wavedec2(grid, levels: int) -> WaveletDecomposition:
    x = np.asarray(grid, dtype=np.float64)
    out = []
    for _ in range(levels):
        if min(x.shape) < 2:
            raise InvalidParameter("grid too small for the requested level")
        coeffs = haar_dwt2(x)
        out.append(coeffs)
        x = coeffs[0]
    return WaveletDecomposition(out, tuple(np.asarray(grid).shape))


def approx_shape(shape, level: int):
    h, w = shape
    for _ in range(level):
        h, w = -(-h // 2), -(-w // 2)
    return h, w


def sd_approx(img: GrayImage, level: int = DEFAULT_LEVEL) -> float:
    """Population SD of the level-``level`` approximation after equalization."""
    if level < 1:
        raise InvalidParameter("level must be >= 1")
    h, w = approx_shape(img.pixels.shape, level)
    if h * w < 4:
        raise InvalidParameter(f"{img.width}x{img.height} image too small for level {level}")
    x = equalize_histogram(img).pixels.astype(np.float64)
    for _ in range(level):
        x = haar_dwt2(x)[0]
    return float(np.std(x))


def crop_augment(img: GrayImage) -> List[GrayImage]:
    """Original plus four crops, each dropping 15% from one edge (top, bottom, left, right)."""
    h, w = img.pixels.shape
    if h < 20 or w < 20:
        raise InvalidParameter("image must be at least 20x20")
    dy = int(np.floor(CROP_FRACTION * h + 0.5))
    dx = int(np.floor(CROP_FRACTION * w + 0.5))
    p = img.pixels
    return [img, img.with_pixels(p[dy:]), img.with_pixels(p[:h - dy]),
            img.with_pixels(p[:, dx:]), img.with_pixels(p[:, :w - dx])]


@dataclass(frozen=True)
class PillingCalibration:
    """Mean SDcA per grade; ``increasing`` is True when SDcA grows with grade."""

    points: Tuple[Tuple[int, float], ...]
    level: int

    @property
    def increasing(self) -> bool:
        return self.points[-1][1] > self.points[0][1]

    def to_text(self) -> str:
        lines = [f"level {self.level}"]
        lines += [f"{g} {m!r}" for g, m in self.points]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PillingCalibration":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        try:
            if rows[0][0] != "level" or len(rows[0]) != 2:
                raise ParseError("first line must be 'level <n>'")
            level = int(rows[0][1])
            pts = tuple(sorted((int(g), float(m)) for g, m in rows[1:]))
        except (IndexError, ValueError) as e:
            raise ParseError(f"bad calibration record: {e}") from None
        if tuple(g for g, _ in pts) != GRADES:
            raise IncompleteCalibration("calibration must list grades 1..5 once each")
        _check_monotone(pts)
        return cls(pts, level)


def _check_monotone(pts):
    d = np.diff([m for _, m in pts])
    if not (np.all(d > 0) or np.all(d < 0)):
        raise NonMonotoneCalibration(
            "mean SDcA is not strictly monotone in grade; try another level")


def calibrate(samples: Sequence[Tuple[int, GrayImage]], level: int = DEFAULT_LEVEL) -> PillingCalibration:
    """Per-grade mean SDcA over every sample and its four crops."""
    by_grade = {g: [] for g in GRADES}
    for g, img in samples:
        if g not in by_grade:
            raise InvalidParameter(f"grade {g} outside 1..5")
        by_grade[g] += [sd_approx(c, level) for c in crop_augment(img)]
    missing = [g for g in GRADES if not by_grade[g]]
    if missing:
        raise IncompleteCalibration(f"no samples for grade(s) {missing}")
    pts = tuple((g, float(np.mean(by_grade[g]))) for g in GRADES)
    _check_monotone(pts)
    return PillingCalibration(pts, level)


def grade_from_sd(sd: float, cal: PillingCalibration) -> float:
    grades = np.array([g for g, _ in cal.points], dtype=np.float64)
    means = np.array([m for _, m in cal.points])
    if not cal.increasing:
        grades, means = grades[::-1], means[::-1]
    # np.interp clamps outside the node range
    return float(np.interp(sd, means, grades))


def grade(img: GrayImage, cal: PillingCalibration) -> float:
    """Fractional grade in [1, 5] by inverse piecewise-linear interpolation."""
    return grade_from_sd(sd_approx(img, cal.level), cal)
