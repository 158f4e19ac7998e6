"""Seeded synthetic inputs with exact ground truth.

Every generator is a pure function of its arguments; randomness comes from
:class:`nonwoven.rng.SplitMix64`, so a seed reproduces the same image
bit-for-bit on any platform.

Angles follow image coordinates: a fiber at angle ``a`` runs along
``(cos a, sin a)`` in ``(x, y)`` with ``y`` pointing down the rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi

from .errors import InvalidParameter, PlacementFailure
from .imgcore import BinaryImage, GrayImage
from .rng import SplitMix64
from .roughness import DEFAULT_H_MAX, HeightMap

DEFECT_KINDS = ("non_defect", "thick_spot", "thin_spot", "neps")

PILL_BLOBS_PER_GRADE = 8
PILL_SIGMA_RANGE = (4.0, 8.0)


@dataclass(frozen=True)
class WebSpec:
    width: int
    height: int
    line_count: int
    angle_distribution: Sequence[Tuple[float, float]] = ((0.0, 1.0),)
    length_range: Tuple[float, float] = (20.0, 60.0)
    thickness: int = 1
    curvature: float = 0.0
    seed: int = 0
    foreground: int = 255
    background: int = 0

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParameter("canvas must have positive area")
        if self.line_count < 0:
            raise InvalidParameter("line_count must be >= 0")
        weights = [w for _, w in self.angle_distribution]
        if self.line_count and (not weights or any(not w > 0 for w in weights)
                                or not math.isfinite(sum(weights))):
            raise InvalidParameter("angle weights must be positive and finite")
        if any(not 0 <= a < 180 for a, _ in self.angle_distribution):
            raise InvalidParameter("angles must lie in [0, 180)")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise InvalidParameter("length_range must satisfy 1 <= min <= max")
        if self.thickness < 1:
            raise InvalidParameter("thickness must be >= 1")
        if self.curvature < 0:
            raise InvalidParameter("curvature must be >= 0")


@dataclass(frozen=True)
class LineTruth:
    angle: float
    arc_length: float
    endpoints: Tuple[Tuple[float, float], Tuple[float, float]]
    clipped: bool
    chord_length: float


@dataclass
class GroundTruth:
    lines: List[LineTruth] = field(default_factory=list)
    pores: List[float] = field(default_factory=list)
    porosity_2d: float = 0.0


def apportion(count: int, weights: Sequence[float]) -> List[int]:
    """Largest-remainder split of ``count`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    quota = count * w / w.sum()
    base = np.floor(quota).astype(int)
    order = np.argsort(-(quota - base), kind="stable")
    for i in order[:count - base.sum()]:
        base[i] += 1
    return base.tolist()


def arc_geometry(arc_length: float, curvature: float):
    """Half-angle, radius and chord of a circular arc.

    ``curvature`` is the sagitta/chord ratio; ``0`` gives a straight segment.
    """
    if curvature == 0:
        return 0.0, math.inf, arc_length
    half = 2.0 * math.atan(2.0 * curvature)
    radius = arc_length / (2.0 * half)
    return half, radius, 2.0 * radius * math.sin(half)


def _fiber_centerline(angle_deg, length, curvature):
    """Centerline samples relative to the first endpoint (straight) or chord midpoint (arc)."""
    phi = math.radians(angle_deg)
    d = np.array([math.cos(phi), math.sin(phi)])
    n = np.array([-math.sin(phi), math.cos(phi)])
    if curvature == 0:
        span = (length - 1) * d
        steps = max(int(round(max(abs(span[0]), abs(span[1])))), 1)
        t = np.arange(steps + 1) / steps
        pts = t[:, None] * span[None, :]
        return pts, (np.zeros(2), span), length - 1
    half, radius, chord = arc_geometry(length, curvature)
    count = max(int(math.ceil(length * 2)), 2)
    beta = np.linspace(-half, half, count + 1)
    pts = (n[None, :] * radius * (math.cos(half) - np.cos(beta))[:, None]
           + d[None, :] * radius * np.sin(beta)[:, None])
    return pts, (pts[0], pts[-1]), chord


def _stamp(pts, angle_deg, thickness):
    phi = math.radians(angle_deg)
    n = np.array([-math.sin(phi), math.cos(phi)])
    offsets = np.arange(thickness) - (thickness - 1) / 2.0
    allpts = (pts[None, :, :] + offsets[:, None, None] * n[None, None, :]).reshape(-1, 2)
    pix = np.floor(allpts + 0.5).astype(np.int64)
    return np.unique(pix, axis=0)


def gen_fiber_web(spec: WebSpec):
    """Render hard-edged straight or curved fibers, white on black by default.

    Angles are allotted to families exactly in proportion to their weights
    (largest remainder), then shuffled; lengths and positions are uniform.
    """
    spec.validate()
    rng = SplitMix64(spec.seed)
    canvas = np.full((spec.height, spec.width), spec.background, dtype=np.uint8)
    truth = GroundTruth()
    if spec.line_count == 0:
        return GrayImage(canvas), truth

    angles = []
    for (a, _), k in zip(spec.angle_distribution,
                         apportion(spec.line_count, [w for _, w in spec.angle_distribution])):
        angles += [float(a)] * k
    order = rng.permutation(len(angles))
    lengths = rng.uniform(spec.length_range[0], spec.length_range[1], spec.line_count)
    place = rng.random(2 * spec.line_count).reshape(-1, 2)

    for i, idx in enumerate(order):
        angle, length = angles[idx], float(lengths[i])
        if spec.length_range[0] == spec.length_range[1]:
            length = float(spec.length_range[0])
        pts, ends, chord = _fiber_centerline(angle, length, spec.curvature)
        pix = _stamp(pts, angle, spec.thickness)
        lo, hi = pix.min(axis=0), pix.max(axis=0)
        shift = []
        for ax, size in ((0, spec.width), (1, spec.height)):
            a_min, a_max = -lo[ax], size - 1 - hi[ax]
            if a_max >= a_min:
                shift.append(a_min + int(math.floor(place[i, ax] * (a_max - a_min + 1))))
            else:
                shift.append(int(math.floor(place[i, ax] * size)) - (lo[ax] + hi[ax]) // 2)
        shift = np.array(shift)
        pix = pix + shift
        inside = ((pix[:, 0] >= 0) & (pix[:, 0] < spec.width)
                  & (pix[:, 1] >= 0) & (pix[:, 1] < spec.height))
        canvas[pix[inside, 1], pix[inside, 0]] = spec.foreground
        e0 = tuple(float(v) for v in ends[0] + shift)
        e1 = tuple(float(v) for v in ends[1] + shift)
        truth.lines.append(LineTruth(angle, length, (e0, e1), not bool(inside.all()), chord))
    return GrayImage(canvas), truth


def gen_ideal_surface(wavelength: float = 1.0, amplitude: float = 2.5, dpi: float = 600.0,
                      width: int = 256, height: int = 256) -> HeightMap:
    """Sinusoidal reference surface varying along x; heights in um, wavelength in mm."""
    if not (wavelength > 0 and dpi > 0 and width >= 1 and height >= 1) or amplitude < 0:
        raise InvalidParameter("surface parameters must be positive")
    pitch = 25.4 / dpi
    x = np.arange(width) * pitch
    row = amplitude / 2.0 * (1.0 + np.sin(2 * np.pi * x / wavelength))
    h_max = max(amplitude, DEFAULT_H_MAX)
    return HeightMap(np.tile(row, (height, 1)), pitch, h_max)


def gen_noisy_surface(base: HeightMap, noise_fraction: float, seed: int = 0,
                      correlation: float = 2.0) -> HeightMap:
    """``base`` plus unit-variance correlated Gaussian noise scaled by ``noise_fraction * h_max``.

    White noise is smoothed with a periodic Gaussian of ``correlation`` px
    and renormalised; heights are clipped back to ``[0, h_max]``.
    """
    if noise_fraction < 0:
        raise InvalidParameter("noise_fraction must be >= 0")
    h, w = base.heights.shape
    noise = SplitMix64(seed).normal(h * w).reshape(h, w)
    if correlation > 0:
        noise = ndi.gaussian_filter(noise, correlation, mode="wrap")
    noise = noise / noise.std()
    heights = np.clip(base.heights + noise_fraction * base.h_max * noise, 0.0, base.h_max)
    return HeightMap(heights, base.pixel_pitch, base.h_max)


def _gaussian_blob(shape, cx, cy, sigma):
    y, x = np.mgrid[0:shape[0], 0:shape[1]]
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sigma * sigma))


def pilled_base(base_seed: int, width: int, height: int) -> np.ndarray:
    rng = SplitMix64(base_seed).spawn(1)
    noise = rng.normal(width * height, loc=100.0, scale=18.0).reshape(height, width)
    return noise


def gen_pilled_texture(base_seed: int, grade_level: int, width: int = 256,
                       height: int = 256, blob_amplitude: float = 90.0) -> GrayImage:
    """Base texture plus ``(5 - grade) * 8`` bright Gaussian pills.

    Blob parameters are drawn once per seed, so lower grades contain the
    pills of every higher grade plus eight more.
    """
    if grade_level not in (1, 2, 3, 4, 5):
        raise InvalidParameter(f"grade_level must be 1..5, got {grade_level}")
    values = pilled_base(base_seed, width, height)
    n_max = 4 * PILL_BLOBS_PER_GRADE
    rng = SplitMix64(base_seed).spawn(2)
    cx = rng.uniform(0, width - 1, n_max)
    cy = rng.uniform(0, height - 1, n_max)
    sig = rng.uniform(*PILL_SIGMA_RANGE, n_max)
    for i in range((5 - grade_level) * PILL_BLOBS_PER_GRADE):
        values = values + blob_amplitude * _gaussian_blob(values.shape, cx[i], cy[i], sig[i])
    return GrayImage.from_float(values)


def gen_defect_web(kind: str, seed: int = 0, width: int = 128, height: int = 128) -> GrayImage:
    """Uniform web texture with an optional thick spot, thin spot or neps cluster."""
    if kind not in DEFECT_KINDS:
        raise InvalidParameter(f"unknown defect kind {kind!r}")
    rng = SplitMix64(seed)
    values = rng.normal(width * height, loc=80.0, scale=7.0).reshape(height, width)
    local = SplitMix64(seed).spawn(7)
    cx, cy = local.uniform(0.3, 0.7, 2) * np.array([width, height])
    broad = 0.18 * min(width, height)
    if kind == "thick_spot":
        values = values + 55.0 * _gaussian_blob(values.shape, cx, cy, broad)
    elif kind == "thin_spot":
        values = values - 45.0 * _gaussian_blob(values.shape, cx, cy, broad)
    elif kind == "neps":
        n = int(local.integers(6, 13)[0])
        spread = 0.05 * min(width, height)
        px = cx + local.normal(n, scale=spread)
        py = cy + local.normal(n, scale=spread)
        radii = local.uniform(0.8, 2.0, n)
        y, x = np.mgrid[0:height, 0:width]
        for sx, sy, r in zip(px, py, radii):
            values = np.where((x - sx) ** 2 + (y - sy) ** 2 <= r * r, 235.0, values)
    return GrayImage.from_float(values)


def gen_pore_medium(seed: int, width: int, height: int, pixel_pitch: float,
                    pore_radii: Sequence[float], pore_count: int, gap: float = 2.0,
                    max_attempts: int = 10_000):
    """Solid fiber mask with ``pore_count`` non-overlapping disks punched out.

    Radii (mm) are used in order, cycling through ``pore_radii`` when it is
    shorter than ``pore_count``. Disks keep at least ``gap`` pixels of solid
    between them so each pore stays a separate component.
    """
    if not pixel_pitch > 0:
        raise InvalidParameter("pixel_pitch must be > 0")
    if pore_count and (not pore_radii or any(not r > 0 for r in pore_radii)):
        raise InvalidParameter("pore radii must be positive")
    bits = np.ones((height, width), dtype=bool)
    truth = GroundTruth()
    rng = SplitMix64(seed)
    y, x = np.mgrid[0:height, 0:width]
    placed = []
    area = 0.0
    for i in range(pore_count):
        r_mm = float(pore_radii[i % len(pore_radii)])
        r = r_mm / pixel_pitch
        if 2 * r > min(width, height) - 1:
            raise PlacementFailure(f"pore of radius {r:.1f} px does not fit the canvas")
        for _ in range(max_attempts):
            cx, cy = rng.uniform(r, width - 1 - r, 1)[0], rng.uniform(r, height - 1 - r, 1)[0]
            if all(math.hypot(cx - px, cy - py) >= r + pr + gap for px, py, pr in placed):
                break
        else:
            raise PlacementFailure(f"could not place pore {i} after {max_attempts} attempts")
        placed.append((cx, cy, r))
        bits[(x - cx) ** 2 + (y - cy) ** 2 <= r * r] = False
        truth.pores.append(2.0 * r_mm)
        area += math.pi * r_mm * r_mm
    truth.porosity_2d = area / (width * height * pixel_pitch ** 2)
    return BinaryImage(bits, pixel_pitch), truth


def render_medium(medium: BinaryImage, seed: int = 0, fiber_level: float = 70.0,
                  pore_level: float = 190.0, noise: float = 12.0,
                  speck_fraction: float = 0.0) -> GrayImage:
    """Grayscale rendering of a binary medium: dark fibers, bright pores, noise.

    ``speck_fraction`` flips that share of isolated pixels to the opposite
    phase, mimicking salt-and-pepper contamination.
    """
    rng = SplitMix64(seed)
    h, w = medium.bits.shape
    base = np.where(medium.bits, fiber_level, pore_level)
    values = base + rng.normal(h * w, scale=noise).reshape(h, w)
    if speck_fraction > 0:
        flip = (rng.random(h * w) < speck_fraction).reshape(h, w)
        values = np.where(flip, np.where(medium.bits, pore_level, fiber_level), values)
    return GrayImage.from_float(values, medium.pixel_pitch)
