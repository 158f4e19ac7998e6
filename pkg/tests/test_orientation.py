import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nonwoven.errors import InvalidParameter, NoSignal
from nonwoven.imgcore import BinaryImage
from nonwoven.orientation import (VARIANTS, DetectedLine, angular_distribution,
                                  angular_error, apply_variant, center_crop,
                                  estimate_line_lengths, family_weights, fft2, fft_last_axis,
                                  fft_orientation, hough_orientation, hough_peaks,
                                  hough_transform, l1_distance, orientation_from_hough,
                                  progressive_lines, study_effects)
from nonwoven.synthgen import WebSpec, gen_fiber_web


def naive_dft2(f):
    """Direct double-sum DFT with 1/N scaling, N = sqrt(M * K)."""
    m, k = f.shape
    out = np.zeros((m, k), dtype=complex)
    for u in range(m):
        for v in range(k):
            s = 0j
            for x in range(m):
                for y in range(k):
                    s += f[x, y] * complex(math.cos(-2 * math.pi * (u * x / m + v * y / k)),
                                           math.sin(-2 * math.pi * (u * x / m + v * y / k)))
            out[u, v] = s
    return np.fft.fftshift(out) / math.sqrt(m * k)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_fft_matches_naive_dft(n):
    f = np.random.default_rng(n).random((n, n)) * 255
    got = fft2(f).coefficients
    ref = naive_dft2(f)
    assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_fft_rectangular_and_padding():
    f = np.random.default_rng(0).random((4, 8))
    assert np.allclose(fft2(f).coefficients, naive_dft2(f), atol=1e-9)
    s = fft2(np.ones((5, 6)))
    assert s.coefficients.shape == (8, 8) and s.padded and s.source_shape == (5, 6)


def test_fft_constant_and_impulse():
    n, c = 16, 7.0
    s = fft2(np.full((n, n), c)).magnitudes
    assert s[n // 2, n // 2] == pytest.approx(n * c)
    s[n // 2, n // 2] = 0
    assert s.max() < 1e-9
    imp = np.zeros((n, n))
    imp[0, 0] = 1
    assert np.allclose(fft2(imp).magnitudes, 1.0 / n)


@settings(max_examples=30)
@given(arrays(np.float64, (8, 16), elements=st.floats(-1e3, 1e3)))
def test_parseval(f):
    assert np.sum(fft2(f).magnitudes ** 2) == pytest.approx(np.sum(f ** 2), rel=1e-9, abs=1e-6)


def test_fft_last_axis_matches_numpy():
    a = np.random.default_rng(1).random((3, 64))
    assert np.allclose(fft_last_axis(a), np.fft.fft(a, axis=-1), atol=1e-10)
    with pytest.raises(InvalidParameter):
        fft_last_axis(np.ones(6))


# ---------------------------------------------------------- distributions

def _web(angles, n=60, size=256, seed=0, length=(40, 100), fg=255, bg=0):
    spec = WebSpec(size, size, n, tuple((a, 1.0) for a in angles), length, seed=seed,
                   foreground=fg, background=bg)
    return gen_fiber_web(spec)[0]


def test_vertical_lines_mode():
    dist = fft_orientation(_web([90.0]))
    assert dist.mode_bin() == dist.bin_of(90.0) == 9
    assert dist.weights.sum() == pytest.approx(1.0)


def test_uniform_offset_is_invisible():
    img = _web([30.0, 120.0], fg=200, bg=10)
    a = fft_orientation(img)
    b = fft_orientation(img.pixels.astype(float) + 40)
    assert l1_distance(a, b) < 1e-12


def test_white_noise_is_near_uniform():
    for seed in range(50):
        f = np.random.default_rng(seed).random((128, 128)) * 255
        w = fft_orientation(f).weights
        assert w.max() <= 2 * w.min()


def test_distribution_errors():
    with pytest.raises(NoSignal):
        fft_orientation(np.full((8, 8), 3.0))
    with pytest.raises(InvalidParameter):
        angular_distribution(fft2(np.eye(8)), 2)


def test_family_weights_and_error():
    from nonwoven.orientation import OrientationDistribution
    w = np.zeros(18)
    w[4] = 0.75
    w[13] = 0.25
    d = OrientationDistribution(w)
    assert family_weights(d, [45, 135]) == pytest.approx([0.75, 0.25])
    assert angular_error(d, [45, 135]) == pytest.approx(0.0)


# ---------------------------------------------------------------- Hough

def _bits(shape, pts):
    b = np.zeros(shape, dtype=bool)
    for x, y in pts:
        b[y, x] = True
    return BinaryImage(b)


def test_hough_horizontal_points():
    acc = hough_transform(_bits((40, 60), [(x, 17) for x in range(5, 50)]))
    i, j = np.unravel_index(np.argmax(acc.counts), acc.counts.shape)
    assert acc.counts.max() == 45
    assert acc.rhos[i] == 17 and acc.thetas[j] == 90


def test_hough_diagonal():
    acc = hough_transform(_bits((50, 50), [(k, k) for k in range(50)]))
    i, j = np.unravel_index(np.argmax(acc.counts), acc.counts.shape)
    assert acc.rhos[i] == 0 and acc.thetas[j] == 135 and acc.counts.max() == 50


def test_hough_empty():
    acc = hough_transform(BinaryImage(np.zeros((10, 10), bool)))
    assert not acc.counts.any()
    assert hough_peaks(acc) == []


def test_hough_brute_force_votes():
    pts = [(3, 4), (10, 2), (7, 7)]
    acc = hough_transform(_bits((12, 12), pts), 1.0, 15.0)
    ref = np.zeros_like(acc.counts)
    for x, y in pts:
        for j, th in enumerate(acc.thetas):
            rho = x * math.cos(math.radians(th)) + y * math.sin(math.radians(th))
            ref[int(math.floor(rho + 0.5)) + acc.rho_offset, j] += 1
    assert np.array_equal(acc.counts, ref)


def test_peaks_two_lines_in_order():
    pts = [(x, 20) for x in range(100)] + [(110, y) for y in range(30, 110)]
    acc = hough_transform(_bits((120, 120), pts))
    peaks = hough_peaks(acc, 5, (4, 4), min_support=50)
    assert [(p.rho, p.theta, p.support) for p in peaks] == [(20, 90, 100), (110, 0, 80)]


def test_peaks_min_support_and_suppression():
    acc = hough_transform(_bits((60, 60), [(x, 20) for x in range(50)]
                                + [(x, 22) for x in range(5, 45)]))
    assert hough_peaks(acc, 5, min_support=1000) == []
    peaks = hough_peaks(acc, 1, (4, 4))
    strong = hough_peaks(acc, 5, (4, 4), min_support=30)
    assert peaks[0].rho == 20 and len(strong) == 1


@pytest.mark.parametrize("angle", np.arange(0.0, 180.0, 7.3))
def test_length_of_straight_line(angle):
    img, _ = gen_fiber_web(WebSpec(200, 200, 1, ((float(angle), 1.0),), (100, 100), seed=1))
    b = BinaryImage(img.pixels > 0)
    acc = hough_transform(b)
    lines = estimate_line_lengths(b, hough_peaks(acc, 1, (3, 3)), band=1.0)
    assert 95 <= lines[0].estimated_length <= 100


def test_refinement_fixes_coarse_theta():
    img, _ = gen_fiber_web(WebSpec(200, 200, 1, ((11.1, 1.0),), (100, 100), seed=0))
    b = BinaryImage(img.pixels > 0)
    peak = hough_peaks(hough_transform(b), 1, (3, 3))
    raw = estimate_line_lengths(b, peak, refine=False)[0].estimated_length
    fit = estimate_line_lengths(b, peak)[0].estimated_length
    assert raw < 95 <= fit <= 100


def test_curved_arc_is_shorter():
    for seed in range(3):
        est = []
        for c in (0.0, 0.15):
            img, _ = gen_fiber_web(WebSpec(256, 256, 1, ((60.0, 1.0),), (120, 120),
                                           curvature=c, seed=seed))
            b = BinaryImage(img.pixels > 0)
            acc = hough_transform(b)
            est.append(estimate_line_lengths(b, hough_peaks(acc, 1, (3, 3)))[0]
                       .estimated_length)
        assert est[1] < est[0]


def test_empty_band_length_zero():
    b = _bits((20, 20), [(2, 2)])
    out = estimate_line_lengths(b, [DetectedLine(15.0, 0.0, 1)])
    assert out[0].estimated_length == 0.0 and out[0].support == 0


def test_orientation_from_lines():
    zero = [DetectedLine(5.0, 90.0, 10, 30.0), DetectedLine(9.0, 90.0, 10, 12.0)]
    d = orientation_from_hough(zero)
    assert d.weights[0] == 1.0
    mixed = [DetectedLine(5.0, 90.0, 10, 40.0), DetectedLine(5.0, 0.0, 10, 40.0)]
    d = orientation_from_hough(mixed)
    assert d.weights[0] == d.weights[9] == 0.5
    counted = orientation_from_hough([DetectedLine(0, 90, 1, 100.0),
                                      DetectedLine(0, 0, 1, 1.0)], weighting="by_count")
    assert counted.weights[0] == counted.weights[9] == 0.5
    with pytest.raises(NoSignal):
        orientation_from_hough([])


def test_progressive_lines_claim_pixels():
    pts = [(x, 20) for x in range(10, 90)] + [(50, y) for y in range(30, 90)]
    lines = progressive_lines(_bits((100, 100), pts), min_support=10)
    assert sorted((l.theta, l.support) for l in lines) == [(0.0, 60), (90.0, 80)]
    assert sorted(l.estimated_length for l in lines) == [59.0, 79.0]


def test_hough_mode_on_web():
    img, _ = gen_fiber_web(WebSpec(256, 256, 60, ((45.0, 0.8), (135.0, 0.2)), (40, 100), seed=2))
    dist, lines = hough_orientation(BinaryImage(img.pixels > 0))
    assert dist.mode_bin() == 4
    assert family_weights(dist, [45, 135])[0] == pytest.approx(0.8, abs=0.1)


# -------------------------------------------------------------- studies

def test_variants():
    px = np.arange(90 * 90, dtype=float).reshape(90, 90) % 200
    assert apply_variant(px, "magnification:30").shape == (90, 90)
    assert apply_variant(px, "magnification:50").shape == (54, 54)
    with pytest.raises(InvalidParameter):
        apply_variant(px, "magnification:100")  # 27 px < minimum crop
    circ = apply_variant(px, "frame_circle")
    assert circ[0, 0] == 0 and circ[45, 45] == px[45, 45]
    assert np.array_equal(apply_variant(px, "brightness_uniform"), px + 40)
    grad = apply_variant(px, "brightness_gradient")
    assert grad[:, 0] == pytest.approx(np.floor(px[:, 0] * 0.5 + 0.5))
    with pytest.raises(InvalidParameter):
        apply_variant(px, "sepia")
    assert center_crop(px, 0.5).shape == (45, 45)


def test_study_effects():
    img = _web([20.0, 100.0], fg=200, bg=10)
    _, _, uni = study_effects(img, "brightness_uniform")
    _, _, grad = study_effects(img, "brightness_gradient")
    _, _, circ = study_effects(img, "frame_circle")
    _, _, square = study_effects(img, "frame_square")
    assert uni < 1e-9 < grad
    assert circ > 0 and square == 0
    assert len(VARIANTS) == 7
