import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonwoven.errors import InvalidParameter, PlacementFailure
from nonwoven.rng import SplitMix64
from nonwoven.synthgen import (DEFECT_KINDS, PILL_BLOBS_PER_GRADE, WebSpec, apportion,
                               arc_geometry, gen_defect_web, gen_fiber_web, gen_ideal_surface,
                               gen_noisy_surface, gen_pilled_texture, gen_pore_medium,
                               pilled_base, render_medium)


def test_rng_is_counter_based():
    a = SplitMix64(7)
    first = a.next_u64(3)
    b = SplitMix64(7)
    assert np.array_equal(np.concatenate([b.next_u64(1), b.next_u64(2)]), first)
    # reference SplitMix64 output for seed 0
    assert int(SplitMix64(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF


def test_rng_ranges():
    r = SplitMix64(3)
    u = r.random(10000)
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.01
    i = r.integers(2, 5, 1000)
    assert set(i.tolist()) == {2, 3, 4}
    assert sorted(r.permutation(10).tolist()) == list(range(10))


def test_empty_web():
    img, truth = gen_fiber_web(WebSpec(40, 30, 0))
    assert not img.pixels.any() and truth.lines == []


def test_vertical_line_pixel_count():
    img, truth = gen_fiber_web(WebSpec(200, 200, 1, ((90.0, 1.0),), (100, 100), seed=3))
    ys, xs = np.nonzero(img.pixels)
    assert len(ys) == 100 and len(set(xs.tolist())) == 1
    assert truth.lines[0].arc_length == 100 and not truth.lines[0].clipped


def test_angle_tally_matches_weights():
    _, truth = gen_fiber_web(WebSpec(256, 256, 200, ((0.0, 0.8), (90.0, 0.2)), seed=3))
    assert Counter(l.angle for l in truth.lines) == {0.0: 160, 90.0: 40}


@given(st.integers(0, 500), st.lists(st.floats(0.01, 10), min_size=1, max_size=6))
def test_apportion_sums(count, weights):
    parts = apportion(count, weights)
    assert sum(parts) == count
    exact = np.array(weights) / sum(weights) * count
    assert np.all(np.abs(np.array(parts) - exact) < 1)


def test_arc_geometry():
    assert arc_geometry(100.0, 0.0) == (0.0, math.inf, 100.0)
    for c in (0.05, 0.1, 0.2, 0.4):
        half, radius, chord = arc_geometry(100.0, c)
        assert 2 * half * radius == pytest.approx(100.0)
        sagitta = radius * (1 - math.cos(half))
        assert sagitta / chord == pytest.approx(c)
        assert chord < 100.0


def test_curved_chord_shorter():
    for seed in range(5):
        spec = WebSpec(256, 256, 1, ((30.0, 1.0),), (100, 100), curvature=0.2, seed=seed)
        _, truth = gen_fiber_web(spec)
        assert truth.lines[0].chord_length < 100


def test_web_is_deterministic():
    spec = WebSpec(64, 64, 20, ((10.0, 1.0), (100.0, 2.0)), (5, 30), 2, 0.1, seed=9)
    assert gen_fiber_web(spec)[0] == gen_fiber_web(spec)[0]


@pytest.mark.parametrize("bad", [
    dict(width=0), dict(line_count=-1), dict(angle_distribution=((200.0, 1.0),)),
    dict(angle_distribution=((10.0, 0.0),)), dict(length_range=(10, 5)), dict(thickness=0),
    dict(curvature=-1),
])
def test_web_spec_validation(bad):
    kw = dict(width=32, height=32, line_count=3)
    kw.update(bad)
    with pytest.raises(InvalidParameter):
        gen_fiber_web(WebSpec(**kw))


def test_ideal_surface():
    hm = gen_ideal_surface()
    assert hm.pixel_pitch == pytest.approx(25.4 / 600)
    assert 1.0 / hm.pixel_pitch == pytest.approx(23.622, abs=1e-3)
    assert hm.heights.max() <= 2.5 and hm.heights.min() >= 0
    fine = gen_ideal_surface(dpi=600 * 64, width=256 * 64, height=1)
    assert fine.heights.max() == pytest.approx(2.5, abs=1e-6)
    assert fine.heights.min() == pytest.approx(0.0, abs=1e-6)
    assert not gen_ideal_surface(amplitude=0).heights.any()


def test_noisy_surface_stays_in_range():
    base = gen_ideal_surface(width=64, height=64)
    n = gen_noisy_surface(base, 0.5, seed=1)
    assert n.heights.min() >= 0 and n.heights.max() <= base.h_max
    assert np.array_equal(gen_noisy_surface(base, 0.0, 1).heights, base.heights)


def test_pilled_grade5_is_base():
    img = gen_pilled_texture(4, 5)
    expect = np.clip(np.floor(pilled_base(4, 256, 256) + 0.5), 0, 255)
    assert np.array_equal(img.pixels, expect)


def test_pilled_brightness_monotone():
    means = [gen_pilled_texture(2, g).pixels.mean() for g in (5, 4, 3, 2, 1)]
    assert all(b >= a for a, b in zip(means, means[1:]))
    assert (5 - 1) * PILL_BLOBS_PER_GRADE == 32
    with pytest.raises(InvalidParameter):
        gen_pilled_texture(0, 6)


def test_defect_kinds():
    base = gen_defect_web("non_defect", 5)
    thin = gen_defect_web("thin_spot", 5)
    thick = gen_defect_web("thick_spot", 5)
    neps = gen_defect_web("neps", 5)
    assert thin.pixels.mean() < base.pixels.mean() < thick.pixels.mean()
    t = 120
    assert (neps.pixels > t).mean() < (thick.pixels > t).mean()
    assert set(DEFECT_KINDS) == {"non_defect", "thick_spot", "thin_spot", "neps"}


def test_pore_medium_geometry():
    med, truth = gen_pore_medium(0, 64, 64, 0.01, [0.1], 0)
    assert med.bits.all() and truth.porosity_2d == 0
    med, truth = gen_pore_medium(1, 100, 80, 0.01, [0.15], 1)
    assert truth.porosity_2d == pytest.approx(math.pi * 0.15 ** 2 / (100 * 80 * 1e-4))
    med, truth = gen_pore_medium(2, 400, 400, 0.01, [0.05], 50)
    assert truth.pores == [0.1] * 50


def test_pore_medium_failures():
    with pytest.raises(PlacementFailure):
        gen_pore_medium(0, 20, 20, 0.01, [0.2], 1)
    with pytest.raises(PlacementFailure):
        gen_pore_medium(0, 30, 30, 0.01, [0.05], 200, max_attempts=50)


def test_render_medium_levels():
    med, _ = gen_pore_medium(3, 64, 64, 0.01, [0.08], 3)
    img = render_medium(med, 3, noise=0.0)
    assert set(np.unique(img.pixels).tolist()) == {70, 190}
    assert img.pixel_pitch == 0.01
