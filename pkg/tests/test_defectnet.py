import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonwoven.defectnet import (CLASSES, PATCH, TABLE3, MlpNetwork, accuracy,
                                box_count_dimension, box_counts, classify_outputs,
                                extract_features, mlp_classify, mlp_train, normalize_patch,
                                one_hot_code, pow2_square, resample_nearest, sierpinski_carpet,
                                table3_clusters)
from nonwoven.errors import IncompleteDataset, InvalidParameter, ParseError
from nonwoven.imgcore import GrayImage
from nonwoven.synthgen import gen_defect_web

XOR = [((0, 0), 0), ((0, 1), 1), ((1, 0), 1), ((1, 1), 0)]


# ------------------------------------------------------------- resampling

def test_normalize_identity_and_half(rng):
    px = rng.integers(0, 256, (128, 128)).astype(np.uint8)
    assert np.array_equal(normalize_patch(GrayImage(px)).pixels, px)
    big = rng.integers(0, 256, (256, 256)).astype(np.uint8)
    assert np.array_equal(normalize_patch(GrayImage(big)).pixels, big[::2, ::2])


def test_normalize_non_square(rng):
    px = rng.integers(0, 256, (300, 100)).astype(np.uint8)
    out = normalize_patch(GrayImage(px)).pixels
    assert out.shape == (PATCH, PATCH)
    assert out[0, 0] == px[0, 0]
    # source index floor(i * n / 128): the last column lands on 99, the last row on 297
    assert out[127, 127] == px[297, 99]
    assert out[0, 127] == px[0, 99]


@given(st.integers(1, 300), st.integers(1, 300))
def test_resample_index_formula(n, m):
    px = np.arange(n * m).reshape(n, m)
    out = resample_nearest(px, 7, 5)
    for i in range(7):
        for j in range(5):
            assert out[i, j] == px[i * n // 7, j * m // 5]


# ---------------------------------------------------------------- fractal

def test_box_counts_brute_force(rng):
    bits = rng.random((32, 32)) < 0.05
    sizes, counts = box_counts(bits)
    assert sizes.tolist() == [32, 16, 8, 4, 2]
    for s, c in zip(sizes, counts):
        brute = sum(bits[i:i + s, j:j + s].any() for i in range(0, 32, s) for j in range(0, 32, s))
        assert c == brute


def test_dimension_of_plane_and_line():
    assert box_count_dimension(np.ones((256, 256), bool)) == pytest.approx(2.0, abs=0.05)
    line = np.zeros((256, 256), bool)
    line[100] = True
    assert box_count_dimension(line) == pytest.approx(1.0, abs=0.1)
    assert box_count_dimension(np.zeros((64, 64), bool)) == 0.0


def test_sierpinski():
    c = sierpinski_carpet(2)
    assert c.shape == (9, 9) and c.sum() == 64 and not c[4, 4] and not c[1, 1]
    carpet = sierpinski_carpet(6)
    assert pow2_square(carpet).shape == (512, 512)
    assert box_count_dimension(carpet) == pytest.approx(math.log(8) / math.log(3), abs=0.05)


# --------------------------------------------------------------- features

def test_black_patch_features():
    f = extract_features(GrayImage(np.zeros((64, 64), np.uint8)))
    assert f == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_feature_statistics(rng):
    px = rng.integers(0, 256, (128, 128)).astype(np.uint8)
    f = extract_features(GrayImage(px))
    assert f.mean_gray == pytest.approx(px.mean())
    assert f.variance_gray == pytest.approx(px.var())
    assert f.std_gray == pytest.approx(px.std())
    assert 0 < f.density_pct < 100 and 1.0 < f.fractal_dim <= 2.0


def test_defect_features_order():
    thin = extract_features(gen_defect_web("thin_spot", 3))
    base = extract_features(gen_defect_web("non_defect", 3))
    assert thin.mean_gray < base.mean_gray


def test_table3_reference():
    assert TABLE3["thick_spot"] == (89.45, 92.92, 9.64, 25.18, 1.6812)
    assert TABLE3["non_defect"].fractal_dim == 0.0


# -------------------------------------------------------------------- MLP

def test_xor():
    for seed in range(5):
        _, rep = mlp_train(XOR, (4,), lr=0.5, epochs=5000, seed=seed, n_classes=2)
        assert rep.final_mse < 0.05


def test_single_epoch_curve():
    _, rep = mlp_train(XOR, (3,), epochs=1, n_classes=2)
    assert len(rep.mse_curve) == 1 and rep.epochs == 1


def _numeric_grad(net, x, t, k, idx, eps=1e-6):
    w = net.weights[k]
    old = w[idx]
    w[idx] = old + eps
    up = 0.5 * ((net.predict(x) - t) ** 2).sum()
    w[idx] = old - eps
    dn = 0.5 * ((net.predict(x) - t) ** 2).sum()
    w[idx] = old
    return (up - dn) / (2 * eps)


def test_backprop_matches_finite_difference():
    data = [((0.2, 0.9, 0.1), 0), ((0.7, 0.3, 0.5), 1), ((0.4, 0.4, 0.9), 2)]
    net0, _ = mlp_train(data, (4,), lr=1e-12, epochs=1, seed=3, n_classes=3)
    x = np.array([f for f, _ in data], dtype=float)
    t = np.eye(3)[[c for _, c in data]]
    before = [w.copy() for w in net0.weights]
    lr = 1e-3
    net1, _ = mlp_train(data, (4,), lr=lr, epochs=1, seed=3, n_classes=3)
    # net1 started from the same weights as net0 (same seed) and took one step
    for k in range(2):
        for idx in np.ndindex(before[k].shape):
            g = _numeric_grad(net0, x, t, k, idx)
            step = (before[k][idx] - net1.weights[k][idx]) / lr
            assert step == pytest.approx(g, rel=1e-4, abs=1e-8)


def test_training_errors():
    with pytest.raises(IncompleteDataset):
        mlp_train([((0, 1), 0), ((1, 0), 1)], n_classes=4)
    with pytest.raises(InvalidParameter):
        mlp_train(XOR, lr=0, n_classes=2)
    with pytest.raises(InvalidParameter):
        mlp_train([((np.nan, 0), 0), ((1, 0), 1)], (2,), n_classes=2)
    with pytest.raises(InvalidParameter):
        mlp_train(XOR, lr=float("inf"), n_classes=2)


def test_classify_outputs():
    assert classify_outputs([0.9, 0.1, 0.1, 0.1]) == (0, "1000")
    assert classify_outputs([0.2, 0.2, 0.7, 0.1]) == (2, "0010")
    assert classify_outputs([0.5, 0.5, 0.1, 0.1]) == (0, "1000")
    assert one_hot_code(3) == "0001"


def test_network_text_round_trip():
    net, _ = mlp_train(table3_clusters(10, 0), epochs=50)
    back = MlpNetwork.from_text(net.to_text())
    f = TABLE3["thin_spot"]
    assert np.array_equal(back.predict(f.array()), net.predict(f.array()))
    assert mlp_classify(back, f)[0] == mlp_classify(net, f)[0]
    with pytest.raises(ParseError):
        MlpNetwork.from_text("layers 5 4\nseed 0\n")


def test_cluster_classifier_reference_settings():
    tr, te = table3_clusters(50, 0), table3_clusters(50, 1000)
    net, rep = mlp_train(tr, (8, 6), lr=0.1, epochs=2000, seed=0)
    assert accuracy(net, te) >= 0.95
    assert {c for _, c in tr} == set(CLASSES)
