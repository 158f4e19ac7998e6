"""Patch features, box-counting dimension and a small backprop classifier.

Patches are resampled to 128x128, described by gray statistics, white-pixel
density and fractal dimension, then classified into four web conditions by
a sigmoid MLP trained on mean squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import DivergenceError, IncompleteDataset, InvalidParameter, NotBimodal, ParseError
from .imgcore import BinaryImage, GrayImage, chow_kaneko_threshold, histogram
from .rng import SplitMix64

PATCH = 128
CLASSES = ("non_defect", "thick_spot", "thin_spot", "neps")
DEFAULT_HIDDEN = (8, 6)


class FeatureVector(NamedTuple):
    mean_gray: float
    variance_gray: float
    std_gray: float
    density_pct: float
    fractal_dim: float

    def array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


# per-class reference records; the non-defect fractal is blank (density 0) and taken as 0
TABLE3 = {
    "non_defect": FeatureVector(81.04, 48.28, 6.95, 0.0, 0.0),
    "thick_spot": FeatureVector(89.45, 92.92, 9.64, 25.18, 1.6812),
    "thin_spot": FeatureVector(67.16, 75.51, 8.69, 42.11, 1.8266),
    "neps": FeatureVector(84.65, 60.84, 7.79, 0.23, 0.4101),
}


def resample_nearest(px: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resample with source index ``floor(i * n / size)``."""
    h, w = px.shape
    rows = (np.arange(height) * h) // height
    cols = (np.arange(width) * w) // width
    return px[rows[:, None], cols[None, :]]


def normalize_patch(img: GrayImage) -> GrayImage:
    return img.with_pixels(resample_nearest(img.pixels, PATCH, PATCH))


def box_counts(bits: np.ndarray):
    """Occupied-box counts for box sizes ``side, side/2, ..., 2``."""
    side = bits.shape[0]
    sizes, counts = [], []
    s = side
    while s >= 2:
        n = side // s
        occ = bits.reshape(n, s, n, s).any(axis=(1, 3))
        sizes.append(s)
        counts.append(int(occ.sum()))
        s //= 2
    return np.array(sizes), np.array(counts)


def pow2_square(bin) -> np.ndarray:
    """Nearest resample to the largest power-of-two square not exceeding the longer side."""
    bits = bin.bits if isinstance(bin, BinaryImage) else np.asarray(bin, dtype=bool)
    h, w = bits.shape
    side = 1 << (max(h, w, 2).bit_length() - 1)
    if (h, w) != (side, side):
        bits = resample_nearest(bits, side, side)
    return bits


def box_count_dimension(bin) -> float:
    """Least-squares slope of ``log N(s)`` against ``log(1/s)`` over :func:`pow2_square`.

    An empty set has dimension 0.
    """
    bits = pow2_square(bin)
    if not bits.any():
        return 0.0
    sizes, counts = box_counts(bits)
    if sizes.size < 2:
        return 0.0
    x = np.log(1.0 / sizes)
    y = np.log(counts)
    xm = x.mean()
    return float(((x - xm) * (y - y.mean())).sum() / ((x - xm) ** 2).sum())


def sierpinski_carpet(depth: int) -> np.ndarray:
    """Boolean carpet of side ``3**depth``; True marks the retained set."""
    grid = np.ones((1, 1), dtype=bool)
    hole = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=bool)
    for _ in range(depth):
        grid = np.kron(hole, grid).astype(bool)
    return grid


def patch_threshold(img: GrayImage) -> float:
    """Chow-Kaneko threshold when the histogram is bimodal, else the mean gray."""
    try:
        return float(chow_kaneko_threshold(histogram(img)))
    except NotBimodal:
        return float(img.pixels.mean())


def extract_features(img: GrayImage) -> FeatureVector:
    patch = normalize_patch(img)
    g = patch.pixels.astype(np.float64)
    var = float(g.var())
    white = g > patch_threshold(patch)
    density = 100.0 * float(white.mean())
    fractal = box_count_dimension(white) if white.any() else 0.0
    return FeatureVector(float(g.mean()), var, math.sqrt(var), density, fractal)


# ----------------------------------------------------------------- MLP

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpNetwork:
    """Fully connected sigmoid network with stored input standardization."""

    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    mean: np.ndarray
    scale: np.ndarray
    seed: int = 0

    def forward(self, x: np.ndarray) -> List[np.ndarray]:
        a = (np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.mean) / self.scale
        acts = [a]
        for w, b in zip(self.weights, self.biases):
            a = _sigmoid(a @ w + b)
            acts.append(a)
        return acts

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[-1]

    def to_text(self) -> str:
        out = ["layers " + " ".join(map(str, self.layer_sizes)), f"seed {self.seed}",
               "mean " + " ".join(repr(float(v)) for v in self.mean),
               "scale " + " ".join(repr(float(v)) for v in self.scale)]
        for w, b in zip(self.weights, self.biases):
            out.append("W " + " ".join(repr(float(v)) for v in w.ravel()))
            out.append("b " + " ".join(repr(float(v)) for v in b))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MlpNetwork":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        try:
            tags = [r[0] for r in rows]
            if tags[:4] != ["layers", "seed", "mean", "scale"]:
                raise ParseError("missing network header")
            sizes = tuple(int(v) for v in rows[0][1:])
            vals = lambda r: np.array([float(v) for v in r[1:]])
            ws, bs = [], []
            for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
                wr, br = rows[4 + 2 * i], rows[5 + 2 * i]
                if wr[0] != "W" or br[0] != "b":
                    raise ParseError("expected W/b rows")
                ws.append(vals(wr).reshape(n_in, n_out))
                bs.append(vals(br).reshape(n_out))
            net = cls(sizes, ws, bs, vals(rows[2]), vals(rows[3]), int(rows[1][1]))
        except (IndexError, ValueError) as e:
            raise ParseError(f"bad network record: {e}") from None
        if net.mean.size != sizes[0] or net.scale.size != sizes[0]:
            raise ParseError("standardization size mismatch")
        return net


class TrainReport(NamedTuple):
    epochs: int
    mse_curve: List[float]
    final_mse: float


def _as_arrays(data, n_classes):
    x = np.array([np.asarray(f, dtype=np.float64) for f, _ in data])
    labels = []
    for _, c in data:
        labels.append(CLASSES.index(c) if isinstance(c, str) else int(c))
    y = np.array(labels, dtype=np.int64)
    missing = sorted(set(range(n_classes)) - set(y.tolist()))
    if missing:
        raise IncompleteDataset(f"no samples for class index(es) {missing}")
    return x, y


def mlp_train(data: Sequence[Tuple[Sequence[float], object]],
              hidden: Sequence[int] = DEFAULT_HIDDEN, lr: float = 0.1, epochs: int = 2000,
              seed: int = 0, n_classes: int = 4, average: bool = False):
    """Full-batch gradient descent on MSE against one-hot targets.

    Labels may be class names or indices. Inputs are z-scored with the
    training mean and SD (a zero SD is replaced by 1). Each epoch takes one
    step along the gradient of half the summed squared error over all
    patterns; ``average=True`` divides it by the pattern count instead.
    ``mse_curve[k]`` is the loss of the weights at the start of epoch ``k``.

    Returns
    -------
    net : MlpNetwork
    report : TrainReport
    """
    if not (lr > 0 and math.isfinite(lr)) or epochs < 1:
        raise InvalidParameter("need a finite lr > 0 and epochs >= 1")
    x, y = _as_arrays(data, n_classes)
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("features must be finite")
    target = np.eye(n_classes)[y]
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    sizes = (x.shape[1],) + tuple(int(h) for h in hidden) + (n_classes,)
    rng = np.random.default_rng(seed)
    ws = [rng.uniform(-1, 1, (a, b)) / math.sqrt(a) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    net = MlpNetwork(sizes, ws, bs, mean, scale, seed)
    n = x.shape[0]
    curve = []
    for _ in range(epochs):
        acts = net.forward(x)
        err = acts[-1] - target
        mse = float(np.mean(err ** 2))
        if not math.isfinite(mse):
            raise DivergenceError("loss became non-finite")
        curve.append(mse)
        # gradient of 0.5 * SSE summed over patterns (classic batch backprop)
        delta = err * acts[-1] * (1 - acts[-1]) / (n if average else 1)
        for k in range(len(ws) - 1, -1, -1):
            gw = acts[k].T @ delta
            gb = delta.sum(axis=0)
            if k:
                delta = (delta @ ws[k].T) * acts[k] * (1 - acts[k])
            ws[k] -= lr * gw
            bs[k] -= lr * gb
        if not all(np.all(np.isfinite(w)) for w in ws):
            raise DivergenceError("weights became non-finite")
    return net, TrainReport(epochs, curve, curve[-1])


def one_hot_code(index: int, n: int = 4) -> str:
    return "".join("1" if i == index else "0" for i in range(n))


def classify_outputs(outputs) -> Tuple[int, str]:
    out = np.asarray(outputs, dtype=np.float64)
    k = int(np.argmax(out))  # first maximum wins ties
    return k, one_hot_code(k, out.size)


def mlp_classify(net: MlpNetwork, f) -> Tuple[str, str, np.ndarray]:
    """Class name, one-hot code and raw output confidences."""
    conf = net.predict(np.asarray(f, dtype=np.float64))[0]
    k, code = classify_outputs(conf)
    name = CLASSES[k] if conf.size == len(CLASSES) else str(k)
    return name, code, conf


def table3_clusters(n_per_class: int, seed: int, rel_sd: float = 0.05):
    """Gaussian feature clusters centered at the reference records, SD ``rel_sd * |center|``."""
    rng = SplitMix64(seed)
    data = []
    for name in CLASSES:
        c = TABLE3[name].array()
        z = rng.normal(n_per_class * c.size).reshape(n_per_class, c.size)
        for row in c + z * rel_sd * np.abs(c):
            data.append((FeatureVector(*row), name))
    order = SplitMix64(seed).spawn(1).permutation(len(data))
    return [data[i] for i in order]


def accuracy(net: MlpNetwork, data) -> float:
    hits = [mlp_classify(net, f)[0] == c for f, c in data]
    return float(np.mean(hits))
