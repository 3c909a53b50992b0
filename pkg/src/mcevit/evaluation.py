"""Accuracy, confusion matrices, DET curves, robustness sweeps and feature export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import CLASS_DIRS, LabeledImage
from .fusion import FusionModel, infer_probabilities, predict_from_probabilities, preprocess_batch
from .imaging import ImageU8, JpegSimConfig, NoiseSpec, Subsampling, add_gaussian_noise, jpeg_roundtrip

DEFAULT_JPEG_FACTORS = tuple(range(100, 0, -10))
DEFAULT_NOISE_SIGMAS = (5.0, 10.0, 15.0, 20.0, 25.0)


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of positions where the prediction equals the label."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in length")
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.count_nonzero(p == y)) / p.size


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, predictions, labels, classes: int = 3) -> "ConfusionMatrix":
        counts = np.zeros((classes, classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def per_class_accuracy(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.counts) / np.maximum(rows, 1), np.nan)

    def pretty(self, names: Sequence[str] = CLASS_DIRS) -> str:
        width = max(8, *(len(n) for n in names)) + 1
        lines = ["true\\pred".ljust(width) + "".join(n.rjust(width) for n in names)]
        for name, row in zip(names, self.counts):
            lines.append(name.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
        return "\n".join(lines)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    per_class: np.ndarray
    confusion: ConfusionMatrix
    probabilities: np.ndarray
    predictions: np.ndarray


def evaluate_probabilities(probs: np.ndarray, labels: Sequence[int]) -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    preds = predict_from_probabilities(probs)
    cm = ConfusionMatrix.from_predictions(preds, labels, probs.shape[1])
    return EvalResult(accuracy(preds, labels), cm.per_class_accuracy(), cm, probs, preds)


def evaluate(model: FusionModel, images: Sequence[ImageU8], labels: Sequence[int]) -> EvalResult:
    rgb, ycc = preprocess_batch(images, model.config)
    probs, _ = infer_probabilities(model, rgb, ycc)
    return evaluate_probabilities(probs, labels)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepPoint:
    value: float
    accuracy: float
    per_class: np.ndarray
    confusion: ConfusionMatrix


@dataclass(frozen=True)
class SweepReport:
    axis_name: str
    points: tuple[SweepPoint, ...]

    def __post_init__(self) -> None:
        axis = np.array(self.axis, dtype=np.float64)
        if len(axis) > 1:
            d = np.diff(axis)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"sweep axis must be strictly monotone, got {list(axis)}")

    @property
    def axis(self) -> list[float]:
        return [p.value for p in self.points]

    def point(self, value: float) -> SweepPoint:
        for p in self.points:
            if p.value == value:
                return p
        raise KeyError(value)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = [self.axis_name, "accuracy"] + [f"accuracy_{n}" for n in CLASS_DIRS]
            header += [f"cm_{t}_{p}" for t in CLASS_DIRS for p in CLASS_DIRS]
            w.writerow(header)
            for pt in self.points:
                row = [_fmt_axis(pt.value), repr(pt.accuracy)] + [repr(float(a)) for a in pt.per_class]
                row += [int(v) for v in pt.confusion.counts.reshape(-1)]
                w.writerow(row)

    def write_class_csv(self, path: str | Path) -> None:
        """Long format ``value, class, accuracy`` for per-class decay plots."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis_name, "class", "accuracy"])
            for pt in self.points:
                for name, acc in zip(CLASS_DIRS, pt.per_class):
                    w.writerow([_fmt_axis(pt.value), name, repr(float(acc))])


def _fmt_axis(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _sweep(model, images, labels, values, degrade, axis_name) -> SweepReport:
    points = []
    for v in values:
        degraded = [degrade(img, i, v) for i, img in enumerate(images)]
        res = evaluate(model, degraded, labels)
        points.append(SweepPoint(v, res.accuracy, res.per_class, res.confusion))
    return SweepReport(axis_name, tuple(points))


def jpeg_sweep(
    model: FusionModel,
    images: Sequence[ImageU8],
    labels: Sequence[int],
    factors: Sequence[int] = DEFAULT_JPEG_FACTORS,
    subsampling: Subsampling = Subsampling.S420,
) -> SweepReport:
    """Accuracy of the full pipeline on test images JPEG-degraded at each quality."""
    if len(factors) == 0:
        raise ValueError("no quality factors given")

    def degrade(img, _i, q):
        return jpeg_roundtrip(img, JpegSimConfig(int(q), subsampling))

    return _sweep(model, images, labels, [int(q) for q in factors], degrade, "quality")


def noise_seed(seed: int, index: int, sigma: float) -> int:
    """Per-image noise seed, stable across runs and independent of sweep order."""
    ss = np.random.SeedSequence([seed, index, int(round(sigma * 1000))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def noise_sweep(
    model: FusionModel,
    images: Sequence[ImageU8],
    labels: Sequence[int],
    sigmas: Sequence[float] = DEFAULT_NOISE_SIGMAS,
    seed: int = 0,
) -> SweepReport:
    if len(sigmas) == 0:
        raise ValueError("no sigma values given")

    def degrade(img, i, s):
        return add_gaussian_noise(img, NoiseSpec(float(s), noise_seed(seed, i, s)))

    return _sweep(model, images, labels, [float(s) for s in sigmas], degrade, "sigma")


# ---------------------------------------------------------------- DET


@dataclass(frozen=True)
class ClassDet:
    thresholds: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray
    defined: bool


@dataclass(frozen=True)
class DetCurve:
    classes: tuple[ClassDet, ...]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "threshold", "fpr", "fnr", "defined"])
            for name, c in zip(CLASS_DIRS, self.classes):
                for t, fp, fn in zip(c.thresholds, c.fpr, c.fnr):
                    w.writerow([name, repr(float(t)), repr(float(fp)), repr(float(fn)), int(c.defined)])


def default_thresholds(count: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


def det_curve(probs: np.ndarray, labels: Sequence[int], thresholds=None) -> DetCurve:
    """One-vs-rest error rates per class, calling positive when ``p_c >= t``.

    A class with no positives or no negatives gets ``defined=False`` and NaN rates
    for the missing side.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    t = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    out = []
    for c in range(probs.shape[1]):
        pos = labels == c
        n_pos, n_neg = int(pos.sum()), int((~pos).sum())
        called = probs[:, c][None, :] >= t[:, None]
        fp = (called & ~pos[None, :]).sum(axis=1)
        fn = (~called & pos[None, :]).sum(axis=1)
        fpr = fp / n_neg if n_neg else np.full(len(t), np.nan)
        fnr = fn / n_pos if n_pos else np.full(len(t), np.nan)
        out.append(ClassDet(t.copy(), np.asarray(fpr, float), np.asarray(fnr, float), bool(n_pos and n_neg)))
    return DetCurve(tuple(out))


def model_det_curve(model: FusionModel, images: Sequence[ImageU8], labels: Sequence[int], thresholds=None) -> DetCurve:
    return det_curve(evaluate(model, images, labels).probabilities, labels, thresholds)


# ---------------------------------------------------------------- features


def export_features(model: FusionModel, items: Sequence[LabeledImage]) -> list[tuple[str, int, np.ndarray]]:
    """The concatenated pre-head vector for each item, in input order."""
    rgb, ycc = preprocess_batch([it.image for it in items], model.config)
    _, feats = infer_probabilities(model, rgb, ycc)
    return [(it.id, it.label, feats[i]) for i, it in enumerate(items)]


def write_features_csv(path: str | Path, rows: list[tuple[str, int, np.ndarray]]) -> None:
    width = len(rows[0][2]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{i}" for i in range(width)])
        for ident, label, vec in rows:
            w.writerow([ident, label] + [repr(float(v)) for v in vec])


def write_eval_csv(path: str | Path, result: EvalResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["accuracy", repr(result.accuracy)])
        for name, a in zip(CLASS_DIRS, result.per_class):
            w.writerow([f"accuracy_{name}", repr(float(a))])
        for t, row in zip(CLASS_DIRS, result.confusion.counts):
            for p, v in zip(CLASS_DIRS, row):
                w.writerow([f"cm_{t}_{p}", int(v)])
