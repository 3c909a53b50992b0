"""Mini-batch Adam training with validation-based model selection."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .data import DatasetSplit, LabeledImage, select
from .fusion import (
    BackboneMode,
    FusionModel,
    fused_forward,
    head_forward,
    head_probabilities,
    infer_probabilities,
    predict_from_probabilities,
    preprocess_batch,
)
from .persist import save_model


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"loss became NaN at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 7
    backbone_mode: BackboneMode = BackboneMode.FROZEN
    checkpoint_dir: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "backbone_mode", BackboneMode(self.backbone_mode))
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    steps: int = 0

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy", "best"])
            for r in self.epochs:
                w.writerow(
                    [
                        r.epoch,
                        repr(r.train_loss),
                        repr(r.train_accuracy),
                        repr(r.val_loss),
                        repr(r.val_accuracy),
                        int(r.epoch == self.best_epoch),
                    ]
                )


def _onehot(labels: np.ndarray, classes: int) -> np.ndarray:
    return np.eye(classes, dtype=nn.get_default_dtype())[labels]


def _score(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    if len(labels) == 0:
        return float("nan"), float("nan")
    p = np.clip(probs[np.arange(len(labels)), labels], nn.tensor.PROB_FLOOR, 1.0)
    loss = float(-np.log(p).mean())
    acc = float(np.mean(predict_from_probabilities(probs) == labels))
    return loss, acc


def train(
    model: FusionModel,
    items: list[LabeledImage],
    split: DatasetSplit,
    cfg: TrainConfig,
    progress: Callable[[str], None] | None = print,
) -> tuple[FusionModel, TrainLog]:
    """Train ``model`` in place and return it holding the best-validation weights.

    In frozen mode the branch outputs are computed once (no augmentation, fixed
    backbones) and only the dense head is optimized on the cached vectors.
    """
    if not split.train:
        raise ValueError("training split is empty")
    model.config = dataclasses.replace(model.config, backbone_mode=cfg.backbone_mode)
    model.set_trainable()
    mcfg = model.config
    train_items = select(items, split.train)
    val_items = select(items, split.validation)
    y_train = np.array([it.label for it in train_items])
    y_val = np.array([it.label for it in val_items])
    rgb_tr, ycc_tr = preprocess_batch([it.image for it in train_items], mcfg)
    rgb_va, ycc_va = preprocess_batch([it.image for it in val_items], mcfg)

    frozen = mcfg.backbone_mode is BackboneMode.FROZEN
    if frozen:
        _, z_train = infer_probabilities(model, rgb_tr, ycc_tr)
        _, z_val = infer_probabilities(model, rgb_va, ycc_va)

    params = model.trainable_parameters()
    state = nn.AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))
    log = TrainLog()
    best_acc = -1.0
    best_state: dict[str, np.ndarray] | None = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_items))
        losses, correct = [], 0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            if frozen:
                _, probs = head_forward(model.head, nn.Tensor(z_train[idx]))
            else:
                probs = fused_forward(model, rgb_tr[idx], ycc_tr[idx]).probabilities
            if not np.all(np.isfinite(probs.data)):
                raise DivergenceError(epoch, bi)
            loss = nn.crossentropy(probs, _onehot(y_train[idx], mcfg.classes))
            if not np.isfinite(loss.item()):
                raise DivergenceError(epoch, bi)
            nn.zero_grad(params)
            loss.backward()
            nn.adam_step(params, state)
            log.steps += 1
            losses.append(loss.item() * len(idx))
            correct += int(np.sum(predict_from_probabilities(probs) == y_train[idx]))

        if frozen:
            val_probs = head_probabilities(model.head, z_val)
        else:
            val_probs, _ = infer_probabilities(model, rgb_va, ycc_va)
        val_loss, val_acc = _score(val_probs, y_val)
        record = EpochRecord(epoch, sum(losses) / len(order), correct / len(order), val_loss, val_acc)
        log.epochs.append(record)
        if best_state is None or val_acc > best_acc:
            best_acc = val_acc
            best_state = model.state_dict()
            log.best_epoch = epoch
        if progress is not None:
            progress(
                f"epoch {epoch + 1}/{cfg.epochs} loss {record.train_loss:.4f} acc {record.train_accuracy:.4f} "
                f"val_loss {val_loss:.4f} val_acc {val_acc:.4f}"
            )

    model.load_state_dict(best_state)
    if cfg.checkpoint_dir is not None:
        out = Path(cfg.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_model(out, model)
        log.write_csv(out / "train_log.csv")
    return model, log
