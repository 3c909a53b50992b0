"""Command-line workflow: synth, split, train, eval, sweeps, DET, dumps, features, attention.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric divergence,
5 checkpoint/config mismatch. Failures print one ``ERROR <kind> <message>`` line
to stderr; produced files are announced as ``ARTIFACT <kind> <path>`` lines.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_MISMATCH = 5

COMMANDS = (
    "synth",
    "split",
    "train",
    "eval",
    "sweep-jpeg",
    "sweep-noise",
    "det",
    "enrich-dump",
    "features",
    "attention",
)


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def artifact(kind: str, path: Path) -> None:
    print(f"ARTIFACT {kind} {path}", flush=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key-value config file (flags override it)")
    for key, (_, default, help_text) in cfgmod.SCHEMA.items():
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        common.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            metavar=key.upper(),
            default=None,
            help=f"{help_text} (default: {default})",
        )
    parser = argparse.ArgumentParser(prog="mcevit", description="Two-branch ViT image forensics workflow.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "synth": "generate the synthetic gan/graphics/real dataset",
        "split": "write a seeded 60:20:20 split manifest",
        "train": "train a model and keep the best-validation checkpoint",
        "eval": "evaluate a checkpoint on a split partition",
        "sweep-jpeg": "accuracy across JPEG quality factors",
        "sweep-noise": "accuracy across Gaussian noise levels",
        "det": "per-class DET curves",
        "enrich-dump": "dump YCbCr and enriched planes for one image",
        "features": "export the pre-head feature vectors",
        "attention": "per-branch attention rollout heatmaps for one image",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


# ---------------------------------------------------------------- helpers


def _load_items(run: RunConfig):
    from .data import load_dataset

    return load_dataset(run.data_dir)


def _ensure_split(run: RunConfig, items):
    from .data import read_split_manifest, split_dataset, write_split_manifest

    path = run.split_path
    if path.exists():
        return read_split_manifest(path)
    split = split_dataset(items, run.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_split_manifest(path, items, split)
    artifact("split", path)
    return split


def _partition(run: RunConfig, items):
    from .data import select

    if run.partition == "all":
        return list(items)
    split = _ensure_split(run, items)
    ids = {"train": split.train, "validation": split.validation, "test": split.test}[run.partition]
    return select(items, ids)


def _load_model(run: RunConfig):
    from .persist import CONFIG_NAME, WEIGHTS_NAME, fusion_config_to_kv, load_model

    for name in (WEIGHTS_NAME, CONFIG_NAME):
        if not (run.out_dir / name).exists():
            raise FileNotFoundError(f"no checkpoint at {run.out_dir / name}; run 'train' first")
    model = load_model(run.out_dir)
    saved = fusion_config_to_kv(model.config)
    requested = fusion_config_to_kv(run.fusion_config())
    clash = [k for k in cfgmod.MODEL_KEYS if k in run.explicit and saved[k] != requested[k]]
    if clash:
        from .fusion import ModelMismatchError

        k = clash[0]
        raise ModelMismatchError(f"{k} is {requested[k]} but the checkpoint was trained with {saved[k]}")
    return model


def _out(run: RunConfig, name: str) -> Path:
    run.out_dir.mkdir(parents=True, exist_ok=True)
    return run.out_dir / name


def _read_image(path: str):
    from .imageio import read_ppm

    if not path:
        raise ConfigError("this command needs --image PATH")
    return read_ppm(path)


# ---------------------------------------------------------------- commands


def cmd_synth(run: RunConfig) -> None:
    from .data import CLASS_DIRS, SynthConfig, generate_synthetic, save_dataset

    items = generate_synthetic(SynthConfig(run.per_class, run.synth_size, run.seed))
    paths = save_dataset(items, run.data_dir)
    manifest = run.data_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "class", "path"])
        for it, p in zip(items, paths):
            w.writerow([it.id, CLASS_DIRS[it.label], p.relative_to(run.data_dir).as_posix()])
    print(f"wrote {len(paths)} images to {run.data_dir}")
    artifact("dataset", run.data_dir)
    artifact("manifest", manifest)


def cmd_split(run: RunConfig) -> None:
    from .data import split_dataset, write_split_manifest

    items = _load_items(run)
    split = split_dataset(items, run.seed)
    path = run.split_path
    path.parent.mkdir(parents=True, exist_ok=True)
    write_split_manifest(path, items, split)
    print(f"train {len(split.train)} validation {len(split.validation)} test {len(split.test)}")
    artifact("split", path)


def cmd_train(run: RunConfig) -> None:
    from .fusion import init_fusion_model
    from .persist import CONFIG_NAME, WEIGHTS_NAME
    from .train import train

    items = _load_items(run)
    split = _ensure_split(run, items)
    model = init_fusion_model(run.fusion_config(), run.seed)
    _, log = train(model, items, split, run.train_config())
    best = log.best
    print(f"best epoch {best.epoch + 1} val_acc {best.val_accuracy:.4f}")
    artifact("weights", run.out_dir / WEIGHTS_NAME)
    artifact("model-config", run.out_dir / CONFIG_NAME)
    artifact("train-log", run.out_dir / "train_log.csv")


def cmd_eval(run: RunConfig) -> None:
    from .evaluation import evaluate, write_eval_csv

    model = _load_model(run)
    items = _partition(run, _load_items(run))
    res = evaluate(model, [it.image for it in items], [it.label for it in items])
    print(f"accuracy {res.accuracy:.6f} on {len(items)} images ({run.partition})")
    print(res.confusion.pretty())
    path = _out(run, f"eval_{run.partition}.csv")
    write_eval_csv(path, res)
    artifact("eval", path)


def cmd_sweep_jpeg(run: RunConfig) -> None:
    from .evaluation import jpeg_sweep
    from .fusion import Variant

    model = _load_model(run)
    items = _partition(run, _load_items(run))
    rep = jpeg_sweep(
        model,
        [it.image for it in items],
        [it.label for it in items],
        run.jpeg_factors,
        model.config.enrichment.chroma_subsampling,
    )
    for p in rep.points:
        print(f"quality {int(p.value):3d} accuracy {p.accuracy:.4f}")
    path = _out(run, "fig6_jpeg_sweep.csv")
    rep.write_csv(path)
    artifact("jpeg-sweep", path)
    # per-class decay: the single-branch ablation plays the role of the baseline figure
    name = "fig2_jpeg_class_accuracy.csv" if model.config.variant is Variant.RGB_ONLY else "fig7_jpeg_class_accuracy.csv"
    cls_path = _out(run, name)
    rep.write_class_csv(cls_path)
    artifact("jpeg-class-sweep", cls_path)


def cmd_sweep_noise(run: RunConfig) -> None:
    from .evaluation import noise_sweep

    model = _load_model(run)
    items = _partition(run, _load_items(run))
    rep = noise_sweep(model, [it.image for it in items], [it.label for it in items], run.noise_sigmas, run.seed)
    for p in rep.points:
        print(f"sigma {p.value:g} accuracy {p.accuracy:.4f}")
    path = _out(run, "fig8_noise_sweep.csv")
    rep.write_csv(path)
    artifact("noise-sweep", path)


def cmd_det(run: RunConfig) -> None:
    from .evaluation import default_thresholds, det_curve, evaluate, write_eval_csv

    model = _load_model(run)
    items = _partition(run, _load_items(run))
    labels = [it.label for it in items]
    res = evaluate(model, [it.image for it in items], labels)
    curve = det_curve(res.probabilities, labels, default_thresholds(run.det_thresholds))
    print(res.confusion.pretty())
    path = _out(run, "fig5_det.csv")
    curve.write_csv(path)
    artifact("det", path)
    cm_path = _out(run, "fig5_confusion.csv")
    write_eval_csv(cm_path, res)
    artifact("confusion", cm_path)


def cmd_enrich_dump(run: RunConfig) -> None:
    from . import imaging
    from .imageio import write_pgm, write_planes_raw

    img = _read_image(run.image)
    enrichment = run.fusion_config().enrichment
    planes = imaging.rgb_to_ycbcr(img)
    padded = imaging.pad_planes(planes, 16)
    enriched = imaging.enrich(padded, enrichment)
    h, w = img.height, img.width
    enriched = imaging.crop_planes(enriched, h, w)
    outdir = _out(run, "enrich")
    outdir.mkdir(exist_ok=True)
    stem = Path(run.image).stem
    dumps = {
        "y": planes.y_plane,
        "cb": planes.cb_plane,
        "cr": planes.cr_plane,
        "cb_enriched": enriched.cb_plane,
        "cr_enriched": enriched.cr_plane,
    }
    for name, plane in dumps.items():
        path = outdir / f"{stem}_{name}.pgm"
        write_pgm(path, plane)
        artifact("plane", path)
    raw = outdir / f"{stem}_enriched.mcev"
    write_planes_raw(raw, np.stack([enriched.y_plane, enriched.cb_plane, enriched.cr_plane]))
    artifact("enriched-raw", raw)


def cmd_features(run: RunConfig) -> None:
    from .evaluation import export_features, write_features_csv

    model = _load_model(run)
    items = _partition(run, _load_items(run))
    rows = export_features(model, items)
    path = _out(run, f"features_{run.partition}.csv")
    write_features_csv(path, rows)
    print(f"{len(rows)} rows of width {model.config.head_input_width}")
    artifact("features", path)


def cmd_attention(run: RunConfig) -> None:
    from . import nn
    from .fusion import fused_forward, preprocess
    from .imageio import write_pgm
    from .vit import attention_rollout

    model = _load_model(run)
    img = _read_image(run.image)
    rgb, ycc = preprocess(img, model.config)
    with nn.no_grad():
        res = fused_forward(model, rgb, ycc, record_attention=True)
    outdir = _out(run, "attention")
    outdir.mkdir(exist_ok=True)
    stem = Path(run.image).stem
    patch = model.config.vit.patch_size
    for branch, attn in (("rgb", res.rgb_attention), ("ycbcr", res.ycbcr_attention)):
        if attn is None or attn.shape[1] == 0:
            continue
        heat = attention_rollout(attn[0])
        big = np.kron(heat, np.ones((patch, patch)))
        path = outdir / f"{stem}_{branch}.pgm"
        write_pgm(path, big, 0.0, 1.0)
        artifact("attention", path)


HANDLERS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-jpeg": cmd_sweep_jpeg,
    "sweep-noise": cmd_sweep_noise,
    "det": cmd_det,
    "enrich-dump": cmd_enrich_dump,
    "features": cmd_features,
    "attention": cmd_attention,
}


def _classify(exc: BaseException) -> tuple[int, str]:
    from .data import DatasetError
    from .fusion import ModelMismatchError
    from .imaging import ImageError
    from .nn.checkpoint import CheckpointError
    from .train import DivergenceError

    if isinstance(exc, ConfigError):
        return EXIT_CONFIG, "config"
    if isinstance(exc, ModelMismatchError):
        return EXIT_MISMATCH, "mismatch"
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGENCE, "divergence"
    if isinstance(exc, (OSError, DatasetError, ImageError, CheckpointError)):
        return EXIT_IO, "io"
    raise exc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in cfgmod.SCHEMA}
    try:
        run = cfgmod.build_run_config(args.config, overrides)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=run.threads):
            HANDLERS[args.command](run)
    except Exception as exc:  # noqa: BLE001
        code, kind = _classify(exc)
        msg = " ".join(str(exc).split())
        print(f"ERROR {kind} {msg}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
