"""Command-line front end: gen, train, attack, roc.

Every command is driven by one JSON config and writes its artifacts under
the config's out_dir.  Reruns with the same config produce byte-identical
files, so outputs can be diffed across machines.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nn
from .attack import (
    ARCHS,
    SPLIT_TEST,
    SPLIT_VAL,
    STREAM_REPRINT_AUTH,
    STREAM_REPRINT_FAKE,
    AttackModel,
    PairedDataset,
    baseline_thr,
    build_dataset,
    calibrate_pixel_threshold,
    calibrate_threshold,
    estimate_grey,
    load_dataset,
    save_dataset,
    split_arrays,
    stream_seed,
    train_attack,
)
from .channel import ChannelParams, preset_with_overrides
from .codegen import BYTE0_255, Geometry, PixelImage, binarize, ink_intensity, modules_from_pixels
from .detector import MEASURES, auc, hamming_norm, pd_at_pfa, pearson, roc, score_experiment
from .errors import ConfigError, MissingInputError, PgcError, StateError
from .imgio import read_pbm, write_pbm, write_pgm


@dataclass
class ExperimentConfig:
    out_dir: Path
    geometry: Geometry
    n_images: int
    split_sizes: tuple[int, int, int]
    dataset_seed: int
    printers: dict[str, ChannelParams]
    arch: str
    train: nn.TrainConfig
    measures: list[str]
    target_pfa: list[float]
    plots: bool


_TOP_KEYS = {"out_dir", "geometry", "dataset", "printers", "training", "evaluation"}
_DATASET_KEYS = {"n_images", "split", "seed"}
_TRAINING_KEYS = {"arch", "epochs", "batch_size", "learning_rate", "lam", "regularizer", "seed"}
_EVAL_KEYS = {"measures", "target_pfa", "plots"}


def _object(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object")
    return value


def load_config(path, out=None, seed=None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    out and seed, when given, override out_dir and both the dataset and
    training seeds.
    """
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise MissingInputError(f"no config file at {cfg_path}")
    with open(cfg_path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{cfg_path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{cfg_path}: top level must be an object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")

    geo_raw = _object(raw, "geometry")
    bad = sorted(set(geo_raw) - {"rows", "cols", "module_px", "block_px"})
    if bad:
        raise ConfigError(f"geometry: unknown key(s) {', '.join(bad)}")
    geometry = Geometry(**geo_raw)
    try:
        geometry.validate()
    except PgcError as exc:
        raise ConfigError(str(exc)) from None

    ds_raw = _object(raw, "dataset")
    bad = sorted(set(ds_raw) - _DATASET_KEYS)
    if bad:
        raise ConfigError(f"dataset: unknown key(s) {', '.join(bad)}")
    if "n_images" not in ds_raw:
        raise ConfigError("dataset.n_images is required")
    n_images = int(ds_raw["n_images"])
    if n_images < 1:
        raise ConfigError("dataset.n_images must be >= 1")
    split = ds_raw.get("split")
    if split is not None:
        if not (isinstance(split, list) and len(split) == 3):
            raise ConfigError("dataset.split must be a list of three counts")
        split = tuple(int(s) for s in split)
        if any(s < 0 for s in split):
            raise ConfigError("dataset.split counts must be >= 0")
        if sum(split) != n_images:
            raise ConfigError(
                f"dataset.split must sum to dataset.n_images ({sum(split)} != {n_images})"
            )
    elif n_images != 384:
        raise ConfigError("dataset.split is required when n_images != 384")
    dataset_seed = int(ds_raw.get("seed", 0))
    if dataset_seed < 0:
        raise ConfigError("dataset.seed must be >= 0")

    printers_raw = raw.get("printers", [{"id": pid} for pid in ("SA", "LX", "CA", "HP")])
    if not (isinstance(printers_raw, list) and printers_raw):
        raise ConfigError("printers must be a non-empty list")
    printers: dict[str, ChannelParams] = {}
    for i, entry in enumerate(printers_raw):
        if isinstance(entry, str):
            entry = {"id": entry}
        if not isinstance(entry, dict) or "id" not in entry:
            raise ConfigError(f"printers[{i}] must be an id or an object with an id")
        bad = sorted(set(entry) - {"id", "overrides"})
        if bad:
            raise ConfigError(f"printers[{i}]: unknown key(s) {', '.join(bad)}")
        pid = entry["id"]
        if pid in printers:
            raise ConfigError(f"printers: duplicate id {pid!r}")
        try:
            printers[pid] = preset_with_overrides(pid, entry.get("overrides"))
        except PgcError as exc:
            raise ConfigError(f"printers[{i}]: {exc}") from None

    tr_raw = _object(raw, "training")
    bad = sorted(set(tr_raw) - _TRAINING_KEYS)
    if bad:
        raise ConfigError(f"training: unknown key(s) {', '.join(bad)}")
    arch = tr_raw.get("arch", "bn")
    if arch not in ARCHS:
        raise ConfigError(f"training.arch must be one of {', '.join(ARCHS)}")
    train = nn.TrainConfig(
        epochs=int(tr_raw.get("epochs", 1000)),
        batch_size=int(tr_raw.get("batch_size", 128)),
        learning_rate=float(tr_raw.get("learning_rate", 1e-3)),
        lam=float(tr_raw.get("lam", 0.0)),
        regularizer=tr_raw.get("regularizer", nn.REG_NONE),
        seed=int(tr_raw.get("seed", 0)),
    )
    try:
        train.validate()
    except PgcError as exc:
        raise ConfigError(f"training: {exc}") from None

    ev_raw = _object(raw, "evaluation")
    bad = sorted(set(ev_raw) - _EVAL_KEYS)
    if bad:
        raise ConfigError(f"evaluation: unknown key(s) {', '.join(bad)}")
    measures = ev_raw.get("measures", list(MEASURES))
    for m in measures:
        if m not in MEASURES:
            raise ConfigError(f"evaluation.measures: unknown measure {m!r}")
    target_pfa = [float(t) for t in ev_raw.get("target_pfa", [0.0, 0.05, 0.1])]
    for t in target_pfa:
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"evaluation.target_pfa: {t} outside [0, 1]")
    plots = bool(ev_raw.get("plots", False))

    out_dir = out if out is not None else raw.get("out_dir")
    if not out_dir:
        raise ConfigError("out_dir missing (set it in the config or pass --out)")
    if seed is not None:
        dataset_seed = int(seed)
        train = replace(train, seed=int(seed))
    return ExperimentConfig(
        out_dir=Path(out_dir),
        geometry=geometry,
        n_images=n_images,
        split_sizes=split,
        dataset_seed=dataset_seed,
        printers=printers,
        arch=arch,
        train=train,
        measures=list(measures),
        target_pfa=target_pfa,
        plots=plots,
    )


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _dataset_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "dataset"


def _model_path(cfg: ExperimentConfig, printer: str, arch: str) -> Path:
    return cfg.out_dir / "models" / f"{printer}_{arch}.pgcm"


def _estimate_dir(cfg: ExperimentConfig, printer: str, source: str) -> Path:
    return cfg.out_dir / "estimates" / f"{printer}_{source}"


def _load_ds(cfg: ExperimentConfig) -> PairedDataset:
    return load_dataset(_dataset_dir(cfg))


def _check_printer(ds: PairedDataset, printer: str) -> None:
    ds.printer_index(printer)


def cmd_gen(cfg: ExperimentConfig) -> None:
    """Build the dataset and write it under out_dir/dataset."""
    ds = build_dataset(
        cfg.n_images,
        cfg.split_sizes,
        cfg.geometry,
        cfg.printers,
        cfg.dataset_seed,
    )
    save_dataset(ds, _dataset_dir(cfg))
    counts = ds.block_counts()
    print(
        f"gen: {ds.n_images} codes, printers {', '.join(ds.printers)}, "
        f"blocks {counts['train']}/{counts['val']}/{counts['test']} "
        f"(train/val/test) -> {_dataset_dir(cfg)}"
    )


def cmd_train(cfg: ExperimentConfig, printer: str, arch: str | None = None) -> None:
    """Train and calibrate one model; write the model file and loss table."""
    arch = arch or cfg.arch
    ds = _load_ds(cfg)
    _check_printer(ds, printer)
    am, history = train_attack(ds, printer, arch, cfg.train)
    am = calibrate_threshold(am, ds)
    model_path = _model_path(cfg, printer, arch)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    nn.save_model(am.model, am.threshold, model_path)
    _write_csv(
        model_path.with_name(f"{printer}_{arch}_loss.csv"),
        ["epoch", "loss"],
        [(e + 1, v) for e, v in enumerate(history)],
    )
    xv, tv = split_arrays(ds, printer, SPLIT_VAL)
    kept = nn.batch_loss(am.model, xv, tv) if xv.shape[0] else history[-1]
    print(
        f"train: {arch} on {printer}, {cfg.train.epochs} epochs, "
        f"final loss {history[-1]:.6f}, kept-model val loss {kept:.6f}, "
        f"threshold {am.threshold:.2f} -> {model_path}"
    )


def cmd_attack(cfg: ExperimentConfig, printer: str, arch: str | None = None) -> None:
    """Estimate test codes with the trained model and the Thr baseline."""
    arch = arch or cfg.arch
    ds = _load_ds(cfg)
    _check_printer(ds, printer)
    model_path = _model_path(cfg, printer, arch)
    if not model_path.exists():
        raise MissingInputError(f"no model file at {model_path}; run the train command first")
    model, threshold = nn.load_model(model_path)
    if threshold is None:
        raise StateError(f"{model_path} has no calibrated threshold; re-run train")
    am = AttackModel(model=model, threshold=threshold, printer=printer, arch=arch)

    thr_estimates, thr_t = baseline_thr(ds, printer)
    test_idx = ds.indices(SPLIT_TEST)
    model_dir = _estimate_dir(cfg, printer, arch)
    thr_dir = _estimate_dir(cfg, printer, "thr")
    model_dir.mkdir(parents=True, exist_ok=True)
    thr_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    sums = np.zeros(4)
    for pos, i in enumerate(test_idx):
        scan = ds.scans[printer][i]
        original = ds.originals[i]
        ref = ds.rendered_original(i).pixels
        grey = estimate_grey(am, scan, ds.geometry)
        xhat = modules_from_pixels(
            binarize(grey, am.threshold), ds.geometry.module_px
        )
        xhat_thr = thr_estimates[pos]
        write_pbm(xhat, model_dir / f"est_{i:04d}.pbm")
        write_pbm(xhat_thr, thr_dir / f"est_{i:04d}.pbm")
        r_model = pearson(ref, grey.pixels)
        h_model = hamming_norm(original.bits, xhat.bits)
        r_thr = pearson(ref, ink_intensity(scan).pixels)
        h_thr = hamming_norm(original.bits, xhat_thr.bits)
        rows.append((i, r_model, h_model, r_thr, h_thr))
        sums += (r_model, h_model, r_thr, h_thr)
    means = sums / len(test_idx)
    rows.append(("mean", *[float(v) for v in means]))
    report = cfg.out_dir / "reports" / f"{printer}_{arch}_metrics.csv"
    _write_csv(
        report,
        ["image", "pearson_model", "hamming_model", "pearson_thr", "hamming_thr"],
        rows,
    )
    print(
        f"attack: {printer}/{arch} on {len(test_idx)} test codes: "
        f"pearson {means[0]:.4f} vs thr {means[2]:.4f}, "
        f"hamming {means[1]:.4f} vs thr {means[3]:.4f} (thr t={thr_t:.2f}) -> {report}"
    )


def _load_estimates(cfg: ExperimentConfig, printer: str, source: str, test_idx):
    est_dir = _estimate_dir(cfg, printer, source)
    estimates = []
    for i in test_idx:
        path = est_dir / f"est_{i:04d}.pbm"
        if not path.exists():
            raise MissingInputError(f"no estimate at {path}; run the attack command first")
        estimates.append(read_pbm(path))
    return estimates


def cmd_roc(cfg: ExperimentConfig, printer: str, arch: str | None = None) -> None:
    """Score re-prints of the estimates against authentic re-prints."""
    arch = arch or cfg.arch
    ds = _load_ds(cfg)
    _check_printer(ds, printer)
    test_idx = ds.indices(SPLIT_TEST)
    originals = [ds.originals[i] for i in test_idx]
    defender_t = calibrate_pixel_threshold(ds, printer)
    p_idx = ds.printer_index(printer)
    auth_seed = stream_seed(ds.seed, STREAM_REPRINT_AUTH + p_idx)
    fake_seed = stream_seed(ds.seed, STREAM_REPRINT_FAKE + p_idx)
    params = ds.channel_params[printer]
    reports = cfg.out_dir / "reports"

    summary_rows = []
    curves_by_measure: dict[str, list] = {m: [] for m in cfg.measures}
    for source in (arch, "thr"):
        estimates = _load_estimates(cfg, printer, source, test_idx)
        scores = score_experiment(
            originals, estimates, params, ds.geometry.module_px,
            auth_seed, fake_seed, defender_t,
        )
        diff_dir = reports / "diff" / f"{printer}_{source}"
        diff_dir.mkdir(parents=True, exist_ok=True)
        for original, xhat, i in zip(originals, estimates, test_idx):
            diff = (original.bits != xhat.bits).astype(np.uint8) * 255
            diff_px = np.repeat(
                np.repeat(diff, ds.geometry.module_px, axis=0),
                ds.geometry.module_px, axis=1,
            )
            write_pgm(PixelImage(diff_px, BYTE0_255), diff_dir / f"diff_{i:04d}.pgm")
        for measure in cfg.measures:
            ss = scores[measure]
            _write_csv(
                reports / f"scores_{printer}_{source}_{measure}.csv",
                ["score", "label"],
                [(float(s), "authentic") for s in ss.authentic]
                + [(float(s), "fake") for s in ss.fake],
            )
            curve = roc(ss)
            _write_csv(
                reports / f"roc_{printer}_{source}_{measure}.csv",
                ["gamma", "pd", "pfa"],
                curve.points,
            )
            area = auc(curve)
            summary_rows.append(
                (source, measure, area)
                + tuple(pd_at_pfa(curve, t) for t in cfg.target_pfa)
            )
            curves_by_measure[measure].append((source, curve))
    _write_csv(
        reports / f"summary_{printer}_{arch}.csv",
        ["fake_source", "measure", "auc"] + [f"pd_at_pfa_{t}" for t in cfg.target_pfa],
        summary_rows,
    )
    if cfg.plots:
        for measure, curves in curves_by_measure.items():
            write_roc_svg(
                reports / f"roc_{printer}_{measure}.svg",
                curves,
                f"{printer} re-prints, {measure} detector",
            )
    for row in summary_rows:
        print(f"roc: {printer} fakes from {row[0]}, {row[1]} AUC {row[2]:.4f}")


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def write_roc_svg(path: Path, curves, title: str) -> None:
    """Plot detection rate against false-acceptance rate, one line per source."""
    w, h = 640, 480
    ml, mr, mt, mb = 60, 20, 40, 50

    def px(pfa: float) -> str:
        return f"{ml + pfa * (w - ml - mr):.2f}"

    def py(pd: float) -> str:
        return f"{h - mb - pd * (h - mt - mb):.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="13">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.2f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
    ]
    for k in range(6):
        v = k / 5.0
        parts.append(
            f'<line x1="{px(v)}" y1="{py(0)}" x2="{px(v)}" y2="{py(1)}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(
            f'<line x1="{px(0)}" y1="{py(v)}" x2="{px(1)}" y2="{py(v)}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{px(v)}" y="{h - mb + 18}" text-anchor="middle">{v:.1f}</text>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{float(py(v)) + 4:.2f}" text-anchor="end">{v:.1f}</text>'
        )
    parts.append(
        f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(1)}" y2="{py(0)}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(0)}" y2="{py(1)}" stroke="black"/>'
    )
    parts.append(
        f'<text x="{(ml + w - mr) / 2:.2f}" y="{h - 12}" text-anchor="middle">'
        "false acceptance rate</text>"
    )
    parts.append(
        f'<text x="16" y="{(mt + h - mb) / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(mt + h - mb) / 2:.2f})">detection rate</text>'
    )
    for k, (label, curve) in enumerate(curves):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        pts = sorted((pfa, pd) for _, pd, pfa in curve.points)
        coords = " ".join(f"{px(x)},{py(y)}" for x, y in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        y = mt + 16 + 18 * k
        parts.append(
            f'<line x1="{w - mr - 150}" y1="{y}" x2="{w - mr - 120}" y2="{y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{w - mr - 112}" y="{y + 4}">fakes from {label}</text>')
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pgclab",
        description="Clone printed binary codes through a simulated print-scan "
        "channel and measure how well a similarity defender still spots the fakes.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    common.add_argument("--seed", type=int, help="override dataset and training seeds")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate codes and simulated scans")
    for verb, doc in (
        ("train", "train a regeneration model for one printer"),
        ("attack", "estimate test codes and report regeneration accuracy"),
        ("roc", "score simulated re-prints and write ROC tables"),
    ):
        p = sub.add_parser(verb, parents=[common], help=doc)
        p.add_argument("--printer", required=True, help="printer id from the config")
        p.add_argument("--arch", choices=ARCHS, help="model architecture (overrides config)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        if args.command == "gen":
            cmd_gen(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.printer, args.arch)
        elif args.command == "attack":
            cmd_attack(cfg, args.printer, args.arch)
        else:
            cmd_roc(cfg, args.printer, args.arch)
    except PgcError as exc:
        print(f"pgclab: error [{exc.category}] {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"pgclab: error [io] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
