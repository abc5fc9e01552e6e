"""Attacker pipeline: dataset build, training, calibration, code recovery.

Also the non-learning baseline that thresholds scan pixels directly.  All
randomness flows from one dataset seed through fixed per-purpose streams,
so rebuilding a dataset or retraining a model reproduces every byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import imgio, nn
from .channel import PRINTER_IDS, ChannelParams, preset, print_scan
from .codegen import (
    UNIT_INTERVAL,
    BlockSet,
    Geometry,
    ModuleMatrix,
    PixelImage,
    assemble_blocks,
    binarize,
    generate_module_matrix,
    ink_intensity,
    modules_from_pixels,
    render,
    split_blocks,
)
from .errors import (
    FormatError,
    MissingInputError,
    ParameterError,
    StateError,
    UnknownIdError,
)

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)

DEFAULT_SPLIT = (100, 50, 234)

ARCHS = ("fc2", "fc3", "fc4", "bn")

# Seed streams: per-purpose bases spaced far apart off the dataset seed,
# with the image index XORed in.  Stream 0 generates codes; streams 1..P
# scan per printer; 100+p / 200+p seed the authentic / fake re-prints
# used for scoring.
_STREAM_STRIDE = 1_000_003
STREAM_REPRINT_AUTH = 100
STREAM_REPRINT_FAKE = 200


def stream_seed(seed: int, stream: int, index: int = 0) -> int:
    return (seed + _STREAM_STRIDE * stream) ^ index


@dataclass
class PairedDataset:
    """Original codes paired with their simulated scans, tagged by split."""

    geometry: Geometry
    seed: int
    split_sizes: tuple[int, int, int]
    originals: list[ModuleMatrix]
    scans: dict[str, list[PixelImage]]
    channel_params: dict[str, ChannelParams]
    split: list[str]

    @property
    def n_images(self) -> int:
        return len(self.originals)

    @property
    def printers(self) -> tuple[str, ...]:
        return tuple(sorted(self.scans))

    def indices(self, tag: str) -> list[int]:
        if tag not in SPLITS:
            raise ParameterError(f"unknown split tag {tag!r}")
        return [i for i, t in enumerate(self.split) if t == tag]

    def rendered_original(self, i: int) -> PixelImage:
        return render(self.originals[i], self.geometry.module_px)

    def printer_index(self, printer: str) -> int:
        try:
            return self.printers.index(printer)
        except ValueError:
            raise UnknownIdError(f"printer {printer!r} not in dataset") from None

    def block_counts(self) -> dict[str, int]:
        per = self.geometry.blocks_per_image
        return {tag: len(self.indices(tag)) * per for tag in SPLITS}


@dataclass
class AttackModel:
    """A trained regenerator for one printer, plus its output threshold."""

    model: nn.MlpModel
    threshold: float | None
    printer: str
    arch: str


def build_dataset(
    n_images: int,
    split_sizes: tuple[int, int, int] | None = None,
    geometry: Geometry | None = None,
    printer_params: dict[str, ChannelParams] | None = None,
    seed: int = 0,
) -> PairedDataset:
    """Generate codes, render them, and scan each through every printer.

    Split assignment is by index order: the first split_sizes[0] images
    train, the next split_sizes[1] validate, the rest test.
    """
    if geometry is None:
        geometry = Geometry()
    geometry.validate()
    if n_images < 1:
        raise ParameterError("n_images must be >= 1")
    if seed < 0:
        raise ParameterError("seed must be >= 0")
    if split_sizes is None:
        split_sizes = DEFAULT_SPLIT
    split_sizes = tuple(int(s) for s in split_sizes)
    if len(split_sizes) != 3 or any(s < 0 for s in split_sizes):
        raise ParameterError("split_sizes must be three non-negative counts")
    if sum(split_sizes) != n_images:
        raise ParameterError(
            f"split_sizes {split_sizes} sum to {sum(split_sizes)}, not n_images {n_images}"
        )
    if printer_params is None:
        printer_params = {pid: preset(pid) for pid in PRINTER_IDS}
    if not printer_params:
        raise ParameterError("printer_params must name at least one printer")
    for params in printer_params.values():
        params.validate()

    originals = [
        generate_module_matrix(stream_seed(seed, 0, i), geometry.rows, geometry.cols)
        for i in range(n_images)
    ]
    scans: dict[str, list[PixelImage]] = {}
    for p_idx, pid in enumerate(sorted(printer_params)):
        params = printer_params[pid]
        scans[pid] = [
            print_scan(
                render(originals[i], geometry.module_px),
                params,
                stream_seed(seed, 1 + p_idx, i),
            )
            for i in range(n_images)
        ]
    split = (
        [SPLIT_TRAIN] * split_sizes[0]
        + [SPLIT_VAL] * split_sizes[1]
        + [SPLIT_TEST] * split_sizes[2]
    )
    return PairedDataset(
        geometry=geometry,
        seed=seed,
        split_sizes=split_sizes,
        originals=originals,
        scans=scans,
        channel_params=dict(printer_params),
        split=split,
    )


def split_arrays(ds: PairedDataset, printer: str, tag: str):
    """Stacked (inputs, targets) block arrays for one printer and split.

    Inputs are scan blocks as ink intensity, targets the matching rendered
    original blocks; both float32 of shape (n_blocks, block_px ** 2).
    """
    if printer not in ds.scans:
        raise UnknownIdError(f"printer {printer!r} not in dataset")
    idx = ds.indices(tag)
    bpx = ds.geometry.block_px
    dim = ds.geometry.block_dim
    if not idx:
        return (np.zeros((0, dim), np.float32), np.zeros((0, dim), np.float32))
    xs, ts = [], []
    for i in idx:
        xs.append(split_blocks(ink_intensity(ds.scans[printer][i]), bpx).blocks)
        ts.append(split_blocks(ds.rendered_original(i), bpx).blocks.astype(np.float32))
    return np.concatenate(xs), np.concatenate(ts)


def train_attack(ds: PairedDataset, printer: str, arch: str, cfg: nn.TrainConfig):
    """Train one regenerator; returns (AttackModel, per-epoch mean loss).

    Runs all configured epochs but keeps the parameters from the epoch
    with the lowest validation loss (earliest such epoch on ties; the
    final epoch when the validation split is empty).  Squared-error
    against hard 0/1 targets pushes logits toward saturation as the fit
    becomes exact, and in float32 a late Adam step can tip the network
    into a frozen all-saturated state; restoring the best snapshot makes
    the outcome independent of where in the schedule that happens.

    The threshold is left unset; run calibrate_threshold afterwards.
    """
    cfg.validate()
    builders = {
        "fc2": lambda s: nn.build_fc(2, s),
        "fc3": lambda s: nn.build_fc(3, s),
        "fc4": lambda s: nn.build_fc(4, s),
        "bn": nn.build_bn,
    }
    if arch not in builders:
        raise ParameterError(f"unknown arch {arch!r} (known: {', '.join(ARCHS)})")
    x, t = split_arrays(ds, printer, SPLIT_TRAIN)
    n = x.shape[0]
    if n == 0:
        raise StateError("empty train split")
    xv, tv = split_arrays(ds, printer, SPLIT_VAL)

    model = builders[arch](cfg.seed)
    state = nn.init_adam(model)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)
    history = []
    best_val = None
    best_params = None
    for _ in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = perm[start : start + cfg.batch_size]
            value, gw, gb = nn.loss_and_grads(model, x[sel], t[sel], cfg)
            nn.optimizer_step(model, (gw, gb), state, cfg)
            total += value * len(sel)
        history.append(total / n)
        if xv.shape[0]:
            val = nn.batch_loss(model, xv, tv)
            if best_val is None or val < best_val:
                best_val = val
                best_params = ([w.copy() for w in model.weights],
                               [b.copy() for b in model.biases])
    if best_params is not None:
        for w, bw in zip(model.weights, best_params[0]):
            w[:] = bw
        for b, bb in zip(model.biases, best_params[1]):
            b[:] = bb
    return AttackModel(model=model, threshold=None, printer=printer, arch=arch), history


def threshold_grid() -> np.ndarray:
    """The 101-point calibration grid 0.00, 0.01, ..., 1.00."""
    return np.arange(101, dtype=np.float64) / 100.0


def calibrate_grid(values: np.ndarray, targets: np.ndarray):
    """Sweep the grid; return (t, error) minimizing mean bit disagreement.

    Ties break toward the smallest t.  values are reals in [0, 1], targets
    the binary truth; a value counts as 1 when >= t.
    """
    values = np.asarray(values)
    targets = np.asarray(targets).astype(bool)
    if values.shape != targets.shape:
        raise ParameterError("values and targets shapes differ")
    if values.size == 0:
        raise StateError("nothing to calibrate on")
    best_t, best_err = 0.0, np.inf
    for t in threshold_grid():
        err = float(np.mean((values >= t) != targets))
        if err < best_err:
            best_t, best_err = float(t), err
    return best_t, best_err


def calibrate_threshold(am: AttackModel, ds: PairedDataset, printer: str | None = None):
    """Pick the output threshold on the validation split; returns a new AttackModel."""
    printer = am.printer if printer is None else printer
    x, t = split_arrays(ds, printer, SPLIT_VAL)
    if x.shape[0] == 0:
        raise StateError("empty validation split")
    outputs = nn.forward(am.model, x)
    best_t, _ = calibrate_grid(outputs, t)
    return replace(am, threshold=best_t)


def calibrate_pixel_threshold(ds: PairedDataset, printer: str) -> float:
    """Calibrate a raw ink-intensity threshold on the validation scans.

    Same grid and criterion as calibrate_threshold, applied to pixels
    instead of model outputs.  Also serves as the defender's calibration,
    which only ever sees authentic prints.
    """
    if printer not in ds.scans:
        raise UnknownIdError(f"printer {printer!r} not in dataset")
    idx = ds.indices(SPLIT_VAL)
    if not idx:
        raise StateError("empty validation split")
    values = np.concatenate(
        [ink_intensity(ds.scans[printer][i]).pixels.ravel() for i in idx]
    )
    targets = np.concatenate(
        [ds.rendered_original(i).pixels.ravel() for i in idx]
    )
    best_t, _ = calibrate_grid(values, targets)
    return best_t


def estimate_grey(am: AttackModel, scan: PixelImage, geometry: Geometry | None = None) -> PixelImage:
    """The model's real-valued reconstruction of a scan, as one image."""
    if geometry is None:
        geometry = Geometry()
    bs = split_blocks(ink_intensity(scan), geometry.block_px)
    out = nn.forward(am.model, bs.blocks)
    grey = BlockSet(bs.block_px, bs.grid_rows, bs.grid_cols, out, UNIT_INTERVAL)
    return assemble_blocks(grey)


def estimate_code(am: AttackModel, scan: PixelImage, geometry: Geometry | None = None) -> ModuleMatrix:
    """Recover the module matrix behind one scan with the trained model."""
    if am.threshold is None:
        raise StateError("attack model has no calibrated threshold")
    if geometry is None:
        geometry = Geometry()
    grey = estimate_grey(am, scan, geometry)
    return modules_from_pixels(binarize(grey, am.threshold), geometry.module_px)


def baseline_thr(ds: PairedDataset, printer: str):
    """Threshold-only estimation: returns (test estimates, calibrated t)."""
    t = calibrate_pixel_threshold(ds, printer)
    mpx = ds.geometry.module_px
    estimates = [
        modules_from_pixels(binarize(ink_intensity(ds.scans[printer][i]), t), mpx)
        for i in ds.indices(SPLIT_TEST)
    ]
    return estimates, t


MANIFEST_NAME = "manifest.json"
_MANIFEST_VERSION = 1


def save_dataset(ds: PairedDataset, out_dir) -> None:
    """Write originals, scans and a manifest under out_dir (paths relative)."""
    out = Path(out_dir)
    (out / "originals").mkdir(parents=True, exist_ok=True)
    original_paths = []
    for i, m in enumerate(ds.originals):
        rel = f"originals/code_{i:04d}.pbm"
        imgio.write_pbm(m, out / rel)
        original_paths.append(rel)
    scan_paths: dict[str, list[str]] = {}
    for pid in ds.printers:
        (out / "scans" / pid).mkdir(parents=True, exist_ok=True)
        scan_paths[pid] = []
        for i, img in enumerate(ds.scans[pid]):
            rel = f"scans/{pid}/scan_{i:04d}.pgm"
            imgio.write_pgm(img, out / rel)
            scan_paths[pid].append(rel)
    manifest = {
        "format_version": _MANIFEST_VERSION,
        "geometry": asdict(ds.geometry),
        "seed": ds.seed,
        "split_sizes": list(ds.split_sizes),
        "split": list(ds.split),
        "printers": {pid: asdict(p) for pid, p in ds.channel_params.items()},
        "originals": original_paths,
        "scans": scan_paths,
    }
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir) -> PairedDataset:
    """Read a dataset written by save_dataset."""
    root = Path(in_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingInputError(
            f"no dataset manifest at {manifest_path}; run the gen command first"
        )
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: not valid JSON ({exc})") from None
    try:
        if manifest["format_version"] != _MANIFEST_VERSION:
            raise FormatError(
                f"{manifest_path}: unsupported manifest version {manifest['format_version']}"
            )
        geometry = Geometry(**manifest["geometry"])
        seed = int(manifest["seed"])
        split_sizes = tuple(manifest["split_sizes"])
        split = list(manifest["split"])
        channel_params = {
            pid: ChannelParams(**p) for pid, p in manifest["printers"].items()
        }
        original_paths = manifest["originals"]
        scan_paths = manifest["scans"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{manifest_path}: malformed manifest ({exc})") from None
    originals = [imgio.read_pbm(root / rel) for rel in original_paths]
    scans = {
        pid: [imgio.read_pgm(root / rel) for rel in rels]
        for pid, rels in scan_paths.items()
    }
    return PairedDataset(
        geometry=geometry,
        seed=seed,
        split_sizes=split_sizes,
        originals=originals,
        scans=scans,
        channel_params=channel_params,
        split=split,
    )
