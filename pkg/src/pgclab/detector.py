"""Defender side: similarity scores, the thresholded test, ROC summaries.

The test declares a code authentic when alpha * d(x, y) >= gamma, with
alpha = +1 for Pearson correlation (genuine prints correlate highly) and
alpha = -1 for normalized Hamming distance (genuine prints differ little).
Pd counts authentic scores with alpha * d >= gamma (non-strict), Pfa counts
fake scores with alpha * d > gamma (strict); the asymmetry only matters on
ties and is kept deliberately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, print_scan
from .codegen import (
    HIGH_IS_ONE,
    ModuleMatrix,
    binarize,
    ink_intensity,
    modules_from_pixels,
    render,
)
from .errors import DegenerateInputError, DimensionError, MissingInputError, ParameterError

MEASURE_PEARSON = "pearson"
MEASURE_HAMMING = "hamming"
MEASURES = (MEASURE_PEARSON, MEASURE_HAMMING)

# Sign that turns each measure into a "bigger is more authentic" score.
MEASURE_ALPHA = {MEASURE_PEARSON: 1, MEASURE_HAMMING: -1}


@dataclass
class ScoreSet:
    """Similarity scores for authentic prints (H0) and fakes (H1)."""

    authentic: np.ndarray
    fake: np.ndarray
    measure: str
    alpha: int = field(init=False)

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ParameterError(f"unknown measure {self.measure!r}")
        self.alpha = MEASURE_ALPHA[self.measure]
        self.authentic = np.asarray(self.authentic, dtype=np.float64)
        self.fake = np.asarray(self.fake, dtype=np.float64)


@dataclass
class RocCurve:
    """Operating points (gamma, pd, pfa), ordered by decreasing gamma."""

    points: list[tuple[float, float, float]]


def pearson(x, y) -> float:
    """Sample Pearson correlation, in [-1, 1].

    Convention: x holds the rendered original bits (1 = dark) and y the
    ink intensity of the print under test.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError("pearson inputs must have equal length")
    if x.size < 2:
        raise DimensionError("pearson needs at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("pearson undefined for a constant input")
    return float(np.clip(np.sum(xc * yc) / (sx * sy), -1.0, 1.0))


def hamming_norm(a, b) -> float:
    """Fraction of positions where two equal-length bit vectors differ."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise DimensionError("hamming_norm inputs must have equal length")
    if a.size < 1:
        raise DimensionError("hamming_norm needs at least 1 position")
    return float(np.mean(a != b))


def roc(scores: ScoreSet) -> RocCurve:
    """Sweep gamma over all alpha-scaled scores plus +-inf sentinels."""
    if scores.authentic.size == 0 or scores.fake.size == 0:
        raise DimensionError("roc needs non-empty authentic and fake scores")
    s_a = scores.alpha * scores.authentic
    s_f = scores.alpha * scores.fake
    gammas = np.unique(np.concatenate([s_a, s_f, [np.inf, -np.inf]]))[::-1]
    points = [
        (float(g), float(np.mean(s_a >= g)), float(np.mean(s_f > g)))
        for g in gammas
    ]
    return RocCurve(points)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under pd as a function of pfa."""
    pts = sorted((pfa, pd) for _, pd, pfa in curve.points)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def pd_at_pfa(curve: RocCurve, target_pfa: float) -> float:
    """Best detection rate at false-acceptance rate <= target (0 if none)."""
    feasible = [pd for _, pd, pfa in curve.points if pfa <= target_pfa]
    return max(feasible) if feasible else 0.0


def score_experiment(
    originals: list[ModuleMatrix],
    estimates: list[ModuleMatrix],
    params: ChannelParams,
    module_px: int,
    authentic_seed: int,
    fake_seed: int,
    defender_threshold: float,
) -> dict[str, ScoreSet]:
    """Score simulated re-prints of originals (H0) and estimates (H1).

    For code i, the authentic print is print_scan(render(x_i)) seeded with
    authentic_seed ^ i and the fake is print_scan(render(x_hat_i)) seeded
    with fake_seed ^ i.  Pearson compares the original bits against the
    grey ink intensity of the print; Hamming compares the original modules
    against the print binarized at the defender's own pixel threshold and
    majority-voted per module.  Returns one ScoreSet per measure.
    """
    if len(estimates) != len(originals):
        raise MissingInputError(
            f"{len(originals)} originals but {len(estimates)} estimates"
        )
    if not originals:
        raise MissingInputError("score_experiment needs at least one code")

    def _scores(code: ModuleMatrix, printed: ModuleMatrix, seed: int):
        scan = print_scan(render(printed, module_px), params, seed)
        ink = ink_intensity(scan)
        ref = render(code, module_px).pixels
        r = pearson(ref, ink.pixels)
        decided = modules_from_pixels(
            binarize(ink, defender_threshold, HIGH_IS_ONE), module_px
        )
        h = hamming_norm(code.bits, decided.bits)
        return r, h

    auth_r, auth_h, fake_r, fake_h = [], [], [], []
    for i, (x, xhat) in enumerate(zip(originals, estimates)):
        r, h = _scores(x, x, authentic_seed ^ i)
        auth_r.append(r)
        auth_h.append(h)
        r, h = _scores(x, xhat, fake_seed ^ i)
        fake_r.append(r)
        fake_h.append(h)
    return {
        MEASURE_PEARSON: ScoreSet(auth_r, fake_r, MEASURE_PEARSON),
        MEASURE_HAMMING: ScoreSet(auth_h, fake_h, MEASURE_HAMMING),
    }
