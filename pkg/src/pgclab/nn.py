"""Dense-network engine: build, run, differentiate, update, persist.

Small and self-contained on purpose.  Parameters and activations are
float32; loss terms accumulate in float64.  Everything is deterministic
given the seeds, with fixed reduction orders.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    FormatError,
    ParameterError,
    StateError,
)

ACT_IDENTITY = "identity"
ACT_RELU = "relu"
ACT_SIGMOID = "sigmoid"
ACTIVATIONS = (ACT_IDENTITY, ACT_RELU, ACT_SIGMOID)

# On-disk activation codes.
_ACT_CODE = {ACT_IDENTITY: 0, ACT_RELU: 1, ACT_SIGMOID: 2}
_CODE_ACT = {v: k for k, v in _ACT_CODE.items()}

REG_NONE = "none"
REG_L2_WEIGHTS = "l2_weights"

CODE_DIM = 576  # 24*24 pixels per block


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str

    def validate(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError("layer dims must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    """A stack of affine layers with elementwise activations.

    weights[k] has shape (out_dim, in_dim); biases[k] has shape (out_dim,).
    bottleneck_index, when set, marks the layer whose output is the latent
    code (the encoder is layers[: bottleneck_index + 1]).
    """

    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    bottleneck_index: int | None = None

    def validate(self) -> None:
        if not self.layers:
            raise DimensionError("model has no layers")
        if len(self.weights) != len(self.layers) or len(self.biases) != len(self.layers):
            raise DimensionError("parameter lists do not match layer count")
        for k, spec in enumerate(self.layers):
            spec.validate()
            if k + 1 < len(self.layers) and spec.out_dim != self.layers[k + 1].in_dim:
                raise DimensionError(f"layers {k} and {k + 1} do not chain")
            if self.weights[k].shape != (spec.out_dim, spec.in_dim):
                raise DimensionError(f"weight {k} shape {self.weights[k].shape}")
            if self.biases[k].shape != (spec.out_dim,):
                raise DimensionError(f"bias {k} shape {self.biases[k].shape}")
        if self.bottleneck_index is not None and not 0 <= self.bottleneck_index < len(self.layers):
            raise DimensionError("bottleneck_index out of range")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [s.out_dim for s in self.layers]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layers),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.bottleneck_index,
        )

    def astype(self, dtype) -> "MlpModel":
        return MlpModel(
            list(self.layers),
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.bottleneck_index,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 128
    learning_rate: float = 1e-3
    lam: float = 0.0
    regularizer: str = REG_NONE
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.lam < 0:
            raise ParameterError("lam must be >= 0")
        if self.regularizer not in (REG_NONE, REG_L2_WEIGHTS):
            raise ParameterError(f"unknown regularizer {self.regularizer!r}")
        if self.seed < 0:
            raise ParameterError("seed must be >= 0")


def _init_params(specs: list[LayerSpec], seed: int):
    # Uniform Glorot bounds sqrt(6 / (fan_in + fan_out)), zero biases.
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        w = rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim))
        weights.append(w.astype(np.float32))
        biases.append(np.zeros(spec.out_dim, dtype=np.float32))
    return weights, biases


def build_fc(hidden_layers: int, seed: int) -> MlpModel:
    """Fully connected model, every layer as wide as the 576-dim input."""
    if hidden_layers not in (2, 3, 4):
        raise ParameterError("hidden_layers must be 2, 3 or 4")
    dims = [CODE_DIM] * (hidden_layers + 2)
    specs = [
        LayerSpec(dims[k], dims[k + 1], ACT_RELU if k < hidden_layers else ACT_SIGMOID)
        for k in range(hidden_layers + 1)
    ]
    weights, biases = _init_params(specs, seed)
    model = MlpModel(specs, weights, biases)
    model.validate()
    return model


def build_bn(seed: int) -> MlpModel:
    """Bottleneck model 576-256-128-36-128-256-576 with a 36-dim latent."""
    dims = [576, 256, 128, 36, 128, 256, 576]
    n = len(dims) - 1
    specs = [
        LayerSpec(dims[k], dims[k + 1], ACT_RELU if k < n - 1 else ACT_SIGMOID)
        for k in range(n)
    ]
    weights, biases = _init_params(specs, seed)
    model = MlpModel(specs, weights, biases, bottleneck_index=2)
    model.validate()
    return model


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign to avoid exp overflow for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == ACT_RELU:
        return np.maximum(z, 0)
    if activation == ACT_SIGMOID:
        return _sigmoid(z)
    return z


def _forward_acts(m: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """All layer activations for a (n, in_dim) batch, input included."""
    acts = [x]
    a = x
    for spec, w, b in zip(m.layers, m.weights, m.biases):
        a = _apply_activation(a @ w.T + b, spec.activation)
        acts.append(a)
    return acts


def _as_batch(m: MlpModel, x: np.ndarray):
    x = np.asarray(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.in_dim:
        raise DimensionError(f"input shape {x.shape} does not match in_dim {m.in_dim}")
    return x.astype(m.weights[0].dtype, copy=False), squeeze


def forward(m: MlpModel, x: np.ndarray) -> np.ndarray:
    """Run the network on one vector or a (n, in_dim) batch."""
    xb, squeeze = _as_batch(m, x)
    out = _forward_acts(m, xb)[-1]
    return out[0] if squeeze else out


def weight_sq_sum(m: MlpModel) -> float:
    """Sum of squared weights (biases excluded), in float64."""
    return float(sum(np.sum(w.astype(np.float64) ** 2) for w in m.weights))


def loss(pred: np.ndarray, target: np.ndarray, m: MlpModel | None = None,
         cfg: TrainConfig | None = None) -> float:
    """Squared error for one sample, plus the optional l2 weight penalty."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError("pred and target shapes differ")
    value = float(np.sum((pred.astype(np.float64) - target.astype(np.float64)) ** 2))
    if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS and cfg.lam > 0:
        if m is None:
            raise ParameterError("l2_weights regularizer needs the model")
        value += cfg.lam * weight_sq_sum(m)
    return value


def batch_loss(m: MlpModel, batch_x: np.ndarray, batch_t: np.ndarray,
               cfg: TrainConfig | None = None) -> float:
    """Mean per-sample squared error plus (once) the regularizer term."""
    xb, tb = _check_batch(m, batch_x, batch_t)
    pred = _forward_acts(m, xb)[-1]
    d = pred.astype(np.float64) - tb.astype(np.float64)
    value = float(np.sum(d * d)) / xb.shape[0]
    if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS and cfg.lam > 0:
        value += cfg.lam * weight_sq_sum(m)
    return value


def _check_batch(m: MlpModel, batch_x, batch_t):
    xb, _ = _as_batch(m, batch_x)
    if xb.shape[0] == 0:
        raise DimensionError("empty batch")
    tb = np.asarray(batch_t).astype(xb.dtype, copy=False)
    if tb.shape != (xb.shape[0], m.out_dim):
        raise DimensionError("target batch shape mismatch")
    return xb, tb


def _grads_from_acts(m: MlpModel, acts: list[np.ndarray], tb: np.ndarray,
                     cfg: TrainConfig | None):
    n = acts[0].shape[0]
    lam = cfg.lam if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS else 0.0
    grad_w = [None] * len(m.layers)
    grad_b = [None] * len(m.layers)
    # d(batch_loss)/d(pred), mean over the batch of sum-of-squares terms
    da = (2.0 / n) * (acts[-1] - tb)
    for k in range(len(m.layers) - 1, -1, -1):
        a = acts[k + 1]
        activation = m.layers[k].activation
        if activation == ACT_SIGMOID:
            dz = da * a * (1.0 - a)
        elif activation == ACT_RELU:
            dz = da * (a > 0)
        else:
            dz = da
        grad_w[k] = dz.T @ acts[k]
        if lam > 0:
            grad_w[k] = grad_w[k] + (2.0 * lam) * m.weights[k]
        grad_b[k] = np.sum(dz, axis=0)
        if k > 0:
            da = dz @ m.weights[k]
    return grad_w, grad_b


def backward(m: MlpModel, batch_x: np.ndarray, batch_t: np.ndarray,
             cfg: TrainConfig | None = None):
    """Exact gradient of batch_loss w.r.t. every weight and bias.

    Returns (grad_weights, grad_biases) with the same shapes and dtype as
    the model parameters.
    """
    xb, tb = _check_batch(m, batch_x, batch_t)
    return _grads_from_acts(m, _forward_acts(m, xb), tb, cfg)


def loss_and_grads(m: MlpModel, batch_x: np.ndarray, batch_t: np.ndarray,
                   cfg: TrainConfig | None = None):
    """batch_loss and its gradients from a single forward pass."""
    xb, tb = _check_batch(m, batch_x, batch_t)
    acts = _forward_acts(m, xb)
    d = acts[-1].astype(np.float64) - tb.astype(np.float64)
    value = float(np.sum(d * d)) / xb.shape[0]
    if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS and cfg.lam > 0:
        value += cfg.lam * weight_sq_sum(m)
    grad_w, grad_b = _grads_from_acts(m, acts, tb, cfg)
    return value, grad_w, grad_b


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    step: int
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(model: MlpModel) -> AdamState:
    return AdamState(
        step=0,
        m_w=[np.zeros_like(w) for w in model.weights],
        v_w=[np.zeros_like(w) for w in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
        v_b=[np.zeros_like(b) for b in model.biases],
    )


def optimizer_step(m: MlpModel, grads, state: AdamState, cfg: TrainConfig):
    """One Adam update, in place; returns (model, state) for chaining."""
    if state is None:
        raise StateError("optimizer state not initialized (call init_adam)")
    grad_w, grad_b = grads
    state.step += 1
    t = state.step
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    lr = cfg.learning_rate
    for params, gs, ms, vs in (
        (m.weights, grad_w, state.m_w, state.v_w),
        (m.biases, grad_b, state.m_b, state.v_b),
    ):
        for p, g, mom, vel in zip(params, gs, ms, vs):
            mom *= b1
            mom += (1.0 - b1) * g
            vel *= b2
            vel += (1.0 - b2) * (g * g)
            p -= lr * (mom / c1) / (np.sqrt(vel / c2) + eps)
    return m, state


MODEL_MAGIC = b"PGCM"
MODEL_VERSION = 1


def save_model(m: MlpModel, threshold: float | None, path) -> None:
    """Write the model (and optional threshold) in the PGCM binary format.

    Layout: magic, u32 version, u32 layer count, per layer u32 in_dim /
    u32 out_dim / u32 activation code, then every weight matrix row-major,
    then every bias vector, all little-endian float32, then a flag byte
    and, when the flag is 1, a float32 threshold.
    """
    m.validate()
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(m.layers))]
    for spec in m.layers:
        parts.append(struct.pack("<III", spec.in_dim, spec.out_dim, _ACT_CODE[spec.activation]))
    for w in m.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
    for b in m.biases:
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    if threshold is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + struct.pack("<f", float(threshold)))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path):
    """Read a PGCM file; returns (model, threshold or None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated model file")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic (not a PGCM model file)")
    version, n_layers = struct.unpack("<II", take(8))
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if n_layers == 0:
        raise FormatError(f"{path}: zero layers")
    specs = []
    for _ in range(n_layers):
        in_dim, out_dim, code = struct.unpack("<III", take(12))
        if code not in _CODE_ACT:
            raise FormatError(f"{path}: unknown activation code {code}")
        specs.append(LayerSpec(in_dim, out_dim, _CODE_ACT[code]))
    weights = []
    for spec in specs:
        raw = take(4 * spec.in_dim * spec.out_dim)
        weights.append(np.frombuffer(raw, dtype="<f4").reshape(spec.out_dim, spec.in_dim).copy())
    biases = [np.frombuffer(take(4 * spec.out_dim), dtype="<f4").copy() for spec in specs]
    flag = take(1)[0]
    if flag == 0:
        threshold = None
    elif flag == 1:
        threshold = float(struct.unpack("<f", take(4))[0])
    else:
        raise FormatError(f"{path}: bad threshold flag {flag}")
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    model = MlpModel(specs, weights, biases)
    model.validate()
    return model, threshold


def _relu_masks(m: MlpModel, acts: list[np.ndarray]):
    return [
        acts[k + 1] > 0
        for k, spec in enumerate(m.layers)
        if spec.activation == ACT_RELU
    ]


def _masks_equal(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(m: MlpModel, batch_x: np.ndarray, batch_t: np.ndarray,
                   cfg: TrainConfig | None = None, n_coords: int = 2000,
                   step: float = 1e-3, seed: int = 0) -> float:
    """Compare analytic gradients against central finite differences.

    Works on a float64 copy of the model.  Coordinates are sampled at
    random over all weights and biases; a coordinate is skipped when the
    +-step perturbation flips any relu mask, because the finite-difference
    quotient straddles a kink there and estimates nothing.  Returns
    max |analytic - fd| / max(||analytic||_inf, ||fd||_inf) over the
    sampled coordinates.
    """
    md = m.astype(np.float64)
    xb, _ = _as_batch(md, batch_x)
    tb = np.asarray(batch_t, dtype=np.float64)
    grad_w, grad_b = backward(md, xb, tb, cfg)
    base_masks = _relu_masks(md, _forward_acts(md, xb))

    arrays = list(md.weights) + list(md.biases)
    grads = list(grad_w) + list(grad_b)
    sizes = np.array([a.size for a in arrays])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])

    rng = np.random.default_rng(seed)
    picked = rng.choice(total, size=min(n_coords, total), replace=False)

    analytic, fd = [], []
    for flat in picked:
        ai = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[ai]), arrays[ai].shape)
        arr = arrays[ai]
        saved = arr[idx]

        arr[idx] = saved + step
        acts_hi = _forward_acts(md, xb)
        hi_masks = _relu_masks(md, acts_hi)
        arr[idx] = saved - step
        acts_lo = _forward_acts(md, xb)
        lo_masks = _relu_masks(md, acts_lo)
        arr[idx] = saved
        if not (_masks_equal(base_masks, hi_masks) and _masks_equal(base_masks, lo_masks)):
            continue

        def _objective(acts):
            d = acts[-1] - tb
            value = float(np.sum(d * d)) / xb.shape[0]
            if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS and cfg.lam > 0:
                value += cfg.lam * weight_sq_sum(md)
            return value

        # Regularizer depends on the weight value, so recompute it at +-step.
        lo = _objective(acts_lo)
        hi = _objective(acts_hi)
        if cfg is not None and cfg.regularizer == REG_L2_WEIGHTS and cfg.lam > 0 and ai < len(md.weights):
            hi += cfg.lam * ((saved + step) ** 2 - saved ** 2)
            lo += cfg.lam * ((saved - step) ** 2 - saved ** 2)
        fd.append((hi - lo) / (2.0 * step))
        analytic.append(grads[ai][idx])

    if not analytic:
        raise StateError("every sampled coordinate crossed a relu kink")
    a = np.asarray(analytic)
    f = np.asarray(fd)
    scale = max(np.max(np.abs(a)), np.max(np.abs(f)), 1e-12)
    return float(np.max(np.abs(a - f)) / scale)
