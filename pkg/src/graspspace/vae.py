"""Conditional VAE with a one-dimensional latent, written directly in numpy.

Encoder: four input sub-networks (position, orientation, spread, tabletop
plane) feed a main encoder whose last layer drives linear mean and
log-variance heads.  Decoder: latent and tabletop sub-networks feed a main
decoder mirroring the encoder, followed by one output sub-network per field.
Position, spread and quality heads end in a sigmoid; the orientation head ends
in a quaternion normalizer so decoded quaternions are exactly unit.

The quality head exists only in the quality-predicting variant (``kind ==
"qgg"``).  Gradients are computed by hand; ``loss_and_grad`` is the single
entry point used by training and by the gradient check.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (
    GraspDataset,
    GraspRecord,
    NormStats,
    denormalize,
    denormalize_quality,
    fit_norm,
    normalize_many,
    normalize_quality,
)
from .errors import (
    ArchitectureMismatchError,
    DegenerateQuaternionError,
    DivergenceError,
    ModelFileError,
    VersionMismatchError,
)
from .objects import StablePose

LATENT_DIM = 1
LOGVAR_CLAMP = 10.0
FORMAT_VERSION = 1
QUAT_EPS = 1e-12
SWEEP_RANGE = (-4.5, 4.5)

# column slices of a normalized 12-vector
POS, QUAT, SPREAD, TABLE = slice(0, 3), slice(3, 7), slice(7, 8), slice(8, 12)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Mlp:
    """Fully connected stack; every layer uses tanh except optionally the last."""

    def __init__(self, sizes: list[int], linear_out: bool = False):
        self.sizes = list(sizes)
        self.linear_out = linear_out
        self.weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(b) for b in sizes[1:]]

    def init_glorot(self, rng: np.random.Generator) -> None:
        for W in self.weights:
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, W.shape)
        for b in self.biases:
            b[...] = 0.0

    def parameters(self):
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            yield f"W{i}", W
            yield f"b{i}", b

    def forward(self, x):
        cache = [x]
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ W + b
            if not (self.linear_out and i == n - 1):
                x = np.tanh(x)
            cache.append(x)
        return x, cache

    def backward(self, cache, dy):
        """Gradients for the cached forward pass; returns ``(dx, grads)``."""
        n = len(self.weights)
        grads = {}
        for i in reversed(range(n)):
            out = cache[i + 1]
            if not (self.linear_out and i == n - 1):
                dy = dy * (1.0 - out * out)
            grads[f"W{i}"] = cache[i].T @ dy
            grads[f"b{i}"] = dy.sum(axis=0)
            dy = dy @ self.weights[i].T
        return dy, grads

    def count(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class Architecture:
    kind: str = "hgg"               # "hgg" or "qgg"
    input_width: int = 16
    main_widths: tuple = (48, 48)
    output_width: int = 16

    def __post_init__(self):
        if self.kind not in ("hgg", "qgg"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "main_widths", tuple(int(w) for w in self.main_widths))
        if min(self.input_width, self.output_width, *self.main_widths) < 1:
            raise ValueError("layer widths must be positive")

    @property
    def has_quality(self) -> bool:
        return self.kind == "qgg"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if not self.learning_rate > 0.0:
            raise ValueError("learning rate must be positive")
        if self.kl_weight < 0.0:
            raise ValueError("KL weight must be non-negative")


class VaeModel:
    """Network weights plus the normalization statistics they were trained with."""

    def __init__(self, arch: Architecture, stats: Optional[NormStats] = None):
        self.arch = arch
        w_in, w_out = arch.input_width, arch.output_width
        main = list(arch.main_widths)
        self.nets: dict[str, Mlp] = {
            "enc_pos": Mlp([3, w_in]),
            "enc_quat": Mlp([4, w_in]),
            "enc_spread": Mlp([1, w_in]),
            "enc_table": Mlp([4, w_in]),
            "enc_main": Mlp([4 * w_in] + main),
            "head_mean": Mlp([main[-1], LATENT_DIM], linear_out=True),
            "head_logvar": Mlp([main[-1], LATENT_DIM], linear_out=True),
            "dec_latent": Mlp([LATENT_DIM, w_in]),
            "dec_table": Mlp([4, w_in]),
            "dec_main": Mlp([2 * w_in] + main),
            "out_pos": Mlp([main[-1], w_out, 3], linear_out=True),
            "out_quat": Mlp([main[-1], w_out, 4], linear_out=True),
            "out_spread": Mlp([main[-1], w_out, 1], linear_out=True),
        }
        if arch.has_quality:
            self.nets["out_quality"] = Mlp([main[-1], w_out, 1], linear_out=True)
        self.stats = stats

    @property
    def kind(self) -> str:
        return self.arch.kind

    def init(self, rng: Optional[np.random.Generator] = None, zero: bool = False) -> "VaeModel":
        for net in self.nets.values():
            if zero:
                for _, p in net.parameters():
                    p[...] = 0.0
            else:
                net.init_glorot(rng)
        return self

    def parameters(self):
        """``(name, array)`` pairs in a fixed order; arrays are live views."""
        for key, net in self.nets.items():
            for name, p in net.parameters():
                yield f"{key}.{name}", p

    def parameter_count(self) -> int:
        return sum(net.count() for net in self.nets.values())

    def copy(self) -> "VaeModel":
        other = VaeModel(self.arch, self.stats)
        for (_, dst), (_, src) in zip(other.parameters(), self.parameters()):
            dst[...] = src
        return other


def build_model(arch: Architecture, stats: Optional[NormStats] = None, seed: int = 0,
                zero: bool = False) -> VaeModel:
    return VaeModel(arch, stats).init(np.random.default_rng(seed), zero=zero)


# forward passes ----------------------------------------------------------------

def _check_inputs(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 12:
        raise ValueError(f"expected normalized 12-vectors, got shape {x.shape}")
    return x


def _encode(model: VaeModel, x):
    nets = model.nets
    parts, caches = [], {}
    for key, cols in (("enc_pos", POS), ("enc_quat", QUAT), ("enc_spread", SPREAD), ("enc_table", TABLE)):
        h, caches[key] = nets[key].forward(x[:, cols])
        parts.append(h)
    h, caches["enc_main"] = nets["enc_main"].forward(np.concatenate(parts, axis=1))
    mean, caches["head_mean"] = nets["head_mean"].forward(h)
    raw_lv, caches["head_logvar"] = nets["head_logvar"].forward(h)
    logvar = np.clip(raw_lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mean, logvar, raw_lv, caches


def _decode(model: VaeModel, latent, table):
    nets = model.nets
    caches = {}
    a, caches["dec_latent"] = nets["dec_latent"].forward(latent)
    b, caches["dec_table"] = nets["dec_table"].forward(table)
    h, caches["dec_main"] = nets["dec_main"].forward(np.concatenate([a, b], axis=1))
    out = {}
    raw, caches["out_pos"] = nets["out_pos"].forward(h)
    out["pos"] = _sigmoid(raw)
    v, caches["out_quat"] = nets["out_quat"].forward(h)
    norm = np.sqrt(np.einsum("ij,ij->i", v, v))[:, None]
    if np.any(norm < QUAT_EPS):
        raise DegenerateQuaternionError("decoder produced a zero quaternion; resample the latent")
    out["quat"] = v / norm
    out["quat_norm"] = norm
    raw, caches["out_spread"] = nets["out_spread"].forward(h)
    out["spread"] = _sigmoid(raw)
    if "out_quality" in nets:
        raw, caches["out_quality"] = nets["out_quality"].forward(h)
        out["quality"] = _sigmoid(raw)
    return out, caches


def encode(model: VaeModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Latent mean and clamped log-variance of normalized inputs ``x`` (n, 12)."""
    mean, logvar, _, _ = _encode(model, _check_inputs(x))
    return mean[:, 0], logvar[:, 0]


def reparameterize(mean, logvar, rng: Optional[np.random.Generator] = None, eps=None):
    mean = np.asarray(mean, dtype=float)
    logvar = np.clip(np.asarray(logvar, dtype=float), -LOGVAR_CLAMP, LOGVAR_CLAMP)
    if eps is None:
        eps = rng.standard_normal(mean.shape)
    return mean + np.exp(0.5 * logvar) * eps


@dataclass
class Decoded:
    """Denormalized decoder outputs for a batch of latents."""

    latents: np.ndarray
    values: np.ndarray                   # (n, 12) record fields in column order
    quality: Optional[np.ndarray] = None  # predicted quality, QGG only

    @property
    def orientation(self) -> np.ndarray:
        return self.values[:, QUAT]

    def records(self, stable_id: int) -> list[GraspRecord]:
        return [GraspRecord(v[POS], v[QUAT], v[7], v[TABLE], stable_id) for v in self.values]


def decode(model: VaeModel, latents, plane) -> Decoded:
    """Decode latents conditioned on a tabletop plane into record fields."""
    if model.stats is None:
        raise ValueError("model has no normalization statistics")
    latents = np.asarray(latents, dtype=float).reshape(-1, LATENT_DIM)
    if not np.all(np.isfinite(latents)):
        raise ValueError("latents must be finite")
    plane = np.asarray(plane, dtype=float).reshape(4)
    table = np.broadcast_to(plane, (len(latents), 4))
    out, _ = _decode(model, latents, table)
    norm = np.empty((len(latents), 12))
    norm[:, POS] = out["pos"]
    norm[:, QUAT] = out["quat"]
    norm[:, SPREAD] = out["spread"]
    norm[:, TABLE] = table
    values = denormalize(norm, model.stats)
    quality = None
    if "quality" in out:
        quality = denormalize_quality(out["quality"][:, 0], model.stats)
    return Decoded(latents[:, 0].copy(), values, quality)


# loss and gradients ---------------------------------------------------------------

@dataclass
class LossParts:
    total: float
    position: float
    orientation: float
    spread: float
    kl: float
    quality: Optional[float] = None


def loss_and_grad(model: VaeModel, x, quality=None, eps=None, kl_weight: float = 1.0,
                  rng: Optional[np.random.Generator] = None, need_grad: bool = True):
    """Loss of a normalized batch and, optionally, its exact gradient.

    Each field contributes the batch mean of its squared error; the groups
    are sums of their fields.  ``quality`` holds normalized targets and is
    required for QGG models.  ``eps`` fixes the reparameterization noise.
    """
    x = _check_inputs(x)
    n = len(x)
    if eps is None:
        eps = rng.standard_normal((n, LATENT_DIM))
    eps = np.asarray(eps, dtype=float).reshape(n, LATENT_DIM)
    has_q = model.arch.has_quality
    if has_q:
        if quality is None:
            raise ValueError("QGG loss needs quality targets")
        q_target = np.asarray(quality, dtype=float).reshape(n, 1)

    mean, logvar, raw_lv, enc_caches = _encode(model, x)
    std = np.exp(0.5 * logvar)
    latent = mean + std * eps
    table = x[:, TABLE]
    out, dec_caches = _decode(model, latent, table)

    d_pos = out["pos"] - x[:, POS]
    d_quat = out["quat"] - x[:, QUAT]
    d_spread = out["spread"] - x[:, SPREAD]
    l_pos = float(np.sum(d_pos ** 2) / n)
    l_quat = float(np.sum(d_quat ** 2) / n)
    l_spread = float(np.sum(d_spread ** 2) / n)
    kl = float(-0.5 * np.mean(1.0 + logvar - mean ** 2 - np.exp(logvar)))
    total = l_pos + l_quat + l_spread + kl_weight * kl
    l_q = None
    if has_q:
        d_q = out["quality"] - q_target
        l_q = float(np.sum(d_q ** 2) / n)
        total += l_q
    parts = LossParts(total, l_pos, l_quat, l_spread, kl, l_q)
    if not need_grad:
        return parts, None

    nets = model.nets
    grads = {}

    def collect(key, g):
        for name, v in g.items():
            grads[f"{key}.{name}"] = v

    s = out["pos"]
    dh, g = nets["out_pos"].backward(dec_caches["out_pos"], (2.0 / n) * d_pos * s * (1 - s))
    collect("out_pos", g)
    dh_total = dh
    q, norm = out["quat"], out["quat_norm"]
    dq = (2.0 / n) * d_quat
    dv = (dq - q * np.sum(q * dq, axis=1, keepdims=True)) / norm
    dh, g = nets["out_quat"].backward(dec_caches["out_quat"], dv)
    collect("out_quat", g)
    dh_total = dh_total + dh
    s = out["spread"]
    dh, g = nets["out_spread"].backward(dec_caches["out_spread"], (2.0 / n) * d_spread * s * (1 - s))
    collect("out_spread", g)
    dh_total = dh_total + dh
    if has_q:
        s = out["quality"]
        dh, g = nets["out_quality"].backward(dec_caches["out_quality"], (2.0 / n) * d_q * s * (1 - s))
        collect("out_quality", g)
        dh_total = dh_total + dh

    dcat, g = nets["dec_main"].backward(dec_caches["dec_main"], dh_total)
    collect("dec_main", g)
    w_in = model.arch.input_width
    d_lat, g = nets["dec_latent"].backward(dec_caches["dec_latent"], dcat[:, :w_in])
    collect("dec_latent", g)
    _, g = nets["dec_table"].backward(dec_caches["dec_table"], dcat[:, w_in:])
    collect("dec_table", g)

    d_mean = d_lat + kl_weight * mean / n
    d_logvar = d_lat * eps * 0.5 * std + kl_weight * (-0.5 / n) * (1.0 - np.exp(logvar))
    d_logvar = d_logvar * (np.abs(raw_lv) < LOGVAR_CLAMP)
    dh_m, g = nets["head_mean"].backward(enc_caches["head_mean"], d_mean)
    collect("head_mean", g)
    dh_v, g = nets["head_logvar"].backward(enc_caches["head_logvar"], d_logvar)
    collect("head_logvar", g)
    dcat, g = nets["enc_main"].backward(enc_caches["enc_main"], dh_m + dh_v)
    collect("enc_main", g)
    for i, key in enumerate(("enc_pos", "enc_quat", "enc_spread", "enc_table")):
        _, g = nets[key].backward(enc_caches[key], dcat[:, i * w_in:(i + 1) * w_in])
        collect(key, g)
    return parts, grads


def kl_divergence(mean, logvar) -> float:
    mean = np.asarray(mean, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    return float(-0.5 * np.mean(1.0 + logvar - mean ** 2 - np.exp(logvar)))


# training -----------------------------------------------------------------------

def training_arrays(model: VaeModel, dataset: GraspDataset):
    x = normalize_many(dataset.records, model.stats)
    q = None
    if model.arch.has_quality:
        raw = dataset.qualities()
        if np.any(~np.isfinite(raw)):
            raise ValueError("QGG training records must all carry a quality")
        q = normalize_quality(raw, model.stats)
    return x, q


def train(arch: Architecture, dataset: GraspDataset, cfg: TrainConfig = TrainConfig(),
          stats: Optional[NormStats] = None, callback=None) -> tuple[VaeModel, list[float]]:
    """Fit a model with Adam on seeded minibatches; returns ``(model, history)``.

    ``history[e]`` is the size-weighted mean total loss of epoch ``e``.
    """
    if len(dataset) < 2:
        raise ValueError("training needs at least two records")
    stats = stats if stats is not None else fit_norm(dataset)
    if arch.has_quality and stats.quality_max is None:
        raise ValueError("QGG training set has no successful grasp to scale quality by")
    rng = np.random.default_rng(cfg.seed)
    model = VaeModel(arch, stats).init(rng)
    x, q = training_arrays(model, dataset)
    params = list(model.parameters())
    m = {k: np.zeros_like(p) for k, p in params}
    v = {k: np.zeros_like(p) for k, p in params}
    step = 0
    history = []
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            parts, grads = loss_and_grad(model, x[idx], None if q is None else q[idx],
                                         kl_weight=cfg.kl_weight, rng=rng)
            if not np.isfinite(parts.total):
                raise DivergenceError(epoch, parts.total)
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for key, p in params:
                g = grads[key]
                m[key] = cfg.beta1 * m[key] + (1 - cfg.beta1) * g
                v[key] = cfg.beta2 * v[key] + (1 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (m[key] / c1) / (np.sqrt(v[key] / c2) + cfg.adam_eps)
            epoch_loss += parts.total * len(idx)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        history.append(epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
    return model, history


def evaluate_loss(model: VaeModel, dataset: GraspDataset, kl_weight: float = 1.0, seed: int = 0) -> LossParts:
    x, q = training_arrays(model, dataset)
    parts, _ = loss_and_grad(model, x, q, kl_weight=kl_weight, rng=np.random.default_rng(seed),
                             need_grad=False)
    return parts


# sampling -------------------------------------------------------------------------

def sample_latents(n: int, mode: str, rng: Optional[np.random.Generator] = None,
                   latent_range=SWEEP_RANGE) -> np.ndarray:
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if mode == "prior":
        return rng.standard_normal(n)
    if mode == "sweep":
        return np.linspace(latent_range[0], latent_range[1], n)
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample_grasps(model: VaeModel, stable: StablePose, n: int, mode: str = "prior",
                  rng: Optional[np.random.Generator] = None, latent_range=SWEEP_RANGE) -> list[GraspRecord]:
    """Decode ``n`` latents (prior draws or an even sweep) into records for ``stable``."""
    latents = sample_latents(n, mode, rng, latent_range)
    if n == 0:
        return []
    return decode(model, latents, stable.tabletop_plane_obj).records(stable.id)


# persistence ----------------------------------------------------------------------

def save_model(model: VaeModel, path) -> None:
    """Write weights and a JSON header (version, architecture, statistics) to an npz file."""
    if model.stats is None:
        raise ValueError("cannot save a model without normalization statistics")
    meta = {
        "format_version": FORMAT_VERSION,
        "architecture": asdict(model.arch),
        "stats": model.stats.to_dict(),
    }
    arrays = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    arrays.update((name, p) for name, p in model.parameters())
    # written by hand rather than with np.savez so member timestamps are fixed
    # and identical models give byte-identical files
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)
    Path(path).write_bytes(buf.getvalue())


def load_model(path, require: Optional[str] = None) -> VaeModel:
    """Load a model file; ``require`` ("hgg"/"qgg") enforces the variant."""
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc}") from None
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"model file version {version}, expected {FORMAT_VERSION}")
    try:
        arch = Architecture(**meta["architecture"])
        stats = NormStats.from_dict(meta["stats"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupt model header in {path}: {exc}") from None
    if require is not None and arch.kind != require:
        raise ArchitectureMismatchError(f"{path} holds a {arch.kind} model, {require} required")
    model = VaeModel(arch, stats)
    for name, p in model.parameters():
        if name not in arrays or arrays[name].shape != p.shape:
            raise ArchitectureMismatchError(f"weights {name} missing or mis-shaped in {path}")
        p[...] = arrays[name]
    return model
