"""Uncertainty-aware point-cloud surrogate.

A shared per-atom affine map stack (spectral-normalized, residual from block 2
on), masked global max pooling, and a random-Fourier-feature Gaussian-process
head with a Laplace posterior. Everything is plain numpy with hand-written
backprop so training is deterministic and gradient-checkable.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit, log_softmax, softmax

from .data import AtomicStructure, FeatureSchema
from .errors import (
    EmptyDatasetError,
    HeadMismatchError,
    NonFiniteLossError,
    ShapeMismatchError,
    TooManyAtomsError,
    UnknownElementError,
)

HEADS = ("regression", "classification")
CHECKPOINT_FORMAT = "catscreen-upnet/1"
DEFAULT_EPOCHS = {"regression": 500, "classification": 300}


@dataclass(frozen=True)
class ModelConfig:
    head: str = "regression"
    n_blocks: int = 5
    hidden_width: int = 64
    spectral_bound: float = 0.95
    power_iterations: int = 1
    rff_dim: int = 1024
    rff_scale: float = 3.0
    ridge_prior: float = 1.0
    # None: use the post-training MSE (regression only)
    noise_variance: float | None = None
    noise_floor: float = 1e-4
    # linear projection shortcut around block 1 (off: block 1 has no residual)
    input_shortcut: bool = False
    learning_rate: float = 1e-5
    batch_size: int = 32
    epochs: int | None = None
    seed: int = 0
    newton_iterations: int = 50

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if not (0.0 < self.spectral_bound <= 1.0):
            raise ValueError("spectral_bound must lie in (0, 1]")
        if self.rff_dim < self.hidden_width:
            raise ValueError("rff_dim must be >= hidden_width")
        if self.n_blocks < 1 or self.hidden_width < 1 or self.batch_size < 1:
            raise ValueError("n_blocks, hidden_width and batch_size must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")
        if self.ridge_prior <= 0:
            raise ValueError("ridge_prior must be positive")

    @property
    def n_outputs(self) -> int:
        return 1 if self.head == "regression" else 2

    @property
    def resolved_epochs(self) -> int:
        return self.epochs if self.epochs is not None else DEFAULT_EPOCHS[self.head]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# point-cloud tensors


@dataclass(frozen=True)
class PointCloudTensor:
    matrix: np.ndarray  # (max_atoms, feature_width)
    mask: np.ndarray  # (max_atoms,), True = real atom

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.mask.shape != self.matrix.shape[:1]:
            raise ShapeMismatchError(f"matrix {self.matrix.shape} vs mask {self.mask.shape}")
        if not self.mask.any():
            raise ValueError("point cloud has no valid rows")


class PointCloudBatch:
    """Stack of point clouds sharing one (max_atoms, feature_width) shape."""

    def __init__(self, matrix: np.ndarray, mask: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if matrix.ndim != 3 or mask.shape != matrix.shape[:2]:
            raise ShapeMismatchError(f"matrix {matrix.shape} vs mask {mask.shape}")
        if len(mask) and not mask.any(axis=1).all():
            raise ValueError("every point cloud needs at least one valid row")
        self.matrix = matrix
        self.mask = mask

    @classmethod
    def from_tensors(cls, tensors: Sequence[PointCloudTensor]) -> "PointCloudBatch":
        if not tensors:
            raise EmptyDatasetError("no point clouds")
        return cls(np.stack([t.matrix for t in tensors]), np.stack([t.mask for t in tensors]))

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, idx) -> "PointCloudBatch":
        idx = np.atleast_1d(np.arange(len(self))[idx])
        return PointCloudBatch(self.matrix[idx], self.mask[idx])

    @property
    def feature_width(self) -> int:
        return self.matrix.shape[2]

    def tensor(self, i: int) -> PointCloudTensor:
        return PointCloudTensor(self.matrix[i], self.mask[i])

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Valid rows concatenated sample by sample, plus each sample's start offset."""
        counts = self.mask.sum(axis=1)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.intp)
        return self.matrix[self.mask], offsets


def _as_batch(x) -> tuple[PointCloudBatch, bool]:
    if isinstance(x, PointCloudBatch):
        return x, False
    if isinstance(x, PointCloudTensor):
        return PointCloudBatch(x.matrix[None], x.mask[None]), True
    return PointCloudBatch.from_tensors(list(x)), False


def encode(structure: AtomicStructure, schema: FeatureSchema) -> PointCloudTensor:
    """Row i = [one-hot element | mass, electronegativity, radius | x, y, z]."""
    n = len(structure.atoms)
    if n > schema.max_atoms:
        raise TooManyAtomsError(f"{structure.id}: {n} atoms > max_atoms={schema.max_atoms}")
    k = len(schema.element_vocab)
    lookup = {el: i for i, el in enumerate(schema.element_vocab)}
    matrix = np.zeros(schema.shape)
    mask = np.zeros(schema.max_atoms, dtype=bool)
    for i, atom in enumerate(structure.atoms):
        j = lookup.get(atom.el)
        if j is None:
            raise UnknownElementError(f"{structure.id}: element {atom.el!r} not in schema vocabulary")
        p = schema.element_properties[atom.el]
        matrix[i, j] = 1.0
        matrix[i, k:] = (p.mass, p.electronegativity, p.radius, atom.x, atom.y, atom.z)
        mask[i] = True
    return PointCloudTensor(matrix, mask)


def decode(tensor: PointCloudTensor, schema: FeatureSchema) -> list[tuple[str, float, float, float]]:
    """Recover (element, x, y, z) for each valid row by one-hot lookup."""
    k = len(schema.element_vocab)
    out = []
    for row in tensor.matrix[tensor.mask]:
        el = schema.element_vocab[int(np.argmax(row[:k]))]
        out.append((el, float(row[k + 3]), float(row[k + 4]), float(row[k + 5])))
    return out


def encode_many(structures: Sequence[AtomicStructure], schema: FeatureSchema) -> PointCloudBatch:
    return PointCloudBatch.from_tensors([encode(s, schema) for s in structures])


# ---------------------------------------------------------------------------
# spectral normalization


def power_iteration(W: np.ndarray, u: np.ndarray | None = None, n_iter: int = 1, rng=None):
    """Estimate the top singular value of W, returning (sigma, u).

    ``u`` is the persisted right singular vector estimate; pass the returned
    one back in on the next call.
    """
    if u is None:
        rng = rng or np.random.default_rng(0)
        u = rng.standard_normal(W.shape[1])
    u = u / max(np.linalg.norm(u), 1e-300)
    sigma = 0.0
    for _ in range(n_iter):
        v = W @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0, u
        v /= nv
        u = W.T @ v
        sigma = np.linalg.norm(u)
        if sigma == 0.0:
            return 0.0, u
        u /= sigma
    return float(sigma), u


def spectral_normalize(
    W: np.ndarray, c: float = 0.95, u: np.ndarray | None = None, n_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Rescale W so its largest singular value is at most ``c``.

    Returns the (possibly unchanged) matrix and the updated iterate vector.
    """
    if c <= 0:
        raise ValueError("bound must be positive")
    sigma, u = power_iteration(W, u, n_iter)
    if sigma > c:
        return W * (c / sigma), u
    return W, u


def _exact_normalize(W: np.ndarray, c: float) -> np.ndarray:
    s = np.linalg.norm(W, 2)
    return W * (c / s) if s > c else W


# ---------------------------------------------------------------------------
# model


@dataclass
class SurrogateModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    rff_weight: np.ndarray  # (D, hidden_width), frozen
    rff_bias: np.ndarray  # (D,), frozen
    input_mean: np.ndarray
    input_std: np.ndarray
    latent_scale: float = 1.0
    target_mean: float = 0.0
    target_std: float = 1.0
    precision: np.ndarray | None = None
    noise_variance: float = 0.0
    schema: dict | None = None
    _chol: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def feature_width(self) -> int:
        return self.params["W0"].shape[1]

    def block_weights(self) -> list[np.ndarray]:
        return [self.params[f"W{l}"] for l in range(self.config.n_blocks)]

    def precision_factor(self):
        if self.precision is None:
            raise RuntimeError("model has no posterior; call fit() first")
        if self._chol is None:
            self._chol = cho_factor(self.precision, lower=True)
        return self._chol


def init_model(feature_width: int, config: ModelConfig, rng: np.random.Generator) -> SurrogateModel:
    H, D = config.hidden_width, config.rff_dim
    params = {}
    fan_in = feature_width
    for l in range(config.n_blocks):
        W = rng.standard_normal((H, fan_in)) * math.sqrt(2.0 / (fan_in + H))
        params[f"W{l}"] = _exact_normalize(W, config.spectral_bound)
        params[f"b{l}"] = np.zeros(H)
        fan_in = H
    if config.input_shortcut:
        params["P"] = rng.standard_normal((H, feature_width)) / math.sqrt(feature_width)
    params["beta"] = rng.standard_normal((D, config.n_outputs)) * 0.01
    return SurrogateModel(
        config=config,
        params=params,
        rff_weight=rng.standard_normal((D, H)),
        rff_bias=rng.uniform(0.0, 2.0 * math.pi, D),
        input_mean=np.zeros(feature_width),
        input_std=np.ones(feature_width),
    )


def _standardize_rows(model: SurrogateModel, rows: np.ndarray) -> np.ndarray:
    return (rows - model.input_mean) / model.input_std


def _blocks_forward(model: SurrogateModel, x: np.ndarray, cache: list | None = None) -> np.ndarray:
    """Per-row block stack; x is (rows, feature_width) already standardized."""
    p = model.params
    a = x @ p["W0"].T + p["b0"]
    h = np.maximum(a, 0.0)
    if "P" in p:
        h = h + x @ p["P"].T
    if cache is not None:
        cache.append((x, a))
    for l in range(1, model.config.n_blocks):
        a = h @ p[f"W{l}"].T + p[f"b{l}"]
        if cache is not None:
            cache.append((h, a))
        h = np.maximum(a, 0.0) + h
    return h


def _check_width(model: SurrogateModel, batch: PointCloudBatch) -> None:
    if batch.feature_width != model.feature_width:
        raise ShapeMismatchError(
            f"input feature width {batch.feature_width} != model width {model.feature_width}"
        )


def forward_features(x, model: SurrogateModel) -> np.ndarray:
    """Pooled latent vector(s): masked global max over per-row block outputs."""
    batch, single = _as_batch(x)
    _check_width(model, batch)
    rows, offsets = batch.packed()
    h = _blocks_forward(model, _standardize_rows(model, rows))
    latent = np.maximum.reduceat(h, offsets, axis=0)
    return latent[0] if single else latent


latent = forward_features


def rff_embed(latent_vec: np.ndarray, model: SurrogateModel) -> np.ndarray:
    """sqrt(2/D) * cos(rff_scale * W_r z + b_r) with z = latent / latent_scale."""
    z = np.asarray(latent_vec) / model.latent_scale
    pre = model.config.rff_scale * (z @ model.rff_weight.T) + model.rff_bias
    return math.sqrt(2.0 / model.config.rff_dim) * np.cos(pre)


def loss_and_gradients(
    model: SurrogateModel,
    batch: PointCloudBatch,
    targets: np.ndarray,
    n_total: int | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Minibatch loss and analytic gradients for every trainable parameter.

    Regression: mean squared error on standardized targets. Classification:
    categorical cross entropy on integer labels. Both add a ridge penalty
    ``ridge_prior / (2 n_total) * ||beta||^2`` on the output weights.
    """
    cfg = model.config
    p = model.params
    n_total = n_total or len(batch)
    rows, offsets = batch.packed()
    x = _standardize_rows(model, rows)
    cache: list = []
    h = _blocks_forward(model, x, cache)
    lat = np.maximum.reduceat(h, offsets, axis=0)

    z = lat / model.latent_scale
    pre = cfg.rff_scale * (z @ model.rff_weight.T) + model.rff_bias
    amp = math.sqrt(2.0 / cfg.rff_dim)
    phi = amp * np.cos(pre)
    out = phi @ p["beta"]
    B = len(batch)
    penalty = 0.5 * cfg.ridge_prior / n_total * np.sum(p["beta"] ** 2)

    if cfg.head == "regression":
        y = (np.asarray(targets, dtype=float).reshape(-1, 1) - model.target_mean) / model.target_std
        resid = out - y
        loss = float(np.mean(resid**2)) + penalty
        d_out = 2.0 * resid / B
    else:
        labels = np.asarray(targets, dtype=int)
        logp = log_softmax(out, axis=1)
        loss = float(-np.mean(logp[np.arange(B), labels])) + penalty
        d_out = np.exp(logp)
        d_out[np.arange(B), labels] -= 1.0
        d_out /= B

    grads = {"beta": phi.T @ d_out + cfg.ridge_prior / n_total * p["beta"]}
    d_phi = d_out @ p["beta"].T
    d_pre = -amp * np.sin(pre) * d_phi
    d_lat = cfg.rff_scale * (d_pre @ model.rff_weight) / model.latent_scale

    # max-pool backward: route each latent entry's gradient to its (first) argmax row
    dh = np.zeros_like(h)
    cols = np.arange(h.shape[1])
    ends = np.append(offsets[1:], h.shape[0])
    for i, (s, e) in enumerate(zip(offsets, ends)):
        dh[s + np.argmax(h[s:e], axis=0), cols] = d_lat[i]

    for l in range(cfg.n_blocks - 1, 0, -1):
        h_in, a = cache[l]
        da = dh * (a > 0)
        grads[f"W{l}"] = da.T @ h_in
        grads[f"b{l}"] = da.sum(axis=0)
        dh = dh + da @ p[f"W{l}"]
    x_in, a0 = cache[0]
    da = dh * (a0 > 0)
    grads["W0"] = da.T @ x_in
    grads["b0"] = da.sum(axis=0)
    if "P" in p:
        grads["P"] = dh.T @ x_in
    return loss, grads


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def _validate_targets(targets: np.ndarray, head: str) -> np.ndarray:
    t = np.asarray(targets)
    if head == "classification":
        if not np.all(np.isin(t, (0, 1))):
            raise ValueError("classification labels must be 0 or 1")
        return t.astype(int)
    t = t.astype(float)
    if not np.all(np.isfinite(t)):
        raise ValueError("regression targets must be finite")
    return t


def _fit_standardization(model: SurrogateModel, batch: PointCloudBatch, targets: np.ndarray) -> None:
    rows, _ = batch.packed()
    model.input_mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    model.input_std = np.where(std > 1e-12, std, 1.0)
    if model.config.head == "regression":
        model.target_mean = float(np.mean(targets))
        s = float(np.std(targets))
        model.target_std = s if s > 1e-12 else 1.0
    lat = forward_features(batch, model)
    spread = math.sqrt(float(lat.var(axis=0).sum())) if len(lat) > 1 else 0.0
    model.latent_scale = spread if spread > 1e-12 else 1.0


def fit(
    batch: PointCloudBatch,
    targets,
    config: ModelConfig,
    init: SurrogateModel | None = None,
    schema: FeatureSchema | None = None,
) -> SurrogateModel:
    """Train with Adam, project block weights onto the spectral bound after
    every step, then compute the Laplace posterior of the GP head."""
    if len(batch) < 2:
        raise EmptyDatasetError(f"need at least 2 training samples, got {len(batch)}")
    targets = _validate_targets(targets, config.head)
    if len(targets) != len(batch):
        raise ShapeMismatchError(f"{len(targets)} targets for {len(batch)} inputs")
    rng = np.random.default_rng(config.seed)
    model = init_model(batch.feature_width, config, rng)
    if init is not None:
        if init.feature_width != batch.feature_width or init.config.head != config.head:
            raise ShapeMismatchError("warm-start model does not match data/head")
        model.params = {k: v.copy() for k, v in init.params.items()}
    _fit_standardization(model, batch, targets)
    if schema is not None:
        model.schema = schema.to_dict()

    c = config.spectral_bound
    n_blocks = config.n_blocks
    us = [rng.standard_normal(model.params[f"W{l}"].shape[1]) for l in range(n_blocks)]
    opt = Adam(config.learning_rate)
    n = len(batch)
    for _ in range(config.resolved_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_gradients(model, batch[idx], targets[idx], n_total=n)
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"loss became {loss}")
            opt.step(model.params, grads)
            for l in range(n_blocks):
                W = model.params[f"W{l}"]
                sigma, us[l] = power_iteration(W, us[l], config.power_iterations)
                if sigma > c:
                    model.params[f"W{l}"] = W * (c / sigma)
        # full re-estimate once per epoch guards drift of the persisted iterates
        for l in range(n_blocks):
            model.params[f"W{l}"] = _exact_normalize(model.params[f"W{l}"], c)

    laplace_posterior(model, batch, targets)
    return model


def _fit_logistic(phi, y, v0, tau, max_iter):
    """Penalized binary logistic fit on features, logit difference = 2 phi.v."""

    def objective(v):
        d = 2.0 * phi @ v
        return float(np.sum(np.logaddexp(0.0, d) - y * d) + tau * v @ v)

    v = v0.copy()
    f = objective(v)
    eye = np.eye(len(v))
    for _ in range(max_iter):
        p = expit(2.0 * phi @ v)
        g = 2.0 * phi.T @ (p - y) + 2.0 * tau * v
        Hm = 4.0 * (phi.T * (p * (1.0 - p))) @ phi + 2.0 * tau * eye
        step = cho_solve(cho_factor(Hm), g)
        t = 1.0
        while True:
            cand = v - t * step
            fc = objective(cand)
            if fc <= f or t < 1e-6:
                break
            t *= 0.5
        v, f = cand, fc
        if np.max(np.abs(t * step)) < 1e-10:
            break
    return v


def laplace_posterior(model: SurrogateModel, batch: PointCloudBatch, targets) -> None:
    """Closed-form head refit and posterior precision on the training set."""
    cfg = model.config
    phi = rff_embed(forward_features(batch, model), model)
    tau = cfg.ridge_prior
    D = cfg.rff_dim
    if cfg.head == "regression":
        y = (np.asarray(targets, dtype=float) - model.target_mean) / model.target_std
        resid = phi @ model.params["beta"][:, 0] - y
        if cfg.noise_variance is not None:
            noise = cfg.noise_variance
        else:
            noise = max(float(np.mean(resid**2)), cfg.noise_floor)
        precision = tau * np.eye(D) + (phi.T @ phi) / noise
        beta = cho_solve(cho_factor(precision, lower=True), phi.T @ y / noise)
        model.params["beta"] = beta[:, None]
        model.noise_variance = noise
    else:
        y = np.asarray(targets, dtype=float)
        b = model.params["beta"]
        v = _fit_logistic(phi, y, 0.5 * (b[:, 1] - b[:, 0]), tau, cfg.newton_iterations)
        p = expit(2.0 * phi @ v)
        precision = tau * np.eye(D) + (phi.T * (p * (1.0 - p))) @ phi
        model.params["beta"] = np.stack([-v, v], axis=1)
        model.noise_variance = 0.0
    model.precision = 0.5 * (precision + precision.T)
    model._chol = None


# ---------------------------------------------------------------------------
# prediction


@dataclass
class Prediction:
    mean: np.ndarray  # (n,) regression mean, or (n, 2) logit means
    variance: np.ndarray  # (n,) predictive variance (per logit for classification)
    latent: np.ndarray  # (n, hidden_width)
    probability: np.ndarray | None = None  # (n, 2) classification only

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _posterior_variance(model: SurrogateModel, phi: np.ndarray) -> np.ndarray:
    L, lower = model.precision_factor()
    w = solve_triangular(L, phi.T, lower=lower)
    return np.sum(w * w, axis=0)


def _predict_raw(x, model: SurrogateModel):
    batch, single = _as_batch(x)
    lat = forward_features(batch, model)
    phi = rff_embed(lat, model)
    return phi, lat, single


def predict_regression(x, model: SurrogateModel, include_noise: bool = False) -> Prediction:
    if model.config.head != "regression":
        raise HeadMismatchError("model has a classification head")
    phi, lat, _ = _predict_raw(x, model)
    mu = model.target_mean + model.target_std * (phi @ model.params["beta"][:, 0])
    var = _posterior_variance(model, phi)
    if include_noise:
        var = var + model.noise_variance
    return Prediction(mean=mu, variance=model.target_std**2 * var, latent=lat)


def mean_field_softmax(mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """softmax(mu_k / sqrt(1 + pi/8 * var_k)) along the last axis."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    return softmax(mu / np.sqrt(1.0 + math.pi / 8.0 * var), axis=-1)


def predict_class(x, model: SurrogateModel) -> Prediction:
    """Class probabilities via the mean-field softmax; ``std`` is the mean
    per-logit standard deviation (both logits share one variance here)."""
    if model.config.head != "classification":
        raise HeadMismatchError("model has a regression head")
    phi, lat, _ = _predict_raw(x, model)
    mu = phi @ model.params["beta"]
    var = _posterior_variance(model, phi)
    per_logit = np.repeat(var[:, None], 2, axis=1)
    return Prediction(mean=mu, variance=var, latent=lat, probability=mean_field_softmax(mu, per_logit))


def predict(x, model: SurrogateModel) -> Prediction:
    if model.config.head == "regression":
        return predict_regression(x, model)
    return predict_class(x, model)


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: SurrogateModel, path: str | Path) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "latent_scale": model.latent_scale,
        "target_mean": model.target_mean,
        "target_std": model.target_std,
        "noise_variance": model.noise_variance,
        "schema": model.schema,
        "param_names": sorted(model.params),
    }
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    arrays.update(
        rff_weight=model.rff_weight,
        rff_bias=model.rff_bias,
        input_mean=model.input_mean,
        input_std=model.input_std,
    )
    if model.precision is not None:
        arrays["precision"] = model.precision
    with Path(path).open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path: str | Path) -> SurrogateModel:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unrecognized checkpoint format {meta.get('format')!r}")
        params = {k: z[f"param_{k}"].copy() for k in meta["param_names"]}
        return SurrogateModel(
            config=ModelConfig.from_dict(meta["config"]),
            params=params,
            rff_weight=z["rff_weight"].copy(),
            rff_bias=z["rff_bias"].copy(),
            input_mean=z["input_mean"].copy(),
            input_std=z["input_std"].copy(),
            latent_scale=meta["latent_scale"],
            target_mean=meta["target_mean"],
            target_std=meta["target_std"],
            precision=z["precision"].copy() if "precision" in z else None,
            noise_variance=meta["noise_variance"],
            schema=meta["schema"],
        )


def with_seed(config: ModelConfig, seed: int) -> ModelConfig:
    return replace(config, seed=seed)
