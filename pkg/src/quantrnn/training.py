"""Quantization-aware training loop.

Every step quantizes the current shadow weights for the forward pass,
backpropagates through the quantized images with a straight-through
estimator (the gradient of a quantized weight is applied unchanged to its
full-precision shadow), and lets Adam update the shadows. Shadow values are
never overwritten by their quantized images.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cells import Param, QuantContext
from .errors import ConfigError, DomainError, ShapeError, StateError, TrainingError
from .quantize import FULL_PRECISION, QuantScheme, quantize, weight_histogram
from .tensor import Tensor, add, clip, hadamard, log, mean_all, scale, sub

BCE_EPS = 1e-7


def bce_loss(pred: Tensor, target) -> Tensor:
    """Binary cross entropy, mean over all elements.

    Predictions are clipped to [1e-7, 1 - 1e-7] so the loss stays finite for
    the full closed [0, 1] range.
    """
    t = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.data.shape != t.data.shape:
        raise ShapeError(f"bce_loss: prediction {pred.data.shape} vs target {t.data.shape}")
    p = clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    one_minus_t = Tensor(1.0 - t.data)
    one_minus_p = add(scale(p, -1.0), _ones_like(p))
    per_elem = add(hadamard(t, log(p)), hadamard(one_minus_t, log(one_minus_p)))
    return scale(mean_all(per_elem), -1.0)


def _ones_like(x: Tensor) -> Tensor:
    return Tensor(np.ones_like(x.data))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements; differentiable w.r.t. pred."""
    t = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.data.shape != t.data.shape:
        raise ShapeError(f"mse_loss: prediction {pred.data.shape} vs target {t.data.shape}")
    d = sub(pred, t)
    return mean_all(hadamard(d, d))


def mse_frames(frame: Tensor | np.ndarray, other: Tensor | np.ndarray) -> float:
    """Per-frame mean squared error (1/mn) * sum((I - K)^2) for 2-D frames."""
    i = frame.data if isinstance(frame, Tensor) else np.asarray(frame)
    k = other.data if isinstance(other, Tensor) else np.asarray(other)
    if i.shape != k.shape:
        raise ShapeError(f"mse_frames: {i.shape} vs {k.shape}")
    if i.ndim != 2:
        raise ShapeError(f"mse_frames: frames must be 2-D, got {i.shape}")
    d = i.astype(np.float64) - k.astype(np.float64)
    return float((d * d).mean())


LOSSES = {"bce": bce_loss, "mse": mse_loss}


@dataclass
class TrainConfig:
    """Optimizer, loss, and quantization settings for one training run."""

    scheme: QuantScheme = FULL_PRECISION
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "bce"
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    grad_clip: float | None = None
    quantize_biases: bool = False
    quantize_embeddings: bool = False
    quantize_peepholes: bool = False
    eval_quantized: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")


def adam_step(p: Param, t: int, cfg: TrainConfig):
    """Bias-corrected Adam update applied in place to the shadow value."""
    if t < 1:
        raise StateError(f"adam_step: step count must be >= 1, got {t}")
    g = p.value.grad
    if g is None:
        return
    p.m *= cfg.beta1
    p.m += (1.0 - cfg.beta1) * g
    p.v *= cfg.beta2
    p.v += (1.0 - cfg.beta2) * np.square(g)
    m_hat = p.m / (1.0 - cfg.beta1 ** t)
    v_hat = p.v / (1.0 - cfg.beta2 ** t)
    p.value.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def clip_global_norm(params, max_norm: float):
    """Scale all gradients down if their joint L2 norm exceeds ``max_norm``."""
    total = 0.0
    for p in params:
        if p.value.grad is not None:
            total += float(np.square(p.value.grad, dtype=np.float64).sum())
    norm = total ** 0.5
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.value.grad is not None:
                p.value.grad = p.value.grad * factor
    return norm


class Trainer:
    """Owns the per-step quantize -> forward -> backward -> update cycle."""

    def __init__(self, model, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.step_count = 0
        self.quant_hook = None
        self._loss_fn = LOSSES[cfg.loss]
        self._shadow_ids = {p.name: id(p.value.data) for p in model.params()}
        model.set_quant_policy(cfg.quantize_biases, cfg.quantize_embeddings, cfg.quantize_peepholes)

    def train_step(self, inputs, targets) -> float:
        cfg = self.cfg
        self.step_count += 1
        qctx = QuantContext(cfg.scheme, hook=self.quant_hook)
        pred = self.model.forward(inputs, qctx, training=True)
        loss = self._loss_fn(pred, targets)
        value = loss.item()
        if not np.isfinite(value):
            stats = ", ".join(f"{p.name}: |w|max={np.abs(p.value.data).max():.3g}"
                              for p in self.model.params()[:4])
            raise TrainingError(f"non-finite loss {value} at step {self.step_count} ({stats}, ...)")
        params = self.model.params()
        for p in params:
            p.zero_grad()
        loss.backward()
        if cfg.grad_clip is not None:
            clip_global_norm(params, cfg.grad_clip)
        for p in params:
            adam_step(p, self.step_count, cfg)
        for p in params:
            # the shadow array must survive the step; quantized images never replace it
            assert id(p.value.data) == self._shadow_ids[p.name], f"shadow of {p.name} was replaced"
        return value


def eval_context(cfg: TrainConfig) -> QuantContext:
    return QuantContext(cfg.scheme if cfg.eval_quantized else FULL_PRECISION)


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield np.arange(start, min(start + batch_size, n))


def evaluate(model, data, cfg: TrainConfig) -> tuple[float, float]:
    """Forward the dataset with the training scheme's quantized weights.

    Returns (loss, metric). The metric is task-specific: thresholded-at-0.5
    accuracy for sentiment, full-sequence decode accuracy for the summation
    task, and the mean per-frame rollout MSE over frames 8-10 for video.
    """
    from . import data as tasks  # local import to avoid a cycle

    qctx = eval_context(cfg)
    loss_fn = LOSSES[cfg.loss]
    if model.kind == "frames":
        seqs = np.asarray(data)
        if seqs.size == 0:
            raise DomainError("evaluate: empty dataset")
        total_loss, total_sq, n_frames = 0.0, 0.0, 0
        for idx in _batches(seqs.shape[0], cfg.batch_size):
            chunk = seqs[idx]
            context, targets = tasks.split_train_predict(chunk)
            teacher_in = context
            teacher_out = np.concatenate([context[:, 1:], targets[:, :1]], axis=1)
            pred = model.forward(teacher_in, qctx, training=False)
            total_loss += loss_fn(pred, teacher_out).item() * len(idx)
            rolled = model.rollout(context, targets.shape[1], qctx)
            total_sq += float(((rolled.astype(np.float64) - targets) ** 2).mean(axis=(2, 3)).sum())
            n_frames += rolled.shape[0] * rolled.shape[1]
        return total_loss / seqs.shape[0], total_sq / n_frames

    inputs, targets = data
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if inputs.shape[0] == 0:
        raise DomainError("evaluate: empty dataset")
    total_loss, correct = 0.0, 0
    for idx in _batches(inputs.shape[0], cfg.batch_size):
        pred = model.forward(inputs[idx], qctx, training=False)
        total_loss += loss_fn(pred, targets[idx]).item() * len(idx)
        if model.kind == "sum":
            pred_ids = pred.data.argmax(axis=-1)
            true_ids = targets[idx].argmax(axis=-1)
            correct += sum(tasks.decode_ids(p).strip() == tasks.decode_ids(t).strip()
                           for p, t in zip(pred_ids, true_ids))
        else:
            correct += int(((pred.data >= 0.5) == (targets[idx] >= 0.5)).all(axis=-1).sum())
    return total_loss / inputs.shape[0], correct / inputs.shape[0]


def rollout_frames(model, seed_frames, horizon: int, cfg: TrainConfig | None = None) -> np.ndarray:
    """Autoregressive frame generation using the configured scheme's weights."""
    qctx = eval_context(cfg) if cfg is not None else QuantContext()
    return model.rollout(seed_frames, horizon, qctx)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_metric: float
    val_loss: float | None
    val_metric: float | None
    seconds: float


@dataclass
class TrainReport:
    """Per-epoch training trace plus final metric and weight histograms."""

    epochs: list[EpochRecord] = field(default_factory=list)
    final_metric: float | None = None
    histograms: dict = field(default_factory=dict)

    def csv(self, include_timing: bool = False, header_comments: list[str] | None = None) -> str:
        lines = [f"# {line}" for line in (header_comments or [])]
        lines.append("epoch,train_loss,train_metric,val_loss,val_metric,seconds")
        for r in self.epochs:
            val_loss = "" if r.val_loss is None else repr(float(r.val_loss))
            val_metric = "" if r.val_metric is None else repr(float(r.val_metric))
            seconds = repr(round(r.seconds, 3)) if include_timing else "0.0"
            lines.append(f"{r.epoch},{float(r.train_loss)!r},{float(r.train_metric)!r},"
                         f"{val_loss},{val_metric},{seconds}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path, include_timing: bool = False, header_comments=None):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.csv(include_timing, header_comments))


def fit(model, cfg: TrainConfig, train_data, val_data=None, train_metric_data=None,
        early_stop_metric: float | None = None, log=None, histogram_bins: int = 64) -> TrainReport:
    """Run the full epoch loop; deterministic for a fixed config and seed.

    ``train_data`` is (inputs, targets) for sequence tasks or the raw frame
    sequences for video. ``train_metric_data`` defaults to evaluating on the
    training data itself. ``early_stop_metric`` stops once the train metric
    reaches the threshold.
    """
    trainer = Trainer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    if model.kind == "frames":
        seqs = np.asarray(train_data)
        n = seqs.shape[0]
    else:
        inputs, targets = train_data
        inputs, targets = np.asarray(inputs), np.asarray(targets)
        n = inputs.shape[0]
    if n == 0:
        raise DomainError("fit: empty training set")

    from . import data as tasks

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if model.kind == "frames":
                chunk = seqs[idx]
                context, targets_f = tasks.split_train_predict(chunk)
                teacher_out = np.concatenate([context[:, 1:], targets_f[:, :1]], axis=1)
                losses.append(trainer.train_step(context, teacher_out))
            else:
                losses.append(trainer.train_step(inputs[idx], targets[idx]))
        metric_data = train_metric_data if train_metric_data is not None else train_data
        _, train_metric = evaluate(model, metric_data, cfg)
        val_loss = val_metric = None
        if val_data is not None:
            val_loss, val_metric = evaluate(model, val_data, cfg)
        seconds = time.perf_counter() - t0
        record = EpochRecord(epoch, float(np.mean(losses)), train_metric, val_loss, val_metric, seconds)
        report.epochs.append(record)
        if log:
            log(record)
        if early_stop_metric is not None and train_metric >= early_stop_metric:
            break

    report.final_metric = report.epochs[-1].val_metric if val_data is not None else report.epochs[-1].train_metric
    for p in model.quantizable_params():
        q = quantize(p.value.data, cfg.scheme)
        report.histograms[p.name] = weight_histogram(q, histogram_bins)
    return report
