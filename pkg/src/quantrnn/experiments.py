"""End-to-end experiment harnesses behind the CLI and the acceptance suite.

Each harness is deterministic given its seed: the same seed drives dataset
generation, parameter initialization, and batch shuffling, so runs that
differ only in quantization scheme see identical data and identical initial
weights.
"""

from __future__ import annotations

import numpy as np

from . import data as tasks
from .models import FrameModel, SentimentModel, SumModel
from .quantize import QuantScheme
from .training import TrainConfig, TrainReport, fit


def _config(scheme: QuantScheme, **kw) -> TrainConfig:
    return TrainConfig(scheme=scheme, **kw)


def run_sum(scheme: QuantScheme, cell: str = "lstm", hidden: int = 64, max_digits: int = 2,
            samples: int = 1000, epochs: int = 350, batch: int = 64, seed: int = 0,
            lr: float = 1e-3, grad_clip: float | None = None,
            early_stop_acc: float | None = 0.99, log=None):
    """Train the digit-addition seq2seq task; metric is sequence accuracy."""
    dataset = tasks.gen_sum_dataset(samples, max_digits, rng_seed=seed)
    x, y = tasks.encode_sum_batch(dataset)
    model = SumModel(cell, hidden, target_len=tasks.sum_target_width(max_digits),
                     rng=np.random.default_rng(seed))
    cfg = _config(scheme, lr=lr, loss="bce", batch_size=batch, epochs=epochs,
                  seed=seed, grad_clip=grad_clip)
    report = fit(model, cfg, (x, y), early_stop_metric=early_stop_acc, log=log)
    return model, report, cfg


def run_sentiment(scheme: QuantScheme, cell: str = "lstm", hidden: int = 128,
                  max_features: int = 20000, maxlen: int = 80, embed_dim: int = 128,
                  epochs: int = 20, batch: int = 64, seed: int = 0, lr: float = 1e-3,
                  train_samples=None, test_samples=None, n_train: int = 5000,
                  n_test: int = 1000, grad_clip: float | None = None, log=None):
    """Train the sentiment classifier; metric is thresholded accuracy.

    Pass pre-tokenized samples to use a real corpus; otherwise a synthetic
    one is generated (n_train/n_test sized) from the run seed.
    """
    if train_samples is None:
        train_samples = tasks.gen_sentiment_dataset(n_train, max_features, maxlen, rng_seed=seed)
    if test_samples is None:
        test_samples = tasks.gen_sentiment_dataset(n_test, max_features, maxlen, rng_seed=seed + 10_000)
    train_samples = tasks.preprocess(train_samples, max_features, maxlen)
    test_samples = tasks.preprocess(test_samples, max_features, maxlen)
    train = tasks.encode_sentiment_batch(train_samples)
    test = tasks.encode_sentiment_batch(test_samples)
    model = SentimentModel(cell, max_features, embed_dim, hidden, rng=np.random.default_rng(seed))
    cfg = _config(scheme, lr=lr, loss="bce", batch_size=batch, epochs=epochs,
                  seed=seed, grad_clip=grad_clip)
    report = fit(model, cfg, train, val_data=test, log=log)
    return model, report, cfg


def run_frames(scheme: QuantScheme, channels: int = 8, size: int = 32, n_train: int = 24,
               n_test: int = 8, epochs: int = 50, batch: int = 8, seed: int = 0,
               lr: float = 1e-3, n_frames: int = 15, grad_clip: float | None = None, log=None):
    """Train the ConvLSTM frame predictor; metric is rollout MSE on frames 8-10."""
    train_seqs = tasks.frames_array(tasks.gen_moving_frames(n_train, rng_seed=seed, size=size,
                                                            n_frames=n_frames))
    test_seqs = tasks.frames_array(tasks.gen_moving_frames(n_test, rng_seed=seed + 10_000, size=size,
                                                           n_frames=n_frames))
    model = FrameModel(channels, hw=(size, size), rng=np.random.default_rng(seed))
    cfg = _config(scheme, lr=lr, loss="bce", batch_size=batch, epochs=epochs,
                  seed=seed, grad_clip=grad_clip)
    report = fit(model, cfg, train_seqs, val_data=test_seqs, log=log)
    return model, report, cfg, (train_seqs, test_seqs)


def report_rows(report: TrainReport):
    return [(r.epoch, r.train_loss, r.train_metric, r.val_loss, r.val_metric) for r in report.epochs]
