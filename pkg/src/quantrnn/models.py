"""The three experiment networks and their checkpoint plumbing.

* :class:`SumModel` - seq2seq digit adder: encoder cell over one-hot
  characters, decoder cell fed the encoder summary, per-step sigmoid head.
* :class:`SentimentModel` - embedding -> recurrent cell -> single sigmoid.
* :class:`FrameModel` - single ConvLSTM layer, batch norm, 3-D
  reconstruction head; teacher-forced next-frame training and
  autoregressive rollout.
"""

from __future__ import annotations

import numpy as np

from .cells import (
    BIAS,
    EMBEDDING,
    FP_CTX,
    BatchNorm,
    ConvLstmCell,
    Dense,
    Embedding,
    GruCell,
    LstmCell,
    Param,
    PEEPHOLE,
    QuantContext,
    Reconstruct3d,
)
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigError, ShapeError
from .tensor import F32, Tensor, reshape, sigmoid, softmax, stack

_CELLS = {"lstm": LstmCell, "gru": GruCell}


class ModelBase:
    """Shared parameter bookkeeping and checkpoint IO."""

    kind = ""

    def _register(self, parts):
        # parts: list of (prefix, layer); prefixes the param names once
        self._parts = parts
        for prefix, layer in parts:
            for p in layer.params():
                p.name = f"{prefix}.{p.name}"

    def params(self) -> list[Param]:
        return [p for _, layer in self._parts for p in layer.params()]

    def quantizable_params(self) -> list[Param]:
        return [p for p in self.params() if p.quantizable]

    def set_quant_policy(self, biases: bool = False, embeddings: bool = False, peepholes: bool = False):
        """Opt additional parameter roles into quantization (kernels always are)."""
        for p in self.params():
            if p.kind == BIAS:
                p.quantizable = biases
            elif p.kind == EMBEDDING:
                p.quantizable = embeddings
            elif p.kind == PEEPHOLE:
                p.quantizable = peepholes

    def _state_entries(self):
        for p in self.params():
            yield p.name, p.value.data, p.quantizable
        for name, arr in self.extra_state():
            yield name, arr, False

    def extra_state(self):
        return ()

    def spec(self) -> dict:
        raise NotImplementedError

    def save(self, path, meta: dict | None = None):
        full_meta = {"model": self.spec()}
        full_meta.update(meta or {})
        save_tensors(path, self._state_entries(), full_meta)

    def load_state(self, tensors: dict):
        for p in self.params():
            arr = tensors[p.name]
            if tuple(arr.shape) != p.value.data.shape:
                raise ShapeError(f"checkpoint tensor {p.name!r} has shape {arr.shape}, expected {p.value.data.shape}")
            p.value.data[...] = arr.astype(p.value.data.dtype)
        self.restore_extra(tensors)

    def restore_extra(self, tensors: dict):
        pass

    def forward(self, inputs, qctx: QuantContext = FP_CTX, training: bool = False) -> Tensor:
        raise NotImplementedError


class SumModel(ModelBase):
    kind = "sum"

    def __init__(self, cell: str = "lstm", hidden: int = 64, target_len: int = 3,
                 vocab: int = 12, head: str = "softmax", rng: np.random.Generator | None = None,
                 dtype=F32):
        if cell not in _CELLS:
            raise ConfigError(f"unknown cell {cell!r} for the summation model")
        if head not in ("softmax", "sigmoid"):
            raise ConfigError(f"unknown head {head!r} for the summation model")
        rng = rng or np.random.default_rng(0)
        self.cell_name, self.hidden, self.target_len, self.vocab = cell, hidden, target_len, vocab
        self.head_name = head
        self.encoder = _CELLS[cell](vocab, hidden, rng, dtype)
        self.decoder = _CELLS[cell](hidden, hidden, rng, dtype)
        self.head = Dense(hidden, vocab, rng, dtype)
        self._register([("encoder", self.encoder), ("decoder", self.decoder), ("head", self.head)])

    def spec(self):
        return {"kind": self.kind, "cell": self.cell_name, "hidden": self.hidden,
                "target_len": self.target_len, "vocab": self.vocab, "head": self.head_name}

    def forward(self, inputs, qctx: QuantContext = FP_CTX, training: bool = False) -> Tensor:
        """inputs: one-hot (batch, steps, vocab) -> probabilities (batch, target_len, vocab)."""
        x = np.asarray(inputs)
        batch, steps = x.shape[0], x.shape[1]
        squash = softmax if self.head_name == "softmax" else sigmoid
        state = self.encoder.init_state(batch)
        for t in range(steps):
            state = self.encoder.step(Tensor(x[:, t]), state, qctx)
        summary = state.h
        dec_state = self.decoder.init_state(batch)
        outs = []
        for _ in range(self.target_len):
            dec_state = self.decoder.step(summary, dec_state, qctx)
            outs.append(squash(self.head.forward(dec_state.h, qctx)))
        return stack(outs, axis=1)


class SentimentModel(ModelBase):
    kind = "sentiment"

    def __init__(self, cell: str = "lstm", max_features: int = 20000, embed_dim: int = 128,
                 hidden: int = 128, rng: np.random.Generator | None = None, dtype=F32):
        if cell not in _CELLS:
            raise ConfigError(f"unknown cell {cell!r} for the sentiment model")
        rng = rng or np.random.default_rng(0)
        self.cell_name, self.max_features, self.embed_dim, self.hidden = cell, max_features, embed_dim, hidden
        self.embed = Embedding(max_features, embed_dim, rng, dtype)
        self.cell = _CELLS[cell](embed_dim, hidden, rng, dtype)
        self.head = Dense(hidden, 1, rng, dtype)
        self._register([("embed", self.embed), ("cell", self.cell), ("head", self.head)])

    def spec(self):
        return {"kind": self.kind, "cell": self.cell_name, "max_features": self.max_features,
                "embed_dim": self.embed_dim, "hidden": self.hidden}

    def forward(self, inputs, qctx: QuantContext = FP_CTX, training: bool = False) -> Tensor:
        """inputs: token ids (batch, steps) -> probability of the positive class (batch, 1)."""
        ids = np.asarray(inputs)
        state = self.cell.init_state(ids.shape[0])
        for t in range(ids.shape[1]):
            x = self.embed.forward(ids[:, t], qctx)
            state = self.cell.step(x, state, qctx)
        return sigmoid(self.head.forward(state.h, qctx))


class FrameModel(ModelBase):
    kind = "frames"

    def __init__(self, channels: int = 8, hw: tuple[int, int] = (64, 64), kernel: int = 3,
                 rng: np.random.Generator | None = None, dtype=F32):
        rng = rng or np.random.default_rng(0)
        self.channels, self.hw, self.kernel = channels, tuple(hw), kernel
        self.cell = ConvLstmCell(1, channels, hw, rng, kernel, dtype)
        self.norm = BatchNorm(channels, dtype=dtype)
        self.recon = Reconstruct3d(channels, rng, dtype=dtype)
        self._register([("cell", self.cell), ("norm", self.norm), ("recon", self.recon)])

    def spec(self):
        return {"kind": self.kind, "channels": self.channels, "hw": list(self.hw), "kernel": self.kernel}

    def extra_state(self):
        return [("norm.running_mean", self.norm.running_mean), ("norm.running_var", self.norm.running_var)]

    def restore_extra(self, tensors):
        self.norm.running_mean = tensors["norm.running_mean"].astype(self.norm.running_mean.dtype)
        self.norm.running_var = tensors["norm.running_var"].astype(self.norm.running_var.dtype)

    def _hidden_sequence(self, frames: np.ndarray, qctx: QuantContext):
        state = self.cell.init_state(frames.shape[0])
        hs = []
        for t in range(frames.shape[1]):
            state = self.cell.step(Tensor(frames[:, t][:, None]), state, qctx)
            hs.append(state.h)
        return hs, state

    def _reconstruct(self, hs, qctx: QuantContext, training: bool) -> Tensor:
        h_seq = stack(hs, axis=2)  # (batch, channels, time, H, W)
        normed = self.norm.forward(h_seq, qctx, training=training)
        y = self.recon.forward(normed, qctx)  # (batch, 1, time, H, W)
        b, _, t, hgt, wid = y.data.shape
        return reshape(y, (b, t, hgt, wid))

    def forward(self, inputs, qctx: QuantContext = FP_CTX, training: bool = False) -> Tensor:
        """inputs: frames (batch, steps, H, W) -> next-frame predictions of the same shape."""
        frames = np.asarray(inputs)
        hs, _ = self._hidden_sequence(frames, qctx)
        return self._reconstruct(hs, qctx, training)

    def rollout(self, seed_frames, horizon: int, qctx: QuantContext = FP_CTX) -> np.ndarray:
        """Build state on the seed frames, then feed predictions back for ``horizon`` steps."""
        frames = np.asarray(seed_frames)
        single = frames.ndim == 3
        if single:
            frames = frames[None]
        hs, state = self._hidden_sequence(frames, qctx)
        preds = []
        for _ in range(horizon):
            y = self._reconstruct(hs, qctx, training=False)
            nxt = y.data[:, -1]  # (batch, H, W), the frame after the last input
            preds.append(nxt)
            state = self.cell.step(Tensor(nxt[:, None]), state, qctx)
            hs.append(state.h)
        if preds:
            out = np.stack(preds, axis=1)
        else:
            out = np.zeros(frames.shape[:1] + (0,) + frames.shape[2:], dtype=frames.dtype)
        return out[0] if single else out


def build_model(spec: dict, rng: np.random.Generator | None = None) -> ModelBase:
    """Construct a model from a checkpoint's architecture record."""
    kind = spec.get("kind")
    if kind == "sum":
        return SumModel(spec["cell"], spec["hidden"], spec["target_len"], spec["vocab"],
                        spec.get("head", "softmax"), rng)
    if kind == "sentiment":
        return SentimentModel(spec["cell"], spec["max_features"], spec["embed_dim"], spec["hidden"], rng)
    if kind == "frames":
        return FrameModel(spec["channels"], tuple(spec["hw"]), spec["kernel"], rng)
    raise ConfigError(f"unknown model kind {kind!r}")


def load_model(path) -> tuple[ModelBase, dict]:
    """Rebuild a model from a checkpoint file; returns (model, meta)."""
    meta, tensors, _ = load_tensors(path)
    model = build_model(meta["model"])
    model.load_state(tensors)
    return model, meta
