"""Datasets and encodings for the three experiments.

* Summation: "a+b" character sequences over a 12-symbol vocabulary
  (digits, '+', space), left-padded to fixed width.
* Sentiment: pre-tokenized id sequences with binary labels, read and
  written as tab-separated lines.
* Moving digits: synthetic 15-frame sequences of two bouncing glyphs
  composited by per-pixel max, plus an IDX reader for real digit crops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, ParseError, ShapeError
from .tensor import Tensor

# ---------------------------------------------------------------------------
# summation task

VOCAB = "0123456789+ "
PLUS_ID = 10
SPACE_ID = 11
_CHAR_TO_ID = {ch: i for i, ch in enumerate(VOCAB)}


def encode_text(text: str) -> list[int]:
    """Map an expression string onto vocabulary ids."""
    try:
        return [_CHAR_TO_ID[ch] for ch in text]
    except KeyError as exc:
        raise DataError(f"character {exc.args[0]!r} not in the summation vocabulary") from exc


def decode_ids(ids) -> str:
    out = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(VOCAB):
            raise DataError(f"id {i} outside the 12-symbol vocabulary")
        out.append(VOCAB[i])
    return "".join(out)


def one_hot(ids, n: int = len(VOCAB)) -> np.ndarray:
    ids = np.asarray(ids)
    out = np.zeros(ids.shape + (n,), dtype=np.float32)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def sum_input_width(max_digits: int) -> int:
    return 2 * max_digits + 1


def sum_target_width(max_digits: int) -> int:
    return max_digits + 1


@dataclass(frozen=True)
class SumSample:
    """One addition problem, already padded and encoded."""

    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]

    def __post_init__(self):
        expr = decode_ids(self.input_ids).strip()
        a, _, b = expr.partition("+")
        if not (a.isdigit() and b.isdigit()):
            raise DataError(f"input does not decode to a valid sum: {expr!r}")
        if int(a) + int(b) != int(decode_ids(self.target_ids).strip()):
            raise DataError(f"target of {expr!r} is not the sum")


def gen_sum_dataset(n: int, max_digits: int = 2, rng_seed: int = 0) -> list[SumSample]:
    """Uniformly random addition problems with operands of <= max_digits digits."""
    if max_digits < 1:
        raise DomainError(f"max_digits must be >= 1, got {max_digits}")
    rng = np.random.default_rng(rng_seed)
    in_w, out_w = sum_input_width(max_digits), sum_target_width(max_digits)
    hi = 10 ** max_digits
    samples = []
    for _ in range(n):
        a, b = int(rng.integers(0, hi)), int(rng.integers(0, hi))
        expr = f"{a}+{b}".rjust(in_w)
        answer = str(a + b).rjust(out_w)
        samples.append(SumSample(tuple(encode_text(expr)), tuple(encode_text(answer))))
    return samples


def encode_sum_batch(samples) -> tuple[np.ndarray, np.ndarray]:
    """One-hot arrays (n, width, 12) for inputs and targets."""
    x = one_hot(np.array([s.input_ids for s in samples]))
    y = one_hot(np.array([s.target_ids for s in samples]))
    return x, y


def sequence_accuracy(pred_ids, target_ids) -> float:
    """Fraction of samples whose full decoded output string matches."""
    pred_ids, target_ids = list(pred_ids), list(target_ids)
    if len(pred_ids) != len(target_ids):
        raise ShapeError(f"sequence_accuracy: {len(pred_ids)} predictions vs {len(target_ids)} targets")
    if not pred_ids:
        raise DomainError("sequence_accuracy: empty input")
    hits = sum(decode_ids(p).strip() == decode_ids(t).strip() for p, t in zip(pred_ids, target_ids))
    return hits / len(pred_ids)


# ---------------------------------------------------------------------------
# sentiment task

PAD_ID = 0
OOV_ID = 2


@dataclass(frozen=True)
class SentimentSample:
    token_ids: tuple[int, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label}")


def load_sentiment(path) -> list[SentimentSample]:
    """Read tab-separated lines: ``<label>\\t<id id id ...>``."""
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            label_str, sep, rest = line.partition("\t")
            if not sep:
                raise ParseError(f"{path}:{lineno}: expected '<label>\\t<ids>'")
            if label_str not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label_str!r}")
            try:
                ids = tuple(int(tok) for tok in rest.split())
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer token id ({exc})") from exc
            samples.append(SentimentSample(ids, int(label_str)))
    return samples


def save_sentiment(path, samples):
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(f"{s.label}\t{' '.join(str(i) for i in s.token_ids)}\n")


def preprocess(samples, max_features: int, maxlen: int) -> list[SentimentSample]:
    """Clamp vocabulary and normalize lengths.

    Ids >= max_features become the out-of-vocabulary id 2; sequences keep
    their last ``maxlen`` tokens and are pre-padded with 0. Idempotent.
    """
    out = []
    for s in samples:
        ids = [i if i < max_features else OOV_ID for i in s.token_ids]
        ids = ids[-maxlen:]
        ids = [PAD_ID] * (maxlen - len(ids)) + ids
        out.append(SentimentSample(tuple(ids), s.label))
    return out


def gen_sentiment_dataset(n: int, max_features: int = 20000, maxlen: int = 80,
                          rng_seed: int = 0, signal: float = 0.25) -> list[SentimentSample]:
    """Synthetic sentiment corpus with a planted lexical signal.

    Each review draws most tokens from a long-tailed background
    distribution; a ``signal`` fraction comes from a class-specific lexicon
    (ids 3-102 positive, 103-202 negative) with a little cross-talk, so the
    label is learnable from token statistics alone. Stands in for a real
    review corpus when none is on disk; real data in the same line format
    drops in via :func:`load_sentiment`.
    """
    if max_features < 12:
        raise DomainError(f"gen_sentiment_dataset: max_features must be >= 12, got {max_features}")
    rng = np.random.default_rng(rng_seed)
    lex_size = min(100, (max_features - 3) // 3)
    pos_lex = np.arange(3, 3 + lex_size)
    neg_lex = np.arange(3 + lex_size, 3 + 2 * lex_size)
    background = np.arange(3 + 2 * lex_size, max_features)
    # Zipf-ish weights so low ids dominate like real tokenizer output
    weights = 1.0 / np.arange(1, background.size + 1)
    weights /= weights.sum()
    samples = []
    for _ in range(n):
        label = int(rng.integers(0, 2))
        own, other = (pos_lex, neg_lex) if label == 1 else (neg_lex, pos_lex)
        length = int(rng.integers(maxlen // 2, maxlen + 1))
        rolls = rng.random(length)
        ids = np.empty(length, dtype=np.int64)
        own_mask = rolls < signal
        cross_mask = (rolls >= signal) & (rolls < signal * 1.2)
        bg_mask = ~(own_mask | cross_mask)
        ids[own_mask] = rng.choice(own, size=int(own_mask.sum()))
        ids[cross_mask] = rng.choice(other, size=int(cross_mask.sum()))
        ids[bg_mask] = rng.choice(background, size=int(bg_mask.sum()), p=weights)
        samples.append(SentimentSample(tuple(int(i) for i in ids), label))
    return preprocess(samples, max_features, maxlen)


def encode_sentiment_batch(samples) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([s.token_ids for s in samples], dtype=np.int64)
    labels = np.array([[s.label] for s in samples], dtype=np.float32)
    return ids, labels


# ---------------------------------------------------------------------------
# moving digit frames

_FONT = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def _glyph_bitmap(digit: str, size: int = 16) -> np.ndarray:
    rows = _FONT[digit]
    small = np.array([[float(c) for c in row] for row in rows], dtype=np.float32)
    scaled = np.kron(small, np.ones((2, 2), dtype=np.float32))  # 14 x 10
    canvas = np.zeros((size, size), dtype=np.float32)
    oy, ox = (size - scaled.shape[0]) // 2, (size - scaled.shape[1]) // 2
    canvas[oy:oy + scaled.shape[0], ox:ox + scaled.shape[1]] = scaled
    return canvas


DIGIT_GLYPHS = [_glyph_bitmap(d) for d in "0123456789"]


@dataclass
class FrameSequence:
    """A (T, H, W) stack of frames with intensities in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ShapeError(f"frame sequence must be (T, H, W), got {self.frames.shape}")
        if self.frames.min() < 0 or self.frames.max() > 1:
            raise DataError("frame intensities must lie in [0, 1]")


def _bounce(pos: int, vel: int, limit: int) -> tuple[int, int]:
    # reflect off [0, limit]; mirrors any overshoot back inside
    if limit <= 0:
        return 0, -vel
    pos += vel
    while pos < 0 or pos > limit:
        if pos < 0:
            pos, vel = -pos, -vel
        else:
            pos, vel = 2 * limit - pos, -vel
    return pos, vel


def render_sequence(glyph_images, positions, velocities, n_frames: int = 15, size: int = 64) -> FrameSequence:
    """Animate glyphs with integer positions/velocities, reflecting at walls."""
    positions = [list(p) for p in positions]
    velocities = [list(v) for v in velocities]
    frames = np.zeros((n_frames, size, size), dtype=np.float32)
    for t in range(n_frames):
        for g, glyph in enumerate(glyph_images):
            gh, gw = glyph.shape
            y, x = positions[g]
            region = frames[t, y:y + gh, x:x + gw]
            np.maximum(region, glyph, out=region)
        if t + 1 < n_frames:
            for g, glyph in enumerate(glyph_images):
                gh, gw = glyph.shape
                y, vy = _bounce(positions[g][0], velocities[g][0], size - gh)
                x, vx = _bounce(positions[g][1], velocities[g][1], size - gw)
                positions[g] = [y, x]
                velocities[g] = [vy, vx]
    return FrameSequence(frames)


def gen_moving_frames(n_sequences: int, rng_seed: int = 0, glyphs=None,
                      n_frames: int = 15, size: int = 64) -> list[FrameSequence]:
    """Sequences of two bouncing glyphs composited by per-pixel max."""
    rng = np.random.default_rng(rng_seed)
    pool = DIGIT_GLYPHS if glyphs is None else [np.asarray(g, dtype=np.float32) for g in glyphs]
    speeds = np.array([-3, -2, -1, 1, 2, 3])
    sequences = []
    for _ in range(n_sequences):
        chosen = [pool[int(i)] for i in rng.integers(0, len(pool), size=2)]
        positions, velocities = [], []
        for glyph in chosen:
            gh, gw = glyph.shape
            positions.append((int(rng.integers(0, size - gh + 1)), int(rng.integers(0, size - gw + 1))))
            velocities.append((int(rng.choice(speeds)), int(rng.choice(speeds))))
        sequences.append(render_sequence(chosen, positions, velocities, n_frames, size))
    return sequences


def frames_array(sequences) -> np.ndarray:
    return np.stack([s.frames for s in sequences])


def split_train_predict(seq):
    """Split into context (frames 1-7) and prediction targets (frames 8-10)."""
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    t_axis = 0 if frames.ndim == 3 else 1
    if frames.shape[t_axis] < 10:
        raise DomainError(f"need at least 10 frames to split, got {frames.shape[t_axis]}")
    if frames.ndim == 3:
        return frames[:7], frames[7:10]
    return frames[:, :7], frames[:, 7:10]


def per_frame_mse(pred, truth, first_frame: int = 0) -> list[tuple[int, float]]:
    """Mean per-frame squared error over a set, one entry per frame index."""
    from .training import mse_frames

    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"per_frame_mse: {pred.shape} vs {truth.shape}")
    if pred.ndim == 3:
        pred, truth = pred[None], truth[None]
    out = []
    for f in range(pred.shape[1]):
        vals = [mse_frames(pred[s, f], truth[s, f]) for s in range(pred.shape[0])]
        out.append((first_frame + f, float(np.mean(vals))))
    return out


# ---------------------------------------------------------------------------
# IDX container for digit-image archives

_IDX_DTYPES = {0x08: np.dtype(">u1"), 0x0D: np.dtype(">f4")}


def load_idx(path) -> Tensor:
    """Parse an IDX file; u8 payloads are scaled to [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise ParseError(f"{path}: truncated IDX header at byte {len(raw)}")
    if raw[0] != 0 or raw[1] != 0:
        raise ParseError(f"{path}: bad IDX magic at byte 0: {raw[:2].hex()}")
    dtype_byte, rank = raw[2], raw[3]
    if dtype_byte not in _IDX_DTYPES:
        raise ParseError(f"{path}: unsupported IDX dtype byte 0x{dtype_byte:02x} at byte 2")
    header_len = 4 + 4 * rank
    if len(raw) < header_len:
        raise ParseError(f"{path}: truncated dimension table at byte {len(raw)}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(rank)]
    dtype = _IDX_DTYPES[dtype_byte]
    count = int(np.prod(dims)) if dims else 1
    if len(raw) != header_len + count * dtype.itemsize:
        raise ParseError(f"{path}: payload size mismatch at byte {header_len} "
                         f"(expected {count * dtype.itemsize} bytes, found {len(raw) - header_len})")
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=header_len).reshape(dims)
    if dtype_byte == 0x08:
        return Tensor(arr.astype(np.float32) / 255.0)
    return Tensor(arr.astype(np.float32))


def save_idx(path, array01):
    """Write [0, 1] intensities as a u8 IDX file (inverse of load_idx)."""
    arr = np.asarray(array01)
    payload = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(">u1")
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, arr.ndim]))
        for d in arr.shape:
            f.write(int(d).to_bytes(4, "big"))
        f.write(payload.tobytes())


def write_pgm(path, frame01):
    """Export one frame as binary PGM (P5, maxval 255)."""
    frame = np.asarray(frame01)
    if frame.ndim != 2:
        raise ShapeError(f"write_pgm: frame must be 2-D, got {frame.shape}")
    data = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())
