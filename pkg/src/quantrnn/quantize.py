"""Weight quantizers with statistics-derived thresholds.

Four schemes map full-precision weights onto small discrete level sets:

* binary connect      -> {-1, 1}, sign thresholding at zero
* ternary connect     -> {-1, 0, 1}, cutpoints at +/-(mu + sigma) for a
  normal-looking level distribution or +/-(mu + sigma/2) for a uniform one
* quaternary connect  -> {-1, -0.5, 0.5, 1}, cutpoints at -(mu + sigma/k),
  0, +(mu + sigma/k) with k = 4 (normal) or k = 6 (uniform)
* full precision      -> identity

``mu`` and ``sigma`` are the mean and population standard deviation of the
tensor being quantized, recomputed on every call so thresholds always track
the current shadow weights. Boundary values belong to the lower interval
(the comparisons are <=), except binary connect where w = 0 maps to +1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .tensor import Tensor, mean_std


class QuantKind(enum.Enum):
    FULL_PRECISION = "fp"
    BINARY = "bc"
    TERNARY = "tc"
    QUATERNARY = "qc"


class LevelShape(enum.Enum):
    """Target distribution of the quantized levels."""

    NORMAL_LIKE = "normal"
    UNIFORM_LIKE = "uniform"


@dataclass(frozen=True)
class QuantScheme:
    """A quantizer selection: kind plus level-distribution shape.

    ``shape`` is ignored for full precision and binary connect.
    """

    kind: QuantKind = QuantKind.FULL_PRECISION
    shape: LevelShape = LevelShape.NORMAL_LIKE

    @staticmethod
    def parse(kind: str, shape: str = "normal") -> "QuantScheme":
        return QuantScheme(QuantKind(kind), LevelShape(shape))

    @property
    def name(self) -> str:
        if self.kind in (QuantKind.FULL_PRECISION, QuantKind.BINARY):
            return self.kind.value
        return f"{self.kind.value}-{self.shape.value}"

    def levels(self) -> tuple[float, ...] | None:
        """Codomain of the scheme, or None for full precision."""
        return {
            QuantKind.FULL_PRECISION: None,
            QuantKind.BINARY: (-1.0, 1.0),
            QuantKind.TERNARY: (-1.0, 0.0, 1.0),
            QuantKind.QUATERNARY: (-1.0, -0.5, 0.5, 1.0),
        }[self.kind]


FULL_PRECISION = QuantScheme(QuantKind.FULL_PRECISION)
BINARY_CONNECT = QuantScheme(QuantKind.BINARY)


@dataclass(frozen=True)
class ThresholdSet:
    """An ordered partition of the real line into output levels.

    ``cutpoints`` are strictly increasing; value w falls into bucket i where
    i is the number of cutpoints strictly below w (boundaries inclusive on
    the lower side), and maps to ``levels[i]``.
    """

    mu: float
    sigma: float
    cutpoints: tuple[float, ...]
    levels: tuple[float, ...]
    _cuts: np.ndarray = field(init=False, repr=False, compare=False)
    _levs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.levels) != len(self.cutpoints) + 1:
            raise DomainError(f"threshold set needs {len(self.cutpoints) + 1} levels, got {len(self.levels)}")
        if any(a >= b for a, b in zip(self.cutpoints, self.cutpoints[1:])):
            raise DomainError(f"cutpoints must be strictly increasing, got {self.cutpoints}")
        object.__setattr__(self, "_cuts", np.asarray(self.cutpoints, dtype=np.float64))
        object.__setattr__(self, "_levs", np.asarray(self.levels, dtype=np.float64))

    def apply(self, w: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cuts, w, side="left")
        return self._levs[idx].astype(w.dtype, copy=False)


def ternary_thresholds(mu: float, sigma: float, shape: LevelShape) -> ThresholdSet:
    """Cutpoints for the three-level quantizer.

    Normal-like keeps the centre bucket wide (+/-(mu + sigma)); uniform-like
    narrows it to +/-(mu + sigma/2). When the upper cutpoint is not positive
    the partition degenerates and everything quantizes to 0.
    """
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    t = mu + sigma if shape is LevelShape.NORMAL_LIKE else mu + sigma / 2.0
    if t <= 0:
        return ThresholdSet(mu, sigma, (), (0.0,))
    return ThresholdSet(mu, sigma, (-t, t), (-1.0, 0.0, 1.0))


def quaternary_thresholds(mu: float, sigma: float, shape: LevelShape) -> ThresholdSet:
    """Cutpoints for the four-level quantizer.

    Levels are (-1, -0.5, 0.5, 1) with the middle boundary at zero; w = 0
    maps to -0.5. Degenerate statistics collapse to a sign split between
    -0.5 and 0.5.
    """
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    t = mu + sigma / 4.0 if shape is LevelShape.NORMAL_LIKE else mu + sigma / 6.0
    if t <= 0:
        return ThresholdSet(mu, sigma, (0.0,), (-0.5, 0.5))
    return ThresholdSet(mu, sigma, (-t, 0.0, t), (-1.0, -0.5, 0.5, 1.0))


def _as_array(w):
    return w.data if isinstance(w, Tensor) else np.asarray(w)


def _wrap_like(w, out):
    return Tensor(out) if isinstance(w, Tensor) else out


def quantize_bc(w):
    """Binary connect: w >= 0 -> 1, otherwise -1 (scale invariant)."""
    arr = _as_array(w)
    if arr.size == 0:
        raise DomainError("quantize_bc: empty tensor")
    out = np.where(arr >= 0, 1.0, -1.0).astype(arr.dtype, copy=False)
    return _wrap_like(w, out)


def quantize_tc(w, shape: LevelShape = LevelShape.NORMAL_LIKE):
    """Ternary connect with thresholds from the tensor's own mean/std."""
    arr = _as_array(w)
    mu, sigma = mean_std(arr)
    out = ternary_thresholds(mu, sigma, shape).apply(arr)
    return _wrap_like(w, out)


def quantize_qc(w, shape: LevelShape = LevelShape.NORMAL_LIKE):
    """Quaternary connect with thresholds from the tensor's own mean/std."""
    arr = _as_array(w)
    mu, sigma = mean_std(arr)
    out = quaternary_thresholds(mu, sigma, shape).apply(arr)
    return _wrap_like(w, out)


def quantize(w, scheme: QuantScheme):
    """Dispatch to the scheme's quantizer; full precision returns w as is."""
    if scheme.kind is QuantKind.FULL_PRECISION:
        return w
    if scheme.kind is QuantKind.BINARY:
        return quantize_bc(w)
    if scheme.kind is QuantKind.TERNARY:
        return quantize_tc(w, scheme.shape)
    return quantize_qc(w, scheme.shape)


def quantize_with_stats(w, scheme: QuantScheme, mu: float, sigma: float):
    """Quantize with externally supplied statistics.

    Used when thresholds pool several tensors (e.g. all gate kernels of a
    cell, mirroring frameworks that store them fused). Binary connect and
    full precision ignore the statistics.
    """
    if scheme.kind is QuantKind.FULL_PRECISION:
        return w
    if scheme.kind is QuantKind.BINARY:
        return quantize_bc(w)
    arr = _as_array(w)
    maker = ternary_thresholds if scheme.kind is QuantKind.TERNARY else quaternary_thresholds
    return _wrap_like(w, maker(mu, sigma, scheme.shape).apply(arr))


def weight_histogram(w, bins: int):
    """Equal-width histogram over [min(w), max(w)].

    Returns a list of (bin_center, count) pairs whose counts sum to the
    element count. A constant tensor populates a single bin.
    """
    if bins < 2:
        raise DomainError(f"weight_histogram: need at least 2 bins, got {bins}")
    arr = _as_array(w).ravel()
    counts, edges = np.histogram(arr, bins=bins, range=(float(arr.min()), float(arr.max())))
    centers = (edges[:-1] + edges[1:]) / 2.0
    return [(float(c), int(n)) for c, n in zip(centers, counts)]


def histogram_csv(rows) -> str:
    """Serialize histogram rows to CSV with a ``bin_center,count`` header."""
    lines = ["bin_center,count"]
    lines += [f"{center!r},{count}" for center, count in rows]
    return "\n".join(lines) + "\n"
