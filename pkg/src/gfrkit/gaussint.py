"""Gaussian-integral histogram layer: forward bin masses, analytic gradient, kernel init."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d
from scipy.special import ndtr

from .errors import IndexOutOfRange, NonpositiveSigma, ShapeMismatch
from .histogram import DEFAULT_PCENTER, sigma_from_pcenter

_SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class LayerConfig:
    """Defaults follow the feature pipeline at scale 1, quality 75: q = 6, P_center = 0.75."""

    q: float = 6.0
    sigma_h: float | None = None
    n_bins: int = 5

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.sigma_h is None:
            object.__setattr__(self, "sigma_h", sigma_from_pcenter(self.q, DEFAULT_PCENTER))
        if not self.sigma_h > 0:
            raise NonpositiveSigma(f"sigma_h must be positive, got {self.sigma_h}")
        if self.n_bins < 2:
            raise ValueError("need at least two bins")

    def intervals(self):
        """[a_i, b_i) on the half line: [0, q/2), [(i-1/2)q, (i+1/2)q), ..., [.., inf)."""
        out = [(0.0, 0.5 * self.q)]
        for i in range(1, self.n_bins):
            hi = math.inf if i == self.n_bins - 1 else (i + 0.5) * self.q
            out.append(((i - 0.5) * self.q, hi))
        return out


def _cdf(x, u, s):
    return ndtr((x - u) / s)


def _pdf(x, u, s):
    if math.isinf(x):
        return np.zeros_like(u)
    return np.exp(-((x - u) ** 2) / (2 * s * s))


def forward(feature_map, cfg: LayerConfig) -> np.ndarray:
    """B(i): total Gaussian(u, sigma_h) mass over I_i and its mirror -I_i."""
    u = np.asarray(feature_map, dtype=np.float64)
    s = cfg.sigma_h
    out = np.empty(cfg.n_bins)
    for i, (a, b) in enumerate(cfg.intervals()):
        if a == 0.0:
            mass = _cdf(b, u, s) - _cdf(-b, u, s)
        else:
            mass = (_cdf(b, u, s) - _cdf(a, u, s)) + (_cdf(-a, u, s) - _cdf(-b, u, s))
        out[i] = mass.sum()
    return out


def bin_jacobian(feature_map, cfg: LayerConfig) -> np.ndarray:
    """dB(i)/du per element, shape (n_bins, *map.shape)."""
    u = np.asarray(feature_map, dtype=np.float64)
    s = cfg.sigma_h
    rows = []
    for a, b in cfg.intervals():
        num = _pdf(b, u, s) - _pdf(a, u, s) + _pdf(-a, u, s) - _pdf(-b, u, s)
        rows.append(num / (-_SQRT_2PI * s))
    return np.stack(rows)


def backward(feature_map, upstream, cfg: LayerConfig) -> np.ndarray:
    """dL/du given dL/dB(i) for every bin."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != (cfg.n_bins,):
        raise ShapeMismatch(f"expected {cfg.n_bins} upstream gradients, got shape {g.shape}")
    return np.tensordot(g, bin_jacobian(feature_map, cfg), axes=1)


def init_identity_stack(K: int, channels: int = 64) -> np.ndarray:
    """3x3xC kernel with a unit impulse at the center of slice K."""
    if not 0 <= K < channels:
        raise IndexOutOfRange(f"slice {K} outside 0..{channels - 1}")
    f = np.zeros((3, 3, channels))
    f[1, 1, K] = 1.0
    return f


def compose(stack: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Single effective kernel of a C-filter bank (C, k, k) followed by a k'xk'xC layer."""
    stack = np.asarray(stack, dtype=np.float64)
    bank = np.asarray(bank, dtype=np.float64)
    if stack.shape[2] != bank.shape[0]:
        raise ShapeMismatch("channel counts differ")
    return sum(convolve2d(bank[c], stack[:, :, c], mode="full") for c in range(bank.shape[0]))
