"""Conventional and Gaussian-integral weighted histograms of residual magnitudes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .errors import EmptySubset, InvalidPCenter, NonpositiveSigma

DEFAULT_T = 4
DEFAULT_PCENTER = 0.75

Q_SCHEDULES = {
    75: (2.0, 4.0, 6.0, 8.0, 10.0, 12.0),
    95: (0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
}


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray
    normalization: float  # number of samples the bins were divided by (1.0 if raw)

    @property
    def T(self) -> int:
        return len(self.bins) - 1


def quantize_trunc(u: float, q: float, T: int) -> int:
    """trunc_T(round(|u|/q)), rounding halves away from zero."""
    if not q > 0:
        raise ValueError("q must be positive")
    return min(int(math.floor(abs(u) / q + 0.5)), T)


def _subset(subset):
    u = np.asarray(subset, dtype=np.float64).ravel()
    if u.size == 0:
        raise EmptySubset("histogram of an empty subset")
    return u


def hist_conventional(subset, q: float, T: int = DEFAULT_T) -> Histogram:
    u = _subset(subset)
    idx = np.minimum(np.floor(np.abs(u) / q + 0.5), T).astype(np.int64)
    counts = np.bincount(idx, minlength=T + 1).astype(np.float64)
    return Histogram(counts / u.size, float(u.size))


def sigma_from_pcenter(q: float, p_center: float = DEFAULT_PCENTER, quantile_decimals=None) -> float:
    """Width of a centered Gaussian whose mass over (-q/2, q/2) is p_center.

    With ``quantile_decimals`` the normal quantile is rounded the way a printed
    two-decimal z table reads (three decimals, then half-up to the requested
    precision), which reproduces published tables built from such a lookup.
    """
    if not 0 < p_center < 1:
        raise InvalidPCenter(f"p_center must lie in (0, 1), got {p_center}")
    z = float(ndtri((1 + p_center) / 2))
    if quantile_decimals is not None:
        d = Decimal(repr(z)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)
        z = float(d.quantize(Decimal(1).scaleb(-quantile_decimals), rounding=ROUND_HALF_UP))
    return (q / 2) / z


def interval_masses(u: float, q: float, T: int, sigma_h: float) -> np.ndarray:
    """Gaussian(u, sigma_h) mass of each signed interval I_{-T}..I_T (length 2T+1)."""
    edges = (np.arange(-T + 1, T + 1) - 0.5) * q
    cdf = ndtr((edges - u) / sigma_h)
    return np.diff(np.concatenate(([0.0], cdf, [1.0])))


def _weighted_reference(u: np.ndarray, q: float, T: int, sigma_h: float) -> np.ndarray:
    edges = (np.arange(-T + 1, T + 1) - 0.5) * q
    cdf = ndtr((edges[None, :] - u[:, None]) / sigma_h)
    ones = np.ones((u.size, 1))
    p = np.diff(np.concatenate([np.zeros((u.size, 1)), cdf, ones], axis=1), axis=1)
    p = p.sum(axis=0)
    bins = np.empty(T + 1)
    bins[0] = p[T]
    bins[1:] = p[T + 1:] + p[T - 1::-1]
    return bins


def hist_weighted(subset, q: float, T: int = DEFAULT_T, sigma_h: float | None = None,
                  normalize: bool = True, method: str = "reference") -> Histogram:
    """Each sample spreads a unit Gaussian mass over the bins; signs are folded.

    ``method="table"`` uses the tabulated fast path shared with feature extraction.
    """
    u = _subset(subset)
    if sigma_h is None:
        sigma_h = sigma_from_pcenter(q)
    if not sigma_h > 0:
        raise NonpositiveSigma(f"sigma_h must be positive, got {sigma_h}")
    if method == "table":
        out = np.zeros((1, 8, 8, T + 1))
        weighted_phase_accumulate(u.reshape(1, 1, -1), q, T, sigma_h, out)
        bins = out.sum(axis=(0, 1, 2))
    elif method == "reference":
        bins = _weighted_reference(u, q, T, sigma_h)
    else:
        raise ValueError(f"unknown method {method!r}")
    norm = float(u.size) if normalize else 1.0
    return Histogram(bins / norm, norm)


# -- phase-split accumulation used by feature extraction -------------------

def weighted_phase_accumulate(res, q, T, sigma_h, out, origin=(0, 0)):
    """Add weighted bin masses of residuals (K, R, C) into out (K, 8, 8, T+1) by phase."""
    res = np.ascontiguousarray(res, dtype=np.float64)
    delta = round(q / sigma_h, 12)
    table = _kernels.bin_mass_table(T, delta)
    if table is None:
        _weighted_phase_reference(res, q, T, sigma_h, out, origin)
        return out
    tab, smax = table
    _kernels.weighted_phase_hist(res, 1.0 / sigma_h, tab, smax, T, origin[0], origin[1], out)
    return out


def _weighted_phase_reference(res, q, T, sigma_h, out, origin):
    K, R, C = res.shape
    for k in range(K):
        for a in range(8):
            for b in range(8):
                sub = res[k, (a - origin[0]) % 8::8, (b - origin[1]) % 8::8].ravel()
                if sub.size:
                    out[k, a, b] += _weighted_reference(sub, q, T, sigma_h)


def conventional_phase_accumulate(res, q, T, out, origin=(0, 0)):
    res = np.ascontiguousarray(res, dtype=np.float64)
    _kernels.conventional_phase_hist(res, float(q), T, origin[0], origin[1], out)
    return out


def phase_counts(rows: int, cols: int, origin=(0, 0)) -> np.ndarray:
    """Number of residual samples in each phase subset, shape (8, 8)."""
    r = np.bincount((np.arange(rows) + origin[0]) % 8, minlength=8)
    c = np.bincount((np.arange(cols) + origin[1]) % 8, minlength=8)
    return np.outer(r, c).astype(np.float64)


def phase_histograms(res, q, T=DEFAULT_T, sigma_h=None, weighted=True, origin=(0, 0)):
    """Normalized per-phase histograms (K, 8, 8, T+1) of residuals (K, R, C)."""
    res = np.asarray(res, dtype=np.float64)
    if res.ndim == 2:
        res = res[None]
    out = np.zeros((res.shape[0], 8, 8, T + 1))
    if weighted:
        if sigma_h is None:
            sigma_h = sigma_from_pcenter(q)
        if not sigma_h > 0:
            raise NonpositiveSigma(f"sigma_h must be positive, got {sigma_h}")
        weighted_phase_accumulate(res, q, T, sigma_h, out, origin)
    else:
        conventional_phase_accumulate(res, q, T, out, origin)
    counts = phase_counts(res.shape[1], res.shape[2], origin)
    if np.any(counts == 0):
        raise EmptySubset("residual too small: some phase subsets are empty")
    return out / counts[None, :, :, None]
