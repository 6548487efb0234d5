"""Random +-1 changes of nonzero AC coefficients at a given payload rate.

A stand-in for real JPEG embedders when building a toy cover/stego corpus.
It has no cost model and no coding; it is not a secure embedding scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jpeg import QuantizedJpeg

_LIMIT = 2 ** 15 - 1


@dataclass(frozen=True)
class EmbedSpec:
    rate_bpnzac: float
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rate_bpnzac <= 1:
            raise ValueError(f"rate must lie in [0, 1], got {self.rate_bpnzac}")


def nonzero_ac_mask(coeffs: np.ndarray) -> np.ndarray:
    mask = coeffs != 0
    mask[..., 0, 0] = False
    return mask


def n_changes(n_nzac: int, rate: float) -> int:
    return int(math.floor(rate * n_nzac + 0.5))


def embed_simulated(j: QuantizedJpeg, spec: EmbedSpec) -> QuantizedJpeg:
    """Add +-1 to round(rate * n) nonzero AC coefficients chosen uniformly; DC is untouched."""
    coeffs = j.coeffs.copy()
    flat = coeffs.reshape(-1)
    where = np.flatnonzero(nonzero_ac_mask(j.coeffs).reshape(-1))
    k = n_changes(where.size, spec.rate_bpnzac)
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(where, size=k, replace=False) if k else where[:0]
    delta = rng.integers(0, 2, size=k) * 2 - 1
    # keep the result inside the entropy-coded range
    delta[np.abs(flat[chosen] + delta) > _LIMIT] *= -1
    flat[chosen] += delta
    return j.with_coeffs(coeffs)
