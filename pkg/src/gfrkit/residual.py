"""Filter residuals, JPEG-phase splitting, and the coefficient-domain view of a residual.

A residual sample whose 8x8 window starts at image position (8*br + a, 8*bc + b)
is a linear function of the 256 dequantized coefficients of the four blocks the
window touches: A = (br, bc), B = (br, bc+1), C = (br+1, bc), D = (br+1, bc+1).
The weights are read off the impact kernels R = G (x) B^{kl}; stacking them
gives the projection vector of phase (a, b).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import correlate2d

from .errors import ImageTooSmall, MismatchedProvenance
from .gabor import (N_ORIENT, DEFAULT_SCALES, GaborParams, Kernel8, PHASES, dct_basis,
                    make_gabor)
from .jpeg import QuantTable, SpatialImage


@dataclass(frozen=True)
class Residual:
    data: np.ndarray = field(repr=False)
    origin_phase: tuple = (0, 0)


@dataclass(frozen=True)
class PhaseSubsets:
    subsets: list  # subsets[a][b] -> 1-D array

    def count(self) -> int:
        return sum(s.size for row in self.subsets for s in row)


@dataclass(frozen=True)
class ImpactKernel:
    r: np.ndarray = field(repr=False)  # r[s + 7, t + 7] for s, t in -7..7
    provenance: tuple = ()


def _plane(img):
    return img.data if isinstance(img, SpatialImage) else np.asarray(img, dtype=np.float64)


def _weights(k):
    return k.weights if isinstance(k, Kernel8) else np.asarray(k, dtype=np.float64)


def correlate_valid(img, k) -> Residual:
    """out[r, c] = sum_{x,y} img[r+x, c+y] * k[x, y] over all full windows."""
    plane = _plane(img)
    if plane.shape[0] < 8 or plane.shape[1] < 8:
        raise ImageTooSmall(f"image {plane.shape} is smaller than 8x8")
    return Residual(correlate2d(plane, _weights(k), mode="valid"))


def im2col(plane: np.ndarray) -> np.ndarray:
    """(rows-7)*(cols-7) x 64 matrix of flattened 8x8 windows."""
    if plane.shape[0] < 8 or plane.shape[1] < 8:
        raise ImageTooSmall(f"image {plane.shape} is smaller than 8x8")
    win = sliding_window_view(np.ascontiguousarray(plane, dtype=np.float64), (8, 8))
    return win.reshape(-1, 64)


def correlate_many(cols: np.ndarray, shape: tuple, weights: np.ndarray) -> np.ndarray:
    """Residuals of a stack of kernels (K, 8, 8) from a precomputed im2col matrix."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 64)
    out = w @ cols.T
    return out.reshape(len(w), shape[0] - 7, shape[1] - 7)


def phase_split(r: Residual) -> PhaseSubsets:
    """Subset (a, b) holds samples whose window origin is (a, b) modulo 8."""
    d = np.asarray(r.data)
    orow, ocol = r.origin_phase
    subsets = [[None] * 8 for _ in range(8)]
    for a in range(8):
        for b in range(8):
            subsets[a][b] = d[(a - orow) % 8::8, (b - ocol) % 8::8].ravel()
    return PhaseSubsets(subsets)


def impact_kernel(g, b) -> ImpactKernel:
    """Full cross-correlation R[s, t] = sum_{x,y} g[x, y] * b[x+s, y+t], s, t in -7..7."""
    gw, bw = _weights(g), _weights(b)
    r = correlate2d(bw, gw, mode="full")
    prov = tuple(p for p in (getattr(g, "params", None), getattr(b, "params", None)) if p is not None)
    return ImpactKernel(r, prov)


def impact_stack(g) -> np.ndarray:
    """Impact kernels of g against all 64 DCT modes, shape (64, 15, 15), mode-major (k, l)."""
    gw = _weights(g)
    return np.stack([correlate2d(dct_basis(k, l).weights, gw, mode="full")
                     for k in range(8) for l in range(8)])


def _slots(stack: np.ndarray) -> np.ndarray:
    """R values at the four block offsets for every phase: shape (8, 8, 4, 64)."""
    pad = np.zeros((64, 31, 31))
    pad[:, 8:23, 8:23] = stack  # pad index = offset + 15
    a = np.arange(8)
    rows = np.stack([a, a, a - 8, a - 8]) + 15  # slots A, B, C, D
    cols = np.stack([a, a - 8, a, a - 8]) + 15
    out = np.empty((8, 8, 4, 64))
    for s in range(4):
        out[:, :, s, :] = pad[:, rows[s][:, None], cols[s][None, :]].transpose(1, 2, 0)
    return out


def projection_matrix(g, qtable: QuantTable) -> np.ndarray:
    """All projection vectors of kernel g, shape (8, 8, 4, 64): [a, b, block, mode]."""
    return _slots(impact_stack(g)) * qtable.natural.reshape(64)


def projection_vector(g, a: int, b: int, qtable: QuantTable) -> np.ndarray:
    """256 weights: blocks A, B, C, D in turn, each over the 64 modes in natural order."""
    if not (0 <= a < 8 and 0 <= b < 8):
        raise ValueError("phase indices must be in 0..7")
    return projection_matrix(g, qtable)[a, b].reshape(256)


def covering_coefficients(coeffs: np.ndarray, r: int, c: int) -> np.ndarray:
    """Quantized coefficients of blocks A, B, C, D around window origin (r, c); 256-vector.

    The projection vector already carries the quantization steps, so its inner
    product with this vector is the residual sample. Blocks beyond the grid
    contribute zeros.
    """
    bh, bw = coeffs.shape[:2]
    br, bc = r // 8, c // 8
    out = np.zeros((4, 64))
    for s, (dr, dc) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        if br + dr < bh and bc + dc < bw:
            out[s] = coeffs[br + dr, bc + dc].reshape(64)
    return out.reshape(256)


# -- symmetry oracle -------------------------------------------------------

def slot_profile(p: np.ndarray) -> np.ndarray:
    """Per-mode sorted magnitudes over the four block slots: invariant to block re-indexing."""
    return np.sort(np.abs(p.reshape(4, 64)), axis=0)


def _profiles(pm: np.ndarray) -> np.ndarray:
    return np.sort(np.abs(pm), axis=2)  # (8, 8, 4, 64)


_MIRROR = (-np.arange(8)) % 8


def _transpose_modes(prof: np.ndarray) -> np.ndarray:
    """Swap phase (a, b) -> (b, a) and mode (k, l) -> (l, k)."""
    t = prof.transpose(1, 0, 2, 3).reshape(8, 8, 4, 8, 8)
    return t.transpose(0, 1, 2, 4, 3).reshape(8, 8, 4, 64)


@dataclass
class SymmetryReport:
    tolerance: float
    max_deviation: dict
    transpose_exact: bool
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps({"tolerance": self.tolerance, "max_deviation": self.max_deviation,
                           "transpose_exact": self.transpose_exact,
                           "violations": self.violations, "ok": self.ok}, indent=2)

    def to_text(self) -> str:
        lines = [f"tolerance {self.tolerance:g}"]
        for name, dev in self.max_deviation.items():
            flag = "FLAG" if any(v["relation"] == name for v in self.violations) else "ok"
            note = "" if name != "transpose" or self.transpose_exact else " (approximate: asymmetric qtable)"
            lines.append(f"{name:10s} max deviation {dev:.3e}  {flag}{note}")
        return "\n".join(lines)


def verify_symmetries(scales=DEFAULT_SCALES, qtable: QuantTable = None, tolerance=1e-9,
                      bank=None) -> SymmetryReport:
    """Exhaustively check the projection-vector symmetries used for merging.

    ``bank`` optionally replaces the generated kernels; each entry must carry
    GaborParams so it can be matched to its mirror and transpose partners.
    """
    if qtable is None:
        qtable = QuantTable.from_natural(np.ones(64))
    kernels = {}
    if bank is None:
        for phi in PHASES:
            for s in scales:
                for k in range(N_ORIENT):
                    kernels[(phi, s, k)] = make_gabor(GaborParams(phi, s, k * math.pi / N_ORIENT))
    else:
        for kern in bank:
            p = kern.params
            if not isinstance(p, GaborParams) or p.orientation_index is None:
                raise MismatchedProvenance("bank kernels must carry grid-aligned GaborParams")
            kernels[(p.phi, p.sigma, p.orientation_index)] = kern
    prof = {key: _profiles(projection_matrix(k, qtable)) for key, k in kernels.items()}

    dev = {"dctr": 0.0, "centro": 0.0, "mirror": 0.0, "transpose": 0.0}
    worst = {name: None for name in dev}

    def note(name, value, key):
        if value > dev[name]:
            dev[name] = float(value)
            worst[name] = key

    for key, p in prof.items():
        phi, s, k = key
        note("centro", np.max(np.abs(p - p[_MIRROR][:, _MIRROR])), key)
        if k % 16 == 0:
            d = max(np.max(np.abs(p - p[_MIRROR])), np.max(np.abs(p - p[:, _MIRROR])))
            note("dctr", d, key)
        partner = (phi, s, (N_ORIENT - k) % N_ORIENT)
        if partner in prof:
            m = prof[partner]
            d = max(np.max(np.abs(p - m[:, _MIRROR])), np.max(np.abs(p - m[_MIRROR])))
            note("mirror", d, key)
        partner = (phi, s, (N_ORIENT // 2 - k) % N_ORIENT)
        if partner in prof:
            note("transpose", np.max(np.abs(p - _transpose_modes(prof[partner]))), key)

    exact = qtable.is_symmetric()
    violations = []
    for name, value in dev.items():
        if name == "transpose" and not exact:
            continue
        if value > tolerance:
            phi, s, k = worst[name]
            violations.append({"relation": name, "deviation": value,
                               "kernel": {"phi": phi, "sigma": s, "orientation": k}})
    return SymmetryReport(tolerance, dev, exact, violations)
