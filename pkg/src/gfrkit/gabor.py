"""8x8 Gabor filters, the JPEG DCT basis, and their flip/transpose symmetries."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import IndexOutOfRange, InvalidScale
from .jpeg import dct_matrix

GAMMA = 0.5
SIGMA_OVER_LAMBDA = 0.56
N_ORIENT = 32
PHASES = (0.0, math.pi / 2)

DEFAULT_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5, 1.75)

# centered half-integer grid; x runs along columns, y along rows (downward)
_GRID = np.arange(8) - 3.5


@dataclass(frozen=True)
class GaborParams:
    phi: float
    sigma: float
    theta: float
    gamma: float = GAMMA
    lam: float | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidScale(f"scale must be positive, got {self.sigma}")
        if self.lam is None:
            object.__setattr__(self, "lam", self.sigma / SIGMA_OVER_LAMBDA)

    @property
    def orientation_index(self):
        """k with theta = k*pi/32, or None when theta is off the standard grid."""
        k = self.theta * N_ORIENT / math.pi
        r = round(k)
        return r if abs(k - r) < 1e-9 else None


@dataclass(frozen=True)
class Kernel8:
    weights: np.ndarray
    params: object = None  # GaborParams, or ("dct", i, j)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (8, 8):
            raise ValueError("kernel must be 8x8")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel has non-finite entries")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def gabor_raw(p: GaborParams) -> np.ndarray:
    """Sampled Gabor function before the zero-DC adjustment."""
    y, x = np.meshgrid(_GRID, _GRID, indexing="ij")
    c, s = math.cos(p.theta), math.sin(p.theta)
    xr = x * c + y * s
    yr = -x * s + y * c
    env = np.exp(-(xr ** 2 + p.gamma ** 2 * yr ** 2) / (2 * p.sigma ** 2))
    return env * np.cos(2 * math.pi * xr / p.lam + p.phi)


def make_gabor(p: GaborParams) -> Kernel8:
    g = gabor_raw(p)
    return Kernel8(g - g.mean(), p)


def make_bank(scales=DEFAULT_SCALES, n_orient=N_ORIENT, phases=PHASES) -> list:
    """Kernels ordered phase-major, then scale, then orientation."""
    scales = list(scales)
    if not scales:
        raise InvalidScale("scale list is empty")
    return [make_gabor(GaborParams(phi, s, k * math.pi / n_orient))
            for phi in phases for s in scales for k in range(n_orient)]


@lru_cache(maxsize=None)
def _dct_basis_array(i, j):
    c = dct_matrix()
    b = np.outer(c[i], c[j])
    b.setflags(write=False)
    return b


def dct_basis(i: int, j: int) -> Kernel8:
    """B^{ij}[x, y] = (w_i w_j / 4) cos(pi i (2x+1)/16) cos(pi j (2y+1)/16)."""
    if not (0 <= i < 8 and 0 <= j < 8):
        raise IndexOutOfRange(f"DCT mode ({i}, {j}) out of range")
    return Kernel8(_dct_basis_array(i, j), ("dct", i, j))


# -- symmetry predicates -----------------------------------------------------

def _rel(a, b, sign, tol):
    return bool(np.max(np.abs(a - sign * b)) <= tol)


def symmetric_ud(w, tol=1e-10):
    return _rel(w, np.flipud(w), 1, tol)


def antisymmetric_ud(w, tol=1e-10):
    return _rel(w, np.flipud(w), -1, tol)


def symmetric_lr(w, tol=1e-10):
    return _rel(w, np.fliplr(w), 1, tol)


def antisymmetric_lr(w, tol=1e-10):
    return _rel(w, np.fliplr(w), -1, tol)


def centrosymmetric(w, tol=1e-10):
    return _rel(w, np.rot90(w, 2), 1, tol)


def anticentrosymmetric(w, tol=1e-10):
    return _rel(w, np.rot90(w, 2), -1, tol)


def symmetry_class(w, tol=1e-10) -> str:
    """Short label of the strongest flip symmetry of an 8x8 kernel."""
    ud = "s" if symmetric_ud(w, tol) else "a" if antisymmetric_ud(w, tol) else None
    lr = "s" if symmetric_lr(w, tol) else "a" if antisymmetric_lr(w, tol) else None
    if ud and lr:
        return f"ud-{ud}/lr-{lr}"
    if centrosymmetric(w, tol):
        return "centro"
    if anticentrosymmetric(w, tol):
        return "anti-centro"
    return "none"


def bank_to_csv(bank) -> str:
    """One kernel per 8 lines, preceded by a comment line naming its parameters."""
    out = io.StringIO()
    for kern in bank:
        p = kern.params
        if isinstance(p, GaborParams):
            out.write(f"# phi={p.phi:.6f} sigma={p.sigma:g} theta={p.theta:.6f}\n")
        else:
            out.write(f"# {p}\n")
        for row in kern.weights:
            out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return out.getvalue()
