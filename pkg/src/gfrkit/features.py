"""Phase-class merging and assembly of the GFR, GFR-GSM and GFR-GW feature vectors.

Ordering contract, identical for all variants: phase offset phi (0 first), then
scale in configured order, then orientation class by smallest member
orientation, then phase class by its smallest member (a, b), then bin.
Merging always averages normalized histograms.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, FormatError, MismatchedProvenance
from .gabor import DEFAULT_SCALES, N_ORIENT, PHASES, make_bank
from .histogram import DEFAULT_PCENTER, DEFAULT_T, Q_SCHEDULES, phase_histograms, sigma_from_pcenter
from .jpeg import QuantizedJpeg, SpatialImage, decompress_unrounded
from .residual import correlate_many, im2col

VARIANTS = ("gfr", "gfr-gsm", "gfr-gw")
VARIANT_IDS = {"gfr": 1, "gfr-gsm": 2, "gfr-gw": 3}
DEFAULT_L = {"gfr": 4, "gfr-gsm": 4, "gfr-gw": 6}

_HALF = N_ORIENT // 2


# -- phase orbits ----------------------------------------------------------

def _orbits(generators):
    seen = set()
    classes = []
    for a in range(8):
        for b in range(8):
            if (a, b) in seen:
                continue
            orbit = {(a, b)}
            frontier = [(a, b)]
            while frontier:
                p = frontier.pop()
                for g in generators:
                    n = g(*p)
                    if n not in orbit:
                        orbit.add(n)
                        frontier.append(n)
            seen |= orbit
            classes.append(tuple(sorted(orbit)))
    return tuple(classes)


@lru_cache(maxsize=None)
def dctr_classes():
    """Orbits of (a, b) under a -> -a and b -> -b (mod 8): 25 classes."""
    return _orbits([lambda a, b: ((8 - a) % 8, b), lambda a, b: (a, (8 - b) % 8)])


@lru_cache(maxsize=None)
def centro_classes():
    """Orbits of (a, b) under (a, b) -> (-a, -b) (mod 8): 34 classes."""
    return _orbits([lambda a, b: ((8 - a) % 8, (8 - b) % 8)])


def _class_index(classes):
    idx = np.empty((8, 8), dtype=np.int64)
    for i, members in enumerate(classes):
        for a, b in members:
            idx[a, b] = i
    return idx


def _transpose_perm(classes):
    """perm[i] = index of the class containing the transposed members of class i."""
    idx = _class_index(classes)
    return np.array([idx[m[0][1], m[0][0]] for m in classes])


# -- merge operations ------------------------------------------------------

@dataclass(frozen=True)
class PhaseHistogramGrid:
    hist: np.ndarray  # (8, 8, T+1)
    phi: float = 0.0
    sigma: float = 1.0
    orient: int = 0  # theta = orient * pi / 32

    def __post_init__(self):
        if self.hist.ndim != 3 or self.hist.shape[:2] != (8, 8):
            raise ValueError("a phase histogram grid has shape (8, 8, T+1)")


@dataclass(frozen=True)
class MergedSet:
    hist: np.ndarray  # (n_classes, T+1)
    classes: tuple  # member phases of each class
    phi: float
    sigma: float
    orients: frozenset


def _class_means(h, classes):
    return np.stack([np.mean([h[a, b] for a, b in members], axis=0) for members in classes])


def merge_dctr_style(grid: PhaseHistogramGrid, strict: bool = True) -> MergedSet:
    """Average histograms over the 25 DCTR phase classes.

    Only orientations 0 and pi/2 have the underlying symmetry; ``strict=False``
    applies the rule anyway, as the original feature set does for every orientation.
    """
    if strict and grid.orient % _HALF:
        raise MismatchedProvenance(f"orientation {grid.orient} is not 0 or pi/2")
    classes = dctr_classes()
    return MergedSet(_class_means(grid.hist, classes), classes, grid.phi, grid.sigma,
                     frozenset([grid.orient]))


def merge_centro(grid: PhaseHistogramGrid) -> MergedSet:
    classes = centro_classes()
    return MergedSet(_class_means(grid.hist, classes), classes, grid.phi, grid.sigma,
                     frozenset([grid.orient]))


def merge_mirror_pairs(g_theta: PhaseHistogramGrid, g_mirror: PhaseHistogramGrid) -> MergedSet:
    """Average h_{a,b}, h_{-a,-b} of theta with h_{-a,b}, h_{a,-b} of pi - theta (mod 8)."""
    k, m = g_theta.orient, g_mirror.orient
    if (g_theta.phi, g_theta.sigma) != (g_mirror.phi, g_mirror.sigma) or not 0 < k < _HALF \
            or k + m != N_ORIENT:
        raise MismatchedProvenance(f"orientations {k} and {m} are not a (theta, pi - theta) pair")
    h, hm = g_theta.hist, g_mirror.hist
    n = (-np.arange(8)) % 8
    four = (h + h[n][:, n] + hm[n] + hm[:, n]) / 4
    classes = centro_classes()
    return MergedSet(_class_means(four, classes), classes, g_theta.phi, g_theta.sigma,
                     frozenset([k, m]))


def merge_transpose(s_theta: MergedSet, s_partner: MergedSet) -> MergedSet:
    """Average class (a, b) of the theta set with class (b, a) of the pi/2 - theta set."""
    reflected = frozenset((_HALF - k) % N_ORIENT for k in s_theta.orients)
    if (s_theta.phi, s_theta.sigma) != (s_partner.phi, s_partner.sigma) \
            or reflected != s_partner.orients or s_theta.classes != s_partner.classes:
        raise MismatchedProvenance("sets are not related by theta -> pi/2 - theta")
    perm = _transpose_perm(s_theta.classes)
    hist = (s_theta.hist + s_partner.hist[perm]) / 2
    return MergedSet(hist, s_theta.classes, s_theta.phi, s_theta.sigma,
                     s_theta.orients | s_partner.orients)


# -- parameters and layout -------------------------------------------------

@dataclass(frozen=True)
class FeatureParams:
    variant: str = "gfr-gw"
    scales: tuple = None
    T: int = DEFAULT_T
    q: tuple = None  # one step per scale; None -> preset by quality factor
    qf: int | None = None
    p_center: float = DEFAULT_PCENTER

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.scales is None:
            object.__setattr__(self, "scales", DEFAULT_SCALES[:DEFAULT_L[self.variant]])
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not self.scales:
            raise ConfigError("scale list is empty")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.q is not None:
            object.__setattr__(self, "q", tuple(float(v) for v in self.q))
            if len(self.q) != len(self.scales):
                raise ConfigError("q schedule length must equal the number of scales")
            if self.qf is not None:
                raise ConfigError("give either a q schedule or a quality preset, not both")

    @property
    def L(self) -> int:
        return len(self.scales)

    @property
    def weighted(self) -> bool:
        return self.variant == "gfr-gw"

    def q_schedule(self, quality_hint=None) -> tuple:
        if self.q is not None:
            return self.q
        qf = self.qf if self.qf is not None else quality_hint
        if qf not in Q_SCHEDULES:
            raise ConfigError(f"no q preset for quality {qf}; pass an explicit q schedule")
        table = dict(zip(DEFAULT_SCALES, Q_SCHEDULES[qf]))
        try:
            return tuple(table[s] for s in self.scales)
        except KeyError as exc:
            raise ConfigError(f"scale {exc.args[0]} has no preset q; pass an explicit schedule") from None

    def resolved(self, quality_hint=None) -> "FeatureParams":
        return FeatureParams(self.variant, self.scales, self.T, self.q_schedule(quality_hint),
                             None, self.p_center)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "scales": list(self.scales), "T": self.T,
                "q": None if self.q is None else list(self.q), "qf": self.qf,
                "p_center": self.p_center}


def expected_dim(variant: str, L: int, T: int = DEFAULT_T) -> int:
    if variant == "gfr":
        return 2 * L * (_HALF + 1) * 25 * (T + 1)
    return 594 * L * (T + 1)


def orientation_classes(variant: str) -> list:
    """Orientation index sets per (phi, sigma), ordered by smallest member."""
    if variant == "gfr":
        return [frozenset({k, (N_ORIENT - k) % N_ORIENT}) for k in range(_HALF + 1)]
    out = [frozenset({0, _HALF})]
    for k in range(1, N_ORIENT // 4 + 1):
        out.append(frozenset({k, N_ORIENT - k, _HALF - k, _HALF + k}))
    return out


def layout(params: FeatureParams) -> tuple:
    """Descriptor per feature: (phi index, sigma, smallest orientation, class representative, bin)."""
    desc = []
    for pi, _ in enumerate(PHASES):
        for s in params.scales:
            for oc in orientation_classes(params.variant):
                k0 = min(oc)
                phases = dctr_classes() if (params.variant == "gfr" or k0 == 0) else centro_classes()
                for members in phases:
                    for t in range(params.T + 1):
                        desc.append((pi, s, k0, members[0], t))
    return tuple(desc)


def layout_hash(params: FeatureParams) -> bytes:
    p = params
    blob = json.dumps({"variant": p.variant, "scales": list(p.scales), "T": p.T,
                       "q": None if p.q is None else list(p.q),
                       "p_center": p.p_center if p.weighted else None,
                       "n": len(layout(p))}, sort_keys=True).encode()
    return hashlib.sha256(blob).digest()


# -- assembly --------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray = field(repr=False)
    params: FeatureParams
    layout_hash: bytes = field(repr=False)

    @property
    def layout(self) -> tuple:
        return layout(self.params)


@lru_cache(maxsize=8)
def _bank_weights(scales: tuple) -> np.ndarray:
    bank = make_bank(scales)
    w = np.stack([k.weights for k in bank]).reshape(len(PHASES), len(scales), N_ORIENT, 8, 8)
    w.setflags(write=False)
    return w


def _assemble_orientations(variant, grids, phi, sigma):
    """grids: (32, 8, 8, T+1) histograms of one (phi, sigma)."""
    g = [PhaseHistogramGrid(grids[k], phi, sigma, k) for k in range(N_ORIENT)]
    parts = []
    if variant == "gfr":
        dctr = [merge_dctr_style(x, strict=False).hist for x in g]
        for k in range(_HALF + 1):
            m = (N_ORIENT - k) % N_ORIENT
            parts.append(dctr[k] if m == k else (dctr[k] + dctr[m]) / 2)
        return parts
    parts.append(merge_transpose(merge_dctr_style(g[0]), merge_dctr_style(g[_HALF])).hist)
    mirrored = {k: merge_mirror_pairs(g[k], g[N_ORIENT - k]) for k in range(1, _HALF)}
    for k in range(1, N_ORIENT // 4 + 1):
        parts.append(merge_transpose(mirrored[k], mirrored[_HALF - k]).hist)
    return parts


def assemble_from_grids(params: FeatureParams, grids: np.ndarray) -> np.ndarray:
    """Merge raw per-kernel grids (2, L, 32, 8, 8, T+1) into the flat feature vector."""
    parts = []
    for pi, phi in enumerate(PHASES):
        for si, s in enumerate(params.scales):
            parts.extend(_assemble_orientations(params.variant, grids[pi, si], phi, s))
    return np.concatenate([p.ravel() for p in parts])


def kernel_grids(plane: np.ndarray, params: FeatureParams) -> np.ndarray:
    """Per-kernel phase histograms (2, L, 32, 8, 8, T+1) of a decompressed plane."""
    if params.q is None:
        raise ConfigError("parameters must carry a resolved q schedule")
    weights = _bank_weights(params.scales)
    cols = im2col(plane)
    out = np.empty((len(PHASES), params.L, N_ORIENT, 8, 8, params.T + 1))
    for pi in range(len(PHASES)):
        for si, q in enumerate(params.q):
            res = correlate_many(cols, plane.shape, weights[pi, si])
            sigma_h = sigma_from_pcenter(q, params.p_center) if params.weighted else None
            out[pi, si] = phase_histograms(res, q, params.T, sigma_h, params.weighted)
    return out


def extract(image, params: FeatureParams = FeatureParams()) -> FeatureVector:
    """Features of a QuantizedJpeg (or an already decompressed SpatialImage / array)."""
    hint = None
    if isinstance(image, QuantizedJpeg):
        hint = image.quality_hint
        plane = decompress_unrounded(image).data
    elif isinstance(image, SpatialImage):
        plane = image.data
    else:
        plane = np.asarray(image, dtype=np.float64)
    params = params.resolved(hint)
    values = assemble_from_grids(params, kernel_grids(plane, params))
    assert values.size == expected_dim(params.variant, params.L, params.T)
    return FeatureVector(values, params, layout_hash(params))


assemble = extract


# -- feature matrix file ---------------------------------------------------
# "GFRF", u32 rows, u32 cols, u8 variant id, 32-byte layout hash,
# u32 n + n bytes of UTF-8 JSON metadata, then rows*cols little-endian f32.

_FEAT_HEAD = struct.Struct("<4sIIB32s")


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (rows, cols) float32
    variant: str
    layout_hash: bytes
    meta: dict = field(default_factory=dict)


def write_features(fh, fm: FeatureMatrix) -> None:
    values = np.asarray(fm.values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    meta = json.dumps(fm.meta, sort_keys=True).encode()
    fh.write(_FEAT_HEAD.pack(b"GFRF", values.shape[0], values.shape[1],
                             VARIANT_IDS[fm.variant], fm.layout_hash))
    fh.write(struct.pack("<I", len(meta)) + meta)
    fh.write(values.tobytes())


def read_features(fh) -> FeatureMatrix:
    head = fh.read(_FEAT_HEAD.size)
    if len(head) < _FEAT_HEAD.size:
        raise FormatError("feature file too short")
    magic, rows, cols, vid, lhash = _FEAT_HEAD.unpack(head)
    if magic != b"GFRF":
        raise FormatError("not a GFRF feature file")
    names = {v: k for k, v in VARIANT_IDS.items()}
    if vid not in names:
        raise FormatError(f"unknown variant id {vid}")
    (n,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(n).decode()) if n else {}
    body = fh.read(4 * rows * cols)
    if len(body) != 4 * rows * cols:
        raise FormatError("feature file truncated")
    values = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)
    return FeatureMatrix(values, names[vid], lhash, meta)


def save_features(path, fm: FeatureMatrix) -> None:
    with open(path, "wb") as fh:
        write_features(fh, fm)


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        return read_features(fh)


def features_to_csv(fm: FeatureMatrix, row_names=None) -> str:
    out = io.StringIO()
    for i, row in enumerate(fm.values):
        lead = [row_names[i]] if row_names is not None else []
        out.write(",".join(lead + [repr(float(v)) for v in row]) + "\n")
    return out.getvalue()
