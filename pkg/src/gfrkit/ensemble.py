"""Ensemble of Fisher linear discriminants on random feature subspaces.

Each base learner sees a random subset of d_sub features and a per-class
bootstrap sample of the training rows; the rows left out of its bootstrap
give an out-of-bag (OOB) error estimate that drives the choice of d_sub and
of the number of learners. Decisions are majority votes, ties go to cover.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateClass, DimensionMismatch, FormatError, LayoutMismatch, SingleClassInput

COVER, STEGO = 0, 1
MODEL_VERSION = 1
RIDGE = 1e-10


@dataclass(frozen=True)
class FldBase:
    indices: np.ndarray  # sorted feature indices, int
    weights: np.ndarray
    bias: float  # decide stego when x[indices] @ weights + bias > 0

    def scores(self, x: np.ndarray) -> np.ndarray:
        return x[:, self.indices] @ self.weights + self.bias


@dataclass
class EnsembleModel:
    bases: list
    d_sub: int
    dim: int
    seed: int
    layout_hash: bytes = b"\0" * 32
    oob_error: float = float("nan")
    search: list = field(default_factory=list)  # (d_sub, n_learners, oob) per candidate

    @property
    def n_learners(self) -> int:
        return len(self.bases)


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def fit_fld(cover: np.ndarray, stego: np.ndarray):
    """Weights and bias of one FLD; the threshold minimizes training P_E."""
    mc, ms = cover.mean(axis=0), stego.mean(axis=0)
    xc, xs = cover - mc, stego - ms
    sw = xc.T @ xc + xs.T @ xs
    d = sw.shape[0]
    eps = RIDGE * np.trace(sw) / d
    if not eps > 0:
        eps = RIDGE
    sw[np.diag_indices(d)] += eps
    try:
        w = scipy.linalg.solve(sw, ms - mc, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        w = np.linalg.lstsq(sw, ms - mc, rcond=None)[0]
    pc, ps = cover @ w, stego @ w
    thr = _best_threshold(pc, ps)
    return w, -thr


def _best_threshold(pc, ps):
    """Threshold t (decide stego when p > t) minimizing (P_FA + P_MD) / 2."""
    vals = np.concatenate([pc, ps])
    lab = np.concatenate([np.zeros(pc.size), np.ones(ps.size)])
    order = np.argsort(vals, kind="stable")
    vals, lab = vals[order], lab[order]
    # threshold below index i: everything from i on is called stego
    fa = (pc.size - np.concatenate([[0], np.cumsum(1 - lab)])) / pc.size
    md = np.concatenate([[0], np.cumsum(lab)]) / ps.size
    err = (fa + md) / 2
    # only cut between distinct values
    valid = np.ones(vals.size + 1, dtype=bool)
    valid[1:-1] = vals[1:] > vals[:-1]
    i = int(np.argmin(np.where(valid, err, np.inf)))
    if i == 0:
        return vals[0] - 1.0
    if i == vals.size:
        return vals[-1] + 1.0
    return (vals[i - 1] + vals[i]) / 2


def _ladder(dim: int) -> list:
    hi = max(1, min(1000, dim // 2))
    lo = min(100, hi)
    if lo == hi:
        return [hi]
    return sorted({int(round(v)) for v in np.geomspace(lo, hi, 5)})


def _oob_error(votes, counts, n_cover):
    seen = counts > 0
    if not seen[:n_cover].any() or not seen[n_cover:].any():
        return 0.5
    pred = votes > 0  # net vote; ties (0) go to cover
    fa = np.mean(pred[:n_cover][seen[:n_cover]])
    md = np.mean(~pred[n_cover:][seen[n_cover:]])
    return float((fa + md) / 2)


def _grow(cover, stego, d_sub, rng, max_learners, patience, min_learners, fixed=False):
    """Train bases until the OOB error stops improving; returns (bases, oob).

    Growth stops once ``patience`` consecutive learners past ``min_learners``
    bring no OOB improvement; with ``fixed`` exactly ``max_learners`` are trained.
    Equal class sizes are treated as cover/stego pairs and bootstrapped together,
    so a pair is either in the bag or out of it.
    """
    nc, ns = len(cover), len(stego)
    x = np.concatenate([cover, stego])
    votes = np.zeros(nc + ns)
    counts = np.zeros(nc + ns)
    bases = []
    best, best_n, history = np.inf, 0, []
    for n in range(1, max_learners + 1):
        idx = np.sort(rng.choice(cover.shape[1], size=d_sub, replace=False))
        bc = rng.integers(0, nc, nc)
        bs = bc if nc == ns else rng.integers(0, ns, ns)
        w, bias = fit_fld(cover[bc][:, idx], stego[bs][:, idx])
        base = FldBase(idx, w, float(bias))
        bases.append(base)
        oob = np.ones(nc + ns, dtype=bool)
        oob[bc] = False
        oob[nc + bs] = False
        dec = np.where(base.scores(x[oob]) > 0, 1.0, -1.0)
        votes[oob] += dec
        counts[oob] += 1
        err = _oob_error(votes, counts, nc)
        history.append(err)
        if err < best - 1e-12:
            best, best_n = err, n
        if not fixed and n >= min_learners and n - best_n >= patience:
            break
    return bases, float(history[-1])


def train(cover, stego, seed: int = 0, d_sub=None, n_learners=None, max_learners: int = 100,
          patience: int = 5, min_learners: int = 10, layout_hash: bytes = b"\0" * 32) -> EnsembleModel:
    cover, stego = _as_matrix(cover), _as_matrix(stego)
    if cover.shape[1] != stego.shape[1]:
        raise DimensionMismatch(f"cover has {cover.shape[1]} columns, stego {stego.shape[1]}")
    if len(cover) < 2 or len(stego) < 2:
        raise DegenerateClass("each class needs at least 2 rows")
    dim = cover.shape[1]
    candidates = [min(int(d_sub), dim)] if d_sub else _ladder(dim)
    seqs = np.random.SeedSequence(seed).spawn(len(candidates))
    search = []
    best = None
    for ds, ss in zip(candidates, seqs):
        rng = np.random.default_rng(ss)
        if n_learners:
            bases, oob = _grow(cover, stego, ds, rng, int(n_learners), 0, 0, fixed=True)
        else:
            bases, oob = _grow(cover, stego, ds, rng, max_learners, patience, min_learners)
        search.append((ds, len(bases), oob))
        if best is None or oob < best[2] - 1e-12:
            best = (ds, bases, oob)
    ds, bases, oob = best
    return EnsembleModel(bases, ds, dim, seed, layout_hash, oob, search)


def base_decisions(m: EnsembleModel, x) -> np.ndarray:
    """(rows, n_learners) array of 0/1 base decisions."""
    x = _as_matrix(x)
    if x.shape[1] != m.dim:
        raise DimensionMismatch(f"model expects {m.dim} features, got {x.shape[1]}")
    return np.stack([(b.scores(x) > 0).astype(np.int64) for b in m.bases], axis=1)


def votes(m: EnsembleModel, x) -> np.ndarray:
    """Number of bases voting stego, per row."""
    return base_decisions(m, x).sum(axis=1)


def predict(m: EnsembleModel, x, layout_hash: bytes | None = None):
    """COVER or STEGO for a single row, an array of labels for a matrix."""
    if layout_hash is not None and layout_hash != m.layout_hash:
        raise LayoutMismatch("features were extracted with a different layout")
    single = np.asarray(x).ndim == 1
    v = votes(m, x)
    labels = np.where(2 * v > m.n_learners, STEGO, COVER)
    return int(labels[0]) if single else labels


def compute_pe(scores, labels) -> float:
    """min over thresholds of (P_FA + P_MD) / 2, deciding stego when score > threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise DimensionMismatch("scores and labels differ in length")
    if not (np.any(y == COVER) and np.any(y == STEGO)):
        raise SingleClassInput("both classes must be present")
    return float(np.min(_pe_curve(s[y == COVER], s[y == STEGO])))


def _pe_curve(sc, ss):
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([sc, ss]))])
    fa = (sc[None, :] > thresholds[:, None]).mean(axis=1)
    md = (ss[None, :] <= thresholds[:, None]).mean(axis=1)
    return (fa + md) / 2


def evaluate(m: EnsembleModel, cover, stego) -> float:
    c, s = votes(m, cover), votes(m, stego)
    return compute_pe(np.concatenate([c, s]), np.r_[np.zeros(len(c)), np.ones(len(s))])


@dataclass
class SplitReport:
    pe: list
    seed: int
    d_sub: list
    n_learners: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.pe))

    @property
    def std(self) -> float:
        return float(np.std(self.pe))

    def to_text(self) -> str:
        return f"P_E = {self.mean:.4f} ± {self.std:.4f} over {len(self.pe)} splits"

    def to_dict(self) -> dict:
        return {"pe_mean": self.mean, "pe_std": self.std, "pe": self.pe, "seed": self.seed,
                "d_sub": self.d_sub, "n_learners": self.n_learners}


def train_eval_splits(cover, stego, n_splits: int = 10, seed: int = 0, **train_kw) -> SplitReport:
    """Random half/half splits by image index; row i of cover and stego stay together."""
    cover, stego = _as_matrix(cover), _as_matrix(stego)
    if cover.shape[1] != stego.shape[1]:
        raise DimensionMismatch("cover and stego widths differ")
    n = min(len(cover), len(stego))
    if n < 4:
        raise DegenerateClass("need at least 4 images per class for half/half splits")
    ss = np.random.SeedSequence(seed)
    pes, dsubs, nls = [], [], []
    for child in ss.spawn(n_splits):
        rng = np.random.default_rng(child)
        perm = rng.permutation(n)
        tr, te = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
        model = train(cover[tr], stego[tr], seed=int(rng.integers(2 ** 31)), **train_kw)
        pes.append(evaluate(model, cover[te], stego[te]))
        dsubs.append(model.d_sub)
        nls.append(model.n_learners)
    return SplitReport(pes, seed, dsubs, nls)


# -- serialization ---------------------------------------------------------
# "GFRE", u16 version, 32-byte layout hash, u32 n + JSON header, then per
# base: u32 indices[d_sub], f64 weights[d_sub], f64 bias.

def dumps_model(m: EnsembleModel) -> bytes:
    head = json.dumps({"d_sub": m.d_sub, "dim": m.dim, "seed": m.seed,
                       "n_learners": m.n_learners, "oob_error": m.oob_error,
                       "search": m.search}, sort_keys=True).encode()
    parts = [b"GFRE", struct.pack("<H", MODEL_VERSION), m.layout_hash,
             struct.pack("<I", len(head)), head]
    for b in m.bases:
        parts.append(b.indices.astype("<u4").tobytes())
        parts.append(b.weights.astype("<f8").tobytes())
        parts.append(struct.pack("<d", b.bias))
    return b"".join(parts)


def loads_model(blob: bytes) -> EnsembleModel:
    if blob[:4] != b"GFRE":
        raise FormatError("not a GFRE model file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    lhash = blob[6:38]
    (n,) = struct.unpack_from("<I", blob, 38)
    head = json.loads(blob[42:42 + n].decode())
    pos = 42 + n
    d = head["d_sub"]
    bases = []
    for _ in range(head["n_learners"]):
        idx = np.frombuffer(blob, "<u4", d, pos).astype(np.int64)
        pos += 4 * d
        w = np.frombuffer(blob, "<f8", d, pos).copy()
        pos += 8 * d
        (bias,) = struct.unpack_from("<d", blob, pos)
        pos += 8
        bases.append(FldBase(idx, w, bias))
    if pos != len(blob):
        raise FormatError("trailing or missing bytes in model file")
    return EnsembleModel(bases, d, head["dim"], head["seed"], lhash, head["oob_error"],
                         [tuple(s) for s in head["search"]])
