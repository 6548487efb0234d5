"""Command-line front end: extract, embed-sim, train-eval, verify-symmetries, dump-bank.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal invariant violation.
Progress goes to stderr; results go to the files named on the command line.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import train_eval_splits
from .errors import ConfigError, GfrError, LayoutMismatch
from .features import (VARIANTS, FeatureMatrix, FeatureParams, extract, features_to_csv,
                       load_features, save_features)
from .gabor import DEFAULT_SCALES, bank_to_csv, make_bank
from .histogram import DEFAULT_PCENTER, DEFAULT_T
from .jpeg import QuantTable, dump_coefficients, load_coefficients, parse_jpeg, standard_qtable
from .residual import verify_symmetries
from .stego import EmbedSpec, embed_simulated

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


@dataclass
class RunConfig:
    variant: str = "gfr-gw"
    scales: tuple | None = None
    T: int = DEFAULT_T
    q: tuple | None = None
    qf: int | None = None
    p_center: float = DEFAULT_PCENTER
    seed: int = 0
    threads: int = 1
    inputs: list = field(default_factory=list)
    output: str | None = None

    def feature_params(self) -> FeatureParams:
        return FeatureParams(self.variant, self.scales, self.T, self.q, self.qf, self.p_center)


def read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; quotes around values are stripped."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value.strip("\"'")
    return out


def expand_inputs(patterns) -> list:
    paths = set()
    for pat in patterns:
        hits = glob.glob(pat)
        if not hits and os.path.exists(pat):
            hits = [pat]
        paths.update(hits)
    return sorted(paths)


def load_image(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == b"GFRC":
        return load_coefficients(data)
    return parse_jpeg(data)


def _extract_one(args):
    path, params = args
    try:
        fv = extract(load_image(path), params)
        return path, fv.values, fv.params, fv.layout_hash, None
    except (GfrError, OSError) as exc:
        return path, None, None, None, f"{type(exc).__name__}: {exc}"


# -- subcommands -----------------------------------------------------------

def cmd_extract(cfg: RunConfig, csv_path=None) -> int:
    paths = expand_inputs(cfg.inputs)
    if not paths:
        raise UsageError("no input files matched")
    if not cfg.output:
        raise UsageError("extract needs --output")
    params = cfg.feature_params()
    jobs = [(p, params) for p in paths]
    t0 = time.perf_counter()
    rows, errors = [], []
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            results = pool.map(_extract_one, jobs)
            results = list(_progress(results, len(jobs), t0))
    else:
        results = list(_progress(map(_extract_one, jobs), len(jobs), t0))
    resolved = lhash = None
    for path, values, fparams, fhash, err in results:
        if err is None and lhash is not None and fhash != lhash:
            err = "resolved q schedule differs from earlier files (mixed quality factors?)"
        if err:
            errors.append((path, err))
            continue
        resolved, lhash = resolved or fparams, lhash or fhash
        rows.append((path, values))
    for path, err in errors:
        _log(f"error: {path}: {err}")
    if not rows:
        return EXIT_DATA
    matrix = np.stack([v for _, v in rows])
    fm = FeatureMatrix(matrix.astype(np.float32), params.variant, lhash,
                       {"rows": [p for p, _ in rows], "params": resolved.to_dict()})
    save_features(cfg.output, fm)
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(features_to_csv(fm, fm.meta["rows"]))
    _log(f"wrote {matrix.shape[0]} x {matrix.shape[1]} features to {cfg.output} "
         f"in {time.perf_counter() - t0:.1f} s")
    return EXIT_DATA if errors else EXIT_OK


def _progress(results, total, t0):
    for i, r in enumerate(results, 1):
        _log(f"[{i}/{total}] {r[0]} ({time.perf_counter() - t0:.1f} s)")
        yield r


def cmd_embed_sim(inputs, outdir, rate, seed) -> int:
    paths = expand_inputs(inputs)
    if not paths:
        raise UsageError("no input files matched")
    os.makedirs(outdir, exist_ok=True)
    failed = 0
    for path in paths:
        name = os.path.basename(path)
        try:
            cover = load_image(path)
        except (GfrError, OSError) as exc:
            _log(f"error: {path}: {type(exc).__name__}: {exc}")
            failed += 1
            continue
        # per-file seed so results do not depend on which other files are present
        file_seed = int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])
        stego = embed_simulated(cover, EmbedSpec(rate, file_seed))
        out = os.path.join(outdir, os.path.splitext(name)[0] + ".gfrc")
        with open(out, "wb") as fh:
            fh.write(dump_coefficients(stego))
        _log(f"{path} -> {out}")
    return EXIT_DATA if failed else EXIT_OK


def cmd_train_eval(cover_path, stego_path, n_splits, seed, json_path=None) -> int:
    cover, stego = load_features(cover_path), load_features(stego_path)
    if cover.layout_hash != stego.layout_hash or cover.variant != stego.variant:
        raise LayoutMismatch("cover and stego feature files have different layouts")
    if cover.values.shape[0] != stego.values.shape[0]:
        raise ConfigError("cover and stego files must have one row per image, in the same order")
    t0 = time.perf_counter()
    report = train_eval_splits(cover.values.astype(np.float64), stego.values.astype(np.float64),
                               n_splits=n_splits, seed=seed)
    _log(f"trained {n_splits} splits in {time.perf_counter() - t0:.1f} s")
    print(f"{cover.variant}: {report.to_text()}")
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"variant": cover.variant, **report.to_dict()}, fh, indent=2)
    return EXIT_OK


def cmd_verify_symmetries(scales, qf, tolerance, json_path=None) -> int:
    qtable = QuantTable.from_natural(np.ones(64)) if qf is None else standard_qtable(qf)
    t0 = time.perf_counter()
    report = verify_symmetries(scales, qtable, tolerance)
    _log(f"checked {2 * len(scales) * 32} kernels in {time.perf_counter() - t0:.1f} s")
    print(report.to_text())
    if json_path:
        with open(json_path, "w") as fh:
            fh.write(report.to_json())
    return EXIT_OK if report.ok else EXIT_INTERNAL


def cmd_dump_bank(scales, output) -> int:
    text = bank_to_csv(make_bank(scales))
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gfrkit", description="Gabor residual features for JPEG steganalysis")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extract", help="extract a feature matrix from JPEG files or coefficient dumps")
    e.add_argument("inputs", nargs="*", help="files or glob patterns")
    e.add_argument("-o", "--output")
    e.add_argument("--csv", help="also write features as CSV")
    e.add_argument("--variant", choices=VARIANTS)
    e.add_argument("--scales", type=_floats)
    e.add_argument("--T", type=int, dest="T")
    sched = e.add_mutually_exclusive_group()
    sched.add_argument("--q", type=_floats, help="quantization step per scale")
    sched.add_argument("--qf", type=int, choices=(75, 95), help="q schedule preset")
    e.add_argument("--p-center", type=float, dest="p_center")
    e.add_argument("--threads", type=int)
    e.add_argument("--config", help="key = value file; flags override it")

    s = sub.add_parser("embed-sim", help="write +-1 stego coefficient dumps")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--outdir", required=True)
    s.add_argument("--rate", type=float, default=0.4, help="bits per nonzero AC coefficient")
    s.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train-eval", help="ensemble P_E over random half/half splits")
    t.add_argument("--cover", required=True)
    t.add_argument("--stego", required=True)
    t.add_argument("--splits", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--json")

    v = sub.add_parser("verify-symmetries", help="check the projection-vector symmetries")
    v.add_argument("--scales", type=_floats, default=DEFAULT_SCALES[:4])
    v.add_argument("--qf", type=int, help="standard table of this quality (default: all-ones table)")
    v.add_argument("--tolerance", type=float, default=1e-9)
    v.add_argument("--json")

    d = sub.add_parser("dump-bank", help="write the Gabor bank as CSV")
    d.add_argument("--scales", type=_floats, default=DEFAULT_SCALES)
    d.add_argument("-o", "--output")
    return p


_EXTRACT_KEYS = {"variant": str, "scales": _floats, "T": int, "q": _floats, "qf": int,
                 "p_center": float, "threads": int, "output": str}


def _run_config(args) -> RunConfig:
    values = {}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key == "inputs":
                values["inputs"] = raw.split()
                continue
            if key not in _EXTRACT_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = _EXTRACT_KEYS[key](raw)
    for key in ("variant", "scales", "T", "q", "qf", "p_center", "threads", "output"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.inputs:
        values["inputs"] = args.inputs
    if args.q is not None:
        values.pop("qf", None)
    if args.qf is not None:
        values.pop("q", None)
    return RunConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            return cmd_extract(_run_config(args), args.csv)
        if args.command == "embed-sim":
            if not 0 <= args.rate <= 1:
                raise UsageError("--rate must lie in [0, 1]")
            return cmd_embed_sim(args.inputs, args.outdir, args.rate, args.seed)
        if args.command == "train-eval":
            return cmd_train_eval(args.cover, args.stego, args.splits, args.seed, args.json)
        if args.command == "verify-symmetries":
            return cmd_verify_symmetries(args.scales, args.qf, args.tolerance, args.json)
        if args.command == "dump-bank":
            return cmd_dump_bank(args.scales, args.output)
    except (UsageError, ConfigError) as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except (GfrError, OSError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_DATA
    except AssertionError as exc:
        _log(f"internal error: {exc}")
        return EXIT_INTERNAL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
