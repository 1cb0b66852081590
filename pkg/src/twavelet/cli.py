"""Command-line entry point: ``twavelet {synth,analyze,build-tree,train,eval,decompose}``.

Exit codes: 0 success, 1 internal error, 2 user/input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TWaveletError
from .io import load_split, write_dataset
from .lifting import Mode, decompose, make_units, reconstruct
from .signal import WindowSet, power_spectrum
from .spectral import SubbandSet, analyze_spectrum
from .synth import SynthSpec, generate
from .training import ModelCheckpoint, TrainConfig, evaluate, fit, write_log_csv
from .tree import GateTree, build_tree, leaf_bands, validate_against

log = logging.getLogger("twavelet")

SEED_ENV = "TWAVELET_SEED"


class UserError(Exception):
    """Raised for problems the user can fix; maps to exit code 2."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(path.iterdir()):
            if p.is_file():
                h.update(p.name.encode())
                h.update(p.read_bytes())
    elif path.exists():
        h.update(path.read_bytes())
    return h.hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def write_manifest(out: Path, command: str, argv: list[str], inputs: dict[str, str | Path], seed: int | None, started: str) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "config_paths": {k: str(v) for k, v in inputs.items()},
        "input_hashes": {k: _sha256(Path(v)) for k, v in inputs.items()},
        "seed": seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
    }
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _seed_override(seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise UserError(f"{SEED_ENV}={env!r} is not an integer") from None


def _load(path: str, split: str, args) -> WindowSet:
    kw = {}
    if getattr(args, "window_length", None):
        kw["length"] = args.window_length
    if getattr(args, "sample_rate", None):
        kw["sample_rate_hz"] = args.sample_rate
    return load_split(path, split, **kw)


def _read_tree(path: str) -> GateTree:
    return GateTree.from_json(Path(path).read_text())


def _check_length(ws: WindowSet, tree: GateTree) -> None:
    if ws.length % 2**tree.height:
        raise UserError(
            f"window length {ws.length} does not fit tree height {tree.height} "
            f"(length must be divisible by {2**tree.height})"
        )


# -- commands ------------------------------------------------------------------
def cmd_synth(args) -> int:
    started = _now()
    spec = SynthSpec.from_json(Path(args.spec).read_text()) if args.spec else SynthSpec()
    spec.seed = _seed_override(spec.seed)
    train, val, test = generate(spec)
    out = Path(args.out)
    paths = write_dataset(out, {"train": train, "val": val, "test": test}, args.format)
    (out / "synth_spec.json").write_text(spec.to_json())
    write_manifest(out / "dataset", "synth", args.argv, {"spec": args.spec} if args.spec else {}, spec.seed, started)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


def cmd_analyze(args) -> int:
    started = _now()
    ws = _load(args.data, "train", args)
    if len(ws) == 0:
        raise UserError("no windows parsed")
    spectrum = power_spectrum(ws)
    q, env = analyze_spectrum(spectrum, args.smoothing, args.prominence, args.min_bandwidth)
    out = Path(args.out)
    out.write_text(q.to_json())
    spec_csv = Path(args.spectrum_csv) if args.spectrum_csv else out.with_suffix(".spectrum.csv")
    with open(spec_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "amp", "envelope"])
        for f, a, e in zip(spectrum.freqs, spectrum.amp, env.values):
            w.writerow([repr(float(f)), repr(float(a)), repr(float(e))])
    if not q.formants_hz:
        print("warning: no formants found; using the two-band default partition", file=sys.stderr)
    print(f"formants (Hz): {', '.join(f'{f:g}' for f in q.formants_hz) or 'none'}")
    print(f"{'band':>20}  {'energy':>12}")
    for b, e in zip(q.bands, q.energies):
        print(f"{str(b):>20}  {e:12.4f}")
    write_manifest(out, "analyze", args.argv, {"data": args.data}, None, started)
    return 0


def cmd_build_tree(args) -> int:
    started = _now()
    q = SubbandSet.from_json(Path(args.subbands).read_text())
    tree = build_tree(q)
    report = validate_against(tree, q)
    if not report:
        raise UserError(f"tree misses bands: {', '.join(map(str, report.missing))}")
    out = Path(args.out)
    out.write_text(tree.to_json())
    print(f"height {tree.height}, {tree.unit_count} split nodes, leaves: {', '.join(map(str, leaf_bands(tree)))}")
    write_manifest(out, "build-tree", args.argv, {"subbands": args.subbands}, None, started)
    return 0


def _train_val(args, seed: int) -> tuple[WindowSet, WindowSet | None]:
    path = Path(args.data)
    if path.is_dir():
        train = _load(args.data, "train", args)
        try:
            val = _load(args.data, "val", args)
        except TWaveletError:
            val = None
        return train, val
    ws = _load(args.data, "train", args)
    order = np.random.default_rng(seed).permutation(len(ws))
    n_val = int(round(0.15 * len(ws)))
    return ws.subset(order[n_val:]), ws.subset(order[:n_val]) if n_val else None


def cmd_train(args) -> int:
    started = _now()
    tree = _read_tree(args.tree)
    cfg_dict = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, value in (("mode", args.mode), ("fusion", args.fusion), ("max_epochs", args.epochs)):
        if value is not None:
            cfg_dict[key] = value
    cfg_dict["seed"] = _seed_override(cfg_dict.get("seed", 0))
    config = TrainConfig.from_dict(cfg_dict)
    train, val = _train_val(args, config.seed)
    _check_length(train, tree)
    ckpt, history = fit(train, val, tree, config, on_epoch=lambda r: print(
        f"epoch {r['epoch']:3d}  loss {r['train_loss']:.4f}  train_acc {r['train_acc']:.4f}  val_acc {r['val_acc']:.4f}"
    ) if not args.quiet else None)
    out = Path(args.out)
    ckpt.save(out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    write_log_csv(log_path, history)
    print(f"best epoch {ckpt.epoch}; checkpoint {out}; log {log_path}")
    inputs = {"data": args.data, "tree": args.tree}
    if args.config:
        inputs["config"] = args.config
    write_manifest(out, "train", args.argv, inputs, config.seed, started)
    return 0


def cmd_eval(args) -> int:
    started = _now()
    ckpt = ModelCheckpoint.load(args.ckpt)
    test = _load(args.data, "test", args)
    if test.length != ckpt.window_length:
        raise UserError(f"window length {test.length} differs from checkpoint window length {ckpt.window_length}")
    _check_length(test, ckpt.tree)
    if not test.labeled:
        raise UserError("evaluation data must be labeled")
    report = evaluate(ckpt.build_model(), test)
    print(report.format())
    out = Path(args.out) if args.out else Path(args.ckpt).with_suffix(".eval.json")
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_manifest(out, "eval", args.argv, {"ckpt": args.ckpt, "data": args.data}, ckpt.config.seed, started)
    return 0


def cmd_decompose(args) -> int:
    started = _now()
    tree = _read_tree(args.tree)
    ws = _load(args.data, args.split, args)
    _check_length(ws, tree)
    if args.haar:
        units = make_units(tree, ws.channels, Mode.HAAR)
        dtype = np.float64
    else:
        if not args.ckpt:
            raise UserError("decompose needs --ckpt or --haar")
        ckpt = ModelCheckpoint.load(args.ckpt)
        if ckpt.tree != tree:
            raise UserError(f"tree {args.tree} differs from the tree stored in {args.ckpt}")
        model = ckpt.build_model()
        units = model.units
        dtype = model.dtype
    leaves = leaf_bands(tree)
    header = ["window", "label"]
    for i, b in enumerate(leaves):
        header += [f"leaf{i}_ch{c}_mean" for c in range(ws.channels)]
    header += [f"leaf{i}_energy_share" for i in range(len(leaves))]
    max_err = 0.0
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, x in enumerate(ws.data):
            feats = decompose(x.astype(dtype), tree, units)
            energies = np.array([f.energy for f in feats])
            total = energies.sum()
            shares = energies / total if total > 0 else np.zeros_like(energies)
            row = [k, int(ws.labels[k])]
            for f in feats:
                row += [repr(float(v)) for v in f.pooled]
            row += [repr(float(s)) for s in shares]
            w.writerow(row)
            if args.verify_invertible:
                max_err = max(max_err, float(np.max(np.abs(reconstruct(feats, tree, units) - x))))
    print(f"wrote {len(ws)} rows to {out}")
    if args.verify_invertible:
        print(f"max reconstruction error: {max_err:.3e}")
    inputs = {"tree": args.tree, "data": args.data}
    if args.ckpt:
        inputs["ckpt"] = args.ckpt
    write_manifest(out, "decompose", args.argv, inputs, None, started)
    return 0


# -- parser --------------------------------------------------------------------
def _add_data_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-length", type=int, default=None, help="rows per window for CSV without sidecar")
    p.add_argument("--sample-rate", type=float, default=None, help="sampling rate for CSV without sidecar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twavelet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--spec", help="SynthSpec JSON (defaults used when omitted)")
    p.add_argument("--format", choices=("csv", "f32"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="power-spectrum analysis -> subbands.json")
    p.add_argument("data")
    p.add_argument("--smoothing", type=int, default=None, help="envelope width in bins (odd)")
    p.add_argument("--prominence", type=float, default=0.1, help="formant prominence fraction")
    p.add_argument("--min-bandwidth", type=float, default=None, help="Hz; defaults to 2 bins")
    p.add_argument("--out", default="subbands.json")
    p.add_argument("--spectrum-csv", default=None)
    _add_data_opts(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("build-tree", help="subbands.json -> tree.json")
    p.add_argument("subbands")
    p.add_argument("--out", default="tree.json")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("data")
    p.add_argument("tree")
    p.add_argument("config", nargs="?", default=None)
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--log", default=None, help="epoch log CSV path")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p.add_argument("--fusion", choices=("attention", "uniform"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    _add_data_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("ckpt")
    p.add_argument("data")
    p.add_argument("--out", default=None, help="JSON report path")
    _add_data_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="dump per-leaf features")
    p.add_argument("tree")
    p.add_argument("data")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ckpt", default=None)
    g.add_argument("--haar", action="store_true")
    p.add_argument("--split", default="test")
    p.add_argument("--out", default="features.csv")
    p.add_argument("--verify-invertible", action="store_true")
    _add_data_opts(p)
    p.set_defaults(func=cmd_decompose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, TWaveletError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
