"""Command-line frontend.

Exit codes: 0 success, 2 config error, 3 data/format error, 4 numerical
failure, 5 selfcheck failure. Every failure prints one line of the form
`<error-class>: <message>` to stderr. Artifact-producing commands write a
JSON run manifest next to their outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import data as D
from . import evaluate as E
from . import quantize as Q
from . import report as R
from .errors import BinganError, ConfigError, DataError
from .losses import RegularizerConfig
from .train import Checkpoint, TrainConfig, extract_codes, train


# run manifests ------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir_or_file, command, config, seed, inputs, outputs, t0):
    base = out_dir_or_file
    if os.path.isdir(base):
        path = os.path.join(base, "manifest.json")
    else:
        path = os.path.splitext(base)[0] + ".manifest.json"
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_clock_sec": round(time.monotonic() - t0, 3),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# config files ---------------------------------------------------------------

_REG_KEYS = {f.name for f in dataclasses.fields(RegularizerConfig)}
_CFG_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"reg"}


def parse_config_file(path):
    """Plain `key = value` lines; `#` comments; unknown keys rejected."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CFG_KEYS | _REG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = val
    return values


def build_train_config(file_values, overrides):
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    reg_kwargs, cfg_kwargs = {}, {}
    hints = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    hints.update({f.name: f.type for f in dataclasses.fields(RegularizerConfig)})
    for key, val in merged.items():
        target = reg_kwargs if key in _REG_KEYS else cfg_kwargs
        if isinstance(val, str):
            hint = str(hints.get(key, "str"))
            try:
                if "int" in hint:
                    val = int(val)
                elif "float" in hint:
                    val = float(val)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        target[key] = val
    return TrainConfig(reg=RegularizerConfig(**reg_kwargs), **cfg_kwargs)


def _eval_threads():
    raw = os.environ.get("BINGAN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"BINGAN_THREADS must be an integer, got {raw!r}")


# subcommands ---------------------------------------------------------------

def cmd_import(args):
    t0 = time.monotonic()
    inputs = []
    if args.kind == "image":
        images, labels = [], []
        from .raster import read_pnm

        with open(args.labels) as fh:
            rows = list(csv.reader(fh))
        if rows and rows[0][:2] == ["file", "label"]:
            rows = rows[1:]
        for row in rows:
            if len(row) < 2:
                raise DataError(f"{args.labels}: need `file,label` rows")
            path = os.path.join(args.in_dir, row[0])
            img = read_pnm(path)
            inputs.append(path)
            img = img[None, :, :] if img.ndim == 2 else img.transpose(2, 0, 1)
            images.append(img)
            labels.append(int(row[1]))
        if not images:
            raise DataError(f"{args.labels}: no rows")
        ds = D.ImageSet(np.stack(images), np.array(labels), split=args.split)
    else:
        from .raster import read_pnm

        pa, pb, match = [], [], []
        with open(args.labels) as fh:
            rows = list(csv.reader(fh))
        if rows and rows[0][:3] == ["file_a", "file_b", "match"]:
            rows = rows[1:]
        for row in rows:
            if len(row) < 3:
                raise DataError(f"{args.labels}: need `file_a,file_b,match` rows")
            for target, name in ((pa, row[0]), (pb, row[1])):
                path = os.path.join(args.in_dir, name)
                img = read_pnm(path)
                if img.ndim != 2:
                    raise DataError(f"{path}: patch pairs must be grayscale")
                inputs.append(path)
                target.append(img[None])
            match.append(row[2].strip() in ("1", "true", "True"))
        if not pa:
            raise DataError(f"{args.labels}: no rows")
        ds = D.PatchPairSet(np.stack(pa), np.stack(pb), np.array(match))
    D.save_container(ds, args.out)
    write_manifest(args.out, "import", {"kind": args.kind}, None,
                   inputs + [args.labels], [args.out], t0)
    print(f"wrote {args.out} ({len(ds)} examples)")
    return 0


def cmd_synth(args):
    t0 = time.monotonic()
    if args.task == "retrieval":
        ds = D.synth_toy_retrieval(args.seed, n_per_class=args.n_per_class,
                                   n_classes=args.classes, hw=args.hw,
                                   channels=args.channels, split=args.split)
    else:
        ds = D.synth_toy_pairs(args.seed, n_pairs=args.n_pairs, hw=args.hw,
                               jitter=args.jitter)
    D.save_container(ds, args.out)
    write_manifest(args.out, "synth", vars(args) | {"func": None}, args.seed,
                   [], [args.out], t0)
    print(f"wrote {args.out} ({len(ds)} examples)")
    return 0


def cmd_train(args):
    t0 = time.monotonic()
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {"task": args.task, "code_bits": args.bits, "seed": args.seed,
                 "epochs": args.epochs}
    cfg = build_train_config(file_values, overrides)
    dataset = D.load_container(args.data)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.bgck")
    log = []

    def progress(step, total, bd):
        if args.verbose and (step % 25 == 0 or step == total):
            print(f"step {step}/{total}  l_total={bd.l_total:.4f}  l_g={bd.l_g:.4f}")

    train(cfg, dataset, log=log, checkpoint_path=ckpt_path,
          checkpoint_every=args.checkpoint_every, progress=progress)
    log_path = os.path.join(args.out, "losses.csv")
    _, fig = R.write_loss_log(log_path, log)
    outputs = [ckpt_path, log_path] + ([fig] if fig else [])
    write_manifest(args.out, "train", dataclasses.asdict(cfg), cfg.seed,
                   [args.data] + ([args.config] if args.config else []), outputs, t0)
    print(f"trained {len(log)} steps; checkpoint at {ckpt_path}")
    return 0


def cmd_extract(args):
    t0 = time.monotonic()
    ckpt = Checkpoint.load(args.ckpt)
    _, disc, _, _ = ckpt.restore()
    dataset = D.load_container(args.data)
    codes, labels = extract_codes(disc, dataset)
    Q.save_descriptors(codes, args.out, labels=labels)
    write_manifest(args.out, "extract", {"ckpt": args.ckpt}, None,
                   [args.ckpt, args.data], [args.out], t0)
    print(f"wrote {args.out} ({codes.n_rows} codes x {codes.n_bits} bits)")
    return 0


def cmd_eval_retrieval(args):
    t0 = time.monotonic()
    queries, qlabels = Q.load_descriptors(args.queries)
    db, dlabels = Q.load_descriptors(args.db)
    if qlabels is None or dlabels is None:
        raise DataError("retrieval evaluation needs labeled descriptor files")
    report = E.map_retrieval(queries, qlabels, db, dlabels, k=args.k,
                             n_threads=_eval_threads())
    out = args.out or "retrieval_report.csv"
    per_query = os.path.splitext(out)[0] + "_per_query.csv" if args.per_query else None
    _, fig = R.write_retrieval_report(out, report, per_query_path=per_query)
    write_manifest(out, "eval-retrieval", {"k": args.k}, None,
                   [args.queries, args.db],
                   [out, fig] + ([per_query] if per_query else []), t0)
    print(f"mAP@{args.k} = {report.map_at_k:.4f} over {len(report.per_query_ap)} queries")
    return 0


def cmd_eval_matching(args):
    t0 = time.monotonic()
    ckpt = Checkpoint.load(args.ckpt)
    _, disc, _, _ = ckpt.restore()
    pairs = D.load_container(args.pairs)
    if not isinstance(pairs, D.PatchPairSet):
        raise DataError(f"{args.pairs} is not a patch-pair container")
    report = E.evaluate_matching(disc, pairs, tpr_target=args.tpr)
    out = args.out or "matching_report.csv"
    _, fig = R.write_matching_report(out, report)
    write_manifest(out, "eval-matching", {"tpr_target": args.tpr}, None,
                   [args.ckpt, args.pairs], [out, fig], t0)
    print(f"FPR@{args.tpr:.0%}TPR = {report.fpr_at_95:.4f} "
          f"(threshold {report.threshold})")
    return 0


def cmd_ablate(args):
    t0 = time.monotonic()
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = build_train_config(file_values, {"task": "matching", "seed": args.seed,
                                           "epochs": args.epochs})
    dataset = D.load_container(args.data)
    if not isinstance(dataset, D.PatchPairSet):
        raise DataError(f"{args.data} is not a patch-pair container")
    os.makedirs(args.out, exist_ok=True)

    def progress(step, total, bd):
        if args.verbose and step % 25 == 0:
            print(f"  step {step}/{total}  l_total={bd.l_total:.4f}")

    results = E.run_ablation(dataset, cfg, progress=progress)
    grid_path = os.path.join(args.out, "ablation.csv")
    _, fig = R.write_ablation_report(grid_path, results)
    outputs = [grid_path, fig]
    for r in results:
        tag = f"dmr{r['lambda_dmr']:g}_bre{r['lambda_bre']:g}"
        lp, lf = R.write_loss_log(os.path.join(args.out, f"losses_{tag}.csv"), r["log"])
        outputs += [lp] + ([lf] if lf else [])
    write_manifest(args.out, "ablate", dataclasses.asdict(cfg), cfg.seed,
                   [args.data] + ([args.config] if args.config else []), outputs, t0)
    for r in results:
        print(f"lambda_dmr={r['lambda_dmr']:<5g} lambda_bre={r['lambda_bre']:<5g} "
              f"FPR@95%TPR = {r['report'].fpr_at_95:.4f}")
    return 0


def cmd_sample(args):
    t0 = time.monotonic()
    from .raster import tile_grid, write_pnm

    ckpt = Checkpoint.load(args.ckpt)
    cfg = ckpt.config_obj()
    gen, _, _, _ = ckpt.restore()
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0xF1]))
    z = rng.uniform(-1.0, 1.0, size=(args.n, cfg.z_dim)).astype(cfg.np_dtype)
    from .tensor import Tensor

    pixels = gen.forward(Tensor(z, dtype=cfg.np_dtype))[0].data
    raster = np.clip(np.round((pixels + 1.0) * 127.5), 0, 255).astype(np.uint8)
    grid = tile_grid(raster)
    write_pnm(args.out, grid)
    write_manifest(args.out, "sample", {"n": args.n}, args.seed,
                   [args.ckpt], [args.out], t0)
    print(f"wrote {args.out} ({args.n} samples)")
    return 0


def cmd_selfcheck(args):
    from .selfcheck import run_all

    results = run_all(points_per_op=args.points)
    ok = True
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name:30s} {detail}")
        ok &= passed
    if not ok:
        print("selfcheck: FAILED", file=sys.stderr)
        return 5
    print(f"selfcheck: all {len(results)} checks passed")
    return 0


# parser ---------------------------------------------------------------

def make_parser():
    p = argparse.ArgumentParser(
        prog="bingan",
        description="Train a regularized GAN and evaluate its binary image descriptors.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("import", help="convert PNM rasters + CSV into a BGDS container")
    s.add_argument("--kind", choices=("image", "pairs"), required=True)
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--labels", required=True, help="CSV: file,label or file_a,file_b,match")
    s.add_argument("--out", required=True)
    s.add_argument("--split", choices=("train", "test"), default="train")
    s.set_defaults(func=cmd_import)

    s = sub.add_parser("synth", help="generate a toy dataset")
    s.add_argument("--task", choices=("retrieval", "pairs"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--hw", type=int, default=16)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--n-per-class", type=int, default=500)
    s.add_argument("--channels", type=int, default=3)
    s.add_argument("--n-pairs", type=int, default=1000)
    s.add_argument("--jitter", type=int, default=2)
    s.add_argument("--split", choices=("train", "test"), default="train")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a model, write checkpoint + loss log")
    s.add_argument("--data", required=True)
    s.add_argument("--task", choices=("retrieval", "matching", "toy"))
    s.add_argument("--bits", type=int, dest="bits")
    s.add_argument("--config", help="plain key = value config file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("extract", help="extract binary descriptors to a BGBD file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("eval-retrieval", help="mAP of top-k Hamming neighbors")
    s.add_argument("--queries", required=True)
    s.add_argument("--db", required=True)
    s.add_argument("--k", type=int, default=1000)
    s.add_argument("--out", help="report CSV path (figure written alongside)")
    s.add_argument("--per-query", action="store_true", help="dump per-query APs")
    s.set_defaults(func=cmd_eval_retrieval)

    s = sub.add_parser("eval-matching", help="FPR at target TPR on patch pairs")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--tpr", type=float, default=0.95)
    s.add_argument("--out", help="report CSV path (figure written alongside)")
    s.set_defaults(func=cmd_eval_matching)

    s = sub.add_parser("ablate", help="train the 4-way lambda grid and compare")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sample", help="write a PGM/PPM grid of generator samples")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("selfcheck", help="run gradient checks and oracle suites")
    s.add_argument("--points", type=int, default=3, help="random points per gradient check")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BinganError as exc:
        print(f"{exc.prefix}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
