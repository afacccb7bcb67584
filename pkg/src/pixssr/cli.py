"""``pixssr`` command line: synth | train | eval | infer | sweep."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import train as driver
from .config import RunConfig

log = logging.getLogger("pixssr")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_text("")
    overrides = {}
    if getattr(args, "spectra_model", None):
        overrides["spectra_model"] = args.spectra_model
    if getattr(args, "steps", None):
        overrides["steps"] = args.steps
    return cfg.with_overrides(**overrides) if overrides else cfg


def _data_dir(args, cfg: RunConfig) -> Path:
    return Path(args.data or cfg.data_dir)


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg.data_dir)
    manifest = driver.synthesize(cfg, out, force=args.force)
    n_train = len(manifest.paths("train"))
    n_val = len(manifest.paths("val"))
    print(f"wrote {n_train} train + {n_val} val cubes to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg.out_dir)
    echo = None if args.quiet else print
    res = driver.train(cfg, _data_dir(args, cfg), out, echo=echo)
    sm = res.smoothed(cfg.smoothing)
    print(f"checkpoint={res.checkpoint} smoothed_loss={sm[-1]:.6f}")
    return 0


def _print_report(report: dict, json_path) -> None:
    print(driver.report_lines(report))
    if json_path:
        driver.dump_report(report, json_path)


def cmd_eval(args) -> int:
    cfg = _config(args)
    data = _data_dir(args, cfg)
    # without --config the checkpoint's own config is authoritative
    check = cfg if args.config else None
    if args.omegas:
        sweep_dir = Path(args.sweep_dir or cfg.out_dir)
        summary = {}
        for omega in _floats(args.omegas):
            runs = sorted(sweep_dir.glob(f"*_omega={omega:g}_seed=*/{driver.CHECKPOINT_NAME}"))
            if not runs:
                raise FileNotFoundError(f"no checkpoints for omega={omega:g} under {sweep_dir}")
            reps = [driver.evaluate_checkpoint(p, data, args.split, check, args.allow_mismatch)["aggregate"]
                    for p in runs]
            agg = {k: float(np.mean([r[k] for r in reps])) for k in reps[0]}
            summary[f"{omega:g}"] = agg
            print(f"omega={omega:g} " + " ".join(f"{k}={v:.6f}" for k, v in agg.items()))
        if args.report:
            Path(args.report).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return 0
    if not args.checkpoint:
        raise ValueError("eval needs --checkpoint (or --omegas with --sweep-dir)")
    report = driver.evaluate_checkpoint(args.checkpoint, data, args.split, check, args.allow_mismatch)
    _print_report(report, args.report)
    return 0


def cmd_infer(args) -> int:
    out = Path(args.out)
    emap = Path(args.error_map) if args.error_map else out.with_name(out.stem + "_error.hsic")
    info = driver.infer_file(args.checkpoint, args.input, out, args.ref, emap if args.ref else None)
    print(f"wrote {out} shape={tuple(info['shape'])}")
    if args.ref:
        print(f"wrote {emap} rmse={info['rmse']:.9f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg.out_dir)
    models = args.spectra_models.split(",") if args.spectra_models else None
    rows = driver.sweep(cfg, _data_dir(args, cfg), out, _floats(args.omegas), _ints(args.seeds),
                        args.split, models, echo=None if args.quiet else print)
    for (model, omega), agg in sorted(driver.aggregate_sweep(rows).items()):
        print(f"spectra_model={model} omega={omega:g} " + " ".join(f"{k}={v:.6f}" for k, v in agg.items()))
    if args.report:
        Path(args.report).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pixssr", description="Pixel-level spectral super-resolution toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat 'key = value' config file")
        return sp

    sp = common(sub.add_parser("synth", help="write a synthetic dataset"))
    sp.add_argument("--out", help="dataset directory (default: data_dir from config)")
    sp.add_argument("--force", action="store_true", help="overwrite a non-empty directory")
    sp.set_defaults(func=cmd_synth)

    sp = common(sub.add_parser("train", help="train a model"))
    sp.add_argument("--data")
    sp.add_argument("--out")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--spectra-model", choices=("gamma", "gaussian"))
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    sp.add_argument("--checkpoint")
    sp.add_argument("--data")
    sp.add_argument("--split", default="val")
    sp.add_argument("--allow-mismatch", action="store_true")
    sp.add_argument("--report", help="write the JSON report here")
    sp.add_argument("--omegas", help="comma list; evaluate per-omega checkpoints from a sweep")
    sp.add_argument("--sweep-dir")
    sp.add_argument("--spectra-model", choices=("gamma", "gaussian"))
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("infer", help="reconstruct a cube from an RGB cube file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True, help="3-band cube file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ref", help="ground-truth cube; enables the error map")
    sp.add_argument("--error-map")
    sp.set_defaults(func=cmd_infer)

    sp = common(sub.add_parser("sweep", help="train+eval one model per omega and seed"))
    sp.add_argument("--data")
    sp.add_argument("--out")
    sp.add_argument("--omegas", default="0.0001,0.01,0.1")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--spectra-models", help="comma list, e.g. gamma,gaussian")
    sp.add_argument("--spectra-model", choices=("gamma", "gaussian"))
    sp.add_argument("--steps", type=int)
    sp.add_argument("--split", default="val")
    sp.add_argument("--report")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"pixssr: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
