"""Dataset synthesis, the training loop, evaluation and inference drivers."""
from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import tensor as T
from .config import RunConfig
from .data import (DatasetManifest, HsiCube, default_response, project_rgb, read_cube, read_manifest,
                   read_response, synth_cube, write_cube, write_manifest, write_response)
from .network import PixelSSR, build_model
from .objectives import MetricReport, error_map, evaluate, loss_overall, psnr
from .spectra import SPECTRA_MODELS, PointSpectraSet, compose_input, gather_points, make_mask

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
RESPONSE_NAME = "response.csv"
CHECKPOINT_NAME = "model.pssr"
LOG_NAME = "train.log"


class NonFiniteLossError(FloatingPointError):
    pass


def _rng(seed: int, *stream) -> np.random.Generator:
    keys = [int(seed)] + [zlib.crc32(s.encode()) if isinstance(s, str) else int(s) for s in stream]
    return np.random.default_rng(keys)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def synthesize(cfg: RunConfig, out_dir, force: bool = False) -> DatasetManifest:
    out = Path(out_dir)
    if cfg.n_train + cfg.n_val == 0 or cfg.n_train == 0:
        raise ValueError("empty dataset: n_train must be at least 1")
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for split, count in (("train", cfg.n_train), ("val", cfg.n_val)):
        for i in range(count):
            seed = zlib.crc32(f"{split}/{i}".encode()) ^ cfg.seed
            cube = synth_cube(seed, cfg.cube_size, cfg.cube_size, cfg.bands)
            name = f"{split}_{i:03d}.hsic"
            write_cube(out / name, cube)
            entries.append((split, name))
    write_response(out / RESPONSE_NAME, default_response(cfg.bands))
    manifest = DatasetManifest(entries, cfg.seed, cfg.patch_size, (cfg.omega,), out)
    write_manifest(out / MANIFEST_NAME, manifest)
    return manifest


@dataclass
class Dataset:
    cubes: dict[str, list[tuple[str, np.ndarray]]]
    response: np.ndarray

    @property
    def bands(self) -> int:
        return self.response.shape[1]


def load_dataset(data_dir) -> Dataset:
    data_dir = Path(data_dir)
    manifest_path = data_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}; run `pixssr synth` first")
    manifest = read_manifest(manifest_path)
    cubes: dict[str, list] = {}
    for split, rel in manifest.entries:
        cubes.setdefault(split, []).append((rel, read_cube(data_dir / rel).values))
    s = read_response(data_dir / RESPONSE_NAME)
    for split, items in cubes.items():
        for name, v in items:
            if v.shape[0] != s.shape[1]:
                raise ValueError(f"{name} has {v.shape[0]} bands but the response expects {s.shape[1]}")
    return Dataset(cubes, s)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def format_log(step: int, lr: float, parts: dict[str, float]) -> str:
    mant, exp = f"{lr:.2e}".split("e")
    head = f"step={step} lr={mant}e{int(exp)}"
    return head + "".join(f" {k}={parts[k]:.4f}" for k in ("total", "phsi", "rep", "ssim", "p2i"))


def smoothed(losses: list[float], window: int) -> list[float]:
    """Trailing moving average (shorter window at the start)."""
    c = np.cumsum(np.concatenate([[0.0], losses]))
    idx = np.arange(1, len(losses) + 1)
    lo = np.maximum(idx - window, 0)
    return list((c[idx] - c[lo]) / (idx - lo))


@dataclass
class TrainResult:
    model: PixelSSR
    losses: list[float] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    checkpoint: Path | None = None

    def smoothed(self, window: int = 10) -> list[float]:
        return smoothed(self.losses, window)


def sample_patch(cube: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    _, h, w = cube.shape
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds cube {h}x{w}")
    i = int(rng.integers(0, h - size + 1))
    j = int(rng.integers(0, w - size + 1))
    return cube[:, i:i + size, j:j + size]


def training_step(model: PixelSSR, cube: np.ndarray, s: np.ndarray, cfg: RunConfig, rng,
                  field_rng=None) -> tuple[T.Tensor, dict]:
    """Loss for one patch.  ``field_rng`` (default ``rng``) draws the point-spectra field."""
    dtype = model.dtype
    y = cube.astype(dtype)
    x = project_rgb(y, s).astype(dtype)
    b, h, w = y.shape
    field = SPECTRA_MODELS[cfg.spectra_model]((b, h, w), cfg.gamma, field_rng if field_rng is not None else rng)
    mask = make_mask(h, w, cfg.omega, rng)
    points = PointSpectraSet(field, mask, gather_points(y, mask))
    y_gp = compose_input(points, "train")
    xt = T.Tensor(x)
    y_r, prompts = model(xt, T.Tensor(y_gp))
    return loss_overall(y_r, points, xt, prompts.y3, s, cfg.weights, h2r=model.h2r)


def train(cfg: RunConfig, data_dir, out_dir, model: PixelSSR | None = None, echo=None) -> TrainResult:
    data = load_dataset(data_dir)
    cubes = [v for _, v in data.cubes.get("train", [])]
    if not cubes:
        raise ValueError("empty dataset: no training cubes in the manifest")
    if data.bands != cfg.bands:
        raise ValueError(f"band-count mismatch: config has {cfg.bands}, data has {data.bands}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / CHECKPOINT_NAME
    model = model if model is not None else build_model(cfg.model)
    params = model.parameters()
    opt = T.OptimizerState(lr0=cfg.lr0, total_steps=cfg.steps, power=cfg.decay_power,
                           beta1=cfg.adam_beta1, beta2=cfg.adam_beta2)
    rng = _rng(cfg.seed, "train")
    s = data.response
    result = TrainResult(model, checkpoint=ckpt_path)
    with open(out / LOG_NAME, "w", encoding="utf-8") as log:
        for step in range(1, cfg.steps + 1):
            model.zero_grad()
            total = None
            parts_sum: dict[str, float] = {}
            for _ in range(cfg.batch_size):
                idx = int(rng.integers(len(cubes)))
                field_rng = _rng(cfg.seed, "field", idx) if cfg.fixed_field else None
                patch = sample_patch(cubes[idx], cfg.patch_size, rng)
                loss, parts = training_step(model, patch, s, cfg, rng, field_rng)
                total = loss if total is None else total + loss
                for k, v in parts.items():
                    parts_sum[k] = parts_sum.get(k, 0.0) + v / cfg.batch_size
            if not math.isfinite(parts_sum["total"]):
                raise NonFiniteLossError(
                    f"non-finite loss at step {step}; last good checkpoint kept at {ckpt_path}")
            (total / cfg.batch_size).backward()
            lr = T.adam_step(params, opt)
            line = format_log(step, lr, parts_sum)
            log.write(line + "\n")
            if echo is not None:
                echo(line)
            result.losses.append(parts_sum["total"])
            result.lines.append(line)
            if step % cfg.eval_interval == 0 or step == cfg.steps:
                ckpt_io.save(ckpt_path, model, cfg, opt)
    return result


# ---------------------------------------------------------------------------
# evaluation / inference
# ---------------------------------------------------------------------------

def inference_field(shape, cfg: RunConfig, seed: int, index: int) -> np.ndarray:
    """Pure point-spectra field used at test time (no real spectra)."""
    rng = _rng(seed, "eval", index)
    b, h, w = shape
    points = PointSpectraSet(SPECTRA_MODELS[cfg.spectra_model]((b, h, w), cfg.gamma, rng), make_mask(h, w, 0.0, rng))
    return compose_input(points, "infer")


def reconstruct(model: PixelSSR, rgb: np.ndarray, cfg: RunConfig, seed: int, index: int = 0) -> np.ndarray:
    _, h, w = rgb.shape
    y_gp = inference_field((cfg.bands, h, w), cfg, seed, index)
    return model.infer(rgb, y_gp)


def baseline_cube(rgb: np.ndarray, bands: int) -> np.ndarray:
    """Each band set to the per-pixel RGB mean."""
    return np.repeat(rgb.mean(axis=0, keepdims=True), bands, axis=0)


def evaluate_model(model: PixelSSR, cfg: RunConfig, data: Dataset, split: str, seed: int) -> dict:
    items = data.cubes.get(split, [])
    if not items:
        raise ValueError(f"no cubes in split {split!r}")
    if data.bands != cfg.bands:
        raise ValueError(f"band-count mismatch: checkpoint has {cfg.bands} bands, data has {data.bands}")
    per_cube, reports, base = {}, [], []
    for idx, (name, cube) in enumerate(items):
        y = cube.astype(np.float64)
        rgb = project_rgb(y, data.response)
        y_r = reconstruct(model, rgb, cfg, seed, idx)
        rep = evaluate(y, y_r)
        reports.append(rep)
        per_cube[name] = rep.as_dict()
        base.append(psnr(y, baseline_cube(rgb, cfg.bands)))
    agg = {k: float(np.mean([getattr(r, k) for r in reports])) for k in ("rmse", "psnr", "ssim", "sam")}
    return {"split": split, "per_cube": per_cube, "aggregate": agg,
            "baseline_psnr": float(np.mean(base)), "config_hash": cfg.config_hash()}


def evaluate_checkpoint(path, data_dir, split: str = "val", cfg: RunConfig | None = None,
                        allow_mismatch: bool = False) -> dict:
    ckpt = ckpt_io.load(path)
    stored = ckpt.run_config
    if cfg is not None and cfg.config_hash() != ckpt.config_hash and not allow_mismatch:
        raise ValueError(f"config hash {cfg.config_hash()} does not match checkpoint {ckpt.config_hash} "
                         "(use --allow-mismatch)")
    model = ckpt_io.restore_model(ckpt)
    return evaluate_model(model, stored, load_dataset(data_dir), split, ckpt.seed)


def report_lines(report: dict) -> str:
    lines = []
    for name, vals in report["per_cube"].items():
        lines.append(f"{name} " + " ".join(f"{k}={v:.6f}" for k, v in vals.items()))
    agg = report["aggregate"]
    lines.append("aggregate " + MetricReport(**agg).lines().replace("\n", " "))
    lines.append(f"baseline psnr={report['baseline_psnr']:.6f}")
    return "\n".join(lines)


def dump_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def infer_file(checkpoint_path, rgb_path, out_path, ref_path=None, map_path=None) -> dict:
    ckpt = ckpt_io.load(checkpoint_path)
    cfg = ckpt.run_config
    model = ckpt_io.restore_model(ckpt)
    rgb = read_cube(rgb_path).values.astype(np.float64)
    if rgb.shape[0] != 3:
        raise ValueError(f"input must be a 3-band RGB cube, got {rgb.shape[0]} bands")
    y_r = reconstruct(model, rgb, cfg, ckpt.seed)
    write_cube(out_path, HsiCube(y_r))
    info: dict = {"shape": list(y_r.shape)}
    if ref_path is not None:
        ref = read_cube(ref_path).values.astype(np.float64)
        if ref.shape != y_r.shape:
            raise ValueError(f"reference {ref.shape} does not match reconstruction {y_r.shape}")
        emap = error_map(ref, y_r)
        write_cube(map_path, HsiCube(emap[None]))
        info["rmse"] = float(np.sqrt(np.mean((ref - y_r) ** 2)))
        info["error_map"] = emap
    return info


def sweep(cfg: RunConfig, data_dir, out_dir, omegas, seeds, split: str = "val",
          spectra_models=None, echo=None) -> list[dict]:
    """Train and evaluate one model per (spectra model, omega, seed)."""
    rows = []
    for model_name in spectra_models or [cfg.spectra_model]:
        for omega in omegas:
            for seed in seeds:
                run_cfg = cfg.with_overrides(omega=float(omega), seed=int(seed), spectra_model=model_name)
                run_dir = Path(out_dir) / f"{model_name}_omega={omega:g}_seed={seed}"
                res = train(run_cfg, data_dir, run_dir)
                rep = evaluate_checkpoint(res.checkpoint, data_dir, split)
                row = {"spectra_model": model_name, "omega": float(omega), "seed": int(seed), **rep["aggregate"],
                       "baseline_psnr": rep["baseline_psnr"]}
                rows.append(row)
                if echo is not None:
                    echo(" ".join(f"{k}={v}" for k, v in row.items()))
    return rows


def aggregate_sweep(rows: list[dict]) -> dict[tuple[str, float], dict[str, float]]:
    """Mean metrics per (spectra model, omega) over seeds."""
    groups: dict[tuple[str, float], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["spectra_model"], r["omega"]), []).append(r)
    return {k: {m: float(np.mean([r[m] for r in v])) for m in ("rmse", "psnr", "ssim", "sam", "baseline_psnr")}
            for k, v in groups.items()}
