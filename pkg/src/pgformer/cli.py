"""Command-line entry points: train, predict, eval, gradcheck, ablate, synth.

Run configs are flat YAML mappings. Keys are the fields of
:class:`PGformerConfig`, :class:`TrainConfig` and :class:`RunConfig`; ``seed``
sets the model and training seeds together and unknown keys are rejected.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .config import PGformerConfig
from .data import (ParseError, SyntheticConfig, load_scene_file, make_windows, save_scene_file,
                   split, synth_coupled, window_arrays)
from .metrics import DEFAULT_HORIZONS, MetricError, MetricReport, evaluate, horizon_frames
from .model import PGformer, parameter_groups
from .numerics import check_gradients, no_grad
from .pose import FormatError, Scene
from .training import (TrainConfig, evaluate_loss, format_loss_table, total_loss, train,
                       write_loss_records)
from .xqa import ConfigError

GRAD_TOLERANCE = 1e-5
GRAD_STEP_FLOAT64 = 1e-6
GRAD_STEP_EXTENDED = 1e-5   # roundoff and h^2 truncation balance here in long double

VARIANTS = {
    "bt": dict(use_xqa=False, use_gravity_loss=False),
    "bt+g": dict(use_xqa=False, use_gravity_loss=True),
    "xqa": dict(use_xqa=True, use_proxy=False, use_gravity_loss=False),
    "xqa+p": dict(use_xqa=True, use_proxy=True, proxy_mode="bilinear", use_gravity_loss=False),
    "xqa+p+g": dict(use_xqa=True, use_proxy=True, proxy_mode="bilinear", use_gravity_loss=True),
    "no_dct": dict(use_xqa=True, use_proxy=True, proxy_mode="bilinear", use_gravity_loss=True,
                   use_dct=False),
    "gate_mul": dict(use_xqa=True, use_proxy=True, proxy_mode="gate_multiply", use_gravity_loss=True),
    "gate_add": dict(use_xqa=True, use_proxy=True, proxy_mode="gate_add", use_gravity_loss=True),
}


class UsageError(Exception):
    """Bad flags, config or paths (exit code 2)."""


# ----------------------------------------------------------------------
# run configuration
# ----------------------------------------------------------------------
@dataclass
class RunConfig:
    data: str | None = None           # MotionFile with training (or all) scenes
    test_data: str | None = None      # optional MotionFile; otherwise ``split`` carves one out
    out: str = "runs"
    seeds: list[int] = field(default_factory=lambda: [0])
    split_mode: str = "common"
    split_ratio: float = 0.8
    stride: int = 1                   # training window stride
    eval_stride: int = 5
    horizons: list[float] = field(default_factory=lambda: list(DEFAULT_HORIZONS))
    max_horizon: float = 1.0          # seconds
    metric: str = "both"
    variants: list[str] = field(default_factory=lambda: ["bt", "xqa", "xqa+p", "xqa+p+g"])
    model: PGformerConfig = field(default_factory=PGformerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if self.split_mode not in ("common", "unseen"):
            raise ConfigError(f"split_mode must be common or unseen, got {self.split_mode!r}")
        if self.metric not in ("jme", "ame", "both"):
            raise ConfigError(f"metric must be jme, ame or both, got {self.metric!r}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if self.stride < 1 or self.eval_stride < 1:
            raise ConfigError("stride and eval_stride must be >= 1")
        check_horizons(self.horizons, self.max_horizon)
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants {unknown}; valid names: {', '.join(VARIANTS)}")


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"model", "train"}
_MODEL_KEYS = {f.name for f in fields(PGformerConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def run_config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a flat key/value mapping")
    unknown = sorted(set(d) - _RUN_KEYS - _MODEL_KEYS - _TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    run_kw = {k: v for k, v in d.items() if k in _RUN_KEYS}
    model_kw = {k: v for k, v in d.items() if k in _MODEL_KEYS and k != "seed"}
    train_kw = {k: v for k, v in d.items() if k in _TRAIN_KEYS and k != "seed"}
    if "seed" in d:
        run_kw["seeds"] = [int(d["seed"])]
    try:
        cfg = RunConfig(**run_kw, model=PGformerConfig(**model_kw), train=TrainConfig(**train_kw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: unreadable YAML: {exc}") from None
    return run_config_from_dict(raw)


def check_horizons(horizons, max_horizon: float) -> list[float]:
    hs = [float(h) for h in horizons]
    if not hs or any(h <= 0 for h in hs):
        raise ConfigError(f"horizons must be positive seconds, got {hs}")
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ConfigError(f"horizons must be strictly increasing, got {hs}")
    if hs[-1] > max_horizon + 1e-12:
        raise ConfigError(f"horizon {hs[-1]}s exceeds the --max-horizon cap of {max_horizon}s")
    return hs


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    """Command-line flags override config-file values."""
    model_kw = {}
    if getattr(args, "no_dct", False):
        model_kw["use_dct"] = False
    if getattr(args, "no_xqa", False):
        model_kw["use_xqa"] = False
    if getattr(args, "no_proxy", False):
        model_kw["use_proxy"] = False
    if getattr(args, "proxy_mode", None):
        model_kw["proxy_mode"] = args.proxy_mode
    if model_kw:
        cfg.model = cfg.model.replace(**model_kw)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "seeds", None):
        cfg.seeds = _int_list(args.seeds)
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "variants", None):
        cfg.variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if getattr(args, "max_horizon", None) is not None:
        cfg.max_horizon = args.max_horizon
    if getattr(args, "horizons", None):
        cfg.horizons = _float_list(args.horizons)
    if getattr(args, "metric", None):
        cfg.metric = args.metric
    cfg.validate()
    return cfg


# ----------------------------------------------------------------------
# data plumbing
# ----------------------------------------------------------------------
def _load(path) -> tuple[list[Scene], object]:
    if path is None:
        raise UsageError("no data path given (set 'data' in the config or pass --data)")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"data file not found: {p}")
    return load_scene_file(p)


def _check_skeleton(model_cfg: PGformerConfig, scenes: list[Scene]) -> None:
    for sc in scenes:
        if sc.n_joints != model_cfg.J:
            raise UsageError(f"skeleton mismatch: model expects J={model_cfg.J}, "
                             f"data scene {sc.name!r} has J={sc.n_joints}")


def _train_test(cfg: RunConfig, seed: int) -> tuple[list[Scene], list[Scene]]:
    scenes, _ = _load(cfg.data)
    if cfg.test_data:
        test, _ = _load(cfg.test_data)
        train_set = scenes
    elif len(scenes) >= 2:
        train_set, test = split(scenes, cfg.split_mode, cfg.split_ratio, seed=seed)
    else:
        train_set, test = scenes, []
    _check_skeleton(cfg.model, train_set + test)
    return train_set, test


def _model_for(cfg: RunConfig, seed: int, **overrides) -> tuple[PGformer, TrainConfig]:
    model_cfg = cfg.model.replace(seed=seed, **overrides)
    return PGformer(model_cfg), dataclasses.replace(cfg.train, seed=seed)


def _windows(scenes, model_cfg: PGformerConfig, stride: int):
    H, F = window_arrays(scenes, model_cfg.T, model_cfg.K, stride)
    return H, F


def evaluate_model(model: PGformer, scenes: list[Scene], horizons, metric: str = "both",
                   stride: int = 5, predictor: str = "model") -> tuple[MetricReport, dict]:
    """Metrics over sliding test windows, overall and per action.

    Each window supplies T history frames and enough future frames for the
    largest horizon; the model runs recursively when that exceeds K.
    ``predictor`` may also be ``ground_truth`` or ``zero_velocity`` baselines.
    """
    cfg = model.cfg if model is not None else None
    T = cfg.T if cfg is not None else 1
    if not scenes:
        raise MetricError("no evaluation scenes")
    fps = scenes[0].fps
    n_future = horizon_frames(horizons, fps)[-1]
    preds, gts, actions = [], [], []
    for sc in scenes:
        for hist, fut in make_windows(sc, T, n_future, stride):
            if predictor == "ground_truth":
                pred = fut
            elif predictor == "zero_velocity":
                pred = np.repeat(hist[:, -1:], n_future, axis=1)
            else:
                pred = model.predict_recursive(sc.with_poses(hist), n_future).poses
            preds.append(pred)
            gts.append(fut)
            actions.append(sc.action or "all")
    if not preds:
        raise MetricError(f"no scene is long enough for T={T} plus {n_future} future frames")
    skeleton = scenes[0].skeleton
    overall = evaluate(preds, gts, skeleton, horizons, fps, metric)
    per_action = {}
    for a in sorted(set(actions)):
        idx = [i for i, b in enumerate(actions) if b == a]
        per_action[a] = evaluate([preds[i] for i in idx], [gts[i] for i in idx], skeleton, horizons,
                                 fps, metric)
    return overall, per_action


def isolation_check(model: PGformer, seed: int = 0) -> float:
    """Largest change in person 0's output when person 1's history is perturbed."""
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    hist = rng.normal(0.0, 100.0, size=(2, 1, cfg.T, cfg.J, 3))
    moved = hist.copy()
    moved[1] += rng.normal(0.0, 100.0, size=moved[1].shape)
    with no_grad():
        a = model(hist).data[0]
        b = model(moved).data[0]
    return float(np.max(np.abs(a - b)))


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    if args.data:
        cfg.data = args.data
    seed = cfg.seeds[0]
    train_set, test = _train_test(cfg, seed)
    model, tcfg = _model_for(cfg, seed)
    H, F = _windows(train_set, model.cfg, cfg.stride)
    if H.shape[0] == 0:
        raise UsageError(f"no training windows: scenes shorter than T+K={model.cfg.T + model.cfg.K}")
    val = _windows(test, model.cfg, cfg.model.K) if test else (np.zeros(0), None)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    best = {"value": math.inf, "epoch": 0}

    def progress(row):
        score = evaluate_loss(val, model) if val[0].shape[0] else row["total"]
        row["val_mpjpe"] = score if val[0].shape[0] else None
        if score < best["value"]:
            best.update(value=score, epoch=row["epoch"])
            model.save(out / "best.ckpt", {"epoch": row["epoch"], "train_config": tcfg.to_dict()})
        print(f"epoch {row['epoch']:>3d}  lr {row['lr']:.2e}  total {row['total']:.3f}  "
              f"mpjpe {row['mpjpe']:.2f}", flush=True)

    t0 = time.time()
    result = train((H, F), model, tcfg, progress)
    model.save(out / "final.ckpt", {"epoch": tcfg.epochs, "train_config": tcfg.to_dict()})
    (out / "loss_log.txt").write_text(format_loss_table(result.log) + "\n")
    write_loss_records(out / "loss_log.jsonl", result.log)
    (out / "run_config.json").write_text(json.dumps(
        {**{k: getattr(cfg, k) for k in sorted(_RUN_KEYS)}, "model": cfg.model.to_dict(),
         "train": tcfg.to_dict()}, indent=2))
    print(format_loss_table(result.log))
    print(f"trained {result.steps} steps in {time.time() - t0:.1f}s; best epoch {best['epoch']}; "
          f"checkpoints in {out}")
    return 0


def _load_checkpoint(path) -> PGformer:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint not found: {p}")
    model, _ = PGformer.load(p)
    return model


def cmd_predict(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    scenes, skeleton = _load(args.data)
    _check_skeleton(model.cfg, scenes)
    frames = args.frames or model.cfg.K
    outputs = []
    for sc in scenes:
        if sc.n_frames < model.cfg.T:
            raise UsageError(f"scene {sc.name!r} has {sc.n_frames} frames; the model needs T={model.cfg.T}")
        pred = model.predict_recursive(sc, frames)
        outputs.append(Scene(pred.poses, fps=sc.fps, name=sc.name, action=sc.action, skeleton=skeleton))
    save_scene_file(args.out, outputs, skeleton)
    print(f"wrote {len(outputs)} predicted sequences of {frames} frames to {args.out}")
    return 0


def cmd_eval(args) -> int:
    horizons = check_horizons(_float_list(args.horizons) if args.horizons else DEFAULT_HORIZONS,
                              args.max_horizon)
    model = _load_checkpoint(args.checkpoint) if args.checkpoint else None
    if model is None and args.predictor == "model":
        raise UsageError("eval needs --checkpoint unless --predictor is a baseline")
    scenes, skeleton = _load(args.data)
    if model is not None:
        _check_skeleton(model.cfg, scenes)
    overall, per_action = evaluate_model(model, scenes, horizons, args.metric, args.stride,
                                         args.predictor)
    for name, rep in per_action.items():
        print(rep.table(f"[{name}] ({rep.count} windows)"))
    print(overall.table(f"[average] ({overall.count} windows)"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [r for a, rep in per_action.items() for r in rep.records(action=a)]
        rows += overall.records(action="average")
        (out / "metrics.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
        (out / "metrics.txt").write_text(
            "\n\n".join([rep.table(f"[{a}]") for a, rep in per_action.items()]
                        + [overall.table("[average]")]) + "\n")
        (out / "per_joint.csv").write_text(overall.per_joint_csv(skeleton.joint_names))
    return 0


def gradcheck_report(size: str = "tiny", seed: int = 0, extended: bool = True,
                     max_entries: int | None = None, h: float | None = None) -> dict[str, float]:
    """Max relative error per parameter group for the full training loss of a fresh model.

    ``max_entries`` probes at most that many entries of each parameter (default: all).
    """
    if size != "tiny":
        raise UsageError(f"unknown gradcheck size {size!r}; only 'tiny' is defined")
    cfg = PGformerConfig.tiny(seed=seed)
    model = PGformer(cfg)
    rng = np.random.default_rng(seed + 1)
    hist = rng.normal(0.0, 300.0, size=(2, 1, cfg.T, cfg.J, 3))
    fut = rng.normal(0.0, 300.0, size=(2, 1, cfg.K, cfg.J, 3))
    # non-zero gravity logits so the softmax Jacobian is exercised away from uniform
    for g in model.gravity:
        g.w.data[...] = rng.normal(0.0, 0.5, size=g.w.shape)
    tcfg = TrainConfig(leader_weight=1.0, lambda_l=1.0, lambda_f=1.0)

    def loss():
        return total_loss(model(hist), fut, 0, tcfg, model.gravity)[0]

    params = dict(model.named_parameters())
    if h is None:
        h = GRAD_STEP_EXTENDED if extended else GRAD_STEP_FLOAT64
    errors = check_gradients(loss, params, h=h, max_entries=max_entries, seed=seed,
                              extended=extended)
    groups = parameter_groups(model)
    return {g: max(errors[n] for n in names) for g, names in groups.items()}


def cmd_gradcheck(args) -> int:
    t0 = time.time()
    report = gradcheck_report(args.size, args.seed, extended=args.precision == "extended",
                              max_entries=args.max_entries)
    worst = max(report.values())
    for group, err in report.items():
        status = "ok" if err < GRAD_TOLERANCE else "FAIL"
        print(f"{group:<16} max rel err {err:.3e}  {status}")
    print(f"max relative error {worst:.3e} (tolerance {GRAD_TOLERANCE:g}) in {time.time() - t0:.1f}s")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    return 0 if worst < GRAD_TOLERANCE else 1


def cmd_ablate(args) -> int:
    cfg = _apply_flags(load_run_config(args.config), args)
    if args.data:
        cfg.data = args.data
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = []
    for variant in cfg.variants:
        for seed in cfg.seeds:
            train_set, test = _train_test(cfg, seed)
            model, tcfg = _model_for(cfg, seed, **VARIANTS[variant])
            H, F = _windows(train_set, model.cfg, cfg.stride)
            if H.shape[0] == 0:
                raise UsageError("no training windows in the data")
            t0 = time.time()
            result = train((H, F), model, tcfg)
            note = ""
            if not model.cfg.use_xqa:
                leak = isolation_check(model, seed)
                if leak != 0.0:
                    raise RuntimeError(f"variant {variant}: cross-person leak {leak:g} without XQA")
                note = "  isolation ok"
            rep, _ = evaluate_model(model, test or train_set, cfg.horizons, cfg.metric, cfg.eval_stride)
            print(f"run variant={variant} seed={seed} steps={result.steps} "
                  f"time={time.time() - t0:.1f}s final_loss={result.log[-1]['total']:.3f}{note}", flush=True)
            for row in rep.records(variant=variant, seed=seed):
                for metric in ("jme", "ame"):
                    if metric in row:
                        curves.append({"horizon": row["horizon"], "metric": metric, "variant": variant,
                                       "seed": seed, "value": row[metric]})
    table = ablation_table(curves, cfg.variants, cfg.horizons, len(cfg.seeds))
    print(table)
    (out / "ablation.txt").write_text(table + "\n")
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["horizon", "metric", "variant", "seed", "value"])
        w.writeheader()
        w.writerows(curves)
    return 0


def ablation_table(curves: list[dict], variants, horizons, n_seeds: int) -> str:
    """One row per variant and metric; cells are mean (± std when several seeds ran)."""
    lines = []
    for metric in ("jme", "ame"):
        rows = [c for c in curves if c["metric"] == metric]
        if not rows:
            continue
        head = f"{metric.upper() + ' (mm)':<12}" + "".join(f"{h:>16.1f}s" for h in horizons)
        if n_seeds >= 2:
            head += "   (mean ± std over seeds)"
        lines.append(head)
        for v in variants:
            cells = []
            for h in horizons:
                vals = np.array([c["value"] for c in rows if c["variant"] == v and c["horizon"] == h])
                if n_seeds >= 2:
                    cells.append(f"{vals.mean():>9.1f} ± {vals.std(ddof=1):<5.1f}")
                else:
                    cells.append(f"{vals.mean():>17.1f}")
            lines.append(f"{v:<12}" + "".join(cells))
        lines.append("")
    return "\n".join(lines).rstrip()


def cmd_synth(args) -> int:
    raw = {}
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        raw = yaml.safe_load(p.read_text()) or {}
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        scfg = SyntheticConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    scenes = synth_coupled(scfg)
    from .pose import synthetic_skeleton
    out = Path(args.out)
    if not out.parent.exists():
        raise UsageError(f"output directory does not exist: {out.parent}")
    save_scene_file(out, scenes, synthetic_skeleton(scfg.J), scfg.fps)
    total = sum(sc.n_frames for sc in scenes)
    print(f"wrote {len(scenes)} sequences, {total} frames in total, to {out}")
    return 0


# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pgformer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--no-dct", action="store_true", help="bypass the temporal DCT/IDCT")
        p.add_argument("--no-xqa", action="store_true", help="drop cross-query attention")
        p.add_argument("--no-proxy", action="store_true", help="XQA without the proxy")
        p.add_argument("--proxy-mode", choices=["bilinear", "gate_mul", "gate_add"])

    p = sub.add_parser("train", help="train on a MotionFile")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="override the config's data path")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="forecast every scene of a MotionFile")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output MotionFile")
    p.add_argument("--frames", type=int, help="frames to predict (default K)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="JME/AME tables for a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=["jme", "ame", "both"], default="both")
    p.add_argument("--horizons", help="comma-separated seconds (default 0.2,0.4,0.6,1.0)")
    p.add_argument("--max-horizon", type=float, default=1.0)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--predictor", choices=["model", "ground_truth", "zero_velocity"], default="model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    p.add_argument("--size", default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=["extended", "float64"], default="extended",
                   help="arithmetic of the finite-difference oracle")
    p.add_argument("--max-entries", type=int, help="probe at most this many entries per parameter")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare model variants")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--variants", help=f"comma-separated from {','.join(VARIANTS)}")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--seed", type=int)
    p.add_argument("--metric", choices=["jme", "ame", "both"])
    p.add_argument("--horizons")
    p.add_argument("--max-horizon", type=float)
    p.add_argument("--out")
    model_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a lag-coupled synthetic MotionFile")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MetricError, FormatError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
