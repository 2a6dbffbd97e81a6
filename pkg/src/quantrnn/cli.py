"""Command-line front door: data generation, training, evaluation, reports.

Configuration precedence is command-line flag > config-file entry >
built-in default. Config files are plain ``key = value`` lines with ``#``
comments; keys match the kebab-case flags. The ``QRNN_DATA_DIR``
environment variable supplies the default data root.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import data as tasks
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigError, DataError, DomainError, ParseError, ShapeError, StateError, TrainingError
from .experiments import run_frames, run_sentiment, run_sum
from .models import load_model
from .quantize import QuantScheme, histogram_csv, quantize, weight_histogram
from .training import TrainConfig, evaluate, rollout_frames

PAIRINGS = {"sum": ("lstm", "gru"), "sentiment": ("lstm", "gru"), "frames": ("convlstm",)}

DEFAULTS = {
    "task": "sum",
    "model": "lstm",
    "scheme": "fp",
    "shape": "normal",
    "hidden": 64,
    "epochs": None,          # resolved per task below
    "batch": 64,
    "seed": 0,
    "lr": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "loss": "bce",
    "grad_clip": None,
    "max_digits": 2,
    "samples": 1000,
    "max_features": 20000,
    "maxlen": 80,
    "embed_dim": 128,
    "train_count": 5000,
    "test_count": 1000,
    "channels": 8,
    "frame_size": 64,
    "frame_count": 15,
    "train_sequences": 24,
    "test_sequences": 8,
    "early_stop_acc": None,
    "timing": "none",
    "hist_bins": 64,
    "data_dir": None,
    "out_dir": "runs/out",
    "train_path": None,
    "test_path": None,
    "checkpoint": None,
    "horizon": 3,
    "bins": 64,
}

TASK_EPOCHS = {"sum": 350, "sentiment": 20, "frames": 50}
TASK_HIDDEN = {"sum": 64, "sentiment": 128, "frames": 8}

_INT_KEYS = {"hidden", "epochs", "batch", "seed", "max_digits", "samples", "max_features",
             "maxlen", "embed_dim", "train_count", "test_count", "channels", "frame_size",
             "frame_count", "train_sequences", "test_sequences", "hist_bins", "horizon", "bins"}
_FLOAT_KEYS = {"lr", "beta1", "beta2", "eps", "grad_clip", "early_stop_acc"}


class UsageError(ValueError):
    pass


def parse_config_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    entries = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _convert(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if value.lower() in ("none", ""):
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_config(cli_args: dict, config_path=None) -> dict:
    """Merge defaults, config file, and explicit flags (flags win)."""
    resolved = dict(DEFAULTS)
    if config_path:
        for key, value in parse_config_file(config_path).items():
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r} in {config_path}")
            resolved[key] = _convert(key, value)
    for key, value in cli_args.items():
        if value is not None:
            resolved[key] = _convert(key, value)
    if resolved["data_dir"] is None:
        resolved["data_dir"] = os.environ.get("QRNN_DATA_DIR", "data")
    task = resolved["task"]
    if task not in PAIRINGS:
        raise UsageError(f"unknown task {task!r}")
    if resolved["model"] not in PAIRINGS[task]:
        raise UsageError(f"task {task!r} supports models {PAIRINGS[task]}, got {resolved['model']!r}")
    if resolved["epochs"] is None:
        resolved["epochs"] = TASK_EPOCHS[task]
    if cli_args.get("hidden") is None and "hidden" not in (parse_config_file(config_path) if config_path else {}):
        resolved["hidden"] = TASK_HIDDEN[task]
    return resolved


def config_lines(resolved: dict) -> list[str]:
    return [f"{k.replace('_', '-')} = {v if v is not None else 'none'}" for k, v in sorted(resolved.items())]


def scheme_from(resolved: dict) -> QuantScheme:
    try:
        return QuantScheme.parse(resolved["scheme"], resolved["shape"])
    except ValueError as exc:
        raise UsageError(f"bad scheme/shape: {exc}") from exc


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(resolved: dict) -> int:
    out = Path(resolved["data_dir"])
    out.mkdir(parents=True, exist_ok=True)
    task, seed = resolved["task"], resolved["seed"]
    if task == "sum":
        for split, n, s in (("train", resolved["samples"], seed), ("test", resolved["samples"] // 5, seed + 10_000)):
            samples = tasks.gen_sum_dataset(n, resolved["max_digits"], rng_seed=s)
            path = out / f"sum_{split}.tsv"
            with open(path, "w", encoding="utf-8") as f:
                for smp in samples:
                    f.write(f"{tasks.decode_ids(smp.input_ids)}\t{tasks.decode_ids(smp.target_ids)}\n")
            print(f"wrote {path} ({n} samples)")
    elif task == "sentiment":
        for split, n, s in (("train", resolved["train_count"], seed), ("test", resolved["test_count"], seed + 10_000)):
            samples = tasks.gen_sentiment_dataset(n, resolved["max_features"], resolved["maxlen"], rng_seed=s)
            path = out / f"sentiment_{split}.txt"
            tasks.save_sentiment(path, samples)
            print(f"wrote {path} ({n} samples)")
    else:
        for split, n, s in (("train", resolved["train_sequences"], seed), ("test", resolved["test_sequences"], seed + 10_000)):
            seqs = tasks.gen_moving_frames(n, rng_seed=s, size=resolved["frame_size"],
                                           n_frames=resolved["frame_count"])
            path = out / f"frames_{split}.qtn"
            save_tensors(path, [("frames", tasks.frames_array(seqs), False)],
                         meta={"kind": "frames", "count": n})
            print(f"wrote {path} ({n} sequences)")
    return 0


def _load_sum_tsv(path, max_digits: int):
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            expr, sep, answer = line.partition("\t")
            if not sep:
                raise ParseError(f"{path}:{lineno}: expected '<expr>\\t<answer>'")
            samples.append(tasks.SumSample(tuple(tasks.encode_text(expr)), tuple(tasks.encode_text(answer))))
    return samples


def cmd_train(resolved: dict) -> int:
    scheme = scheme_from(resolved)
    out = Path(resolved["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    task = resolved["task"]
    log = _epoch_logger()
    if task == "sum":
        model, report, cfg = run_sum(
            scheme, resolved["model"], resolved["hidden"], resolved["max_digits"],
            resolved["samples"], resolved["epochs"], resolved["batch"], resolved["seed"],
            resolved["lr"], resolved["grad_clip"], resolved["early_stop_acc"], log=log)
    elif task == "sentiment":
        train_samples = test_samples = None
        if resolved["train_path"]:
            train_samples = tasks.load_sentiment(_require_file(resolved["train_path"], "training data"))
        if resolved["test_path"]:
            test_samples = tasks.load_sentiment(_require_file(resolved["test_path"], "test data"))
        model, report, cfg = run_sentiment(
            scheme, resolved["model"], resolved["hidden"], resolved["max_features"],
            resolved["maxlen"], resolved["embed_dim"], resolved["epochs"], resolved["batch"],
            resolved["seed"], resolved["lr"], train_samples, test_samples,
            resolved["train_count"], resolved["test_count"], resolved["grad_clip"], log=log)
    else:
        model, report, cfg, _ = run_frames(
            scheme, resolved["channels"], resolved["frame_size"], resolved["train_sequences"],
            resolved["test_sequences"], resolved["epochs"], resolved["batch"], resolved["seed"],
            resolved["lr"], resolved["frame_count"], resolved["grad_clip"], log=log)

    report.write_csv(out / "report.csv", include_timing=resolved["timing"] == "wall",
                     header_comments=config_lines(resolved))
    with open(out / "resolved.cfg", "w", encoding="utf-8") as f:
        f.write("\n".join(config_lines(resolved)) + "\n")
    model.save(out / "model.ckpt", meta={"scheme": scheme.kind.value, "shape": scheme.shape.value,
                                         "task": task, "seed": resolved["seed"]})
    hist_dir = out / "hist"
    hist_dir.mkdir(exist_ok=True)
    for name, rows in report.histograms.items():
        with open(hist_dir / (name.replace(".", "_") + ".csv"), "w", encoding="utf-8") as f:
            f.write(histogram_csv(rows))
    final = report.epochs[-1]
    print(f"final epoch {final.epoch}: train_loss={final.train_loss:.6f} "
          f"train_metric={final.train_metric:.4f} val_metric={final.val_metric}")
    print(f"wrote {out / 'report.csv'}, {out / 'model.ckpt'}")
    return 0


def _epoch_logger():
    def log(rec):
        val = "" if rec.val_metric is None else f" val_loss={rec.val_loss:.6f} val_metric={rec.val_metric:.4f}"
        print(f"epoch {rec.epoch}: loss={rec.train_loss:.6f} metric={rec.train_metric:.4f}{val} "
              f"({rec.seconds:.1f}s)")
    return log


def _eval_data(model, resolved: dict):
    task = model.kind
    seed = resolved["seed"] + 10_000
    if task == "sum":
        if resolved["test_path"]:
            samples = _load_sum_tsv(_require_file(resolved["test_path"], "test data"), resolved["max_digits"])
        else:
            samples = tasks.gen_sum_dataset(resolved["samples"] // 5, resolved["max_digits"], rng_seed=seed)
        return tasks.encode_sum_batch(samples)
    if task == "sentiment":
        if resolved["test_path"]:
            samples = tasks.load_sentiment(_require_file(resolved["test_path"], "test data"))
        else:
            samples = tasks.gen_sentiment_dataset(resolved["test_count"], resolved["max_features"],
                                                  resolved["maxlen"], rng_seed=seed)
        samples = tasks.preprocess(samples, resolved["max_features"], resolved["maxlen"])
        return tasks.encode_sentiment_batch(samples)
    if resolved["test_path"]:
        _, tensors, _ = load_tensors(_require_file(resolved["test_path"], "test data"))
        return tensors["frames"]
    return tasks.frames_array(tasks.gen_moving_frames(resolved["test_sequences"], rng_seed=seed,
                                                      size=resolved["frame_size"],
                                                      n_frames=resolved["frame_count"]))


def _checkpoint_model(resolved: dict):
    if not resolved["checkpoint"]:
        raise UsageError("--checkpoint is required")
    model, meta = load_model(_require_file(resolved["checkpoint"], "checkpoint"))
    scheme = QuantScheme.parse(meta.get("scheme", "fp"), meta.get("shape", "normal"))
    return model, meta, scheme


def cmd_eval(resolved: dict) -> int:
    model, _, scheme = _checkpoint_model(resolved)
    if model.kind == "frames":
        resolved["frame_size"] = model.hw[0]
    cfg = TrainConfig(scheme=scheme, batch_size=resolved["batch"], loss="bce", seed=resolved["seed"])
    data = _eval_data(model, resolved)
    loss, metric = evaluate(model, data, cfg)
    print(f"loss={loss!r}")
    print(f"metric={metric!r}")
    out = Path(resolved["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="utf-8") as f:
        f.write("loss,metric\n")
        f.write(f"{loss!r},{metric!r}\n")
    return 0


def cmd_quant_report(resolved: dict) -> int:
    if not resolved["checkpoint"]:
        raise UsageError("--checkpoint is required")
    meta, tensors, manifest = load_tensors(_require_file(resolved["checkpoint"], "checkpoint"))
    scheme = QuantScheme.parse(meta.get("scheme", "fp"), meta.get("shape", "normal"))
    out = Path(resolved["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for entry in manifest:
        if not entry["quantizable"]:
            continue
        name = entry["name"]
        q = quantize(tensors[name], scheme)
        path = out / (name.replace(".", "_") + ".csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(histogram_csv(weight_histogram(q, resolved["bins"])))
        print(f"wrote {path}")
    return 0


def cmd_rollout(resolved: dict) -> int:
    model, _, scheme = _checkpoint_model(resolved)
    if model.kind != "frames":
        raise UsageError(f"rollout needs a frame-prediction checkpoint, got {model.kind!r}")
    resolved["frame_size"] = model.hw[0]
    seqs = _eval_data(model, resolved)
    cfg = TrainConfig(scheme=scheme, batch_size=resolved["batch"], seed=resolved["seed"])
    context, targets = tasks.split_train_predict(seqs)
    horizon = min(resolved["horizon"], targets.shape[1])
    preds = rollout_frames(model, context, horizon, cfg)
    out = Path(resolved["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows = tasks.per_frame_mse(preds, targets[:, :horizon], first_frame=8)
    with open(out / "per_frame_mse.csv", "w", encoding="utf-8") as f:
        f.write("frame,mse\n")
        for frame, value in rows:
            f.write(f"{frame},{value!r}\n")
    for s in range(min(preds.shape[0], 4)):
        for f_idx in range(horizon):
            tasks.write_pgm(out / f"seq{s}_frame{8 + f_idx}_pred.pgm", preds[s, f_idx])
            tasks.write_pgm(out / f"seq{s}_frame{8 + f_idx}_true.pgm", targets[s, f_idx])
    print(f"wrote {out / 'per_frame_mse.csv'} and PGM frames")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="config file of key = value lines")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, default=None, dest=key, metavar="V",
                       help=f"default: {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantrnn",
                                     description="Quantization-aware training for recurrent networks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        _add_common(p)
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "quant-report": cmd_quant_report,
    "rollout": cmd_rollout,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    try:
        resolved = resolve_config(args, config_path)
        return COMMANDS[command](resolved)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DataError, DomainError, ParseError, ShapeError, StateError, TrainingError) as exc:
        print(f"error: {type(exc).__name__.lower()}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
