"""Command line front end: ``permvec {generate,train,analyze,report}``.

Settings resolve in three layers: preset defaults, then a ``key = value``
config file (``--config``), then explicit flags. Each command writes the
resolved settings to ``config.txt`` beside its outputs.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from permvec.analysis import analyze_embeddings, characterize_raw, config_hash
from permvec.core_math import Rng
from permvec.dataset import SPLIT_NAMES, DatasetConfig, generate_dataset, load_dataset, save_dataset
from permvec.errors import FormatError, InvalidArgumentError, PermVecError, ShapeMismatchError
from permvec.model import load_checkpoint, save_checkpoint
from permvec.training import METRICS, TrainingConfig, TrainingLog, steady_state_stats, train

log = logging.getLogger("permvec")

PRESETS = {
    "desk": {
        "sets": 4000, "validation_sets": 1000, "batch_size": 1024, "steps": 2000,
        "learning_rate": 0.001, "steady_window": (600, 1000), "eval_every": 10,
    },
    "paper": {
        "sets": 40000, "validation_sets": 1000, "batch_size": 5000, "steps": 1200,
        "learning_rate": 0.001, "steady_window": (600, 1000), "eval_every": 10,
    },
}
COMMON_DEFAULTS = {"seed": 0, "alpha": None, "mse_weight": 1.0, "triplet_weight": 1.0, "record_time": True}

_INT_KEYS = {"sets", "validation_sets", "batch_size", "steps", "seed", "eval_every"}
_FLOAT_KEYS = {"learning_rate", "alpha", "mse_weight", "triplet_weight"}
_BOOL_KEYS = {"record_time"}
_KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | {"steady_window", "preset"}


class UsageError(PermVecError):
    pass


def _coerce(key, raw):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return None if raw.lower() in ("", "none") else float(raw)
        if key in _BOOL_KEYS:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if key == "steady_window":
            lo, hi = raw.replace(",", " ").split()
            return (int(lo), int(hi))
        return raw
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _KNOWN_KEYS:
            raise UsageError(f"{path}:{lineno}: unrecognised config line {line!r}")
        out[key] = _coerce(key, value)
    return out


def _format_value(v):
    if isinstance(v, tuple):
        return f"{v[0]},{v[1]}"
    if v is None:
        return "none"
    return str(v).lower() if isinstance(v, bool) else str(v)


def write_config_file(settings, path):
    lines = [f"{k} = {_format_value(v)}" for k, v in sorted(settings.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve(args, keys):
    """Merge preset, config file and explicit flags for the given keys."""
    file_cfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    preset = args.preset or file_cfg.get("preset") or "desk"
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}")
    merged = {**COMMON_DEFAULTS, **PRESETS[preset], **file_cfg}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    merged["preset"] = preset
    return {k: merged[k] for k in list(keys) + ["preset"] if k in merged}


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_generate(args):
    cfg = resolve(args, ["sets", "validation_sets", "seed"])
    out = _out_dir(args.out)
    try:
        splits = generate_dataset(cfg["sets"], Rng(cfg["seed"]), DatasetConfig(validation_sets=cfg["validation_sets"]))
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(splits, out)
    manifest = {
        "seed": cfg["seed"],
        "sets": cfg["sets"],
        "dim": splits.config.dim,
        "group": splits.config.group,
        "splits": {n: {"sets": len(splits.split(n)), "vectors": splits.split(n).n_vectors} for n in SPLIT_NAMES},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_config_file(cfg, out / "config.txt")
    counts = ", ".join(f"{n}={len(splits.split(n))}" for n in SPLIT_NAMES)
    print(f"wrote {out}: sets {counts}")
    return 0


def cmd_train(args):
    keys = ["seed", "alpha", "batch_size", "steps", "learning_rate", "mse_weight", "triplet_weight",
            "eval_every", "steady_window", "record_time"]
    cfg = resolve(args, keys)
    if cfg["alpha"] is not None and not cfg["alpha"] > 0:
        raise UsageError("--alpha must be positive")
    splits = load_dataset(args.data)
    out = _out_dir(args.out)
    tcfg = TrainingConfig(**{k: cfg[k] for k in keys})
    try:
        tcfg.validate()
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    kind = "standard" if tcfg.alpha is None else f"enhanced (alpha={tcfg.alpha})"
    log.info("training %s model for %d steps", kind, tcfg.steps)
    params, tlog = train(splits, tcfg)
    save_checkpoint(params, out / "checkpoint.pvec")
    tlog.to_csv(out / "log.csv")
    write_config_file({**cfg, "data": args.data}, out / "config.txt")
    final = [r for r in tlog.records if r.split == "train"][-1]
    print(f"{kind}: final train mse={final.mse:.6f} triplet={final.triplet:.6f} "
          f"numeric_accuracy={final.numeric_accuracy:.6f}")
    return 0


def cmd_analyze(args):
    if not args.raw and not args.checkpoint:
        raise UsageError("analyze needs --checkpoint or --raw")
    splits = load_dataset(args.data)
    out = _out_dir(args.out)
    settings = {"data": args.data, "checkpoint": None if args.raw else args.checkpoint, "raw": bool(args.raw)}
    provenance = {"checkpoint": settings["checkpoint"], "dataset_seed": splits.seed, "config_hash": config_hash(settings)}
    if args.raw:
        report = characterize_raw(splits, provenance)
        report.write(out / "report.json")
    else:
        if not Path(args.checkpoint).exists():
            raise FileNotFoundError(f"missing checkpoint {args.checkpoint}")
        params = load_checkpoint(args.checkpoint)
        if params.input_dim != splits.validation.dim:
            raise ShapeMismatchError(
                f"checkpoint expects {params.input_dim}-dim inputs, dataset has {splits.validation.dim}")
        report = analyze_embeddings(params, splits, out, provenance)
    write_config_file(settings, out / "config.txt")
    print(f"R95={report.r95:.6f} epsilon={report.epsilon:.6f} verdict={report.verdict}")
    return 0


def _run_name(path):
    p = Path(path)
    return p.parent.name if p.name == "log.csv" and p.parent.name else p.stem


def report_table(logs, names, window, split="train"):
    """Rows of ``(name, {metric: (mean, std)}, {metric: ratio to first run})``."""
    stats = [steady_state_stats(tl, window, split) for tl in logs]
    base = stats[0]
    rows = []
    for name, st in zip(names, stats):
        ratios = {}
        for m in ("mse", "numeric_accuracy"):
            ratios[m] = st[m][0] / base[m][0] if base[m][0] else float("nan")
        ratios["triplet/mse"] = st["triplet"][0] / st["mse"][0] if st["mse"][0] else float("nan")
        rows.append((name, st, ratios))
    return rows


def cmd_report(args):
    logs = [TrainingLog.from_csv(p) for p in args.logs]
    names = [_run_name(p) for p in args.logs]
    window = tuple(args.window) if args.window else PRESETS["paper"]["steady_window"]
    try:
        rows = report_table(logs, names, window, args.split)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc), field="step") from None
    header = ["run"] + [f"{m}_mean" for m in METRICS] + [f"{m}_std" for m in METRICS] + \
             ["mse_ratio", "accuracy_ratio", "triplet_mse_ratio"]
    table = []
    for name, st, ratios in rows:
        table.append([name] + [f"{st[m][0]:.6f}" for m in METRICS] + [f"{st[m][1]:.6f}" for m in METRICS]
                     + [f"{ratios['mse']:.3f}", f"{ratios['numeric_accuracy']:.3f}", f"{ratios['triplet/mse']:.3f}"])
    print(f"steady state over steps [{window[0]}, {window[1]}], split={args.split}; ratios relative to {names[0]}")
    width = max(len(n) for n in names + ["run"])
    print(f"{'run':<{width}}  " + "  ".join(f"{m:>26}" for m in METRICS) + "  mse ratio  acc ratio")
    for name, st, ratios in rows:
        cells = "  ".join(f"{st[m][0]:>14.6f} ± {st[m][1]:<9.6f}" for m in METRICS)
        print(f"{name:<{width}}  {cells}  {ratios['mse']:>9.3f}  {ratios['numeric_accuracy']:>9.3f}")
    if args.out:
        Path(args.out).write_text("\n".join(",".join(r) for r in [header] + table) + "\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="permvec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("generate", help="generate the permutation point-set dataset")
    common(g)
    g.add_argument("--sets", type=int)
    g.add_argument("--validation-sets", dest="validation_sets", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a standard (no --alpha) or enhanced autoencoder")
    common(t)
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--alpha", type=float, help="triplet margin; selects the enhanced model")
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--mse-weight", dest="mse_weight", type=float)
    t.add_argument("--triplet-weight", dest="triplet_weight", type=float)
    t.add_argument("--eval-every", dest="eval_every", type=int)
    t.add_argument("--steady-window", dest="steady_window", type=int, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--no-timing", dest="record_time", action="store_false", default=None,
                   help="write 0 in the seconds column so logs are reproducible byte for byte")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("analyze", help="cluster-separation analysis of the validation split")
    common(a)
    a.add_argument("--data", required=True)
    src = a.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--raw", action="store_true", help="analyse the scaled input vectors themselves")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="steady-state statistics table from training logs")
    r.add_argument("logs", nargs="+")
    r.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--split", default="train", choices=("train", "test"))
    r.add_argument("--out", help="also write the table as CSV")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    if getattr(args, "steady_window", None) is not None:
        args.steady_window = tuple(args.steady_window)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FileNotFoundError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
