"""``piatlab`` command line: train, eval, landscape, compare.

Exit codes: 0 success, 2 invalid input (config, files, layouts, records),
3 numeric abort during training.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import build_datasets, load_config
from .errors import ConfigError, ConsistencyError, FormatError, LayoutError, NumericError
from .landscape import probe, sample_directions
from .models import build_mlp
from .piat import run_piat
from .trainer import Evaluator, evaluate, mean_loss, train_standard

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    """Bad input that maps to exit status 2."""


def _overrides(args):
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        out["output.dir"] = args.out
    return out


def _fresh_dir(path):
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        raise UsageError(f"output directory {path} exists and is not empty")
    return path


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _datasets(cfg):
    try:
        return build_datasets(cfg)
    except (FormatError, ConsistencyError, OSError, ValueError) as exc:
        raise UsageError(f"dataset: {exc}") from exc


def _model_for(ckpt, cfg, train):
    try:
        model, meta = load_checkpoint(ckpt)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from exc
    want = {"kind": "mlp", "input_dim": train.dim, "hidden_widths": list(cfg.model.hidden_widths),
            "n_classes": train.n_classes}
    if model.arch() != want:
        raise LayoutError(f"checkpoint architecture {model.arch()} does not match config {want}")
    return model, meta


def cmd_train(args):
    cfg = load_config(args.config, _overrides(args))
    out = _fresh_dir(cfg.output.dir)
    train, test = _datasets(cfg)
    plan = cfg.plan()
    model = build_mlp(train.dim, cfg.model.hidden_widths, train.n_classes, cfg.seed)
    evaluator = Evaluator(test, cfg.epoch_attacks(), cfg.eval_seed(), cfg.evaluation.batch_size)

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "resolved_config.json", cfg.resolved())
    if cfg.output.snapshots:
        (out / "snapshots").mkdir()
    meta = {"seed": cfg.seed, "epochs": plan.warmup_epochs + plan.adv_epochs}

    with open(out / "metrics.jsonl", "w") as metrics, open(out / "timings.jsonl", "w") as timings:
        def on_record(rec):
            metrics.write(rec.to_json() + "\n")
            metrics.flush()
            timings.write(json.dumps({"epoch": rec.epoch, "wall_seconds": rec.wall_seconds}) + "\n")
            print(f"epoch {rec.epoch:4d} {rec.phase:6s} loss {rec.train_loss:.4f} "
                  f"clean {rec.clean_acc:.4f} "
                  + " ".join(f"{k} {v:.4f}" for k, v in rec.robust_acc.items()), flush=True)

        def on_epoch_end(epoch, m):
            if cfg.output.snapshots:
                save_checkpoint(out / "snapshots" / f"epoch_{epoch + 1:04d}.ckpt", m,
                                {**meta, "epoch": epoch + 1})

        runner = train_standard if plan.lambda_schedule is None else run_piat
        runner(model, train, plan, evaluator=evaluator, on_record=on_record,
               on_epoch_end=on_epoch_end)
    save_checkpoint(out / "final.ckpt", model, meta)
    print(f"wrote {out}")
    return EXIT_OK


def _eval_rows(model, cfg, test):
    seed, bs = cfg.eval_seed(), cfg.evaluation.batch_size
    attacks = cfg.eval_attacks()
    clean, robust = evaluate(model, test, attacks, seed, bs)
    rows = [{"metric": "clean_acc", "value": clean, "attack": None},
            {"metric": "clean_loss", "value": mean_loss(model, test, "clean", seed=seed, batch_size=bs),
             "attack": None},
            {"metric": "adv_loss",
             "value": mean_loss(model, test, "adv", cfg.train.attack, seed=seed, batch_size=bs),
             "attack": cfg.train.attack.model_dump()}]
    for spec in attacks:
        note = "approximates CW with a margin-loss PGD" if spec.family == "CW_PGD" else None
        rows.append({"metric": f"robust_acc[{spec.name}]", "value": robust[spec.name],
                     "attack": spec.model_dump(), **({"note": note} if note else {})})
    return rows


def cmd_eval(args):
    cfg = load_config(args.config, {"seed": args.seed} if args.seed is not None else None)
    _, test = _datasets(cfg)
    model, _ = _model_for(args.checkpoint, cfg, test)
    out = Path(args.out) if args.out else Path(args.checkpoint).resolve().parent
    rows = _eval_rows(model, cfg, test)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value", "attack"])
    for r in rows:
        w.writerow([r["metric"], repr(r["value"]),
                    "" if r["attack"] is None else json.dumps(r["attack"], sort_keys=True)])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "eval.json", {"checkpoint": str(args.checkpoint), "seed": cfg.eval_seed(),
                                    "n_examples": len(test), "results": rows})
    (out / "eval.csv").write_text(buf.getvalue())

    width = max(len(r["metric"]) for r in rows)
    for r in rows:
        tag = "" if r["attack"] is None else "  " + json.dumps(r["attack"], sort_keys=True)
        print(f"{r['metric']:<{width}}  {r['value']:.6f}{tag}")
    return EXIT_OK


def cmd_landscape(args):
    cfg = load_config(args.config)
    train, test = _datasets(cfg)
    data = test if args.split == "test" else train
    model, _ = _model_for(args.checkpoint, cfg, data)
    out = Path(args.out) if args.out else Path(args.checkpoint).resolve().parent
    u, v = sample_directions(model.layout, args.seed)
    grid = probe(model, data, u, v, args.grid, args.mode,
                 attack=cfg.train.attack if args.mode == "adv" else None,
                 seed=cfg.eval_seed(), batch_size=cfg.evaluation.batch_size)
    grid.meta.update({"direction_seed": args.seed, "split": args.split,
                      "checkpoint": str(args.checkpoint)})
    out.mkdir(parents=True, exist_ok=True)
    grid.write(out / "landscape.csv", out / "landscape.json")
    print(f"wrote {args.grid}x{args.grid} grid to {out / 'landscape.csv'}")
    return EXIT_OK


def read_metrics(path):
    """Records of a metrics JSON-lines file; UsageError names the bad line."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
                if not isinstance(rec["epoch"], int):
                    raise ValueError("epoch must be an integer")
                acc = rec["robust_acc"]
                if not isinstance(acc, dict) or not all(
                        isinstance(a, (int, float)) and 0.0 <= a <= 1.0 for a in acc.values()):
                    raise ValueError("robust_acc must map attack names to accuracies in [0, 1]")
            except (ValueError, KeyError, TypeError) as exc:
                raise UsageError(f"{path}:{lineno}: malformed record: {exc}") from None
            records.append((lineno, rec))
    if not records:
        raise UsageError(f"{path}: no records")
    return records


def summarize(records, window, attack=None):
    """Final/best robust accuracy and early-window oscillation (population SD)."""
    adv = [r for _, r in records if r.get("phase", "adv") == "adv"] or [r for _, r in records]
    if attack is None:
        names = list(adv[0]["robust_acc"])
        if not names:
            raise UsageError("records carry no robust accuracy")
        attack = "PGD-20" if "PGD-20" in names else names[0]
    try:
        series = [(r["epoch"], float(r["robust_acc"][attack])) for r in adv]
    except KeyError:
        raise UsageError(f"attack {attack!r} missing from some records") from None
    accs = [a for _, a in series]
    best = max(range(len(accs)), key=accs.__getitem__)
    return {"attack": attack, "n_epochs": len(accs), "final": accs[-1], "best": accs[best],
            "best_epoch": series[best][0], "window": min(window, len(accs)),
            "oscillation": statistics.pstdev(accs[:window])}


def cmd_compare(args):
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    summaries = {str(p): summarize(read_metrics(p), args.window, args.attack) for p in args.metrics}
    if args.json:
        print(json.dumps(summaries, sort_keys=True, indent=2))
        return EXIT_OK
    width = max(len(p) for p in summaries)
    print(f"{'run':<{width}}  {'attack':<10} {'final':>7} {'best':>7} {'@epoch':>6} {'osc':>8}")
    for p, s in summaries.items():
        print(f"{p:<{width}}  {s['attack']:<10} {s['final']:7.4f} {s['best']:7.4f} "
              f"{s['best_epoch']:6d} {s['oscillation']:8.5f}")
    if len(summaries) > 1:
        steadiest = min(summaries, key=lambda p: summaries[p]["oscillation"])
        print(f"lowest oscillation over the first {args.window} epochs: {steadiest}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="piatlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config")
    p.add_argument("config", help="JSON config file or preset:NAME")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides seed)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="clean and robust accuracy of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--out", help="directory for eval.json and eval.csv (default: next to the checkpoint)")
    p.add_argument("--seed", type=int, help="master seed used for attack randomness")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("landscape", help="loss on a random 2-D parameter slice")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.add_argument("--grid", type=int, default=25)
    p.add_argument("--seed", type=int, default=0, help="direction seed")
    p.add_argument("--mode", choices=("adv", "clean"), default="adv")
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("compare", help="summarise and compare metrics files")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--window", type=int, default=10, help="early adversarial epochs for the oscillation score")
    p.add_argument("--attack", help="attack name (default PGD-20 or the first recorded)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, LayoutError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"numeric abort at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
